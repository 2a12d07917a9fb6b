use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::fmt_f64;
use crate::error::{Error, Result};

/// Per-step training telemetry. Router, updater and norm columns are empty
/// for modes that do not compute them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: u64,
    pub loss_task1: f64,
    pub loss_task2: f64,
    pub loss_total: f64,
    pub xi_a: Option<f64>,
    pub xi_b: Option<f64>,
    pub norm_g1p: Option<f64>,
    pub norm_g1pp: Option<f64>,
    pub norm_g2: Option<f64>,
    pub lambda_a: Option<f64>,
    pub lambda_b: Option<f64>,
    pub mu_p: Option<f64>,
    pub mu_pp: Option<f64>,
    pub norm_gr1p: Option<f64>,
    pub norm_gr1pp: Option<f64>,
}

pub const TELEMETRY_COLUMNS: [&str; 15] = [
    "step",
    "loss_task1",
    "loss_task2",
    "loss_total",
    "xi_a",
    "xi_b",
    "norm_g1p",
    "norm_g1pp",
    "norm_g2",
    "lambda_a",
    "lambda_b",
    "mu_p",
    "mu_pp",
    "norm_gr1p",
    "norm_gr1pp",
];

impl RunRecord {
    pub fn losses(step: u64, per_task: [f64; 2], total: f64) -> Self {
        Self {
            step,
            loss_task1: per_task[0],
            loss_task2: per_task[1],
            loss_total: total,
            xi_a: None,
            xi_b: None,
            norm_g1p: None,
            norm_g1pp: None,
            norm_g2: None,
            lambda_a: None,
            lambda_b: None,
            mu_p: None,
            mu_pp: None,
            norm_gr1p: None,
            norm_gr1pp: None,
        }
    }

    fn optional(&self) -> [Option<f64>; 11] {
        [
            self.xi_a,
            self.xi_b,
            self.norm_g1p,
            self.norm_g1pp,
            self.norm_g2,
            self.lambda_a,
            self.lambda_b,
            self.mu_p,
            self.mu_pp,
            self.norm_gr1p,
            self.norm_gr1pp,
        ]
    }

    fn is_finite(&self) -> bool {
        [self.loss_task1, self.loss_task2, self.loss_total]
            .iter()
            .chain(self.optional().iter().flatten())
            .all(|v| v.is_finite())
    }

    fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.step.to_string(),
            fmt_f64(self.loss_task1),
            fmt_f64(self.loss_task2),
            fmt_f64(self.loss_total),
        ];
        row.extend(self.optional().iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
        row
    }

    fn from_row(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != TELEMETRY_COLUMNS.len() {
            return Err(Error::Schema(format!("telemetry row has {} columns", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Schema(format!("bad {} value {:?}", TELEMETRY_COLUMNS[i], &rec[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        Ok(Self {
            step: rec[0]
                .parse()
                .map_err(|_| Error::Schema(format!("bad step {:?}", &rec[0])))?,
            loss_task1: num(1)?,
            loss_task2: num(2)?,
            loss_total: num(3)?,
            xi_a: opt(4)?,
            xi_b: opt(5)?,
            norm_g1p: opt(6)?,
            norm_g1pp: opt(7)?,
            norm_g2: opt(8)?,
            lambda_a: opt(9)?,
            lambda_b: opt(10)?,
            mu_p: opt(11)?,
            mu_pp: opt(12)?,
            norm_gr1p: opt(13)?,
            norm_gr1pp: opt(14)?,
        })
    }
}

/// Append-only record stream of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Telemetry {
    records: Vec<RunRecord>,
}

impl Telemetry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record_step(&mut self, record: RunRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.step <= last.step {
                return Err(Error::Invariant(format!(
                    "telemetry step {} after {}",
                    record.step, last.step
                )));
            }
        }
        if !record.is_finite() {
            return Err(Error::numeric(format!("non-finite telemetry at step {}", record.step)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TELEMETRY_COLUMNS)?;
        for r in &self.records {
            w.write_record(r.to_row())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if header != TELEMETRY_COLUMNS {
            return Err(Error::Schema(format!("{}: unexpected telemetry header", path.display())));
        }
        let mut t = Telemetry::new();
        for rec in rdr.records() {
            t.record_step(RunRecord::from_row(&rec?)?)?;
        }
        Ok(t)
    }
}

/// Windowed means over the first and last tenth of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub steps: usize,
    pub window: usize,
    pub xi_a_first: f64,
    pub xi_a_last: f64,
    pub xi_b_first: f64,
    pub xi_b_last: f64,
    /// Mean of `max(|g2| / |g1p|, |g1p| / |g2|)`.
    pub norm_ratio_first: f64,
    pub norm_ratio_last: f64,
}

impl ConvergenceSummary {
    /// Auxiliary-task direction and scale both moved toward agreement.
    pub fn converged(&self) -> bool {
        self.xi_b_last < self.xi_b_first && self.norm_ratio_last < self.norm_ratio_first
    }
}

pub const MIN_SUMMARY_STEPS: usize = 20;

pub fn convergence_summary(records: &[RunRecord]) -> Result<ConvergenceSummary> {
    if records.len() < MIN_SUMMARY_STEPS {
        return Err(Error::TooShort(format!(
            "{} telemetry steps, need at least {MIN_SUMMARY_STEPS}",
            records.len()
        )));
    }
    let missing = || Error::Schema("telemetry lacks router columns".into());
    let column = |f: fn(&RunRecord) -> Option<f64>| -> Result<Vec<f64>> {
        records.iter().map(|r| f(r).ok_or_else(missing)).collect()
    };
    let xi_a = column(|r| r.xi_a.map(f64::abs))?;
    let xi_b = column(|r| r.xi_b.map(f64::abs))?;
    let g1p = column(|r| r.norm_g1p)?;
    let g2 = column(|r| r.norm_g2)?;
    let ratio: Vec<f64> = g1p
        .iter()
        .zip(&g2)
        .map(|(&a, &b)| if a > 0.0 && b > 0.0 { (b / a).max(a / b) } else { f64::NAN })
        .collect();

    let n = records.len();
    let window = n / 10;
    let mean = |v: &[f64]| -> f64 {
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let first = |v: &[f64]| mean(&v[..window]);
    let last = |v: &[f64]| mean(&v[n - window..]);
    Ok(ConvergenceSummary {
        steps: n,
        window,
        xi_a_first: first(&xi_a),
        xi_a_last: last(&xi_a),
        xi_b_first: first(&xi_b),
        xi_b_last: last(&xi_b),
        norm_ratio_first: first(&ratio),
        norm_ratio_last: last(&ratio),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn routed(step: u64, xi: f64, g1p: f64, g2: f64) -> RunRecord {
        RunRecord {
            xi_a: Some(xi),
            xi_b: Some(-xi),
            norm_g1p: Some(g1p),
            norm_g2: Some(g2),
            ..RunRecord::losses(step, [0.5, 0.5], 1.0)
        }
    }

    #[test]
    fn header_only_and_line_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Telemetry::new();
        t.write_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 1);
        for s in 0..3 {
            t.record_step(routed(s, 0.1, 1.0, 2.0)).unwrap();
        }
        t.write_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 4);
        assert_eq!(Telemetry::read_csv(&p).unwrap(), t);
    }

    #[test]
    fn xi_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Telemetry::new();
        t.record_step(routed(0, 0.1 + 0.2, 1.0 / 3.0, 2.0f64.sqrt())).unwrap();
        t.write_csv(&p).unwrap();
        let back = Telemetry::read_csv(&p).unwrap();
        assert_eq!(back.records()[0].xi_a.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn steps_must_increase() {
        let mut t = Telemetry::new();
        t.record_step(routed(5, 0.1, 1.0, 1.0)).unwrap();
        assert!(t.record_step(routed(5, 0.1, 1.0, 1.0)).is_err());
        assert!(t.record_step(routed(6, f64::NAN, 1.0, 1.0)).is_err());
    }

    #[test]
    fn summary_windows() {
        let constant: Vec<_> = (0..40).map(|s| routed(s, 0.3, 1.0, 2.0)).collect();
        let s = convergence_summary(&constant).unwrap();
        assert_eq!(s.window, 4);
        assert_eq!(s.xi_b_first, s.xi_b_last);
        assert_eq!(s.norm_ratio_first, 2.0);

        let shrinking: Vec<_> = (0..40)
            .map(|s| routed(s, 1.0 - s as f64 / 39.0, 1.0, 1.0 + 3.0 * (1.0 - s as f64 / 39.0)))
            .collect();
        let s = convergence_summary(&shrinking).unwrap();
        assert!(s.xi_b_last < s.xi_b_first);
        assert!(s.converged());

        assert!(matches!(
            convergence_summary(&constant[..19]),
            Err(Error::TooShort(_))
        ));
        let plain: Vec<_> = (0..20).map(|s| RunRecord::losses(s, [0.1, 0.1], 0.2)).collect();
        assert!(convergence_summary(&plain).is_err());
    }
}
