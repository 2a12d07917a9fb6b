use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::fmt_f64;
use crate::error::{Error, Result};

/// Test (or train) metrics of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub seed: u64,
    pub dataset: String,
    pub split: String,
    pub epoch: u64,
    pub step: u64,
    pub auc: [f64; 2],
    pub loss: [f64; 2],
}

const EVAL_COLUMNS: [&str; 10] = [
    "mode", "seed", "dataset", "split", "epoch", "step", "auc_task1", "auc_task2", "loss_task1", "loss_task2",
];

pub fn write_eval_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EVAL_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.mode.clone(),
            r.seed.to_string(),
            r.dataset.clone(),
            r.split.clone(),
            r.epoch.to_string(),
            r.step.to_string(),
            fmt_f64(r.auc[0]),
            fmt_f64(r.auc[1]),
            fmt_f64(r.loss[0]),
            fmt_f64(r.loss[1]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalReport>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != EVAL_COLUMNS.len() {
            return Err(Error::Schema(format!("{}: eval row with {} columns", path.display(), rec.len())));
        }
        let bad = |c: &str| Error::Schema(format!("{}: bad {c}", path.display()));
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(EVAL_COLUMNS[i]));
        let u = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(EVAL_COLUMNS[i]));
        out.push(EvalReport {
            mode: rec[0].to_string(),
            seed: u(1)?,
            dataset: rec[2].to_string(),
            split: rec[3].to_string(),
            epoch: u(4)?,
            step: u(5)?,
            auc: [f(6)?, f(7)?],
            loss: [f(8)?, f(9)?],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: String,
    /// `None` on per-mode mean rows.
    pub seed: Option<u64>,
    pub auc: [f64; 2],
    pub loss: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub means: Vec<ResultRow>,
}

/// One row per report plus one mean row per mode, modes in first-seen order.
pub fn result_table(reports: &[EvalReport]) -> ResultTable {
    let rows: Vec<ResultRow> = reports
        .iter()
        .map(|r| ResultRow {
            mode: r.mode.clone(),
            seed: Some(r.seed),
            auc: r.auc,
            loss: r.loss,
        })
        .collect();
    let mut modes: Vec<&str> = Vec::new();
    for r in &rows {
        if !modes.contains(&r.mode.as_str()) {
            modes.push(&r.mode);
        }
    }
    let means = modes
        .iter()
        .map(|m| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.mode == *m).collect();
            let n = group.len() as f64;
            let avg = |f: fn(&ResultRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            ResultRow {
                mode: m.to_string(),
                seed: None,
                auc: [avg(|r| r.auc[0]), avg(|r| r.auc[1])],
                loss: [avg(|r| r.loss[0]), avg(|r| r.loss[1])],
            }
        })
        .collect();
    ResultTable { rows, means }
}

impl ResultTable {
    pub fn mean_for(&self, mode: &str) -> Option<&ResultRow> {
        self.means.iter().find(|r| r.mode == mode)
    }

    fn all(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().chain(&self.means)
    }

    pub fn to_text(&self) -> String {
        let width = self.all().map(|r| r.mode.len()).max().unwrap_or(4).max(4);
        let mut s = format!(
            "{:<width$}  {:>6}  {:>9}  {:>9}  {:>9}  {:>9}\n",
            "mode", "seed", "auc_1", "auc_2", "loss_1", "loss_2"
        );
        for r in self.all() {
            let seed = r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
            let _ = writeln!(
                s,
                "{:<width$}  {:>6}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}",
                r.mode, seed, r.auc[0], r.auc[1], r.loss[0], r.loss[1]
            );
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mode", "seed", "auc_task1", "auc_task2", "loss_task1", "loss_task2"])?;
        for r in self.all() {
            w.write_record([
                r.mode.clone(),
                r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string()),
                fmt_f64(r.auc[0]),
                fmt_f64(r.auc[1]),
                fmt_f64(r.loss[0]),
                fmt_f64(r.loss[1]),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
