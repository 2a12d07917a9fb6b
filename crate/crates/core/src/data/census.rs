//! Loader for the census-income (KDD) files: income above 50K as the primary
//! task, never-married as the auxiliary task.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Weight,
    Income,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusSchema {
    pub columns: Vec<(&'static str, ColumnKind)>,
    /// Categorical column holding the marital status.
    pub marital: usize,
}

const KDD_COLUMNS: [&str; 42] = [
    "age",
    "class of worker",
    "detailed industry recode",
    "detailed occupation recode",
    "education",
    "wage per hour",
    "enroll in edu inst last wk",
    "marital stat",
    "major industry code",
    "major occupation code",
    "race",
    "hispanic origin",
    "sex",
    "member of a labor union",
    "reason for unemployment",
    "full or part time employment stat",
    "capital gains",
    "capital losses",
    "dividends from stocks",
    "tax filer stat",
    "region of previous residence",
    "state of previous residence",
    "detailed household and family stat",
    "detailed household summary in household",
    "instance weight",
    "migration code-change in msa",
    "migration code-change in reg",
    "migration code-move within reg",
    "live in this house 1 year ago",
    "migration prev res in sunbelt",
    "num persons worked for employer",
    "family members under 18",
    "country of birth father",
    "country of birth mother",
    "country of birth self",
    "citizenship",
    "own business or self employed",
    "fill inc questionnaire for veteran's admin",
    "veterans benefits",
    "weeks worked in year",
    "year",
    "income",
];

const KDD_CONTINUOUS: [&str; 7] = [
    "age",
    "wage per hour",
    "capital gains",
    "capital losses",
    "dividends from stocks",
    "num persons worked for employer",
    "weeks worked in year",
];

impl CensusSchema {
    pub fn kdd() -> Self {
        let columns = KDD_COLUMNS
            .iter()
            .map(|&name| {
                let kind = match name {
                    "instance weight" => ColumnKind::Weight,
                    "income" => ColumnKind::Income,
                    n if KDD_CONTINUOUS.contains(&n) => ColumnKind::Continuous,
                    _ => ColumnKind::Categorical,
                };
                (name, kind)
            })
            .collect();
        Self {
            columns,
            marital: KDD_COLUMNS.iter().position(|&c| c == "marital stat").unwrap(),
        }
    }

    /// Columns describing the person, excluding the weight and income label.
    pub fn n_feature_columns(&self) -> usize {
        self.columns
            .iter()
            .filter(|(_, k)| matches!(k, ColumnKind::Continuous | ColumnKind::Categorical))
            .count()
    }

    fn income(&self) -> usize {
        self.columns.iter().position(|(_, k)| *k == ColumnKind::Income).unwrap()
    }
}

/// Primary label: income above 50K.
pub fn income_label(raw: &str) -> Option<f64> {
    let v = raw.trim().trim_end_matches('.').trim();
    match v {
        "50000+" | ">50K" => Some(1.0),
        "- 50000" | "-50000" | "<=50K" => Some(0.0),
        _ => None,
    }
}

/// Auxiliary label: marital status is never married.
pub fn never_married_label(raw: &str) -> f64 {
    let v = raw.trim().to_ascii_lowercase().replace('-', " ");
    f64::from(u8::from(v == "never married"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    /// One id column per categorical, looked up in an embedding table.
    #[default]
    Ids,
    /// Dense indicator columns per categorical.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusPaths {
    pub train: PathBuf,
    pub test: PathBuf,
}

impl CensusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train: dir.join("census-income.data"),
            test: dir.join("census-income.test"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub train_rows: usize,
    pub test_rows: usize,
    pub skipped_train: usize,
    pub skipped_test: usize,
    pub continuous_columns: usize,
    /// Known levels per kept categorical column (the unknown slot excluded).
    pub categorical_levels: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub report: CensusReport,
}

struct RawRows {
    continuous: Vec<Vec<f64>>,
    categorical: Vec<Vec<String>>,
    labels: [Vec<f64>; 2],
    skipped: usize,
}

fn read_rows(path: &Path, schema: &CensusSchema) -> Result<RawRows> {
    let file = File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let n_cols = schema.columns.len();
    let income = schema.income();
    let cont_idx: Vec<usize> = (0..n_cols).filter(|&c| schema.columns[c].1 == ColumnKind::Continuous).collect();
    let cat_idx: Vec<usize> = (0..n_cols)
        .filter(|&c| schema.columns[c].1 == ColumnKind::Categorical && c != schema.marital)
        .collect();
    let mut out = RawRows {
        continuous: vec![Vec::new(); cont_idx.len()],
        categorical: vec![Vec::new(); cat_idx.len()],
        labels: [Vec::new(), Vec::new()],
        skipped: 0,
    };
    let mut short_rows = 0;
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(_) => {
                out.skipped += 1;
                continue;
            }
        };
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != n_cols {
            short_rows += 1;
            out.skipped += 1;
            continue;
        }
        let cont: Option<Vec<f64>> = cont_idx.iter().map(|&c| rec[c].parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        let (Some(cont), Some(y1)) = (cont, income_label(&rec[income])) else {
            out.skipped += 1;
            continue;
        };
        for (col, v) in out.continuous.iter_mut().zip(cont) {
            col.push(v);
        }
        for (col, &c) in out.categorical.iter_mut().zip(&cat_idx) {
            col.push(rec[c].to_string());
        }
        out.labels[0].push(y1);
        out.labels[1].push(never_married_label(&rec[schema.marital]));
    }
    if out.labels[0].is_empty() {
        if short_rows > 0 {
            return Err(Error::Schema(format!(
                "{}: no row has the expected {n_cols} columns",
                path.display()
            )));
        }
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Per-column encoding fitted on the train split.
struct Encoder {
    means: Vec<f64>,
    stds: Vec<f64>,
    /// Level -> id (1-based; 0 is the unknown slot). Columns with a single
    /// train level are dropped.
    levels: Vec<Option<BTreeMap<String, u64>>>,
}

impl Encoder {
    fn fit(rows: &RawRows) -> Self {
        let (means, stds) = rows
            .continuous
            .iter()
            .map(|c| {
                let n = c.len() as f64;
                let mean = c.iter().sum::<f64>() / n;
                let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
            })
            .unzip();
        let levels = rows
            .categorical
            .iter()
            .map(|c| {
                let mut set: Vec<&String> = c.iter().collect();
                set.sort();
                set.dedup();
                (set.len() > 1).then(|| set.into_iter().cloned().zip(1..).collect())
            })
            .collect();
        Self { means, stds, levels }
    }

    fn encode(&self, rows: RawRows, split: Split, encoding: CategoricalEncoding) -> Result<LabeledDataset> {
        let n = rows.labels[0].len();
        let kept: Vec<(&BTreeMap<String, u64>, &Vec<String>)> = self
            .levels
            .iter()
            .zip(&rows.categorical)
            .filter_map(|(l, c)| l.as_ref().map(|l| (l, c)))
            .collect();
        let ids: Vec<Vec<u64>> = kept
            .iter()
            .map(|(l, c)| c.iter().map(|v| l.get(v).copied().unwrap_or(0)).collect())
            .collect();
        let vocab: Vec<usize> = kept.iter().map(|(l, _)| l.len() + 1).collect();

        let n_cont = rows.continuous.len();
        let onehot_width: usize = match encoding {
            CategoricalEncoding::Ids => 0,
            CategoricalEncoding::OneHot => vocab.iter().sum(),
        };
        let width = n_cont + onehot_width;
        let mut dense = vec![0.0; n * width];
        for (j, col) in rows.continuous.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                dense[r * width + j] = (v - self.means[j]) / self.stds[j];
            }
        }
        let (sparse, sparse_vocab) = match encoding {
            CategoricalEncoding::Ids => (ids, vocab),
            CategoricalEncoding::OneHot => {
                let mut offset = n_cont;
                for (col, v) in ids.iter().zip(&vocab) {
                    for (r, &id) in col.iter().enumerate() {
                        dense[r * width + offset + id as usize] = 1.0;
                    }
                    offset += v;
                }
                (Vec::new(), Vec::new())
            }
        };
        let ds = LabeledDataset {
            split,
            dense: DenseMatrix::from_vec(n, width, dense)?,
            sparse,
            sparse_vocab,
            user: None,
            user_vocab: None,
            labels: rows.labels,
            raw_labels: None,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Loads both census files. Malformed rows are skipped and counted in the
/// report; continuous columns are z-scored and categorical levels indexed
/// with train statistics only.
pub fn load_census(paths: &CensusPaths, encoding: CategoricalEncoding) -> Result<CensusData> {
    let schema = CensusSchema::kdd();
    let train_rows = read_rows(&paths.train, &schema)?;
    let test_rows = read_rows(&paths.test, &schema)?;
    let enc = Encoder::fit(&train_rows);
    let cat_names: Vec<&str> = schema
        .columns
        .iter()
        .enumerate()
        .filter(|&(c, (_, k))| *k == ColumnKind::Categorical && c != schema.marital)
        .map(|(_, (n, _))| *n)
        .collect();
    let report = CensusReport {
        train_rows: train_rows.labels[0].len(),
        test_rows: test_rows.labels[0].len(),
        skipped_train: train_rows.skipped,
        skipped_test: test_rows.skipped,
        continuous_columns: train_rows.continuous.len(),
        categorical_levels: cat_names
            .iter()
            .zip(&enc.levels)
            .filter_map(|(n, l)| l.as_ref().map(|l| (n.to_string(), l.len())))
            .collect(),
    };
    let train = enc.encode(train_rows, Split::Train, encoding)?;
    let test = enc.encode(test_rows, Split::Test, encoding)?;
    Ok(CensusData { train, test, report })
}
