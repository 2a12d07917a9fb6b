use std::path::Path;

use super::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

/// Float format used in every CSV this crate writes: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a split with header `f0.., s0.., [user_id,] raw_label1,
/// raw_label2, label1, label2`.
pub fn write_dataset_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let raw = ds
        .raw_labels
        .as_ref()
        .ok_or_else(|| Error::Schema("dataset has no raw labels to write".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dense.cols()).map(|j| format!("f{j}")).collect();
    header.extend((0..ds.sparse.len()).map(|j| format!("s{j}")));
    if ds.user.is_some() {
        header.push("user_id".into());
    }
    header.extend(["raw_label1", "raw_label2", "label1", "label2"].map(String::from));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in 0..ds.len() {
        row.clear();
        row.extend(ds.dense.row(r).iter().map(|&v| fmt_f64(v)));
        row.extend(ds.sparse.iter().map(|c| c[r].to_string()));
        if let Some(u) = &ds.user {
            row.push(u[r].to_string());
        }
        row.push(fmt_f64(raw[0][r]));
        row.push(fmt_f64(raw[1][r]));
        row.push(format!("{}", ds.labels[0][r] as u8));
        row.push(format!("{}", ds.labels[1][r] as u8));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a split written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path, split: Split, sparse_buckets: usize, user_vocab: usize) -> Result<LabeledDataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column {name}", path.display())))
    };
    let dense_cols: Vec<usize> = (0..).map_while(|j| header.iter().position(|h| h == format!("f{j}"))).collect();
    let sparse_cols: Vec<usize> = (0..).map_while(|j| header.iter().position(|h| h == format!("s{j}"))).collect();
    let user_col = header.iter().position(|h| h == "user_id");
    let label_cols = [find("label1")?, find("label2")?];
    let raw_cols = [find("raw_label1")?, find("raw_label2")?];

    let mut dense = Vec::new();
    let mut sparse = vec![Vec::new(); sparse_cols.len()];
    let mut user = user_col.map(|_| Vec::new());
    let mut labels = [Vec::new(), Vec::new()];
    let mut raw = [Vec::new(), Vec::new()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Schema(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let float = |c: usize| rec.get(c).and_then(|s| s.parse::<f64>().ok());
        let int = |c: usize| rec.get(c).and_then(|s| s.parse::<u64>().ok());
        for &c in &dense_cols {
            dense.push(float(c).ok_or_else(|| bad("dense value"))?);
        }
        for (col, &c) in sparse.iter_mut().zip(&sparse_cols) {
            col.push(int(c).ok_or_else(|| bad("sparse id"))?);
        }
        if let (Some(u), Some(c)) = (user.as_mut(), user_col) {
            u.push(int(c).ok_or_else(|| bad("user id"))?);
        }
        for t in 0..2 {
            labels[t].push(float(label_cols[t]).ok_or_else(|| bad("label"))?);
            raw[t].push(float(raw_cols[t]).ok_or_else(|| bad("raw label"))?);
        }
    }
    let n = labels[0].len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let ds = LabeledDataset {
        split,
        dense: DenseMatrix::from_vec(n, dense_cols.len(), dense)?,
        sparse_vocab: vec![sparse_buckets; sparse.len()],
        sparse,
        user_vocab: user.as_ref().map(|_| user_vocab),
        user,
        labels,
        raw_labels: Some(raw),
    };
    ds.validate()?;
    Ok(ds)
}
