use std::fs;
use std::path::Path;

use drgrad::data::{gen_synthetic, load_census, CategoricalEncoding, CensusPaths, CensusSchema, ColumnKind, SyntheticSpec};
use drgrad::Error;

fn small_spec(cos_theta: f64) -> SyntheticSpec {
    SyntheticSpec {
        n_total: 6000,
        n_train: 5000,
        cos_theta,
        ..SyntheticSpec::default()
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

#[test]
fn label_correlation_follows_cos_theta() {
    for cos in [-0.6, 0.6, 0.95] {
        let data = gen_synthetic(&SyntheticSpec { cos_theta: cos, ..SyntheticSpec::default() }).unwrap();
        let raw = data.train.raw_labels.as_ref().unwrap();
        let r = pearson(&raw[0], &raw[1]);
        // label2 = cos * label1 + independent noise of variance 0.002
        let s1 = std_dev(&raw[0]);
        let expect = cos.abs() * s1 / (s1 * s1 * cos * cos + 0.002).sqrt();
        assert_eq!(r.signum(), cos.signum());
        assert!((r.abs() - expect).abs() < 0.05, "cos {cos}: {r} vs {expect}");
    }
}

#[test]
fn generation_is_deterministic_and_seeded() {
    let a = gen_synthetic(&small_spec(-0.6)).unwrap();
    let b = gen_synthetic(&small_spec(-0.6)).unwrap();
    assert_eq!(a, b);
    let c = gen_synthetic(&SyntheticSpec { seed: 1, ..small_spec(-0.6) }).unwrap();
    assert_ne!(a.train.dense, c.train.dense);
}

#[test]
fn splits_and_labels_have_expected_shape() {
    let spec = small_spec(0.6);
    let data = gen_synthetic(&spec).unwrap();
    assert_eq!(data.train.len(), 5000);
    assert_eq!(data.test.len(), 1000);
    assert_eq!(data.train.dense.cols(), spec.n_dense());
    assert_eq!(data.train.sparse.len(), spec.n_sparse);
    for l in data.train.labels.iter().chain(&data.test.labels) {
        assert!(l.iter().all(|&v| v == 0.0 || v == 1.0));
    }
    // median threshold on train
    for rate in data.train.positive_rate() {
        assert!((rate - 0.5).abs() < 0.01, "{rate}");
    }
}

#[test]
fn rejects_cos_theta_zero() {
    assert!(matches!(gen_synthetic(&small_spec(0.0)), Err(Error::Config(_))));
}

fn census_row(i: usize, married: bool, income_hi: bool) -> String {
    CensusSchema::kdd()
        .columns
        .iter()
        .enumerate()
        .map(|(c, (name, kind))| match kind {
            ColumnKind::Continuous => format!("{}", (i * 7 + c) % 11),
            ColumnKind::Weight => "1000.5".to_string(),
            ColumnKind::Income => if income_hi { "50000+." } else { "- 50000." }.to_string(),
            ColumnKind::Categorical if *name == "marital stat" => {
                if married { "Married-civilian spouse present" } else { "Never married" }.to_string()
            }
            ColumnKind::Categorical if *name == "year" => "95".to_string(),
            ColumnKind::Categorical => format!("L{}", (i + c) % 3),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn write_fixture(dir: &Path, test_extra: &str) {
    let train: Vec<String> = (0..40).map(|i| census_row(i, i % 3 == 0, i % 4 == 0)).collect();
    fs::write(dir.join("census-income.data"), train.join("\n") + "\n").unwrap();
    let mut test: Vec<String> = (0..10).map(|i| census_row(i + 5, i % 2 == 0, i % 5 == 0)).collect();
    test.push(test_extra.to_string());
    fs::write(dir.join("census-income.test"), test.join("\n") + "\n").unwrap();
}

#[test]
fn census_fixture_loads() {
    let dir = tempfile::tempdir().unwrap();
    // wrong width, then an unseen categorical level
    let mut unseen = census_row(3, false, true);
    unseen = unseen.replacen("L", "NEVER-SEEN-", 1);
    write_fixture(dir.path(), &format!("1, 2, 3\n{unseen}"));
    let data = load_census(&CensusPaths::in_dir(dir.path()), CategoricalEncoding::Ids).unwrap();
    let r = &data.report;
    assert_eq!((r.train_rows, r.test_rows), (40, 11));
    assert_eq!((r.skipped_train, r.skipped_test), (0, 1));
    assert_eq!(r.continuous_columns, 7);
    // "year" has one level and is dropped
    assert!(r.categorical_levels.iter().all(|(n, _)| n != "year"));

    for i in 0..40 {
        assert_eq!(data.train.labels[0][i], f64::from(u8::from(i % 4 == 0)));
        assert_eq!(data.train.labels[1][i], f64::from(u8::from(i % 3 != 0)));
    }
    // train continuous columns are z-scored
    for c in 0..data.train.dense.cols() {
        let col: Vec<f64> = (0..40).map(|r| data.train.dense.get(r, c)).collect();
        let mean = col.iter().sum::<f64>() / 40.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 40.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9, "col {c}: {mean} {var}");
    }
    // unseen level maps to the reserved unknown id
    let last = data.test.len() - 1;
    assert_eq!(data.test.sparse[0][last], 0);
    assert!(data.train.sparse.iter().all(|col| col.iter().all(|&id| id > 0)));
}

#[test]
fn census_one_hot_matches_ids() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &census_row(1, true, false));
    let paths = CensusPaths::in_dir(dir.path());
    let ids = load_census(&paths, CategoricalEncoding::Ids).unwrap();
    let hot = load_census(&paths, CategoricalEncoding::OneHot).unwrap();
    assert!(hot.train.sparse.is_empty());
    let width: usize = 7 + ids.train.sparse_vocab.iter().sum::<usize>();
    assert_eq!(hot.train.dense.cols(), width);
    for r in 0..ids.train.len() {
        let mut offset = 7;
        for (col, v) in ids.train.sparse.iter().zip(&ids.train.sparse_vocab) {
            assert_eq!(hot.train.dense.get(r, offset + col[r] as usize), 1.0);
            offset += v;
        }
        assert_eq!(hot.train.dense.row(r).iter().skip(7).sum::<f64>(), ids.train.sparse.len() as f64);
    }
}

#[test]
fn census_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("census-income.data"), "1, 2, 3\n4, 5, 6\n").unwrap();
    fs::write(dir.path().join("census-income.test"), "1, 2, 3\n").unwrap();
    let err = load_census(&CensusPaths::in_dir(dir.path()), CategoricalEncoding::Ids).unwrap_err();
    assert!(matches!(err, Error::Schema(_)), "{err}");

    let missing = tempfile::tempdir().unwrap();
    assert!(load_census(&CensusPaths::in_dir(missing.path()), CategoricalEncoding::Ids).is_err());
}

