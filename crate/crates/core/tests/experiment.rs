use std::fs;
use std::path::Path;

use drgrad::data::{Split, SyntheticSpec};
use drgrad::experiment::{
    cmd_eval, cmd_telemetry_summary, cmd_train, load_data, predict_all, train_seed, DatasetSource, ExperimentConfig,
    Overrides, Trainer, CHECKPOINT_FILE, CONFIG_FILE, EVAL_FILE, FAILURE_FILE, TELEMETRY_FILE,
};
use drgrad::graph::Mode;
use drgrad::metrics::{auc, read_eval_csv, Telemetry, TELEMETRY_COLUMNS};
use drgrad::nn::OptimizerKind;
use drgrad::Error;

fn tiny(out: &Path, mode: Mode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset: DatasetSource::Synthetic(SyntheticSpec {
            n_total: 3000,
            n_train: 2560,
            cos_theta: -0.6,
            user_id_column: mode == Mode::Drgrad,
            ..SyntheticSpec::default()
        }),
        epochs: Some(2),
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.model.mode = mode;
    cfg
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), Mode::Drgrad);
    let outcomes = cmd_train(&cfg, false).unwrap();
    let run = dir.path().join("seed-0");
    assert_eq!(outcomes[0].dir, run);
    for f in [CONFIG_FILE, TELEMETRY_FILE, EVAL_FILE, CHECKPOINT_FILE] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(!run.join(FAILURE_FILE).exists());

    let header = fs::read_to_string(run.join(TELEMETRY_FILE)).unwrap();
    assert_eq!(header.lines().next().unwrap(), TELEMETRY_COLUMNS.join(","));
    let t = Telemetry::read_csv(&run.join(TELEMETRY_FILE)).unwrap();
    assert_eq!(t.len(), 20);
    for r in t.records() {
        for v in [r.xi_a, r.xi_b, r.lambda_a, r.lambda_b, r.mu_p, r.mu_pp, r.norm_gr1p, r.norm_gr1pp] {
            assert!(v.is_some_and(f64::is_finite));
        }
        let (p, pp) = (r.mu_p.unwrap(), r.mu_pp.unwrap());
        assert!((p + pp - 1.0).abs() < 1e-12);
    }
    let evals = read_eval_csv(&run.join(EVAL_FILE)).unwrap();
    assert_eq!(evals.len(), 2);
    assert_eq!(evals, outcomes[0].evals);
    cmd_telemetry_summary(&run).unwrap();
}

#[test]
fn unsplit_modes_leave_router_columns_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), Mode::Mmoe);
    cfg.max_steps = Some(3);
    let o = cmd_train(&cfg, false).unwrap();
    assert_eq!(o[0].steps, 3);
    assert!(o[0].telemetry.records().iter().all(|r| r.xi_a.is_none() && r.mu_p.is_none()));
    assert!(cmd_telemetry_summary(&o[0].dir).is_err());
}

#[test]
fn frozen_updater_matches_router_only_mode() {
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let a = tiny(a_dir.path(), Mode::SplitMmoeRouter);
    let mut b = tiny(b_dir.path(), Mode::DrgradNoPpnet);
    b.model.freeze_updater = true;
    let data = load_data(&a.dataset).unwrap();
    let ra = train_seed(&a, &data, 0).unwrap();
    let rb = train_seed(&b, &data, 0).unwrap();
    assert_eq!(ra.telemetry, rb.telemetry);
    assert_eq!(ra.final_eval().auc, rb.final_eval().auc);
}

#[test]
fn eval_is_repeatable_and_split_aware() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), Mode::SplitMmoe);
    cfg.epochs = Some(1);
    let o = cmd_train(&cfg, false).unwrap();
    let run = &o[0].dir;
    let first = cmd_eval(run, Split::Test).unwrap();
    let second = cmd_eval(run, Split::Test).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.auc, o[0].final_eval().auc);
    let train = cmd_eval(run, Split::Train).unwrap();
    assert_eq!(train.split, "train");
    assert_ne!(train.auc, first.auc);
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(cmd_eval(dir.path(), Split::Test), Err(Error::MissingCheckpoint(_))));
}

#[test]
fn untrained_model_is_near_chance() {
    let cfg = tiny(Path::new("unused"), Mode::DrgradNoPpnet);
    let data = load_data(&cfg.dataset).unwrap();
    let mut sum = 0.0;
    for seed in 0..5 {
        let mut m = cfg.model.clone();
        m.seed = seed;
        let t = Trainer::new(&m, &data.train).unwrap();
        let p = predict_all(t.model(), &data.test).unwrap();
        sum += auc(&p[0], &data.test.labels[0]).unwrap();
    }
    let mean = sum / 5.0;
    assert!((0.45..=0.55).contains(&mean), "{mean}");
}

#[test]
fn divergence_writes_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), Mode::DrgradNoPpnet);
    cfg.model.optimizer = OptimizerKind::Sgd;
    cfg.model.learning_rate = 1e300;
    let err = cmd_train(&cfg, false).unwrap_err();
    assert!(err.is_numeric(), "{err}");
    let failure: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("seed-0").join(FAILURE_FILE)).unwrap()).unwrap();
    assert_eq!(failure["mode"], "drgrad_no_ppnet");
    assert!(failure["step"].as_u64().is_some());
}

#[test]
fn mode_lattice_and_config_errors() {
    for mode in Mode::ALL {
        assert_eq!(mode.name().parse::<Mode>().unwrap(), mode);
        assert!(!mode.uses_router() || mode.is_split());
        assert!(!mode.uses_updater() || mode.uses_router());
        assert!(!mode.uses_ppnet() || mode.uses_updater());
    }
    assert!("mmoe2".parse::<Mode>().unwrap_err().is_config());

    let census = ExperimentConfig {
        dataset: DatasetSource::Census {
            dir: "nowhere".into(),
            encoding: Default::default(),
        },
        model: tiny(Path::new("x"), Mode::Drgrad).model,
        ..ExperimentConfig::default()
    };
    assert!(census.validate().unwrap_err().is_config());
    let mut c = census.clone();
    let err = Overrides {
        cos_theta: Some(0.5),
        ..Overrides::default()
    }
    .apply(&mut c)
    .unwrap_err();
    assert!(err.is_config());

    let mut bad = tiny(Path::new("x"), Mode::Mmoe);
    Overrides {
        cos_theta: Some(0.0),
        ..Overrides::default()
    }
    .apply(&mut bad)
    .unwrap();
    assert!(bad.validate().unwrap_err().is_config());
    let no_user = tiny(Path::new("x"), Mode::Mmoe);
    let mut ppnet = no_user.clone();
    ppnet.model.mode = Mode::Drgrad;
    assert!(ppnet.validate().unwrap_err().is_config());
}

#[test]
fn every_mode_trains() {
    let dir = tempfile::tempdir().unwrap();
    for mode in Mode::ALL {
        let mut cfg = tiny(&dir.path().join(mode.name()), mode);
        cfg.max_steps = Some(4);
        let o = cmd_train(&cfg, false).unwrap();
        assert_eq!(o[0].final_eval().mode, mode.name());
        assert!(o[0].final_eval().auc.iter().all(|a| a.is_finite()));
    }
}
