use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, ExperimentConfig};
use super::train::{evaluate, EvalContext, Trainer};
use crate::data::{
    batch_iter, gen_synthetic, load_census, read_dataset_csv, write_dataset_csv, CensusPaths, CensusReport,
    LabeledDataset, Split, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::graph::Checkpoint;
use crate::metrics::{
    convergence_summary, result_table, write_eval_csv, ConvergenceSummary, EvalReport, ResultTable, Telemetry,
};

pub const CONFIG_FILE: &str = "config.json";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const FAILURE_FILE: &str = "failure.json";

/// Train and test splits of one dataset source.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub tag: String,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub census: Option<CensusReport>,
}

impl LoadedData {
    pub fn split(&self, split: Split) -> &LabeledDataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

pub fn load_data(source: &DatasetSource) -> Result<LoadedData> {
    let tag = source.tag().to_string();
    match source {
        DatasetSource::Synthetic(spec) => {
            let d = gen_synthetic(spec)?;
            Ok(LoadedData {
                tag,
                train: d.train,
                test: d.test,
                census: None,
            })
        }
        DatasetSource::SyntheticCsv {
            dir,
            sparse_buckets,
            user_vocab,
        } => Ok(LoadedData {
            tag,
            train: read_dataset_csv(&dir.join("train.csv"), Split::Train, *sparse_buckets, *user_vocab)?,
            test: read_dataset_csv(&dir.join("test.csv"), Split::Test, *sparse_buckets, *user_vocab)?,
            census: None,
        }),
        DatasetSource::Census { dir, encoding } => {
            let d = load_census(&CensusPaths::in_dir(dir), *encoding)?;
            Ok(LoadedData {
                tag,
                train: d.train,
                test: d.test,
                census: Some(d.report),
            })
        }
    }
}

/// Artifacts and results of one seed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub steps: u64,
    pub telemetry: Telemetry,
    pub evals: Vec<EvalReport>,
}

impl RunOutcome {
    pub fn final_eval(&self) -> &EvalReport {
        self.evals.last().expect("every run ends with an evaluation")
    }
}

#[derive(Debug, Serialize)]
struct FailureRecord<'a> {
    seed: u64,
    mode: &'a str,
    epoch: u64,
    step: u64,
    error: String,
    last_telemetry: Option<&'a crate::metrics::RunRecord>,
}

/// Trains one seed and writes `config.json`, `telemetry.csv`, `eval.csv`
/// and `checkpoint.json` into its run directory.
pub fn train_seed(config: &ExperimentConfig, data: &LoadedData, seed: u64) -> Result<RunOutcome> {
    let cfg = config.for_seed(seed);
    cfg.validate()?;
    let dir = config.run_dir(seed);
    fs::create_dir_all(&dir)?;
    cfg.save(&dir.join(CONFIG_FILE))?;

    let mut trainer = Trainer::new(&cfg.model, &data.train)?;
    let mut telemetry = Telemetry::new();
    let mut evals = Vec::new();
    let max_steps = cfg.max_steps.unwrap_or(u64::MAX);
    let mut epoch = 0;

    let result = (|| -> Result<()> {
        'epochs: for e in 0..cfg.epochs() as u64 {
            epoch = e + 1;
            for batch in batch_iter(data.train.len(), cfg.batch_size, seed, e)? {
                if trainer.step() >= max_steps {
                    break 'epochs;
                }
                let record = trainer.train_step(&data.train.features(&batch), &data.train.batch_labels(&batch))?;
                if record.step % cfg.telemetry_stride == 0 {
                    telemetry.record_step(record)?;
                }
                if cfg.eval_every.is_some_and(|k| trainer.step() % k == 0) {
                    evals.push(evaluate_now(&trainer, data, seed, epoch)?);
                }
            }
            if evals.last().is_none_or(|r| r.step != trainer.step()) {
                evals.push(evaluate_now(&trainer, data, seed, epoch)?);
            }
        }
        if evals.last().is_none_or(|r| r.step != trainer.step()) {
            evals.push(evaluate_now(&trainer, data, seed, epoch)?);
        }
        Ok(())
    })();

    telemetry.write_csv(&dir.join(TELEMETRY_FILE))?;
    write_eval_csv(&evals, &dir.join(EVAL_FILE))?;
    if let Err(e) = result {
        if e.is_numeric() {
            let failure = FailureRecord {
                seed,
                mode: cfg.model.mode.name(),
                epoch,
                step: trainer.step(),
                error: e.to_string(),
                last_telemetry: telemetry.records().last(),
            };
            fs::write(dir.join(FAILURE_FILE), serde_json::to_string_pretty(&failure)? + "\n")?;
        }
        return Err(e);
    }
    Checkpoint::capture(trainer.model(), trainer.updater(), trainer.step()).save(&dir.join(CHECKPOINT_FILE))?;
    Ok(RunOutcome {
        seed,
        dir,
        steps: trainer.step(),
        telemetry,
        evals,
    })
}

fn evaluate_now(trainer: &Trainer, data: &LoadedData, seed: u64, epoch: u64) -> Result<EvalReport> {
    evaluate(
        trainer.model(),
        &data.test,
        &EvalContext {
            dataset: &data.tag,
            seed,
            epoch,
            step: trainer.step(),
        },
    )
}

/// Trains every configured seed, optionally on parallel threads that share
/// the read-only dataset.
pub fn cmd_train(config: &ExperimentConfig, parallel_seeds: bool) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let data = load_data(&config.dataset)?;
    train_all(config, &data, parallel_seeds)
}

pub fn train_all(config: &ExperimentConfig, data: &LoadedData, parallel_seeds: bool) -> Result<Vec<RunOutcome>> {
    if !parallel_seeds || config.seeds.len() == 1 {
        return config.seeds.iter().map(|&s| train_seed(config, data, s)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&s| scope.spawn(move || train_seed(config, data, s)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    })
}

/// Re-evaluates a trained run on one split of its dataset.
pub fn cmd_eval(run_dir: &Path, split: Split) -> Result<EvalReport> {
    let ck_path = run_dir.join(CHECKPOINT_FILE);
    let checkpoint = Checkpoint::load(&ck_path)?;
    let cfg = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    let data = load_data(&cfg.dataset)?;
    let model = checkpoint.restore()?;
    if data.train.schema() != checkpoint.schema {
        return Err(Error::Schema(format!(
            "dataset columns do not match the checkpoint in {}",
            run_dir.display()
        )));
    }
    evaluate(
        &model,
        data.split(split),
        &EvalContext {
            dataset: &data.tag,
            seed: cfg.model.seed,
            epoch: cfg.epochs() as u64,
            step: checkpoint.step,
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenDataManifest {
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub thresholds: [f64; 2],
    pub files: Vec<String>,
}

/// Writes `train.csv`, `test.csv` and `manifest.json` into `out`.
pub fn cmd_gen_data(spec: &SyntheticSpec, out: &Path) -> Result<GenDataManifest> {
    spec.validate()?;
    let data = gen_synthetic(spec)?;
    fs::create_dir_all(out)?;
    write_dataset_csv(&data.train, &out.join("train.csv"))?;
    write_dataset_csv(&data.test, &out.join("test.csv"))?;
    let manifest = GenDataManifest {
        spec: spec.clone(),
        seed: spec.seed,
        train_rows: data.train.len(),
        test_rows: data.test.len(),
        thresholds: data.thresholds,
        files: vec!["train.csv".into(), "test.csv".into()],
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Convergence summary of a run directory's telemetry.
pub fn cmd_telemetry_summary(run_dir: &Path) -> Result<ConvergenceSummary> {
    let t = Telemetry::read_csv(&run_dir.join(TELEMETRY_FILE))?;
    convergence_summary(t.records())
}

/// Result table over the final evaluation of each outcome.
pub fn summarize(outcomes: &[RunOutcome]) -> ResultTable {
    let finals: Vec<EvalReport> = outcomes.iter().map(|o| o.final_eval().clone()).collect();
    result_table(&finals)
}
