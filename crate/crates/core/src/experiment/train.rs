use crate::data::LabeledDataset;
use crate::engine::{flatten, l2_norm, pcgrad_project, route, unflatten, updater_step, GradientTriple, Layout, UpdaterState};
use crate::error::{Error, Result};
use crate::graph::{build_model, compute_loss, Features, LossReport, Model, ModelConfig, ModelGrads};
use crate::metrics::{auc, EvalReport, RunRecord};
use crate::nn::{streams, OptimizerState, SeededRng};

/// Model plus everything that changes between optimizer steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    optimizers: Vec<OptimizerState>,
    updater: Option<UpdaterState>,
    pcgrad_rng: SeededRng,
    step: u64,
}

impl Trainer {
    pub fn new(config: &ModelConfig, data: &LabeledDataset) -> Result<Self> {
        let model = build_model(config, &data.schema())?;
        let optimizers = model
            .group_names()
            .iter()
            .map(|_| OptimizerState::new(config.optimizer, config.learning_rate))
            .collect::<Result<Vec<_>>>()?;
        let updater = if config.mode.uses_updater() && !config.freeze_updater {
            Some(UpdaterState::new(config.rho)?)
        } else {
            None
        };
        Ok(Self {
            model,
            optimizers,
            updater,
            pcgrad_rng: SeededRng::new(config.seed, streams::PCGRAD),
            step: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn updater(&self) -> Option<&UpdaterState> {
        self.updater.as_ref()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One optimizer step on a batch; returns the step's telemetry.
    ///
    /// Router modes: joint backward, route the tower gradients, descend every
    /// group, then advance the updater. PCGrad projects the two task
    /// gradients of the shared parameters before summing them.
    pub fn train_step(&mut self, features: &Features, labels: &[Vec<f64>; 2]) -> Result<RunRecord> {
        let config = self.model.config().clone();
        let mode = config.mode;
        let cache = self.model.forward(features)?;
        let loss = compute_loss(
            [&cache.logits[0], &cache.logits[1]],
            [&labels[0], &labels[1]],
            &config.alpha,
        )?;
        check_loss(&loss, self.step)?;
        let mut record = RunRecord::losses(self.step, loss.per_task, loss.total);

        let mut grads = if mode.uses_pcgrad() {
            let zeros = vec![0.0; cache.batch_size()];
            let mut g1 = self.model.backward(&cache, [&loss.d_logits[0], &zeros])?;
            let g2 = self.model.backward(&cache, [&zeros, &loss.d_logits[1]])?;
            let projected = pcgrad_project(&[g1.shared_flat(), g2.shared_flat()], &mut self.pcgrad_rng)?;
            let shared: Vec<f64> = projected[0].iter().zip(&projected[1]).map(|(a, b)| a + b).collect();
            add_task_specific(&mut g1, &g2)?;
            g1.set_shared_flat(&shared)?;
            g1
        } else {
            self.model
                .backward(&cache, [&loss.d_logits[0], &loss.d_logits[1]])?
        };

        let mut routed_pair = None;
        if mode.is_split() {
            let layout = Layout::of(&grads.towers[0]);
            let triple = GradientTriple::new(
                flatten(&grads.towers[0]),
                flatten(&grads.towers[1]),
                flatten(&grads.towers[2]),
                self.step,
            )?;
            let routed = route(&triple, config.gamma)?;
            record.xi_a = Some(routed.xi_a);
            record.xi_b = Some(routed.xi_b);
            record.lambda_a = Some(routed.lambda_a);
            record.lambda_b = Some(routed.lambda_b);
            record.norm_g1p = Some(l2_norm(&triple.g1p));
            record.norm_g1pp = Some(l2_norm(&triple.g1pp));
            record.norm_g2 = Some(l2_norm(&triple.g2));
            if mode.uses_router() {
                record.norm_gr1p = Some(l2_norm(&routed.g_r1p));
                record.norm_gr1pp = Some(l2_norm(&routed.g_r1pp));
                let add = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
                grads.towers[0] = unflatten(&add(&triple.g1p, &routed.g_r1p), &layout)?;
                grads.towers[1] = unflatten(&add(&triple.g1pp, &routed.g_r1pp), &layout)?;
                routed_pair = Some((triple, routed));
            }
        }

        if grads.flat().iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient at step {}", self.step)));
        }
        for ((params, g), opt) in self
            .model
            .groups_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(&mut self.optimizers)
        {
            opt.update(params, g)?;
        }

        if let (Some(state), Some((triple, routed))) = (self.updater.as_mut(), routed_pair.as_ref()) {
            let (mu_p, mu_pp) = updater_step(state, triple, routed)?;
            self.model.set_mu(mu_p, mu_pp)?;
        }
        if mode.is_split() {
            let (mu_p, mu_pp) = self.model.mu();
            record.mu_p = Some(mu_p);
            record.mu_pp = Some(mu_pp);
        }
        self.step += 1;
        Ok(record)
    }
}

fn check_loss(loss: &LossReport, step: u64) -> Result<()> {
    if loss.total.is_finite() && loss.per_task.iter().all(|l| l.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!(
            "loss became non-finite at step {step}: {:?}",
            loss.per_task
        )))
    }
}

/// Adds the task-2 gradients of the non-shared groups into `into`.
fn add_task_specific(into: &mut ModelGrads, other: &ModelGrads) -> Result<()> {
    for (a, b) in into
        .gates
        .iter_mut()
        .zip(&other.gates)
        .chain(into.towers.iter_mut().zip(&other.towers))
        .chain(into.ppnet_gate.iter_mut().zip(&other.ppnet_gate))
    {
        a.add_assign(b)?;
    }
    if let (Some(a), Some(b)) = (into.user_embedding.as_mut(), other.user_embedding.as_ref()) {
        a.add_assign(b)?;
    }
    Ok(())
}

const EVAL_CHUNK: usize = 4096;

/// Logits for every row of `data`, computed in chunks.
pub fn predict_all(model: &Model, data: &LabeledDataset) -> Result<[Vec<f64>; 2]> {
    let mut out = [Vec::with_capacity(data.len()), Vec::with_capacity(data.len())];
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let [a, b] = model.predict(&data.features(chunk))?;
        out[0].extend(a);
        out[1].extend(b);
    }
    Ok(out)
}

pub struct EvalContext<'a> {
    pub dataset: &'a str,
    pub seed: u64,
    pub epoch: u64,
    pub step: u64,
}

/// Per-task AUC and mean log loss of `model` on `data`.
pub fn evaluate(model: &Model, data: &LabeledDataset, ctx: &EvalContext<'_>) -> Result<EvalReport> {
    let logits = predict_all(model, data)?;
    let loss = compute_loss(
        [&logits[0], &logits[1]],
        [&data.labels[0], &data.labels[1]],
        &[1.0, 1.0],
    )?;
    Ok(EvalReport {
        mode: model.mode().name().to_string(),
        seed: ctx.seed,
        dataset: ctx.dataset.to_string(),
        split: data.split.name().to_string(),
        epoch: ctx.epoch,
        step: ctx.step,
        auc: [auc(&logits[0], &data.labels[0])?, auc(&logits[1], &data.labels[1])?],
        loss: loss.per_task,
    })
}
