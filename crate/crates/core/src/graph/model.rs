//! The multi-task model graph.
//!
//! ```text
//!             dense ++ embeddings(sparse ids)  =  x
//!                          |
//!          experts E_1..E_K (shared bank), gates over x
//!            /                                  \
//!   v1 = mix(G1)                        v_s = mix(Gs) [* 2 sigmoid(ppnet(user))]
//!       |                                   /                \
//!     T1p                                T1pp                T2
//!       \__ mu_p * t1p + mu_pp * t1pp __/                     |
//!                 task-1 logit                           task-2 logit
//! ```
//!
//! In `mmoe`/`pcgrad_mmoe` mode there is no split: gate `G1` feeds tower
//! `T1` and gate `G2` feeds tower `T2`.

use super::config::{FeatureSchema, Mode, ModelConfig};
use super::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::matrix::{axpy, dot};
use crate::nn::{sigmoid, streams, Activation, DenseMatrix, Mlp, MlpCache, ParamGrads, SeededRng};

/// One batch of model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dense: DenseMatrix,
    /// One id vector per sparse column.
    pub sparse: Vec<Vec<u64>>,
    pub user: Option<Vec<u64>>,
}

impl Features {
    pub fn batch_size(&self) -> usize {
        self.dense.rows()
    }
}

/// Softmax-weighted mixture of expert outputs. Returns `(mixed, weights)`.
pub fn mixture(gate_logits: &DenseMatrix, experts: &[&DenseMatrix]) -> Result<(DenseMatrix, DenseMatrix)> {
    if gate_logits.cols() != experts.len() {
        return Err(Error::shape(format!(
            "{} gate logits for {} experts",
            gate_logits.cols(),
            experts.len()
        )));
    }
    let batch = gate_logits.rows();
    let width = experts.first().map_or(0, |e| e.cols());
    if experts.iter().any(|e| e.shape() != (batch, width)) {
        return Err(Error::shape("expert outputs differ in shape"));
    }
    let mut weights = gate_logits.clone();
    for r in 0..batch {
        softmax_in_place(weights.row_mut(r));
    }
    let mut mixed = DenseMatrix::zeros(batch, width);
    for r in 0..batch {
        let out = mixed.row_mut(r);
        for (k, e) in experts.iter().enumerate() {
            axpy(weights.get(r, k), e.row(r), out);
        }
    }
    Ok((mixed, weights))
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Elementwise gating factors `2 * sigmoid(pre)`, each in `(0, 2)`.
pub fn gating_factors(pre_activation: &DenseMatrix) -> DenseMatrix {
    let mut f = pre_activation.clone();
    f.as_mut_slice().iter_mut().for_each(|v| *v = 2.0 * sigmoid(*v));
    f
}

/// Personalized gate: `v_s * 2 * sigmoid(gate(v_ppnet))`.
pub fn ppnet_gate(vs: &DenseMatrix, v_ppnet: &DenseMatrix, gate: &Mlp) -> Result<DenseMatrix> {
    if gate.out_dim() != vs.cols() {
        return Err(Error::shape(format!(
            "personalized gate emits {} values for a width-{} shared vector",
            gate.out_dim(),
            vs.cols()
        )));
    }
    let pre = gate.forward(v_ppnet)?;
    let factors = gating_factors(pre.output());
    gate_product(vs, &factors)
}

fn gate_product(vs: &DenseMatrix, factors: &DenseMatrix) -> Result<DenseMatrix> {
    vs.check_same_shape(factors)?;
    let mut out = vs.clone();
    out.as_mut_slice()
        .iter_mut()
        .zip(factors.as_slice())
        .for_each(|(v, f)| *v *= f);
    Ok(out)
}

/// Task-1 logit from the two primary heads: `mu_p * t1p + mu_pp * t1pp`.
pub fn aggregate_task1(t1p: &[f64], t1pp: &[f64], mu_p: f64, mu_pp: f64) -> Result<Vec<f64>> {
    if t1p.len() != t1pp.len() {
        return Err(Error::shape("primary heads differ in batch size"));
    }
    Ok(t1p.iter().zip(t1pp).map(|(a, b)| mu_p * a + mu_pp * b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub per_task: [f64; 2],
    pub total: f64,
    /// `d total / d logit` per task and sample.
    pub d_logits: [Vec<f64>; 2],
}

/// Mean binary cross-entropy of `sigmoid(logit)` per task, and the
/// `alpha`-weighted total.
pub fn compute_loss(logits: [&[f64]; 2], labels: [&[f64]; 2], alpha: &[f64]) -> Result<LossReport> {
    if alpha.len() != 2 {
        return Err(Error::config("alpha needs one weight per task"));
    }
    let mut per_task = [0.0; 2];
    let mut d_logits: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for t in 0..2 {
        let (z, y) = (logits[t], labels[t]);
        if z.len() != y.len() || z.is_empty() {
            return Err(Error::shape(format!(
                "task {}: {} logits, {} labels",
                t + 1,
                z.len(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::config(format!("label {bad} is not binary")));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite logit for task {}", t + 1)));
        }
        let n = z.len() as f64;
        per_task[t] = z
            .iter()
            .zip(y)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        d_logits[t] = z
            .iter()
            .zip(y)
            .map(|(&z, &y)| alpha[t] * (sigmoid(z) - y) / n)
            .collect();
    }
    let total = alpha[0] * per_task[0] + alpha[1] * per_task[1];
    Ok(LossReport {
        per_task,
        total,
        d_logits,
    })
}

/// Everything recorded during [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    sparse_ids: Vec<Vec<u64>>,
    user_ids: Option<Vec<u64>>,
    expert_caches: Vec<MlpCache>,
    gate_caches: Vec<MlpCache>,
    gate_weights: Vec<DenseMatrix>,
    /// Gate mixtures: `[v1, v_s before gating]` or `[v_task1, v_task2]`.
    mixes: Vec<DenseMatrix>,
    ppnet: Option<PpnetCache>,
    tower_caches: Vec<MlpCache>,
    pub tower_logits: Vec<Vec<f64>>,
    pub logits: [Vec<f64>; 2],
    pub mu: (f64, f64),
}

#[derive(Debug, Clone)]
struct PpnetCache {
    gate_cache: MlpCache,
    factors: DenseMatrix,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.logits[0].len()
    }

    /// Softmax weights of each gate, one row per sample.
    pub fn gate_weights(&self) -> &[DenseMatrix] {
        &self.gate_weights
    }

    /// Personalized gating factors, when the gate is active.
    pub fn ppnet_factors(&self) -> Option<&DenseMatrix> {
        self.ppnet.as_ref().map(|p| &p.factors)
    }
}

/// Gradients for every parameter group of a [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub embeddings: Vec<DenseMatrix>,
    pub user_embedding: Option<DenseMatrix>,
    pub experts: Vec<ParamGrads>,
    pub gates: Vec<ParamGrads>,
    pub ppnet_gate: Option<ParamGrads>,
    /// Same order as [`Model::towers`].
    pub towers: Vec<ParamGrads>,
}

impl ModelGrads {
    /// Tensors grouped per optimizer group, in canonical order.
    pub fn groups(&self) -> Vec<Vec<&[f64]>> {
        let mut out: Vec<Vec<&[f64]>> = Vec::new();
        for e in &self.embeddings {
            out.push(vec![e.as_slice()]);
        }
        if let Some(u) = &self.user_embedding {
            out.push(vec![u.as_slice()]);
        }
        for g in self
            .experts
            .iter()
            .chain(&self.gates)
            .chain(&self.ppnet_gate)
            .chain(&self.towers)
        {
            out.push(g.tensors().map(DenseMatrix::as_slice).collect());
        }
        out
    }

    /// All gradient entries, flattened in canonical order.
    pub fn flat(&self) -> Vec<f64> {
        self.groups().into_iter().flatten().flatten().copied().collect()
    }

    /// Gradient entries of the parameters shared by both tasks (embeddings,
    /// experts), flattened.
    pub fn shared_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for e in &self.embeddings {
            out.extend_from_slice(e.as_slice());
        }
        for g in &self.experts {
            for t in g.tensors() {
                out.extend_from_slice(t.as_slice());
            }
        }
        out
    }

    /// Overwrites the shared-parameter gradients from a flat vector laid out
    /// as [`ModelGrads::shared_flat`].
    pub fn set_shared_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected: usize = self.embeddings.iter().map(DenseMatrix::len).sum::<usize>()
            + self.experts.iter().map(ParamGrads::num_params).sum::<usize>();
        if flat.len() != expected {
            return Err(Error::shape(format!(
                "shared gradient has {} entries, expected {expected}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let tensors = self
            .embeddings
            .iter_mut()
            .chain(self.experts.iter_mut().flat_map(ParamGrads::tensors_mut));
        for t in tensors {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.embeddings.iter_mut().chain(self.user_embedding.iter_mut()) {
            m.scale(factor);
        }
        for g in self
            .experts
            .iter_mut()
            .chain(self.gates.iter_mut())
            .chain(self.ppnet_gate.iter_mut())
            .chain(self.towers.iter_mut())
        {
            g.scale(factor);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    schema: FeatureSchema,
    embeddings: Vec<EmbeddingTable>,
    user_embedding: Option<EmbeddingTable>,
    experts: Vec<Mlp>,
    gates: Vec<Mlp>,
    ppnet_gate: Option<Mlp>,
    towers: Vec<Mlp>,
    mu: (f64, f64),
}

pub const TOWER_T1: &str = "T1";
pub const TOWER_T1P: &str = "T1p";
pub const TOWER_T1PP: &str = "T1pp";
pub const TOWER_T2: &str = "T2";

/// Builds a model for `config` over inputs described by `schema`, with
/// parameters drawn from the config seed.
pub fn build_model(config: &ModelConfig, schema: &FeatureSchema) -> Result<Model> {
    config.validate()?;
    if config.mode.uses_ppnet() && schema.user_vocab.is_none() {
        return Err(Error::config(format!(
            "mode {} needs a personalized id column (e.g. user_id), the dataset has none",
            config.mode
        )));
    }
    if schema.sparse_vocab.contains(&0) {
        return Err(Error::config("sparse column with zero buckets"));
    }
    let input_width = schema.input_width(config.embedding_dim);
    if input_width == 0 {
        return Err(Error::config("model has no input features"));
    }
    let mut rng = SeededRng::new(config.seed, streams::INIT);

    let embeddings = schema
        .sparse_vocab
        .iter()
        .enumerate()
        .map(|(j, &v)| EmbeddingTable::new(format!("emb.s{j}"), v, config.embedding_dim, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let user_embedding = match (config.mode.uses_ppnet(), schema.user_vocab) {
        (true, Some(v)) => Some(EmbeddingTable::new("emb.user", v, config.ppnet_embedding_dim, &mut rng)?),
        _ => None,
    };

    let mut expert_dims = vec![input_width];
    expert_dims.extend_from_slice(&config.expert_dims);
    let experts = (0..config.num_experts)
        .map(|k| Mlp::new(format!("expert{k}"), &expert_dims, Activation::Relu, Activation::Relu, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let gate_names: [&str; 2] = if config.mode.is_split() {
        ["gate1", "gate_s"]
    } else {
        ["gate1", "gate2"]
    };
    let gates = gate_names
        .iter()
        .map(|n| {
            Mlp::new(
                *n,
                &[input_width, config.num_experts],
                Activation::Identity,
                Activation::Identity,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let shared_width = *config.expert_dims.last().unwrap();
    let ppnet_gate = if user_embedding.is_some() {
        Some(Mlp::new(
            "ppnet",
            &[config.ppnet_embedding_dim, shared_width],
            Activation::Identity,
            Activation::Identity,
            &mut rng,
        )?)
    } else {
        None
    };

    let tower_names: &[&str] = if config.mode.is_split() {
        &[TOWER_T1P, TOWER_T1PP, TOWER_T2]
    } else {
        &[TOWER_T1, TOWER_T2]
    };
    let towers = tower_names
        .iter()
        .map(|n| Mlp::new(*n, &config.tower_dims, Activation::Relu, Activation::Identity, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    Ok(Model {
        config: config.clone(),
        schema: schema.clone(),
        embeddings,
        user_embedding,
        experts,
        gates,
        ppnet_gate,
        towers,
        mu: (0.5, 0.5),
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn experts(&self) -> &[Mlp] {
        &self.experts
    }

    pub fn gates(&self) -> &[Mlp] {
        &self.gates
    }

    pub fn has_ppnet(&self) -> bool {
        self.ppnet_gate.is_some()
    }

    /// `[T1, T2]` in unsplit modes, `[T1p, T1pp, T2]` otherwise.
    pub fn towers(&self) -> &[Mlp] {
        &self.towers
    }

    pub fn towers_mut(&mut self) -> &mut [Mlp] {
        &mut self.towers
    }

    pub fn mu(&self) -> (f64, f64) {
        self.mu
    }

    pub fn set_mu(&mut self, mu_p: f64, mu_pp: f64) -> Result<()> {
        if !(mu_p.is_finite() && mu_pp.is_finite()) || (mu_p + mu_pp - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!(
                "aggregation weights must sum to 1, got {mu_p} + {mu_pp}"
            )));
        }
        self.mu = (mu_p, mu_pp);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Named parameter tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = Vec::new();
        for e in self.embeddings.iter().chain(&self.user_embedding) {
            out.push((e.name.clone(), &e.table));
        }
        for net in self.nets() {
            for (i, l) in net.layers().iter().enumerate() {
                out.push((format!("{}.l{i}.w", net.name()), &l.weight));
                out.push((format!("{}.l{i}.b", net.name()), &l.bias));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut DenseMatrix)> {
        let mut out = Vec::new();
        for e in self.embeddings.iter_mut().chain(self.user_embedding.iter_mut()) {
            out.push((e.name.clone(), &mut e.table));
        }
        for net in self
            .experts
            .iter_mut()
            .chain(self.gates.iter_mut())
            .chain(self.ppnet_gate.iter_mut())
            .chain(self.towers.iter_mut())
        {
            let name = net.name().to_string();
            for (i, l) in net.layers_mut().iter_mut().enumerate() {
                out.push((format!("{name}.l{i}.w"), &mut l.weight));
                out.push((format!("{name}.l{i}.b"), &mut l.bias));
            }
        }
        out
    }

    fn nets(&self) -> impl Iterator<Item = &Mlp> {
        self.experts
            .iter()
            .chain(&self.gates)
            .chain(&self.ppnet_gate)
            .chain(&self.towers)
    }

    /// Optimizer group names, aligned with [`ModelGrads::groups`] and
    /// [`Model::groups_mut`].
    pub fn group_names(&self) -> Vec<String> {
        self.embeddings
            .iter()
            .chain(&self.user_embedding)
            .map(|e| e.name.clone())
            .chain(self.nets().map(|n| n.name().to_string()))
            .collect()
    }

    pub fn groups_mut(&mut self) -> Vec<Vec<&mut [f64]>> {
        let mut out: Vec<Vec<&mut [f64]>> = Vec::new();
        for e in self.embeddings.iter_mut().chain(self.user_embedding.iter_mut()) {
            out.push(vec![e.table.as_mut_slice()]);
        }
        for net in self
            .experts
            .iter_mut()
            .chain(self.gates.iter_mut())
            .chain(self.ppnet_gate.iter_mut())
            .chain(self.towers.iter_mut())
        {
            out.push(net.tensors_mut().map(DenseMatrix::as_mut_slice).collect());
        }
        out
    }

    fn check_features(&self, f: &Features) -> Result<()> {
        let batch = f.batch_size();
        if batch == 0 {
            return Err(Error::EmptyDataset);
        }
        if f.dense.cols() != self.schema.n_dense {
            return Err(Error::shape(format!(
                "{} dense columns, model expects {}",
                f.dense.cols(),
                self.schema.n_dense
            )));
        }
        if f.sparse.len() != self.schema.sparse_vocab.len() || f.sparse.iter().any(|c| c.len() != batch) {
            return Err(Error::shape("sparse columns do not match the schema or batch"));
        }
        if self.ppnet_gate.is_some() {
            match &f.user {
                Some(u) if u.len() == batch => {}
                Some(_) => return Err(Error::shape("user id column length")),
                None => {
                    return Err(Error::config(
                        "personalized gate is active but the batch has no user ids",
                    ))
                }
            }
        }
        Ok(())
    }

    fn assemble_input(&self, f: &Features) -> Result<DenseMatrix> {
        let looked_up: Vec<DenseMatrix> = self
            .embeddings
            .iter()
            .zip(&f.sparse)
            .map(|(e, ids)| e.lookup(ids))
            .collect();
        let mut parts: Vec<&DenseMatrix> = vec![&f.dense];
        parts.extend(looked_up.iter());
        DenseMatrix::hstack(&parts)
    }

    pub fn forward(&self, f: &Features) -> Result<ForwardCache> {
        self.check_features(f)?;
        let x = self.assemble_input(f)?;

        let expert_caches = self
            .experts
            .iter()
            .map(|e| e.forward(&x))
            .collect::<Result<Vec<_>>>()?;
        let expert_outputs: Vec<&DenseMatrix> = expert_caches.iter().map(MlpCache::output).collect();

        let mut gate_caches = Vec::with_capacity(self.gates.len());
        let mut gate_weights = Vec::with_capacity(self.gates.len());
        let mut mixes = Vec::with_capacity(self.gates.len());
        for gate in &self.gates {
            let cache = gate.forward(&x)?;
            let (mixed, weights) = mixture(cache.output(), &expert_outputs)?;
            gate_caches.push(cache);
            gate_weights.push(weights);
            mixes.push(mixed);
        }

        let (ppnet, shared) = match (&self.ppnet_gate, &self.user_embedding) {
            (Some(gate), Some(table)) => {
                let v_ppnet = table.lookup(f.user.as_deref().unwrap());
                let gate_cache = gate.forward(&v_ppnet)?;
                let factors = gating_factors(gate_cache.output());
                let gated = gate_product(&mixes[1], &factors)?;
                (Some(PpnetCache { gate_cache, factors }), gated)
            }
            _ => (None, mixes[1].clone()),
        };

        let tower_inputs: Vec<&DenseMatrix> = if self.mode().is_split() {
            vec![&mixes[0], &shared, &shared]
        } else {
            vec![&mixes[0], &mixes[1]]
        };
        let tower_caches = self
            .towers
            .iter()
            .zip(tower_inputs)
            .map(|(t, v)| t.forward(v))
            .collect::<Result<Vec<_>>>()?;
        let tower_logits: Vec<Vec<f64>> = tower_caches
            .iter()
            .map(|c| c.output().as_slice().to_vec())
            .collect();

        let logits = if self.mode().is_split() {
            [
                aggregate_task1(&tower_logits[0], &tower_logits[1], self.mu.0, self.mu.1)?,
                tower_logits[2].clone(),
            ]
        } else {
            [tower_logits[0].clone(), tower_logits[1].clone()]
        };

        Ok(ForwardCache {
            sparse_ids: f.sparse.clone(),
            user_ids: f.user.clone(),
            expert_caches,
            gate_caches,
            gate_weights,
            mixes,
            ppnet,
            tower_caches,
            tower_logits,
            logits,
            mu: self.mu,
        })
    }

    /// Task logits only.
    pub fn predict(&self, f: &Features) -> Result<[Vec<f64>; 2]> {
        Ok(self.forward(f)?.logits)
    }

    /// Gradients of a scalar loss given `d_logits = dL/d(task logit)`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: [&[f64]; 2]) -> Result<ModelGrads> {
        let batch = cache.batch_size();
        if d_logits.iter().any(|d| d.len() != batch) {
            return Err(Error::shape("logit gradients do not match the batch"));
        }
        if cache.tower_caches.len() != self.towers.len() || cache.gate_caches.len() != self.gates.len() {
            return Err(Error::Cache("cache was produced by a different model".into()));
        }
        let column = |v: Vec<f64>| DenseMatrix::from_vec(batch, 1, v);

        let tower_grads_in: Vec<DenseMatrix> = if self.mode().is_split() {
            let (mu_p, mu_pp) = cache.mu;
            vec![
                column(d_logits[0].iter().map(|d| mu_p * d).collect())?,
                column(d_logits[0].iter().map(|d| mu_pp * d).collect())?,
                column(d_logits[1].to_vec())?,
            ]
        } else {
            vec![column(d_logits[0].to_vec())?, column(d_logits[1].to_vec())?]
        };

        let mut towers = Vec::with_capacity(self.towers.len());
        let mut tower_input_grads = Vec::with_capacity(self.towers.len());
        for ((tower, c), g) in self.towers.iter().zip(&cache.tower_caches).zip(&tower_grads_in) {
            let (pg, dx) = tower.backward(c, g)?;
            towers.push(pg);
            tower_input_grads.push(dx);
        }

        // Gradients flowing into each gate mixture.
        let mut mix_grads: Vec<DenseMatrix>;
        let mut ppnet_gate = None;
        let mut user_embedding = None;
        if self.mode().is_split() {
            let mut d_shared = tower_input_grads[1].clone();
            d_shared.add_assign(&tower_input_grads[2])?;
            let d_vs_raw = match (&self.ppnet_gate, &self.user_embedding, &cache.ppnet) {
                (Some(gate), Some(table), Some(pc)) => {
                    // shared = raw * factors, factors = 2 sigmoid(pre)
                    let raw = &cache.mixes[1];
                    let mut d_raw = d_shared.clone();
                    let mut d_pre = d_shared;
                    for i in 0..d_raw.len() {
                        let f = pc.factors.as_slice()[i];
                        let g = d_raw.as_slice()[i];
                        d_raw.as_mut_slice()[i] = g * f;
                        // d factor / d pre = f (1 - f / 2)
                        d_pre.as_mut_slice()[i] = g * raw.as_slice()[i] * f * (1.0 - 0.5 * f);
                    }
                    let (pg, d_emb) = gate.backward(&pc.gate_cache, &d_pre)?;
                    let mut table_grad = DenseMatrix::zeros(table.vocab(), table.dim());
                    let ids = cache
                        .user_ids
                        .as_deref()
                        .ok_or_else(|| Error::Cache("user ids missing from cache".into()))?;
                    table.accumulate_grad(ids, &d_emb, &mut table_grad)?;
                    ppnet_gate = Some(pg);
                    user_embedding = Some(table_grad);
                    d_raw
                }
                (None, None, None) => d_shared,
                _ => return Err(Error::Cache("personalized gate cache mismatch".into())),
            };
            mix_grads = vec![tower_input_grads.swap_remove(0), d_vs_raw];
        } else {
            mix_grads = tower_input_grads;
        }

        let n_experts = self.experts.len();
        let width = cache.mixes[0].cols();
        let mut expert_out_grads = vec![DenseMatrix::zeros(batch, width); n_experts];
        let mut gate_logit_grads = Vec::with_capacity(self.gates.len());
        for (g, d_mix) in mix_grads.iter_mut().enumerate() {
            let w = &cache.gate_weights[g];
            let mut d_logit = DenseMatrix::zeros(batch, n_experts);
            for r in 0..batch {
                let dm = d_mix.row(r);
                let mut dw = vec![0.0; n_experts];
                for k in 0..n_experts {
                    let wk = w.get(r, k);
                    axpy(wk, dm, expert_out_grads[k].row_mut(r));
                    dw[k] = dot(dm, cache.expert_caches[k].output().row(r));
                }
                let weighted: f64 = (0..n_experts).map(|k| w.get(r, k) * dw[k]).sum();
                for (k, dwk) in dw.iter().enumerate() {
                    d_logit.set(r, k, w.get(r, k) * (dwk - weighted));
                }
            }
            gate_logit_grads.push(d_logit);
        }

        let input_width = self.schema.input_width(self.config.embedding_dim);
        let mut dx = DenseMatrix::zeros(batch, input_width);
        let mut gates = Vec::with_capacity(self.gates.len());
        for ((gate, c), d) in self.gates.iter().zip(&cache.gate_caches).zip(&gate_logit_grads) {
            let (pg, d_in) = gate.backward(c, d)?;
            dx.add_assign(&d_in)?;
            gates.push(pg);
        }
        let mut experts = Vec::with_capacity(n_experts);
        for ((e, c), d) in self.experts.iter().zip(&cache.expert_caches).zip(&expert_out_grads) {
            let (pg, d_in) = e.backward(c, d)?;
            dx.add_assign(&d_in)?;
            experts.push(pg);
        }

        let dim = self.config.embedding_dim;
        let n_dense = self.schema.n_dense;
        let mut embeddings = Vec::with_capacity(self.embeddings.len());
        for (j, (table, ids)) in self.embeddings.iter().zip(&cache.sparse_ids).enumerate() {
            let cols: Vec<f64> = (0..batch)
                .flat_map(|r| {
                    let start = n_dense + j * dim;
                    dx.row(r)[start..start + dim].to_vec()
                })
                .collect();
            let d_emb = DenseMatrix::from_vec(batch, dim, cols)?;
            let mut g = DenseMatrix::zeros(table.vocab(), table.dim());
            table.accumulate_grad(ids, &d_emb, &mut g)?;
            embeddings.push(g);
        }

        Ok(ModelGrads {
            embeddings,
            user_embedding,
            experts,
            gates,
            ppnet_gate,
            towers,
        })
    }
}
