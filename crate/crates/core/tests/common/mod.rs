use drgrad::graph::{build_model, compute_loss, FeatureSchema, Features, Mode, Model, ModelConfig};
use drgrad::nn::{streams, DenseMatrix, SeededRng};
use rand::Rng;

pub fn tiny(mode: Mode) -> (Model, Features, [Vec<f64>; 2]) {
    let cfg = ModelConfig {
        mode,
        num_experts: 3,
        expert_dims: vec![6, 4],
        tower_dims: vec![4, 3, 1],
        embedding_dim: 2,
        ppnet_embedding_dim: 3,
        alpha: vec![1.0, 0.7],
        seed: 21,
        ..ModelConfig::default()
    };
    let schema = FeatureSchema {
        n_dense: 3,
        sparse_vocab: vec![4, 3],
        user_vocab: mode.uses_ppnet().then_some(5),
    };
    let mut model = build_model(&cfg, &schema).unwrap();
    if mode.is_split() {
        model.set_mu(0.35, 0.65).unwrap();
    }
    let mut rng = SeededRng::new(9, streams::EVAL);
    // Zero biases put dead rows exactly on the relu kink.
    for (name, t) in model.tensors_mut() {
        if name.ends_with(".b") {
            t.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
    let batch = 7;
    let dense = (0..batch * 3).map(|_| rng.random_range(-1.5..1.5)).collect();
    let features = Features {
        dense: DenseMatrix::from_vec(batch, 3, dense).unwrap(),
        sparse: vec![
            (0..batch).map(|_| rng.random_range(0..40)).collect(),
            (0..batch).map(|_| rng.random_range(0..40)).collect(),
        ],
        user: mode
            .uses_ppnet()
            .then(|| (0..batch).map(|_| rng.random_range(0..40)).collect()),
    };
    let labels = [
        (0..batch).map(|_| f64::from(rng.random_bool(0.5))).collect(),
        (0..batch).map(|_| f64::from(rng.random_bool(0.5))).collect(),
    ];
    (model, features, labels)
}

pub fn loss(model: &Model, f: &Features, y: &[Vec<f64>; 2]) -> f64 {
    let [a, b] = model.predict(f).unwrap();
    compute_loss([&a, &b], [&y[0], &y[1]], &model.config().alpha)
        .unwrap()
        .total
}

/// Max relative error between backward and central differences over every
/// parameter, plus the parameter count.
pub fn gradcheck(mode: Mode) -> (f64, f64, usize) {
    let (mut model, f, y) = tiny(mode);
    let cache = model.forward(&f).unwrap();
    let [a, b] = &cache.logits;
    let report = compute_loss([a, b], [&y[0], &y[1]], &model.config().alpha).unwrap();
    let analytic = model
        .backward(&cache, [&report.d_logits[0], &report.d_logits[1]])
        .unwrap()
        .flat();

    // roundoff near eps * loss / h ~ 1e-10 sets the denominator floor
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    let n_tensors = model.tensors().len();
    for t in 0..n_tensors {
        let len = model.tensors()[t].1.len();
        for i in 0..len {
            let orig = model.tensors()[t].1.as_slice()[i];
            model.tensors_mut()[t].1.as_mut_slice()[i] = orig + h;
            let up = loss(&model, &f, &y);
            model.tensors_mut()[t].1.as_mut_slice()[i] = orig - h;
            let down = loss(&model, &f, &y);
            model.tensors_mut()[t].1.as_mut_slice()[i] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    assert_eq!(analytic.len(), numeric.len(), "{mode}");
    let err = drgrad::nn::max_relative_error(&analytic, &numeric, 1e-4);
    let abs = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    (err, abs, numeric.len())
}
