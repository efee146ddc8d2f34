//! The finite-difference oracle in action: verify the hand-written
//! backward passes of the FM, the DeepFM-lite deep branch, and the policy
//! network's REINFORCE surrogate against central differences.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use autodenoise::data::{FeatureInstance, FieldSchema};
use autodenoise::models::{CtrModel, ModelKind, ModelSpec};
use autodenoise::nn::{finite_difference_gradient, relative_error, Optimizer, OptimizerConfig};
use autodenoise::policy::{reinforce_update, sample_actions, PolicyParams, PolicySpec};
use autodenoise::rng::stream;
use rand::Rng;

fn main() -> autodenoise::Result<()> {
    let schema = FieldSchema::new(
        vec!["user".into(), "item".into()],
        vec![
            (0..6).map(|i| format!("u{i}")).collect(),
            (0..5).map(|i| format!("i{i}")).collect(),
        ],
    )?;
    let mut rng = stream(1, &[]);
    let batch: Vec<FeatureInstance> = (0..4)
        .map(|_| {
            FeatureInstance::new(
                vec![rng.random_range(0..6), rng.random_range(0..5)],
                u8::from(rng.random::<f64>() < 0.5),
            )
        })
        .collect();

    // Backbone gradients: recover the analytic gradient from a unit-lr
    // SGD step, compare against finite differences of the mean loss.
    for kind in [ModelKind::Fm, ModelKind::DeepFmLite] {
        let mut spec = ModelSpec::new(kind, &schema, 4);
        spec.hidden_dims = vec![6, 5];
        spec.dropout_rate = 0.0;
        let model = CtrModel::init(&spec, 2);
        let weights = vec![1.0; batch.len()];

        let mut stepped = model.clone();
        let fwd = stepped.batch_forward(&batch, &schema, None)?;
        let mut opt = Optimizer::new(
            OptimizerConfig::Sgd { learning_rate: 1.0 },
            stepped.param_len(),
        );
        stepped.apply_gradient(&fwd, &weights, &mut opt)?;
        // The FM's linear weight gradients are easy to cross-check by
        // perturbing w directly.
        let (orig_w, new_w) = match (&model.params, &stepped.params) {
            (autodenoise::models::CtrParams::Fm(a), autodenoise::models::CtrParams::Fm(b)) => {
                (a.w.clone(), b.w.clone())
            }
            (
                autodenoise::models::CtrParams::DeepFmLite(a),
                autodenoise::models::CtrParams::DeepFmLite(b),
            ) => (a.fm.w.clone(), b.fm.w.clone()),
            _ => unreachable!(),
        };
        let analytic: Vec<f64> = orig_w.iter().zip(&new_w).map(|(a, b)| a - b).collect();
        let numeric = finite_difference_gradient(
            |w| {
                let mut m = model.clone();
                match &mut m.params {
                    autodenoise::models::CtrParams::Fm(fm) => fm.w.copy_from_slice(w),
                    autodenoise::models::CtrParams::DeepFmLite(p) => p.fm.w.copy_from_slice(w),
                }
                let fwd = m.batch_forward(&batch, &schema, None).unwrap();
                fwd.losses.iter().sum::<f64>() / batch.len() as f64
            },
            &orig_w,
            1e-5,
        )?;
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max);
        println!("{kind}: worst relative error on linear weights {worst:.2e}");
    }

    // Policy REINFORCE surrogate gradient on the embedding table.
    let mut pspec = PolicySpec::new(&schema, 4);
    pspec.dropout_rate = 0.0;
    pspec.batchnorm = false;
    pspec.init_select_bias = 0.0;
    let policy = PolicyParams::init(&pspec, 3);
    let mut probe = policy.clone();
    let (probs, tape) = probe.forward(&batch, &schema, autodenoise::nn::ForwardMode::Eval)?;
    let actions = sample_actions(&probs, &mut stream(4, &[]))?;
    let rewards: Vec<f64> = (0..batch.len()).map(|i| 0.5 - i as f64 * 0.3).collect();
    let mut stepped = probe.clone();
    let mut opt = Optimizer::new(
        OptimizerConfig::Sgd { learning_rate: 1.0 },
        stepped.param_len(),
    );
    reinforce_update(
        &mut stepped,
        &tape,
        &probs,
        std::slice::from_ref(&actions),
        std::slice::from_ref(&rewards),
        &mut opt,
    )?;
    let analytic: Vec<f64> = policy
        .embeddings
        .values()
        .iter()
        .zip(stepped.embeddings.values())
        .map(|(a, b)| a - b)
        .collect();
    let numeric = finite_difference_gradient(
        |emb| {
            let mut p = policy.clone();
            p.embeddings.values_mut().copy_from_slice(emb);
            let (probs, _) = p
                .forward(&batch, &schema, autodenoise::nn::ForwardMode::Eval)
                .unwrap();
            let mut total = 0.0;
            for (r, action) in actions.actions.iter().enumerate() {
                let col = match action {
                    autodenoise::policy::Action::Select => autodenoise::policy::SELECT_COLUMN,
                    autodenoise::policy::Action::Deselect => 1 - autodenoise::policy::SELECT_COLUMN,
                };
                total += rewards[r] * autodenoise::nn::clamp_prob(probs.get(r, col)).ln();
            }
            -total / batch.len() as f64
        },
        policy.embeddings.values(),
        1e-5,
    )?;
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    println!("policy surrogate: worst relative error on embeddings {worst:.2e}");
    Ok(())
}
