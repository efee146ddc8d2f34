//! Generate a synthetic CTR dataset from a hidden low-rank teacher, split
//! it, flip a fraction of the train labels, and sanity-check the teacher's
//! signal with the AUC metric.
//!
//! ```bash
//! cargo run --release --example synth_dataset
//! ```

use autodenoise::data::{inject_label_noise, split_dataset, synth_generate, NoiseSpec};
use autodenoise::metrics::auc;

fn main() -> autodenoise::Result<()> {
    let out = synth_generate(200, 100, 10_000, 8, 42)?;
    println!(
        "generated {} interactions over {} features ({} fields)",
        out.instances.len(),
        out.schema.num_features(),
        out.schema.num_fields()
    );

    let labels: Vec<u8> = out.instances.iter().map(|i| i.label).collect();
    let teacher_auc = auc(&labels, &out.teacher_probs)?;
    let positive_rate = labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len() as f64;
    println!("positive rate {positive_rate:.3}, Bayes-optimal teacher AUC {teacher_auc:.4}");

    let mut split = split_dataset(out.instances, (0.8, 0.1, 0.1), 1, 256)?;
    println!(
        "split: train {} / validation {} / test {} ({} batches of {})",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.batch_count(),
        split.batch_size
    );

    let mut noise = NoiseSpec::new(0.2, 7);
    inject_label_noise(&mut split, &mut noise)?;
    println!(
        "flipped {} of {} train labels; dataset hash {}",
        noise.mask.len(),
        split.train.len(),
        &split.hash(&out.schema)[..16]
    );
    Ok(())
}
