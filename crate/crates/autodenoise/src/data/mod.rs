//! Dataset representation: schema, instances, fixed batch plan, CSV I/O,
//! splitting, noise injection, and the synthetic generator.

pub mod csv_io;
pub mod dataset;
pub mod noise;
pub mod schema;
pub mod synth;

pub use csv_io::{binarize_rating, load_csv, write_csv};
pub use dataset::{split_dataset, DatasetSplit, FeatureInstance, NoiseFlag};
pub use noise::{inject_label_noise, NoiseSpec};
pub use schema::FieldSchema;
pub use synth::{synth_generate, synth_generate_with_teacher, SynthOutput, SyntheticTeacher};

use std::path::Path;

use crate::error::Result;

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written artifact.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    use std::io::Write;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
