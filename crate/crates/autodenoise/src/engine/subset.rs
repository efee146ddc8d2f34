//! Subset files: the denoised selection as a list of train positions,
//! pinned to a dataset hash so it can only be replayed against the data
//! it was selected from.

use std::path::Path;

use crate::data::{DatasetSplit, FeatureInstance};
use crate::error::{Error, Result};

const MAGIC: &str = "autodenoise-subset v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetFile {
    pub dataset_hash: String,
    pub epsilon: f64,
    pub seed: u64,
    pub epoch: usize,
    pub config_hash: String,
    /// Sorted ascending, unique.
    pub positions: Vec<usize>,
}

/// Writes the header (dataset hash, epsilon, seed, epoch, config hash)
/// followed by one position per line, sorted ascending.
pub fn export_subset(path: &Path, subset: &SubsetFile) -> Result<()> {
    let mut positions = subset.positions.clone();
    positions.sort_unstable();
    positions.dedup();
    let mut text = String::new();
    text.push_str(MAGIC);
    text.push('\n');
    text.push_str(&format!("dataset_hash={}\n", subset.dataset_hash));
    text.push_str(&format!("epsilon={}\n", subset.epsilon));
    text.push_str(&format!("seed={}\n", subset.seed));
    text.push_str(&format!("epoch={}\n", subset.epoch));
    text.push_str(&format!("config_hash={}\n", subset.config_hash));
    for p in &positions {
        text.push_str(&format!("{p}\n"));
    }
    crate::data::write_atomic(path, text.as_bytes())
}

pub fn read_subset_file(path: &Path) -> Result<SubsetFile> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::data(format!(
            "{} is not a subset file (missing `{MAGIC}` header)",
            path.display()
        )));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::data(format!("subset file truncated before `{key}`")))?;
        line.strip_prefix(&format!("{key}="))
            .map(str::to_string)
            .ok_or_else(|| Error::data(format!("expected `{key}=` line, found `{line}`")))
    };
    let dataset_hash = field("dataset_hash")?;
    let epsilon: f64 = field("epsilon")?
        .parse()
        .map_err(|_| Error::data("malformed epsilon in subset file"))?;
    let seed: u64 = field("seed")?
        .parse()
        .map_err(|_| Error::data("malformed seed in subset file"))?;
    let epoch: usize = field("epoch")?
        .parse()
        .map_err(|_| Error::data("malformed epoch in subset file"))?;
    let config_hash = field("config_hash")?;
    let mut positions = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        positions.push(
            line.parse::<usize>()
                .map_err(|_| Error::data(format!("malformed position `{line}`")))?,
        );
    }
    Ok(SubsetFile {
        dataset_hash,
        epsilon,
        seed,
        epoch,
        config_hash,
        positions,
    })
}

/// Loads a subset file, validates its dataset hash against the split, and
/// materializes the selected train instances.
pub fn import_subset(
    path: &Path,
    split: &DatasetSplit,
    schema: &crate::data::FieldSchema,
) -> Result<(SubsetFile, Vec<FeatureInstance>)> {
    let file = read_subset_file(path)?;
    let actual = split.hash(schema);
    if file.dataset_hash != actual {
        return Err(Error::HashMismatch {
            expected: file.dataset_hash,
            found: actual,
        });
    }
    let mut instances = Vec::with_capacity(file.positions.len());
    for &p in &file.positions {
        let inst = split
            .train
            .get(p)
            .ok_or_else(|| Error::data(format!("subset position {p} outside train split")))?;
        instances.push(inst.clone());
    }
    Ok((file, instances))
}
