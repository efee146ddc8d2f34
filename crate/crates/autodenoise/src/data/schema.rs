//! Field schema: maps (field, categorical value) pairs to a contiguous
//! global feature index space shared by embedding tables.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSchema {
    field_names: Vec<String>,
    /// Per-field vocabulary, token index = categorical value index.
    vocabularies: Vec<Vec<String>>,
    /// Cumulative offsets; global index of (field f, value v) is offsets[f] + v.
    offsets: Vec<usize>,
    #[serde(skip)]
    lookup: Vec<HashMap<String, u32>>,
}

impl FieldSchema {
    pub fn new(field_names: Vec<String>, vocabularies: Vec<Vec<String>>) -> Result<Self> {
        if field_names.len() != vocabularies.len() {
            return Err(Error::data("field name / vocabulary count mismatch"));
        }
        let mut schema = FieldSchema {
            field_names,
            vocabularies,
            offsets: Vec::new(),
            lookup: Vec::new(),
        };
        schema.rebuild_derived();
        Ok(schema)
    }

    /// Empty growable schema for the given field names.
    pub fn empty(field_names: Vec<String>) -> Self {
        let n = field_names.len();
        let mut schema = FieldSchema {
            field_names,
            vocabularies: vec![Vec::new(); n],
            offsets: Vec::new(),
            lookup: Vec::new(),
        };
        schema.rebuild_derived();
        schema
    }

    fn rebuild_derived(&mut self) {
        self.offsets = Vec::with_capacity(self.vocabularies.len());
        let mut acc = 0;
        for vocab in &self.vocabularies {
            self.offsets.push(acc);
            acc += vocab.len();
        }
        self.lookup = self
            .vocabularies
            .iter()
            .map(|vocab| {
                vocab
                    .iter()
                    .enumerate()
                    .map(|(i, tok)| (tok.clone(), i as u32))
                    .collect()
            })
            .collect();
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn num_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn vocab_size(&self, field: usize) -> usize {
        self.vocabularies[field].len()
    }

    /// Total size of the global feature index space.
    pub fn num_features(&self) -> usize {
        self.offsets
            .last()
            .map_or(0, |o| o + self.vocabularies.last().unwrap().len())
    }

    pub fn global_index(&self, field: usize, value: u32) -> usize {
        debug_assert!((value as usize) < self.vocab_size(field));
        self.offsets[field] + value as usize
    }

    pub fn value_index(&self, field: usize, token: &str) -> Option<u32> {
        self.lookup[field].get(token).copied()
    }

    pub fn token(&self, field: usize, value: u32) -> &str {
        &self.vocabularies[field][value as usize]
    }

    /// Index for `token`, growing the vocabulary when unseen.
    pub fn intern(&mut self, field: usize, token: &str) -> u32 {
        if let Some(v) = self.lookup[field].get(token) {
            return *v;
        }
        let v = self.vocabularies[field].len() as u32;
        self.vocabularies[field].push(token.to_string());
        self.lookup[field].insert(token.to_string(), v);
        // Offsets shift when any vocabulary before the last grows.
        self.rebuild_derived();
        v
    }

    /// Stable content hash over field names and vocabularies.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, vocab) in self.field_names.iter().zip(&self.vocabularies) {
            hasher.update(name.as_bytes());
            hasher.update([0xff]);
            for tok in vocab {
                hasher.update(tok.as_bytes());
                hasher.update([0xfe]);
            }
            hasher.update([0xfd]);
        }
        hex_digest(hasher)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut schema: FieldSchema = serde_json::from_str(&text)?;
        schema.rebuild_derived();
        Ok(schema)
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    let bytes = hasher.finalize();
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
