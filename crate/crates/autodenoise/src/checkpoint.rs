//! Versioned parameter checkpoints. JSON keeps the f64 arrays bit-exact
//! (shortest round-trip formatting) and loading validates the schema hash
//! so a checkpoint cannot silently run against the wrong feature space.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FieldSchema;
use crate::error::{Error, Result};
use crate::models::CtrModel;
use crate::policy::PolicyParams;

const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CheckpointPayload {
    Model { model: CtrModel },
    Policy { policy: PolicyParams },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub schema_hash: String,
    pub config_hash: String,
    #[serde(flatten)]
    pub payload: CheckpointPayload,
}

pub fn save_model(
    path: &Path,
    model: &CtrModel,
    schema: &FieldSchema,
    config_hash: &str,
) -> Result<()> {
    save(
        path,
        &Checkpoint {
            version: VERSION,
            schema_hash: schema.hash(),
            config_hash: config_hash.to_string(),
            payload: CheckpointPayload::Model {
                model: model.clone(),
            },
        },
    )
}

pub fn save_policy(
    path: &Path,
    policy: &PolicyParams,
    schema: &FieldSchema,
    config_hash: &str,
) -> Result<()> {
    save(
        path,
        &Checkpoint {
            version: VERSION,
            schema_hash: schema.hash(),
            config_hash: config_hash.to_string(),
            payload: CheckpointPayload::Policy {
                policy: policy.clone(),
            },
        },
    )
}

fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    crate::data::write_atomic(path, serde_json::to_string(checkpoint)?.as_bytes())
}

pub fn load(path: &Path, schema: &FieldSchema) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)?;
    if checkpoint.version != VERSION {
        return Err(Error::data(format!(
            "checkpoint version {} unsupported (expected {VERSION})",
            checkpoint.version
        )));
    }
    let actual = schema.hash();
    if checkpoint.schema_hash != actual {
        return Err(Error::HashMismatch {
            expected: checkpoint.schema_hash,
            found: actual,
        });
    }
    Ok(checkpoint)
}

pub fn load_model(path: &Path, schema: &FieldSchema) -> Result<CtrModel> {
    match load(path, schema)?.payload {
        CheckpointPayload::Model { model } => Ok(model),
        CheckpointPayload::Policy { .. } => {
            Err(Error::data("expected a model checkpoint, found a policy"))
        }
    }
}

pub fn load_policy(path: &Path, schema: &FieldSchema) -> Result<PolicyParams> {
    match load(path, schema)?.payload {
        CheckpointPayload::Policy { policy } => Ok(policy),
        CheckpointPayload::Model { .. } => {
            Err(Error::data("expected a policy checkpoint, found a model"))
        }
    }
}
