use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::error::{Error, Result};
use crate::optim::AdamWState;

const FORMAT: &str = "gpsr-checkpoint";
const VERSION: u32 = 1;

/// Self-describing parameter container. JSON with shortest round-trip float
/// formatting, so save/load is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub params: ModelParams,
    pub optimizer: Option<AdamWState>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, seed: u64, optimizer: Option<AdamWState>) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            seed,
            params,
            optimizer,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Data(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        let expected = ModelParams::zeros(&ck.params.config)?;
        for ((b, m), (_, e)) in ck.params.blocks().into_iter().zip(expected.blocks()) {
            if m.shape() != e.shape() {
                return Err(Error::Data(format!(
                    "block {b} has shape {:?}, expected {:?}",
                    m.shape(),
                    e.shape()
                )));
            }
        }
        if expected.blocks().len() != ck.params.blocks().len() {
            return Err(Error::Data("checkpoint blocks do not match the architecture".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_json(&fs::read_to_string(path)?)
    }
}
