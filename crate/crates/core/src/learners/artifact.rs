use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{LearnerError, Model};
use crate::features::CATALOG_VERSION;
use crate::gnn::SageModel;
use crate::ingest::Address;

pub const ARTIFACT_MAGIC: &str = "SAML-MODEL";
/// Major format version written by this build.
pub const ARTIFACT_VERSION: u32 = 1;

/// A trained model of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "body", rename_all = "lowercase")]
pub enum SavedModel {
    Tabular(Model),
    Sage(SageModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Tabular(m) => m.kind(),
            SavedModel::Sage(_) => "sage",
        }
    }
}

/// Self-describing model container stored as `.saml-model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub catalog_version: u32,
    pub seed: u64,
    /// Whether labels were collapsed to Normal vs Suspicious.
    pub binary: bool,
    /// Addresses of the rows the model was fitted on.
    pub trained_on: Vec<Address>,
    pub model: SavedModel,
}

impl ModelArtifact {
    pub fn new(model: SavedModel, seed: u64, binary: bool, trained_on: Vec<Address>) -> Self {
        ModelArtifact {
            catalog_version: CATALOG_VERSION,
            seed,
            binary,
            trained_on,
            model,
        }
    }
}

/// Writes a header line `SAML-MODEL <version>` followed by the JSON body.
pub fn save_model<W: Write>(artifact: &ModelArtifact, mut sink: W) -> Result<(), LearnerError> {
    let body = serde_json::to_string(artifact).map_err(|e| LearnerError::Format(e.to_string()))?;
    writeln!(sink, "{ARTIFACT_MAGIC} {ARTIFACT_VERSION}").map_err(|e| LearnerError::Format(e.to_string()))?;
    sink.write_all(body.as_bytes()).map_err(|e| LearnerError::Format(e.to_string()))?;
    sink.write_all(b"\n").map_err(|e| LearnerError::Format(e.to_string()))
}

pub fn load_model<R: Read>(mut source: R) -> Result<ModelArtifact, LearnerError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| LearnerError::Format(e.to_string()))?;
    let (header, body) = text
        .split_once('\n')
        .ok_or_else(|| LearnerError::Format("missing header line".into()))?;
    let version = header
        .strip_prefix(ARTIFACT_MAGIC)
        .map(str::trim)
        .ok_or_else(|| LearnerError::Format(format!("not a model file: {header:?}")))?;
    let major: u32 = version
        .split('.')
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| LearnerError::Format(format!("bad version {version:?}")))?;
    if major != ARTIFACT_VERSION {
        return Err(LearnerError::Format(format!(
            "format version {major} is not supported (this build reads version {ARTIFACT_VERSION})"
        )));
    }
    let artifact: ModelArtifact =
        serde_json::from_str(body.trim_end()).map_err(|e| LearnerError::Format(format!("corrupt body: {e}")))?;
    if artifact.catalog_version != CATALOG_VERSION {
        return Err(LearnerError::Format(format!(
            "feature catalog version {} differs from {CATALOG_VERSION}",
            artifact.catalog_version
        )));
    }
    Ok(artifact)
}
