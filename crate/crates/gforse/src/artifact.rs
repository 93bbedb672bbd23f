//! Serialized model artifact and run manifest.
//!
//! The model file is a self-describing text document: comment lines
//! (starting with `#`, carrying the manifest hash) followed by a JSON body
//! with an explicit schema version. Numbers round-trip exactly through the
//! shortest-decimal JSON encoding, so a reloaded model reproduces the same
//! predictions bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kernel::KernelParams;
use crate::kriging::KrigingModel;
use crate::linalg::Matrix;
use crate::metrics::ScalingRecord;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk model representation. The training design and response are part
/// of the file because prediction needs them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub scaling: ScalingRecord<f64>,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub theta_bounds: (f64, f64),
    pub nugget: f64,
    pub nugget_max: f64,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
    pub log_likelihood: f64,
    /// Normalized training design, row major.
    pub x: Vec<Vec<f64>>,
    /// Standardized training response.
    pub y: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(
        model: &KrigingModel<f64>,
        scaling: &ScalingRecord<f64>,
        feature_names: Vec<String>,
        target_name: String,
        nugget_max: f64,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            feature_names,
            target_name,
            scaling: scaling.clone(),
            theta: model.params().theta.clone(),
            p: model.params().p.clone(),
            theta_bounds: model.theta_bounds(),
            nugget: model.nugget(),
            nugget_max,
            mu_hat: model.mu_hat(),
            sigma2_hat: model.sigma2_hat(),
            log_likelihood: model.log_likelihood(),
            x: model.x().to_rows(),
            y: model.y().to_vec(),
        }
    }

    /// Rebuilds the in-memory model. The Cholesky factor and solve caches
    /// are recomputed deterministically from the stored numbers.
    pub fn to_model(&self) -> Result<KrigingModel<f64>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Malformed(format!(
                "unsupported model schema version {}",
                self.schema_version
            )));
        }
        let x = Matrix::from_rows(self.x.clone())?;
        let params = KernelParams::with_p(self.theta.clone(), self.p.clone())?;
        KrigingModel::from_params(
            x,
            self.y.clone(),
            params,
            self.nugget,
            self.nugget_max.max(self.nugget),
            self.theta_bounds,
        )
    }

    pub fn save(&self, path: &Path, manifest_hash: &str) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let text = format!("# gforse model v{SCHEMA_VERSION}\n# manifest: {manifest_hash}\n{body}\n");
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let body: String = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        serde_json::from_str(&body).map_err(|e| Error::Malformed(format!("model file: {e}")))
    }
}

/// Per-run provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub scaling_summary: Option<String>,
    pub version: String,
    pub manifest_hash: String,
    pub wall_time_ms: u128,
}

impl RunManifest {
    /// Hash over the deterministic fields only, so identical configurations
    /// hash identically across runs.
    pub fn new(
        command: &str,
        inputs: Vec<String>,
        config: serde_json::Value,
        seed: Option<u64>,
        scaling_summary: Option<String>,
    ) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        for i in &inputs {
            hasher.update(i.as_bytes());
        }
        hasher.update(config.to_string().as_bytes());
        if let Some(s) = seed {
            hasher.update(s.to_le_bytes());
        }
        hasher.update(version.as_bytes());
        let manifest_hash = hex_digest(hasher);
        Self {
            command: command.to_string(),
            inputs,
            config,
            seed,
            scaling_summary,
            version,
            manifest_hash,
            wall_time_ms: 0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        fs::write(path, body + "\n")?;
        Ok(())
    }
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
