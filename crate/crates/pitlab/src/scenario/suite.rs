//! Suite persistence: one JSON file per scenario plus a `suite.json`
//! manifest recording the id list, the generation seed, and a hash of the
//! prior that produced it — enough to audit or regenerate the suite.

use super::{PriorSpec, ScenarioError, ScenarioSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub ids: Vec<String>,
    pub seed: u64,
    /// SHA-256 of the prior's canonical JSON encoding.
    pub prior_hash: String,
}

fn prior_hash(prior: &PriorSpec) -> Result<String, ScenarioError> {
    let bytes = serde_json::to_vec(prior)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Write the suite under `dir`: `suite.json`, `prior.json`, and one
/// `<id>.json` per scenario.
pub fn save_suite(
    dir: &Path,
    specs: &[ScenarioSpec],
    seed: u64,
    prior: &PriorSpec,
) -> Result<SuiteManifest, ScenarioError> {
    fs::create_dir_all(dir)?;
    for s in specs {
        fs::write(dir.join(format!("{}.json", s.id)), serde_json::to_string_pretty(s)?)?;
    }
    fs::write(dir.join("prior.json"), serde_json::to_string_pretty(prior)?)?;
    let manifest = SuiteManifest {
        ids: specs.iter().map(|s| s.id.clone()).collect(),
        seed,
        prior_hash: prior_hash(prior)?,
    };
    fs::write(dir.join("suite.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Read a suite back; every scenario is re-validated on load.
pub fn load_suite(dir: &Path) -> Result<(SuiteManifest, Vec<ScenarioSpec>), ScenarioError> {
    let manifest: SuiteManifest = serde_json::from_str(&fs::read_to_string(dir.join("suite.json"))?)?;
    let mut specs = Vec::with_capacity(manifest.ids.len());
    for id in &manifest.ids {
        let spec: ScenarioSpec = serde_json::from_str(&fs::read_to_string(dir.join(format!("{id}.json")))?)?;
        spec.validate()?;
        specs.push(spec);
    }
    Ok((manifest, specs))
}
