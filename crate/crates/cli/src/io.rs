//! File loading/saving helpers shared by the subcommands, plus the
//! provenance block embedded in every output.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use psymetric_core::measure::{load_measure_file, MeasureSpec};
use psymetric_core::persona::PersonaFile;
use psymetric_core::report::RelationSpec;
use psymetric_core::stats::Thresholds;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read {} for hashing", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Provenance block: tool version, the exact command inputs, and their
/// hashes. Deliberately free of wall-clock fields so reruns reproduce
/// byte-identical outputs.
pub fn provenance(command: &str, inputs: serde_json::Value) -> serde_json::Value {
    json!({
        "tool": format!("psymetric {}", env!("CARGO_PKG_VERSION")),
        "command": command,
        "inputs": inputs,
    })
}

pub fn load_measures(paths: &[PathBuf]) -> Result<Vec<MeasureSpec>> {
    let mut measures = Vec::new();
    for path in paths {
        let measure = load_measure_file(path)
            .with_context(|| format!("loading measure {}", path.display()))?;
        measures.push(measure);
    }
    Ok(measures)
}

/// Persona file on disk: the generation record plus a provenance block.
#[derive(Debug, Serialize, Deserialize)]
pub struct PersonaDoc {
    #[serde(default)]
    pub provenance: serde_json::Value,
    #[serde(flatten)]
    pub file: PersonaFile,
}

pub fn load_personas(path: &Path) -> Result<PersonaDoc> {
    let text = std::fs::read_to_string(path).with_context(|| {
        format!(
            "cannot read persona file {} (generate one with `psymetric personas`)",
            path.display()
        )
    })?;
    serde_json::from_str(&text)
        .with_context(|| format!("persona file {} does not parse", path.display()))
}

/// Optional thresholds/relations override file.
#[derive(Debug, Default, Deserialize)]
pub struct ThresholdsFile {
    #[serde(flatten)]
    pub thresholds: Option<Thresholds>,
    #[serde(default)]
    pub different_construct_pairs: Vec<(String, String)>,
}

pub fn load_thresholds(path: Option<&PathBuf>) -> Result<(Thresholds, RelationSpec)> {
    match path {
        None => Ok((Thresholds::default(), RelationSpec::default())),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read thresholds file {}", path.display()))?;
            let file: ThresholdsFile = serde_json::from_str(&text)
                .with_context(|| format!("thresholds file {} does not parse", path.display()))?;
            Ok((
                file.thresholds.unwrap_or_default(),
                RelationSpec { different_construct_pairs: file.different_construct_pairs },
            ))
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json_pretty(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
