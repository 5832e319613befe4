//! JSON-lines corpus manifests.
//!
//! Each line describes one audio file: its path, class label, and speaker.
//! Augmented copies carry the augmentation record produced when they were
//! generated.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AppliedAugment;
use crate::error::{Error, Result};

/// Class of a corpus file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// Natural speech from the target speaker (the positive class).
    TargetNatural,
    /// Natural speech from any other speaker.
    OtherNatural,
    /// Synthetic speech imitating the target speaker.
    Fake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::TargetNatural => "target_natural",
            Label::OtherNatural => "other_natural",
            Label::Fake => "fake",
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub speaker: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none", default)]
    pub augment: Option<AppliedAugment>,
}

impl ManifestEntry {
    pub fn new(path: impl Into<PathBuf>, label: Label, speaker: impl Into<String>) -> Self {
        ManifestEntry {
            path: path.into(),
            label,
            speaker: speaker.into(),
            augment: None,
        }
    }
}

/// Read a JSON-lines manifest; blank lines are ignored.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Write a JSON-lines manifest.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for entry in entries {
        let line = serde_json::to_string(entry).expect("manifest entries serialize");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Entries with a given label.
pub fn with_label(entries: &[ManifestEntry], label: Label) -> Vec<ManifestEntry> {
    entries
        .iter()
        .filter(|e| e.label == label)
        .cloned()
        .collect()
}
