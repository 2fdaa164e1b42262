//! File names and small I/O helpers shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use contourpan_core::ClassCatalog;
use serde::de::DeserializeOwned;
use serde::Serialize;

// Network outputs.
pub const SEMANTIC_PROBS: &str = "semantic_probs.stf";
pub const CONTOUR_PROBS: &str = "contour_probs.stf";
pub const OFFSETS: &str = "offsets.stf";

// Ground truth written by `synth`.
pub const GT_LABELS: &str = "gt_labels.stf";
pub const GT_INSTANCES: &str = "gt_instances.stf";
pub const GT_PANOPTIC: &str = "gt_panoptic.stf";
pub const GT_RECORDS: &str = "gt_records.json";
pub const GT_CONTOURS: &str = "gt_contours.stf";

// Pipeline outputs.
pub const LABELS: &str = "labels.stf";
pub const DERIVED_INSTANCES: &str = "derived_instances.stf";
pub const INSTANCES: &str = "instances.stf";
pub const RECORDS: &str = "records.json";
pub const PANOPTIC: &str = "panoptic.stf";
pub const SEGMENTS: &str = "segments.json";

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value = serde_json::from_str(&text)
        .map_err(contourpan_core::Error::from)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(value)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(contourpan_core::Error::from)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_json(value, p),
        None => {
            print!("{}", to_json(value)?);
            Ok(())
        }
    }
}

pub fn load_catalog(path: Option<&Path>) -> Result<ClassCatalog> {
    let catalog = match path {
        Some(p) => ClassCatalog::load(p)?,
        None => ClassCatalog::synthetic_default(),
    };
    catalog.require_panoptic()?;
    Ok(catalog)
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Scene directories below `root` holding `marker`, sorted by name.
///
/// A `root` that holds `marker` itself is a single scene named `.`.
pub fn scene_dirs(root: &Path, markers: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    if markers.iter().any(|m| root.join(m).is_file()) {
        return Ok(vec![(".".to_string(), root.to_path_buf())]);
    }
    let entries = fs::read_dir(root).with_context(|| format!("listing {}", root.display()))?;
    let mut scenes = Vec::new();
    for entry in entries {
        let entry = entry.with_context(|| format!("listing {}", root.display()))?;
        let path = entry.path();
        if path.is_dir() && markers.iter().any(|m| path.join(m).is_file()) {
            scenes.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    scenes.sort();
    if scenes.is_empty() {
        return Err(contourpan_core::Error::Validation(format!(
            "no scenes with {} found under {}",
            markers.join(" or "),
            root.display()
        ))
        .into());
    }
    Ok(scenes)
}

/// First of `names` present in `dir`.
pub fn first_existing(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

pub fn scene_name(seed: u64) -> String {
    format!("scene_{seed:05}")
}
