//! Generated profiles on disk: the profiles use the dataset record format
//! and a manifest links each condition row to its profile index and seed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hrrp_core::dataset::{dataset_paths, read_dataset, DatasetRecord};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FORMAT: &str = "hrrp-generated";
pub const MANIFEST_VERSION: u32 = 1;
/// Base name of the profile files written next to the manifest.
pub const RECORDS_NAME: &str = "generated";
pub const MANIFEST_FILE: &str = "generated.manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub conditioning: String,
    pub checkpoint: String,
    pub seed: u64,
    pub n_profiles: usize,
    pub records: String,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Position in the profile blob.
    pub index: usize,
    /// Row of the condition source this profile was generated for.
    pub row: usize,
    pub ship_id: String,
    pub length: f64,
    pub width: f64,
    pub aspect_angle: f64,
    pub seed: u64,
}

pub fn write_manifest(dir: &Path, header: &ManifestHeader, entries: &[ManifestEntry]) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, header)?;
    out.push(b'\n');
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(&out)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<(ManifestHeader, Vec<ManifestEntry>)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    let header: ManifestHeader = serde_json::from_str(lines.next().unwrap_or(""))
        .with_context(|| format!("{}: malformed manifest header", path.display()))?;
    if header.format != MANIFEST_FORMAT {
        bail!("{}: not a generated-profile manifest", path.display());
    }
    if header.version != MANIFEST_VERSION {
        bail!("{}: unsupported manifest version {}", path.display(), header.version);
    }
    let entries = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l))
        .collect::<std::result::Result<Vec<ManifestEntry>, _>>()
        .with_context(|| format!("{}: malformed manifest entry", path.display()))?;
    if entries.len() != header.n_profiles {
        bail!("{}: header lists {} profiles, found {}", path.display(), header.n_profiles, entries.len());
    }
    Ok((header, entries))
}

/// A set of profiles to evaluate or analyze, labelled by its origin.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub model: String,
    pub conditioning: String,
    pub records: Vec<DatasetRecord>,
}

/// Load a generated manifest or a dataset `*.meta.jsonl` file.
pub fn load_profile_set(path: &Path) -> Result<ProfileSet> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file = path.file_name().and_then(|f| f.to_str()).unwrap_or_default();
    if let Some(name) = file.strip_suffix(".meta.jsonl") {
        let records = read_dataset(dir, name).with_context(|| format!("cannot read dataset {}", path.display()))?;
        return Ok(ProfileSet {
            model: "real".into(),
            conditioning: name.into(),
            records,
        });
    }
    let (header, entries) = read_manifest(path)?;
    let records = read_dataset(dir, &header.records)
        .with_context(|| format!("cannot read profiles {}", dataset_paths(dir, &header.records).1.display()))?;
    if records.len() != entries.len() {
        bail!("{}: manifest and profile file disagree on the profile count", path.display());
    }
    Ok(ProfileSet {
        model: header.model,
        conditioning: header.conditioning,
        records,
    })
}
