//! `.aaspkg` archives: a ZIP holding `manifest.json`, `model.json` and
//! `artifacts/<path>`. Writing is canonical, so equal packages produce equal
//! bytes.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::codec::{self, DecodeError};
use super::types::{AasPackage, FileMap};
use super::validate::validate;

pub const MANIFEST_ENTRY: &str = "manifest.json";
pub const MODEL_ENTRY: &str = "model.json";
pub const ARTIFACT_DIR: &str = "artifacts/";

const MAX_ENTRY_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackageError {
    #[error("malformed archive: {0}")]
    MalformedArchive(String),
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
}

impl From<DecodeError> for PackageError {
    fn from(e: DecodeError) -> Self {
        PackageError::SchemaViolation { path: e.path, reason: e.reason }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_safe_artifact_path(name: &str) -> bool {
    name.starts_with(ARTIFACT_DIR)
        && name.len() > ARTIFACT_DIR.len()
        && !name.contains('\\')
        && name.split('/').all(|seg| !seg.is_empty() && seg != "." && seg != "..")
}

/// Decode and verify a package archive.
///
/// Checksums are verified before the model is validated, so a corrupted
/// artifact reports `ChecksumMismatch` rather than a schema problem.
pub fn parse_package(bytes: &[u8]) -> Result<AasPackage, PackageError> {
    if bytes.is_empty() {
        return Err(PackageError::MalformedArchive("empty input".into()));
    }
    let mut archive =
        ZipArchive::new(Cursor::new(bytes)).map_err(|e| PackageError::MalformedArchive(e.to_string()))?;

    let mut manifest_raw = None;
    let mut model_raw = None;
    let mut files = FileMap::new();
    for i in 0..archive.len() {
        let mut entry = archive
            .by_index(i)
            .map_err(|e| PackageError::MalformedArchive(e.to_string()))?;
        if entry.is_dir() {
            continue;
        }
        let name = entry.name().to_string();
        if entry.size() > MAX_ENTRY_BYTES {
            return Err(PackageError::MalformedArchive(format!("entry {name} too large")));
        }
        let mut buf = Vec::with_capacity(entry.size() as usize);
        entry
            .read_to_end(&mut buf)
            .map_err(|e| PackageError::MalformedArchive(format!("{name}: {e}")))?;
        let slot = match name.as_str() {
            MANIFEST_ENTRY => &mut manifest_raw,
            MODEL_ENTRY => &mut model_raw,
            _ if is_safe_artifact_path(&name) => {
                if files.insert(name.clone(), buf).is_some() {
                    return Err(PackageError::MalformedArchive(format!("duplicate entry {name}")));
                }
                continue;
            }
            _ => return Err(PackageError::MalformedArchive(format!("unexpected entry {name}"))),
        };
        if slot.replace(buf).is_some() {
            return Err(PackageError::MalformedArchive(format!("duplicate entry {name}")));
        }
    }

    let manifest_raw = manifest_raw.ok_or_else(|| PackageError::MalformedArchive("missing manifest.json".into()))?;
    let model_raw = model_raw.ok_or_else(|| PackageError::MalformedArchive("missing model.json".into()))?;
    let manifest_json: serde_json::Value =
        serde_json::from_slice(&manifest_raw).map_err(|e| PackageError::SchemaViolation {
            path: MANIFEST_ENTRY.into(),
            reason: e.to_string(),
        })?;
    let model_json: serde_json::Value =
        serde_json::from_slice(&model_raw).map_err(|e| PackageError::SchemaViolation {
            path: MODEL_ENTRY.into(),
            reason: e.to_string(),
        })?;
    let manifest = codec::manifest_from_json(&manifest_json)?;
    let model = codec::model_from_json(&model_json)?;

    for (path, expected) in &manifest.checksums {
        if let Some(bytes) = files.get(path) {
            if !sha256_hex(bytes).eq_ignore_ascii_case(expected) {
                return Err(PackageError::ChecksumMismatch(path.clone()));
            }
        }
    }

    let pkg = AasPackage {
        shells: model.shells,
        submodels: model.submodels,
        endpoints: model.endpoints,
        sync_config: model.sync_config,
        manifest,
        files: Arc::new(files),
    };
    if let Some(first) = validate(&pkg).into_iter().next() {
        return Err(PackageError::SchemaViolation {
            path: first.path,
            reason: format!("{}: {}", first.rule, first.message),
        });
    }
    Ok(pkg)
}

/// Encode a package canonically. Entries are sorted by path and carry the
/// fixed ZIP epoch (1980-01-01) as their timestamp.
pub fn serialize_package(pkg: &AasPackage) -> Vec<u8> {
    let mut entries: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    entries.insert(MANIFEST_ENTRY, codec::to_canonical_bytes(&codec::manifest_to_json(&pkg.manifest)));
    entries.insert(MODEL_ENTRY, codec::to_canonical_bytes(&codec::model_to_json(pkg)));
    for (path, bytes) in pkg.files.iter() {
        entries.insert(path.as_str(), bytes.clone());
    }

    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let mut writer = ZipWriter::new(Cursor::new(Vec::new()));
    for (name, bytes) in entries {
        writer.start_file(name, options).expect("in-memory zip entry");
        writer.write_all(&bytes).expect("in-memory zip write");
    }
    writer.finish().expect("in-memory zip finish").into_inner()
}
