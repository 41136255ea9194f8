//! Extraction-run manifests: one JSON file listing every dump of a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::ActivationMatrix;
use crate::error::{Error, Result};
use crate::io::npy;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Cls,
}

/// Metadata binding one dump file to its model, layer, and language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationManifest {
    pub model_id: String,
    pub layer_index: usize,
    /// ISO 639-1 code.
    pub language: String,
    pub pooling: Pooling,
    pub dataset_id: String,
    /// Identifies the parallel corpus; equal across languages whose rows are
    /// aligned translations.
    pub dataset_hash: String,
    /// Relative to the manifest's directory.
    pub dump_path: String,
    pub m: usize,
    pub n: usize,
    /// SHA-256 of the dump file; verified on load when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub format_version: u32,
    pub dumps: Vec<ActivationManifest>,
}

impl ManifestFile {
    pub fn new(dumps: Vec<ActivationManifest>) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            dumps,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ManifestFile = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if file.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                file.format_version
            )));
        }
        for entry in &file.dumps {
            entry.check().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        }
        Ok(file)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl ActivationManifest {
    fn check(&self) -> std::result::Result<(), String> {
        let lang = self.language.as_bytes();
        if lang.len() != 2 || !lang.iter().all(u8::is_ascii_lowercase) {
            return Err(format!("language '{}' is not an ISO 639-1 code", self.language));
        }
        if self.dataset_hash.is_empty() || !self.dataset_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("dataset_hash '{}' is not hex", self.dataset_hash));
        }
        if Path::new(&self.dump_path).is_absolute() {
            return Err(format!("dump_path '{}' must be relative", self.dump_path));
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A manifest entry together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct ResolvedDump {
    pub entry: ActivationManifest,
    pub base_dir: PathBuf,
}

impl ResolvedDump {
    pub fn path(&self) -> PathBuf {
        self.base_dir.join(&self.entry.dump_path)
    }

    /// Reads the dump and checks it against the manifest's shape and hash.
    pub fn load(&self) -> Result<ActivationMatrix> {
        let path = self.path();
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if let Some(expected) = &self.entry.content_sha256 {
            let actual = sha256_hex(&bytes);
            if !actual.eq_ignore_ascii_case(expected) {
                return Err(Error::Format(format!(
                    "{}: content hash {actual} does not match manifest {expected}",
                    path.display()
                )));
            }
        }
        let matrix = npy::decode(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if matrix.shape() != (self.entry.m, self.entry.n) {
            return Err(Error::Format(format!(
                "{}: manifest declares {}x{}, dump holds {}x{}",
                path.display(),
                self.entry.m,
                self.entry.n,
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(matrix)
    }
}

/// `(model_id, layer, language)`.
pub type DumpKey = (String, usize, String);

/// All dumps from one or more manifests, indexed by model, layer, language.
#[derive(Debug, Clone, Default)]
pub struct ManifestSet {
    dumps: BTreeMap<DumpKey, ResolvedDump>,
}

impl ManifestSet {
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut set = ManifestSet::default();
        for path in paths {
            let path = path.as_ref();
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            for entry in ManifestFile::read(path)?.dumps {
                set.insert(ResolvedDump {
                    entry,
                    base_dir: base.clone(),
                })?;
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, dump: ResolvedDump) -> Result<()> {
        let e = &dump.entry;
        let key = (e.model_id.clone(), e.layer_index, e.language.clone());
        if let Some(existing) = self.dumps.get(&key) {
            return Err(Error::InvalidParam(format!(
                "model={} layer={} language={} resolves to two dumps ({} and {})",
                key.0,
                key.1,
                key.2,
                existing.path().display(),
                dump.path().display()
            )));
        }
        self.dumps.insert(key, dump);
        Ok(())
    }

    pub fn get(&self, model_id: &str, layer: usize, language: &str) -> Result<&ResolvedDump> {
        self.dumps
            .get(&(model_id.to_string(), layer, language.to_string()))
            .ok_or_else(|| Error::MissingArtifact {
                model_id: model_id.to_string(),
                layer,
                language: language.to_string(),
            })
    }

    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = self.dumps.keys().map(|k| k.0.clone()).collect();
        out.dedup();
        out
    }

    /// Sorted layer indices present for a model (any language).
    pub fn layers(&self, model_id: &str) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .dumps
            .keys()
            .filter(|k| k.0 == model_id)
            .map(|k| k.1)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn is_empty(&self) -> bool {
        self.dumps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.dumps.len()
    }
}
