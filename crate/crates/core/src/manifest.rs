//! Dataset manifests: the JSON index of samples, their labels and the files
//! (image, mask, exported tensors) that belong to each.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Authentic,
    Tampered,
}

impl Label {
    pub fn is_tampered(self) -> bool {
        self == Label::Tampered
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Authentic => "authentic",
            Label::Tampered => "tampered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    /// Working resolution as `[H, W]`.
    pub image_size: (usize, usize),
    pub patch_size: usize,
    pub embed_dim: usize,
}

impl ManifestMeta {
    /// Patch grid `(rows, cols)` at the working resolution.
    pub fn patch_grid(&self) -> (usize, usize) {
        (
            self.image_size.0 / self.patch_size,
            self.image_size.1 / self.patch_size,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub meta: ManifestMeta,
    pub samples: Vec<SampleEntry>,
    /// Directory relative paths are resolved against; the manifest's own
    /// directory when loaded from disk.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Parses and validates a manifest document. Relative paths resolve
    /// against `base_dir`.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut manifest: DatasetManifest = serde_json::from_str(text)?;
        manifest.base_dir = base_dir.into();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let meta = &self.meta;
        let (h, w) = meta.image_size;
        if meta.patch_size == 0 || h == 0 || w == 0 {
            return Err(Error::Manifest(
                "image_size and patch_size must be positive".into(),
            ));
        }
        if h % meta.patch_size != 0 || w % meta.patch_size != 0 {
            return Err(Error::Manifest(format!(
                "image_size ({h}, {w}) is not divisible by patch_size {}",
                meta.patch_size
            )));
        }
        if meta.embed_dim == 0 {
            return Err(Error::Manifest("embed_dim must be ≥ 1".into()));
        }

        let mut seen = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if s.id.is_empty() {
                return Err(Error::Manifest("empty sample id".into()));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            let paths = [
                Some(&s.image_path),
                s.mask_path.as_ref(),
                s.attention_path.as_ref(),
                s.embeddings_path.as_ref(),
            ];
            if paths.into_iter().flatten().any(|p| p.as_os_str().is_empty()) {
                return Err(Error::Manifest(format!("sample {:?} has an empty path", s.id)));
            }
        }
        Ok(())
    }

    pub fn sample(&self, id: &str) -> Result<&SampleEntry> {
        self.samples
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn authentic(&self) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(|s| !s.label.is_tampered())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::from_json(&text, base)
}
