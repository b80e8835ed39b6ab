//! Bundle manifests: a JSON file naming the data files of one dataset, its
//! split and preprocessing. Paths inside a manifest are relative to the
//! manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hgnn_core::dataset::{deterministic_split, row_normalize, DatasetBundle, Split, SplitSizes, Structure};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Directory searched for relative manifest paths that do not exist as given.
pub const DATA_ROOT_ENV: &str = "HGNN_DATA_ROOT";

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub source: Source,
    pub split: SplitSpec,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    /// Content hashes keyed by relative path, checked on load.
    #[serde(default)]
    pub sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Citation {
        content: String,
        cites: String,
    },
    Occurrence {
        matrix: String,
        labels: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_features: Option<usize>,
    },
}

impl Source {
    pub fn files(&self) -> Vec<&str> {
        match self {
            Source::Citation { content, cites } => vec![content, cites],
            Source::Occurrence { matrix, labels, .. } => vec![matrix, labels],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    Files {
        train: String,
        val: String,
        test: String,
    },
    Deterministic {
        #[serde(default = "default_train_per_class")]
        train_per_class: usize,
        #[serde(default = "default_val")]
        val: usize,
        #[serde(default = "default_test")]
        test: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn default_train_per_class() -> usize {
    SplitSizes::default().train_per_class
}

fn default_val() -> usize {
    SplitSizes::default().val
}

fn default_test() -> usize {
    SplitSizes::default().test
}

impl Default for SplitSpec {
    fn default() -> Self {
        let s = SplitSizes::default();
        SplitSpec::Deterministic {
            train_per_class: s.train_per_class,
            val: s.val,
            test: s.test,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    /// Scale feature rows to unit L1 norm.
    pub row_normalize: bool,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self { row_normalize: true }
    }
}

impl Manifest {
    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Manifest {
            path: path.into(),
            message: e.to_string(),
        })?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest {
                path: path.into(),
                message: format!(
                    "schema_version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                    m.schema_version
                ),
            });
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Locates a manifest: the path as given, then relative to the data root
/// directory. A directory resolves to its `manifest.json`.
pub fn resolve(path: &Path) -> Result<PathBuf> {
    let mut candidates = vec![path.to_path_buf()];
    if path.is_relative() {
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            candidates.push(Path::new(&root).join(path));
        }
    }
    for c in &candidates {
        let c = if c.is_dir() { c.join(MANIFEST_FILE) } else { c.clone() };
        if c.is_file() {
            return Ok(c);
        }
    }
    Err(Error::Manifest {
        path: path.into(),
        message: format!("not found (also searched ${DATA_ROOT_ENV})"),
    })
}

#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub bundle: DatasetBundle,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    /// Citation rows dropped for naming an unknown id.
    pub dropped_links: usize,
    /// Link rows kept, before deduplication.
    pub n_links: usize,
}

/// Reads a manifest and everything it names, verifying recorded hashes.
pub fn load_bundle(path: &Path) -> Result<LoadedBundle> {
    let manifest_path = resolve(path)?;
    let manifest = Manifest::from_json(&manifest_path, &io::read_to_string(&manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    for (file, expected) in &manifest.sha256 {
        let p = dir.join(file);
        let actual = io::sha256_file(&p)?;
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(Error::HashMismatch {
                path: p,
                expected: expected.clone(),
                actual,
            });
        }
    }

    let (features, labels, class_names, structure, dropped_links, n_links) = match &manifest.source {
        Source::Citation { content, cites } => {
            let t = io::load_citation_text(&dir.join(content), &dir.join(cites))?;
            let n_links = t.links.len();
            (t.features, t.labels, t.class_names, Structure::Citations(t.links), t.dropped_links, n_links)
        }
        Source::Occurrence {
            matrix,
            labels,
            n_features,
        } => {
            let o = io::load_occurrence(&dir.join(matrix), &dir.join(labels), *n_features)?;
            let n_links = o.occurrence.nnz();
            (o.features, o.labels, o.class_names, Structure::Occurrence(o.occurrence), 0, n_links)
        }
    };
    let features = if manifest.preprocessing.row_normalize {
        row_normalize(&features)
    } else {
        features
    };
    let split = match &manifest.split {
        SplitSpec::Files { train, val, test } => Split {
            train: io::read_indices(&dir.join(train))?,
            val: io::read_indices(&dir.join(val))?,
            test: io::read_indices(&dir.join(test))?,
        },
        &SplitSpec::Deterministic {
            train_per_class,
            val,
            test,
            seed,
        } => deterministic_split(
            &labels,
            class_names.len(),
            SplitSizes {
                train_per_class,
                val,
                test,
            },
            seed,
        )?,
    };
    let bundle = DatasetBundle {
        name: manifest.name.clone(),
        features,
        labels,
        class_names,
        structure,
        split,
    };
    bundle.validate()?;
    Ok(LoadedBundle {
        bundle,
        manifest,
        manifest_path,
        dropped_links,
        n_links,
    })
}
