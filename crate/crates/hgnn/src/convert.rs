//! Raw dataset files → normalized files plus a manifest with content hashes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use hgnn_core::dataset::{deterministic_split, DatasetBundle, Split, SplitSizes, Structure};

use crate::error::{Error, Result};
use crate::io;
use crate::manifest::{self, Manifest, Preprocessing, Source, SplitSpec, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub enum ConvertInput {
    Citation {
        content: PathBuf,
        cites: PathBuf,
    },
    Occurrence {
        matrix: PathBuf,
        labels: PathBuf,
        n_features: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSource {
    /// Directory holding `train.idx`, `val.idx` and `test.idx`.
    Files(PathBuf),
    Deterministic { sizes: SplitSizes, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertOptions {
    pub name: String,
    pub input: ConvertInput,
    pub split: SplitSource,
    pub out_dir: PathBuf,
    pub preprocessing: Preprocessing,
}

impl ConvertOptions {
    /// Options that re-convert the files an existing manifest names.
    pub fn from_manifest(path: &Path, out_dir: PathBuf) -> Result<Self> {
        let path = manifest::resolve(path)?;
        let m = Manifest::from_json(&path, &io::read_to_string(&path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let input = match &m.source {
            Source::Citation { content, cites } => ConvertInput::Citation {
                content: dir.join(content),
                cites: dir.join(cites),
            },
            Source::Occurrence {
                matrix,
                labels,
                n_features,
            } => ConvertInput::Occurrence {
                matrix: dir.join(matrix),
                labels: dir.join(labels),
                n_features: *n_features,
            },
        };
        let split = match &m.split {
            SplitSpec::Files { train, val, test } => {
                let base = dir.join(train);
                let split_dir = base.parent().unwrap_or(dir).to_path_buf();
                for (f, want) in [(train, "train.idx"), (val, "val.idx"), (test, "test.idx")] {
                    if dir.join(f) != split_dir.join(want) {
                        return Err(Error::Manifest {
                            path,
                            message: format!("split file `{f}` must be named `{want}` next to its siblings"),
                        });
                    }
                }
                SplitSource::Files(split_dir)
            }
            &SplitSpec::Deterministic {
                train_per_class,
                val,
                test,
                seed,
            } => SplitSource::Deterministic {
                sizes: SplitSizes {
                    train_per_class,
                    val,
                    test,
                },
                seed,
            },
        };
        Ok(Self {
            name: m.name,
            input,
            split,
            out_dir,
            preprocessing: m.preprocessing,
        })
    }
}

/// Counts printed after conversion for eyeballing against known sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Census {
    pub n_vertices: usize,
    /// Citation rows kept, or nonzero occurrence entries.
    pub n_links: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub dropped_links: usize,
}

impl fmt::Display for Census {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "nodes {}  links {}  features {}  classes {}",
            self.n_vertices, self.n_links, self.n_features, self.n_classes
        )?;
        if self.dropped_links > 0 {
            write!(f, "  (dropped {} dangling links)", self.dropped_links)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertOutcome {
    pub census: Census,
    pub manifest_path: PathBuf,
    /// Files whose bytes changed on disk.
    pub written: Vec<PathBuf>,
}

/// Writes `contents` unless the file already holds exactly these bytes.
fn write_if_changed(path: &Path, contents: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    if std::fs::read(path).is_ok_and(|old| old == contents) {
        return Ok(());
    }
    io::write_atomic(path, contents)?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Parses and validates the input, then writes the normalized files and the
/// manifest. Output files are written only when their bytes change, so
/// converting converted output is a no-op.
pub fn convert(opts: &ConvertOptions) -> Result<ConvertOutcome> {
    let mut files: Vec<(String, String)> = Vec::new();
    let (census, labels, n_classes, source, structure, features) = match &opts.input {
        ConvertInput::Citation { content, cites } => {
            let t = io::load_citation_text(content, cites)?;
            let (c, l) = io::format_citation_text(&t.ids, &t.features, &t.labels, &t.class_names, &t.links);
            let content_name = format!("{}.content", opts.name);
            let cites_name = format!("{}.cites", opts.name);
            files.push((content_name.clone(), c));
            files.push((cites_name.clone(), l));
            let census = Census {
                n_vertices: t.ids.len(),
                n_links: t.links.len(),
                n_features: t.features.cols(),
                n_classes: t.class_names.len(),
                dropped_links: t.dropped_links,
            };
            let source = Source::Citation {
                content: content_name,
                cites: cites_name,
            };
            (census, t.labels, t.class_names.len(), source, Structure::Citations(t.links), t.features)
        }
        ConvertInput::Occurrence {
            matrix,
            labels,
            n_features,
        } => {
            let o = io::load_occurrence(matrix, labels, *n_features)?;
            let (m, l) = io::format_occurrence(&o);
            let matrix_name = format!("{}.triplets", opts.name);
            let labels_name = "labels.txt".to_string();
            files.push((matrix_name.clone(), m));
            files.push((labels_name.clone(), l));
            let census = Census {
                n_vertices: o.labels.len(),
                n_links: o.occurrence.nnz(),
                n_features: o.occurrence.n_cols(),
                n_classes: o.class_names.len(),
                dropped_links: 0,
            };
            let source = Source::Occurrence {
                matrix: matrix_name,
                labels: labels_name,
                n_features: Some(o.occurrence.n_cols()),
            };
            (census, o.labels, o.class_names.len(), source, Structure::Occurrence(o.occurrence), o.features)
        }
    };

    let (split, split_spec) = match &opts.split {
        SplitSource::Files(dir) => {
            let split = Split {
                train: io::read_indices(&dir.join("train.idx"))?,
                val: io::read_indices(&dir.join("val.idx"))?,
                test: io::read_indices(&dir.join("test.idx"))?,
            };
            for (name, set) in [("train.idx", &split.train), ("val.idx", &split.val), ("test.idx", &split.test)] {
                files.push((name.to_string(), io::format_indices(set)));
            }
            let spec = SplitSpec::Files {
                train: "train.idx".into(),
                val: "val.idx".into(),
                test: "test.idx".into(),
            };
            (split, spec)
        }
        &SplitSource::Deterministic { sizes, seed } => {
            let split = deterministic_split(&labels, n_classes, sizes, seed)?;
            let spec = SplitSpec::Deterministic {
                train_per_class: sizes.train_per_class,
                val: sizes.val,
                test: sizes.test,
                seed,
            };
            (split, spec)
        }
    };
    let bundle = DatasetBundle {
        name: opts.name.clone(),
        features,
        labels,
        class_names: vec![String::new(); n_classes],
        structure,
        split,
    };
    bundle.validate()?;

    let mut written = Vec::new();
    let mut sha256 = BTreeMap::new();
    for (name, text) in &files {
        write_if_changed(&opts.out_dir.join(name), text.as_bytes(), &mut written)?;
        sha256.insert(name.clone(), io::sha256_hex(text.as_bytes()));
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        name: opts.name.clone(),
        source,
        split: split_spec,
        preprocessing: opts.preprocessing,
        sha256,
    };
    let manifest_path = opts.out_dir.join(MANIFEST_FILE);
    write_if_changed(&manifest_path, manifest.to_json().as_bytes(), &mut written)?;
    Ok(ConvertOutcome {
        census,
        manifest_path,
        written,
    })
}
