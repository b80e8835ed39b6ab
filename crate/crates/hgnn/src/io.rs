//! Text dataset formats and small file utilities.
//!
//! * citation text: `<name>.content` rows `id f_1 … f_F label` and
//!   `<name>.cites` rows `cited_id citing_id`, whitespace-delimited;
//! * occurrence triplets: rows `row col value` with 1-based indices, plus a
//!   labels file with one class id per line;
//! * split files: one 0-based vertex index per line.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use hgnn_core::{DenseMatrix, SparseMatrix};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Non-empty lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Class names in sorted order and each row's class index. Names that all
/// parse as integers sort numerically, otherwise lexicographically.
fn index_labels(raw: &[String]) -> (Vec<String>, Vec<usize>) {
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    let mut names: Vec<String> = distinct.into_iter().map(str::to_owned).collect();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let labels = raw.iter().map(|l| index[l.as_str()]).collect();
    (names, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CitationText {
    /// Original ids in first-appearance order; vertex `i` had id `ids[i]`.
    pub ids: Vec<String>,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// `(cited, citing)` pairs between known vertices.
    pub links: Vec<(usize, usize)>,
    /// Link rows naming an id absent from the content file.
    pub dropped_links: usize,
}

pub fn load_citation_text(content_path: &Path, cites_path: &Path) -> Result<CitationText> {
    let content = read_to_string(content_path)?;
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width = None;
    for (line, text) in data_lines(&content) {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::parse(content_path, line, "expected `id features… label`"));
        }
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Ragged {
                path: content_path.into(),
                line,
                expected,
                found: fields.len(),
            });
        }
        let id = fields[0];
        if index.insert(id.to_owned(), ids.len()).is_some() {
            return Err(Error::parse(content_path, line, format!("duplicate id `{id}`")));
        }
        ids.push(id.to_owned());
        for f in &fields[1..fields.len() - 1] {
            let v: f64 = f
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(content_path, line, format!("bad feature value `{f}`")))?;
            values.push(v);
        }
        raw_labels.push(fields[fields.len() - 1].to_owned());
    }
    let n = ids.len();
    if n == 0 {
        return Err(Error::parse(content_path, 0, "no vertices"));
    }
    let features = DenseMatrix::new(n, width.unwrap() - 2, values)?;
    let (class_names, labels) = index_labels(&raw_labels);

    let cites = read_to_string(cites_path)?;
    let mut links = Vec::new();
    let mut dropped_links = 0;
    for (line, text) in data_lines(&cites) {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Ragged {
                path: cites_path.into(),
                line,
                expected: 2,
                found: fields.len(),
            });
        }
        match (index.get(fields[0]), index.get(fields[1])) {
            (Some(&a), Some(&b)) => links.push((a, b)),
            _ => dropped_links += 1,
        }
    }
    Ok(CitationText {
        ids,
        features,
        labels,
        class_names,
        links,
        dropped_links,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceData {
    pub occurrence: SparseMatrix,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

/// Reads the triplet matrix and labels. The vertex count comes from the
/// labels file; the attribute count is `n_features` when given, otherwise
/// the largest column index seen.
pub fn load_occurrence(
    matrix_path: &Path,
    labels_path: &Path,
    n_features: Option<usize>,
) -> Result<OccurrenceData> {
    let label_text = read_to_string(labels_path)?;
    let mut raw_labels = Vec::new();
    for (line, text) in data_lines(&label_text) {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 1 {
            return Err(Error::Ragged {
                path: labels_path.into(),
                line,
                expected: 1,
                found: fields.len(),
            });
        }
        raw_labels.push(fields[0].to_owned());
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(Error::parse(labels_path, 0, "no labels"));
    }
    let matrix_text = read_to_string(matrix_path)?;
    let mut triplets = Vec::new();
    let mut max_col = 0;
    for (line, text) in data_lines(&matrix_text) {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Ragged {
                path: matrix_path.into(),
                line,
                expected: 3,
                found: fields.len(),
            });
        }
        let index = |s: &str, what: &str, bound: Option<usize>| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::parse(matrix_path, line, format!("bad {what} index `{s}`")))?;
            if v == 0 || bound.is_some_and(|b| v > b) {
                return Err(Error::parse(
                    matrix_path,
                    line,
                    format!("{what} index {v} out of range (1-based)"),
                ));
            }
            Ok(v - 1)
        };
        let r = index(fields[0], "row", Some(n))?;
        let c = index(fields[1], "column", n_features)?;
        let v: f64 = fields[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(matrix_path, line, format!("bad value `{}`", fields[2])))?;
        max_col = max_col.max(c + 1);
        triplets.push((r, c, v));
    }
    let f = n_features.unwrap_or(max_col);
    let occurrence = SparseMatrix::from_triplets(n, f, &triplets)?;
    let features = occurrence.to_dense();
    let (class_names, labels) = index_labels(&raw_labels);
    Ok(OccurrenceData {
        occurrence,
        features,
        labels,
        class_names,
    })
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    data_lines(&text)
        .map(|(line, t)| {
            t.parse()
                .map_err(|_| Error::parse(path, line, format!("bad index `{t}`")))
        })
        .collect()
}

pub fn format_indices(indices: &[usize]) -> String {
    let mut s = String::with_capacity(indices.len() * 6);
    for i in indices {
        s.push_str(&i.to_string());
        s.push('\n');
    }
    s
}

/// Canonical citation text: ids and labels as given, features in shortest
/// round-trip form.
pub fn format_citation_text(
    ids: &[String],
    features: &DenseMatrix,
    labels: &[usize],
    class_names: &[String],
    links: &[(usize, usize)],
) -> (String, String) {
    let mut content = String::new();
    for (i, id) in ids.iter().enumerate() {
        content.push_str(id);
        for v in features.row(i) {
            content.push('\t');
            content.push_str(&v.to_string());
        }
        content.push('\t');
        content.push_str(&class_names[labels[i]]);
        content.push('\n');
    }
    let mut cites = String::new();
    for &(a, b) in links {
        cites.push_str(&ids[a]);
        cites.push('\t');
        cites.push_str(&ids[b]);
        cites.push('\n');
    }
    (content, cites)
}

/// Canonical triplet text (1-based, row-major order) and labels text.
pub fn format_occurrence(data: &OccurrenceData) -> (String, String) {
    let mut matrix = String::new();
    for (i, j, v) in data.occurrence.iter() {
        matrix.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
    }
    let mut labels = String::new();
    for &l in &data.labels {
        labels.push_str(&data.class_names[l]);
        labels.push('\n');
    }
    (matrix, labels)
}
