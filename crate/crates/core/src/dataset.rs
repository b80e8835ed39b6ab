//! In-memory datasets, train/validation/test splits and feature
//! preprocessing. File formats live in the `hgnn` crate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::hypergraph::{
    clique_graph_from_occurrence, from_attribute_occurrence, from_citation_network, Hypergraph,
    PairwiseGraph,
};
use crate::layers::{GraphInputs, Variant};
use crate::random::permutation;
use crate::rng;
use crate::sparse::SparseMatrix;

/// Relational structure a dataset comes with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Structure {
    /// Directed `(cited, citing)` links between vertices.
    Citations(Vec<(usize, usize)>),
    /// Binary vertex × attribute occurrence matrix.
    Occurrence(SparseMatrix),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Set sizes for [`deterministic_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

impl Split {
    /// Checks that the sets are in range and pairwise disjoint.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if set.is_empty() {
                return Err(Error::InvalidSplit(format!("{name} set is empty")));
            }
            for &i in set {
                if i >= n {
                    return Err(Error::InvalidSplit(format!("{name} index {i} out of range for {n} vertices")));
                }
                if seen[i] {
                    return Err(Error::InvalidSplit(format!("index {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: String,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub structure: Structure,
    pub split: Split,
}

impl DatasetBundle {
    pub fn n_vertices(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vertices();
        if self.labels.len() != n {
            return Err(Error::DimensionMismatch {
                op: "labels",
                expected: (n, 1),
                got: (self.labels.len(), 1),
            });
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.n_classes()) {
            return Err(Error::IndexOutOfRange {
                what: "label",
                index: l,
                bound: self.n_classes(),
            });
        }
        match &self.structure {
            Structure::Citations(links) => {
                if let Some(&(a, b)) = links.iter().find(|&&(a, b)| a >= n || b >= n) {
                    return Err(Error::IndexOutOfRange {
                        what: "link endpoint",
                        index: a.max(b),
                        bound: n,
                    });
                }
            }
            Structure::Occurrence(m) => {
                if m.n_rows() != n {
                    return Err(Error::DimensionMismatch {
                        op: "occurrence rows",
                        expected: (n, m.n_cols()),
                        got: m.shape(),
                    });
                }
            }
        }
        self.split.validate(n)
    }

    /// Number of vertices per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The hypergraph built from this dataset's structure.
    pub fn hypergraph(&self) -> Result<Hypergraph> {
        match &self.structure {
            Structure::Citations(links) => from_citation_network(links, self.n_vertices()),
            Structure::Occurrence(m) => from_attribute_occurrence(m),
        }
    }

    /// The pairwise graph: undirected links, or the clique expansion of the
    /// occurrence matrix.
    pub fn pairwise_graph(&self) -> Result<PairwiseGraph> {
        match &self.structure {
            Structure::Citations(links) => PairwiseGraph::from_edges(self.n_vertices(), links),
            Structure::Occurrence(m) => Ok(clique_graph_from_occurrence(m)?.graph),
        }
    }

    /// Builds only the graphs `variant` needs.
    pub fn graphs_for(&self, variant: Variant) -> Result<ModelGraphs> {
        Ok(ModelGraphs {
            hypergraph: variant.needs_hypergraph().then(|| self.hypergraph()).transpose()?,
            pairwise: variant.needs_pairwise().then(|| self.pairwise_graph()).transpose()?,
        })
    }
}

/// Owned counterpart of [`GraphInputs`].
#[derive(Debug, Clone, Default)]
pub struct ModelGraphs {
    pub hypergraph: Option<Hypergraph>,
    pub pairwise: Option<PairwiseGraph>,
}

impl ModelGraphs {
    pub fn inputs(&self) -> GraphInputs<'_> {
        GraphInputs {
            hypergraph: self.hypergraph.as_ref(),
            pairwise: self.pairwise.as_ref(),
        }
    }
}

/// Per class, the `train_per_class` lowest-ranked vertices form the training
/// set; the next `val` unused vertices in rank order form the validation set
/// and the following `test` unused vertices the test set. Rank is the vertex
/// index, or its position in a seeded permutation when `seed` is given.
pub fn deterministic_split(
    labels: &[usize],
    n_classes: usize,
    sizes: SplitSizes,
    seed: Option<u64>,
) -> Result<Split> {
    let n = labels.len();
    let order: Vec<usize> = match seed {
        Some(s) => permutation(n, &mut rng::seeded(s)),
        None => (0..n).collect(),
    };
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::IndexOutOfRange {
                what: "label",
                index: l,
                bound: n_classes,
            });
        }
        counts[l] += 1;
    }
    if let Some((class, &available)) = counts
        .iter()
        .enumerate()
        .find(|&(_, &c)| c < sizes.train_per_class)
    {
        return Err(Error::SplitInfeasible {
            class,
            available,
            required: sizes.train_per_class,
        });
    }
    let mut taken = vec![false; n];
    let mut per_class = vec![0usize; n_classes];
    let mut train = Vec::with_capacity(n_classes * sizes.train_per_class);
    for &i in &order {
        if per_class[labels[i]] < sizes.train_per_class {
            per_class[labels[i]] += 1;
            taken[i] = true;
            train.push(i);
        }
    }
    let mut rest = order.iter().copied().filter(|&i| !taken[i]);
    let val: Vec<usize> = rest.by_ref().take(sizes.val).collect();
    let test: Vec<usize> = rest.take(sizes.test).collect();
    if val.len() < sizes.val || test.len() < sizes.test {
        return Err(Error::InvalidSplit(format!(
            "{n} vertices cannot hold {} train + {} val + {} test",
            train.len(),
            sizes.val,
            sizes.test
        )));
    }
    Ok(Split { train, val, test })
}

/// Scales every nonzero row to unit L1 norm; zero rows stay zero.
pub fn row_normalize(features: &DenseMatrix) -> DenseMatrix {
    let mut out = features.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let total: f64 = row.iter().map(|v| crate::math::abs(*v)).sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_normalize_examples() {
        let x = DenseMatrix::from_rows(&[&[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0], &[2.0, 0.0, 6.0]]);
        let y = row_normalize(&x);
        assert_eq!(y.row(0), &[0.5, 0.5, 0.0]);
        assert_eq!(y.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(y.row(2), &[0.25, 0.0, 0.75]);
    }

    #[test]
    fn split_picks_lowest_indices() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let sizes = SplitSizes {
            train_per_class: 2,
            val: 5,
            test: 10,
        };
        let s = deterministic_split(&labels, 3, sizes, None).unwrap();
        assert_eq!(s.train, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(s.val, vec![6, 7, 8, 9, 10]);
        assert_eq!(s.test, (11..21).collect::<Vec<_>>());
        s.validate(30).unwrap();
    }

    #[test]
    fn split_infeasible() {
        let mut labels = vec![0; 40];
        labels.extend(vec![1; 19]);
        let err = deterministic_split(&labels, 2, SplitSizes::default(), None).unwrap_err();
        assert_eq!(
            err,
            Error::SplitInfeasible {
                class: 1,
                available: 19,
                required: 20
            }
        );
    }

    #[test]
    fn seeded_split_is_reproducible_and_balanced() {
        let labels: Vec<usize> = (0..200).map(|i| (i * 7) % 4).collect();
        let sizes = SplitSizes {
            train_per_class: 5,
            val: 30,
            test: 60,
        };
        let a = deterministic_split(&labels, 4, sizes, Some(3)).unwrap();
        assert_eq!(a, deterministic_split(&labels, 4, sizes, Some(3)).unwrap());
        assert_ne!(a, deterministic_split(&labels, 4, sizes, None).unwrap());
        let mut per = [0; 4];
        a.train.iter().for_each(|&i| per[labels[i]] += 1);
        assert_eq!(per, [5; 4]);
        a.validate(200).unwrap();
    }

    #[test]
    fn split_validation_catches_overlap() {
        let s = Split {
            train: vec![0, 1],
            val: vec![1],
            test: vec![2],
        };
        assert!(matches!(s.validate(3), Err(Error::InvalidSplit(_))));
        let s = Split {
            train: vec![0],
            val: vec![1],
            test: vec![3],
        };
        assert!(s.validate(3).is_err());
    }
}
