//! Hypergraphs, pairwise graphs, degrees and the constructions used to turn
//! citation links and attribute occurrences into structure.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// A hypergraph given by its N×M incidence matrix and per-hyperedge weights.
///
/// Every stored incidence entry is positive, every vertex lies in at least
/// one hyperedge and every hyperedge holds at least one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    incidence: SparseMatrix,
    edge_weights: Vec<f64>,
    /// Vertex standing in for each hyperedge when hyperedges and vertices
    /// share a domain (the centroid construction). Needed by attention.
    centroids: Option<Vec<usize>>,
}

/// Diagonals of the vertex degree matrix `D` and hyperedge degree matrix `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreePair {
    pub vertex_degrees: Vec<f64>,
    pub edge_degrees: Vec<f64>,
}

/// Simple undirected graph with a binary symmetric adjacency and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseGraph {
    adjacency: SparseMatrix,
}

/// Result of connecting every pair of vertices that share an attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueExpansion {
    pub graph: PairwiseGraph,
    /// Vertices without any attribute, left without neighbours.
    pub isolated_vertices: usize,
}

impl Hypergraph {
    pub fn new(incidence: SparseMatrix, edge_weights: Vec<f64>) -> Result<Self> {
        if edge_weights.len() != incidence.n_cols() {
            return Err(Error::DimensionMismatch {
                op: "Hypergraph::new",
                expected: (incidence.n_cols(), 1),
                got: (edge_weights.len(), 1),
            });
        }
        if incidence.n_cols() == 0 {
            return Err(Error::EmptyHypergraph);
        }
        for (e, &w) in edge_weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidWeight(e));
            }
        }
        let mut col_count = vec![0usize; incidence.n_cols()];
        for i in 0..incidence.n_rows() {
            let (cols, vals) = incidence.row(i);
            if cols.is_empty() {
                return Err(Error::ZeroDegree {
                    what: "vertex",
                    index: i,
                });
            }
            for (&c, &v) in cols.iter().zip(vals) {
                if !(v > 0.0) {
                    return Err(Error::InvalidIncidence { row: i, col: c });
                }
                col_count[c] += 1;
            }
        }
        if let Some(e) = col_count.iter().position(|&c| c == 0) {
            return Err(Error::ZeroDegree {
                what: "hyperedge",
                index: e,
            });
        }
        Ok(Self {
            incidence,
            edge_weights,
            centroids: None,
        })
    }

    /// Unit-weight hypergraph from vertex lists, one list per hyperedge.
    pub fn from_hyperedges(n_vertices: usize, hyperedges: &[Vec<usize>]) -> Result<Self> {
        let mut triplets = Vec::new();
        for (e, members) in hyperedges.iter().enumerate() {
            let mut members = members.clone();
            members.sort_unstable();
            members.dedup();
            triplets.extend(members.into_iter().map(|v| (v, e, 1.0)));
        }
        let incidence = SparseMatrix::from_triplets(n_vertices, hyperedges.len(), &triplets)?;
        Self::new(incidence, vec![1.0; hyperedges.len()])
    }

    /// Attaches a representative vertex to every hyperedge.
    pub fn with_centroids(mut self, centroids: Vec<usize>) -> Result<Self> {
        if centroids.len() != self.n_hyperedges() {
            return Err(Error::DimensionMismatch {
                op: "with_centroids",
                expected: (self.n_hyperedges(), 1),
                got: (centroids.len(), 1),
            });
        }
        if let Some(&c) = centroids.iter().find(|&&c| c >= self.n_vertices()) {
            return Err(Error::IndexOutOfRange {
                what: "centroid",
                index: c,
                bound: self.n_vertices(),
            });
        }
        self.centroids = Some(centroids);
        Ok(self)
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.incidence.n_rows()
    }

    #[inline]
    pub fn n_hyperedges(&self) -> usize {
        self.incidence.n_cols()
    }

    pub fn incidence(&self) -> &SparseMatrix {
        &self.incidence
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    pub fn centroids(&self) -> Option<&[usize]> {
        self.centroids.as_deref()
    }

    pub fn degrees(&self) -> Result<DegreePair> {
        compute_degrees(&self.incidence, &self.edge_weights)
    }

    /// Vertices of hyperedge `e`, ascending.
    pub fn members(&self, e: usize) -> Vec<usize> {
        self.incidence
            .iter()
            .filter(|&(_, c, _)| c == e)
            .map(|(r, _, _)| r)
            .collect()
    }
}

/// `D_ii = Σ_ε W_ε H_iε` and `B_εε = Σ_i H_iε` for any nonnegative incidence,
/// including real-valued attention incidences.
pub fn compute_degrees(incidence: &SparseMatrix, edge_weights: &[f64]) -> Result<DegreePair> {
    if edge_weights.len() != incidence.n_cols() {
        return Err(Error::DimensionMismatch {
            op: "compute_degrees",
            expected: (incidence.n_cols(), 1),
            got: (edge_weights.len(), 1),
        });
    }
    let mut vertex_degrees = vec![0.0; incidence.n_rows()];
    let mut edge_degrees = vec![0.0; incidence.n_cols()];
    for (i, e, h) in incidence.iter() {
        vertex_degrees[i] += edge_weights[e] * h;
        edge_degrees[e] += h;
    }
    if let Some(i) = vertex_degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree {
            what: "vertex",
            index: i,
        });
    }
    if let Some(e) = edge_degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree {
            what: "hyperedge",
            index: e,
        });
    }
    Ok(DegreePair {
        vertex_degrees,
        edge_degrees,
    })
}

/// One hyperedge per article: the article itself plus every article citing
/// it or cited by it. Link direction and duplicates are discarded, so an
/// article without links ends up in a singleton hyperedge.
pub fn from_citation_network(
    citation_links: &[(usize, usize)],
    n_vertices: usize,
) -> Result<Hypergraph> {
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n_vertices + 2 * citation_links.len());
    pairs.extend((0..n_vertices).map(|v| (v, v)));
    for &(a, b) in citation_links {
        for v in [a, b] {
            if v >= n_vertices {
                return Err(Error::IndexOutOfRange {
                    what: "vertex",
                    index: v,
                    bound: n_vertices,
                });
            }
        }
        pairs.push((a, b));
        pairs.push((b, a));
    }
    pairs.sort_unstable();
    pairs.dedup();
    let triplets: Vec<_> = pairs.into_iter().map(|(v, e)| (v, e, 1.0)).collect();
    let incidence = SparseMatrix::from_triplets(n_vertices, n_vertices, &triplets)?;
    Hypergraph::new(incidence, vec![1.0; n_vertices])?.with_centroids((0..n_vertices).collect())
}

fn check_binary(occurrence: &SparseMatrix) -> Result<()> {
    for (i, j, v) in occurrence.iter() {
        if v != 1.0 {
            return Err(Error::InvalidIncidence { row: i, col: j });
        }
    }
    Ok(())
}

/// One hyperedge per attribute shared by at least two vertices. Vertices
/// left uncovered get a singleton hyperedge of their own, appended after the
/// attribute hyperedges, so that every vertex degree stays positive.
pub fn from_attribute_occurrence(occurrence: &SparseMatrix) -> Result<Hypergraph> {
    check_binary(occurrence)?;
    let counts = occurrence.col_sums();
    let mut new_index = vec![usize::MAX; occurrence.n_cols()];
    let mut kept = 0;
    for (j, &c) in counts.iter().enumerate() {
        if c >= 2.0 {
            new_index[j] = kept;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::EmptyHypergraph);
    }
    let mut triplets = Vec::with_capacity(occurrence.nnz());
    let mut covered = vec![false; occurrence.n_rows()];
    for (i, j, _) in occurrence.iter() {
        if new_index[j] != usize::MAX {
            triplets.push((i, new_index[j], 1.0));
            covered[i] = true;
        }
    }
    let mut m = kept;
    for (i, _) in covered.iter().enumerate().filter(|(_, &c)| !c) {
        triplets.push((i, m, 1.0));
        m += 1;
    }
    let incidence = SparseMatrix::from_triplets(occurrence.n_rows(), m, &triplets)?;
    Hypergraph::new(incidence, vec![1.0; m])
}

/// Connects two vertices whenever they share at least one attribute.
pub fn clique_graph_from_occurrence(occurrence: &SparseMatrix) -> Result<CliqueExpansion> {
    check_binary(occurrence)?;
    let shared = occurrence.matmul_sparse(&occurrence.transpose())?;
    let adjacency = shared.map_entries(|i, j, _| if i == j { 0.0 } else { 1.0 });
    let isolated_vertices = (0..occurrence.n_rows())
        .filter(|&i| occurrence.row(i).0.is_empty())
        .count();
    Ok(CliqueExpansion {
        graph: PairwiseGraph::new(adjacency)?,
        isolated_vertices,
    })
}

/// Every undirected edge becomes a two-vertex hyperedge with unit weight, so
/// `B = 2I`. Hyperedges are ordered by `(min, max)` endpoint.
pub fn pairwise_to_hypergraph(g: &PairwiseGraph) -> Result<Hypergraph> {
    let edges = g.edges();
    if edges.is_empty() {
        return Err(Error::EmptyHypergraph);
    }
    let mut triplets = Vec::with_capacity(2 * edges.len());
    for (e, &(a, b)) in edges.iter().enumerate() {
        triplets.push((a, e, 1.0));
        triplets.push((b, e, 1.0));
    }
    let incidence = SparseMatrix::from_triplets(g.n_vertices(), edges.len(), &triplets)?;
    Hypergraph::new(incidence, vec![1.0; edges.len()])
}

impl PairwiseGraph {
    pub fn new(adjacency: SparseMatrix) -> Result<Self> {
        if adjacency.n_rows() != adjacency.n_cols() {
            return Err(Error::InvalidAdjacency("not square"));
        }
        for (i, j, v) in adjacency.iter() {
            if i == j {
                return Err(Error::InvalidAdjacency("self-loop"));
            }
            if v != 1.0 {
                return Err(Error::InvalidAdjacency("non-binary entry"));
            }
            if adjacency.get(j, i) != 1.0 {
                return Err(Error::InvalidAdjacency("asymmetric"));
            }
        }
        Ok(Self { adjacency })
    }

    /// Undirected graph from an edge list. Direction, duplicates and
    /// self-loops are discarded.
    pub fn from_edges(n_vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(2 * edges.len());
        for &(a, b) in edges {
            for v in [a, b] {
                if v >= n_vertices {
                    return Err(Error::IndexOutOfRange {
                        what: "vertex",
                        index: v,
                        bound: n_vertices,
                    });
                }
            }
            if a != b {
                triplets.push((a, b, 1.0));
                triplets.push((b, a, 1.0));
            }
        }
        triplets.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        triplets.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
        Ok(Self {
            adjacency: SparseMatrix::from_triplets(n_vertices, n_vertices, &triplets)?,
        })
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.adjacency.n_rows()
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, _)| (i, j))
            .collect()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_sums()
    }

    pub fn isolated_vertices(&self) -> usize {
        (0..self.n_vertices())
            .filter(|&i| self.adjacency.row(i).0.is_empty())
            .count()
    }
}
