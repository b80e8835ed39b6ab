//! Convolution and attention layers and the two-layer node classifier.
//!
//! Layer functions operate on tape variables so that they compose freely;
//! [`Model`] owns parameters and the fixed structural data and wires the
//! layers into the classifier for each [`Variant`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{IncidencePattern, Tape, Var};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, PairwiseGraph};
use crate::optim::glorot_init;
use crate::rng::{self, DropoutStreams, INIT_EPOCH};
use crate::sparse::SparseMatrix;
use crate::transition::{
    average_transitions, build_asymmetric_transition, build_gcn_transition_with,
    build_symmetric_transition, IsolatedVertices, Normalization, TransitionOperator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    GcnStar,
    HyperConv,
    GatStar,
    HyperAtten,
    GcnPlusHyperconv,
    GatPlusHyperatten,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::GcnStar,
        Variant::HyperConv,
        Variant::GatStar,
        Variant::HyperAtten,
        Variant::GcnPlusHyperconv,
        Variant::GatPlusHyperatten,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::GcnStar => "gcn_star",
            Variant::HyperConv => "hyper_conv",
            Variant::GatStar => "gat_star",
            Variant::HyperAtten => "hyper_atten",
            Variant::GcnPlusHyperconv => "gcn_plus_hyperconv",
            Variant::GatPlusHyperatten => "gat_plus_hyperatten",
        }
    }

    pub fn needs_hypergraph(self) -> bool {
        !matches!(self, Variant::GcnStar | Variant::GatStar)
    }

    pub fn needs_pairwise(self) -> bool {
        !matches!(self, Variant::HyperConv | Variant::HyperAtten)
    }

    pub fn uses_attention(self) -> bool {
        matches!(
            self,
            Variant::GatStar | Variant::HyperAtten | Variant::GatPlusHyperatten
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Heads in each hidden layer; the output layer always has one.
    pub heads: usize,
    pub hidden_per_head: usize,
    /// Number of layers including the output layer.
    pub depth: usize,
    /// Residual connection around each hidden layer.
    pub skip: bool,
    pub input_dropout: f64,
    pub attention_dropout: f64,
    pub leaky_slope: f64,
    /// Normalization of the fixed hypergraph operator in `hyper_conv`.
    pub conv_normalization: Normalization,
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            heads: 8,
            hidden_per_head: 8,
            depth: 2,
            skip: false,
            input_dropout: 0.6,
            attention_dropout: 0.6,
            leaky_slope: 0.2,
            conv_normalization: Normalization::Symmetric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.hidden_per_head == 0 || self.depth == 0 {
            return Err(Error::Config("heads, hidden width and depth must be positive".into()));
        }
        for (name, rate) in [
            ("input dropout", self.input_dropout),
            ("attention dropout", self.attention_dropout),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} {rate} not in [0, 1)")));
            }
        }
        if !(self.leaky_slope.is_finite()) {
            return Err(Error::Config("leaky slope must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Concat,
    Average,
}

/// Candidate set for attention: one score per structural nonzero `(i, k)`,
/// normalized over each row. Scores compare vertex `i` with the
/// representative vertex `targets[entry]` of column `k`.
#[derive(Debug, Clone)]
pub struct AttentionGraph {
    pattern: Arc<IncidencePattern>,
    rows: Arc<Vec<usize>>,
    targets: Arc<Vec<usize>>,
    segments: Arc<Vec<usize>>,
    /// Hyperedge weights when the graph feeds hypergraph propagation.
    edge_weights: Option<Arc<Vec<f64>>>,
}

impl AttentionGraph {
    /// Attention over incident hyperedges; each hyperedge is represented by
    /// its centroid vertex.
    pub fn from_hypergraph(hg: &Hypergraph) -> Result<Self> {
        let centroids = hg.centroids().ok_or_else(|| {
            Error::Config("hypergraph attention needs a centroid vertex per hyperedge".into())
        })?;
        let pattern = IncidencePattern::from_sparse(hg.incidence());
        let targets = pattern.entry_cols().iter().map(|&e| centroids[e]).collect();
        Ok(Self::assemble(pattern, targets, Some(hg.edge_weights().to_vec())))
    }

    /// Attention over graph neighbours plus the vertex itself.
    pub fn from_pairwise(g: &PairwiseGraph) -> Result<Self> {
        let with_self =
            g.adjacency()
                .linear_combination(1.0, &SparseMatrix::identity(g.n_vertices()), 1.0)?;
        let pattern = IncidencePattern::from_sparse(&with_self);
        let targets = pattern.entry_cols().to_vec();
        Ok(Self::assemble(pattern, targets, None))
    }

    fn assemble(pattern: IncidencePattern, targets: Vec<usize>, weights: Option<Vec<f64>>) -> Self {
        Self {
            rows: Arc::new(pattern.entry_rows().to_vec()),
            targets: Arc::new(targets),
            segments: Arc::new(pattern.row_offsets().to_vec()),
            pattern: Arc::new(pattern),
            edge_weights: weights.map(Arc::new),
        }
    }

    pub fn pattern(&self) -> &Arc<IncidencePattern> {
        &self.pattern
    }

    pub fn n_vertices(&self) -> usize {
        self.pattern.n_rows()
    }
}

/// `σ(T · X · P)` for a fixed operator `T`.
pub fn conv_forward(
    tape: &mut Tape,
    transition: &Arc<SparseMatrix>,
    x: Var,
    weight: Var,
    activation: Activation,
) -> Result<Var> {
    let xp = tape.matmul(x, weight)?;
    let out = tape.sparse_apply(transition, xp)?;
    Ok(activate(tape, out, activation))
}

pub fn activate(tape: &mut Tape, x: Var, activation: Activation) -> Var {
    match activation {
        Activation::Elu => tape.elu(x),
        Activation::None => x,
    }
}

/// Attention values over the structural nonzeros of `graph`:
/// `softmax_row(leaky(aᵀ[z_i ‖ z_target]))`, as an `nnz × 1` column.
/// `z` is the already projected `X · P`.
pub fn attention_incidence(
    tape: &mut Tape,
    graph: &AttentionGraph,
    z: Var,
    attention: Var,
    leaky_slope: f64,
) -> Result<Var> {
    let width = tape.value(z).cols();
    let shape = tape.value(attention).shape();
    if shape != (2 * width, 1) {
        return Err(Error::DimensionMismatch {
            op: "attention vector",
            expected: (2 * width, 1),
            got: shape,
        });
    }
    let a_self = tape.slice_rows(attention, 0, width)?;
    let a_other = tape.slice_rows(attention, width, width)?;
    let u = tape.matmul(z, a_self)?;
    let v = tape.matmul(z, a_other)?;
    let scores = tape.gather_sum(u, v, &graph.rows, &graph.targets)?;
    let scores = tape.leaky_relu(scores, leaky_slope);
    tape.segment_softmax(scores, &graph.segments)
}

/// One attention head. With hyperedge weights the attention values act as
/// a real-valued incidence matrix whose degrees are rebuilt and propagated
/// with row normalization; otherwise they weight neighbours directly.
pub fn attention_forward(
    tape: &mut Tape,
    graph: &AttentionGraph,
    x: Var,
    weight: Var,
    attention: Var,
    leaky_slope: f64,
    dropout: Option<(f64, &mut rng::Rng)>,
) -> Result<Var> {
    let z = tape.matmul(x, weight)?;
    attention_projected(tape, graph, z, attention, leaky_slope, dropout)
}

/// [`attention_forward`] on an already projected `z = X · P`.
pub fn attention_projected(
    tape: &mut Tape,
    graph: &AttentionGraph,
    z: Var,
    attention: Var,
    leaky_slope: f64,
    dropout: Option<(f64, &mut rng::Rng)>,
) -> Result<Var> {
    let mut values = attention_incidence(tape, graph, z, attention, leaky_slope)?;
    if let Some((rate, rng)) = dropout {
        values = tape.dropout(values, rate, true, rng)?;
    }
    match &graph.edge_weights {
        Some(w) => tape.incidence_propagate(values, &graph.pattern, w, z, Normalization::Asymmetric),
        None => tape.attention_apply(values, &graph.pattern, z),
    }
}

pub fn multi_head(tape: &mut Tape, heads: &[Var], aggregate: Aggregate) -> Result<Var> {
    match (heads, aggregate) {
        ([], _) => Err(Error::Config("multi-head block without heads".into())),
        ([one], _) => Ok(*one),
        (_, Aggregate::Concat) => tape.concat_cols(heads),
        (_, Aggregate::Average) => {
            let mut acc = heads[0];
            for &h in &heads[1..] {
                acc = tape.add(acc, h)?;
            }
            Ok(tape.scale(acc, 1.0 / heads.len() as f64))
        }
    }
}

/// `layer_out + x`; widths must match.
pub fn skip_wrap(tape: &mut Tape, layer_out: Var, x: Var) -> Result<Var> {
    let (a, b) = (tape.value(layer_out).shape(), tape.value(x).shape());
    if a != b {
        return Err(Error::DimensionMismatch {
            op: "skip connection",
            expected: a,
            got: b,
        });
    }
    tape.add(layer_out, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Attention,
    SkipProjection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone)]
enum Propagation {
    Fixed(Arc<SparseMatrix>),
    Attention(AttentionGraph),
    /// Mean of hypergraph attention and neighbour attention.
    CombinedAttention(AttentionGraph, AttentionGraph),
}

#[derive(Debug, Clone)]
struct Head {
    weight: usize,
    attention: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
enum Skip {
    Identity,
    Projection(usize),
}

#[derive(Debug, Clone)]
struct Layer {
    heads: Vec<Head>,
    activation: Activation,
    skip: Option<Skip>,
}

/// Structural inputs for [`build_model`]. Only the graphs the variant needs
/// have to be present.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphInputs<'a> {
    pub hypergraph: Option<&'a Hypergraph>,
    pub pairwise: Option<&'a PairwiseGraph>,
}

/// Multi-layer node classifier. Hidden layers are multi-head with ELU and
/// concatenated heads; the output layer is a single head producing class
/// logits.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    propagation: Propagation,
    layers: Vec<Layer>,
    params: Vec<DenseMatrix>,
    info: Vec<ParamInfo>,
    n_vertices: usize,
    n_features: usize,
    n_classes: usize,
}

fn fixed_operator(config: &ModelConfig, graphs: &GraphInputs<'_>) -> Result<TransitionOperator> {
    let hyper = |norm: Normalization| -> Result<TransitionOperator> {
        let hg = graphs
            .hypergraph
            .ok_or_else(|| Error::Config(format!("{} needs a hypergraph", config.variant)))?;
        let deg = hg.degrees()?;
        match norm {
            Normalization::Symmetric => build_symmetric_transition(hg, &deg),
            Normalization::Asymmetric => build_asymmetric_transition(hg, &deg),
        }
    };
    let gcn = || -> Result<TransitionOperator> {
        let g = graphs
            .pairwise
            .ok_or_else(|| Error::Config(format!("{} needs a pairwise graph", config.variant)))?;
        build_gcn_transition_with(g, IsolatedVertices::SelfLoop)
    };
    match config.variant {
        Variant::GcnStar => gcn(),
        Variant::HyperConv => hyper(config.conv_normalization),
        Variant::GcnPlusHyperconv => average_transitions(&hyper(Normalization::Symmetric)?, &gcn()?),
        _ => unreachable!("attention variants have no fixed operator"),
    }
}

fn propagation(config: &ModelConfig, graphs: &GraphInputs<'_>) -> Result<Propagation> {
    let hyper = || -> Result<AttentionGraph> {
        AttentionGraph::from_hypergraph(
            graphs
                .hypergraph
                .ok_or_else(|| Error::Config(format!("{} needs a hypergraph", config.variant)))?,
        )
    };
    let pair = || -> Result<AttentionGraph> {
        AttentionGraph::from_pairwise(
            graphs
                .pairwise
                .ok_or_else(|| Error::Config(format!("{} needs a pairwise graph", config.variant)))?,
        )
    };
    Ok(match config.variant {
        Variant::HyperAtten => Propagation::Attention(hyper()?),
        Variant::GatStar => Propagation::Attention(pair()?),
        Variant::GatPlusHyperatten => Propagation::CombinedAttention(hyper()?, pair()?),
        _ => Propagation::Fixed(Arc::new(fixed_operator(config, graphs)?.matrix)),
    })
}

/// Builds the classifier for `config.variant`, initializing every weight
/// from the seeded initialization stream.
pub fn build_model(
    config: ModelConfig,
    graphs: GraphInputs<'_>,
    n_features: usize,
    n_classes: usize,
    init_seed: u64,
) -> Result<Model> {
    config.validate()?;
    if n_features == 0 || n_classes == 0 {
        return Err(Error::Config("feature and class counts must be positive".into()));
    }
    let propagation = propagation(&config, &graphs)?;
    let n_vertices = match &propagation {
        Propagation::Fixed(t) => t.n_rows(),
        Propagation::Attention(g) => g.n_vertices(),
        Propagation::CombinedAttention(a, b) => {
            if a.n_vertices() != b.n_vertices() {
                return Err(Error::DimensionMismatch {
                    op: "combined attention graphs",
                    expected: (a.n_vertices(), a.n_vertices()),
                    got: (b.n_vertices(), b.n_vertices()),
                });
            }
            a.n_vertices()
        }
    };
    let attention_vectors = match &propagation {
        Propagation::Fixed(_) => 0,
        Propagation::Attention(_) => 1,
        Propagation::CombinedAttention(..) => 2,
    };

    let mut rng = rng::stream(init_seed, INIT_EPOCH, 0);
    let mut params = Vec::new();
    let mut info = Vec::new();
    let mut push = |m: DenseMatrix, name: String, kind: ParamKind| {
        params.push(m);
        info.push(ParamInfo { name, kind });
        params.len() - 1
    };

    let mut layers = Vec::with_capacity(config.depth);
    let mut width = n_features;
    for l in 0..config.depth {
        let output = l + 1 == config.depth;
        let (n_heads, per_head) = if output {
            (1, n_classes)
        } else {
            (config.heads, config.hidden_per_head)
        };
        let mut heads = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let weight = push(
                glorot_init(width, per_head, &mut rng),
                format!("layer{l}.head{h}.weight"),
                ParamKind::Weight,
            );
            let attention = (0..attention_vectors)
                .map(|k| {
                    push(
                        glorot_init(2 * per_head, 1, &mut rng),
                        format!("layer{l}.head{h}.attention{k}"),
                        ParamKind::Attention,
                    )
                })
                .collect();
            heads.push(Head { weight, attention });
        }
        let out_width = n_heads * per_head;
        let skip = (config.skip && !output).then(|| {
            if out_width == width {
                Skip::Identity
            } else {
                Skip::Projection(push(
                    glorot_init(width, out_width, &mut rng),
                    format!("layer{l}.skip"),
                    ParamKind::SkipProjection,
                ))
            }
        });
        layers.push(Layer {
            heads,
            activation: if output { Activation::None } else { Activation::Elu },
            skip,
        });
        width = out_width;
    }

    Ok(Model {
        config,
        propagation,
        layers,
        params,
        info,
        n_vertices,
        n_features,
        n_classes,
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> &[DenseMatrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<DenseMatrix>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                op: "set_params",
                expected: (self.params.len(), 1),
                got: (params.len(), 1),
            });
        }
        for (new, old) in params.iter().zip(&self.params) {
            if new.shape() != old.shape() {
                return Err(Error::DimensionMismatch {
                    op: "set_params",
                    expected: old.shape(),
                    got: new.shape(),
                });
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn param_info(&self) -> &[ParamInfo] {
        &self.info
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.rows() * p.cols()).sum()
    }

    /// Registers every parameter on `tape`, in storage order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Logits for every vertex. Dropout is active iff `dropout` is given;
    /// each dropout site draws the next stream from it.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        features: Var,
        mut dropout: Option<&mut DropoutStreams>,
    ) -> Result<Var> {
        let shape = tape.value(features).shape();
        if shape != (self.n_vertices, self.n_features) {
            return Err(Error::DimensionMismatch {
                op: "model input",
                expected: (self.n_vertices, self.n_features),
                got: shape,
            });
        }
        let training = dropout.is_some();
        let mut x = features;
        for layer in &self.layers {
            let input = x;
            let dropped = match dropout.as_deref_mut() {
                Some(streams) => {
                    tape.dropout(input, self.config.input_dropout, training, &mut streams.next())?
                }
                None => input,
            };
            // All heads share one product with the concatenated weights.
            let weights: Vec<Var> = layer.heads.iter().map(|h| params[h.weight]).collect();
            let projected = match weights.as_slice() {
                [w] => tape.matmul(dropped, *w)?,
                ws => {
                    let all = tape.concat_cols(ws)?;
                    tape.matmul(dropped, all)?
                }
            };
            let combined = match &self.propagation {
                Propagation::Fixed(t) => tape.sparse_apply(t, projected)?,
                _ => {
                    let width = tape.value(projected).cols() / layer.heads.len();
                    let mut outs = Vec::with_capacity(layer.heads.len());
                    for (h, head) in layer.heads.iter().enumerate() {
                        let z = match layer.heads.len() {
                            1 => projected,
                            _ => tape.slice_cols(projected, h * width, width)?,
                        };
                        outs.push(self.head_forward(tape, params, head, z, dropout.as_deref_mut())?);
                    }
                    multi_head(tape, &outs, Aggregate::Concat)?
                }
            };
            let activated = activate(tape, combined, layer.activation);
            x = match layer.skip {
                None => activated,
                Some(Skip::Identity) => skip_wrap(tape, activated, input)?,
                Some(Skip::Projection(k)) => {
                    let projected = tape.matmul(input, params[k])?;
                    skip_wrap(tape, activated, projected)?
                }
            };
        }
        Ok(x)
    }

    /// One attention head on its projected input `z`.
    fn head_forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        head: &Head,
        z: Var,
        mut dropout: Option<&mut DropoutStreams>,
    ) -> Result<Var> {
        let rate = self.config.attention_dropout;
        let slope = self.config.leaky_slope;
        let mut attend = |tape: &mut Tape, graph: &AttentionGraph, a: Var| -> Result<Var> {
            match dropout.as_deref_mut() {
                Some(streams) => {
                    let mut rng = streams.next();
                    attention_projected(tape, graph, z, a, slope, Some((rate, &mut rng)))
                }
                None => attention_projected(tape, graph, z, a, slope, None),
            }
        };
        match &self.propagation {
            Propagation::Attention(g) => attend(tape, g, params[head.attention[0]]),
            Propagation::CombinedAttention(hyper, pair) => {
                let a = attend(tape, hyper, params[head.attention[0]])?;
                let b = attend(tape, pair, params[head.attention[1]])?;
                let sum = tape.add(a, b)?;
                Ok(tape.scale(sum, 0.5))
            }
            Propagation::Fixed(_) => unreachable!("fixed operators are applied per layer"),
        }
    }

    /// Evaluation-mode logits.
    pub fn predict(&self, features: &Arc<DenseMatrix>) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let x = tape.constant_shared(Arc::clone(features));
        let out = self.forward(&mut tape, &params, x, None)?;
        Ok(tape.value(out).clone())
    }

    /// Short description such as `hyper_conv 2x[8x8]`.
    pub fn describe(&self) -> String {
        let mut s = self.config.variant.name().to_string();
        s.push_str(&format!(
            " depth={} heads={} hidden={} params={}",
            self.config.depth,
            self.config.heads,
            self.config.hidden_per_head,
            self.parameter_count()
        ));
        s
    }
}
