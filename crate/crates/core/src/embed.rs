//! GraphSAGE-style encoder with mean aggregation, edge combinators, and
//! min-max scaling of embeddings into the unit cube.
//!
//! Layer `l` computes `h_v = act(W_self^T h_v' + W_neigh^T mean(h_u') + b)` where
//! `h'` are the layer `l-1` outputs computed over recursively sampled
//! neighborhoods of fanout `r`. Hidden layers use ReLU; the output layer is
//! linear. Weight matrices are stored input-major (`rows = in_dim`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureProvider, NodeIdx, SparseFeatures, TemporalGraph};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `W v` for a column-space vector `v` of length `cols`, yielding `rows` values.
    fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub w_self: Matrix,
    pub w_neigh: Matrix,
    pub bias: Vec<f64>,
}

impl SageLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        SageLayer {
            w_self: Matrix::zeros(in_dim, out_dim),
            w_neigh: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_self.rows
    }

    pub fn out_dim(&self) -> usize {
        self.w_self.cols
    }

    pub(crate) fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        // fan-in counts the concatenated [self ; neighbor] input.
        let limit = (6.0 / (2 * in_dim + out_dim) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-limit..limit)).collect()
        };
        SageLayer {
            w_self: Matrix {
                rows: in_dim,
                cols: out_dim,
                data: draw(in_dim * out_dim),
            },
            w_neigh: Matrix {
                rows: in_dim,
                cols: out_dim,
                data: draw(in_dim * out_dim),
            },
            bias: vec![0.0; out_dim],
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w_self
            .data
            .iter()
            .chain(&self.w_neigh.data)
            .chain(&self.bias)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_self
            .data
            .iter_mut()
            .chain(&mut self.w_neigh.data)
            .chain(&mut self.bias)
    }
}

/// How source and destination embeddings form an edge embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeCombinator {
    /// `(h_s + h_d) / 2`
    Mean,
    /// `h_d - h_s`
    #[default]
    Difference,
}

impl EdgeCombinator {
    pub fn combine(self, h_s: &[f64], h_d: &[f64]) -> Result<Vec<f64>> {
        if h_s.len() != h_d.len() {
            return Err(Error::DimensionMismatch {
                expected: h_s.len(),
                got: h_d.len(),
            });
        }
        Ok(match self {
            EdgeCombinator::Mean => h_s.iter().zip(h_d).map(|(a, b)| (a + b) / 2.0).collect(),
            EdgeCombinator::Difference => h_s.iter().zip(h_d).map(|(a, b)| b - a).collect(),
        })
    }
}

impl std::str::FromStr for EdgeCombinator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(EdgeCombinator::Mean),
            "difference" | "diff" => Ok(EdgeCombinator::Difference),
            other => Err(format!("unknown combinator `{other}` (mean|difference)")),
        }
    }
}

/// Per-dimension min-max statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a>(dim: usize, points: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut seen = false;
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            seen = true;
            for j in 0..dim {
                min[j] = min[j].min(p[j]);
                max[j] = max[j].max(p[j]);
            }
        }
        if !seen {
            return Err(Error::Precondition("cannot fit a scaler on zero points".into()));
        }
        Ok(Scaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps into `[0,1]^d`, clamping out-of-range values; a dimension whose
    /// fitted range is empty maps to 0.5.
    pub fn scale(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((x - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }
}

/// Rejects a serialized object whose `format_version` differs from `expected`
/// before attempting a full decode.
pub(crate) fn check_version(value: &serde_json::Value, kind: &'static str, expected: u32) -> Result<()> {
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Precondition(format!("{kind} file has no format_version")))?;
    if found != expected as u64 {
        return Err(Error::Version {
            kind,
            found: found.min(u32::MAX as u64) as u32,
            expected,
        });
    }
    Ok(())
}

/// Architecture of the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of layers (κ).
    pub layers: usize,
    pub hidden_dim: usize,
    /// Output embedding dimension (d).
    pub embed_dim: usize,
    /// Neighbors sampled per node per layer (r).
    pub fanout: usize,
    pub combinator: EdgeCombinator,
    pub features: FeatureProvider,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            hidden_dim: 16,
            embed_dim: 8,
            fanout: 8,
            combinator: EdgeCombinator::Difference,
            features: FeatureProvider::IdentityHash {
                dim: 256,
                seed: 0,
                probes: 2,
            },
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.layers) {
            return Err(Error::Config(format!(
                "layers must be in 1..=6, got {}",
                self.layers
            )));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 || self.fanout == 0 {
            return Err(Error::Config(
                "hidden_dim, embed_dim and fanout must be >= 1".into(),
            ));
        }
        self.features.validate()
    }
}

/// Trained encoder plus the scaling statistics used to place embeddings in
/// the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub format_version: u32,
    pub config: EncoderConfig,
    pub layers: Vec<SageLayer>,
    pub node_scaler: Option<Scaler>,
    pub edge_scaler: Option<Scaler>,
    pub seed: u64,
    pub trained: bool,
}

impl EncoderModel {
    /// Randomly initialized (untrained) model.
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, seed: u64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        let mut in_dim = config.features.dim();
        for l in 0..config.layers {
            let out = if l + 1 == config.layers {
                config.embed_dim
            } else {
                config.hidden_dim
            };
            layers.push(SageLayer::glorot(in_dim, out, rng));
            in_dim = out;
        }
        Ok(EncoderModel {
            format_version: MODEL_FORMAT_VERSION,
            config,
            layers,
            node_scaler: None,
            edge_scaler: None,
            seed,
            trained: false,
        })
    }

    /// Builds a model from explicit layers (no training).
    pub fn from_layers(config: EncoderConfig, layers: Vec<SageLayer>) -> Result<Self> {
        let model = EncoderModel {
            format_version: MODEL_FORMAT_VERSION,
            config,
            layers,
            node_scaler: None,
            edge_scaler: None,
            seed: 0,
            trained: true,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                kind: "model",
                found: self.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        self.config.validate()?;
        if self.layers.len() != self.config.layers {
            return Err(Error::Config(format!(
                "model declares {} layers but stores {}",
                self.config.layers,
                self.layers.len()
            )));
        }
        let mut in_dim = self.config.features.dim();
        for (l, layer) in self.layers.iter().enumerate() {
            let out = layer.out_dim();
            let shapes_ok = layer.w_self.rows == in_dim
                && layer.w_neigh.rows == in_dim
                && layer.w_neigh.cols == out
                && layer.bias.len() == out
                && layer.w_self.data.len() == in_dim * out
                && layer.w_neigh.data.len() == in_dim * out;
            if !shapes_ok {
                return Err(Error::Config(format!("layer {l} has inconsistent shapes")));
            }
            if layer.params().any(|w| !w.is_finite()) {
                return Err(Error::Config(format!("layer {l} has non-finite weights")));
            }
            in_dim = out;
        }
        if in_dim != self.config.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.embed_dim,
                got: in_dim,
            });
        }
        for s in self.node_scaler.iter().chain(&self.edge_scaler) {
            if s.dim() != self.config.embed_dim || s.min.len() != s.max.len() {
                return Err(Error::Config("scaler dimension mismatch".into()));
            }
            if s.min.iter().zip(&s.max).any(|(lo, hi)| lo > hi) {
                return Err(Error::Config("scaler has min > max".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        check_version(&value, "model", MODEL_FORMAT_VERSION)?;
        let model: EncoderModel = serde_json::from_value(value)?;
        model.validate()?;
        Ok(model)
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params().count()).sum()
    }

    /// Embedding `h_v` of a node in the current graph. Unknown nodes are
    /// embedded from their features with an empty neighborhood.
    pub fn embed_node<R: Rng + ?Sized>(
        &self,
        graph: &TemporalGraph,
        node: &str,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let trace = self.forward(graph, NodeRef::by_name(graph, node), self.depth(), rng)?;
        Ok(trace.into_output())
    }

    pub fn embed_idx<R: Rng + ?Sized>(
        &self,
        graph: &TemporalGraph,
        idx: NodeIdx,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let trace = self.forward(graph, NodeRef::Known(idx), self.depth(), rng)?;
        Ok(trace.into_output())
    }

    pub fn combine(&self, h_s: &[f64], h_d: &[f64]) -> Result<Vec<f64>> {
        self.config.combinator.combine(h_s, h_d)
    }

    pub fn scale_node(&self, v: &[f64]) -> Result<Vec<f64>> {
        let s = self
            .node_scaler
            .as_ref()
            .ok_or_else(|| Error::Precondition("node scaler not fitted".into()))?;
        check_dim(s.dim(), v.len())?;
        Ok(s.scale(v))
    }

    pub fn scale_edge(&self, v: &[f64]) -> Result<Vec<f64>> {
        let s = self
            .edge_scaler
            .as_ref()
            .ok_or_else(|| Error::Precondition("edge scaler not fitted".into()))?;
        check_dim(s.dim(), v.len())?;
        Ok(s.scale(v))
    }

    /// Recursively samples the computation tree of `node` down to the feature
    /// level and evaluates it, keeping intermediates for backpropagation.
    pub(crate) fn forward<R: Rng + ?Sized>(
        &self,
        graph: &TemporalGraph,
        node: NodeRef<'_>,
        level: usize,
        rng: &mut R,
    ) -> Result<Trace> {
        if level == 0 {
            let feats = self.config.features.sparse_features(node.name(graph))?;
            return Ok(Trace::leaf(feats));
        }
        let layer = &self.layers[level - 1];
        let self_child = self.forward(graph, node, level - 1, rng)?;
        let sampled = match node.idx() {
            Some(idx) => graph.sample_neighbors(idx, self.config.fanout, rng),
            None => Vec::new(),
        };
        let mut nbrs = Vec::with_capacity(sampled.len());
        for u in sampled {
            nbrs.push(self.forward(graph, NodeRef::Known(u), level - 1, rng)?);
        }
        let nbr_mean = Repr::mean(nbrs.iter().map(|t| &t.out), layer.in_dim());

        let mut pre = layer.bias.clone();
        self_child.out.acc_matvec(&layer.w_self, &mut pre);
        nbr_mean.acc_matvec(&layer.w_neigh, &mut pre);
        let out = if level < self.depth() {
            pre.iter().map(|&x| x.max(0.0)).collect()
        } else {
            pre.clone()
        };
        Ok(Trace {
            level,
            out: Repr::Dense(out),
            pre,
            self_child: Some(Box::new(self_child)),
            nbrs,
            nbr_mean,
        })
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum NodeRef<'a> {
    Known(NodeIdx),
    Unknown(&'a str),
}

impl<'a> NodeRef<'a> {
    pub(crate) fn by_name(graph: &TemporalGraph, name: &'a str) -> Self {
        match graph.index_of(name) {
            Some(idx) => NodeRef::Known(idx),
            None => NodeRef::Unknown(name),
        }
    }

    fn idx(self) -> Option<NodeIdx> {
        match self {
            NodeRef::Known(i) => Some(i),
            NodeRef::Unknown(_) => None,
        }
    }

    fn name<'g>(self, graph: &'g TemporalGraph) -> &'g str
    where
        'a: 'g,
    {
        match self {
            NodeRef::Known(i) => graph.name(i),
            NodeRef::Unknown(n) => n,
        }
    }
}

/// Layer input representation: sparse at the feature level, dense above.
#[derive(Clone, Debug)]
pub(crate) enum Repr {
    Sparse(SparseFeatures),
    Dense(Vec<f64>),
}

impl Repr {
    fn mean<'a>(items: impl ExactSizeIterator<Item = &'a Repr>, dim: usize) -> Repr {
        let n = items.len();
        if n == 0 {
            return Repr::Sparse(Vec::new());
        }
        let inv = 1.0 / n as f64;
        let items: Vec<&Repr> = items.collect();
        if items.iter().all(|r| matches!(r, Repr::Sparse(_))) {
            let mut acc: SparseFeatures = Vec::new();
            for r in &items {
                if let Repr::Sparse(s) = r {
                    acc.extend_from_slice(s);
                }
            }
            acc.sort_unstable_by_key(|&(i, _)| i);
            let mut merged: SparseFeatures = Vec::with_capacity(acc.len());
            for (i, v) in acc {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += v,
                    _ => merged.push((i, v)),
                }
            }
            for e in &mut merged {
                e.1 *= inv;
            }
            return Repr::Sparse(merged);
        }
        let mut dense = vec![0.0; dim];
        for r in items {
            match r {
                Repr::Dense(v) => dense.iter_mut().zip(v).for_each(|(a, b)| *a += b),
                Repr::Sparse(s) => s.iter().for_each(|&(i, v)| dense[i as usize] += v),
            }
        }
        dense.iter_mut().for_each(|x| *x *= inv);
        Repr::Dense(dense)
    }

    /// `out += W^T x` with `W` stored input-major.
    #[inline]
    fn acc_matvec(&self, w: &Matrix, out: &mut [f64]) {
        let mut axpy = |i: usize, x: f64| {
            if x != 0.0 {
                for (o, wij) in out.iter_mut().zip(w.row(i)) {
                    *o += x * wij;
                }
            }
        };
        match self {
            Repr::Sparse(s) => s.iter().for_each(|&(i, v)| axpy(i as usize, v)),
            Repr::Dense(v) => v.iter().enumerate().for_each(|(i, &x)| axpy(i, x)),
        }
    }

    /// `dW += x g^T`.
    #[inline]
    fn acc_outer(&self, grad: &[f64], dw: &mut Matrix) {
        let cols = dw.cols;
        let mut row = |i: usize, x: f64| {
            if x != 0.0 {
                for (d, g) in dw.data[i * cols..(i + 1) * cols].iter_mut().zip(grad) {
                    *d += x * g;
                }
            }
        };
        match self {
            Repr::Sparse(s) => s.iter().for_each(|&(i, v)| row(i as usize, v)),
            Repr::Dense(v) => v.iter().enumerate().for_each(|(i, &x)| row(i, x)),
        }
    }
}

/// Evaluated computation tree of one node at one level.
#[derive(Clone, Debug)]
pub(crate) struct Trace {
    level: usize,
    out: Repr,
    pre: Vec<f64>,
    self_child: Option<Box<Trace>>,
    nbrs: Vec<Trace>,
    nbr_mean: Repr,
}

impl Trace {
    fn leaf(feats: SparseFeatures) -> Self {
        Trace {
            level: 0,
            out: Repr::Sparse(feats),
            pre: Vec::new(),
            self_child: None,
            nbrs: Vec::new(),
            nbr_mean: Repr::Sparse(Vec::new()),
        }
    }

    pub(crate) fn output(&self) -> &[f64] {
        match &self.out {
            Repr::Dense(v) => v,
            Repr::Sparse(_) => unreachable!("level-0 trace has no embedding output"),
        }
    }

    fn into_output(self) -> Vec<f64> {
        match self.out {
            Repr::Dense(v) => v,
            Repr::Sparse(_) => unreachable!("level-0 trace has no embedding output"),
        }
    }

    /// Accumulates `dLoss/dθ` into `grads` given `dLoss/d(output)`.
    pub(crate) fn backward(&self, model: &EncoderModel, grad_out: &[f64], grads: &mut [SageLayer]) {
        if self.level == 0 {
            return;
        }
        let l = self.level - 1;
        let layer = &model.layers[l];
        let g_pre: Vec<f64> = if self.level < model.depth() {
            grad_out
                .iter()
                .zip(&self.pre)
                .map(|(g, &p)| if p > 0.0 { *g } else { 0.0 })
                .collect()
        } else {
            grad_out.to_vec()
        };
        let self_child = self.self_child.as_ref().expect("internal trace");
        let g = &mut grads[l];
        self_child.out.acc_outer(&g_pre, &mut g.w_self);
        self.nbr_mean.acc_outer(&g_pre, &mut g.w_neigh);
        g.bias.iter_mut().zip(&g_pre).for_each(|(b, x)| *b += x);

        if l == 0 {
            return;
        }
        let g_self = layer.w_self.mul_vec(&g_pre);
        self_child.backward(model, &g_self, grads);
        if !self.nbrs.is_empty() {
            let inv = 1.0 / self.nbrs.len() as f64;
            let g_nbr: Vec<f64> = layer.w_neigh.mul_vec(&g_pre).iter().map(|x| x * inv).collect();
            for n in &self.nbrs {
                n.backward(model, &g_nbr, grads);
            }
        }
    }
}
