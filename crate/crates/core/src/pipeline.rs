//! Per-edge streaming loop: update the graph, consult the cache, embed both
//! endpoints, score against the node and edge forests, and optionally feed
//! the forests.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cache::{CachePolicy, ScoreCache};
use crate::embed::EncoderModel;
use crate::error::{Error, Result};
use crate::graph::{NodeIdx, TemporalEdge, TemporalGraph};
use crate::hst::{ForestParams, HalfSpaceForest, Mode};
use crate::rng;

/// Convex weights of the source, destination and edge terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub source: f64,
    pub destination: f64,
    pub edge: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            source: 0.0,
            destination: 0.0,
            edge: 1.0,
        }
    }
}

impl Weights {
    /// Rescales non-negative weights to sum to one.
    pub fn normalized(source: f64, destination: f64, edge: f64) -> Result<Self> {
        let all = [source, destination, edge];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be finite and non-negative".into()));
        }
        let sum: f64 = all.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Config("weights must not all be zero".into()));
        }
        Ok(Weights {
            source: source / sum,
            destination: destination / sum,
            edge: edge / sum,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let w = Weights::normalized(self.source, self.destination, self.edge)?;
        let sum = self.source + self.destination + self.edge;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("weights sum to {sum}, expected 1")));
        }
        debug_assert!(w.edge >= 0.0);
        Ok(())
    }

    pub fn combine(&self, terms: Components) -> f64 {
        self.source * terms.source + self.destination * terms.destination + self.edge * terms.edge
    }
}

impl std::str::FromStr for Weights {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad weight `{p}`: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        if parts.len() != 3 {
            return Err("expected three comma-separated weights".into());
        }
        Weights::normalized(parts[0], parts[1], parts[2]).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub weights: Weights,
    pub cache_size: usize,
    pub cache_policy: CachePolicy,
    pub mode: Mode,
    pub forest: ForestParams,
    /// Seeds neighbor sampling and forest construction.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            weights: Weights::default(),
            cache_size: 64,
            cache_policy: CachePolicy::Fifo,
            mode: Mode::Static,
            forest: ForestParams::default(),
            seed: 0,
        }
    }
}

/// Per-edge score terms, each in `[0,1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub source: f64,
    pub destination: f64,
    pub edge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub seq: usize,
    pub edge: TemporalEdge,
    pub score: f64,
    pub components: Components,
    pub cache_hit: bool,
}

pub const SCORE_HEADER: &str =
    "# seq,source,destination,timestamp,score,source_term,dest_term,edge_term,cache_hit,label";

impl ScoreRecord {
    pub fn to_line(&self) -> String {
        let mut s = String::with_capacity(96);
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            self.seq,
            self.edge.source,
            self.edge.destination,
            self.edge.timestamp,
            self.score,
            self.components.source,
            self.components.destination,
            self.components.edge,
            self.cache_hit as u8
        );
        if let Some(l) = self.edge.label {
            let _ = write!(s, ",{l}");
        }
        s
    }

    /// Parses a line written by [`to_line`](Self::to_line); `Ok(None)` for
    /// comments and blank lines.
    pub fn parse_line(line: &str) -> std::result::Result<Option<ScoreRecord>, String> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(None);
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(9..=10).contains(&f.len()) {
            return Err(format!("expected 9 or 10 fields, found {}", f.len()));
        }
        let num = |i: usize, what: &str| -> std::result::Result<f64, String> {
            f[i].parse::<f64>()
                .map_err(|_| format!("invalid {what} `{}`", f[i]))
        };
        let edge_line = match f.get(9) {
            Some(l) => format!("{},{},{},{}", f[1], f[2], f[3], l),
            None => format!("{},{},{}", f[1], f[2], f[3]),
        };
        let edge = TemporalEdge::parse_line(&edge_line)?.ok_or("missing edge fields")?;
        Ok(Some(ScoreRecord {
            seq: f[0].parse().map_err(|_| format!("invalid seq `{}`", f[0]))?,
            edge,
            score: num(4, "score")?,
            components: Components {
                source: num(5, "source_term")?,
                destination: num(6, "dest_term")?,
                edge: num(7, "edge_term")?,
            },
            cache_hit: match f[8] {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(format!("invalid cache_hit `{other}`")),
            },
        }))
    }
}

/// Node- and edge-level forests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forests {
    pub node: HalfSpaceForest,
    pub edge: HalfSpaceForest,
}

impl Forests {
    /// Builds both forests and fills their reference windows from the
    /// embeddings of (a sample of) `edges` in `graph`.
    pub fn initialize(
        model: &EncoderModel,
        graph: &TemporalGraph,
        edges: &[TemporalEdge],
        params: ForestParams,
        mode: Mode,
        seed: u64,
    ) -> Result<Self> {
        let dim = model.embed_dim();
        let mut node = HalfSpaceForest::build(dim, params, mode, rng::derive_seed(seed, 10))?;
        let mut edge = HalfSpaceForest::build(dim, params, mode, rng::derive_seed(seed, 11))?;

        let chosen: Vec<usize> = if edges.len() > params.window {
            let mut idx =
                rand::seq::index::sample(&mut rng::derive(seed, 12), edges.len(), params.window)
                    .into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..edges.len()).collect()
        };
        let mut node_pts = Vec::with_capacity(2 * chosen.len());
        let mut edge_pts = Vec::with_capacity(chosen.len());
        for (k, &i) in chosen.iter().enumerate() {
            let e = &edges[i];
            let mut r = rng::derive(seed, 1_000_000 + k as u64);
            let hs = model.embed_node(graph, &e.source, &mut r)?;
            let hd = model.embed_node(graph, &e.destination, &mut r)?;
            let he = model.combine(&hs, &hd)?;
            node_pts.push(model.scale_node(&hs)?);
            node_pts.push(model.scale_node(&hd)?);
            edge_pts.push(model.scale_edge(&he)?);
        }
        node.initialize(&node_pts)?;
        edge.initialize(&edge_pts)?;
        Ok(Forests { node, edge })
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        Forests {
            node: self.node.with_mode(mode),
            edge: self.edge.with_mode(mode),
        }
    }

    pub fn mode(&self) -> Mode {
        self.node.mode
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            node: serde_json::Value,
            edge: serde_json::Value,
        }
        let raw: Raw = serde_json::from_str(s)?;
        Ok(Forests {
            node: HalfSpaceForest::from_json(&raw.node.to_string())?,
            edge: HalfSpaceForest::from_json(&raw.edge.to_string())?,
        })
    }
}

#[derive(Clone, Debug)]
struct Cached {
    score: f64,
    components: Components,
}

/// Streaming detector state.
#[derive(Clone, Debug)]
pub struct Pipeline {
    model: EncoderModel,
    forests: Forests,
    graph: TemporalGraph,
    cache: ScoreCache<(NodeIdx, NodeIdx), Cached>,
    config: PipelineConfig,
    next_seq: usize,
}

impl Pipeline {
    /// `graph` is the history the stream continues from (typically the
    /// training snapshot). The forests' mode is overridden by `config.mode`.
    pub fn new(
        model: EncoderModel,
        forests: Forests,
        graph: TemporalGraph,
        config: PipelineConfig,
    ) -> Result<Self> {
        config.weights.validate()?;
        model.validate()?;
        if !model.trained {
            return Err(Error::Untrained);
        }
        if model.node_scaler.is_none() || model.edge_scaler.is_none() {
            return Err(Error::Precondition("model scalers are not fitted".into()));
        }
        for f in [&forests.node, &forests.edge] {
            f.validate()?;
            if f.dim != model.embed_dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.embed_dim(),
                    got: f.dim,
                });
            }
        }
        let forests = forests.with_mode(config.mode);
        Ok(Pipeline {
            cache: ScoreCache::new(config.cache_size, config.cache_policy),
            model,
            forests,
            graph,
            config,
            next_seq: 0,
        })
    }

    pub fn graph(&self) -> &TemporalGraph {
        &self.graph
    }

    pub fn forests(&self) -> &Forests {
        &self.forests
    }

    pub fn model(&self) -> &EncoderModel {
        &self.model
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Adds edges to the graph without scoring them.
    pub fn warm_up<'a>(&mut self, edges: impl IntoIterator<Item = &'a TemporalEdge>) -> Result<()> {
        for e in edges {
            self.graph.insert_edge(e)?;
        }
        Ok(())
    }

    pub fn process_edge(&mut self, edge: &TemporalEdge) -> Result<ScoreRecord> {
        let seq = self.next_seq;
        let record = self.process_inner(seq, edge).map_err(|e| Error::Stream {
            seq,
            source: Box::new(e),
        })?;
        self.next_seq += 1;
        Ok(record)
    }

    fn process_inner(&mut self, seq: usize, edge: &TemporalEdge) -> Result<ScoreRecord> {
        let ins = self.graph.insert_edge(edge)?;
        let key = (ins.source, ins.destination);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(ScoreRecord {
                seq,
                edge: edge.clone(),
                score: hit.score,
                components: hit.components,
                cache_hit: true,
            });
        }

        let seed = self.config.seed;
        let model = &self.model;
        let hs = model.embed_idx(&self.graph, ins.source, &mut rng::derive(seed, 2 * seq as u64))?;
        let hd = model.embed_idx(
            &self.graph,
            ins.destination,
            &mut rng::derive(seed, 2 * seq as u64 + 1),
        )?;
        let he = model.combine(&hs, &hd)?;
        let xs = model.scale_node(&hs)?;
        let xd = model.scale_node(&hd)?;
        let xe = model.scale_edge(&he)?;

        let components = Components {
            source: self.forests.node.score(&xs)?,
            destination: self.forests.node.score(&xd)?,
            edge: self.forests.edge.score(&xe)?,
        };
        let score = self.config.weights.combine(components).clamp(0.0, 1.0);

        if self.config.mode == Mode::Dynamic {
            self.forests.node.update(&xs)?;
            self.forests.node.update(&xd)?;
            self.forests.edge.update(&xe)?;
        }
        self.cache.insert(key, Cached { score, components });
        Ok(ScoreRecord {
            seq,
            edge: edge.clone(),
            score,
            components,
            cache_hit: false,
        })
    }

    pub fn run_stream<'a>(
        &mut self,
        edges: impl IntoIterator<Item = &'a TemporalEdge>,
    ) -> Result<Vec<ScoreRecord>> {
        edges.into_iter().map(|e| self.process_edge(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_parse_and_normalize() {
        let w: Weights = "1,1,2".parse().unwrap();
        assert_eq!(w.source, 0.25);
        assert_eq!(w.edge, 0.5);
        assert!("1,2".parse::<Weights>().is_err());
        assert!("-1,1,1".parse::<Weights>().is_err());
        assert!("0,0,0".parse::<Weights>().is_err());
    }

    #[test]
    fn unnormalized_weights_fail_validation() {
        let w = Weights {
            source: 0.5,
            destination: 0.5,
            edge: 0.5,
        };
        assert!(w.validate().is_err());
        assert!(Weights::default().validate().is_ok());
    }

    #[test]
    fn score_line_round_trip() {
        let rec = ScoreRecord {
            seq: 12,
            edge: TemporalEdge::new("a", "b", crate::graph::Timestamp::Int(99)).with_label(1),
            score: 0.1 + 0.2,
            components: Components {
                source: 1.0 / 3.0,
                destination: 0.0,
                edge: 0.3,
            },
            cache_hit: true,
        };
        let line = rec.to_line();
        assert_eq!(ScoreRecord::parse_line(&line).unwrap().unwrap(), rec);
        assert!(ScoreRecord::parse_line(SCORE_HEADER).unwrap().is_none());
    }
}
