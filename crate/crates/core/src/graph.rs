//! Temporal multigraph store and node feature providers.
//!
//! The graph keeps every directed edge it has seen (duplicates included) as
//! out-adjacency of the source and in-adjacency of the destination. Node ids
//! are opaque strings interned to dense `NodeIdx` values on first sight.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeIdx = u32;

/// Edge time. Integer timestamps are kept exact; decimals are stored as `f64`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    Int(i64),
    Real(f64),
}

impl Timestamp {
    pub fn as_f64(self) -> f64 {
        match self {
            Timestamp::Int(v) => v as f64,
            Timestamp::Real(v) => v,
        }
    }

    pub fn parse(s: &str) -> Option<Timestamp> {
        let s = s.trim();
        if let Ok(v) = s.parse::<i64>() {
            return Some(Timestamp::Int(v));
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(Timestamp::Real(v)),
            _ => None,
        }
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Timestamp::Int(a), Timestamp::Int(b)) => a.cmp(b),
            _ => self.as_f64().total_cmp(&other.as_f64()),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Int(v) => write!(f, "{v}"),
            Timestamp::Real(v) => write!(f, "{v}"),
        }
    }
}

/// One element of an edge stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub source: String,
    pub destination: String,
    pub timestamp: Timestamp,
    pub label: Option<u8>,
}

impl TemporalEdge {
    pub fn new(
        source: impl Into<String>,
        destination: impl Into<String>,
        timestamp: Timestamp,
    ) -> Self {
        TemporalEdge {
            source: source.into(),
            destination: destination.into(),
            timestamp,
            label: None,
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    /// Parses one `source,destination,timestamp[,label]` line.
    ///
    /// Returns `Ok(None)` for blank and `#` comment lines.
    pub fn parse_line(line: &str) -> std::result::Result<Option<TemporalEdge>, String> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(None);
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(format!("expected 3 or 4 fields, found {}", fields.len()));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err("empty node id".to_string());
        }
        let timestamp = Timestamp::parse(fields[2])
            .ok_or_else(|| format!("invalid timestamp `{}`", fields[2]))?;
        let label = match fields.get(3) {
            None => None,
            Some(&"0") => Some(0),
            Some(&"1") => Some(1),
            Some(other) => return Err(format!("invalid label `{other}` (expected 0 or 1)")),
        };
        Ok(Some(TemporalEdge {
            source: fields[0].to_string(),
            destination: fields[1].to_string(),
            timestamp,
            label,
        }))
    }

    pub fn to_line(&self) -> String {
        match self.label {
            Some(l) => format!("{},{},{},{}", self.source, self.destination, self.timestamp, l),
            None => format!("{},{},{}", self.source, self.destination, self.timestamp),
        }
    }
}

/// What to do with an edge older than the latest one seen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    #[default]
    Strict,
    /// Accept the edge at the latest timestamp and log a warning.
    Clamp,
}

/// Result of a single insertion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsertOutcome {
    pub source: NodeIdx,
    pub destination: NodeIdx,
    pub new_nodes: u8,
    pub clamped: bool,
}

/// Directed temporal multigraph accumulated from an edge stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TemporalGraph {
    index: HashMap<String, NodeIdx>,
    names: Vec<String>,
    out_adj: Vec<Vec<(NodeIdx, Timestamp)>>,
    in_adj: Vec<Vec<(NodeIdx, Timestamp)>>,
    edge_count: u64,
    latest: Option<Timestamp>,
    policy: OrderPolicy,
    clamped: u64,
}

impl TemporalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_policy(policy: OrderPolicy) -> Self {
        TemporalGraph {
            policy,
            ..Self::default()
        }
    }

    pub fn from_edges<'a>(edges: impl IntoIterator<Item = &'a TemporalEdge>) -> Result<Self> {
        let mut g = TemporalGraph::new();
        for e in edges {
            g.insert_edge(e)?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    pub fn latest_timestamp(&self) -> Option<Timestamp> {
        self.latest
    }

    /// Number of edges accepted out of order under [`OrderPolicy::Clamp`].
    pub fn clamped_count(&self) -> u64 {
        self.clamped
    }

    pub fn index_of(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn name(&self, idx: NodeIdx) -> &str {
        &self.names[idx as usize]
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> + '_ {
        self.names.iter().map(String::as_str)
    }

    pub fn out_neighbors(&self, idx: NodeIdx) -> &[(NodeIdx, Timestamp)] {
        &self.out_adj[idx as usize]
    }

    pub fn in_neighbors(&self, idx: NodeIdx) -> &[(NodeIdx, Timestamp)] {
        &self.in_adj[idx as usize]
    }

    /// Size of the undirected neighbor multiset (in + out).
    pub fn degree(&self, idx: NodeIdx) -> usize {
        self.out_adj[idx as usize].len() + self.in_adj[idx as usize].len()
    }

    fn intern(&mut self, id: &str) -> (NodeIdx, bool) {
        if let Some(&idx) = self.index.get(id) {
            return (idx, false);
        }
        let idx = self.names.len() as NodeIdx;
        self.index.insert(id.to_string(), idx);
        self.names.push(id.to_string());
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        (idx, true)
    }

    pub fn insert_edge(&mut self, edge: &TemporalEdge) -> Result<InsertOutcome> {
        let mut ts = edge.timestamp;
        let mut clamped = false;
        if let Some(latest) = self.latest {
            if ts < latest {
                match self.policy {
                    OrderPolicy::Strict => {
                        return Err(Error::Monotonicity {
                            latest: latest.to_string(),
                            got: ts.to_string(),
                        })
                    }
                    OrderPolicy::Clamp => {
                        log::warn!(
                            "clamping out-of-order edge {}->{} from {} to {}",
                            edge.source,
                            edge.destination,
                            ts,
                            latest
                        );
                        ts = latest;
                        clamped = true;
                        self.clamped += 1;
                    }
                }
            }
        }
        let (s, s_new) = self.intern(&edge.source);
        let (d, d_new) = self.intern(&edge.destination);
        self.out_adj[s as usize].push((d, ts));
        self.in_adj[d as usize].push((s, ts));
        self.edge_count += 1;
        self.latest = Some(ts);
        Ok(InsertOutcome {
            source: s,
            destination: d,
            new_nodes: s_new as u8 + d_new as u8,
            clamped,
        })
    }

    /// Uniform sample without replacement of at most `fanout` entries from the
    /// union of the node's out- and in-neighbor multisets.
    pub fn sample_neighbors<R: Rng + ?Sized>(
        &self,
        idx: NodeIdx,
        fanout: usize,
        rng: &mut R,
    ) -> Vec<NodeIdx> {
        let out = &self.out_adj[idx as usize];
        let inn = &self.in_adj[idx as usize];
        let total = out.len() + inn.len();
        let pick = |i: usize| {
            if i < out.len() {
                out[i].0
            } else {
                inn[i - out.len()].0
            }
        };
        if total <= fanout {
            return (0..total).map(pick).collect();
        }
        rand::seq::index::sample(rng, total, fanout)
            .into_iter()
            .map(pick)
            .collect()
    }

    /// Like [`sample_neighbors`](Self::sample_neighbors) but by node id; unknown ids
    /// yield an empty list.
    pub fn sample_neighbors_of<R: Rng + ?Sized>(
        &self,
        id: &str,
        fanout: usize,
        rng: &mut R,
    ) -> Vec<NodeIdx> {
        match self.index_of(id) {
            Some(idx) => self.sample_neighbors(idx, fanout, rng),
            None => Vec::new(),
        }
    }
}

/// Sparse feature vector: `(coordinate, value)` pairs with distinct coordinates.
pub type SparseFeatures = Vec<(u32, f64)>;

/// Source of the input feature matrix `X_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FeatureProvider {
    /// Signed feature hashing of the node id: each of `probes` hashes adds ±1
    /// to one of `dim` buckets.
    IdentityHash { dim: usize, seed: u64, probes: usize },
    /// Fixed per-node rows.
    ExplicitMatrix {
        dim: usize,
        rows: HashMap<String, Vec<f64>>,
    },
}

impl FeatureProvider {
    pub fn identity_hash(dim: usize, seed: u64) -> Self {
        FeatureProvider::IdentityHash {
            dim,
            seed,
            probes: 1,
        }
    }

    pub fn explicit(rows: HashMap<String, Vec<f64>>) -> Result<Self> {
        let mut dims = rows.values().map(Vec::len);
        let dim = dims
            .next()
            .ok_or_else(|| Error::Config("explicit feature matrix is empty".into()))?;
        if let Some(bad) = dims.find(|&d| d != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad,
            });
        }
        if dim == 0 {
            return Err(Error::Config("feature dimension must be >= 1".into()));
        }
        Ok(FeatureProvider::ExplicitMatrix { dim, rows })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureProvider::IdentityHash { dim, .. } => *dim,
            FeatureProvider::ExplicitMatrix { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeatureProvider::IdentityHash { dim, probes, .. } => {
                if *dim == 0 || *probes == 0 {
                    return Err(Error::Config(
                        "identity-hash features need dim >= 1 and probes >= 1".into(),
                    ));
                }
                Ok(())
            }
            FeatureProvider::ExplicitMatrix { dim, rows } => {
                if *dim == 0 {
                    return Err(Error::Config("feature dimension must be >= 1".into()));
                }
                match rows.values().find(|r| r.len() != *dim) {
                    Some(r) => Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: r.len(),
                    }),
                    None => Ok(()),
                }
            }
        }
    }

    /// Dense length-K feature vector of a node.
    pub fn node_features(&self, id: &str) -> Result<Vec<f64>> {
        let mut dense = vec![0.0; self.dim()];
        for (i, v) in self.sparse_features(id)? {
            dense[i as usize] += v;
        }
        Ok(dense)
    }

    pub fn sparse_features(&self, id: &str) -> Result<SparseFeatures> {
        match self {
            FeatureProvider::IdentityHash { dim, seed, probes } => {
                let mut out: SparseFeatures = Vec::with_capacity(*probes);
                for probe in 0..*probes {
                    let h = hash_id(id, *seed, probe as u64);
                    let bucket = (h % *dim as u64) as u32;
                    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
                    match out.iter_mut().find(|(b, _)| *b == bucket) {
                        Some(entry) => entry.1 += sign,
                        None => out.push((bucket, sign)),
                    }
                }
                out.retain(|&(_, v)| v != 0.0);
                out.sort_unstable_by_key(|&(b, _)| b);
                Ok(out)
            }
            FeatureProvider::ExplicitMatrix { rows, .. } => {
                let row = rows
                    .get(id)
                    .ok_or_else(|| Error::MissingFeature(id.to_string()))?;
                Ok(row
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, &v)| (i as u32, v))
                    .collect())
            }
        }
    }
}

// FNV-1a over the id bytes followed by a splitmix64 finalizer; stable across
// platforms and toolchains, unlike `DefaultHasher`.
fn hash_id(id: &str, seed: u64, probe: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in id.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ probe.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
