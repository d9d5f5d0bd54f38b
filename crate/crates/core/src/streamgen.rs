//! Synthetic labeled edge streams and CSV ingestion.
//!
//! Background traffic runs over a fixed node pool split into communities.
//! Most edges stay inside a community; endpoints are drawn by preferential
//! attachment (or uniformly). Anomalies are injected as episodes whose edges
//! cross community boundaries:
//!
//! * `burst-ddos`: many sources from other communities hit one target,
//! * `spike`: one never-before-seen pair repeated,
//! * `port-scan`: one source touches many targets in other communities.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{TemporalEdge, Timestamp};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    #[default]
    PreferentialAttachment,
    Uniform,
}

impl std::str::FromStr for Background {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pa" | "preferential-attachment" => Ok(Background::PreferentialAttachment),
            "uniform" => Ok(Background::Uniform),
            other => Err(format!("unknown background model `{other}` (pa|uniform)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionKind {
    BurstDdos,
    Spike,
    PortScan,
}

impl std::str::FromStr for InjectionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "burst" | "burst-ddos" | "ddos" => Ok(InjectionKind::BurstDdos),
            "spike" => Ok(InjectionKind::Spike),
            "port-scan" | "portscan" | "scan" => Ok(InjectionKind::PortScan),
            other => Err(format!(
                "unknown injection `{other}` (burst|spike|port-scan)"
            )),
        }
    }
}

/// One placed anomaly episode, in stream positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: InjectionKind,
    /// First stream position of the episode window.
    pub start: usize,
    /// Window length in stream positions.
    pub duration: usize,
    /// Anomalous edges per background edge inside the window.
    pub intensity: f64,
    /// The attacked node (burst, spike) or the attacker (port-scan).
    pub target: String,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSpec {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub background: Background,
    pub communities: usize,
    /// Probability that a background edge leaves its community.
    pub cross_rate: f64,
    /// Mean of the exponential inter-arrival time, in timestamp units.
    pub mean_interarrival: f64,
    /// Kinds cycled over the episodes; empty means no anomalies.
    pub injections: Vec<InjectionKind>,
    pub anomaly_fraction: f64,
    /// Anomalous edges per episode.
    pub episode_size: usize,
    /// Anomalous edges per background edge inside an episode window.
    pub intensity: f64,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        StreamSpec {
            n_nodes: 1000,
            n_edges: 100_000,
            background: Background::PreferentialAttachment,
            communities: 10,
            cross_rate: 0.002,
            mean_interarrival: 10.0,
            injections: vec![InjectionKind::BurstDdos, InjectionKind::Spike],
            anomaly_fraction: 0.02,
            episode_size: 20,
            intensity: 1.0,
            seed: 0,
        }
    }
}

impl StreamSpec {
    pub fn anomaly_count(&self) -> usize {
        if self.injections.is_empty() {
            0
        } else {
            (self.anomaly_fraction * self.n_edges as f64).round() as usize
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.n_nodes));
        }
        if self.communities == 0 || self.communities > self.n_nodes {
            return bad(format!(
                "communities must be in 1..={}, got {}",
                self.n_nodes, self.communities
            ));
        }
        if !(0.0..=1.0).contains(&self.cross_rate) {
            return bad(format!("cross_rate {} not in [0,1]", self.cross_rate));
        }
        if !(self.mean_interarrival > 0.0 && self.mean_interarrival.is_finite()) {
            return bad(format!("mean_interarrival must be > 0, got {}", self.mean_interarrival));
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return bad(format!("anomaly_fraction {} not in [0,1]", self.anomaly_fraction));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return bad(format!("intensity must be > 0, got {}", self.intensity));
        }
        if self.episode_size == 0 {
            return bad("episode_size must be >= 1".into());
        }
        let a = self.anomaly_count();
        if a > 0 && (self.communities < 2 || self.n_nodes < 4) {
            return bad("anomaly injection needs at least 2 communities".into());
        }
        if a >= self.n_edges && a > 0 {
            return Err(Error::Precondition(format!(
                "infeasible stream: {a} anomalous edges requested out of {}",
                self.n_edges
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedStream {
    pub edges: Vec<TemporalEdge>,
    pub injections: Vec<Injection>,
}

struct Pool {
    communities: Vec<Vec<usize>>,
    community_of: Vec<usize>,
    /// Endpoint multiset per community, for preferential attachment.
    urn: Vec<Vec<usize>>,
    background: Background,
}

impl Pool {
    fn new(spec: &StreamSpec) -> Self {
        let mut communities = vec![Vec::new(); spec.communities];
        let community_of: Vec<usize> = (0..spec.n_nodes).map(|v| v % spec.communities).collect();
        for (v, &c) in community_of.iter().enumerate() {
            communities[c].push(v);
        }
        Pool {
            communities,
            community_of,
            urn: vec![Vec::new(); spec.communities],
            background: spec.background,
        }
    }

    fn pick<R: Rng>(&self, c: usize, rng: &mut R) -> usize {
        let urn = &self.urn[c];
        if self.background == Background::PreferentialAttachment
            && !urn.is_empty()
            && rng.random_bool(0.75)
        {
            urn[rng.random_range(0..urn.len())]
        } else {
            let members = &self.communities[c];
            members[rng.random_range(0..members.len())]
        }
    }

    fn record(&mut self, u: usize, v: usize) {
        if self.background == Background::PreferentialAttachment {
            self.urn[self.community_of[u]].push(u);
            self.urn[self.community_of[v]].push(v);
        }
    }

    fn other_community<R: Rng>(&self, c: usize, rng: &mut R) -> usize {
        let k = self.communities.len();
        (c + rng.random_range(1..k)) % k
    }

    fn outsider<R: Rng>(&self, c: usize, rng: &mut R) -> usize {
        let members = &self.communities[self.other_community(c, rng)];
        members[rng.random_range(0..members.len())]
    }
}

pub fn node_name(v: usize) -> String {
    format!("n{v}")
}

/// Generates a timestamp-sorted labeled stream; deterministic per seed.
pub fn generate(spec: &StreamSpec) -> Result<GeneratedStream> {
    spec.validate()?;
    let n = spec.n_edges;
    let total = spec.anomaly_count();
    let mut place_rng = rng::derive(spec.seed, 0);
    let mut pick_rng = rng::derive(spec.seed, 1);
    let mut time_rng = rng::derive(spec.seed, 2);

    // Split the anomaly budget into episodes and reserve their positions.
    let episodes = total.div_ceil(spec.episode_size);
    let mut slot: Vec<Option<usize>> = vec![None; n];
    let mut plan = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let size = total / episodes + usize::from(e < total % episodes);
        let span = ((size as f64 * (1.0 + 1.0 / spec.intensity)).ceil() as usize).clamp(size, n);
        // One episode per equal stream segment keeps prevalence even over time.
        let (seg_lo, seg_hi) = (e * n / episodes, (e + 1) * n / episodes);
        let start = place_rng.random_range(seg_lo..=seg_hi.saturating_sub(span).max(seg_lo).min(n - span));
        let mut free: Vec<usize> = (start..start + span).filter(|&p| slot[p].is_none()).collect();
        // Overlapping episodes: widen to the right, then wrap to the left.
        let mut hi = start + span;
        let mut lo = start;
        while free.len() < size {
            if hi < n {
                if slot[hi].is_none() {
                    free.push(hi);
                }
                hi += 1;
            } else {
                lo -= 1;
                if slot[lo].is_none() {
                    free.push(lo);
                }
            }
        }
        free.sort_unstable();
        let chosen = index::sample(&mut place_rng, free.len(), size);
        for i in chosen.iter() {
            slot[free[i]] = Some(e);
        }
        let kind = spec.injections[e % spec.injections.len()];
        plan.push((kind, lo, hi - lo, size));
    }

    let mut pool = Pool::new(spec);
    let mut seen_pairs: HashSet<(usize, usize)> = HashSet::new();
    // Per-episode (anchor node, fixed peer for spikes).
    let mut anchors: Vec<Option<(usize, usize)>> = vec![None; episodes];
    let gap = Exp::new(1.0 / spec.mean_interarrival).map_err(|e| Error::Config(e.to_string()))?;
    let mut clock = 0.0f64;
    let mut edges = Vec::with_capacity(n);
    for &episode in &slot {
        clock += gap.sample(&mut time_rng);
        let timestamp = Timestamp::Int(clock.floor() as i64);
        let (u, v, label) = match episode {
            None => {
                let c = pick_rng.random_range(0..spec.communities);
                let u = pool.pick(c, &mut pick_rng);
                let c2 = if spec.communities > 1 && pick_rng.random_bool(spec.cross_rate) {
                    pool.other_community(c, &mut pick_rng)
                } else {
                    c
                };
                let mut v = pool.pick(c2, &mut pick_rng);
                if v == u {
                    let members = &pool.communities[c2];
                    v = members[(members.iter().position(|&m| m == u).unwrap_or(0) + 1) % members.len()];
                }
                pool.record(u, v);
                (u, v, 0)
            }
            Some(e) => {
                let kind = plan[e].0;
                let (anchor, peer) = *anchors[e].get_or_insert_with(|| {
                    let anchor = pick_rng.random_range(0..spec.n_nodes);
                    let ca = pool.community_of[anchor];
                    let mut peer = pool.outsider(ca, &mut pick_rng);
                    for _ in 0..64 {
                        if !seen_pairs.contains(&(peer, anchor)) {
                            break;
                        }
                        peer = pool.outsider(ca, &mut pick_rng);
                    }
                    (anchor, peer)
                });
                let ca = pool.community_of[anchor];
                match kind {
                    InjectionKind::BurstDdos => (pool.outsider(ca, &mut pick_rng), anchor, 1),
                    InjectionKind::Spike => (peer, anchor, 1),
                    InjectionKind::PortScan => (anchor, pool.outsider(ca, &mut pick_rng), 1),
                }
            }
        };
        seen_pairs.insert((u, v));
        edges.push(TemporalEdge::new(node_name(u), node_name(v), timestamp).with_label(label));
    }

    let injections = plan
        .iter()
        .zip(&anchors)
        .map(|(&(kind, start, duration, size), anchor)| Injection {
            kind,
            start,
            duration,
            intensity: spec.intensity,
            target: anchor.map(|a| node_name(a.0)).unwrap_or_default(),
            edges: size,
        })
        .collect();
    Ok(GeneratedStream { edges, injections })
}

/// Reads a `source,destination,timestamp[,label]` file.
///
/// With `skip_header`, a first data line whose timestamp field is not numeric
/// is dropped. Timestamps must be non-decreasing.
pub fn ingest_csv(path: impl AsRef<Path>, skip_header: bool) -> Result<Vec<TemporalEdge>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let shown = path.display().to_string();
    let mut edges: Vec<TemporalEdge> = Vec::new();
    let mut first_data = true;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |msg: String| Error::Parse {
            path: shown.clone(),
            line: i + 1,
            msg,
        };
        let parsed = TemporalEdge::parse_line(&line);
        let edge = match parsed {
            Ok(None) => continue,
            Ok(Some(e)) => e,
            Err(msg) => {
                let is_header = first_data
                    && skip_header
                    && line
                        .split(',')
                        .nth(2)
                        .is_some_and(|t| Timestamp::parse(t).is_none());
                first_data = false;
                if is_header {
                    continue;
                }
                return Err(parse_err(msg));
            }
        };
        first_data = false;
        if let Some(prev) = edges.last() {
            if edge.timestamp < prev.timestamp {
                return Err(parse_err(format!(
                    "timestamp {} is older than previous {}",
                    edge.timestamp, prev.timestamp
                )));
            }
        }
        edges.push(edge);
    }
    Ok(edges)
}

pub fn write_csv(path: impl AsRef<Path>, edges: &[TemporalEdge]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(edges.len() * 24 + 64);
    out.push_str("# source,destination,timestamp,label\n");
    for e in edges {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Prefix and prefix+middle lengths for a `(train, val, test)` split.
pub fn split_bounds(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions ({a}, {b}, {c}) must be in [0,1] and sum to 1"
        )));
    }
    let first = ((a * n as f64).round() as usize).min(n);
    let second = (((a + b) * n as f64).round() as usize).clamp(first, n);
    Ok((first, second))
}

/// Contiguous train/validation/test slices, order preserved.
pub fn temporal_split<T>(items: &[T], fractions: (f64, f64, f64)) -> Result<[&[T]; 3]> {
    let (i, j) = split_bounds(items.len(), fractions)?;
    Ok([&items[..i], &items[i..j], &items[j..]])
}

/// Parses `"0.6,0.2,0.2"`.
pub fn parse_fractions(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad split `{s}`: {e}")))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::Config(format!("split `{s}` needs three fractions"))),
    }
}
