//! Half-Space Tree forest over the unit cube.
//!
//! Each tree is a perfect binary tree of depth `h` over a randomly perturbed
//! workspace that strictly contains `[0,1]^d`. Internal nodes split a random
//! dimension of their box at the midpoint. Every node carries a reference
//! mass (read by `score`) and a latest mass (filled by `update`); after `ψ`
//! updates the latest window becomes the reference window.
//!
//! Nodes are stored in heap order: the children of `i` are `2i+1` and `2i+2`,
//! the `2^h - 1` internal nodes come first and the `2^h` leaves last.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Counters frozen after initialization.
    #[default]
    Static,
    /// Windowed reference/latest counters keep updating.
    Dynamic,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "static" => Ok(Mode::Static),
            "dynamic" => Ok(Mode::Dynamic),
            other => Err(format!("unknown mode `{other}` (static|dynamic)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Static => "static",
            Mode::Dynamic => "dynamic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    /// Number of trees (β).
    pub trees: usize,
    /// Tree depth (h).
    pub height: u32,
    /// Window size (ψ).
    pub window: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 8,
            height: 3,
            window: 1024,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.height == 0 || self.window == 0 {
            return Err(Error::Config("trees, height and window must be >= 1".into()));
        }
        if self.height > 24 {
            return Err(Error::Config(format!("height {} is too large", self.height)));
        }
        Ok(())
    }
}

/// Read-only view of one tree node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HstNode {
    /// `(dimension, value)` for internal nodes, `None` for leaves.
    pub split: Option<(usize, f64)>,
    pub depth: u32,
    pub r_mass: u64,
    pub l_mass: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HstTree {
    pub workspace_min: Vec<f64>,
    pub workspace_max: Vec<f64>,
    pub split_dim: Vec<u32>,
    pub split_value: Vec<f64>,
    pub r_mass: Vec<u64>,
    pub l_mass: Vec<u64>,
}

impl HstTree {
    fn build<R: Rng + ?Sized>(dim: usize, height: u32, rng: &mut R) -> Self {
        let mut workspace_min = Vec::with_capacity(dim);
        let mut workspace_max = Vec::with_capacity(dim);
        for _ in 0..dim {
            let s: f64 = rng.random();
            let half = 2.0 * s.max(1.0 - s);
            workspace_min.push(s - half);
            workspace_max.push(s + half);
        }
        let n_internal = (1usize << height) - 1;
        let mut split_dim = vec![0u32; n_internal];
        let mut split_value = vec![0.0; n_internal];
        let mut lo = workspace_min.clone();
        let mut hi = workspace_max.clone();
        Self::split(0, &mut lo, &mut hi, &mut split_dim, &mut split_value, rng);
        let n_nodes = 2 * n_internal + 1;
        HstTree {
            workspace_min,
            workspace_max,
            split_dim,
            split_value,
            r_mass: vec![0; n_nodes],
            l_mass: vec![0; n_nodes],
        }
    }

    fn split<R: Rng + ?Sized>(
        node: usize,
        lo: &mut [f64],
        hi: &mut [f64],
        split_dim: &mut [u32],
        split_value: &mut [f64],
        rng: &mut R,
    ) {
        if node >= split_dim.len() {
            return;
        }
        let q = rng.random_range(0..lo.len());
        let mid = (lo[q] + hi[q]) / 2.0;
        split_dim[node] = q as u32;
        split_value[node] = mid;
        let saved_hi = hi[q];
        hi[q] = mid;
        Self::split(2 * node + 1, lo, hi, split_dim, split_value, rng);
        hi[q] = saved_hi;
        let saved_lo = lo[q];
        lo[q] = mid;
        Self::split(2 * node + 2, lo, hi, split_dim, split_value, rng);
        lo[q] = saved_lo;
    }

    #[inline]
    fn n_internal(&self) -> usize {
        self.split_dim.len()
    }

    /// Heap indices from the root to the leaf containing `x`.
    #[inline]
    fn path<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = usize> + 'a {
        let mut node = Some(0usize);
        std::iter::from_fn(move || {
            let cur = node?;
            node = if cur < self.n_internal() {
                let q = self.split_dim[cur] as usize;
                Some(if x[q] < self.split_value[cur] {
                    2 * cur + 1
                } else {
                    2 * cur + 2
                })
            } else {
                None
            };
            Some(cur)
        })
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        self.path(x).last().expect("path is never empty")
    }

    pub fn node(&self, i: usize) -> HstNode {
        HstNode {
            split: (i < self.n_internal())
                .then(|| (self.split_dim[i] as usize, self.split_value[i])),
            depth: (usize::BITS - (i + 1).leading_zeros() - 1),
            r_mass: self.r_mass[i],
            l_mass: self.l_mass[i],
        }
    }

    pub fn node_count(&self) -> usize {
        self.r_mass.len()
    }

    /// Heap indices of the leaves.
    pub fn leaves(&self) -> std::ops::Range<usize> {
        self.n_internal()..self.node_count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceForest {
    pub format_version: u32,
    pub dim: usize,
    pub params: ForestParams,
    pub mode: Mode,
    /// Normalization constant `Z = ψ · 2^h`.
    pub z: f64,
    pub items_in_window: usize,
    pub seed: u64,
    pub trees: Vec<HstTree>,
}

impl HalfSpaceForest {
    pub fn build(dim: usize, params: ForestParams, mode: Mode, seed: u64) -> Result<Self> {
        params.validate()?;
        if dim == 0 {
            return Err(Error::Config("forest dimension must be >= 1".into()));
        }
        let mut r = rng::derive(seed, 0x4853_5400);
        let trees = (0..params.trees)
            .map(|_| HstTree::build(dim, params.height, &mut r))
            .collect();
        Ok(HalfSpaceForest {
            format_version: FOREST_FORMAT_VERSION,
            dim,
            params,
            mode,
            z: params.window as f64 * 2f64.powi(params.height as i32),
            items_in_window: 0,
            seed,
            trees,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Version {
                kind: "forest",
                found: self.format_version,
                expected: FOREST_FORMAT_VERSION,
            });
        }
        self.params.validate()?;
        if self.trees.len() != self.params.trees {
            return Err(Error::Config("tree count does not match params".into()));
        }
        let n_internal = (1usize << self.params.height) - 1;
        for t in &self.trees {
            let ok = t.workspace_min.len() == self.dim
                && t.workspace_max.len() == self.dim
                && t.split_dim.len() == n_internal
                && t.split_value.len() == n_internal
                && t.r_mass.len() == 2 * n_internal + 1
                && t.l_mass.len() == 2 * n_internal + 1
                && t.split_dim.iter().all(|&q| (q as usize) < self.dim);
            if !ok {
                return Err(Error::Config("malformed tree arrays".into()));
            }
        }
        if self.items_in_window >= self.params.window {
            return Err(Error::Config("items_in_window must be < window".into()));
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Fills the reference window from `points`; sets larger than `ψ` are
    /// uniformly downsampled to `ψ` points.
    pub fn initialize<P: AsRef<[f64]>>(&mut self, points: &[P]) -> Result<()> {
        if self.items_in_window != 0 || self.trees.iter().any(|t| t.r_mass[0] != 0 || t.l_mass[0] != 0)
        {
            return Err(Error::Precondition("forest is already initialized".into()));
        }
        for p in points {
            self.check_dim(p.as_ref())?;
        }
        let chosen: Vec<usize> = if points.len() > self.params.window {
            let mut r = rng::derive(self.seed, 0x494e_4954);
            let mut idx = index::sample(&mut r, points.len(), self.params.window).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..points.len()).collect()
        };
        let mut x = vec![0.0; self.dim];
        for i in chosen {
            clamp_into(points[i].as_ref(), &mut x);
            for t in &mut self.trees {
                let path: Vec<usize> = t.path(&x).collect();
                for n in path {
                    t.r_mass[n] += 1;
                }
            }
        }
        Ok(())
    }

    /// Anomaly score in `[0,1]`: one minus the mean over trees of
    /// `leaf.r_mass · 2^h / Z`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut buf = vec![0.0; self.dim];
        clamp_into(x, &mut buf);
        let scale = 2f64.powi(self.params.height as i32);
        let total: f64 = self
            .trees
            .iter()
            .map(|t| t.r_mass[t.leaf_of(&buf)] as f64 * scale / self.z)
            .sum();
        Ok(1.0 - total / self.trees.len() as f64)
    }

    /// Records `x` in the latest window; swaps windows every `ψ` updates.
    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        if self.mode == Mode::Static {
            return Err(Error::StaticMode);
        }
        self.check_dim(x)?;
        let mut buf = vec![0.0; self.dim];
        clamp_into(x, &mut buf);
        for t in &mut self.trees {
            let mut node = 0usize;
            loop {
                t.l_mass[node] += 1;
                if node >= t.n_internal() {
                    break;
                }
                let q = t.split_dim[node] as usize;
                node = if buf[q] < t.split_value[node] {
                    2 * node + 1
                } else {
                    2 * node + 2
                };
            }
        }
        self.items_in_window += 1;
        if self.items_in_window == self.params.window {
            for t in &mut self.trees {
                std::mem::swap(&mut t.r_mass, &mut t.l_mass);
                t.l_mass.iter_mut().for_each(|m| *m = 0);
            }
            self.items_in_window = 0;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        crate::embed::check_version(&value, "forest", FOREST_FORMAT_VERSION)?;
        let f: HalfSpaceForest = serde_json::from_value(value)?;
        f.validate()?;
        Ok(f)
    }
}

fn clamp_into(x: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forest(dim: usize, trees: usize, height: u32, window: usize, mode: Mode) -> HalfSpaceForest {
        HalfSpaceForest::build(
            dim,
            ForestParams {
                trees,
                height,
                window,
            },
            mode,
            42,
        )
        .unwrap()
    }

    #[test]
    fn depth_one_structure() {
        let f = forest(1, 1, 1, 4, Mode::Static);
        let t = &f.trees[0];
        assert_eq!(t.node_count(), 3);
        assert!(t.node(0).split.is_some());
        assert_eq!(t.node(0).depth, 0);
        for leaf in t.leaves() {
            assert_eq!(t.node(leaf).split, None);
            assert_eq!(t.node(leaf).depth, 1);
        }
    }

    #[test]
    fn workspace_contains_unit_interval() {
        let f = forest(5, 16, 2, 4, Mode::Static);
        for t in &f.trees {
            for j in 0..5 {
                assert!(t.workspace_min[j] < 0.0 && t.workspace_max[j] > 1.0);
            }
        }
    }

    #[test]
    fn leaves_sit_at_depth_h() {
        let f = forest(3, 2, 4, 4, Mode::Static);
        for t in &f.trees {
            for leaf in t.leaves() {
                assert_eq!(t.node(leaf).depth, 4);
            }
            for i in 0..t.leaves().start {
                assert!(t.node(i).depth < 4);
            }
        }
    }

    #[test]
    fn builds_are_reproducible() {
        assert_eq!(forest(3, 4, 3, 8, Mode::Static), forest(3, 4, 3, 8, Mode::Static));
    }

    #[test]
    fn empty_initialization() {
        let mut f = forest(2, 3, 3, 8, Mode::Static);
        f.initialize::<Vec<f64>>(&[]).unwrap();
        assert!(f.trees.iter().all(|t| t.r_mass.iter().all(|&m| m == 0)));
        assert_eq!(f.score(&[0.3, 0.3]).unwrap(), 1.0);
    }

    #[test]
    fn initialization_conserves_mass() {
        let mut f = forest(2, 3, 3, 64, Mode::Static);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.11) % 1.0])
            .collect();
        f.initialize(&pts).unwrap();
        for t in &f.trees {
            assert_eq!(t.r_mass[0], 40);
            let leaves: u64 = t.leaves().map(|i| t.r_mass[i]).sum();
            assert_eq!(leaves, 40);
            assert!(t.l_mass.iter().all(|&m| m == 0));
        }
        assert_eq!(f.items_in_window, 0);
    }

    #[test]
    fn oversized_initialization_is_downsampled() {
        let mut f = forest(1, 2, 2, 10, Mode::Static);
        let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0]).collect();
        f.initialize(&pts).unwrap();
        assert!(f.trees.iter().all(|t| t.r_mass[0] == 10));
    }

    #[test]
    fn second_initialization_is_rejected() {
        let mut f = forest(1, 1, 1, 4, Mode::Static);
        f.initialize(&[vec![0.5]]).unwrap();
        assert!(f.initialize(&[vec![0.5]]).is_err());
    }

    #[test]
    fn full_window_on_one_point_scores_zero() {
        let mut f = forest(3, 4, 3, 16, Mode::Static);
        let p = vec![0.2, 0.7, 0.4];
        f.initialize(&vec![p.clone(); 16]).unwrap();
        assert_eq!(f.score(&p).unwrap(), 0.0);
    }

    #[test]
    fn empty_region_scores_one() {
        let mut f = forest(1, 1, 3, 8, Mode::Static);
        f.initialize(&vec![vec![0.0]; 8]).unwrap();
        let t = &f.trees[0];
        let probe = (0..=100)
            .map(|i| vec![i as f64 / 100.0])
            .find(|x| t.r_mass[t.leaf_of(x)] == 0);
        if let Some(x) = probe {
            assert_eq!(f.score(&x).unwrap(), 1.0);
        }
        assert_eq!(f.score(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn static_forest_rejects_updates() {
        let mut f = forest(1, 1, 1, 4, Mode::Static);
        assert!(matches!(f.update(&[0.5]), Err(Error::StaticMode)));
    }

    #[test]
    fn window_swap_semantics() {
        let mut f = forest(2, 4, 3, 8, Mode::Dynamic);
        let a = vec![0.1, 0.1];
        let b = vec![0.9, 0.9];
        f.initialize(&vec![a.clone(); 8]).unwrap();
        let before_a = f.score(&a).unwrap();
        let before_b = f.score(&b).unwrap();
        for _ in 0..7 {
            f.update(&b).unwrap();
        }
        assert_eq!(f.score(&a).unwrap(), before_a);
        assert_eq!(f.score(&b).unwrap(), before_b);
        assert_eq!(f.items_in_window, 7);
        f.update(&b).unwrap();
        assert_eq!(f.items_in_window, 0);
        assert_eq!(f.score(&b).unwrap(), 0.0);
        for t in &f.trees {
            assert_eq!(t.r_mass[t.leaf_of(&b)], 8);
            assert!(t.l_mass.iter().all(|&m| m == 0));
        }
    }

    #[test]
    fn json_round_trip_preserves_scores() {
        let mut f = forest(3, 4, 4, 32, Mode::Dynamic);
        let pts: Vec<Vec<f64>> = (0..32)
            .map(|i| vec![(i as f64 * 0.13) % 1.0, (i as f64 * 0.71) % 1.0, 0.5])
            .collect();
        f.initialize(&pts).unwrap();
        f.update(&[0.3, 0.3, 0.3]).unwrap();
        let back = HalfSpaceForest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        for p in &pts {
            assert_eq!(back.score(p).unwrap(), f.score(p).unwrap());
        }
    }

    #[test]
    fn dimension_is_checked() {
        let f = forest(2, 1, 1, 4, Mode::Static);
        assert!(matches!(
            f.score(&[0.1]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
