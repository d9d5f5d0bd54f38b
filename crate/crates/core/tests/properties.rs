mod common;

use std::collections::VecDeque;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgehst::cache::{CachePolicy, ScoreCache};
use edgehst::embed::{EdgeCombinator, Scaler};
use edgehst::hst::{ForestParams, HalfSpaceForest, Mode};
use edgehst::metrics::{average_precision, roc_auc};
use edgehst::pipeline::{Components, Weights};
use edgehst::streamgen::temporal_split;
use edgehst::threshold::{classify, fit_threshold};
use edgehst::{TemporalEdge, TemporalGraph, Timestamp};

fn labeled(max: usize) -> impl Strategy<Value = Vec<(f64, u8)>> {
    prop::collection::vec((0u32..40, 0u8..=1), 2..max)
        .prop_map(|v| v.into_iter().map(|(s, l)| (s as f64 / 40.0, l)).collect())
}

fn two_class(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    labeled(max)
        .prop_filter("both classes", |d| d.iter().any(|x| x.1 == 1) && d.iter().any(|x| x.1 == 0))
        .prop_map(|d| d.into_iter().unzip())
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.25f64..1.25, dim)
}

fn forest_params() -> impl Strategy<Value = (usize, ForestParams, u64)> {
    (1usize..=4, 1usize..=4, 1u32..=4, 1usize..=16, any::<u64>()).prop_map(|(dim, trees, height, window, seed)| {
        (dim, ForestParams { trees, height, window }, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn threshold_partition_survives_monotone_transform(data in labeled(200)) {
        let before = fit_threshold(&data).unwrap();
        let warped: Vec<(f64, u8)> = data.iter().map(|&(s, l)| (s.powi(3) * 7.0 + s - 2.0, l)).collect();
        let after = fit_threshold(&warped).unwrap();
        let side = |d: &[(f64, u8)], tau: f64| classify(&d.iter().map(|x| x.0).collect::<Vec<_>>(), tau);
        prop_assert_eq!(side(&data, before.tau_star), side(&warped, after.tau_star));
        prop_assert_eq!(before.objective, after.objective);
    }

    #[test]
    fn threshold_objective_bounds(data in labeled(200)) {
        let r = fit_threshold(&data).unwrap();
        prop_assert!((0.0..=0.5).contains(&r.objective));
        let pred = classify(&data.iter().map(|x| x.0).collect::<Vec<_>>(), r.tau_star);
        let pure = |side: u8| {
            let ls: Vec<u8> = data.iter().zip(&pred).filter(|(_, &p)| p == side).map(|(d, _)| d.1).collect();
            ls.iter().all(|&l| l == ls.first().copied().unwrap_or(0))
        };
        prop_assert_eq!(r.objective == 0.0, pure(0) && pure(1));
        prop_assert_eq!(r.objective, common::threshold_oracle(&data).1);
    }

    #[test]
    fn auc_is_rank_invariant_and_complementary((scores, labels) in two_class(100)) {
        let auc = roc_auc(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        prop_assert_eq!(auc, roc_auc(&warped, &labels).unwrap());
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped = roc_auc(&neg, &labels).unwrap();
        prop_assert!((auc + flipped - 1.0).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&auc));
        let ap = average_precision(&scores, &labels).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
        prop_assert_eq!(auc, common::auc_pairwise(&scores, &labels));
    }

    #[test]
    fn split_concatenation_is_exact(n in 0usize..500, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let items: Vec<usize> = (0..n).collect();
        let (f0, f1) = (a * 0.5, b * 0.5);
        let parts = temporal_split(&items, (f0, f1, 1.0 - f0 - f1)).unwrap();
        let joined: Vec<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
        prop_assert_eq!(joined, items);
    }

    #[test]
    fn hst_conservation_and_bounds(
        (dim, params, seed) in forest_params(),
        pts in prop::collection::vec(point(4), 0..40),
        probes in prop::collection::vec(point(4), 1..10),
    ) {
        let mut f = HalfSpaceForest::build(dim, params, Mode::Dynamic, seed).unwrap();
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p[..dim].to_vec()).collect();
        let n_init = pts.len().min(params.window);
        f.initialize(&pts[..n_init]).unwrap();
        for p in &pts[n_init..] {
            f.update(p).unwrap();
        }
        for t in &f.trees {
            let leaves = t.split_dim.len()..t.r_mass.len();
            prop_assert_eq!(t.r_mass[leaves.clone()].iter().sum::<u64>(), t.r_mass[0]);
            prop_assert_eq!(t.l_mass[leaves].iter().sum::<u64>(), t.l_mass[0]);
            prop_assert!(t.r_mass[0] <= params.window as u64);
        }
        for x in &probes {
            let s = f.score(&x[..dim]).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn extra_reference_mass_never_raises_score(
        (dim, params, seed) in forest_params(),
        pts in prop::collection::vec(point(4), 0..16),
        x in point(4),
    ) {
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p[..dim].to_vec()).take(params.window - 1).collect();
        let x = x[..dim].to_vec();
        let mut without = HalfSpaceForest::build(dim, params, Mode::Static, seed).unwrap();
        without.initialize(&pts).unwrap();
        let mut with = HalfSpaceForest::build(dim, params, Mode::Static, seed).unwrap();
        let mut more = pts.clone();
        more.push(x.clone());
        with.initialize(&more).unwrap();
        prop_assert!(with.score(&x).unwrap() <= without.score(&x).unwrap());
    }

    #[test]
    fn static_scoring_leaves_forest_untouched(
        (dim, params, seed) in forest_params(),
        pts in prop::collection::vec(point(4), 0..16),
        probes in prop::collection::vec(point(4), 1..20),
    ) {
        let mut f = HalfSpaceForest::build(dim, params, Mode::Static, seed).unwrap();
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p[..dim].to_vec()).collect();
        f.initialize(&pts).unwrap();
        let before = f.to_json().unwrap();
        for x in &probes {
            f.score(&x[..dim]).unwrap();
        }
        prop_assert_eq!(before, f.to_json().unwrap());
    }

    #[test]
    fn cache_respects_capacity_and_fifo_order(
        cap in 0usize..6,
        ops in prop::collection::vec((0u8..10, any::<bool>()), 0..200),
    ) {
        for policy in [CachePolicy::Fifo, CachePolicy::Lru, CachePolicy::FullReplace] {
            let mut c = ScoreCache::new(cap, policy);
            let mut model: VecDeque<u8> = VecDeque::new();
            for &(k, read) in &ops {
                if read {
                    c.get(&k);
                } else {
                    c.insert(k, k as u32);
                    if !model.contains(&k) {
                        model.push_back(k);
                        if model.len() > cap {
                            model.pop_front();
                        }
                    }
                }
                prop_assert!(c.len() <= cap);
                if policy == CachePolicy::Fifo {
                    let mut held: Vec<u8> = c.keys().copied().collect();
                    held.sort();
                    let mut want: Vec<u8> = model.iter().copied().collect();
                    want.sort();
                    prop_assert_eq!(held, want);
                }
            }
        }
    }

    #[test]
    fn combinator_symmetry(a in prop::collection::vec(-5.0f64..5.0, 1..8), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 - (seed % 7) as f64 + i as f64).collect();
        let m1 = EdgeCombinator::Mean.combine(&a, &b).unwrap();
        let m2 = EdgeCombinator::Mean.combine(&b, &a).unwrap();
        prop_assert_eq!(m1, m2);
        let d1 = EdgeCombinator::Difference.combine(&a, &b).unwrap();
        let d2 = EdgeCombinator::Difference.combine(&b, &a).unwrap();
        prop_assert!(d1.iter().zip(&d2).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn scaled_embeddings_stay_in_unit_box(
        fit in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..20),
        probe in prop::collection::vec(-100.0f64..100.0, 3),
    ) {
        let s = Scaler::fit(3, fit.iter().map(|v| v.as_slice())).unwrap();
        prop_assert!(s.scale(&probe).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn weighted_score_is_bounded(w in (0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0), c in (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0)) {
        let w = Weights::normalized(w.0, w.1, w.2).unwrap();
        let s = w.combine(Components { source: c.0, destination: c.1, edge: c.2 });
        prop_assert!((-1e-15..=1.0 + 1e-15).contains(&s));
    }

    #[test]
    fn graph_replay_and_sampling_are_deterministic(
        pairs in prop::collection::vec((0u8..12, 0u8..12), 1..120),
        fanout in 1usize..6,
        seed in any::<u64>(),
    ) {
        let edges: Vec<TemporalEdge> = pairs
            .iter()
            .enumerate()
            .map(|(t, (a, b))| TemporalEdge::new(format!("n{a}"), format!("n{b}"), Timestamp::Int(t as i64)))
            .collect();
        let g1 = TemporalGraph::from_edges(&edges).unwrap();
        let g2 = TemporalGraph::from_edges(&edges).unwrap();
        prop_assert!(g1 == g2);
        prop_assert_eq!(g1.edge_count(), edges.len() as u64);
        for v in 0..g1.node_count() as u32 {
            let a = g1.sample_neighbors(v, fanout, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = g2.sample_neighbors(v, fanout, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn random_scorer_ap_approaches_prevalence() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.1) as u8).collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let prevalence = labels.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
    let ap = average_precision(&scores, &labels).unwrap();
    assert!((ap - prevalence).abs() <= 0.05, "ap {ap} prevalence {prevalence}");
}
