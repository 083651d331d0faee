//! Inference and estimation against enumeration oracles.

mod common;

use std::sync::Arc;

use pgmsynth::domain::{Clique, Domain};
use pgmsynth::marginal::marginal;
use pgmsynth::mechanisms::{measure_marginals, GaussianNoise, MeasureOptions, ZeroNoise};
use pgmsynth::pgm::{estimate, EstimateOptions, GraphicalModel, JunctionTree};
use pgmsynth::rng::substream;
use pgmsynth::RdpLedger;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn sizes_domain(sizes: &[usize]) -> Arc<Domain> {
    let names: Vec<String> = (0..sizes.len()).map(|i| format!("X{i}")).collect();
    let spec: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(sizes.iter().copied()).collect();
    Arc::new(Domain::from_sizes(&spec).unwrap())
}

/// Treewidth of the interaction graph by trying every elimination order.
fn treewidth_oracle(d: usize, cliques: &[Clique]) -> usize {
    let mut adj = vec![vec![false; d]; d];
    for c in cliques {
        for &a in c.attrs() {
            for &b in c.attrs() {
                adj[a][b] = a != b;
            }
        }
    }
    fn go(adj: &[Vec<bool>], alive: &mut Vec<bool>, best_so_far: usize, cur: usize) -> usize {
        if !alive.iter().any(|&x| x) || cur >= best_so_far {
            return cur.min(best_so_far);
        }
        let mut best = best_so_far;
        for v in 0..adj.len() {
            if !alive[v] {
                continue;
            }
            let nbrs: Vec<usize> = (0..adj.len()).filter(|&u| alive[u] && adj[v][u]).collect();
            let mut next = adj.to_vec();
            for &a in &nbrs {
                for &b in &nbrs {
                    if a != b {
                        next[a][b] = true;
                    }
                }
            }
            alive[v] = false;
            best = best.min(go(&next, alive, best, cur.max(nbrs.len())));
            alive[v] = true;
        }
        best
    }
    go(&adj, &mut vec![true; d], usize::MAX, 0)
}

#[test]
fn tree_with_attached_triangles_has_width_two() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..20 {
        let d = rng.random_range(4..=8);
        let dom = sizes_domain(&vec![2; d]);
        let mut nbrs = vec![Vec::new(); d];
        let mut cliques = Vec::new();
        for i in 1..d {
            let j = rng.random_range(0..i);
            nbrs[i].push(j);
            nbrs[j].push(i);
            cliques.push(Clique::pair(i, j).unwrap());
        }
        // One triangle per hub with two or more neighbours.
        for (hub, ns) in nbrs.iter().enumerate() {
            if ns.len() >= 2 {
                cliques.push(Clique::new(vec![hub, ns[0], ns[1]]).unwrap());
            }
        }
        let tree = JunctionTree::build(&dom, &cliques, 1 << 20).unwrap();
        let width = treewidth_oracle(d, &cliques);
        assert_eq!(tree.treewidth(), width);
        assert!(width <= 2);
        assert!(tree.has_running_intersection(d));
        assert!(cliques.iter().all(|c| tree.containing(c.attrs()).is_some()));
    }
}

fn random_theta(tree: &JunctionTree, dom: &Domain, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    tree.cliques()
        .iter()
        .map(|c| {
            let n: usize = c.attrs().iter().map(|&a| dom.size(a)).product();
            (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
        })
        .collect()
}

proptest! {
    #[test]
    fn chain_beliefs_match_enumeration(sizes in prop::collection::vec(2usize..5, 3), seed in any::<u64>()) {
        let dom = sizes_domain(&sizes);
        let tree = JunctionTree::build(&dom, &[Clique::pair(0, 1).unwrap(), Clique::pair(1, 2).unwrap()], 1000).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let theta = random_theta(&tree, &dom, &mut rng);
        let model = GraphicalModel::with_theta(dom.clone(), tree, theta, 1.0);
        let joint = common::oracle::brute_joint(&model);
        let beliefs = model.belief_propagation();
        for (k, c) in model.tree().cliques().iter().enumerate() {
            let exact = common::oracle::project(&sizes, &joint, c.attrs());
            let got = beliefs.probabilities(k);
            prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in got.iter().zip(&exact) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unmeasured_marginals_match_enumeration(seed in any::<u64>(), mask in 1u32..32) {
        let sizes = [2usize, 3, 2, 2, 3];
        let dom = sizes_domain(&sizes);
        let cliques = [(0, 1), (1, 2), (1, 3), (3, 4)].map(|(a, b)| Clique::pair(a, b).unwrap());
        let tree = JunctionTree::build(&dom, &cliques, 1000).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let theta = random_theta(&tree, &dom, &mut rng);
        let model = GraphicalModel::with_theta(dom.clone(), tree, theta, 250.0);
        let attrs: Vec<usize> = (0..5).filter(|i| mask & (1 << i) != 0).collect();
        let exact = common::oracle::project(&sizes, &common::oracle::brute_joint(&model), &attrs);
        let got = model.model_marginal(&Clique::new(attrs).unwrap(), 1000).unwrap();
        for (a, b) in got.values.iter().zip(&exact) {
            prop_assert!((a - 250.0 * b).abs() < 1e-8);
        }
    }
}

#[test]
fn example_fit_matches_published_marginals() {
    let model = estimate(&common::example_log(), common::census_toy_domain(), &EstimateOptions::default()).unwrap();
    let sl = model.model_marginal(&Clique::pair(0, 1).unwrap(), 100).unwrap();
    let ls = model.model_marginal(&Clique::pair(1, 2).unwrap(), 100).unwrap();
    for (got, want) in [(&sl.values, &common::PGM_SEX_LABFORCE[..]), (&ls.values, &common::PGM_LABFORCE_SCHOOL[..])] {
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() <= 1.0, "{got:?}");
        }
    }
    assert!((sl.values[1] - 121.696).abs() < 0.05);
    // Both cliques agree on the shared LABFORCE marginal.
    let a = sl.project(model.domain(), &Clique::single(1)).unwrap();
    let b = ls.project(model.domain(), &Clique::single(1)).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-6);
    }
    let ss = model.model_marginal(&Clique::pair(0, 2).unwrap(), 100).unwrap();
    for (a, b) in ss.values.iter().zip(&common::PGM_SEX_SCHOOL) {
        assert!((a - b).abs() <= 1.0);
    }
}

#[test]
fn zero_noise_consistent_marginals_are_reproduced() {
    let data = common::toy_dataset();
    let cliques = [Clique::pair(0, 1).unwrap(), Clique::pair(1, 2).unwrap()];
    let mut ledger = RdpLedger::new();
    let log = measure_marginals(&data, &cliques, &[1.0, 1.0], 1.0, &mut ZeroNoise, &mut ledger, &MeasureOptions::default())
        .unwrap();
    let model = estimate(&log, data.domain_arc().clone(), &EstimateOptions::default()).unwrap();
    for c in &cliques {
        let got = model.model_marginal(c, 100).unwrap();
        let want = marginal(&data, c, 100).unwrap();
        for (a, b) in got.values.iter().zip(&want.values) {
            assert!((a - b).abs() < 1e-6, "{c}: {a} vs {b}");
        }
    }
}

#[test]
fn estimates_beat_raw_noisy_marginals() {
    let data = common::toy_dataset();
    let cliques = [Clique::pair(0, 1).unwrap(), Clique::pair(1, 2).unwrap()];
    let truth: Vec<Vec<f64>> = cliques.iter().map(|c| marginal(&data, c, 100).unwrap().values).collect();
    let w = 0.5f64.sqrt();
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let reps = 200;
    let mut noisy_err = [0.0; 2];
    let mut model_err = [0.0; 2];
    for seed in 0..reps {
        let mut ledger = RdpLedger::new();
        let mut noise = GaussianNoise(substream(seed, "marginals", &[]));
        let log = measure_marginals(&data, &cliques, &[1.0, 1.0], 50.0, &mut noise, &mut ledger, &MeasureOptions::default())
            .unwrap();
        let model = estimate(&log, data.domain_arc().clone(), &EstimateOptions { iters: 500, ..EstimateOptions::default() })
            .unwrap();
        for k in 0..2 {
            let raw: Vec<f64> = log.measurements[k].values.iter().map(|y| y / w).collect();
            noisy_err[k] += l1(&raw, &truth[k]) / reps as f64;
            model_err[k] += l1(&model.model_marginal(&cliques[k], 100).unwrap().values, &truth[k]) / reps as f64;
        }
    }
    for k in 0..2 {
        assert!(model_err[k] < noisy_err[k], "clique {k}: {} vs {}", model_err[k], noisy_err[k]);
    }
}

#[test]
fn loss_never_increases() {
    let opts = EstimateOptions {
        record_trace: true,
        ..EstimateOptions::default()
    };
    let model = estimate(&common::example_log(), common::census_toy_domain(), &opts).unwrap();
    let diag = model.diagnostics.as_ref().unwrap();
    assert!(diag.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(diag.final_loss.is_finite());
}

#[test]
fn oversized_clique_exceeds_cap() {
    let dom = sizes_domain(&[10, 10, 10]);
    let cliques = [Clique::new(vec![0, 1, 2]).unwrap()];
    assert!(JunctionTree::build(&dom, &cliques, 999).is_err());
}
