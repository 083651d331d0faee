//! Workload scoring against record-scan oracles.

use std::sync::Arc;

use pgmsynth::domain::{Clique, Domain};
use pgmsynth::evaluation::{
    conjunction_count, conjunction_count_scan, evaluate, marginal_error, random_3way_workload,
    random_conjunction_workload, ConjunctionQuery, Workload,
};
use pgmsynth::Dataset;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_data(sizes: &[usize], n: usize, seed: u64) -> Dataset {
    let names: Vec<String> = (0..sizes.len()).map(|i| format!("Q{i}")).collect();
    let spec: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(sizes.iter().copied()).collect();
    let dom = Arc::new(Domain::from_sizes(&spec).unwrap());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u32>> = (0..n)
        .map(|_| sizes.iter().map(|&s| rng.random_range(0..s as u32)).collect())
        .collect();
    Dataset::from_rows(dom, &rows).unwrap()
}

/// Normalized L1 between two datasets' clique marginals by scanning rows.
fn brute_error(a: &Dataset, b: &Dataset, clique: &[usize]) -> f64 {
    use std::collections::HashMap;
    let mut cells: HashMap<Vec<u32>, (f64, f64)> = HashMap::new();
    for r in a.rows() {
        cells.entry(clique.iter().map(|&i| r[i]).collect()).or_default().0 += 1.0 / a.len() as f64;
    }
    for r in b.rows() {
        cells.entry(clique.iter().map(|&i| r[i]).collect()).or_default().1 += 1.0 / b.len() as f64;
    }
    cells.values().map(|(x, y)| (x - y).abs()).sum()
}

#[test]
fn conjunction_counts_match_a_record_scan() {
    let data = random_data(&[3, 4, 2, 5], 300, 1);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let queries = random_conjunction_workload(data.domain(), 200, 0.5, &mut rng).unwrap();
    for q in &queries {
        let brute = data
            .rows()
            .filter(|r| q.clique.attrs().iter().zip(&q.subsets).all(|(&a, s)| s.contains(&r[a])))
            .count() as u64;
        assert_eq!(conjunction_count_scan(&data, q), brute);
        assert_eq!(conjunction_count(&data, q, 1000).unwrap(), brute as f64);
    }
    let full = ConjunctionQuery::new(data.domain(), Clique::pair(0, 1).unwrap(), vec![vec![0, 1, 2], vec![0, 1, 2, 3]])
        .unwrap();
    assert_eq!(conjunction_count_scan(&data, &full), 300);
}

#[test]
fn all_attributes_join_at_probability_one() {
    let data = random_data(&[2, 2, 2], 1, 0);
    let qs = random_conjunction_workload(data.domain(), 5, 1.0, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
    assert!(qs.iter().all(|q| q.clique.attrs() == [0, 1, 2]));
}

#[test]
fn triples_are_distinct_and_uniform() {
    let data = random_data(&[2; 10], 1, 0);
    let mut counts = std::collections::BTreeMap::new();
    let seeds = 400;
    for seed in 0..seeds {
        let t = random_3way_workload(data.domain(), 50, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let mut sorted = t.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 50);
        for c in t {
            *counts.entry(c).or_insert(0f64) += 1.0;
        }
    }
    // 120 triples, each chosen with probability 50/120 per workload.
    assert_eq!(counts.len(), 120);
    let e = seeds as f64 * 50.0 / 120.0;
    let chi2: f64 = counts.values().map(|o| (o - e).powi(2) / e).sum();
    // Sampling without replacement makes counts less variable than
    // multinomial, so this test is conservative.
    let p = 1.0 - ChiSquared::new(119.0).unwrap().cdf(chi2);
    assert!(p > 1e-3, "p = {p}");
}

#[test]
fn single_record_flip_moves_error_by_two_over_m() {
    let a = random_data(&[3, 3, 3, 3], 40, 5);
    let mut rows: Vec<Vec<u32>> = a.rows().map(<[u32]>::to_vec).collect();
    rows[7][2] = (rows[7][2] + 1) % 3;
    let b = Dataset::from_rows(a.domain_arc().clone(), &rows).unwrap();
    for c in [vec![0, 1, 2], vec![1, 2, 3], vec![0, 1, 3]] {
        let e = marginal_error(&a, &b, &Clique::new(c.clone()).unwrap()).unwrap();
        let expect = if c.contains(&2) { 2.0 / 40.0 } else { 0.0 };
        assert!((e - expect).abs() < 1e-12, "{c:?}: {e}");
    }
}

#[test]
fn identical_data_scores_zero() {
    let a = random_data(&[3, 2, 4, 2], 100, 3);
    let w = Workload::random(a.domain(), 10, 20, vec![Clique::pair(0, 2).unwrap()], &mut ChaCha20Rng::seed_from_u64(1))
        .unwrap();
    let rep = evaluate(&a, &a, &w).unwrap();
    assert_eq!(rep.means.triples, Some(0.0));
    assert_eq!(rep.means.designated, Some(0.0));
    assert_eq!(rep.means.conjunctions, Some(0.0));
    assert_eq!(rep.query_count, 4 + 1 + 20);
}

#[test]
fn workload_documents_roundtrip() {
    let a = random_data(&[3, 2, 4, 2], 10, 3);
    let mut w = Workload::random(a.domain(), 3, 5, vec![], &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    w.seed = Some(7);
    let doc = w.to_document(a.domain());
    let json = serde_json::to_string(&doc).unwrap();
    let back = Workload::from_document(a.domain(), &serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, w);
}

#[test]
fn mismatched_domains_are_rejected() {
    let a = random_data(&[3, 2, 4], 10, 0);
    let b = random_data(&[3, 2, 5], 10, 0);
    assert!(evaluate(&a, &b, &Workload::default()).is_err());
    assert!(random_3way_workload(a.domain(), 2, &mut ChaCha20Rng::seed_from_u64(0)).is_err());
    let one = random_3way_workload(a.domain(), 1, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
    assert_eq!(one, vec![Clique::new(vec![0, 1, 2]).unwrap()]);
}

proptest! {
    #[test]
    fn errors_match_brute_force_and_are_symmetric(seed in any::<u64>(), na in 1usize..60, nb in 1usize..60) {
        let a = random_data(&[2, 3, 2, 3], na, seed);
        let b0 = random_data(&[2, 3, 2, 3], nb, seed ^ 1);
        let b = Dataset::from_flat(a.domain_arc().clone(), b0.flat().to_vec()).unwrap();
        for c in [vec![0, 1, 2], vec![1, 3], vec![0, 2, 3]] {
            let clique = Clique::new(c.clone()).unwrap();
            let e = marginal_error(&a, &b, &clique).unwrap();
            prop_assert!((e - brute_error(&a, &b, &c)).abs() < 1e-12);
            prop_assert!((e - marginal_error(&b, &a, &clique).unwrap()).abs() < 1e-15);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&e));
        }
    }
}
