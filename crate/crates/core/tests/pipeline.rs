//! End-to-end runs of both pipeline modes.

mod common;

use std::sync::Arc;

use pgmsynth::census::CensusTransform;
use pgmsynth::domain::{Attribute, Domain, Values};
use pgmsynth::pipeline::{run, run_mst, run_nist_mst, Manifest, Mode, PipelineConfig, DEFAULT_DELTA};
use pgmsynth::selection::spans;
use pgmsynth::{Dataset, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn config(mode: Mode, epsilon: f64) -> PipelineConfig {
    PipelineConfig {
        mode,
        epsilon,
        seed: 7,
        provisional: (mode == Mode::NistMst).then(|| "unused.csv".into()),
        iters: 500,
        workload_triples: 10,
        workload_conjunctions: 20,
        ..PipelineConfig::default()
    }
}

#[test]
fn nist_mst_spends_exactly_epsilon() {
    let data = common::chain_dataset(1, 3000, &[3, 4, 2, 5, 3]);
    let prov = common::chain_dataset(2, 3000, &[3, 4, 2, 5, 3]);
    let dom = data.domain_arc().clone();
    for eps in [0.3, 1.0, 8.0] {
        let out = run_nist_mst(&config(Mode::NistMst, eps), dom.clone(), &data, &prov).unwrap();
        assert_eq!(out.ledger.len(), 2);
        let spent = out.ledger.epsilon(DEFAULT_DELTA).unwrap();
        assert!((spent - eps).abs() < 1e-9, "{spent} vs {eps}");
        assert!((out.manifest.epsilon_spent - spent).abs() < 1e-15);
        assert_eq!(out.synthetic.domain(), data.domain());
    }
}

#[test]
fn mst_stays_within_budget_and_spans() {
    let data = common::chain_dataset(3, 3000, &[3, 4, 2, 5, 3]);
    let dom = data.domain_arc().clone();
    for eps in [0.3, 1.0, 8.0] {
        let out = run_mst(&config(Mode::Mst, eps), dom.clone(), &data).unwrap();
        let spent = out.ledger.epsilon(DEFAULT_DELTA).unwrap();
        assert!(spent <= eps, "{spent} vs {eps}");
        let pairs: Vec<(usize, usize)> = out
            .manifest
            .selection
            .cliques
            .iter()
            .filter(|c| c.len() == 2)
            .map(|c| (dom.require(&c[0]).unwrap(), dom.require(&c[1]).unwrap()))
            .collect();
        assert!(spans(5, &pairs));
    }
}

#[test]
fn errors_shrink_with_budget() {
    let data = common::chain_dataset(5, 5000, &[3, 4, 2, 5]);
    let prov = common::chain_dataset(6, 5000, &[3, 4, 2, 5]);
    let dom = data.domain_arc().clone();
    let err = |eps| {
        run_nist_mst(&config(Mode::NistMst, eps), dom.clone(), &data, &prov)
            .unwrap()
            .report
            .means
            .triples
            .unwrap()
    };
    assert!(err(8.0) < err(0.1));
}

#[test]
fn same_seed_same_output() {
    let data = common::chain_dataset(8, 1000, &[3, 2, 4]);
    let dom = data.domain_arc().clone();
    let a = run_mst(&config(Mode::Mst, 1.0), dom.clone(), &data).unwrap();
    let b = run_mst(&config(Mode::Mst, 1.0), dom.clone(), &data).unwrap();
    assert_eq!(a.synthetic.flat(), b.synthetic.flat());
    assert_eq!(a.manifest, b.manifest);
    let mut other = config(Mode::Mst, 1.0);
    other.seed = 8;
    assert_ne!(run_mst(&other, dom, &data).unwrap().synthetic.flat(), a.synthetic.flat());
}

#[test]
fn special_triple_is_measured_with_its_weight() {
    let data = common::chain_dataset(9, 2000, &[3, 4, 2, 5]);
    let prov = common::chain_dataset(10, 2000, &[3, 4, 2, 5]);
    let dom = data.domain_arc().clone();
    let mut c = config(Mode::NistMst, 0.3);
    c.special = vec![vec!["A0".into(), "A2".into(), "A3".into()]];
    let out = run_nist_mst(&c, dom, &data, &prov).unwrap();
    let sel = &out.manifest.selection;
    let k = sel.cliques.iter().position(|x| x == &["A0", "A2", "A3"]).expect("special triple");
    assert_eq!(sel.weights[k], 8.0);
    for pair in [["A0", "A2"], ["A0", "A3"], ["A2", "A3"]] {
        let k = sel.cliques.iter().position(|x| x == &pair).expect("special pair");
        assert_eq!(sel.weights[k], 2.0);
    }
}

fn census_data(n: usize, seed: u64) -> Dataset {
    let vh = ["0", "5000", "12340", "25000", "9999999"];
    let iw = ["0", "1200", "1234", "2500", "4999", "9999998"];
    let dom = Arc::new(
        Domain::new(vec![
            Attribute::new("SEX", Values::Labels(vec!["M".into(), "F".into()])),
            Attribute::new("VALUEH", Values::Labels(vh.map(String::from).to_vec())),
            Attribute::new("INCWAGE", Values::Labels(iw.map(String::from).to_vec())),
        ])
        .unwrap(),
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let s = rng.random_range(0..2u32);
            vec![s, (s + rng.random_range(0..2u32)) % 5, (2 * s + rng.random_range(0..3u32)) % 6]
        })
        .collect();
    Dataset::from_rows(dom, &rows).unwrap()
}

#[test]
fn census_transforms_run_end_to_end() {
    let data = census_data(3000, 1);
    let prov = census_data(3000, 2);
    let mut c = config(Mode::NistMst, 1.0);
    c.census = Some(CensusTransform::default());
    c.special = vec![vec!["SEX".into(), "INCWAGE_A".into()]];
    let out = run_nist_mst(&c, data.domain_arc().clone(), &data, &prov).unwrap();
    let ct = CensusTransform::default();
    let working = ct.transformed_domain(data.domain()).unwrap();
    assert_eq!(out.synthetic.domain(), &ct.reversed_domain(&working).unwrap());
    assert_eq!(out.synthetic.len() as f64, out.manifest.records as f64);
    assert_eq!(out.manifest.oneway_weights.len(), 4);
    let a = working.require("INCWAGE_A").unwrap();
    let w = &out.manifest.oneway_weights;
    let sex = working.require("SEX").unwrap();
    assert!((w[a] / w[sex] - 2.0).abs() < 1e-12, "{w:?}");
    let spent = out.ledger.epsilon(DEFAULT_DELTA).unwrap();
    assert!((spent - 1.0).abs() < 1e-9);
}

#[test]
fn files_in_files_out() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::chain_dataset(11, 500, &[2, 3, 2]);
    let domain_path = dir.path().join("domain.json");
    std::fs::write(&domain_path, serde_json::to_string(&data.domain().to_spec()).unwrap()).unwrap();
    let data_path = dir.path().join("data.csv");
    data.write_delimited(std::fs::File::create(&data_path).unwrap(), b',').unwrap();
    let out_path = dir.path().join("synth.csv");
    let c = PipelineConfig {
        domain: domain_path,
        data: data_path,
        out: Some(out_path.clone()),
        ..config(Mode::Mst, 1.0)
    };
    let out = run(&c).unwrap();
    out.write(&c).unwrap();
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), out.synthetic.len() + 1);
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(c.manifest_path().unwrap()).unwrap()).unwrap();
    assert_eq!(manifest, out.manifest);
    assert!(manifest.epsilon_spent <= 1.0);
}

#[test]
fn config_errors() {
    let mut c = config(Mode::NistMst, 1.0);
    c.provisional = None;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = config(Mode::Mst, 1.0);
    c.provisional = Some("p.csv".into());
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    assert!(matches!(run(&c), Err(Error::Config(_))));
    let c = config(Mode::Mst, -1.0);
    assert!(c.validate().is_err());
}
