//! Shared fixtures for integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::sync::Arc;

use pgmsynth::domain::{Clique, Domain};
use pgmsynth::mechanisms::{Measurement, MeasurementLog, Transform};
use pgmsynth::Dataset;

/// SEX, LABFORCE, SCHOOL.
pub fn census_toy_domain() -> Arc<Domain> {
    Arc::new(
        Domain::from_labels(&[
            ("SEX", &["M", "F"][..]),
            ("LABFORCE", &["---", "N", "Y"][..]),
            ("SCHOOL", &["N", "Y"][..]),
        ])
        .unwrap(),
    )
}

/// True 3-way counts of the 1000-record toy sample, row-major over
/// (SEX, LABFORCE, SCHOOL).
pub const TRUE_3WAY: [u32; 12] = [74, 82, 36, 29, 313, 3, 85, 73, 252, 30, 23, 0];

pub const TRUE_SEX_LABFORCE: [f64; 6] = [156.0, 65.0, 316.0, 158.0, 282.0, 23.0];
pub const TRUE_LABFORCE_SCHOOL: [f64; 6] = [159.0, 155.0, 288.0, 59.0, 336.0, 3.0];

pub const NOISY_SEX_LABFORCE: [f64; 6] = [132.428, 124.549, 244.365, 173.633, 318.029, -21.358];
pub const NOISY_LABFORCE_SCHOOL: [f64; 6] = [116.021, 186.826, 287.215, 171.134, 278.498, -46.497];

pub const PGM_SEX_LABFORCE: [f64; 6] = [124.829, 121.696, 254.636, 166.034, 315.177, 0.0];
pub const PGM_LABFORCE_SCHOOL: [f64; 6] = [110.029, 180.834, 276.477, 160.396, 254.636, 0.0];
pub const PGM_SEX_SCHOOL: [f64; 4] = [378.873, 122.289, 262.269, 218.942];
pub const PGM_3WAY: [f64; 12] = [
    47.221, 77.608, 77.016, 44.68, 254.636, 0.0, 62.808, 103.226, 199.461, 115.716, 0.0, 0.0,
];
pub const PGM_LABFORCE: [f64; 3] = [290.863, 436.873, 254.636];

pub fn toy_dataset() -> Dataset {
    let dom = census_toy_domain();
    let mut rows = Vec::new();
    for (cell, &n) in TRUE_3WAY.iter().enumerate() {
        let row = vec![(cell / 6) as u32, ((cell / 2) % 3) as u32, (cell % 2) as u32];
        for _ in 0..n {
            rows.push(row.clone());
        }
    }
    Dataset::from_rows(dom, &rows).unwrap()
}

/// The two noisy measurements at σ = 50, each with weight 1/√2.
pub fn example_log() -> MeasurementLog {
    let w = 0.5f64.sqrt();
    let m = |attrs: Vec<usize>, noisy: &[f64]| Measurement {
        clique: Clique::new(attrs).unwrap(),
        transform: Transform::Identity { weight: w },
        values: noisy.iter().map(|x| w * x).collect(),
        sigma: 50.0,
    };
    MeasurementLog {
        measurements: vec![m(vec![0, 1], &NOISY_SEX_LABFORCE), m(vec![1, 2], &NOISY_LABFORCE_SCHOOL)],
        rng_seed: None,
    }
}

/// Records from a random chain `x0 → x1 → …` so neighbouring attributes are
/// dependent. Deterministic in `seed`.
pub fn chain_dataset(seed: u64, n: usize, sizes: &[usize]) -> Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let spec: Vec<(String, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| (format!("A{i}"), s))
        .collect();
    let refs: Vec<(&str, usize)> = spec.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    let dom = Arc::new(Domain::from_sizes(&refs).unwrap());
    // Skewed transition tables.
    let tables: Vec<Vec<Vec<f64>>> = (1..sizes.len())
        .map(|i| {
            (0..sizes[i - 1])
                .map(|_| (0..sizes[i]).map(|_| rng.random::<f64>().powi(3)).collect())
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(sizes.len());
        let w0: Vec<f64> = (0..sizes[0]).map(|t| 1.0 + t as f64).collect();
        row.push(draw(&w0, &mut rng));
        for i in 1..sizes.len() {
            row.push(draw(&tables[i - 1][row[i - 1] as usize], &mut rng));
        }
        rows.push(row);
    }
    Dataset::from_rows(dom, &rows).unwrap()
}

pub fn draw<R: rand::Rng>(w: &[f64], rng: &mut R) -> u32 {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (t, &x) in w.iter().enumerate() {
        if u < x {
            return t as u32;
        }
        u -= x;
    }
    (w.len() - 1) as u32
}
