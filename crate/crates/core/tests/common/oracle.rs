//! Independent reference computations by brute-force enumeration.

use pgmsynth::domain::Domain;
use pgmsynth::mechanisms::MeasurementLog;
use pgmsynth::pgm::{estimate_total, GraphicalModel};

/// Row-major digits of full-domain cell `c`.
pub fn decode(sizes: &[usize], mut c: usize) -> Vec<usize> {
    let mut x = vec![0; sizes.len()];
    for k in (0..sizes.len()).rev() {
        x[k] = c % sizes[k];
        c /= sizes[k];
    }
    x
}

/// Row-major index of `x` restricted to `attrs`.
pub fn encode(sizes: &[usize], attrs: &[usize], x: &[usize]) -> usize {
    attrs.iter().fold(0, |acc, &a| acc * sizes[a] + x[a])
}

/// Full joint of a model by summing potentials over every cell.
pub fn brute_joint(model: &GraphicalModel) -> Vec<f64> {
    let sizes = model.domain().sizes();
    let n: usize = sizes.iter().product();
    let cliques = model.tree().cliques();
    let scores: Vec<f64> = (0..n)
        .map(|c| {
            let x = decode(&sizes, c);
            cliques
                .iter()
                .zip(model.theta())
                .map(|(k, th)| th[encode(&sizes, k.attrs(), &x)])
                .sum()
        })
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Marginal of a full joint over sorted `attrs`.
pub fn project(sizes: &[usize], joint: &[f64], attrs: &[usize]) -> Vec<f64> {
    let cells: usize = attrs.iter().map(|&a| sizes[a]).product();
    let mut out = vec![0.0; cells];
    for (c, &p) in joint.iter().enumerate() {
        out[encode(sizes, attrs, &decode(sizes, c))] += p;
    }
    out
}

/// Euclidean projection onto the probability simplex.
pub fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        css += x;
        let t = (css - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimum over the full simplex of the solver's loss, in count units, by
/// accelerated projected gradient on the explicit joint distribution.
pub fn simplex_minimum(domain: &Domain, log: &MeasurementLog, iters: usize) -> f64 {
    let sizes = domain.sizes();
    let n: usize = sizes.iter().product();
    let total = estimate_total(log).unwrap_or(0.0);
    let sigma0 = log.iter().map(|m| m.sigma).fold(f64::INFINITY, f64::min);
    struct T {
        map: Vec<usize>,
        a: Vec<f64>,
        b: Vec<f64>,
        lambda: f64,
    }
    let terms: Vec<T> = log
        .iter()
        .map(|m| {
            let (a, b) = m.diagonal();
            T {
                map: (0..n).map(|c| encode(&sizes, m.clique.attrs(), &decode(&sizes, c))).collect(),
                a,
                b: b.iter().map(|x| x / total).collect(),
                lambda: (sigma0 / m.sigma).powi(2),
            }
        })
        .collect();
    let loss_grad = |p: &[f64]| -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut g = vec![0.0; n];
        for t in &terms {
            let mut mu = vec![0.0; t.a.len()];
            for (c, &pc) in p.iter().enumerate() {
                mu[t.map[c]] += pc;
            }
            let r: Vec<f64> = mu.iter().zip(&t.a).zip(&t.b).map(|((m, a), b)| a * m - b).collect();
            loss += t.lambda * r.iter().map(|x| x * x).sum::<f64>();
            for (gc, &k) in g.iter_mut().zip(&t.map) {
                *gc += 2.0 * t.lambda * t.a[k] * r[k];
            }
        }
        (loss, g)
    };
    // Lipschitz bound: ‖MᵀDM‖ ≤ max-preimage · max a².
    let lip: f64 = terms
        .iter()
        .map(|t| {
            let mut pre = vec![0usize; t.a.len()];
            for &k in &t.map {
                pre[k] += 1;
            }
            let amax = t.a.iter().map(|a| a * a).fold(0.0, f64::max);
            2.0 * t.lambda * amax * *pre.iter().max().unwrap() as f64
        })
        .sum();
    let step = 1.0 / lip.max(1e-300);
    let mut x = vec![1.0 / n as f64; n];
    let mut y = x.clone();
    let mut tk = 1.0f64;
    let mut best = f64::INFINITY;
    for _ in 0..iters {
        let (_, g) = loss_grad(&y);
        let z: Vec<f64> = y.iter().zip(&g).map(|(v, gv)| v - step * gv).collect();
        let xn = simplex_projection(&z);
        let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        y = xn
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (tk - 1.0) / tn * (a - b))
            .collect();
        x = xn;
        tk = tn;
        best = best.min(loss_grad(&x).0);
    }
    best * (total / sigma0).powi(2)
}

/// Every spanning tree of the complete graph on `d` nodes with the largest
/// total weight, by enumerating all `(d−1)`-edge subsets.
pub fn max_spanning_tree_brute(d: usize, weight: impl Fn(usize, usize) -> f64) -> (f64, Vec<(usize, usize)>) {
    let edges: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let k = d - 1;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let chosen: Vec<(usize, usize)> = idx.iter().map(|&e| edges[e]).collect();
        if is_spanning_tree(d, &chosen) {
            let w: f64 = chosen.iter().map(|&(i, j)| weight(i, j)).sum();
            if w > best.0 {
                best = (w, chosen);
            }
        }
        // next combination
        let mut p = k;
        loop {
            if p == 0 {
                return best;
            }
            p -= 1;
            if idx[p] < edges.len() - k + p {
                idx[p] += 1;
                for q in p + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
        }
    }
}

fn is_spanning_tree(d: usize, edges: &[(usize, usize)]) -> bool {
    let mut comp: Vec<usize> = (0..d).collect();
    for &(i, j) in edges {
        let (a, b) = (comp[i], comp[j]);
        if a == b {
            return false;
        }
        for c in comp.iter_mut() {
            if *c == b {
                *c = a;
            }
        }
    }
    true
}
