//! Choosing which marginals to measure.
//!
//! Public selection builds a mutual-information maximum spanning tree on a
//! provisional dataset and augments it with triangles. Private selection is
//! Kruskal's algorithm with every greedy choice replaced by an exponential
//! mechanism draw.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::{PrivacyParams, RdpLedger};
use crate::dataset::Dataset;
use crate::domain::{Clique, Domain};
use crate::error::{Error, Result};
use crate::marginal::{marginal, MarginalVector, DEFAULT_CELL_CAP};
use crate::mechanisms::{exponential_mechanism, MeasurementLog};
use crate::par;
use crate::pgm::{estimate, EstimateOptions, GraphicalModel};

/// Disjoint sets with path halving and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.sets -= 1;
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// Number of disjoint sets.
    pub fn count(&self) -> usize {
        self.sets
    }
}

/// Undirected graph on `0..d` with weighted edges keyed by `(i, j)`, `i < j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    nodes: usize,
    weights: BTreeMap<(usize, usize), f64>,
}

impl WeightedGraph {
    pub fn new(nodes: usize) -> Self {
        WeightedGraph {
            nodes,
            weights: BTreeMap::new(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    fn key(i: usize, j: usize) -> (usize, usize) {
        (i.min(j), i.max(j))
    }

    /// Sets the weight of `{i, j}`; self-loops are ignored.
    pub fn set(&mut self, i: usize, j: usize, w: f64) {
        assert!(i < self.nodes && j < self.nodes, "edge endpoint out of range");
        if i != j {
            self.weights.insert(Self::key(i, j), w);
        }
    }

    pub fn add(&mut self, i: usize, j: usize, dw: f64) {
        if let Some(w) = self.weights.get_mut(&Self::key(i, j)) {
            *w += dw;
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.weights.get(&Self::key(i, j)).copied()
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        self.weights.remove(&Self::key(i, j));
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }
}

/// Kruskal on descending weight; equal weights resolve to the
/// lexicographically smaller pair. Returns a maximum spanning forest.
pub fn maximum_spanning_forest(graph: &WeightedGraph) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize, f64)> = graph.edges().collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut uf = UnionFind::new(graph.nodes());
    let mut out = Vec::new();
    for (i, j, _) in edges {
        if uf.union(i, j) {
            out.push((i, j));
        }
    }
    out
}

/// Maximum spanning tree; `Disconnected` unless it spans every node.
pub fn maximum_spanning_tree(graph: &WeightedGraph) -> Result<Vec<(usize, usize)>> {
    let forest = maximum_spanning_forest(graph);
    if forest.len() + 1 < graph.nodes() {
        return Err(Error::Disconnected);
    }
    Ok(forest)
}

/// Mutual information in nats of a 2-D count table (row-major, `nj` columns).
pub fn mutual_information_counts(counts: &[f64], nj: usize) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let ni = counts.len() / nj;
    let mut pi = vec![0.0; ni];
    let mut pj = vec![0.0; nj];
    for a in 0..ni {
        for b in 0..nj {
            let p = counts[a * nj + b] / total;
            pi[a] += p;
            pj[b] += p;
        }
    }
    let mut mi = 0.0;
    for a in 0..ni {
        for b in 0..nj {
            let p = counts[a * nj + b] / total;
            if p > 0.0 {
                mi += p * (p / (pi[a] * pj[b])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Mutual information in nats of the empirical joint of attributes `i`, `j`.
pub fn mutual_information(data: &Dataset, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::SameAttribute(i));
    }
    let c = Clique::pair(i, j)?;
    let mu = marginal(data, &c, usize::MAX)?;
    let nj = data.domain().size(c.attrs()[1]);
    Ok(mutual_information_counts(&mu.values, nj))
}

/// Selected cliques with their relative measurement weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub cliques: Vec<Clique>,
    pub weights: Vec<f64>,
}

impl SelectionResult {
    fn push(&mut self, c: Clique, w: f64) {
        if !self.cliques.contains(&c) {
            self.cliques.push(c);
            self.weights.push(w);
        }
    }
}

#[derive(Debug, Clone)]
pub struct PublicSelectionOptions {
    /// Added to the mutual information of special pairs.
    pub boost: f64,
    /// Minimum normalized L1 gap for a triangle to be added.
    pub threshold: f64,
    /// Cliques with this many cells or more are dropped.
    pub cell_cap: usize,
}

impl Default for PublicSelectionOptions {
    fn default() -> Self {
        PublicSelectionOptions {
            boost: 100.0,
            threshold: 0.1,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }
}

/// Weight of the special 3-way clique at privacy level `epsilon`.
pub fn special_triple_weight(epsilon: f64) -> f64 {
    if epsilon <= 0.3 {
        8.0
    } else if epsilon >= 4.0 {
        4.0
    } else {
        6.0
    }
}

/// Special pairs and triples implied by the configured special cliques: each
/// triple contributes its three pairs, and three pairs closing a triangle
/// contribute the triple.
pub fn expand_special(special: &[Clique]) -> (Vec<Clique>, Vec<Clique>) {
    let mut pairs: Vec<Clique> = Vec::new();
    let mut triples: Vec<Clique> = Vec::new();
    let push = |v: &mut Vec<Clique>, c: Clique| {
        if !v.contains(&c) {
            v.push(c);
        }
    };
    for c in special {
        match c.len() {
            2 => push(&mut pairs, c.clone()),
            3 => {
                let a = c.attrs();
                push(&mut triples, c.clone());
                for (x, y) in [(a[0], a[1]), (a[0], a[2]), (a[1], a[2])] {
                    push(&mut pairs, Clique::pair(x, y).expect("distinct"));
                }
            }
            _ => {}
        }
    }
    let snapshot = pairs.clone();
    for (n, p) in snapshot.iter().enumerate() {
        for q in &snapshot[n + 1..] {
            let u = p.union(q);
            if u.len() == 3 {
                let a = u.attrs();
                let closes = [(a[0], a[1]), (a[0], a[2]), (a[1], a[2])]
                    .iter()
                    .all(|&(x, y)| snapshot.contains(&Clique::pair(x, y).expect("distinct")));
                if closes {
                    push(&mut triples, u);
                }
            }
        }
    }
    (pairs, triples)
}

/// Complete mutual-information graph over all attributes.
pub fn mutual_information_graph(data: &Dataset) -> Result<WeightedGraph> {
    let d = data.domain().len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let mis = par::map_slice(&pairs, |&(i, j)| mutual_information(data, i, j));
    let mut g = WeightedGraph::new(d);
    for ((i, j), mi) in pairs.into_iter().zip(mis) {
        g.set(i, j, mi?);
    }
    Ok(g)
}

/// Mutual-information spanning tree on public data, plus special cliques and
/// triangles that the tree fails to explain.
pub fn select_public(
    provisional: &Dataset,
    params: PrivacyParams,
    special: &[Clique],
    opts: &PublicSelectionOptions,
) -> Result<SelectionResult> {
    if provisional.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let domain = provisional.domain();
    for c in special {
        domain.check_clique(c)?;
    }
    let (special_pairs, special_triples) = expand_special(special);
    let mut graph = mutual_information_graph(provisional)?;
    for p in &special_pairs {
        graph.add(p.attrs()[0], p.attrs()[1], opts.boost);
    }
    let tree = maximum_spanning_tree(&graph)?;
    let mut result = SelectionResult::default();
    for &(i, j) in &tree {
        result.push(Clique::pair(i, j)?, 1.0);
    }
    for p in &special_pairs {
        result.push(p.clone(), 1.0);
    }
    for t in &special_triples {
        result.push(t.clone(), 1.0);
    }
    for c in augment_triangles(provisional, &tree, opts.threshold, opts.cell_cap)? {
        result.push(c, 1.0);
    }
    let mut out = SelectionResult::default();
    for c in result.cliques {
        if domain.cells_f64(&c) >= opts.cell_cap as f64 {
            log::info!("dropping {} ({} cells)", domain.clique_names(&c).join(","), domain.cells_f64(&c));
            continue;
        }
        let w = if special_triples.contains(&c) {
            special_triple_weight(params.epsilon)
        } else if special_pairs.contains(&c) {
            2.0
        } else {
            1.0
        };
        out.push(c, w);
    }
    Ok(out)
}

/// Triangle score `‖M_ijk − M̃_ijk‖₁ / m`, where `M̃` is the maximum-entropy
/// fit of `M_ij` and `M_ik`.
pub fn triangle_error(data: &Dataset, hub: usize, j: usize, k: usize, cell_cap: usize) -> Result<f64> {
    let m = data.len();
    if m == 0 {
        return Ok(0.0);
    }
    let domain = data.domain();
    let triple = Clique::new(vec![hub, j, k])?;
    let exact = marginal(data, &triple, cell_cap)?;
    // Work on the three-attribute sub-domain.
    let sub = Arc::new(domain.project(&triple));
    let local = |a: usize| triple.attrs().iter().position(|&x| x == a).expect("in triple");
    let lt = Clique::new(vec![0, 1, 2])?;
    let full = MarginalVector::new(&sub, lt.clone(), exact.values.clone())?;
    let hj = Clique::pair(local(hub), local(j))?;
    let hk = Clique::pair(local(hub), local(k))?;
    let mij = full.project(&sub, &hj)?;
    let mik = full.project(&sub, &hk)?;
    let model = GraphicalModel::from_consistent_marginals(sub.clone(), &[mij, mik], cell_cap)?;
    let est = model.model_marginal(&lt, cell_cap)?;
    let l1: f64 = est.values.iter().zip(&full.values).map(|(a, b)| (a - b).abs()).sum();
    Ok(l1 / m as f64)
}

/// Extra pairs and triples for each hub of `tree` whose neighbor pairs are
/// poorly explained by the tree alone.
pub fn augment_triangles(
    data: &Dataset,
    tree: &[(usize, usize)],
    threshold: f64,
    cell_cap: usize,
) -> Result<Vec<Clique>> {
    let domain = data.domain();
    let d = domain.len();
    let mut nbrs = vec![Vec::new(); d];
    for &(i, j) in tree {
        nbrs[i].push(j);
        nbrs[j].push(i);
    }
    for v in &mut nbrs {
        v.sort_unstable();
    }
    let mut jobs = Vec::new();
    for (hub, ns) in nbrs.iter().enumerate() {
        for (a, &j) in ns.iter().enumerate() {
            for &k in &ns[a + 1..] {
                jobs.push((hub, j, k));
            }
        }
    }
    let scores = par::map_slice(&jobs, |&(hub, j, k)| {
        let triple = Clique::new(vec![hub, j, k])?;
        if domain.cells_f64(&triple) >= cell_cap as f64 {
            return Ok(None);
        }
        triangle_error(data, hub, j, k, cell_cap).map(Some)
    });
    let mut per_hub: Vec<WeightedGraph> = (0..d).map(|_| WeightedGraph::new(d)).collect();
    for (&(hub, j, k), e) in jobs.iter().zip(scores) {
        if let Some(e) = e? {
            if e >= threshold {
                per_hub[hub].set(j, k, e);
            }
        }
    }
    let mut out = Vec::new();
    for (hub, g) in per_hub.iter().enumerate() {
        for (j, k) in maximum_spanning_forest(g) {
            out.push(Clique::pair(j, k)?);
            out.push(Clique::new(vec![hub, j, k])?);
        }
    }
    Ok(out)
}

/// Quality scores `q_ij = ‖M_ij(D) − M̄_ij‖₁` for every pair, where `M̄` is
/// the independence estimate from the one-way model.
pub fn pair_scores(data: &Dataset, model: &GraphicalModel, cell_cap: usize) -> Result<Vec<((usize, usize), f64)>> {
    let d = data.domain().len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let beliefs = model.belief_propagation();
    let scores = par::map_slice(&pairs, |&(i, j)| -> Result<f64> {
        let c = Clique::pair(i, j)?;
        let exact = marginal(data, &c, cell_cap)?;
        let est = model.model_marginal_with(&beliefs, &c, cell_cap)?;
        Ok(exact.values.iter().zip(&est.values).map(|(a, b)| (a - b).abs()).sum())
    });
    pairs
        .into_iter()
        .zip(scores)
        .map(|(p, s)| s.map(|s| (p, s)))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct PrivateSelectionOptions {
    pub cell_cap: usize,
    /// Solver settings for the one-way model.
    pub estimate: EstimateOptions,
}

/// Differentially private Kruskal: with `r` components in `(A, initial)`,
/// runs `r − 1` exponential-mechanism rounds over crossing pairs, each
/// charged `ρ/(r−1)`. Returns `initial` followed by the chosen pairs.
#[allow(clippy::too_many_arguments)]
pub fn select_private<R: Rng + ?Sized>(
    data: &Dataset,
    oneway_log: &MeasurementLog,
    rho: f64,
    initial: &[(usize, usize)],
    rng: &mut R,
    ledger: &mut RdpLedger,
    opts: &PrivateSelectionOptions,
) -> Result<Vec<(usize, usize)>> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "rho",
            value: rho,
        });
    }
    let domain = data.domain();
    let d = domain.len();
    for i in 0..d {
        let covered = oneway_log
            .iter()
            .any(|m| m.clique.attrs() == [i]);
        if !covered {
            return Err(Error::MissingOneWay(domain.name(i).to_string()));
        }
    }
    let mut uf = UnionFind::new(d);
    let mut out = Vec::with_capacity(initial.len() + d);
    for &(i, j) in initial {
        if i == j || i >= d || j >= d {
            return Err(Error::InvalidClique(format!("initial pair ({i},{j})")));
        }
        uf.union(i, j);
        out.push((i.min(j), i.max(j)));
    }
    let r = uf.count();
    if r <= 1 {
        log::info!("initial pairs already span all attributes; no selection budget spent");
        return Ok(out);
    }
    let cap = if opts.cell_cap == 0 { DEFAULT_CELL_CAP } else { opts.cell_cap };
    let est_opts = EstimateOptions {
        cell_cap: cap,
        ..opts.estimate.clone()
    };
    let oneway = estimate(oneway_log, data.domain_arc().clone(), &est_opts)?;
    let scores = pair_scores(data, &oneway, cap)?;
    let eps = (8.0 * rho / (r - 1) as f64).sqrt();
    for _ in 0..r - 1 {
        let mut cand = Vec::new();
        let mut q = Vec::new();
        for &((i, j), s) in &scores {
            if !uf.same(i, j) {
                cand.push((i, j));
                q.push(s);
            }
        }
        // Scores have sensitivity 1, so an ε-DP draw samples ∝ exp(ε q / 2).
        let pick = exponential_mechanism(&q, eps / 2.0, 1.0, rng, ledger)?;
        let (i, j) = cand[pick];
        uf.union(i, j);
        out.push((i, j));
    }
    Ok(out)
}

/// Whether `pairs` connect all of `0..d`.
pub fn spans(d: usize, pairs: &[(usize, usize)]) -> bool {
    let mut uf = UnionFind::new(d);
    for &(i, j) in pairs {
        uf.union(i, j);
    }
    uf.count() <= 1
}

/// Convenience: cliques of a domain's attribute pairs.
pub fn pairs_to_cliques(domain: &Domain, pairs: &[(usize, usize)]) -> Result<Vec<Clique>> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let c = Clique::pair(i, j)?;
            domain.check_clique(&c)?;
            Ok(c)
        })
        .collect()
}
