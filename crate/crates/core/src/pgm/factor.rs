//! Dense factors over sorted attribute sets.
//!
//! Values are usually log-potentials. The attribute set may be empty, in
//! which case the factor holds a single scalar.

use crate::domain::Domain;
use crate::marginal::ProjectionMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub attrs: Vec<usize>,
    pub values: Vec<f64>,
}

pub(crate) fn cells(domain: &Domain, attrs: &[usize]) -> usize {
    attrs.iter().map(|&a| domain.size(a)).product()
}

pub(crate) fn cells_f64(domain: &Domain, attrs: &[usize]) -> f64 {
    attrs.iter().map(|&a| domain.size(a) as f64).product()
}

/// Sorted union of two sorted sets.
pub(crate) fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v.sort_unstable();
    v.dedup();
    v
}

/// Sorted intersection of two sorted sets.
pub(crate) fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect()
}

pub(crate) fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Numerically stable `log Σ exp`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Factor {
    pub fn constant(domain: &Domain, attrs: Vec<usize>, value: f64) -> Self {
        let n = cells(domain, &attrs);
        Factor {
            attrs,
            values: vec![value; n],
        }
    }

    pub fn zeros(domain: &Domain, attrs: Vec<usize>) -> Self {
        Factor::constant(domain, attrs, 0.0)
    }

    /// `self[c] += other[proj(c)]`; `other`'s attributes must be a subset.
    pub fn add_broadcast(&mut self, domain: &Domain, other: &Factor) {
        debug_assert!(is_subset(&other.attrs, &self.attrs));
        if other.attrs == self.attrs {
            self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
            return;
        }
        let table = ProjectionMap::new(domain, &self.attrs, &other.attrs).table();
        self.add_with_table(&table, &other.values, 1.0);
    }

    /// `self[c] += scale·values[table[c]]`.
    pub fn add_with_table(&mut self, table: &[usize], values: &[f64], scale: f64) {
        for (a, &t) in self.values.iter_mut().zip(table) {
            *a += scale * values[t];
        }
    }

    /// Log-sum-exp onto a subset of the attributes.
    pub fn logsumexp_to(&self, domain: &Domain, target: &[usize]) -> Factor {
        let table = ProjectionMap::new(domain, &self.attrs, target).table();
        Factor {
            attrs: target.to_vec(),
            values: logsumexp_with_table(&self.values, &table, cells(domain, target)),
        }
    }

    /// Plain sum onto a subset of the attributes.
    pub fn sum_to(&self, domain: &Domain, target: &[usize]) -> Factor {
        let table = ProjectionMap::new(domain, &self.attrs, target).table();
        Factor {
            attrs: target.to_vec(),
            values: sum_with_table(&self.values, &table, cells(domain, target)),
        }
    }

    /// Log-space product: the factor over the union of both scopes.
    pub fn log_product(&self, domain: &Domain, other: &Factor) -> Factor {
        let mut out = Factor::zeros(domain, union(&self.attrs, &other.attrs));
        out.add_broadcast(domain, self);
        out.add_broadcast(domain, other);
        out
    }

    /// Exponentiates and normalizes to a probability vector.
    pub fn softmax(&self) -> Vec<f64> {
        softmax(&self.values)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|x| (x - lse).exp()).collect()
}

pub(crate) fn sum_with_table(values: &[f64], table: &[usize], out_cells: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_cells];
    for (v, &t) in values.iter().zip(table) {
        out[t] += v;
    }
    out
}

pub(crate) fn logsumexp_with_table(values: &[f64], table: &[usize], out_cells: usize) -> Vec<f64> {
    let mut max = vec![f64::NEG_INFINITY; out_cells];
    for (v, &t) in values.iter().zip(table) {
        if *v > max[t] {
            max[t] = *v;
        }
    }
    let mut acc = vec![0.0; out_cells];
    for (v, &t) in values.iter().zip(table) {
        if max[t] > f64::NEG_INFINITY {
            acc[t] += (v - max[t]).exp();
        }
    }
    acc.iter()
        .zip(&max)
        .map(|(a, m)| if *m == f64::NEG_INFINITY { *m } else { m + a.ln() })
        .collect()
}
