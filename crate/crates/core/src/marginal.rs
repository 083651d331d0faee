//! Dense marginal count vectors.
//!
//! Cells are laid out row-major over the clique's attributes in ascending
//! index order, so the last attribute varies fastest.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::domain::{Clique, Domain};
use crate::error::{Error, Result};
use crate::par;

/// Default cap on the number of cells any single clique may have.
pub const DEFAULT_CELL_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalVector {
    pub clique: Clique,
    pub values: Vec<f64>,
}

impl MarginalVector {
    pub fn new(domain: &Domain, clique: Clique, values: Vec<f64>) -> Result<Self> {
        domain.check_clique(&clique)?;
        let cells = domain.cells_f64(&clique);
        if values.len() as f64 != cells {
            return Err(Error::LengthMismatch(format!(
                "clique {clique} has {cells} cells, got {} values",
                values.len()
            )));
        }
        Ok(MarginalVector { clique, values })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sums out every attribute not in `sub`.
    pub fn project(&self, domain: &Domain, sub: &Clique) -> Result<MarginalVector> {
        if !sub.is_subset_of(&self.clique) {
            return Err(Error::InvalidClique(format!("{sub} is not a subset of {}", self.clique)));
        }
        let map = ProjectionMap::new(domain, self.clique.attrs(), sub.attrs());
        let mut out = vec![0.0; map.target_cells];
        for (c, &v) in self.values.iter().enumerate() {
            out[map.target(c)] += v;
        }
        Ok(MarginalVector {
            clique: sub.clone(),
            values: out,
        })
    }

    /// Normalized L1 distance between the frequency vectors of two marginals.
    /// An all-zero side is treated as the zero vector.
    pub fn normalized_l1(&self, other: &MarginalVector) -> f64 {
        let (a, b) = (self.total(), other.total());
        let sa = if a > 0.0 { 1.0 / a } else { 0.0 };
        let sb = if b > 0.0 { 1.0 / b } else { 0.0 };
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x * sa - y * sb).abs())
            .sum()
    }
}

/// Row-major strides of a clique's attributes.
pub fn strides(domain: &Domain, attrs: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; attrs.len()];
    for k in (0..attrs.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * domain.size(attrs[k + 1]);
    }
    s
}

/// Maps each cell of an attribute set to the cell of a subset it projects
/// onto. Both sets are sorted; the subset may be empty (one cell).
#[derive(Debug, Clone)]
pub struct ProjectionMap {
    /// For each source attribute position: (size, stride in the target, or 0).
    dims: Vec<(usize, usize)>,
    pub source_cells: usize,
    pub target_cells: usize,
}

impl ProjectionMap {
    pub fn new(domain: &Domain, source: &[usize], target: &[usize]) -> Self {
        let tstrides = strides(domain, target);
        let dims: Vec<(usize, usize)> = source
            .iter()
            .map(|&a| {
                let stride = target
                    .iter()
                    .position(|&b| b == a)
                    .map_or(0, |p| tstrides[p]);
                (domain.size(a), stride)
            })
            .collect();
        let source_cells = dims.iter().map(|d| d.0).product();
        let target_cells = target.iter().map(|&a| domain.size(a)).product();
        ProjectionMap {
            dims,
            source_cells,
            target_cells,
        }
    }

    /// Target cell of source cell `c`.
    pub fn target(&self, mut c: usize) -> usize {
        let mut t = 0;
        for &(size, stride) in self.dims.iter().rev() {
            t += (c % size) * stride;
            c /= size;
        }
        t
    }

    /// The full source-to-target table.
    pub fn table(&self) -> Vec<usize> {
        // Odometer walk avoids a div/mod per attribute per cell.
        let mut out = Vec::with_capacity(self.source_cells);
        let k = self.dims.len();
        let mut digits = vec![0usize; k];
        let mut t = 0usize;
        for _ in 0..self.source_cells {
            out.push(t);
            for p in (0..k).rev() {
                let (size, stride) = self.dims[p];
                digits[p] += 1;
                t += stride;
                if digits[p] < size {
                    break;
                }
                t -= stride * size;
                digits[p] = 0;
            }
        }
        out
    }
}

/// Flat cell index of every record in `data` for `clique`.
pub fn cell_indices(data: &Dataset, clique: &Clique) -> Vec<usize> {
    let domain = data.domain();
    let s = strides(domain, clique.attrs());
    let attrs = clique.attrs();
    let d = domain.len();
    let chunks = par::map_chunks(data.flat(), par::ROW_CHUNK * d.max(1), |chunk| {
        chunk
            .chunks(d)
            .map(|row| attrs.iter().zip(&s).map(|(&a, &st)| row[a] as usize * st).sum())
            .collect::<Vec<usize>>()
    });
    chunks.concat()
}

/// Exact counts of `clique` over `data`.
pub fn marginal(data: &Dataset, clique: &Clique, cell_cap: usize) -> Result<MarginalVector> {
    let domain = data.domain();
    domain.check_clique(clique)?;
    let cells = domain.cells_capped(clique, cell_cap)?;
    let s = strides(domain, clique.attrs());
    let attrs = clique.attrs();
    let d = domain.len();
    let mut counts = vec![0u64; cells];
    if cells <= 4096 {
        let partial = par::map_chunks(data.flat(), par::ROW_CHUNK * d, |chunk| {
            let mut local = vec![0u64; cells];
            for row in chunk.chunks(d) {
                let c: usize = attrs.iter().zip(&s).map(|(&a, &st)| row[a] as usize * st).sum();
                local[c] += 1;
            }
            local
        });
        for p in partial {
            counts.iter_mut().zip(p).for_each(|(c, x)| *c += x);
        }
    } else {
        for c in cell_indices(data, clique) {
            counts[c] += 1;
        }
    }
    Ok(MarginalVector {
        clique: clique.clone(),
        values: counts.into_iter().map(|c| c as f64).collect(),
    })
}
