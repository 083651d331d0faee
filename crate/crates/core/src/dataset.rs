//! Encoded records and delimited-text I/O.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Records over a domain, stored as a flat row-major buffer of value indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    domain: Arc<Domain>,
    cells: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer, checking every index.
    pub fn from_flat(domain: Arc<Domain>, cells: Vec<u32>) -> Result<Self> {
        let d = domain.len();
        if d == 0 {
            if !cells.is_empty() {
                return Err(Error::LengthMismatch("records for an empty domain".into()));
            }
        } else if !cells.len().is_multiple_of(d) {
            return Err(Error::LengthMismatch(format!(
                "buffer of {} values is not a multiple of {d} attributes",
                cells.len()
            )));
        }
        let sizes = domain.sizes();
        if d > 0 {
            for (r, row) in cells.chunks(d).enumerate() {
                for (i, &v) in row.iter().enumerate() {
                    if v as usize >= sizes[i] {
                        return Err(Error::UnknownValue {
                            row: r + 1,
                            column: domain.name(i).to_string(),
                            value: v.to_string(),
                        });
                    }
                }
            }
        }
        Ok(Dataset { domain, cells })
    }

    pub fn from_rows(domain: Arc<Domain>, rows: &[Vec<u32>]) -> Result<Self> {
        let d = domain.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::LengthMismatch(format!(
                "row of length {} in a {d}-attribute domain",
                bad.len()
            )));
        }
        Dataset::from_flat(domain, rows.concat())
    }

    pub fn empty(domain: Arc<Domain>) -> Self {
        Dataset {
            domain,
            cells: Vec::new(),
        }
    }

    pub(crate) fn from_flat_unchecked(domain: Arc<Domain>, cells: Vec<u32>) -> Self {
        debug_assert!(domain.is_empty() || cells.len().is_multiple_of(domain.len()));
        Dataset { domain, cells }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<Domain> {
        &self.domain
    }

    /// Record count `m`.
    pub fn len(&self) -> usize {
        match self.domain.len() {
            0 => 0,
            d => self.cells.len() / d,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, r: usize) -> &[u32] {
        let d = self.domain.len();
        &self.cells[r * d..(r + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.cells.chunks(self.domain.len().max(1))
    }

    pub fn flat(&self) -> &[u32] {
        &self.cells
    }

    /// Values of one attribute, in row order.
    pub fn column(&self, i: usize) -> Vec<u32> {
        self.rows().map(|r| r[i]).collect()
    }

    /// Builds a dataset from whole columns (all of length `m`).
    pub fn from_columns(domain: Arc<Domain>, columns: &[Vec<u32>]) -> Result<Self> {
        let d = domain.len();
        if columns.len() != d {
            return Err(Error::LengthMismatch(format!(
                "{} columns for {d} attributes",
                columns.len()
            )));
        }
        let m = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::LengthMismatch("columns of unequal length".into()));
        }
        let mut cells = Vec::with_capacity(m * d);
        for r in 0..m {
            cells.extend(columns.iter().map(|c| c[r]));
        }
        Dataset::from_flat(domain, cells)
    }

    /// Appends one record.
    pub fn push(&mut self, row: &[u32]) -> Result<()> {
        if row.len() != self.domain.len() {
            return Err(Error::LengthMismatch("record length".into()));
        }
        for (i, &v) in row.iter().enumerate() {
            if v as usize >= self.domain.size(i) {
                return Err(Error::UnknownValue {
                    row: self.len() + 1,
                    column: self.domain.name(i).to_string(),
                    value: v.to_string(),
                });
            }
        }
        self.cells.extend_from_slice(row);
        Ok(())
    }

    /// Writes a header row then one labelled row per record.
    pub fn write_delimited<W: Write>(&self, out: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
        let d = self.domain.len();
        w.write_record((0..d).map(|i| self.domain.name(i)))?;
        let mut labels: Vec<String> = vec![String::new(); d];
        for row in self.rows().filter(|_| d > 0) {
            for (i, &v) in row.iter().enumerate() {
                labels[i] = self.domain.attribute(i).label(v as usize).into_owned();
            }
            w.write_record(&labels)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads delimited text whose header is a permutation of the domain's
/// attributes. Row numbers in errors count data rows from 1.
pub fn load_dataset<R: Read>(source: R, domain: Arc<Domain>, delimiter: u8) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    let d = domain.len();
    // position in file -> attribute index
    let mut col_attr = Vec::with_capacity(header.len());
    let mut seen = vec![false; d];
    for name in header.iter() {
        let i = domain
            .index_of(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::HeaderMismatch(format!("column `{name}` repeated")));
        }
        col_attr.push(i);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::HeaderMismatch(format!(
            "column `{}` missing",
            domain.name(missing)
        )));
    }
    let mut cells = Vec::new();
    let mut row = vec![0u32; d];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (pos, label) in rec.iter().enumerate() {
            let i = col_attr[pos];
            let idx = domain
                .attribute(i)
                .index_of(label)
                .ok_or_else(|| Error::UnknownValue {
                    row: r + 1,
                    column: domain.name(i).to_string(),
                    value: label.to_string(),
                })?;
            row[i] = idx as u32;
        }
        cells.extend_from_slice(&row);
    }
    Ok(Dataset::from_flat_unchecked(domain, cells))
}
