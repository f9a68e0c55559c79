//! Item co-occurrence graph with symmetric normalization and per-user slicing.
//!
//! Two items are adjacent when some user's training sequence contains both;
//! every interacted item also carries a self-loop so isolated items keep their
//! own signal. The normalized matrix is stored once in CSR form and each
//! user's dense L x L block is gathered on demand, so the per-user path never
//! touches an N x N buffer.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::interactions::SplitDataset;
use crate::matrix::Mat;
use crate::Result;

/// Symmetrically normalized co-occurrence adjacency in CSR layout.
#[derive(Debug, Clone)]
pub struct HyperGraph {
    num_items: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
    degrees: Vec<u32>,
}

/// Dense block of the normalized adjacency restricted to one user's items.
#[derive(Debug, Clone)]
pub struct HyperedgeSlice {
    pub items: Vec<u32>,
    pub sub_adjacency: Mat,
}

/// Build the binary co-occurrence graph over all training sequences and
/// normalize it as `D^{-1/2} A D^{-1/2}`, where `D` counts the nonzero
/// entries per row.
pub fn build_cooccurrence(split: &SplitDataset) -> Result<HyperGraph> {
    let n = split.num_items;
    let mut rows: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
    let mut any = false;
    for user in &split.users {
        if user.train_seq.is_empty() {
            continue;
        }
        any = true;
        let distinct: BTreeSet<u32> = user.train_seq.iter().copied().collect();
        for &j in &distinct {
            let row = &mut rows[j as usize];
            for &k in &distinct {
                row.insert(k);
            }
        }
    }
    if !any {
        return Err(CoreError::EmptyCorpus);
    }

    let degrees: Vec<u32> = rows.iter().map(|r| r.len() as u32).collect();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for (j, row) in rows.iter().enumerate() {
        for &k in row {
            col_indices.push(k);
            values.push(1.0 / crate::math::sqrt((degrees[j] as u64 * degrees[k as usize] as u64) as f64));
        }
        row_offsets.push(col_indices.len());
    }
    Ok(HyperGraph { num_items: n, row_offsets, col_indices, values, degrees })
}

impl HyperGraph {
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Nonzero count of the item's adjacency row (zero for never-trained items).
    pub fn degree(&self, item: u32) -> u32 {
        self.degrees[item as usize]
    }

    /// Normalized adjacency entry, 0 when the items never co-occur.
    pub fn entry(&self, j: u32, k: u32) -> f64 {
        let start = self.row_offsets[j as usize];
        let end = self.row_offsets[j as usize + 1];
        match self.col_indices[start..end].binary_search(&k) {
            Ok(pos) => self.values[start + pos],
            Err(_) => 0.0,
        }
    }

    /// Gather the dense block for one user's item list, in list order.
    pub fn slice(&self, items: &[u32]) -> Result<HyperedgeSlice> {
        let mut seen = BTreeSet::new();
        for &it in items {
            if it as usize >= self.num_items {
                return Err(CoreError::IdOutOfRange {
                    kind: "item",
                    id: it as usize,
                    bound: self.num_items,
                });
            }
            if !seen.insert(it) {
                return Err(CoreError::DuplicateItem(it));
            }
        }
        let l = items.len();
        let mut sub = Mat::zeros(l, l);
        for (p, &j) in items.iter().enumerate() {
            let start = self.row_offsets[j as usize];
            let end = self.row_offsets[j as usize + 1];
            let cols = &self.col_indices[start..end];
            for (q, &k) in items.iter().enumerate() {
                if let Ok(pos) = cols.binary_search(&k) {
                    sub[(p, q)] = self.values[start + pos];
                }
            }
        }
        Ok(HyperedgeSlice { items: items.to_vec(), sub_adjacency: sub })
    }

    /// All stored `(row, col, value)` triples in row-major order.
    pub fn triples(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.num_items).flat_map(move |j| {
            let start = self.row_offsets[j];
            let end = self.row_offsets[j + 1];
            self.col_indices[start..end]
                .iter()
                .zip(&self.values[start..end])
                .map(move |(&k, &v)| (j as u32, k, v))
        })
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.num_items, self.num_items);
        for (j, k, v) in self.triples() {
            m[(j as usize, k as usize)] = v;
        }
        m
    }
}
