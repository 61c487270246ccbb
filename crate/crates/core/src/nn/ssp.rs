//! Spatially sparse pooling: reduce each partition cell to one token on the
//! next, coarser lattice.

use crate::geometry::{cell_coords, CellPartition};
use crate::real::{real, Real};
use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Debug, Clone)]
pub struct SspCache {
    /// For max pooling: the winning token per (cell, channel). Ties go to
    /// the first member in canonical `(y, x)` order.
    argmax: Option<Array2<usize>>,
}

/// Element-wise max or mean over each cell's members; one output token per
/// nonempty cell, with the cell coordinate as its position.
pub fn ssp_forward<T: Real>(
    tokens: &Array2<T>,
    part: &CellPartition,
    mode: PoolMode,
) -> (Array2<T>, Array2<i64>, SspCache) {
    let z = tokens.ncols();
    let m = part.cells.len();
    let mut out = Array2::<T>::zeros((m, z));
    let cache = match mode {
        PoolMode::Max => {
            let mut argmax = Array2::<usize>::zeros((m, z));
            for (ci, cell) in part.cells.iter().enumerate() {
                for ch in 0..z {
                    let mut best = cell.members[0];
                    let mut best_v = tokens[[best, ch]];
                    for &t in &cell.members[1..] {
                        if tokens[[t, ch]] > best_v {
                            best_v = tokens[[t, ch]];
                            best = t;
                        }
                    }
                    out[[ci, ch]] = best_v;
                    argmax[[ci, ch]] = best;
                }
            }
            SspCache { argmax: Some(argmax) }
        }
        PoolMode::Avg => {
            for (ci, cell) in part.cells.iter().enumerate() {
                let inv = T::one() / real::<T>(cell.members.len() as f64);
                for &t in &cell.members {
                    let mut row = out.row_mut(ci);
                    row.scaled_add(inv, &tokens.row(t));
                }
            }
            SspCache { argmax: None }
        }
    };
    (out, cell_coords(part), cache)
}

pub fn ssp_backward<T: Real>(
    d_out: &Array2<T>,
    part: &CellPartition,
    cache: &SspCache,
    n_tokens: usize,
    mode: PoolMode,
) -> Array2<T> {
    let z = d_out.ncols();
    let mut d_tokens = Array2::<T>::zeros((n_tokens, z));
    match mode {
        PoolMode::Max => {
            let argmax = cache.argmax.as_ref().expect("max cache");
            for ci in 0..part.cells.len() {
                for ch in 0..z {
                    d_tokens[[argmax[[ci, ch]], ch]] += d_out[[ci, ch]];
                }
            }
        }
        PoolMode::Avg => {
            for (ci, cell) in part.cells.iter().enumerate() {
                let inv = T::one() / real::<T>(cell.members.len() as f64);
                for &t in &cell.members {
                    let mut row = d_tokens.row_mut(t);
                    row.scaled_add(inv, &d_out.row(ci));
                }
            }
        }
    }
    d_tokens
}
