//! Sparse-lattice machinery: cross-slide tile indexing, receptive-field
//! construction, and the pooling-cell partition.
//!
//! All three operations are pure functions of coordinates; token features
//! never enter here.

use crate::error::{Result, SctError};
use ndarray::{Array2, ArrayView2};
use std::collections::HashMap;

/// Sentinel for an absent neighbor slot in a receptive field.
pub const PAD: usize = usize::MAX;

/// Globally unique per-block coordinates after cross-slide adjustment.
#[derive(Debug, Clone)]
pub struct AdjustedCoords {
    /// `n × 2` adjusted `(x, y)` coordinates, unique across the block.
    pub coords: Array2<i64>,
    /// Offset applied to each slide (index 0 = slide 1).
    pub per_slide_offsets: Vec<(i64, i64)>,
}

/// Per-center neighbor lists over a `k × k` kernel.
///
/// Slot `(dy + k/2) * k + (dx + k/2)` of center `i` holds the token at
/// `(x_i + dx, y_i + dy)`, or [`PAD`] if that lattice cell is empty. The
/// mask mirrors the slots: true iff the slot holds a token.
#[derive(Debug, Clone)]
pub struct ReceptiveFieldIndex {
    pub centers: Vec<usize>,
    pub fields: Array2<usize>,
    pub mask: Array2<bool>,
    pub k: usize,
}

/// One pooling cell: its coordinate on the next-stage lattice and the
/// member tokens, ordered by `(y, x)`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub coord: (i64, i64),
    pub members: Vec<usize>,
}

/// Disjoint cover of all tokens by stride-`s` cells anchored at the block's
/// minimum corner. Cells are ordered by `(y, x)` of their coordinate.
#[derive(Debug, Clone)]
pub struct CellPartition {
    pub cell_of_token: Vec<usize>,
    pub cells: Vec<Cell>,
    pub stride: usize,
    pub pool_size: usize,
}

/// Make tile coordinates unique across slides.
///
/// Slide 1 keeps its coordinates; slide `j` is shifted by the cumulative
/// `(max_x + 1, max_y + 1)` of all earlier slides, where the maxima are
/// taken over unadjusted coordinates. The margin of one grid unit per axis
/// keeps the adjusted ranges disjoint, so no two tiles can collide.
pub fn index_tiles(coords: &ArrayView2<i32>, slide_idx: &[u16]) -> Result<AdjustedCoords> {
    let n = coords.nrows();
    if n == 0 || slide_idx.len() != n {
        return Err(SctError::Input("index_tiles: empty or mismatched inputs".into()));
    }
    let n_slides = *slide_idx.iter().max().unwrap() as usize;
    let mut max_xy = vec![(i64::MIN, i64::MIN); n_slides + 1];
    let mut seen_slide = vec![false; n_slides + 1];
    let mut seen = HashMap::with_capacity(n);
    for t in 0..n {
        let s = slide_idx[t] as usize;
        if s == 0 {
            return Err(SctError::Input("index_tiles: slide indices are 1-based".into()));
        }
        let (x, y) = (coords[[t, 0]] as i64, coords[[t, 1]] as i64);
        if x < 0 || y < 0 {
            return Err(SctError::Input(format!(
                "index_tiles: tile {t} has negative coordinates ({x}, {y}); normalize first"
            )));
        }
        if seen.insert((s, x, y), t).is_some() {
            return Err(SctError::Input(format!(
                "index_tiles: duplicate coordinates ({x}, {y}) within slide {s}"
            )));
        }
        seen_slide[s] = true;
        max_xy[s].0 = max_xy[s].0.max(x);
        max_xy[s].1 = max_xy[s].1.max(y);
    }
    if seen_slide[1..].iter().any(|&p| !p) {
        return Err(SctError::Input("index_tiles: slide indices not contiguous".into()));
    }

    let mut per_slide_offsets = Vec::with_capacity(n_slides);
    let mut acc = (0i64, 0i64);
    for s in 1..=n_slides {
        per_slide_offsets.push(acc);
        acc.0 += max_xy[s].0 + 1;
        acc.1 += max_xy[s].1 + 1;
    }

    let mut out = Array2::<i64>::zeros((n, 2));
    for t in 0..n {
        let off = per_slide_offsets[slide_idx[t] as usize - 1];
        out[[t, 0]] = coords[[t, 0]] as i64 + off.0;
        out[[t, 1]] = coords[[t, 1]] as i64 + off.1;
    }
    Ok(AdjustedCoords { coords: out, per_slide_offsets })
}

/// Build the `k × k` receptive field of every token over unique coordinates.
pub fn build_receptive_fields(coords: &ArrayView2<i64>, k: usize) -> Result<ReceptiveFieldIndex> {
    if k == 0 || k % 2 == 0 {
        return Err(SctError::Config(format!("kernel size must be odd and positive, got {k}")));
    }
    let n = coords.nrows();
    let h = (k / 2) as i64;
    let mut lookup = HashMap::with_capacity(n);
    for t in 0..n {
        if lookup.insert((coords[[t, 0]], coords[[t, 1]]), t).is_some() {
            return Err(SctError::Input(format!(
                "build_receptive_fields: duplicate coordinate ({}, {})",
                coords[[t, 0]],
                coords[[t, 1]]
            )));
        }
    }
    let mut fields = Array2::<usize>::from_elem((n, k * k), PAD);
    let mut mask = Array2::<bool>::from_elem((n, k * k), false);
    for i in 0..n {
        let (x, y) = (coords[[i, 0]], coords[[i, 1]]);
        for dy in -h..=h {
            for dx in -h..=h {
                let slot = ((dy + h) as usize) * k + (dx + h) as usize;
                if let Some(&j) = lookup.get(&(x + dx, y + dy)) {
                    fields[[i, slot]] = j;
                    mask[[i, slot]] = true;
                }
            }
        }
        debug_assert_eq!(fields[[i, (k * k) / 2]], i);
    }
    Ok(ReceptiveFieldIndex { centers: (0..n).collect(), fields, mask, k })
}

/// Partition tokens into non-overlapping stride-`s` cells.
///
/// Only `p == s` is supported: the paper's configuration, and the only one
/// with an unambiguous anchor.
pub fn partition_cells(coords: &ArrayView2<i64>, p: usize, s: usize) -> Result<CellPartition> {
    if p != s {
        return Err(SctError::Config(format!(
            "unsupported pooling configuration: pool size {p} != stride {s}"
        )));
    }
    if s == 0 {
        return Err(SctError::Config("stride must be >= 1".into()));
    }
    let n = coords.nrows();
    if n == 0 {
        return Err(SctError::Input("partition_cells: no tokens".into()));
    }
    let min_x = (0..n).map(|t| coords[[t, 0]]).min().unwrap();
    let min_y = (0..n).map(|t| coords[[t, 1]]).min().unwrap();
    let si = s as i64;

    let mut by_cell: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for t in 0..n {
        let a = (coords[[t, 0]] - min_x) / si;
        let b = (coords[[t, 1]] - min_y) / si;
        by_cell.entry((a, b)).or_default().push(t);
    }
    let mut cells: Vec<Cell> = by_cell
        .into_iter()
        .map(|(coord, mut members)| {
            members.sort_by_key(|&t| (coords[[t, 1]], coords[[t, 0]]));
            Cell { coord, members }
        })
        .collect();
    cells.sort_by_key(|c| (c.coord.1, c.coord.0));

    let mut cell_of_token = vec![0usize; n];
    for (ci, cell) in cells.iter().enumerate() {
        for &t in &cell.members {
            cell_of_token[t] = ci;
        }
    }
    Ok(CellPartition { cell_of_token, cells, stride: s, pool_size: p })
}

/// Next-stage coordinates: one `(a, b)` pair per cell, in cell order.
pub fn cell_coords(part: &CellPartition) -> Array2<i64> {
    let mut out = Array2::<i64>::zeros((part.cells.len(), 2));
    for (ci, cell) in part.cells.iter().enumerate() {
        out[[ci, 0]] = cell.coord.0;
        out[[ci, 1]] = cell.coord.1;
    }
    out
}
