//! Data model for embedded tissue blocks.
//!
//! A [`Block`] is the unit of prediction: the tile embeddings of every slide
//! cut from one tissue block, each tile carrying integer grid coordinates and
//! the 1-based index of its originating slide. Binary persistence lives in
//! [`format`], synthetic data generation in [`synth`].

mod format;
mod synth;

pub use format::{load_blocks, write_blocks, SCTB_MAGIC, SCTB_VERSION};
pub use synth::{synth_generate, synth_generate_context};

use crate::error::{Result, SctError};
use ndarray::Array2;
use std::collections::HashSet;

/// Block-level ground truth for carcinoma detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionLabel {
    Benign,
    Carcinoma,
    /// Permitted only in inference-only datasets; training rejects it.
    Unknown,
}

/// A Gleason pattern as assigned to one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    None,
    P3,
    P4,
    P5,
}

impl Pattern {
    /// Class index used by the grading head: None=0, P3=1, P4=2, P5=3.
    pub fn class_index(self) -> usize {
        match self {
            Pattern::None => 0,
            Pattern::P3 => 1,
            Pattern::P4 => 2,
            Pattern::P5 => 3,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Pattern> {
        match i {
            0 => Some(Pattern::None),
            1 => Some(Pattern::P3),
            2 => Some(Pattern::P4),
            3 => Some(Pattern::P5),
            _ => None,
        }
    }
}

/// Primary and secondary Gleason pattern of a carcinoma block.
///
/// Invariant: `primary == None` iff `secondary == None`, and a pattern of
/// `None` is only valid on benign blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradingLabel {
    pub primary: Pattern,
    pub secondary: Pattern,
}

/// One tissue block: `n` tile embeddings with grid coordinates and slide
/// membership, plus labels.
#[derive(Debug, Clone)]
pub struct Block {
    pub block_id: String,
    /// `n × d` tile embeddings.
    pub features: Array2<f32>,
    /// `n × 2` integer tile-grid coordinates `(x, y)` per tile.
    pub coords: Array2<i32>,
    /// 1-based slide index per tile; values form a contiguous set `1..=n_slides`.
    pub slide_idx: Vec<u16>,
    pub label: DetectionLabel,
    pub grading: Option<GradingLabel>,
}

impl Block {
    pub fn n_tiles(&self) -> usize {
        self.features.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_slides(&self) -> usize {
        self.slide_idx.iter().copied().max().unwrap_or(0) as usize
    }

    /// Check every block invariant, naming the block and tile on failure.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_tiles();
        if n == 0 {
            return Err(SctError::Input(format!("block {}: empty block", self.block_id)));
        }
        if self.coords.nrows() != n || self.slide_idx.len() != n {
            return Err(SctError::Input(format!(
                "block {}: features/coords/slide_idx length mismatch",
                self.block_id
            )));
        }
        for (t, row) in self.features.outer_iter().enumerate() {
            if let Some(_) = row.iter().find(|v| !v.is_finite()) {
                return Err(SctError::Data(format!(
                    "block {}: non-finite feature in tile {t}",
                    self.block_id
                )));
            }
        }
        let n_slides = self.n_slides();
        let mut seen_slides = vec![false; n_slides + 1];
        for &s in &self.slide_idx {
            if s == 0 {
                return Err(SctError::Data(format!(
                    "block {}: slide index 0 (slides are 1-based)",
                    self.block_id
                )));
            }
            seen_slides[s as usize] = true;
        }
        if seen_slides[1..].iter().any(|&p| !p) {
            return Err(SctError::Data(format!(
                "block {}: slide indices are not contiguous 1..={n_slides}",
                self.block_id
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for t in 0..n {
            let key = (self.slide_idx[t], self.coords[[t, 0]], self.coords[[t, 1]]);
            if !seen.insert(key) {
                return Err(SctError::Data(format!(
                    "block {}: duplicate coordinates {:?} within slide {} at tile {t}",
                    self.block_id,
                    (key.1, key.2),
                    key.0
                )));
            }
        }
        if let Some(g) = self.grading {
            let primary_none = g.primary == Pattern::None;
            let secondary_none = g.secondary == Pattern::None;
            if primary_none != secondary_none {
                return Err(SctError::Data(format!(
                    "block {}: grading patterns must be both set or both None",
                    self.block_id
                )));
            }
            let benign = self.label == DetectionLabel::Benign;
            if primary_none != benign {
                return Err(SctError::Data(format!(
                    "block {}: grading pattern None must coincide with a Benign label",
                    self.block_id
                )));
            }
        }
        Ok(())
    }
}

/// Shift each slide's coordinates so its minimum corner sits at (0, 0).
///
/// Relative geometry within a slide is unchanged; the operation is
/// idempotent.
pub fn normalize_coords(block: &Block) -> Block {
    let n = block.n_tiles();
    let n_slides = block.n_slides();
    let mut min_xy = vec![(i32::MAX, i32::MAX); n_slides + 1];
    for t in 0..n {
        let s = block.slide_idx[t] as usize;
        let (x, y) = (block.coords[[t, 0]], block.coords[[t, 1]]);
        min_xy[s].0 = min_xy[s].0.min(x);
        min_xy[s].1 = min_xy[s].1.min(y);
    }
    let mut coords = block.coords.clone();
    for t in 0..n {
        let s = block.slide_idx[t] as usize;
        coords[[t, 0]] -= min_xy[s].0;
        coords[[t, 1]] -= min_xy[s].1;
    }
    Block {
        coords,
        ..block.clone()
    }
}

/// Configuration for the synthetic generator. Ranges are inclusive.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_blocks: usize,
    pub tiles_per_slide: (usize, usize),
    pub slides_per_block: (usize, usize),
    /// Embedding dimensionality of generated tiles.
    pub embed_dim: usize,
    /// Maximum radius (grid units) of a planted carcinoma focus.
    pub focus_radius: i32,
    /// Mean offset magnitude separating carcinoma tiles from benign ones.
    pub carcinoma_shift: f64,
    pub noise_sigma: f64,
    /// Target fraction of carcinoma blocks (Bernoulli per block).
    pub carcinoma_fraction: f64,
    /// Distribution over (primary, secondary) pattern pairs for positives.
    pub pattern_mix: Vec<(Pattern, Pattern, f64)>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_blocks: 100,
            tiles_per_slide: (20, 60),
            slides_per_block: (1, 3),
            embed_dim: 64,
            focus_radius: 2,
            carcinoma_shift: 2.0,
            noise_sigma: 1.0,
            carcinoma_fraction: 0.5,
            pattern_mix: vec![
                (Pattern::P3, Pattern::P3, 0.35),
                (Pattern::P3, Pattern::P4, 0.20),
                (Pattern::P4, Pattern::P3, 0.15),
                (Pattern::P4, Pattern::P4, 0.12),
                (Pattern::P4, Pattern::P5, 0.06),
                (Pattern::P5, Pattern::P4, 0.05),
                (Pattern::P3, Pattern::P5, 0.03),
                (Pattern::P5, Pattern::P3, 0.02),
                (Pattern::P5, Pattern::P5, 0.02),
            ],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(SctError::Config("n_blocks must be positive".into()));
        }
        let (tl, th) = self.tiles_per_slide;
        let (sl, sh) = self.slides_per_block;
        if tl == 0 || tl > th {
            return Err(SctError::Config(format!("empty tiles_per_slide range {tl}..={th}")));
        }
        if sl == 0 || sl > sh {
            return Err(SctError::Config(format!("empty slides_per_block range {sl}..={sh}")));
        }
        if sh > u16::MAX as usize {
            return Err(SctError::Config("slides_per_block exceeds u16".into()));
        }
        if self.embed_dim == 0 || self.embed_dim > u16::MAX as usize {
            return Err(SctError::Config("embed_dim out of range".into()));
        }
        if self.focus_radius < 1 {
            return Err(SctError::Config("focus_radius must be >= 1".into()));
        }
        if !(self.noise_sigma > 0.0) {
            return Err(SctError::Config("noise_sigma must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.carcinoma_fraction) {
            return Err(SctError::Config("carcinoma_fraction must lie in [0, 1]".into()));
        }
        if self.pattern_mix.is_empty() {
            return Err(SctError::Config("pattern_mix must not be empty".into()));
        }
        for &(p, s, w) in &self.pattern_mix {
            if p == Pattern::None || s == Pattern::None {
                return Err(SctError::Config("pattern_mix entries must use patterns 3..5".into()));
            }
            if !(w > 0.0) {
                return Err(SctError::Config("pattern_mix weights must be positive".into()));
            }
        }
        Ok(())
    }
}
