//! Synthetic datasets with planted, spatially contiguous carcinoma foci.
//!
//! Two generators share the same tissue-shape machinery:
//!
//! * [`synth_generate`] plants mean-shifted tile clusters in positive blocks,
//!   so both context-free pooling and spatial models can separate the
//!   classes.
//! * [`synth_generate_context`] emits pairs of blocks with identical
//!   tile-feature multisets whose label is decided purely by layout
//!   (clustered markers vs scattered markers). Context-free pooling carries
//!   no signal on these; only a model that reads coordinates can.

use super::{Block, DetectionLabel, GradingLabel, Pattern, SynthConfig};
use crate::error::Result;
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic generator; a fixed seed yields a bitwise-identical dataset.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<Block>> {
    Ok(synth_generate_detailed(cfg)?.0)
}

/// As [`synth_generate`], additionally returning the per-block focus mask
/// (true where a tile belongs to a planted carcinoma focus).
pub fn synth_generate_detailed(cfg: &SynthConfig) -> Result<(Vec<Block>, Vec<Vec<bool>>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dirs = Directions::draw(&mut rng, cfg.embed_dim);

    let mut blocks = Vec::with_capacity(cfg.n_blocks);
    let mut masks = Vec::with_capacity(cfg.n_blocks);
    for bi in 0..cfg.n_blocks {
        let carcinoma = rng.gen_bool(cfg.carcinoma_fraction);
        let n_slides = rng.gen_range(cfg.slides_per_block.0..=cfg.slides_per_block.1);
        let mut coords = Vec::new();
        let mut slide_idx: Vec<u16> = Vec::new();
        let mut slide_spans = Vec::new(); // (start, len) per slide
        for s in 1..=n_slides {
            let n_tiles = rng.gen_range(cfg.tiles_per_slide.0..=cfg.tiles_per_slide.1);
            let blob = grow_blob(&mut rng, n_tiles);
            let off = (rng.gen_range(0..=3), rng.gen_range(0..=3));
            slide_spans.push((coords.len(), blob.len()));
            for (x, y) in blob {
                coords.push((x + off.0, y + off.1));
                slide_idx.push(s as u16);
            }
        }
        let n = coords.len();

        let mut focus = vec![false; n];
        let mut pattern_of = vec![Pattern::None; n];
        let grading = if carcinoma {
            let g = draw_grading(&mut rng, &cfg.pattern_mix);
            let n_foci = if rng.gen_bool(0.3) { 2 } else { 1 };
            for _ in 0..n_foci {
                let (start, len) = slide_spans[rng.gen_range(0..slide_spans.len())];
                let center = coords[start + rng.gen_range(0..len)];
                let r = rng.gen_range(1..=cfg.focus_radius);
                for t in start..start + len {
                    let dx = coords[t].0 - center.0;
                    let dy = coords[t].1 - center.1;
                    if dx * dx + dy * dy <= r * r {
                        focus[t] = true;
                        pattern_of[t] = if g.primary == g.secondary || rng.gen_bool(0.65) {
                            g.primary
                        } else {
                            g.secondary
                        };
                    }
                }
            }
            Some(g)
        } else {
            Some(GradingLabel { primary: Pattern::None, secondary: Pattern::None })
        };

        let mut features = Array2::<f32>::zeros((n, cfg.embed_dim));
        for t in 0..n {
            for d in 0..cfg.embed_dim {
                let noise: f64 = rng.sample(StandardNormal);
                let mut v = cfg.noise_sigma * noise;
                if focus[t] {
                    v += cfg.carcinoma_shift * dirs.carcinoma[d]
                        + 0.5 * cfg.carcinoma_shift * dirs.pattern(pattern_of[t])[d];
                }
                features[[t, d]] = v as f32;
            }
        }

        let mut coord_arr = Array2::<i32>::zeros((n, 2));
        for t in 0..n {
            coord_arr[[t, 0]] = coords[t].0;
            coord_arr[[t, 1]] = coords[t].1;
        }
        let block = Block {
            block_id: format!("synth-{bi:05}"),
            features,
            coords: coord_arr,
            slide_idx,
            label: if carcinoma { DetectionLabel::Carcinoma } else { DetectionLabel::Benign },
            grading,
        };
        debug_assert!(block.validate().is_ok());
        blocks.push(block);
        masks.push(focus);
    }
    Ok((blocks, masks))
}

/// Layout-labeled pairs: each pair shares one tile-feature multiset; the
/// block whose marker tiles form a contiguous disc is labeled carcinoma, the
/// one with scattered markers benign. Produces `2 * (n_blocks / 2)` blocks.
pub fn synth_generate_context(cfg: &SynthConfig) -> Result<Vec<Block>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x636f_6e74_6578_74); // "context"
    let dirs = Directions::draw(&mut rng, cfg.embed_dim);

    let n_pairs = cfg.n_blocks / 2;
    let mut blocks = Vec::with_capacity(n_pairs * 2);
    for pi in 0..n_pairs {
        let n_tiles = rng.gen_range(cfg.tiles_per_slide.0.max(12)..=cfg.tiles_per_slide.1.max(12));
        let blob = grow_blob(&mut rng, n_tiles);
        let n = blob.len();
        let m_target = (n / 12).clamp(2, 8);

        let scattered = scatter_positions(&mut rng, &blob, m_target);
        let m = scattered.len();
        let clustered = cluster_positions(&mut rng, &blob, m);

        // one feature pool per pair; rows 0..m are markers
        let mut pool = Array2::<f32>::zeros((n, cfg.embed_dim));
        for t in 0..n {
            for d in 0..cfg.embed_dim {
                let noise: f64 = rng.sample(StandardNormal);
                let mut v = cfg.noise_sigma * noise;
                if t < m {
                    v += cfg.carcinoma_shift * dirs.carcinoma[d];
                }
                pool[[t, d]] = v as f32;
            }
        }
        let grading = draw_grading(&mut rng, &cfg.pattern_mix);

        let mut fill_order: Vec<usize> = (0..n).collect();
        fill_order.shuffle(&mut rng);
        for (suffix, marker_at, label, grading) in [
            ("pos", &clustered, DetectionLabel::Carcinoma, Some(grading)),
            (
                "neg",
                &scattered,
                DetectionLabel::Benign,
                Some(GradingLabel { primary: Pattern::None, secondary: Pattern::None }),
            ),
        ] {
            let mut assign = vec![usize::MAX; n]; // position -> pool row
            for (mi, &pos) in marker_at.iter().enumerate() {
                assign[pos] = mi;
            }
            let mut next = m;
            for &pos in &fill_order {
                if assign[pos] == usize::MAX {
                    assign[pos] = next;
                    next += 1;
                }
            }
            let mut features = Array2::<f32>::zeros((n, cfg.embed_dim));
            let mut coord_arr = Array2::<i32>::zeros((n, 2));
            for pos in 0..n {
                features.row_mut(pos).assign(&pool.row(assign[pos]));
                coord_arr[[pos, 0]] = blob[pos].0;
                coord_arr[[pos, 1]] = blob[pos].1;
            }
            blocks.push(Block {
                block_id: format!("ctx-{pi:05}-{suffix}"),
                features,
                coords: coord_arr,
                slide_idx: vec![1; n],
                label,
                grading,
            });
        }
    }
    Ok(blocks)
}

struct Directions {
    carcinoma: Array1<f64>,
    p3: Array1<f64>,
    p4: Array1<f64>,
    p5: Array1<f64>,
}

impl Directions {
    fn draw(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        let unit = |rng: &mut ChaCha8Rng| {
            let v = Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let norm = v.dot(&v).sqrt().max(1e-12);
            v / norm
        };
        Directions {
            carcinoma: unit(rng),
            p3: unit(rng),
            p4: unit(rng),
            p5: unit(rng),
        }
    }

    fn pattern(&self, p: Pattern) -> &Array1<f64> {
        match p {
            Pattern::P3 => &self.p3,
            Pattern::P4 => &self.p4,
            Pattern::P5 => &self.p5,
            Pattern::None => &self.carcinoma, // unreachable for focus tiles
        }
    }
}

fn draw_grading(rng: &mut ChaCha8Rng, mix: &[(Pattern, Pattern, f64)]) -> GradingLabel {
    let total: f64 = mix.iter().map(|&(_, _, w)| w).sum();
    let mut u = rng.gen_range(0.0..total);
    for &(p, s, w) in mix {
        if u < w {
            return GradingLabel { primary: p, secondary: s };
        }
        u -= w;
    }
    let &(p, s, _) = mix.last().unwrap();
    GradingLabel { primary: p, secondary: s }
}

/// Grow a connected blob of `n` lattice cells (4-neighborhood), shifted so
/// its minimum corner is (0, 0).
fn grow_blob(rng: &mut ChaCha8Rng, n: usize) -> Vec<(i32, i32)> {
    let mut cells: Vec<(i32, i32)> = vec![(0, 0)];
    let mut in_blob = std::collections::HashSet::from([(0i32, 0i32)]);
    let mut frontier: Vec<(i32, i32)> = vec![(1, 0), (-1, 0), (0, 1), (0, -1)];
    while cells.len() < n {
        let i = rng.gen_range(0..frontier.len());
        let cell = frontier.swap_remove(i);
        if !in_blob.insert(cell) {
            continue;
        }
        cells.push(cell);
        for d in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let nb = (cell.0 + d.0, cell.1 + d.1);
            if !in_blob.contains(&nb) {
                frontier.push(nb);
            }
        }
    }
    let min_x = cells.iter().map(|c| c.0).min().unwrap();
    let min_y = cells.iter().map(|c| c.1).min().unwrap();
    cells.iter().map(|c| (c.0 - min_x, c.1 - min_y)).collect()
}

/// Pick up to `m` tile positions pairwise at least 3 apart (Chebyshev), so
/// no 3x3 neighborhood ever contains two markers. Falls back to distance 2
/// if the blob is too cramped.
fn scatter_positions(rng: &mut ChaCha8Rng, blob: &[(i32, i32)], m: usize) -> Vec<usize> {
    for min_dist in [3i32, 2] {
        let mut order: Vec<usize> = (0..blob.len()).collect();
        order.shuffle(rng);
        let mut picked: Vec<usize> = Vec::new();
        for &cand in &order {
            let ok = picked.iter().all(|&p| {
                let dx = (blob[cand].0 - blob[p].0).abs();
                let dy = (blob[cand].1 - blob[p].1).abs();
                dx.max(dy) >= min_dist
            });
            if ok {
                picked.push(cand);
                if picked.len() == m {
                    return picked;
                }
            }
        }
        if picked.len() >= 2 {
            return picked;
        }
    }
    vec![0]
}

/// First `m` positions of a breadth-first walk from a random start: a
/// contiguous patch.
fn cluster_positions(rng: &mut ChaCha8Rng, blob: &[(i32, i32)], m: usize) -> Vec<usize> {
    let index: std::collections::HashMap<(i32, i32), usize> =
        blob.iter().copied().enumerate().map(|(i, c)| (c, i)).collect();
    let start = rng.gen_range(0..blob.len());
    let mut seen = vec![false; blob.len()];
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    let mut picked = Vec::with_capacity(m);
    while let Some(t) = queue.pop_front() {
        picked.push(t);
        if picked.len() == m {
            break;
        }
        for d in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(&nb) = index.get(&(blob[t].0 + d.0, blob[t].1 + d.1)) {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_bitwise_deterministic() {
        let cfg = SynthConfig { n_blocks: 6, seed: 1, ..SynthConfig::default() };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.block_id, y.block_id);
            assert_eq!(x.coords, y.coords);
            assert_eq!(x.label, y.label);
            for (u, v) in x.features.iter().zip(y.features.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn zero_fraction_yields_all_benign() {
        let cfg = SynthConfig {
            n_blocks: 20,
            carcinoma_fraction: 0.0,
            seed: 2,
            ..SynthConfig::default()
        };
        let blocks = synth_generate(&cfg).unwrap();
        assert!(blocks.iter().all(|b| b.label == DetectionLabel::Benign));
    }

    #[test]
    fn class_balance_tracks_fraction_within_binomial_noise() {
        let cfg = SynthConfig {
            n_blocks: 200,
            carcinoma_fraction: 0.3,
            tiles_per_slide: (8, 16),
            slides_per_block: (1, 2),
            embed_dim: 8,
            seed: 3,
            ..SynthConfig::default()
        };
        let blocks = synth_generate(&cfg).unwrap();
        let positives = blocks.iter().filter(|b| b.label == DetectionLabel::Carcinoma).count();
        // 200 * 0.3 = 60, sd = sqrt(200 * .3 * .7) ~ 6.5; allow 4 sd
        assert!((34..=86).contains(&positives), "got {positives} positives");
    }

    #[test]
    fn positives_have_focus_tiles_and_benign_have_none() {
        let cfg = SynthConfig {
            n_blocks: 40,
            tiles_per_slide: (10, 30),
            embed_dim: 8,
            seed: 4,
            ..SynthConfig::default()
        };
        let (blocks, masks) = synth_generate_detailed(&cfg).unwrap();
        for (b, mask) in blocks.iter().zip(&masks) {
            let focus_count = mask.iter().filter(|&&f| f).count();
            match b.label {
                DetectionLabel::Carcinoma => assert!(focus_count >= 1, "{}", b.block_id),
                _ => assert_eq!(focus_count, 0, "{}", b.block_id),
            }
        }
    }

    #[test]
    fn positives_carry_grading_from_the_mix() {
        let cfg = SynthConfig { n_blocks: 30, seed: 5, embed_dim: 4, ..SynthConfig::default() };
        for b in synth_generate(&cfg).unwrap() {
            let g = b.grading.expect("grading always set by generator");
            match b.label {
                DetectionLabel::Carcinoma => assert_ne!(g.primary, Pattern::None),
                _ => assert_eq!(g, GradingLabel { primary: Pattern::None, secondary: Pattern::None }),
            }
        }
    }

    #[test]
    fn context_pairs_share_feature_multisets() {
        let cfg = SynthConfig {
            n_blocks: 10,
            tiles_per_slide: (24, 48),
            embed_dim: 6,
            seed: 6,
            ..SynthConfig::default()
        };
        let blocks = synth_generate_context(&cfg).unwrap();
        assert_eq!(blocks.len(), 10);
        for pair in blocks.chunks(2) {
            assert_eq!(pair[0].label, DetectionLabel::Carcinoma);
            assert_eq!(pair[1].label, DetectionLabel::Benign);
            let key = |b: &Block| {
                let mut rows: Vec<Vec<u32>> = b
                    .features
                    .outer_iter()
                    .map(|r| r.iter().map(|v| v.to_bits()).collect())
                    .collect();
                rows.sort();
                rows
            };
            assert_eq!(key(&pair[0]), key(&pair[1]));
            assert_eq!(pair[0].coords, pair[1].coords);
        }
    }

    #[test]
    fn degenerate_range_is_a_config_error() {
        let cfg = SynthConfig { tiles_per_slide: (9, 3), ..SynthConfig::default() };
        assert!(synth_generate(&cfg).is_err());
    }
}
