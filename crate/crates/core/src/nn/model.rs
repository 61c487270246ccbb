//! Full models: the staged SCT trunk with a detection or grading head.
//!
//! A block enters as raw tiles, gets its coordinates normalized, tiles
//! canonically sorted by (slide, y, x), cross-slide indexed, and then runs
//! through the stage pipeline. The canonical sort makes every reduction
//! order-stable, so tile permutations cannot change the output.

use super::block::{
    block_shape, sct_block_backward, sct_block_forward_cached, PoolSpec, SctBlockCache,
    SctBlockParams, StageGeom,
};
use super::ssp::PoolMode;
use super::ParamTensors;
use crate::blockdata::{normalize_coords, Block};
use crate::error::{Result, SctError};
use crate::geometry::index_tiles;
use crate::real::{real, Real};
use ndarray::{Array1, Array2};

/// How the surviving tokens collapse to one block embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggMode {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Detection,
    Grading,
}

/// Classification head over the aggregated block embedding.
#[derive(Debug, Clone)]
pub enum HeadParams<T: Real> {
    /// Dense layer to one logit, sigmoid outside.
    Detection { w: Array1<T>, b: T },
    /// Two independent dense layers to 4 classes (None, 3, 4, 5) each.
    Grading {
        w_primary: Array2<T>,
        b_primary: Array1<T>,
        w_secondary: Array2<T>,
        b_secondary: Array1<T>,
    },
}

impl<T: Real> HeadParams<T> {
    pub fn zeros_like(&self) -> Self {
        match self {
            HeadParams::Detection { w, .. } => HeadParams::Detection {
                w: Array1::zeros(w.len()),
                b: T::zero(),
            },
            HeadParams::Grading { w_primary, b_primary, w_secondary, b_secondary } => {
                HeadParams::Grading {
                    w_primary: Array2::zeros(w_primary.raw_dim()),
                    b_primary: Array1::zeros(b_primary.len()),
                    w_secondary: Array2::zeros(w_secondary.raw_dim()),
                    b_secondary: Array1::zeros(b_secondary.len()),
                }
            }
        }
    }

    fn visit_with(&self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        match self {
            HeadParams::Detection { w, b } => {
                f(&format!("{pre}w"), w.shape(), w.as_slice().unwrap());
                f(&format!("{pre}b"), &[], std::slice::from_ref(b));
            }
            HeadParams::Grading { w_primary, b_primary, w_secondary, b_secondary } => {
                f(&format!("{pre}w_primary"), w_primary.shape(), w_primary.as_slice().unwrap());
                f(&format!("{pre}b_primary"), b_primary.shape(), b_primary.as_slice().unwrap());
                f(&format!("{pre}w_secondary"), w_secondary.shape(), w_secondary.as_slice().unwrap());
                f(&format!("{pre}b_secondary"), b_secondary.shape(), b_secondary.as_slice().unwrap());
            }
        }
    }

    fn visit_mut_with(&mut self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        match self {
            HeadParams::Detection { w, b } => {
                let shape = [w.len()];
                f(&format!("{pre}w"), &shape, w.as_slice_mut().unwrap());
                f(&format!("{pre}b"), &[], std::slice::from_mut(b));
            }
            HeadParams::Grading { w_primary, b_primary, w_secondary, b_secondary } => {
                // order must match visit_with exactly
                let sp = [w_primary.nrows(), w_primary.ncols()];
                f(&format!("{pre}w_primary"), &sp, w_primary.as_slice_mut().unwrap());
                let bp = [b_primary.len()];
                f(&format!("{pre}b_primary"), &bp, b_primary.as_slice_mut().unwrap());
                let ss = [w_secondary.nrows(), w_secondary.ncols()];
                f(&format!("{pre}w_secondary"), &ss, w_secondary.as_slice_mut().unwrap());
                let bs = [b_secondary.len()];
                f(&format!("{pre}b_secondary"), &bs, b_secondary.as_slice_mut().unwrap());
            }
        }
    }
}

/// All parameters of one SCT model.
#[derive(Debug, Clone)]
pub struct SctModelParams<T: Real> {
    pub stages: Vec<SctBlockParams<T>>,
    pub agg: AggMode,
    pub head: Option<HeadParams<T>>,
}

impl<T: Real> SctModelParams<T> {
    pub fn zeros_like(&self) -> Self {
        SctModelParams {
            stages: self.stages.iter().map(|s| s.zeros_like()).collect(),
            agg: self.agg,
            head: self.head.as_ref().map(|h| h.zeros_like()),
        }
    }

    pub fn final_width(&self) -> Option<usize> {
        self.stages.last().map(|s| s.width())
    }
}

impl<T: Real> ParamTensors<T> for SctModelParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        for (i, stage) in self.stages.iter().enumerate() {
            stage.visit_with(&format!("stage{i}."), f);
        }
        if let Some(h) = &self.head {
            h.visit_with("head.", f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage.visit_mut_with(&format!("stage{i}."), f);
        }
        if let Some(h) = &mut self.head {
            h.visit_mut_with("head.", f);
        }
    }
}

/// Exact count of scalar parameters.
pub fn param_count<T: Real>(params: &SctModelParams<T>) -> usize {
    super::count_params(params)
}

/// Architecture description, sufficient to rebuild parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub stage_widths: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub stride: usize,
    pub n_heads: usize,
    pub mlp_hidden: usize,
    pub pool_mode: PoolMode,
    pub agg: AggMode,
    pub head: HeadKind,
}

impl ModelConfig {
    /// The published five-block layout: widths 64, 64, 128, 128, 128 with
    /// k = 3, pool 3/3, 4 heads, MLP hidden 128.
    pub fn default_architecture(input_dim: usize, head: HeadKind) -> Self {
        ModelConfig {
            input_dim,
            stage_widths: vec![64, 64, 128, 128, 128],
            kernel_size: 3,
            pool_size: 3,
            stride: 3,
            n_heads: 4,
            mlp_hidden: 128,
            pool_mode: PoolMode::Max,
            agg: AggMode::Mean,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(SctError::Config("input_dim must be positive".into()));
        }
        if self.stage_widths.is_empty() {
            return Err(SctError::Config("at least one stage required".into()));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(SctError::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.pool_size != self.stride {
            return Err(SctError::Config(format!(
                "unsupported pooling configuration: pool_size {} != stride {}",
                self.pool_size, self.stride
            )));
        }
        if self.stride == 0 {
            return Err(SctError::Config("stride must be >= 1".into()));
        }
        for &w in &self.stage_widths {
            if w == 0 || w % self.n_heads != 0 {
                return Err(SctError::Config(format!(
                    "stage width {w} not divisible by {} heads",
                    self.n_heads
                )));
            }
        }
        if self.mlp_hidden == 0 {
            return Err(SctError::Config("mlp_hidden must be >= 1".into()));
        }
        Ok(())
    }

    pub fn pool_spec(&self) -> PoolSpec {
        PoolSpec { pool_size: self.pool_size, stride: self.stride, mode: self.pool_mode }
    }

    /// Zero-weight parameter skeleton matching this configuration.
    pub fn build<T: Real>(&self) -> Result<SctModelParams<T>> {
        self.validate()?;
        let mut stages = Vec::with_capacity(self.stage_widths.len());
        let mut z_in = self.input_dim;
        for &z in &self.stage_widths {
            stages.push(block_shape(
                z_in,
                z,
                z, // ESA embedding dim matches the stage width
                self.kernel_size,
                self.pool_spec(),
                self.n_heads,
                self.mlp_hidden,
            ));
            z_in = z;
        }
        let z_f = z_in;
        let head = match self.head {
            HeadKind::Detection => HeadParams::Detection { w: Array1::zeros(z_f), b: T::zero() },
            HeadKind::Grading => HeadParams::Grading {
                w_primary: Array2::zeros((z_f, 4)),
                b_primary: Array1::zeros(4),
                w_secondary: Array2::zeros((z_f, 4)),
                b_secondary: Array1::zeros(4),
            },
        };
        Ok(SctModelParams { stages, agg: self.agg, head: Some(head) })
    }

    /// Seeded, initialized model.
    pub fn init<T: Real>(&self, seed: u64) -> Result<SctModelParams<T>> {
        use rand::SeedableRng;
        let mut params = self.build::<T>()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        super::init::init_model(&mut params, &mut rng);
        Ok(params)
    }
}

/// A block made ready for the trunk: canonically sorted features plus the
/// static per-stage geometry chain.
#[derive(Debug, Clone)]
pub struct PreparedBlock<T: Real> {
    pub block_id: String,
    pub features: Array2<T>,
    pub geoms: Vec<StageGeom>,
}

/// Normalize, canonically sort, cross-slide index, and precompute each
/// stage's receptive fields and pooling cells.
pub fn prepare_block<T: Real>(
    block: &Block,
    n_stages: usize,
    kernel_size: usize,
    pool: PoolSpec,
) -> Result<PreparedBlock<T>> {
    block.validate()?;
    let block = normalize_coords(block);
    let n = block.n_tiles();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&t| (block.slide_idx[t], block.coords[[t, 1]], block.coords[[t, 0]]));

    let mut features = Array2::<T>::zeros((n, block.embed_dim()));
    let mut coords = Array2::<i32>::zeros((n, 2));
    let mut slide_idx = Vec::with_capacity(n);
    for (new_t, &old_t) in order.iter().enumerate() {
        for d in 0..block.embed_dim() {
            features[[new_t, d]] = T::from_f32(block.features[[old_t, d]]);
        }
        coords[[new_t, 0]] = block.coords[[old_t, 0]];
        coords[[new_t, 1]] = block.coords[[old_t, 1]];
        slide_idx.push(block.slide_idx[old_t]);
    }

    let adjusted = index_tiles(&coords.view(), &slide_idx)?;
    let mut geoms = Vec::with_capacity(n_stages);
    let mut stage_coords = adjusted.coords;
    for _ in 0..n_stages {
        let geom = StageGeom::build(&stage_coords.view(), kernel_size, &pool)?;
        stage_coords = geom.out_coords.clone();
        geoms.push(geom);
    }
    Ok(PreparedBlock { block_id: block.block_id.clone(), features, geoms })
}

/// Prepare against a model's stage layout.
pub fn prepare_for_model<T: Real>(block: &Block, params: &SctModelParams<T>) -> Result<PreparedBlock<T>> {
    let stage = params
        .stages
        .first()
        .ok_or_else(|| SctError::Config("model has no stages".into()))?;
    prepare_block(block, params.stages.len(), stage.kernel_size(), stage.pool)
}

#[derive(Debug, Clone)]
pub struct TrunkCache<T: Real> {
    stage_caches: Vec<SctBlockCache<T>>,
    final_tokens: Array2<T>,
    /// Winning token per channel under max aggregation.
    agg_argmax: Option<Vec<usize>>,
    pub embedding: Array1<T>,
}

fn trunk_forward<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
) -> Result<TrunkCache<T>> {
    if prep.geoms.len() != params.stages.len() {
        return Err(SctError::Config(format!(
            "prepared block has {} stage geometries, model has {} stages",
            prep.geoms.len(),
            params.stages.len()
        )));
    }
    let mut tokens = prep.features.clone();
    let mut stage_caches = Vec::with_capacity(params.stages.len());
    for (stage, geom) in params.stages.iter().zip(&prep.geoms) {
        let (next, cache) = sct_block_forward_cached(&tokens, geom, stage)?;
        stage_caches.push(cache);
        tokens = next;
    }

    let (m, z) = (tokens.nrows(), tokens.ncols());
    let mut embedding = Array1::<T>::zeros(z);
    let agg_argmax = match params.agg {
        AggMode::Mean => {
            let inv = T::one() / real::<T>(m as f64);
            for i in 0..m {
                embedding.scaled_add(inv, &tokens.row(i));
            }
            None
        }
        AggMode::Max => {
            let mut arg = vec![0usize; z];
            for ch in 0..z {
                let mut best = 0;
                for i in 1..m {
                    if tokens[[i, ch]] > tokens[[best, ch]] {
                        best = i;
                    }
                }
                arg[ch] = best;
                embedding[ch] = tokens[[best, ch]];
            }
            Some(arg)
        }
    };
    Ok(TrunkCache { stage_caches, final_tokens: tokens, agg_argmax, embedding })
}

fn trunk_backward<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
    cache: &TrunkCache<T>,
    d_embedding: &Array1<T>,
    grads: &mut SctModelParams<T>,
) -> Array2<T> {
    let (m, z) = (cache.final_tokens.nrows(), cache.final_tokens.ncols());
    let mut d_tokens = Array2::<T>::zeros((m, z));
    match (&params.agg, &cache.agg_argmax) {
        (AggMode::Mean, _) => {
            let inv = T::one() / real::<T>(m as f64);
            for i in 0..m {
                let mut row = d_tokens.row_mut(i);
                row.scaled_add(inv, d_embedding);
            }
        }
        (AggMode::Max, Some(arg)) => {
            for ch in 0..z {
                d_tokens[[arg[ch], ch]] += d_embedding[ch];
            }
        }
        (AggMode::Max, None) => unreachable!("max aggregation cache missing"),
    }

    for (i, stage) in params.stages.iter().enumerate().rev() {
        let (stage_grads, d_in) =
            sct_block_backward(&prep.geoms[i], stage, &cache.stage_caches[i], &d_tokens);
        super::axpy_params(&mut grads.stages[i], &stage_grads, T::one());
        d_tokens = d_in;
    }
    d_tokens
}

#[derive(Debug, Clone)]
pub struct DetectCache<T: Real> {
    trunk: TrunkCache<T>,
    pub prob: T,
}

/// Detection probability for one prepared block.
pub fn model_forward_detect<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
) -> Result<(T, DetectCache<T>)> {
    let trunk = trunk_forward(prep, params)?;
    let (w, b) = match &params.head {
        Some(HeadParams::Detection { w, b }) => (w, b),
        _ => return Err(SctError::Config("detection head not configured".into())),
    };
    let logit = w.dot(&trunk.embedding) + *b;
    let prob = T::one() / (T::one() + (-logit).exp());
    Ok((prob, DetectCache { trunk, prob }))
}

/// Gradients of a scalar loss given its derivative with respect to the
/// pre-sigmoid logit. Also returns the gradient of the (sorted) input
/// features.
pub fn model_backward_detect_logit<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
    cache: &DetectCache<T>,
    d_logit: T,
) -> (SctModelParams<T>, Array2<T>) {
    let mut grads = params.zeros_like();
    let (w, _) = match &params.head {
        Some(HeadParams::Detection { w, b }) => (w, b),
        _ => unreachable!("cache implies detection head"),
    };
    let d_embedding = w.mapv(|v| v * d_logit);
    if let Some(HeadParams::Detection { w: gw, b: gb }) = &mut grads.head {
        *gb = d_logit;
        for (g, &e) in gw.iter_mut().zip(cache.trunk.embedding.iter()) {
            *g = d_logit * e;
        }
    }
    let d_features = trunk_backward(prep, params, &cache.trunk, &d_embedding, &mut grads);
    (grads, d_features)
}

/// Gradients given the derivative with respect to the probability.
pub fn model_backward_detect<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
    cache: &DetectCache<T>,
    d_prob: T,
) -> (SctModelParams<T>, Array2<T>) {
    let p = cache.prob;
    model_backward_detect_logit(prep, params, cache, d_prob * p * (T::one() - p))
}

fn softmax4<T: Real>(logits: &Array1<T>) -> Array1<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut out = logits.mapv(|v| (v - max).exp());
    let total = out.sum();
    out.mapv_inplace(|v| v / total);
    out
}

#[derive(Debug, Clone)]
pub struct GradeCache<T: Real> {
    trunk: TrunkCache<T>,
    pub primary: Array1<T>,
    pub secondary: Array1<T>,
}

/// Grading distributions (primary, secondary) over {None, 3, 4, 5}.
pub fn model_forward_grade<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
) -> Result<(Array1<T>, Array1<T>, GradeCache<T>)> {
    let trunk = trunk_forward(prep, params)?;
    let (wp, bp, ws, bs) = match &params.head {
        Some(HeadParams::Grading { w_primary, b_primary, w_secondary, b_secondary }) => {
            (w_primary, b_primary, w_secondary, b_secondary)
        }
        _ => return Err(SctError::Config("grading head not configured".into())),
    };
    let primary = softmax4(&(trunk.embedding.dot(wp) + bp));
    let secondary = softmax4(&(trunk.embedding.dot(ws) + bs));
    Ok((
        primary.clone(),
        secondary.clone(),
        GradeCache { trunk, primary, secondary },
    ))
}

/// Gradients given derivatives with respect to the two pre-softmax logit
/// vectors.
pub fn model_backward_grade_logits<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
    cache: &GradeCache<T>,
    d_logits_primary: &Array1<T>,
    d_logits_secondary: &Array1<T>,
) -> (SctModelParams<T>, Array2<T>) {
    let mut grads = params.zeros_like();
    let (wp, ws) = match &params.head {
        Some(HeadParams::Grading { w_primary, w_secondary, .. }) => (w_primary, w_secondary),
        _ => unreachable!("cache implies grading head"),
    };
    let z = cache.trunk.embedding.len();
    let mut d_embedding = Array1::<T>::zeros(z);
    for c in 0..4 {
        for i in 0..z {
            d_embedding[i] += wp[[i, c]] * d_logits_primary[c] + ws[[i, c]] * d_logits_secondary[c];
        }
    }
    if let Some(HeadParams::Grading { w_primary, b_primary, w_secondary, b_secondary }) =
        &mut grads.head
    {
        for c in 0..4 {
            b_primary[c] = d_logits_primary[c];
            b_secondary[c] = d_logits_secondary[c];
            for i in 0..z {
                w_primary[[i, c]] = cache.trunk.embedding[i] * d_logits_primary[c];
                w_secondary[[i, c]] = cache.trunk.embedding[i] * d_logits_secondary[c];
            }
        }
    }
    let d_features = trunk_backward(prep, params, &cache.trunk, &d_embedding, &mut grads);
    (grads, d_features)
}

/// Gradients given derivatives with respect to the output distributions.
pub fn model_backward_grade<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
    cache: &GradeCache<T>,
    d_primary: &Array1<T>,
    d_secondary: &Array1<T>,
) -> (SctModelParams<T>, Array2<T>) {
    let softmax_back = |p: &Array1<T>, d: &Array1<T>| {
        let dot = p.dot(d);
        Array1::from_iter(p.iter().zip(d.iter()).map(|(&pi, &di)| pi * (di - dot)))
    };
    let dlp = softmax_back(&cache.primary, d_primary);
    let dls = softmax_back(&cache.secondary, d_secondary);
    model_backward_grade_logits(prep, params, cache, &dlp, &dls)
}

/// The aggregated trunk embedding of a block (for CSV export and analysis).
pub fn trunk_embedding<T: Real>(
    prep: &PreparedBlock<T>,
    params: &SctModelParams<T>,
) -> Result<Array1<T>> {
    Ok(trunk_forward(prep, params)?.embedding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockdata::{DetectionLabel, SynthConfig};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            stage_widths: vec![4, 4],
            kernel_size: 3,
            pool_size: 3,
            stride: 3,
            n_heads: 2,
            mlp_hidden: 5,
            pool_mode: PoolMode::Max,
            agg: AggMode::Mean,
            head: HeadKind::Detection,
        }
    }

    fn sample_block(seed: u64) -> Block {
        crate::blockdata::synth_generate(&SynthConfig {
            n_blocks: 1,
            embed_dim: 6,
            tiles_per_slide: (8, 20),
            slides_per_block: (1, 2),
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
        .remove(0)
    }

    #[test]
    fn zero_head_weights_give_half() {
        let cfg = tiny_config();
        let mut params = cfg.init::<f64>(1).unwrap();
        if let Some(HeadParams::Detection { w, b }) = &mut params.head {
            w.fill(0.0);
            *b = 0.0;
        }
        let block = sample_block(2);
        let prep = prepare_for_model(&block, &params).unwrap();
        let (p, _) = model_forward_detect(&prep, &params).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn output_stays_in_open_unit_interval() {
        let cfg = tiny_config();
        let params = cfg.init::<f64>(3).unwrap();
        for seed in 0..5 {
            let block = sample_block(seed);
            let prep = prepare_for_model(&block, &params).unwrap();
            let (p, _) = model_forward_detect(&prep, &params).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn grading_distributions_sum_to_one_and_uniform_at_zero_head() {
        let mut cfg = tiny_config();
        cfg.head = HeadKind::Grading;
        let mut params = cfg.init::<f64>(4).unwrap();
        let block = sample_block(7);
        let prep = prepare_for_model(&block, &params).unwrap();
        let (p1, p2, _) = model_forward_grade(&prep, &params).unwrap();
        assert!((p1.sum() - 1.0).abs() < 1e-6);
        assert!((p2.sum() - 1.0).abs() < 1e-6);

        if let Some(HeadParams::Grading { w_primary, b_primary, w_secondary, b_secondary }) =
            &mut params.head
        {
            w_primary.fill(0.0);
            b_primary.fill(0.0);
            w_secondary.fill(0.0);
            b_secondary.fill(0.0);
        }
        let (p1, p2, _) = model_forward_grade(&prep, &params).unwrap();
        for v in p1.iter().chain(p2.iter()) {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_tiles_does_not_change_the_output() {
        use rand::prelude::*;
        let cfg = tiny_config();
        let params = cfg.init::<f64>(5).unwrap();
        let block = sample_block(11);
        let prep = prepare_for_model(&block, &params).unwrap();
        let (p_base, _) = model_forward_detect(&prep, &params).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let n = block.n_tiles();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut shuffled = block.clone();
            for (new_t, &old_t) in perm.iter().enumerate() {
                for d in 0..block.embed_dim() {
                    shuffled.features[[new_t, d]] = block.features[[old_t, d]];
                }
                shuffled.coords[[new_t, 0]] = block.coords[[old_t, 0]];
                shuffled.coords[[new_t, 1]] = block.coords[[old_t, 1]];
                shuffled.slide_idx[new_t] = block.slide_idx[old_t];
            }
            let prep2 = prepare_for_model(&shuffled, &params).unwrap();
            let (p_perm, _) = model_forward_detect(&prep2, &params).unwrap();
            assert_eq!(p_base.to_bits(), p_perm.to_bits());
        }
    }

    #[test]
    fn empty_block_is_an_input_error() {
        let cfg = tiny_config();
        let params = cfg.init::<f64>(8).unwrap();
        let block = Block {
            block_id: "empty".into(),
            features: Array2::zeros((0, 6)),
            coords: Array2::zeros((0, 2)),
            slide_idx: vec![],
            label: DetectionLabel::Unknown,
            grading: None,
        };
        assert!(matches!(
            prepare_for_model(&block, &params),
            Err(SctError::Input(_))
        ));
    }

    #[test]
    fn param_count_of_single_projection() {
        let params = SctModelParams::<f64> {
            stages: vec![],
            agg: AggMode::Mean,
            head: None,
        };
        assert_eq!(param_count(&params), 0);

        // one bias-free 64 x 64 projection in isolation
        let proj = Array2::<f64>::zeros((64, 64));
        let mut stage = block_shape::<f64>(
            64,
            64,
            1,
            1,
            PoolSpec { pool_size: 1, stride: 1, mode: PoolMode::Max },
            1,
            1,
        );
        stage.proj = proj;
        let mut n = 0;
        stage.visit(&mut |name, _, data| {
            if name == "proj" {
                n += data.len();
            }
        });
        assert_eq!(n, 4096);
    }

    #[test]
    fn default_architecture_param_count_is_logged() {
        let cfg = ModelConfig::default_architecture(64, HeadKind::Detection);
        let params = cfg.build::<f32>().unwrap();
        let count = param_count(&params);
        // compared against the published 1.38M as a soft reference
        println!("default architecture parameter count: {count} (reference 1.38e6, ratio {:.3})",
                 count as f64 / 1.38e6);
        assert!(count > 500_000 && count < 3_000_000);
    }
}
