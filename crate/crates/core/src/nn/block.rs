//! One SCT block: projection, normalization, SSC-SA, pooling, global
//! attention, and MLP, shrinking the token lattice by the pooling stride.

use super::esa::EsaParams;
use super::mha::{mha_backward, mha_forward, MhaCache, MhaParams};
use super::mlp::{mlp_backward, mlp_forward, MlpCache, MlpParams};
use super::norm::{layer_norm_backward, layer_norm_forward, LayerNormCache, LayerNormParams};
use super::ssp::{ssp_backward, ssp_forward, PoolMode, SspCache};
use super::sscsa::{ssc_sa_backward, ssc_sa_forward, SscSaCache, SscSaParams};
use super::ParamTensors;
use crate::error::Result;
use crate::geometry::{build_receptive_fields, partition_cells, CellPartition, ReceptiveFieldIndex};
use crate::real::Real;
use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, Copy)]
pub struct PoolSpec {
    pub pool_size: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

#[derive(Debug, Clone)]
pub struct SctBlockParams<T: Real> {
    /// `z_in × z` input projection.
    pub proj: Array2<T>,
    pub norm1: LayerNormParams<T>,
    pub sscsa: SscSaParams<T>,
    pub pool: PoolSpec,
    pub norm2: LayerNormParams<T>,
    pub mha: MhaParams<T>,
    pub norm3: LayerNormParams<T>,
    pub mlp: MlpParams<T>,
}

impl<T: Real> SctBlockParams<T> {
    pub fn zeros_like(&self) -> Self {
        SctBlockParams {
            proj: Array2::zeros(self.proj.raw_dim()),
            norm1: self.norm1.zeros_like(),
            sscsa: self.sscsa.zeros_like(),
            pool: self.pool,
            norm2: self.norm2.zeros_like(),
            mha: self.mha.zeros_like(),
            norm3: self.norm3.zeros_like(),
            mlp: self.mlp.zeros_like(),
        }
    }

    pub fn width(&self) -> usize {
        self.proj.ncols()
    }

    pub fn kernel_size(&self) -> usize {
        (self.sscsa.w_c.shape()[1] as f64).sqrt() as usize
    }

    pub(crate) fn visit_with(&self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&format!("{pre}proj"), self.proj.shape(), self.proj.as_slice().unwrap());
        self.norm1.visit_with(&format!("{pre}norm1."), f);
        self.sscsa.visit_with(&format!("{pre}sscsa."), f);
        self.norm2.visit_with(&format!("{pre}norm2."), f);
        self.mha.visit_with(&format!("{pre}mha."), f);
        self.norm3.visit_with(&format!("{pre}norm3."), f);
        self.mlp.visit_with(&format!("{pre}mlp."), f);
    }

    pub(crate) fn visit_mut_with(&mut self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let shape = [self.proj.nrows(), self.proj.ncols()];
        f(&format!("{pre}proj"), &shape, self.proj.as_slice_mut().unwrap());
        self.norm1.visit_mut_with(&format!("{pre}norm1."), f);
        self.sscsa.visit_mut_with(&format!("{pre}sscsa."), f);
        self.norm2.visit_mut_with(&format!("{pre}norm2."), f);
        self.mha.visit_mut_with(&format!("{pre}mha."), f);
        self.norm3.visit_mut_with(&format!("{pre}norm3."), f);
        self.mlp.visit_mut_with(&format!("{pre}mlp."), f);
    }
}

impl<T: Real> ParamTensors<T> for SctBlockParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        self.visit_with("", f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        self.visit_mut_with("", f)
    }
}

/// Static geometry of one stage: receptive fields and pooling cells derived
/// from the stage's input coordinates. Independent of features, so it can
/// be computed once per block and reused across epochs.
#[derive(Debug, Clone)]
pub struct StageGeom {
    pub rf: ReceptiveFieldIndex,
    pub part: CellPartition,
    pub out_coords: Array2<i64>,
}

impl StageGeom {
    pub fn build(coords: &ArrayView2<i64>, k: usize, pool: &PoolSpec) -> Result<StageGeom> {
        let rf = build_receptive_fields(coords, k)?;
        let part = partition_cells(coords, pool.pool_size, pool.stride)?;
        let out_coords = crate::geometry::cell_coords(&part);
        Ok(StageGeom { rf, part, out_coords })
    }
}

#[derive(Debug, Clone)]
pub struct SctBlockCache<T: Real> {
    x_in: Array2<T>,
    ln1: LayerNormCache<T>,
    t2: Array2<T>,
    sscsa: SscSaCache<T>,
    t3: Array2<T>,
    ssp: SspCache,
    ln2: LayerNormCache<T>,
    t5: Array2<T>,
    mha: MhaCache<T>,
    ln3: LayerNormCache<T>,
    t7: Array2<T>,
    mlp: MlpCache<T>,
}

/// Forward pass with precomputed geometry. Pipeline:
/// projection, layer norm, SSC-SA (with skip), SSP, layer norm, global
/// attention (with skip), layer norm, MLP (with skip).
pub fn sct_block_forward_cached<T: Real>(
    tokens: &Array2<T>,
    geom: &StageGeom,
    p: &SctBlockParams<T>,
) -> Result<(Array2<T>, SctBlockCache<T>)> {
    let t1 = tokens.dot(&p.proj);
    let (t2, ln1) = layer_norm_forward(&t1, &p.norm1);
    let (t3, sscsa) = ssc_sa_forward(&t2, &geom.rf, &p.sscsa)?;
    let (t4, _coords, ssp) = ssp_forward(&t3, &geom.part, p.pool.mode);
    let (t5, ln2) = layer_norm_forward(&t4, &p.norm2);
    let (t6, mha) = mha_forward(&t5, &p.mha)?;
    let (t7, ln3) = layer_norm_forward(&t6, &p.norm3);
    drop(t1);
    drop(t4);
    drop(t6);
    let (m, mlp) = mlp_forward(&t7, &p.mlp);
    let out = m + &t7;
    Ok((
        out,
        SctBlockCache {
            x_in: tokens.clone(),
            ln1,
            t2,
            sscsa,
            t3,
            ssp,
            ln2,
            t5,
            mha,
            ln3,
            t7,
            mlp,
        },
    ))
}

/// Convenience wrapper building geometry from raw coordinates; returns the
/// shrunken tokens and their new coordinates.
pub fn sct_block_forward<T: Real>(
    tokens: &Array2<T>,
    coords: &ArrayView2<i64>,
    p: &SctBlockParams<T>,
) -> Result<(Array2<T>, Array2<i64>)> {
    let geom = StageGeom::build(coords, p.kernel_size(), &p.pool)?;
    let (out, _) = sct_block_forward_cached(tokens, &geom, p)?;
    Ok((out, geom.out_coords))
}

pub fn sct_block_backward<T: Real>(
    geom: &StageGeom,
    p: &SctBlockParams<T>,
    cache: &SctBlockCache<T>,
    d_out: &Array2<T>,
) -> (SctBlockParams<T>, Array2<T>) {
    // out = mlp(t7) + t7
    let (d_mlp, d_t7_mlp) = mlp_backward(&cache.t7, &p.mlp, &cache.mlp, d_out);
    let d_t7 = d_t7_mlp + d_out;
    let (d_norm3, d_t6) = layer_norm_backward(&p.norm3, &cache.ln3, &d_t7);
    let (d_mha, d_t5) = mha_backward(&cache.t5, &p.mha, &cache.mha, &d_t6);
    let (d_norm2, d_t4) = layer_norm_backward(&p.norm2, &cache.ln2, &d_t5);
    let d_t3 = ssp_backward(&d_t4, &geom.part, &cache.ssp, cache.t3.nrows(), p.pool.mode);
    let (d_sscsa, d_t2) = ssc_sa_backward(&cache.t2, &geom.rf, &p.sscsa, &cache.sscsa, &d_t3);
    let (d_norm1, d_t1) = layer_norm_backward(&p.norm1, &cache.ln1, &d_t2);
    let d_proj = cache.x_in.t().dot(&d_t1);
    let d_x = d_t1.dot(&p.proj.t());
    (
        SctBlockParams {
            proj: d_proj,
            norm1: d_norm1,
            sscsa: d_sscsa,
            pool: p.pool,
            norm2: d_norm2,
            mha: d_mha,
            norm3: d_norm3,
            mlp: d_mlp,
        },
        d_x,
    )
}

/// Construct a block with the given widths; weights zeroed (callers
/// initialize via [`super::init`]).
pub fn block_shape<T: Real>(
    z_in: usize,
    z: usize,
    esa_dim: usize,
    k: usize,
    pool: PoolSpec,
    n_heads: usize,
    mlp_hidden: usize,
) -> SctBlockParams<T> {
    SctBlockParams {
        proj: Array2::zeros((z_in, z)),
        norm1: LayerNormParams::identity(z),
        sscsa: SscSaParams {
            esa: EsaParams {
                w_r: Array2::zeros((z, esa_dim)),
                w_o: Array2::zeros((esa_dim, z)),
            },
            w_c: ndarray::Array3::zeros((z, k * k, z)),
        },
        pool,
        norm2: LayerNormParams::identity(z),
        mha: MhaParams {
            w_q: Array2::zeros((z, z)),
            w_k: Array2::zeros((z, z)),
            w_v: Array2::zeros((z, z)),
            w_o: Array2::zeros((z, z)),
            n_heads,
        },
        norm3: LayerNormParams::identity(z),
        mlp: MlpParams {
            w1: Array2::zeros((z, mlp_hidden)),
            w2: Array2::zeros((mlp_hidden, z)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn small_block(seed: u64) -> SctBlockParams<f64> {
        let mut p = block_shape(
            5,
            4,
            4,
            3,
            PoolSpec { pool_size: 3, stride: 3, mode: PoolMode::Max },
            2,
            6,
        );
        init::init_block(&mut p, &mut ChaCha8Rng::seed_from_u64(seed));
        p
    }

    #[test]
    fn dense_patch_pools_to_one_token() {
        let p = small_block(1);
        let mut coords = Vec::new();
        for y in 0..3i64 {
            for x in 0..3i64 {
                coords.push([x, y]);
            }
        }
        let coords = Array2::from(coords);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tokens = Array2::from_shape_fn((9, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let (out, out_coords) = sct_block_forward(&tokens, &coords.view(), &p).unwrap();
        assert_eq!(out.nrows(), 1);
        assert_eq!(out_coords, array![[0i64, 0]]);
    }

    #[test]
    fn isolated_tokens_stay_separate() {
        let p = small_block(3);
        let coords = array![[0i64, 0], [10, 0], [0, 10], [10, 10]];
        let tokens = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64 * 0.1);
        let (out, _) = sct_block_forward(&tokens, &coords.view(), &p).unwrap();
        assert_eq!(out.nrows(), 4);
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let p = small_block(4);
        let coords = array![[0i64, 0], [1, 0], [5, 5]];
        let tokens = Array2::from_shape_fn((3, 5), |(i, j)| (i + j) as f64 * 0.3 - 0.5);
        let (a, _) = sct_block_forward(&tokens, &coords.view(), &p).unwrap();
        let (b, _) = sct_block_forward(&tokens, &coords.view(), &p).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
