//! Element-wise self-attention over one receptive field.
//!
//! A field of `k*k` slots (absent neighbors padded with zero rows and a
//! false mask) is embedded once; the embedding serves as query, key, and
//! value for two attention passes: spatial attention across slots, then
//! channel attention across embedding dimensions of the transposed field.
//! Both results combine through an output projection with a skip connection
//! back to the field. Padded rows stay exactly zero on the way out, and
//! masked slots receive exactly zero spatial attention.

use super::ParamTensors;
use crate::error::{Result, SctError};
use crate::real::{real, Real};
use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct EsaParams<T: Real> {
    /// `z × c` field embedding shared by query, key, and value.
    pub w_r: Array2<T>,
    /// `c × z` output projection back to the token width.
    pub w_o: Array2<T>,
}

impl<T: Real> EsaParams<T> {
    pub fn zeros_like(&self) -> Self {
        EsaParams {
            w_r: Array2::zeros(self.w_r.raw_dim()),
            w_o: Array2::zeros(self.w_o.raw_dim()),
        }
    }

    pub fn token_dim(&self) -> usize {
        self.w_r.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.w_r.ncols()
    }

    pub(crate) fn visit_with(&self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&format!("{pre}w_r"), self.w_r.shape(), self.w_r.as_slice().unwrap());
        f(&format!("{pre}w_o"), self.w_o.shape(), self.w_o.as_slice().unwrap());
    }

    pub(crate) fn visit_mut_with(&mut self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let s1 = [self.w_r.nrows(), self.w_r.ncols()];
        f(&format!("{pre}w_r"), &s1, self.w_r.as_slice_mut().unwrap());
        let s2 = [self.w_o.nrows(), self.w_o.ncols()];
        f(&format!("{pre}w_o"), &s2, self.w_o.as_slice_mut().unwrap());
    }
}

impl<T: Real> ParamTensors<T> for EsaParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        self.visit_with("", f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        self.visit_mut_with("", f)
    }
}

#[derive(Debug, Clone)]
pub struct EsaCache<T: Real> {
    /// Field with padded rows forced to zero.
    field: Array2<T>,
    /// Embedded field `field . w_r`.
    e: Array2<T>,
    /// Spatial attention, masked rows and columns exactly zero.
    pub(crate) a_spatial: Array2<T>,
    /// Channel attention over embedding dimensions.
    pub(crate) a_channel: Array2<T>,
    /// Combined attended representation before the output projection.
    u: Array2<T>,
    mask: Vec<bool>,
    n_eff: usize,
}

/// Spatial-then-channel attention with skip connection; `k2 × z` in and out.
pub fn esa_forward<T: Real>(
    field: &Array2<T>,
    mask: &[bool],
    params: &EsaParams<T>,
) -> Result<(Array2<T>, EsaCache<T>)> {
    let k2 = field.nrows();
    let z = field.ncols();
    let c = params.embed_dim();
    if params.token_dim() != z {
        return Err(SctError::Config(format!(
            "esa: field width {z} does not match w_r rows {}",
            params.token_dim()
        )));
    }
    if params.w_o.nrows() != c || params.w_o.ncols() != z {
        return Err(SctError::Config("esa: w_o shape must be embed_dim x token_dim".into()));
    }
    if mask.len() != k2 {
        return Err(SctError::Config("esa: mask length must equal slot count".into()));
    }
    let n_eff = mask.iter().filter(|&&m| m).count();
    if n_eff == 0 {
        return Err(SctError::Input("esa: field must contain at least one live slot".into()));
    }

    // Padded slots are structurally zero regardless of caller input.
    let mut field = field.clone();
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            field.row_mut(i).fill(T::zero());
        }
    }

    let e = field.dot(&params.w_r);

    // Spatial attention over live slots. Scale by sqrt(c).
    let inv_sqrt_c = T::one() / real::<T>(c as f64).sqrt();
    let mut a_spatial = Array2::<T>::zeros((k2, k2));
    for i in 0..k2 {
        if !mask[i] {
            continue;
        }
        let mut scores = Array1::<T>::zeros(k2);
        let mut max = T::neg_infinity();
        for j in 0..k2 {
            if mask[j] {
                let s = e.row(i).dot(&e.row(j)) * inv_sqrt_c;
                scores[j] = s;
                if s > max {
                    max = s;
                }
            }
        }
        let mut total = T::zero();
        for j in 0..k2 {
            if mask[j] {
                let v = (scores[j] - max).exp();
                a_spatial[[i, j]] = v;
                total += v;
            }
        }
        for j in 0..k2 {
            if mask[j] {
                a_spatial[[i, j]] /= total;
            }
        }
    }
    let y_spatial = a_spatial.dot(&e);

    // Channel attention over the transposed embedding. Scale by the live
    // slot count so sparse edges keep the same softmax temperature.
    let inv_sqrt_eff = T::one() / real::<T>(n_eff as f64).sqrt();
    let g = e.t().dot(&e) * inv_sqrt_eff;
    let mut a_channel = Array2::<T>::zeros((c, c));
    for i in 0..c {
        let row = g.row(i);
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for j in 0..c {
            let v = (g[[i, j]] - max).exp();
            a_channel[[i, j]] = v;
            total += v;
        }
        for j in 0..c {
            a_channel[[i, j]] /= total;
        }
    }
    // (a_channel . e^T)^T written directly as e . a_channel^T
    let y_channel_t = e.dot(&a_channel.t());

    let u = &y_channel_t + &y_spatial;
    let out = u.dot(&params.w_o) + &field;

    Ok((
        out,
        EsaCache { field, e, a_spatial, a_channel, u, mask: mask.to_vec(), n_eff },
    ))
}

/// Gradients for both projections and the (pad-zeroed) field.
pub fn esa_backward<T: Real>(
    params: &EsaParams<T>,
    cache: &EsaCache<T>,
    d_out: &Array2<T>,
) -> (EsaParams<T>, Array2<T>) {
    let k2 = cache.field.nrows();
    let c = params.embed_dim();

    // The output of a padded slot is pinned to zero: no gradient flows in.
    let mut d_out = d_out.clone();
    for (i, &m) in cache.mask.iter().enumerate() {
        if !m {
            d_out.row_mut(i).fill(T::zero());
        }
    }

    let d_u = d_out.dot(&params.w_o.t());
    let d_w_o = cache.u.t().dot(&d_out);
    let mut d_field = d_out.clone(); // skip connection

    // u = y_channel_t + y_spatial; both receive d_u.
    // y_channel_t = e . a_channel^T
    let mut d_e = d_u.dot(&cache.a_channel);
    let d_a_channel = d_u.t().dot(&cache.e);

    // channel softmax backward, row-wise
    let mut d_g = Array2::<T>::zeros((c, c));
    for i in 0..c {
        let mut dot = T::zero();
        for j in 0..c {
            dot += d_a_channel[[i, j]] * cache.a_channel[[i, j]];
        }
        for j in 0..c {
            d_g[[i, j]] = cache.a_channel[[i, j]] * (d_a_channel[[i, j]] - dot);
        }
    }
    // g = e^T e / sqrt(n_eff)
    let inv_sqrt_eff = T::one() / real::<T>(cache.n_eff as f64).sqrt();
    d_e = d_e + (cache.e.dot(&d_g) + cache.e.dot(&d_g.t())) * inv_sqrt_eff;

    // y_spatial = a_spatial . e
    let d_a_spatial = d_u.dot(&cache.e.t());
    d_e = d_e + cache.a_spatial.t().dot(&d_u);

    // spatial softmax backward on live rows; support stays on live columns
    let mut d_scores = Array2::<T>::zeros((k2, k2));
    for i in 0..k2 {
        if !cache.mask[i] {
            continue;
        }
        let mut dot = T::zero();
        for j in 0..k2 {
            dot += d_a_spatial[[i, j]] * cache.a_spatial[[i, j]];
        }
        for j in 0..k2 {
            d_scores[[i, j]] = cache.a_spatial[[i, j]] * (d_a_spatial[[i, j]] - dot);
        }
    }
    // scores = e e^T / sqrt(c)
    let inv_sqrt_c = T::one() / real::<T>(c as f64).sqrt();
    d_e = d_e + (d_scores.dot(&cache.e) + d_scores.t().dot(&cache.e)) * inv_sqrt_c;

    // e = field . w_r
    let d_w_r = cache.field.t().dot(&d_e);
    d_field = d_field + d_e.dot(&params.w_r.t());

    // Padded rows are structurally zero inputs; their gradient is zero.
    for (i, &m) in cache.mask.iter().enumerate() {
        if !m {
            d_field.row_mut(i).fill(T::zero());
        }
    }

    (EsaParams { w_r: d_w_r, w_o: d_w_o }, d_field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_params(rng: &mut ChaCha8Rng, z: usize, c: usize) -> EsaParams<f64> {
        EsaParams {
            w_r: Array2::from_shape_fn((z, c), |_| rng.sample(StandardNormal)),
            w_o: Array2::from_shape_fn((c, z), |_| rng.sample(StandardNormal)),
        }
    }

    /// Straight-line dense reference for a fully live field: embed, spatial
    /// attention, channel attention on the transpose, combine, project, skip.
    fn dense_reference(field: &Array2<f64>, p: &EsaParams<f64>) -> Array2<f64> {
        let k2 = field.nrows();
        let c = p.embed_dim();
        let e = field.dot(&p.w_r);
        let softmax_rows = |m: &Array2<f64>| {
            let mut out = m.clone();
            for mut row in out.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            out
        };
        let a = softmax_rows(&(e.dot(&e.t()) / (c as f64).sqrt()));
        let y = a.dot(&e);
        let et = e.t().to_owned();
        let a_ch = softmax_rows(&(et.dot(&et.t()) / (k2 as f64).sqrt()));
        let y_ch = a_ch.dot(&et);
        let y_ch_t = y_ch.t().to_owned();
        (y_ch_t + y).dot(&p.w_o) + field
    }

    #[test]
    fn zero_field_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 5, 4);
        let field = Array2::<f64>::zeros((9, 5));
        let (out, _) = esa_forward(&field, &[true; 9], &p).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_output_projection_reduces_to_skip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = random_params(&mut rng, 5, 4);
        p.w_o.fill(0.0);
        let field = Array2::from_shape_fn((9, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let (out, _) = esa_forward(&field, &[true; 9], &p).unwrap();
        assert_eq!(out, field);
    }

    #[test]
    fn fully_live_field_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let z = rng.gen_range(2..=7);
            let c = rng.gen_range(2..=6);
            let p = random_params(&mut rng, z, c);
            let field = Array2::from_shape_fn((9, z), |_| rng.sample::<f64, _>(StandardNormal));
            let (out, _) = esa_forward(&field, &[true; 9], &p).unwrap();
            let want = dense_reference(&field, &p);
            for (a, b) in out.iter().zip(want.iter()) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
                assert!(rel <= 1e-12, "got {a}, want {b}");
            }
        }
    }

    #[test]
    fn padded_rows_stay_zero_and_attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(&mut rng, 4, 3);
        let mut mask = [true; 9];
        mask[0] = false;
        mask[5] = false;
        mask[8] = false;
        let field = Array2::from_shape_fn((9, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let (out, cache) = esa_forward(&field, &mask, &p).unwrap();
        for (i, &m) in mask.iter().enumerate() {
            if !m {
                assert!(out.row(i).iter().all(|&v| v == 0.0));
                assert!(cache.a_spatial.row(i).iter().all(|&v| v == 0.0));
            } else {
                let sum: f64 = cache.a_spatial.row(i).sum();
                assert!((sum - 1.0).abs() < 1e-6);
                for (j, &mj) in mask.iter().enumerate() {
                    if !mj {
                        assert_eq!(cache.a_spatial[[i, j]], 0.0, "masked slot weight must be 0");
                    } else {
                        assert!(cache.a_spatial[[i, j]] >= 0.0);
                    }
                }
            }
        }
        for i in 0..3 {
            let sum: f64 = cache.a_channel.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mask_without_live_slots_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(&mut rng, 3, 3);
        let field = Array2::<f64>::zeros((9, 3));
        assert!(esa_forward(&field, &[false; 9], &p).is_err());
    }
}
