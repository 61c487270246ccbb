//! Spatially sparse convolutional self-attention: ESA applied to every
//! token's receptive field, followed by a convolution over the attended
//! field, with a skip connection from the block input to its output.

use super::esa::{esa_backward, esa_forward, EsaCache, EsaParams};
use super::ParamTensors;
use crate::error::{Result, SctError};
use crate::geometry::ReceptiveFieldIndex;
use crate::real::Real;
use ndarray::{Array1, Array2, Array3};

#[derive(Debug, Clone)]
pub struct SscSaParams<T: Real> {
    pub esa: EsaParams<T>,
    /// Convolution weight, `d_out × k² × z`.
    pub w_c: Array3<T>,
}

impl<T: Real> SscSaParams<T> {
    pub fn zeros_like(&self) -> Self {
        SscSaParams {
            esa: self.esa.zeros_like(),
            w_c: Array3::zeros(self.w_c.raw_dim()),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w_c.shape()[0]
    }

    pub(crate) fn visit_with(&self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        self.esa.visit_with(&format!("{pre}esa."), f);
        f(&format!("{pre}w_c"), self.w_c.shape(), self.w_c.as_slice().unwrap());
    }

    pub(crate) fn visit_mut_with(&mut self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        self.esa.visit_mut_with(&format!("{pre}esa."), f);
        let s = [self.w_c.shape()[0], self.w_c.shape()[1], self.w_c.shape()[2]];
        f(&format!("{pre}w_c"), &s, self.w_c.as_slice_mut().unwrap());
    }
}

impl<T: Real> ParamTensors<T> for SscSaParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        self.visit_with("", f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        self.visit_mut_with("", f)
    }
}

#[derive(Debug, Clone)]
pub struct SscSaCache<T: Real> {
    esa_caches: Vec<EsaCache<T>>,
    /// Attended receptive field per center, flattened to `k²·z`.
    esa_out_flat: Vec<Array1<T>>,
}

fn gather_field<T: Real>(
    tokens: &Array2<T>,
    rf: &ReceptiveFieldIndex,
    center: usize,
) -> (Array2<T>, Vec<bool>) {
    let k2 = rf.k * rf.k;
    let z = tokens.ncols();
    let mut field = Array2::<T>::zeros((k2, z));
    let mut mask = vec![false; k2];
    for slot in 0..k2 {
        if rf.mask[[center, slot]] {
            mask[slot] = true;
            field.row_mut(slot).assign(&tokens.row(rf.fields[[center, slot]]));
        }
    }
    (field, mask)
}

/// Per-center ESA followed by the field convolution, plus the block skip.
///
/// When the input and output widths differ, the skip is the identity on the
/// first `min(z, d_out)` channels and zero elsewhere.
pub fn ssc_sa_forward<T: Real>(
    tokens: &Array2<T>,
    rf: &ReceptiveFieldIndex,
    params: &SscSaParams<T>,
) -> Result<(Array2<T>, SscSaCache<T>)> {
    let n = tokens.nrows();
    let z = tokens.ncols();
    let k2 = rf.k * rf.k;
    let (d_out, wk2, wz) = {
        let s = params.w_c.shape();
        (s[0], s[1], s[2])
    };
    if wk2 != k2 {
        return Err(SctError::Config(format!(
            "ssc-sa: conv weight expects {wk2} slots but receptive fields have {k2} (k mismatch)"
        )));
    }
    if wz != z {
        return Err(SctError::Config(format!(
            "ssc-sa: conv weight expects width {wz} but tokens have width {z}"
        )));
    }
    if rf.fields.nrows() != n {
        return Err(SctError::Config("ssc-sa: receptive fields built for a different token count".into()));
    }

    let w2 = params
        .w_c
        .view()
        .into_shape((d_out, k2 * z))
        .expect("conv weight is contiguous");
    let mut out = Array2::<T>::zeros((n, d_out));
    let mut esa_caches = Vec::with_capacity(n);
    let mut esa_out_flat = Vec::with_capacity(n);
    for i in 0..n {
        let (field, mask) = gather_field(tokens, rf, i);
        let (attended, cache) = esa_forward(&field, &mask, &params.esa)?;
        let flat = attended
            .into_shape(k2 * z)
            .expect("attended field is contiguous");
        out.row_mut(i).assign(&w2.dot(&flat));
        esa_caches.push(cache);
        esa_out_flat.push(flat);
    }

    // block-level skip
    let keep = z.min(d_out);
    for i in 0..n {
        for c in 0..keep {
            out[[i, c]] += tokens[[i, c]];
        }
    }
    Ok((out, SscSaCache { esa_caches, esa_out_flat }))
}

pub fn ssc_sa_backward<T: Real>(
    tokens: &Array2<T>,
    rf: &ReceptiveFieldIndex,
    params: &SscSaParams<T>,
    cache: &SscSaCache<T>,
    d_out: &Array2<T>,
) -> (SscSaParams<T>, Array2<T>) {
    let n = tokens.nrows();
    let z = tokens.ncols();
    let k2 = rf.k * rf.k;
    let d_dim = params.out_dim();

    let w2 = params
        .w_c
        .view()
        .into_shape((d_dim, k2 * z))
        .expect("conv weight is contiguous");
    let mut grads = params.zeros_like();
    let mut d_w2 = Array2::<T>::zeros((d_dim, k2 * z));
    let mut d_tokens = Array2::<T>::zeros((n, z));

    for i in 0..n {
        let d_row = d_out.row(i);
        // conv backward
        let d_flat = w2.t().dot(&d_row);
        for d in 0..d_dim {
            let g = d_row[d];
            if g != T::zero() {
                for kz in 0..k2 * z {
                    d_w2[[d, kz]] += g * cache.esa_out_flat[i][kz];
                }
            }
        }
        let d_attended = d_flat
            .into_shape((k2, z))
            .expect("gradient is contiguous");
        // esa backward and scatter into token gradients
        let (esa_grads, d_field) = esa_backward(&params.esa, &cache.esa_caches[i], &d_attended);
        grads.esa.w_r = grads.esa.w_r + esa_grads.w_r;
        grads.esa.w_o = grads.esa.w_o + esa_grads.w_o;
        for slot in 0..k2 {
            if rf.mask[[i, slot]] {
                let t = rf.fields[[i, slot]];
                let mut row = d_tokens.row_mut(t);
                row += &d_field.row(slot);
            }
        }
    }
    grads.w_c = d_w2
        .into_shape((d_dim, k2, z))
        .expect("gradient is contiguous");

    // skip backward
    let keep = z.min(d_dim);
    for i in 0..n {
        for c in 0..keep {
            d_tokens[[i, c]] += d_out[[i, c]];
        }
    }
    (grads, d_tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_receptive_fields;
    use ndarray::{array, Array2, Array3};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_params(rng: &mut ChaCha8Rng, z: usize, c: usize, d_out: usize, k: usize) -> SscSaParams<f64> {
        SscSaParams {
            esa: EsaParams {
                w_r: Array2::from_shape_fn((z, c), |_| rng.sample(StandardNormal)),
                w_o: Array2::from_shape_fn((c, z), |_| rng.sample(StandardNormal)),
            },
            w_c: Array3::from_shape_fn((d_out, k * k, z), |_| rng.sample(StandardNormal)),
        }
    }

    #[test]
    fn scalar_case_with_skip() {
        // k=1, z=d_out=1: output = w * esa(token) + token. With a single
        // live slot both attention passes are the identity, so the combined
        // attended value is 2 * v * w_r and esa(v) = 2 * v * w_r * w_o + v.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = random_params(&mut rng, 1, 1, 1, 1);
        let v = 0.7;
        let tokens = array![[v]];
        let rf = build_receptive_fields(&array![[0i64, 0]].view(), 1).unwrap();
        let (out, _) = ssc_sa_forward(&tokens, &rf, &params).unwrap();
        let r = 2.0 * v * params.esa.w_r[[0, 0]] * params.esa.w_o[[0, 0]] + v;
        let want = params.w_c[[0, 0, 0]] * r + v;
        assert!((out[[0, 0]] - want).abs() < 1e-12);
    }

    #[test]
    fn zero_conv_weight_reduces_to_identity_skip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = random_params(&mut rng, 4, 3, 4, 3);
        params.w_c.fill(0.0);
        let coords = array![[0i64, 0], [1, 0], [4, 4]];
        let tokens = Array2::from_shape_fn((3, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let rf = build_receptive_fields(&coords.view(), 3).unwrap();
        let (out, _) = ssc_sa_forward(&tokens, &rf, &params).unwrap();
        assert_eq!(out, tokens);
    }

    /// Brute-force oracle: explicit loops over centers, slots, and channels.
    #[test]
    fn matches_brute_force_convolution_over_attended_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(1..=20);
            let z = rng.gen_range(1..=5);
            let c = rng.gen_range(1..=4);
            let d_out = rng.gen_range(1..=6);
            let params = random_params(&mut rng, z, c, d_out, 3);
            let mut used = std::collections::HashSet::new();
            let mut rows = Vec::new();
            while rows.len() < n {
                let p = (rng.gen_range(0..8i64), rng.gen_range(0..8i64));
                if used.insert(p) {
                    rows.push([p.0, p.1]);
                }
            }
            let coords = Array2::from(rows);
            let tokens = Array2::from_shape_fn((n, z), |_| rng.sample::<f64, _>(StandardNormal));
            let rf = build_receptive_fields(&coords.view(), 3).unwrap();
            let (out, _) = ssc_sa_forward(&tokens, &rf, &params).unwrap();

            for i in 0..n {
                let (field, mask) = gather_field(&tokens, &rf, i);
                let (attended, _) = esa_forward(&field, &mask, &params.esa).unwrap();
                for d in 0..d_out {
                    let mut acc = 0.0;
                    for slot in 0..9 {
                        for ch in 0..z {
                            acc += attended[[slot, ch]] * params.w_c[[d, slot, ch]];
                        }
                    }
                    if d < z {
                        acc += tokens[[i, d]];
                    }
                    let got = out[[i, d]];
                    let rel = (got - acc).abs() / got.abs().max(acc.abs()).max(1e-12);
                    assert!(rel <= 1e-12, "center {i}, filter {d}: {got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn kernel_mismatch_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = random_params(&mut rng, 2, 2, 2, 5);
        let coords = array![[0i64, 0]];
        let tokens = Array2::zeros((1, 2));
        let rf = build_receptive_fields(&coords.view(), 3).unwrap();
        assert!(matches!(
            ssc_sa_forward(&tokens, &rf, &params),
            Err(SctError::Config(_))
        ));
    }
}
