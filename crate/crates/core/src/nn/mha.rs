//! Global multi-head self-attention across all tokens of a block, with a
//! skip connection from input to output.

use super::ParamTensors;
use crate::error::{Result, SctError};
use crate::real::{real, Real};
use ndarray::{s, Array2};

#[derive(Debug, Clone)]
pub struct MhaParams<T: Real> {
    pub w_q: Array2<T>,
    pub w_k: Array2<T>,
    pub w_v: Array2<T>,
    pub w_o: Array2<T>,
    pub n_heads: usize,
}

impl<T: Real> MhaParams<T> {
    pub fn zeros_like(&self) -> Self {
        MhaParams {
            w_q: Array2::zeros(self.w_q.raw_dim()),
            w_k: Array2::zeros(self.w_k.raw_dim()),
            w_v: Array2::zeros(self.w_v.raw_dim()),
            w_o: Array2::zeros(self.w_o.raw_dim()),
            n_heads: self.n_heads,
        }
    }

    pub(crate) fn visit_with(&self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&format!("{pre}w_q"), self.w_q.shape(), self.w_q.as_slice().unwrap());
        f(&format!("{pre}w_k"), self.w_k.shape(), self.w_k.as_slice().unwrap());
        f(&format!("{pre}w_v"), self.w_v.shape(), self.w_v.as_slice().unwrap());
        f(&format!("{pre}w_o"), self.w_o.shape(), self.w_o.as_slice().unwrap());
    }

    pub(crate) fn visit_mut_with(&mut self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        for (name, t) in [
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_o", &mut self.w_o),
        ] {
            let shape = [t.nrows(), t.ncols()];
            f(&format!("{pre}{name}"), &shape, t.as_slice_mut().unwrap());
        }
    }
}

impl<T: Real> ParamTensors<T> for MhaParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        self.visit_with("", f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        self.visit_mut_with("", f)
    }
}

#[derive(Debug, Clone)]
pub struct MhaCache<T: Real> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Row-stochastic attention per head.
    pub(crate) attn: Vec<Array2<T>>,
    concat: Array2<T>,
}

fn softmax_rows_inplace<T: Real>(m: &mut Array2<T>) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

/// Scaled dot-product attention over all `n` tokens, `n_heads` heads of
/// width `z / n_heads`, concatenated, output-projected, plus skip.
pub fn mha_forward<T: Real>(x: &Array2<T>, p: &MhaParams<T>) -> Result<(Array2<T>, MhaCache<T>)> {
    let z = x.ncols();
    if p.n_heads == 0 || z % p.n_heads != 0 {
        return Err(SctError::Config(format!(
            "mha: {} heads do not divide width {z}",
            p.n_heads
        )));
    }
    if p.w_q.nrows() != z {
        return Err(SctError::Config("mha: projection shape mismatch".into()));
    }
    let dh = z / p.n_heads;
    let q = x.dot(&p.w_q);
    let k = x.dot(&p.w_k);
    let v = x.dot(&p.w_v);
    let scale = T::one() / real::<T>(dh as f64).sqrt();

    let n = x.nrows();
    let mut concat = Array2::<T>::zeros((n, z));
    let mut attn = Vec::with_capacity(p.n_heads);
    for h in 0..p.n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut a = qh.dot(&kh.t()) * scale;
        softmax_rows_inplace(&mut a);
        concat.slice_mut(cols).assign(&a.dot(&vh));
        attn.push(a);
    }
    let out = concat.dot(&p.w_o) + x;
    Ok((out, MhaCache { q, k, v, attn, concat }))
}

pub fn mha_backward<T: Real>(
    x: &Array2<T>,
    p: &MhaParams<T>,
    cache: &MhaCache<T>,
    d_out: &Array2<T>,
) -> (MhaParams<T>, Array2<T>) {
    let z = x.ncols();
    let dh = z / p.n_heads;
    let scale = T::one() / real::<T>(dh as f64).sqrt();

    let d_concat = d_out.dot(&p.w_o.t());
    let d_w_o = cache.concat.t().dot(d_out);
    let mut d_x = d_out.clone(); // skip

    let n = x.nrows();
    let mut d_q = Array2::<T>::zeros((n, z));
    let mut d_k = Array2::<T>::zeros((n, z));
    let mut d_v = Array2::<T>::zeros((n, z));
    for h in 0..p.n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let a = &cache.attn[h];
        let qh = cache.q.slice(cols);
        let kh = cache.k.slice(cols);
        let vh = cache.v.slice(cols);
        let d_head = d_concat.slice(cols);

        let d_a = d_head.dot(&vh.t());
        d_v.slice_mut(cols).assign(&a.t().dot(&d_head));

        // softmax backward, row-wise
        let mut d_scores = Array2::<T>::zeros((n, n));
        for i in 0..n {
            let mut dot = T::zero();
            for j in 0..n {
                dot += d_a[[i, j]] * a[[i, j]];
            }
            for j in 0..n {
                d_scores[[i, j]] = a[[i, j]] * (d_a[[i, j]] - dot);
            }
        }
        d_q.slice_mut(cols).assign(&(d_scores.dot(&kh) * scale));
        d_k.slice_mut(cols).assign(&(d_scores.t().dot(&qh) * scale));
    }

    let d_w_q = x.t().dot(&d_q);
    let d_w_k = x.t().dot(&d_k);
    let d_w_v = x.t().dot(&d_v);
    d_x = d_x + d_q.dot(&p.w_q.t()) + d_k.dot(&p.w_k.t()) + d_v.dot(&p.w_v.t());

    (
        MhaParams { w_q: d_w_q, w_k: d_w_k, w_v: d_w_v, w_o: d_w_o, n_heads: p.n_heads },
        d_x,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_params(rng: &mut ChaCha8Rng, z: usize, n_heads: usize) -> MhaParams<f64> {
        let mut m = || Array2::from_shape_fn((z, z), |_| rng.sample::<f64, _>(StandardNormal));
        MhaParams { w_q: m(), w_k: m(), w_v: m(), w_o: m(), n_heads }
    }

    #[test]
    fn singleton_attention_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 4, 2);
        let x = Array2::from_shape_fn((1, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let (out, cache) = mha_forward(&x, &p).unwrap();
        for a in &cache.attn {
            assert_eq!(a[[0, 0]], 1.0);
        }
        // output = v . w_o + x
        let want = x.dot(&p.w_v).dot(&p.w_o) + &x;
        for (a, b) in out.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_tokens_attend_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&mut rng, 6, 3);
        let row: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let x = Array2::from_shape_fn((5, 6), |(_, j)| row[j]);
        let (_, cache) = mha_forward(&x, &p).unwrap();
        for a in &cache.attn {
            for v in a.iter() {
                assert!((v - 0.2).abs() < 1e-12);
            }
        }
    }

    /// Single-head dense reference computed with plain loops.
    fn dense_reference(x: &Array2<f64>, p: &MhaParams<f64>) -> Array2<f64> {
        let n = x.nrows();
        let z = x.ncols();
        let dh = z / p.n_heads;
        let q = x.dot(&p.w_q);
        let k = x.dot(&p.w_k);
        let v = x.dot(&p.w_v);
        let mut concat = Array2::<f64>::zeros((n, z));
        for h in 0..p.n_heads {
            for i in 0..n {
                let mut scores = vec![0.0; n];
                for j in 0..n {
                    let mut dot = 0.0;
                    for d in 0..dh {
                        dot += q[[i, h * dh + d]] * k[[j, h * dh + d]];
                    }
                    scores[j] = dot / (dh as f64).sqrt();
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                for d in 0..dh {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += exps[j] / total * v[[j, h * dh + d]];
                    }
                    concat[[i, h * dh + d]] = acc;
                }
            }
        }
        concat.dot(&p.w_o) + x
    }

    #[test]
    fn matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n_heads = rng.gen_range(1..=4);
            let dh = rng.gen_range(1..=4);
            let z = n_heads * dh;
            let n = rng.gen_range(1..=16);
            let p = random_params(&mut rng, z, n_heads);
            let x = Array2::from_shape_fn((n, z), |_| rng.sample::<f64, _>(StandardNormal));
            let (out, _) = mha_forward(&x, &p).unwrap();
            let want = dense_reference(&x, &p);
            for (a, b) in out.iter().zip(want.iter()) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
                assert!(rel <= 1e-12);
            }
        }
    }

    #[test]
    fn head_count_must_divide_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(&mut rng, 6, 4);
        let x = Array2::<f64>::zeros((2, 6));
        assert!(matches!(mha_forward(&x, &p), Err(SctError::Config(_))));
    }
}
