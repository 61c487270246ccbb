//! Attention-based multiple-instance pooling baseline.
//!
//! Scores every tile with a small gated or ungated attention network,
//! softmax-normalizes the scores, takes the attention-weighted mean of the
//! raw tile embeddings, and classifies with a dense layer. Coordinates are
//! never consulted, including for ordering: the tiles are used exactly as
//! given.

use super::ParamTensors;
use crate::error::{Result, SctError};
use crate::real::Real;
use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct AbmilParams<T: Real> {
    /// `d × a` tanh branch of the attention scorer.
    pub v: Array2<T>,
    /// Optional `d × a` sigmoid gate.
    pub u: Option<Array2<T>>,
    /// `a` attention projection.
    pub w: Array1<T>,
    /// `d` classifier weights.
    pub cls_w: Array1<T>,
    pub cls_b: T,
}

impl<T: Real> AbmilParams<T> {
    pub fn new(input_dim: usize, attention_dim: usize, gated: bool) -> Self {
        AbmilParams {
            v: Array2::zeros((input_dim, attention_dim)),
            u: gated.then(|| Array2::zeros((input_dim, attention_dim))),
            w: Array1::zeros(attention_dim),
            cls_w: Array1::zeros(input_dim),
            cls_b: T::zero(),
        }
    }

    pub fn init(input_dim: usize, attention_dim: usize, gated: bool, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut p = Self::new(input_dim, attention_dim, gated);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        super::init::init_abmil(&mut p, &mut rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        AbmilParams {
            v: Array2::zeros(self.v.raw_dim()),
            u: self.u.as_ref().map(|u| Array2::zeros(u.raw_dim())),
            w: Array1::zeros(self.w.len()),
            cls_w: Array1::zeros(self.cls_w.len()),
            cls_b: T::zero(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.v.nrows()
    }
}

impl<T: Real> ParamTensors<T> for AbmilParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f("attn.v", self.v.shape(), self.v.as_slice().unwrap());
        if let Some(u) = &self.u {
            f("attn.u", u.shape(), u.as_slice().unwrap());
        }
        f("attn.w", self.w.shape(), self.w.as_slice().unwrap());
        f("cls.w", self.cls_w.shape(), self.cls_w.as_slice().unwrap());
        f("cls.b", &[], std::slice::from_ref(&self.cls_b));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let sv = [self.v.nrows(), self.v.ncols()];
        f("attn.v", &sv, self.v.as_slice_mut().unwrap());
        if let Some(u) = &mut self.u {
            let su = [u.nrows(), u.ncols()];
            f("attn.u", &su, u.as_slice_mut().unwrap());
        }
        let sw = [self.w.len()];
        f("attn.w", &sw, self.w.as_slice_mut().unwrap());
        let sc = [self.cls_w.len()];
        f("cls.w", &sc, self.cls_w.as_slice_mut().unwrap());
        f("cls.b", &[], std::slice::from_mut(&mut self.cls_b));
    }
}

#[derive(Debug, Clone)]
pub struct AbmilCache<T: Real> {
    tanh_h: Array2<T>,
    gate: Option<Array2<T>>,
    pub(crate) alpha: Array1<T>,
    pooled: Array1<T>,
    pub prob: T,
}

/// Probability that the bag of tiles is carcinoma.
pub fn abmil_forward<T: Real>(
    features: &Array2<T>,
    params: &AbmilParams<T>,
) -> Result<(T, AbmilCache<T>)> {
    let n = features.nrows();
    if n == 0 {
        return Err(SctError::Input("abmil: empty block".into()));
    }
    if features.ncols() != params.input_dim() {
        return Err(SctError::Config(format!(
            "abmil: feature dim {} does not match model dim {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    let tanh_h = features.dot(&params.v).mapv(|x| x.tanh());
    let (gate, h_eff) = match &params.u {
        Some(u) => {
            let g = features.dot(u).mapv(|x| T::one() / (T::one() + (-x).exp()));
            let h = &tanh_h * &g;
            (Some(g), h)
        }
        None => (None, tanh_h.clone()),
    };
    let scores = h_eff.dot(&params.w);
    let max = scores.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut alpha = scores.mapv(|s| (s - max).exp());
    let total = alpha.sum();
    alpha.mapv_inplace(|v| v / total);

    let mut pooled = Array1::<T>::zeros(features.ncols());
    for i in 0..n {
        pooled.scaled_add(alpha[i], &features.row(i));
    }
    let logit = params.cls_w.dot(&pooled) + params.cls_b;
    let prob = T::one() / (T::one() + (-logit).exp());
    Ok((prob, AbmilCache { tanh_h, gate, alpha, pooled, prob }))
}

/// Gradients for all parameters and the tile features, given the derivative
/// with respect to the pre-sigmoid logit.
pub fn abmil_backward_logit<T: Real>(
    features: &Array2<T>,
    params: &AbmilParams<T>,
    cache: &AbmilCache<T>,
    d_logit: T,
) -> (AbmilParams<T>, Array2<T>) {
    let n = features.nrows();
    let d = features.ncols();
    let mut grads = params.zeros_like();

    grads.cls_b = d_logit;
    for i in 0..d {
        grads.cls_w[i] = d_logit * cache.pooled[i];
    }
    let d_pooled = params.cls_w.mapv(|v| v * d_logit);

    // pooled = sum_i alpha_i f_i
    let mut d_alpha = Array1::<T>::zeros(n);
    let mut d_features = Array2::<T>::zeros((n, d));
    for i in 0..n {
        d_alpha[i] = features.row(i).dot(&d_pooled);
        let mut row = d_features.row_mut(i);
        row.scaled_add(cache.alpha[i], &d_pooled);
    }

    // softmax backward
    let dot = cache.alpha.dot(&d_alpha);
    let d_scores = Array1::from_iter(
        cache.alpha.iter().zip(d_alpha.iter()).map(|(&a, &g)| a * (g - dot)),
    );

    // scores = h_eff . w, with h_eff = tanh_h (* gate)
    let a_dim = params.w.len();
    let mut d_h_eff = Array2::<T>::zeros((n, a_dim));
    for i in 0..n {
        let mut row = d_h_eff.row_mut(i);
        row.scaled_add(d_scores[i], &params.w);
        for j in 0..a_dim {
            let h = match &cache.gate {
                Some(g) => cache.tanh_h[[i, j]] * g[[i, j]],
                None => cache.tanh_h[[i, j]],
            };
            grads.w[j] += d_scores[i] * h;
        }
    }

    match (&params.u, &cache.gate) {
        (Some(u), Some(gate)) => {
            let d_tanh = &d_h_eff * gate;
            let d_gate = &d_h_eff * &cache.tanh_h;
            let d_m = &d_tanh * &cache.tanh_h.mapv(|t| T::one() - t * t);
            let d_mg = &d_gate * &gate.mapv(|g| g * (T::one() - g));
            grads.v = features.t().dot(&d_m);
            grads.u = Some(features.t().dot(&d_mg));
            d_features = d_features + d_m.dot(&params.v.t()) + d_mg.dot(&u.t());
        }
        _ => {
            let d_m = &d_h_eff * &cache.tanh_h.mapv(|t| T::one() - t * t);
            grads.v = features.t().dot(&d_m);
            d_features = d_features + d_m.dot(&params.v.t());
        }
    }
    (grads, d_features)
}
