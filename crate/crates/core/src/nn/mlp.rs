//! Two-layer feed-forward block with GELU activation.

use super::ParamTensors;
use crate::real::{real, Real};
use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct MlpParams<T: Real> {
    /// `z × h`
    pub w1: Array2<T>,
    /// `h × z`
    pub w2: Array2<T>,
}

impl<T: Real> MlpParams<T> {
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            w1: Array2::zeros(self.w1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
        }
    }

    pub(crate) fn visit_with(&self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&format!("{pre}w1"), self.w1.shape(), self.w1.as_slice().unwrap());
        f(&format!("{pre}w2"), self.w2.shape(), self.w2.as_slice().unwrap());
    }

    pub(crate) fn visit_mut_with(&mut self, pre: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let s1 = [self.w1.nrows(), self.w1.ncols()];
        f(&format!("{pre}w1"), &s1, self.w1.as_slice_mut().unwrap());
        let s2 = [self.w2.nrows(), self.w2.ncols()];
        f(&format!("{pre}w2"), &s2, self.w2.as_slice_mut().unwrap());
    }
}

impl<T: Real> ParamTensors<T> for MlpParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        self.visit_with("", f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        self.visit_mut_with("", f)
    }
}

/// GELU, tanh form: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu<T: Real>(x: T) -> T {
    let c = real::<T>(0.7978845608028654); // sqrt(2/pi)
    let a = real::<T>(0.044715);
    let half = real::<T>(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = real::<T>(0.7978845608028654);
    let a = real::<T>(0.044715);
    let half = real::<T>(0.5);
    let three = real::<T>(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let d_inner = c * (T::one() + three * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * d_inner
}

#[derive(Debug, Clone)]
pub struct MlpCache<T: Real> {
    h_pre: Array2<T>,
    h_act: Array2<T>,
}

/// `gelu(x . w1) . w2` (no skip; the block composition adds one).
pub fn mlp_forward<T: Real>(x: &Array2<T>, p: &MlpParams<T>) -> (Array2<T>, MlpCache<T>) {
    let h_pre = x.dot(&p.w1);
    let h_act = h_pre.mapv(gelu);
    let out = h_act.dot(&p.w2);
    (out, MlpCache { h_pre, h_act })
}

pub fn mlp_backward<T: Real>(
    x: &Array2<T>,
    p: &MlpParams<T>,
    cache: &MlpCache<T>,
    d_out: &Array2<T>,
) -> (MlpParams<T>, Array2<T>) {
    let d_h_act = d_out.dot(&p.w2.t());
    let d_w2 = cache.h_act.t().dot(d_out);
    let d_h_pre = &d_h_act * &cache.h_pre.mapv(gelu_grad);
    let d_w1 = x.t().dot(&d_h_pre);
    let d_x = d_h_pre.dot(&p.w1.t());
    (MlpParams { w1: d_w1, w2: d_w2 }, d_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_matches_reference_values() {
        // reference values of the tanh approximation
        assert!((gelu(0.0f64)).abs() < 1e-15);
        assert!((gelu(1.0f64) - 0.8411919906082768).abs() < 1e-12);
        assert!((gelu(-1.0f64) + 0.15880800939172324).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_finite_differences() {
        for &x in &[-2.5f64, -0.3, 0.0, 0.7, 3.1] {
            let eps = 1e-6;
            let fd = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!((gelu_grad(x) - fd).abs() < 1e-8, "x = {x}");
        }
    }
}
