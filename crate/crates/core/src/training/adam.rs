//! Adam-style optimizer with bias correction, operating on the flat
//! parameter vector in canonical visit order.

use crate::nn::ParamTensors;
use crate::real::{real, Real};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    m: Vec<T>,
    v: Vec<T>,
    t: usize,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![T::zero(); n_params], v: vec![T::zero(); n_params], t: 0 }
    }

    /// One update over all parameters, given the flat gradient.
    pub fn step<P: ParamTensors<T>>(&mut self, params: &mut P, grad: &[T], cfg: &AdamConfig) {
        assert_eq!(grad.len(), self.m.len(), "gradient length mismatch");
        self.t += 1;
        let lr = real::<T>(cfg.learning_rate);
        let b1 = real::<T>(cfg.beta1);
        let b2 = real::<T>(cfg.beta2);
        let eps = real::<T>(cfg.epsilon);
        let corr1 = T::one() - real::<T>(cfg.beta1.powi(self.t as i32));
        let corr2 = T::one() - real::<T>(cfg.beta2.powi(self.t as i32));

        let mut at = 0;
        params.visit_mut(&mut |_, _, data| {
            for value in data.iter_mut() {
                let g = grad[at];
                self.m[at] = b1 * self.m[at] + (T::one() - b1) * g;
                self.v[at] = b2 * self.v[at] + (T::one() - b2) * g * g;
                let m_hat = self.m[at] / corr1;
                let v_hat = self.v[at] / corr2;
                *value = *value - lr * m_hat / (v_hat.sqrt() + eps);
                at += 1;
            }
        });
        assert_eq!(at, grad.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{flatten_params, MlpParams};
    use ndarray::Array2;

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
        let mut p = MlpParams::<f32> {
            w1: Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f32 * 0.1),
            w2: Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f32 * -0.2),
        };
        let before = flatten_params(&p);
        let grad = vec![1.0f32; before.len()];
        let mut adam = AdamState::new(before.len());
        let cfg = AdamConfig { learning_rate: 0.0, ..AdamConfig::default() };
        for _ in 0..3 {
            adam.step(&mut p, &grad, &cfg);
        }
        let after = flatten_params(&p);
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn first_step_moves_each_weight_by_about_the_learning_rate() {
        // with bias correction the first update is lr * g / (|g| + eps)
        let mut p = MlpParams::<f64> {
            w1: Array2::zeros((2, 2)),
            w2: Array2::zeros((2, 2)),
        };
        let grad = vec![3.0f64; 8];
        let mut adam = AdamState::new(8);
        let cfg = AdamConfig::default();
        adam.step(&mut p, &grad, &cfg);
        for &v in p.w1.iter().chain(p.w2.iter()) {
            assert!((v + cfg.learning_rate).abs() < 1e-6, "got {v}");
        }
    }
}
