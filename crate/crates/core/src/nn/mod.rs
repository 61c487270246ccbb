//! Forward and backward kernels for the sparse convolutional transformer
//! and the attention-pooling baseline.
//!
//! Every kernel is hand-differentiated: a `*_forward` returns the output
//! plus a cache, and the matching `*_backward` consumes the cache and the
//! gradient of a downstream scalar, returning parameter gradients (in a
//! container of the same shape as the parameters) and input gradients.
//! The finite-difference checker in [`crate::training::gradcheck`] holds
//! every pair to account.

pub mod abmil;
pub mod block;
pub mod esa;
pub mod init;
pub mod mha;
pub mod mlp;
pub mod model;
pub mod norm;
pub mod ssp;
pub mod sscsa;

pub use abmil::{abmil_forward, AbmilParams};
pub use block::{sct_block_forward, PoolSpec, SctBlockParams, StageGeom};
pub use esa::{esa_forward, EsaParams};
pub use mha::{mha_forward, MhaParams};
pub use mlp::MlpParams;
pub use model::{
    model_forward_detect, model_forward_grade, param_count, prepare_block, AggMode, HeadKind,
    HeadParams, ModelConfig, PreparedBlock, SctModelParams,
};
pub use norm::LayerNormParams;
pub use ssp::{ssp_forward, PoolMode};
pub use sscsa::{ssc_sa_forward, SscSaParams};

use crate::real::Real;

/// Uniform access to every parameter tensor of a model component, in a
/// fixed canonical order. Drives the optimizer, serialization, counting,
/// and the gradient checker.
pub trait ParamTensors<T: Real> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[T]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T]));
}

/// Total number of scalar parameters.
pub fn count_params<T: Real, P: ParamTensors<T> + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.visit(&mut |_, _, data| n += data.len());
    n
}

/// Copy all parameters into one flat vector, in visit order.
pub fn flatten_params<T: Real, P: ParamTensors<T> + ?Sized>(p: &P) -> Vec<T> {
    let mut out = Vec::new();
    p.visit(&mut |_, _, data| out.extend_from_slice(data));
    out
}

/// Overwrite all parameters from a flat vector laid out in visit order.
pub fn assign_from_flat<T: Real, P: ParamTensors<T> + ?Sized>(p: &mut P, flat: &[T]) {
    let mut at = 0;
    p.visit_mut(&mut |_, _, data| {
        data.copy_from_slice(&flat[at..at + data.len()]);
        at += data.len();
    });
    assert_eq!(at, flat.len(), "flat parameter vector length mismatch");
}

/// `dst += scale * src`, where both containers have identical structure.
pub fn axpy_params<T: Real, P: ParamTensors<T>>(dst: &mut P, src: &P, scale: T) {
    let flat = flatten_params(src);
    let mut at = 0;
    dst.visit_mut(&mut |_, _, data| {
        for v in data.iter_mut() {
            *v = *v + scale * flat[at];
            at += 1;
        }
    });
}

/// Names and element counts of each tensor, in visit order.
pub fn tensor_layout<T: Real, P: ParamTensors<T> + ?Sized>(p: &P) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    p.visit(&mut |name, _, data| out.push((name.to_string(), data.len())));
    out
}
