//! Seeded weight initialization: uniform Glorot-style fan-based scaling.
//!
//! Values are always drawn in f64 and converted, so f32 and f64 models built
//! from one seed share the same underlying draw sequence.

use super::abmil::AbmilParams;
use super::block::SctBlockParams;
use super::model::{HeadParams, SctModelParams};
use crate::real::{real, Real};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill2<T: Real>(m: &mut Array2<T>, rng: &mut ChaCha8Rng) {
    let l = limit(m.nrows(), m.ncols());
    for v in m.iter_mut() {
        *v = real(rng.gen_range(-l..l));
    }
}

fn fill3<T: Real>(m: &mut Array3<T>, rng: &mut ChaCha8Rng) {
    let s = m.shape();
    let l = limit(s[1] * s[2], s[0]);
    for v in m.iter_mut() {
        *v = real(rng.gen_range(-l..l));
    }
}

fn fill1<T: Real>(m: &mut Array1<T>, fan_in: usize, rng: &mut ChaCha8Rng) {
    let l = limit(fan_in, 1);
    for v in m.iter_mut() {
        *v = real(rng.gen_range(-l..l));
    }
}

pub fn init_block<T: Real>(p: &mut SctBlockParams<T>, rng: &mut ChaCha8Rng) {
    fill2(&mut p.proj, rng);
    fill2(&mut p.sscsa.esa.w_r, rng);
    fill2(&mut p.sscsa.esa.w_o, rng);
    fill3(&mut p.sscsa.w_c, rng);
    fill2(&mut p.mha.w_q, rng);
    fill2(&mut p.mha.w_k, rng);
    fill2(&mut p.mha.w_v, rng);
    fill2(&mut p.mha.w_o, rng);
    fill2(&mut p.mlp.w1, rng);
    fill2(&mut p.mlp.w2, rng);
    // layer norms start at identity
}

pub fn init_model<T: Real>(p: &mut SctModelParams<T>, rng: &mut ChaCha8Rng) {
    for stage in &mut p.stages {
        init_block(stage, rng);
    }
    match &mut p.head {
        Some(HeadParams::Detection { w, b }) => {
            fill1(w, w.len(), rng);
            *b = T::zero();
        }
        Some(HeadParams::Grading { w_primary, b_primary, w_secondary, b_secondary }) => {
            fill2(w_primary, rng);
            b_primary.fill(T::zero());
            fill2(w_secondary, rng);
            b_secondary.fill(T::zero());
        }
        None => {}
    }
}

pub fn init_abmil<T: Real>(p: &mut AbmilParams<T>, rng: &mut ChaCha8Rng) {
    fill2(&mut p.v, rng);
    if let Some(u) = &mut p.u {
        fill2(u, rng);
    }
    let a = p.w.len();
    fill1(&mut p.w, a, rng);
    let d = p.cls_w.len();
    fill1(&mut p.cls_w, d, rng);
    p.cls_b = T::zero();
}
