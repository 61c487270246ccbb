//! Central-difference verification of every hand-written backward pass.
//!
//! Each kernel gets wrapped into a uniform instance: a flat parameter
//! vector, a flat input vector, a scalar-valued forward, and the analytic
//! gradient. The checker perturbs every scalar in both vectors by `±eps`
//! (always in f64) and compares against the analytic gradient with the
//! relative error `|a - n| / max(|a|, |n|, 1e-8)`.

use crate::error::{Result, SctError};
use crate::geometry::build_receptive_fields;
use crate::nn::block::{sct_block_backward, sct_block_forward_cached, StageGeom};
use crate::nn::esa::{esa_backward, esa_forward, EsaParams};
use crate::nn::mha::{mha_backward, mha_forward, MhaParams};
use crate::nn::mlp::{mlp_backward, mlp_forward, MlpParams};
use crate::nn::model::{
    model_backward_detect, model_backward_grade, model_forward_detect, model_forward_grade,
    AggMode, HeadKind, ModelConfig, PreparedBlock,
};
use crate::nn::norm::{layer_norm_backward, layer_norm_forward, LayerNormParams};
use crate::nn::ssp::{ssp_backward, ssp_forward, PoolMode};
use crate::nn::sscsa::{ssc_sa_backward, ssc_sa_forward, SscSaParams};
use crate::nn::{abmil, assign_from_flat, block, flatten_params, tensor_layout};
use ndarray::{Array1, Array2, Array3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    LayerNorm,
    Esa,
    SscSa,
    SspMax,
    SspAvg,
    Mha,
    Mlp,
    DetectionHead,
    GradingHead,
    Abmil,
    SctBlock,
    SctModel,
}

pub const ALL_KERNELS: [KernelKind; 13] = [
    KernelKind::Linear,
    KernelKind::LayerNorm,
    KernelKind::Esa,
    KernelKind::SscSa,
    KernelKind::SspMax,
    KernelKind::SspAvg,
    KernelKind::Mha,
    KernelKind::Mlp,
    KernelKind::DetectionHead,
    KernelKind::GradingHead,
    KernelKind::Abmil,
    KernelKind::SctBlock,
    KernelKind::SctModel,
];

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::LayerNorm => "layer-norm",
            KernelKind::Esa => "esa",
            KernelKind::SscSa => "ssc-sa",
            KernelKind::SspMax => "ssp-max",
            KernelKind::SspAvg => "ssp-avg",
            KernelKind::Mha => "mha",
            KernelKind::Mlp => "mlp",
            KernelKind::DetectionHead => "detection-head",
            KernelKind::GradingHead => "grading-head",
            KernelKind::Abmil => "abmil",
            KernelKind::SctBlock => "sct-block",
            KernelKind::SctModel => "sct-model",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = SctError;
    fn from_str(s: &str) -> Result<Self> {
        ALL_KERNELS
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| SctError::Config(format!("unknown kernel '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckEntry {
    pub kernel: &'static str,
    pub tensor: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
    pub trials: usize,
    pub eps: f64,
}

impl GradcheckReport {
    pub fn max_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradcheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_err.partial_cmp(&b.max_rel_err).unwrap())
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_err() <= tolerance
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{:<16} {:<28} {:.3e}", e.kernel, e.tensor, e.max_rel_err)?;
        }
        Ok(())
    }
}

/// A kernel reduced to flat vectors and closures.
struct CheckInstance {
    param_layout: Vec<(String, usize)>,
    input_layout: Vec<(String, usize)>,
    params0: Vec<f64>,
    inputs0: Vec<f64>,
    eval: Box<dyn Fn(&[f64], &[f64]) -> f64>,
    analytic: Box<dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>)>,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Worst relative error per named tensor (parameters first, then inputs).
fn check_instance(inst: &CheckInstance, eps: f64) -> Vec<(String, f64)> {
    let (grad_p, grad_x) = (inst.analytic)(&inst.params0, &inst.inputs0);
    assert_eq!(grad_p.len(), inst.params0.len());
    assert_eq!(grad_x.len(), inst.inputs0.len());

    let mut out = Vec::new();
    let mut idx = 0;
    for (name, len) in &inst.param_layout {
        let mut worst = 0.0f64;
        for _ in 0..*len {
            let mut plus = inst.params0.clone();
            plus[idx] += eps;
            let mut minus = inst.params0.clone();
            minus[idx] -= eps;
            let fd = ((inst.eval)(&plus, &inst.inputs0) - (inst.eval)(&minus, &inst.inputs0))
                / (2.0 * eps);
            worst = worst.max(rel_err(grad_p[idx], fd));
            idx += 1;
        }
        out.push((name.clone(), worst));
    }
    let mut idx = 0;
    for (name, len) in &inst.input_layout {
        let mut worst = 0.0f64;
        for _ in 0..*len {
            let mut plus = inst.inputs0.clone();
            plus[idx] += eps;
            let mut minus = inst.inputs0.clone();
            minus[idx] -= eps;
            let fd = ((inst.eval)(&inst.params0, &plus) - (inst.eval)(&inst.params0, &minus))
                / (2.0 * eps);
            worst = worst.max(rel_err(grad_x[idx], fd));
            idx += 1;
        }
        out.push((name.clone(), worst));
    }
    out
}

fn randn2(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.sample(StandardNormal))
}

fn unflatten2(flat: &[f64], r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_vec((r, c), flat.to_vec()).unwrap()
}

fn sparse_coords(rng: &mut ChaCha8Rng, n: usize, extent: i64) -> Array2<i64> {
    let mut used = HashSet::new();
    let mut rows = Vec::new();
    while rows.len() < n {
        let p = (rng.gen_range(0..extent), rng.gen_range(0..extent));
        if used.insert(p) {
            rows.push([p.0, p.1]);
        }
    }
    Array2::from(rows)
}

fn linear_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let (n, z_in, z_out) = (rng.gen_range(2..=6), rng.gen_range(2..=5), rng.gen_range(2..=5));
    let w = randn2(rng, z_in, z_out);
    let x = randn2(rng, n, z_in);
    let g = randn2(rng, n, z_out);
    let (wr, wc) = (z_in, z_out);
    let (xr, xc) = (n, z_in);
    let g2 = g.clone();
    CheckInstance {
        param_layout: vec![("w".into(), z_in * z_out)],
        input_layout: vec![("input".into(), n * z_in)],
        params0: w.iter().cloned().collect(),
        inputs0: x.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let w = unflatten2(pf, wr, wc);
            let x = unflatten2(xf, xr, xc);
            (x.dot(&w) * &g).sum()
        }),
        analytic: Box::new(move |pf, xf| {
            let w = unflatten2(pf, wr, wc);
            let x = unflatten2(xf, xr, xc);
            let dw = x.t().dot(&g2);
            let dx = g2.dot(&w.t());
            (dw.iter().cloned().collect(), dx.iter().cloned().collect())
        }),
    }
}

fn layer_norm_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let (n, z) = (rng.gen_range(1..=6), rng.gen_range(2..=6));
    let mut params = LayerNormParams::<f64>::identity(z);
    for v in params.gamma.iter_mut().chain(params.beta.iter_mut()) {
        *v = rng.sample(StandardNormal);
    }
    let x = randn2(rng, n, z);
    let g = randn2(rng, n, z);
    let layout = tensor_layout(&params);
    let g2 = g.clone();
    let p0 = flatten_params(&params);
    let proto = params.clone();
    let proto2 = params.clone();
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("input".into(), n * z)],
        params0: p0,
        inputs0: x.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let x = unflatten2(xf, n, z);
            (layer_norm_forward(&x, &p).0 * &g).sum()
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let x = unflatten2(xf, n, z);
            let (_, cache) = layer_norm_forward(&x, &p);
            let (gp, gx) = layer_norm_backward(&p, &cache, &g2);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn esa_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let k2 = 9;
    let (z, c) = (rng.gen_range(2..=5), rng.gen_range(2..=4));
    let params = EsaParams::<f64> {
        w_r: randn2(rng, z, c),
        w_o: randn2(rng, c, z),
    };
    let mut mask = vec![false; k2];
    let live = rng.gen_range(1..=k2);
    let mut order: Vec<usize> = (0..k2).collect();
    order.shuffle(rng);
    for &s in order.iter().take(live) {
        mask[s] = true;
    }
    let mut field = randn2(rng, k2, z);
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            field.row_mut(i).fill(0.0);
        }
    }
    let g = randn2(rng, k2, z);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let (g2, mask2, mask3) = (g.clone(), mask.clone(), mask.clone());
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("field".into(), k2 * z)],
        params0: p0,
        inputs0: field.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let field = unflatten2(xf, k2, z);
            (esa_forward(&field, &mask2, &p).unwrap().0 * &g).sum()
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let field = unflatten2(xf, k2, z);
            let (_, cache) = esa_forward(&field, &mask3, &p).unwrap();
            let (gp, gx) = esa_backward(&p, &cache, &g2);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn sscsa_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let n = rng.gen_range(2..=10);
    let (z, c, d_out) = (rng.gen_range(2..=4), rng.gen_range(2..=4), rng.gen_range(2..=5));
    let params = SscSaParams::<f64> {
        esa: EsaParams { w_r: randn2(rng, z, c), w_o: randn2(rng, c, z) },
        w_c: Array3::from_shape_fn((d_out, 9, z), |_| rng.sample(StandardNormal)),
    };
    let coords = sparse_coords(rng, n, 5);
    let rf = build_receptive_fields(&coords.view(), 3).unwrap();
    let tokens = randn2(rng, n, z);
    let g = randn2(rng, n, d_out);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let (rf2, g2) = (rf.clone(), g.clone());
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("tokens".into(), n * z)],
        params0: p0,
        inputs0: tokens.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let tokens = unflatten2(xf, n, z);
            (ssc_sa_forward(&tokens, &rf, &p).unwrap().0 * &g).sum()
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let tokens = unflatten2(xf, n, z);
            let (_, cache) = ssc_sa_forward(&tokens, &rf2, &p).unwrap();
            let (gp, gx) = ssc_sa_backward(&tokens, &rf2, &p, &cache, &g2);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn ssp_instance(rng: &mut ChaCha8Rng, mode: PoolMode) -> CheckInstance {
    let n = rng.gen_range(2..=12);
    let z = rng.gen_range(1..=5);
    let s = rng.gen_range(1..=3);
    let coords = sparse_coords(rng, n, 7);
    let part = crate::geometry::partition_cells(&coords.view(), s, s).unwrap();
    let tokens = randn2(rng, n, z);
    let g = randn2(rng, part.cells.len(), z);
    let (part2, g2) = (part.clone(), g.clone());
    CheckInstance {
        param_layout: vec![],
        input_layout: vec![("tokens".into(), n * z)],
        params0: vec![],
        inputs0: tokens.iter().cloned().collect(),
        eval: Box::new(move |_, xf| {
            let tokens = unflatten2(xf, n, z);
            (ssp_forward(&tokens, &part, mode).0 * &g).sum()
        }),
        analytic: Box::new(move |_, xf| {
            let tokens = unflatten2(xf, n, z);
            let (_, _, cache) = ssp_forward(&tokens, &part2, mode);
            let gx = ssp_backward(&g2, &part2, &cache, n, mode);
            (vec![], gx.iter().cloned().collect())
        }),
    }
}

fn mha_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let n_heads = rng.gen_range(1..=2);
    let dh = rng.gen_range(1..=3);
    let z = n_heads * dh;
    let n = rng.gen_range(1..=8);
    let params = MhaParams::<f64> {
        w_q: randn2(rng, z, z),
        w_k: randn2(rng, z, z),
        w_v: randn2(rng, z, z),
        w_o: randn2(rng, z, z),
        n_heads,
    };
    let x = randn2(rng, n, z);
    let g = randn2(rng, n, z);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let g2 = g.clone();
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("tokens".into(), n * z)],
        params0: p0,
        inputs0: x.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let x = unflatten2(xf, n, z);
            (mha_forward(&x, &p).unwrap().0 * &g).sum()
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let x = unflatten2(xf, n, z);
            let (_, cache) = mha_forward(&x, &p).unwrap();
            let (gp, gx) = mha_backward(&x, &p, &cache, &g2);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn mlp_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let (n, z, h) = (rng.gen_range(1..=6), rng.gen_range(2..=5), rng.gen_range(2..=6));
    let params = MlpParams::<f64> { w1: randn2(rng, z, h), w2: randn2(rng, h, z) };
    let x = randn2(rng, n, z);
    let g = randn2(rng, n, z);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let g2 = g.clone();
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("input".into(), n * z)],
        params0: p0,
        inputs0: x.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let x = unflatten2(xf, n, z);
            (mlp_forward(&x, &p).0 * &g).sum()
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let x = unflatten2(xf, n, z);
            let (_, cache) = mlp_forward(&x, &p);
            let (gp, gx) = mlp_backward(&x, &p, &cache, &g2);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

/// A zero-stage model: aggregation plus head in isolation.
fn prepared(features: Array2<f64>) -> PreparedBlock<f64> {
    PreparedBlock { block_id: "gradcheck".into(), features, geoms: vec![] }
}

fn detection_head_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let (n, z) = (rng.gen_range(1..=6), rng.gen_range(2..=6));
    // a zero-stage model isolates aggregation plus head
    let params = crate::nn::model::SctModelParams::<f64> {
        stages: vec![],
        agg: if rng.gen_bool(0.5) { AggMode::Mean } else { AggMode::Max },
        head: Some(crate::nn::model::HeadParams::Detection {
            w: Array1::from_shape_fn(z, |_| rng.sample(StandardNormal)),
            b: rng.sample(StandardNormal),
        }),
    };
    let x = randn2(rng, n, z);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("features".into(), n * z)],
        params0: p0,
        inputs0: x.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let prep = prepared(unflatten2(xf, n, z));
            model_forward_detect(&prep, &p).unwrap().0
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let prep = prepared(unflatten2(xf, n, z));
            let (_, cache) = model_forward_detect(&prep, &p).unwrap();
            let (gp, gx) = model_backward_detect(&prep, &p, &cache, 1.0);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn grading_head_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let (n, z) = (rng.gen_range(1..=6), rng.gen_range(2..=6));
    let params = crate::nn::model::SctModelParams::<f64> {
        stages: vec![],
        agg: AggMode::Mean,
        head: Some(crate::nn::model::HeadParams::Grading {
            w_primary: randn2(rng, z, 4),
            b_primary: Array1::from_shape_fn(4, |_| rng.sample(StandardNormal)),
            w_secondary: randn2(rng, z, 4),
            b_secondary: Array1::from_shape_fn(4, |_| rng.sample(StandardNormal)),
        }),
    };
    let x = randn2(rng, n, z);
    let g1 = Array1::from_shape_fn(4, |_| rng.sample::<f64, _>(StandardNormal));
    let g2 = Array1::from_shape_fn(4, |_| rng.sample::<f64, _>(StandardNormal));
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let (g1b, g2b) = (g1.clone(), g2.clone());
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("features".into(), n * z)],
        params0: p0,
        inputs0: x.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let prep = prepared(unflatten2(xf, n, z));
            let (p1, p2, _) = model_forward_grade(&prep, &p).unwrap();
            p1.dot(&g1) + p2.dot(&g2)
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let prep = prepared(unflatten2(xf, n, z));
            let (_, _, cache) = model_forward_grade(&prep, &p).unwrap();
            let (gp, gx) = model_backward_grade(&prep, &p, &cache, &g1b, &g2b);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn abmil_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let (n, d, a) = (rng.gen_range(1..=8), rng.gen_range(2..=5), rng.gen_range(2..=4));
    let gated = rng.gen_bool(0.5);
    let mut params = abmil::AbmilParams::<f64>::new(d, a, gated);
    {
        use crate::nn::init::init_abmil;
        let mut irng = ChaCha8Rng::seed_from_u64(rng.gen());
        init_abmil(&mut params, &mut irng);
        params.cls_b = rng.sample(StandardNormal);
    }
    let x = randn2(rng, n, d);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("features".into(), n * d)],
        params0: p0,
        inputs0: x.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            abmil::abmil_forward(&unflatten2(xf, n, d), &p).unwrap().0
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let x = unflatten2(xf, n, d);
            let (prob, cache) = abmil::abmil_forward(&x, &p).unwrap();
            let d_logit = prob * (1.0 - prob);
            let (gp, gx) = abmil::abmil_backward_logit(&x, &p, &cache, d_logit);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn sct_block_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let n = rng.gen_range(2..=10);
    let (z_in, z) = (rng.gen_range(2..=5), 2 * rng.gen_range(1..=2));
    let pool = block::PoolSpec {
        pool_size: 3,
        stride: 3,
        mode: if rng.gen_bool(0.5) { PoolMode::Max } else { PoolMode::Avg },
    };
    let mut params = block::block_shape::<f64>(z_in, z, rng.gen_range(2..=4), 3, pool, 2, rng.gen_range(2..=5));
    {
        let mut irng = ChaCha8Rng::seed_from_u64(rng.gen());
        crate::nn::init::init_block(&mut params, &mut irng);
        // random norm parameters exercise the affine path
        for v in params.norm1.gamma.iter_mut().chain(params.norm2.gamma.iter_mut()) {
            *v = 1.0 + 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        for v in params.norm1.beta.iter_mut().chain(params.norm3.beta.iter_mut()) {
            *v = 0.2 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let coords = sparse_coords(rng, n, 6);
    let geom = StageGeom::build(&coords.view(), 3, &pool).unwrap();
    let tokens = randn2(rng, n, z_in);
    let g = randn2(rng, geom.part.cells.len(), z);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let (geom2, g2) = (geom.clone(), g.clone());
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("tokens".into(), n * z_in)],
        params0: p0,
        inputs0: tokens.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let tokens = unflatten2(xf, n, z_in);
            (sct_block_forward_cached(&tokens, &geom, &p).unwrap().0 * &g).sum()
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let tokens = unflatten2(xf, n, z_in);
            let (_, cache) = sct_block_forward_cached(&tokens, &geom2, &p).unwrap();
            let (gp, gx) = sct_block_backward(&geom2, &p, &cache, &g2);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn sct_model_instance(rng: &mut ChaCha8Rng) -> CheckInstance {
    let n = rng.gen_range(3..=10);
    let input_dim = rng.gen_range(2..=5);
    let cfg = ModelConfig {
        input_dim,
        stage_widths: vec![4, 4],
        kernel_size: 3,
        pool_size: 3,
        stride: 3,
        n_heads: 2,
        mlp_hidden: 4,
        pool_mode: if rng.gen_bool(0.5) { PoolMode::Max } else { PoolMode::Avg },
        agg: if rng.gen_bool(0.5) { AggMode::Mean } else { AggMode::Max },
        head: HeadKind::Detection,
    };
    let params = cfg.init::<f64>(rng.gen()).unwrap();
    let coords = sparse_coords(rng, n, 6);
    let mut geoms = Vec::new();
    let mut stage_coords = coords;
    for _ in 0..2 {
        let geom = StageGeom::build(&stage_coords.view(), 3, &cfg.pool_spec()).unwrap();
        stage_coords = geom.out_coords.clone();
        geoms.push(geom);
    }
    let features = randn2(rng, n, input_dim);
    let layout = tensor_layout(&params);
    let p0 = flatten_params(&params);
    let geoms2 = geoms.clone();
    let proto = params.clone();
    let proto2 = params;
    CheckInstance {
        param_layout: layout,
        input_layout: vec![("features".into(), n * input_dim)],
        params0: p0,
        inputs0: features.iter().cloned().collect(),
        eval: Box::new(move |pf, xf| {
            let mut p = proto.clone();
            assign_from_flat(&mut p, pf);
            let prep = PreparedBlock {
                block_id: "gradcheck".into(),
                features: unflatten2(xf, n, input_dim),
                geoms: geoms.clone(),
            };
            model_forward_detect(&prep, &p).unwrap().0
        }),
        analytic: Box::new(move |pf, xf| {
            let mut p = proto2.clone();
            assign_from_flat(&mut p, pf);
            let prep = PreparedBlock {
                block_id: "gradcheck".into(),
                features: unflatten2(xf, n, input_dim),
                geoms: geoms2.clone(),
            };
            let (_, cache) = model_forward_detect(&prep, &p).unwrap();
            let (gp, gx) = model_backward_detect(&prep, &p, &cache, 1.0);
            (flatten_params(&gp), gx.iter().cloned().collect())
        }),
    }
}

fn build_instance(kind: KernelKind, rng: &mut ChaCha8Rng) -> CheckInstance {
    match kind {
        KernelKind::Linear => linear_instance(rng),
        KernelKind::LayerNorm => layer_norm_instance(rng),
        KernelKind::Esa => esa_instance(rng),
        KernelKind::SscSa => sscsa_instance(rng),
        KernelKind::SspMax => ssp_instance(rng, PoolMode::Max),
        KernelKind::SspAvg => ssp_instance(rng, PoolMode::Avg),
        KernelKind::Mha => mha_instance(rng),
        KernelKind::Mlp => mlp_instance(rng),
        KernelKind::DetectionHead => detection_head_instance(rng),
        KernelKind::GradingHead => grading_head_instance(rng),
        KernelKind::Abmil => abmil_instance(rng),
        KernelKind::SctBlock => sct_block_instance(rng),
        KernelKind::SctModel => sct_model_instance(rng),
    }
}

/// Run the checker over the selected kernels. All arithmetic is f64.
pub fn gradcheck(kernels: &[KernelKind], trials: usize, eps: f64, seed: u64) -> GradcheckReport {
    let mut entries: Vec<GradcheckEntry> = Vec::new();
    for (ki, &kind) in kernels.iter().enumerate() {
        let mut worst_per_tensor: std::collections::BTreeMap<String, f64> = Default::default();
        for trial in 0..trials {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ ((ki as u64) << 32) ^ (trial as u64).wrapping_mul(0x9e3779b9));
            let inst = build_instance(kind, &mut rng);
            for (tensor, err) in check_instance(&inst, eps) {
                let e = worst_per_tensor.entry(tensor).or_insert(0.0);
                *e = e.max(err);
            }
        }
        for (tensor, err) in worst_per_tensor {
            entries.push(GradcheckEntry { kernel: kind.name(), tensor, max_rel_err: err });
        }
    }
    GradcheckReport { entries, trials, eps }
}
