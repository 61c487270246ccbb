//! Deterministic seeded training: stratified split, Adam updates, per-epoch
//! validation AUC, early stopping, best-validation parameters returned.

pub mod adam;
pub mod gradcheck;
pub mod loss;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradcheck, GradcheckEntry, GradcheckReport, KernelKind, ALL_KERNELS};
pub use loss::{loss_detection, loss_detection_dlogit, loss_grading, loss_grading_dlogits};

use crate::blockdata::{Block, DetectionLabel};
use crate::error::{Result, SctError};
use crate::metrics::{gg3plus_score, isup_group, roc_auc, GradeGroup};
use crate::nn::abmil::{abmil_backward_logit, abmil_forward, AbmilParams};
use crate::nn::model::{
    model_backward_detect_logit, model_backward_grade_logits, model_forward_detect,
    model_forward_grade, prepare_for_model, ModelConfig, PreparedBlock, SctModelParams,
};
use crate::nn::{count_params, ParamTensors};
use crate::real::Real;
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Detection,
    Grading,
    /// Detection with carcinoma errors weighted up (rule-out model).
    Sensitive,
    /// Detection with benign errors weighted up (rule-in model).
    Specific,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Detection => "detection",
            TaskKind::Grading => "grading",
            TaskKind::Sensitive => "sensitive",
            TaskKind::Specific => "specific",
        }
    }

    pub fn is_detection_like(self) -> bool {
        !matches!(self, TaskKind::Grading)
    }
}

impl std::str::FromStr for TaskKind {
    type Err = SctError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detection" => Ok(TaskKind::Detection),
            "grading" => Ok(TaskKind::Grading),
            "sensitive" => Ok(TaskKind::Sensitive),
            "specific" => Ok(TaskKind::Specific),
            other => Err(SctError::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Blocks per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub w_benign: f64,
    pub w_carcinoma: f64,
    pub task: TaskKind,
    pub seed: u64,
    /// Fraction of blocks held out for validation (stratified by label).
    pub val_fraction: f64,
    /// Early stopping: epochs without validation improvement.
    pub patience: usize,
    pub threads: usize,
}

impl TrainConfig {
    pub fn for_task(task: TaskKind) -> Self {
        let (w_benign, w_carcinoma) = match task {
            TaskKind::Sensitive => (1.0, 8.0),
            TaskKind::Specific => (8.0, 1.0),
            _ => (1.0, 1.0),
        };
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            w_benign,
            w_carcinoma,
            task,
            seed: 0,
            val_fraction: 0.2,
            patience: 10,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(SctError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(SctError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(SctError::Config("learning_rate must be >= 0".into()));
        }
        if !(self.w_benign > 0.0 && self.w_carcinoma > 0.0) {
            return Err(SctError::Config("class weights must be > 0".into()));
        }
        if !(0.0..0.9).contains(&self.val_fraction) {
            return Err(SctError::Config("val_fraction must lie in [0, 0.9)".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Per-epoch record; all vectors share the length `epochs_run`.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub val_auc: Vec<f64>,
    pub wall_secs: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

fn check_labels(blocks: &[Block], task: TaskKind) -> Result<()> {
    if blocks.is_empty() {
        return Err(SctError::Input("train: empty dataset".into()));
    }
    for b in blocks {
        if b.label == DetectionLabel::Unknown {
            return Err(SctError::Data(format!(
                "train: block {} has an Unknown label",
                b.block_id
            )));
        }
        if task == TaskKind::Grading && b.grading.is_none() {
            return Err(SctError::Data(format!(
                "train: block {} has no grading label",
                b.block_id
            )));
        }
    }
    if task.is_detection_like() {
        let pos = blocks.iter().filter(|b| b.label == DetectionLabel::Carcinoma).count();
        if pos == 0 || pos == blocks.len() {
            return Err(SctError::Data(
                "train: detection needs at least one block of each class".into(),
            ));
        }
    }
    Ok(())
}

/// Stratified split into (train, validation) index lists.
fn split_indices(blocks: &[Block], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x73706c_69);
    let mut benign: Vec<usize> = Vec::new();
    let mut carcinoma: Vec<usize> = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        match b.label {
            DetectionLabel::Carcinoma => carcinoma.push(i),
            _ => benign.push(i),
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [&mut benign, &mut carcinoma] {
        class.shuffle(&mut rng);
        let take = if class.len() >= 2 {
            ((class.len() as f64 * val_fraction).round() as usize).min(class.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&class[..take]);
        train.extend_from_slice(&class[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Validation ground truth for AUC: carcinoma for detection tasks, grade
/// group 3+ for grading.
fn val_label(block: &Block, task: TaskKind) -> bool {
    match task {
        TaskKind::Grading => block
            .grading
            .and_then(|g| isup_group(g.primary, g.secondary).ok())
            .map(|gg| gg >= GradeGroup::GG3)
            .unwrap_or(false),
        _ => block.label == DetectionLabel::Carcinoma,
    }
}

fn auc_or_half(scores: &[f64], labels: &[bool]) -> f64 {
    match roc_auc(scores, labels) {
        Ok(r) => r.auc,
        Err(_) => 0.5,
    }
}

/// Everything the generic loop needs from a concrete model family.
struct Hooks<'a, T: Real, P> {
    /// Loss and gradient of one block, added into the flat accumulator.
    block_grad: Box<dyn Fn(&P, usize, &mut [T]) -> Result<f64> + Sync + 'a>,
    /// Score of one block for validation AUC.
    block_score: Box<dyn Fn(&P, usize) -> Result<f64> + Sync + 'a>,
}

fn train_generic<T: Real, P: ParamTensors<T> + Clone + Send + Sync>(
    mut params: P,
    labels: &[bool],
    cfg: &TrainConfig,
    hooks: Hooks<'_, T, P>,
) -> Result<(P, TrainHistory)> {
    cfg.validate()?;
    let (train_idx, val_idx) = {
        // indices refer to the caller's block list; labels carry the split
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x73706c_69);
        let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        let mut train = Vec::new();
        let mut val = Vec::new();
        for class in &mut by_class {
            class.shuffle(&mut rng);
            let take = if class.len() >= 2 {
                ((class.len() as f64 * cfg.val_fraction).round() as usize).min(class.len() - 1)
            } else {
                0
            };
            val.extend_from_slice(&class[..take]);
            train.extend_from_slice(&class[take..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        (train, val)
    };
    if train_idx.is_empty() {
        return Err(SctError::Input("train: no training blocks after split".into()));
    }

    let n_params = count_params(&params);
    let mut adam = AdamState::<T>::new(n_params);
    let adam_cfg = cfg.adam();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x657_06f63);

    let mut history = TrainHistory::default();
    let mut best_params = params.clone();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let mut order = train_idx.clone();
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let mut acc = vec![T::zero(); n_params];
            let mut batch_loss = 0.0;
            if cfg.threads > 1 {
                let results: Vec<Result<(f64, Vec<T>)>> = {
                    let params_ref = &params;
                    let hooks_ref = &hooks;
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(cfg.threads)
                        .build()
                        .map_err(|e| SctError::Config(format!("thread pool: {e}")))?;
                    pool.install(|| {
                        use rayon::prelude::*;
                        batch
                            .par_iter()
                            .map(|&bi| {
                                let mut g = vec![T::zero(); n_params];
                                let l = (hooks_ref.block_grad)(params_ref, bi, &mut g)?;
                                Ok((l, g))
                            })
                            .collect()
                    })
                };
                // fold in block-index order for determinism
                for r in results {
                    let (l, g) = r?;
                    batch_loss += l;
                    for (a, &v) in acc.iter_mut().zip(&g) {
                        *a = *a + v;
                    }
                }
            } else {
                for &bi in batch {
                    batch_loss += (hooks.block_grad)(&params, bi, &mut acc)?;
                }
            }
            if !batch_loss.is_finite() {
                return Err(SctError::Divergence {
                    step,
                    message: "non-finite training loss".into(),
                });
            }
            let scale = T::from_f64(1.0 / batch.len() as f64);
            for a in acc.iter_mut() {
                *a = *a * scale;
            }
            adam.step(&mut params, &acc, &adam_cfg);
            epoch_loss += batch_loss;
        }
        epoch_loss /= order.len() as f64;

        // validation
        let val_auc = if val_idx.is_empty() {
            0.5
        } else {
            let mut scores = Vec::with_capacity(val_idx.len());
            let mut vl = Vec::with_capacity(val_idx.len());
            for &bi in &val_idx {
                scores.push((hooks.block_score)(&params, bi)?);
                vl.push(labels[bi]);
            }
            auc_or_half(&scores, &vl)
        };

        history.loss.push(epoch_loss);
        history.val_auc.push(val_auc);
        history.wall_secs.push(t0.elapsed().as_secs_f64());

        if val_auc > best_auc {
            best_auc = val_auc;
            best_epoch = epoch;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    history.best_epoch = best_epoch;
    history.best_val_auc = best_auc;
    Ok((best_params, history))
}

/// Train an SCT model (detection, grading, or a weighted sensitive /
/// specific variant). Deterministic for a fixed seed and thread count 1;
/// with more threads, per-block gradients still sum in block-index order.
pub fn train_sct<T: Real>(
    blocks: &[Block],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(SctModelParams<T>, TrainHistory)> {
    check_labels(blocks, cfg.task)?;
    model_cfg.validate()?;
    for b in blocks {
        if b.embed_dim() != model_cfg.input_dim {
            return Err(SctError::Data(format!(
                "train: block {} has dim {} but the model expects {}",
                b.block_id,
                b.embed_dim(),
                model_cfg.input_dim
            )));
        }
    }
    let params: SctModelParams<T> = model_cfg.init(cfg.seed)?;
    let prepared: std::sync::Arc<Vec<PreparedBlock<T>>> = std::sync::Arc::new(
        blocks
            .iter()
            .map(|b| prepare_for_model(b, &params))
            .collect::<Result<_>>()?,
    );
    let prepared2 = prepared.clone();
    let labels: Vec<bool> = blocks.iter().map(|b| val_label(b, cfg.task)).collect();

    let task = cfg.task;
    let (w_b, w_c) = (cfg.w_benign, cfg.w_carcinoma);
    let hooks: Hooks<'_, T, SctModelParams<T>> = Hooks {
        block_grad: Box::new(move |params, bi, acc| {
            let prep = &prepared[bi];
            let block = &blocks[bi];
            if task == TaskKind::Grading {
                let (p1, p2, cache) = model_forward_grade(prep, params)?;
                let g = block.grading.expect("validated");
                let p1f: Vec<f64> = p1.iter().map(|v| v.as_f64()).collect();
                let p2f: Vec<f64> = p2.iter().map(|v| v.as_f64()).collect();
                let l = loss_grading(&p1f, &p2f, g, block.label)?;
                let (dl1, dl2) = loss_grading_dlogits(&p1f, &p2f, g);
                let d1 = Array1::from_iter(dl1.iter().map(|&v| T::from_f64(v)));
                let d2 = Array1::from_iter(dl2.iter().map(|&v| T::from_f64(v)));
                let (grads, _) = model_backward_grade_logits(prep, params, &cache, &d1, &d2);
                add_into(acc, &grads);
                Ok(l)
            } else {
                let (p, cache) = model_forward_detect(prep, params)?;
                let l = loss_detection(p.as_f64(), block.label, w_b, w_c)?;
                let dlogit = loss_detection_dlogit(p.as_f64(), block.label, w_b, w_c)?;
                let (grads, _) =
                    model_backward_detect_logit(prep, params, &cache, T::from_f64(dlogit));
                add_into(acc, &grads);
                Ok(l)
            }
        }),
        block_score: Box::new(move |params, bi| {
            let prep = &prepared2[bi];
            if task == TaskKind::Grading {
                let (p1, p2, _) = model_forward_grade(prep, params)?;
                let p1f: Vec<f64> = p1.iter().map(|v| v.as_f64()).collect();
                let p2f: Vec<f64> = p2.iter().map(|v| v.as_f64()).collect();
                Ok(gg3plus_score(&p1f, &p2f))
            } else {
                Ok(model_forward_detect(prep, params)?.0.as_f64())
            }
        }),
    };
    train_generic(params, &labels, cfg, hooks)
}

/// Train the attention-pooling baseline on raw tile features.
pub fn train_abmil<T: Real>(
    blocks: &[Block],
    cfg: &TrainConfig,
    attention_dim: usize,
    gated: bool,
) -> Result<(AbmilParams<T>, TrainHistory)> {
    if cfg.task == TaskKind::Grading {
        return Err(SctError::Config("abmil supports detection-style tasks only".into()));
    }
    check_labels(blocks, cfg.task)?;
    let dim = blocks[0].embed_dim();
    let features: std::sync::Arc<Vec<Array2<T>>> = std::sync::Arc::new(
        blocks
            .iter()
            .map(|b| {
                Array2::from_shape_fn((b.n_tiles(), dim), |(i, j)| T::from_f32(b.features[[i, j]]))
            })
            .collect(),
    );
    let features2 = features.clone();
    let labels: Vec<bool> = blocks.iter().map(|b| val_label(b, cfg.task)).collect();
    let params = AbmilParams::<T>::init(dim, attention_dim, gated, cfg.seed);

    let (w_b, w_c) = (cfg.w_benign, cfg.w_carcinoma);
    let hooks: Hooks<'_, T, AbmilParams<T>> = Hooks {
        block_grad: Box::new(move |params, bi, acc| {
            let (p, cache) = abmil_forward(&features[bi], params)?;
            let l = loss_detection(p.as_f64(), blocks[bi].label, w_b, w_c)?;
            let dlogit = loss_detection_dlogit(p.as_f64(), blocks[bi].label, w_b, w_c)?;
            let (grads, _) =
                abmil_backward_logit(&features[bi], params, &cache, T::from_f64(dlogit));
            add_into(acc, &grads);
            Ok(l)
        }),
        block_score: Box::new(move |params, bi| {
            Ok(abmil_forward(&features2[bi], params)?.0.as_f64())
        }),
    };
    train_generic(params, &labels, cfg, hooks)
}

fn add_into<T: Real, P: ParamTensors<T>>(acc: &mut [T], grads: &P) {
    let mut at = 0;
    grads.visit(&mut |_, _, data| {
        for &v in data {
            acc[at] = acc[at] + v;
            at += 1;
        }
    });
    debug_assert_eq!(at, acc.len());
}

/// Stratified train/validation split by detection label; exposed so the
/// CLI and tests can reproduce the trainer's holdout.
pub fn stratified_split(blocks: &[Block], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    split_indices(blocks, val_fraction, seed)
}
