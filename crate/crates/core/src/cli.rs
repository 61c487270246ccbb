//! Command-line surface tying the library together.
//!
//! Subcommands: `synth`, `train`, `eval`, `screen`, `sweep`, `gradcheck`,
//! `export-embeddings`. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data or file error, 3 numeric failure.

use crate::blockdata::{load_blocks, synth_generate, synth_generate_context, write_blocks, Block,
                       DetectionLabel};
use crate::config::RunConfig;
use crate::error::{Result, SctError};
use crate::metrics::{
    confusion_at, delong_paired, gg3plus_score, isup_group, mcnemar_exact, quadratic_kappa,
    roc_auc, GradeGroup, KappaResult,
};
use crate::nn::abmil::abmil_forward;
use crate::nn::model::{
    model_forward_detect, model_forward_grade, prepare_for_model, trunk_embedding, HeadKind,
    PreparedBlock, SctModelParams,
};
use crate::nn::count_params;
use crate::report::{
    emit_eval_report, emit_sweep_csv, fmt_sig, ComparisonStats, DetectionEval, EvalReport,
    GradingEval,
};
use crate::screening::{choose_thresholds, dual_decide, threshold_sweep};
use crate::training::{gradcheck, train_abmil, train_sct, KernelKind, TaskKind, ALL_KERNELS};
use crate::weights::{load_weights, save_abmil_weights, save_sct_weights, TrainedModel};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sct",
    about = "Sparse convolutional transformer for tissue-block classification and IHC screening",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted carcinoma foci.
    Synth(SynthArgs),
    /// Train a model and save its weights.
    Train(TrainArgs),
    /// Evaluate weights on a labeled dataset and write a CSV report.
    Eval(EvalArgs),
    /// Apply dual-model screening decisions to a dataset.
    Screen(ScreenArgs),
    /// Sweep symmetric screening thresholds and write trade-off curves.
    Sweep(SweepArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Export block-level trunk embeddings as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    /// Mean-shifted contiguous foci.
    Standard,
    /// Paired blocks with identical feature multisets, labeled by layout.
    Context,
}

#[derive(Args)]
struct SynthArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "standard")]
    mode: SynthMode,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelSel {
    Sct,
    Abmil,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output weights file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "sct")]
    model: ModelSel,
    /// detection | grading | sensitive | specific (overrides the config).
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Second weights file for paired DeLong / McNemar statistics.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ScreenArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sensitive: PathBuf,
    #[arg(long)]
    specific: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    t_lo: f64,
    #[arg(long, default_value_t = 0.95)]
    t_hi: f64,
    /// Per-block decisions CSV.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sensitive: PathBuf,
    #[arg(long)]
    specific: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Curves CSV (a .plot.csv companion lands next to it).
    #[arg(long)]
    report: PathBuf,
    /// Also print the most permissive feasible operating point.
    #[arg(long)]
    max_fnr: Option<f64>,
    #[arg(long)]
    max_fpr: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Kernel name or "all".
    #[arg(long, default_value = "all")]
    op: String,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Parse and run; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version output goes to stdout with success
            if e.use_stderr() {
                let _ = write!(std::io::stderr(), "{e}");
                return 1;
            }
            let _ = write!(std::io::stdout(), "{e}");
            return 0;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Screen(a) => cmd_screen(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ExportEmbeddings(a) => cmd_export(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Seed precedence: flag, then config file, then SCT_SEED, then 0.
fn resolve_seed(flag: Option<u64>, config_seed: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = config_seed {
        return Ok(s);
    }
    match std::env::var("SCT_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| SctError::Config(format!("SCT_SEED is not an integer: '{v}'"))),
        Err(_) => Ok(0),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<(RunConfig, Option<u64>)> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let explicit_seed = text
                .lines()
                .filter_map(|l| l.split('#').next())
                .filter_map(|l| l.split_once('='))
                .any(|(k, _)| k.trim() == "seed");
            let cfg = RunConfig::from_str_contents(&text)?;
            let seed = explicit_seed.then_some(cfg.synth.seed);
            Ok((cfg, seed))
        }
        None => Ok((RunConfig::default(), None)),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<i32> {
    let (mut cfg, config_seed) = load_config(&a.config)?;
    let seed = resolve_seed(a.seed, config_seed)?;
    cfg.synth.seed = seed;
    let blocks = match a.mode {
        SynthMode::Standard => synth_generate(&cfg.synth)?,
        SynthMode::Context => synth_generate_context(&cfg.synth)?,
    };
    write_blocks(&a.out, &blocks)?;
    let positives = blocks.iter().filter(|b| b.label == DetectionLabel::Carcinoma).count();
    println!(
        "wrote {} blocks ({} carcinoma, {} benign, dim {}) to {}",
        blocks.len(),
        positives,
        blocks.len() - positives,
        blocks[0].embed_dim(),
        a.out.display()
    );
    Ok(0)
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let (mut cfg, config_seed) = load_config(&a.config)?;
    let seed = resolve_seed(a.seed, config_seed)?;
    cfg.train.seed = seed;
    if let Some(task) = &a.task {
        let task: TaskKind = task.parse()?;
        let defaults = crate::training::TrainConfig::for_task(task);
        cfg.train.task = task;
        cfg.train.w_benign = defaults.w_benign;
        cfg.train.w_carcinoma = defaults.w_carcinoma;
    }
    if let Some(t) = a.threads {
        cfg.train.threads = t;
    }
    let blocks = load_blocks(&a.data)?;
    let input_dim = blocks[0].embed_dim();

    match a.model {
        ModelSel::Sct => {
            let head = match cfg.train.task {
                TaskKind::Grading => HeadKind::Grading,
                _ => HeadKind::Detection,
            };
            let model_cfg = cfg.model_config(input_dim, head);
            let (params, history) = train_sct::<f32>(&blocks, &cfg.train, &model_cfg)?;
            save_sct_weights(&a.out, &params, &model_cfg)?;
            println!(
                "trained {} ({} params) for {} epochs; best val {} = {} at epoch {}",
                cfg.train.task.name(),
                count_params(&params),
                history.loss.len(),
                if cfg.train.task == TaskKind::Grading { "gg3+ auc" } else { "auc" },
                fmt_sig(history.best_val_auc),
                history.best_epoch + 1
            );
        }
        ModelSel::Abmil => {
            let (params, history) =
                train_abmil::<f32>(&blocks, &cfg.train, cfg.attention_dim, cfg.gated_attention)?;
            save_abmil_weights(&a.out, &params)?;
            println!(
                "trained abmil baseline ({} params) for {} epochs; best val auc = {} at epoch {}",
                count_params(&params),
                history.loss.len(),
                fmt_sig(history.best_val_auc),
                history.best_epoch + 1
            );
        }
    }
    println!("weights written to {}", a.out.display());
    Ok(0)
}

/// Detection-style scores for any loaded model.
fn detection_scores(model: &TrainedModel, blocks: &[Block]) -> Result<Vec<f64>> {
    match model {
        TrainedModel::Sct(params, cfg) => {
            if cfg.head != HeadKind::Detection {
                return Err(SctError::Config(
                    "expected a detection model, found a grading head".into(),
                ));
            }
            check_dims(model, blocks)?;
            blocks
                .iter()
                .map(|b| {
                    let prep: PreparedBlock<f32> = prepare_for_model(b, params)?;
                    Ok(model_forward_detect(&prep, params)?.0 as f64)
                })
                .collect()
        }
        TrainedModel::Abmil(params) => {
            check_dims(model, blocks)?;
            blocks
                .iter()
                .map(|b| {
                    let f = block_features_f32(b);
                    Ok(abmil_forward(&f, params)?.0 as f64)
                })
                .collect()
        }
    }
}

fn block_features_f32(b: &Block) -> ndarray::Array2<f32> {
    b.features.clone()
}

fn check_dims(model: &TrainedModel, blocks: &[Block]) -> Result<()> {
    for b in blocks {
        if b.embed_dim() != model.input_dim() {
            return Err(SctError::Data(format!(
                "block {} has dim {} but the model expects {}",
                b.block_id,
                b.embed_dim(),
                model.input_dim()
            )));
        }
    }
    Ok(())
}

fn known_labels(blocks: &[Block]) -> Result<Vec<bool>> {
    blocks
        .iter()
        .map(|b| match b.label {
            DetectionLabel::Carcinoma => Ok(true),
            DetectionLabel::Benign => Ok(false),
            DetectionLabel::Unknown => Err(SctError::Data(format!(
                "block {} has an Unknown label; evaluation needs ground truth",
                b.block_id
            ))),
        })
        .collect()
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let blocks = load_blocks(&a.data)?;
    let model = load_weights(&a.weights)?;
    match &model {
        TrainedModel::Sct(params, cfg) if cfg.head == HeadKind::Grading => {
            let report = eval_grading(params, &blocks)?;
            emit_eval_report(&EvalReport::Grading(report), &a.report)?;
        }
        _ => {
            let labels = known_labels(&blocks)?;
            let scores = detection_scores(&model, &blocks)?;
            let auc = roc_auc(&scores, &labels)?;
            let confusion = confusion_at(&scores, &labels, a.threshold);
            let comparison = match &a.compare {
                Some(p) => {
                    let other = load_weights(p)?;
                    let other_scores = detection_scores(&other, &blocks)?;
                    let delong = delong_paired(&scores, &other_scores, &labels)?;
                    let correct_a: Vec<bool> = scores
                        .iter()
                        .zip(&labels)
                        .map(|(&s, &l)| (s >= a.threshold) == l)
                        .collect();
                    let correct_b: Vec<bool> = other_scores
                        .iter()
                        .zip(&labels)
                        .map(|(&s, &l)| (s >= a.threshold) == l)
                        .collect();
                    Some(ComparisonStats {
                        auc_other: delong.auc_b,
                        delong_z: delong.z,
                        delong_p: delong.p,
                        mcnemar_p: mcnemar_exact(&correct_a, &correct_b)?,
                    })
                }
                None => None,
            };
            let report = DetectionEval {
                n_blocks: blocks.len(),
                threshold: a.threshold,
                auc: auc.auc,
                confusion,
                roc_points: auc.points,
                comparison,
            };
            println!(
                "auc {} sensitivity {} specificity {} on {} blocks",
                fmt_sig(report.auc),
                fmt_sig(confusion.sensitivity),
                fmt_sig(confusion.specificity),
                blocks.len()
            );
            emit_eval_report(&EvalReport::Detection(report), &a.report)?;
        }
    }
    println!("report written to {}", a.report.display());
    Ok(0)
}

fn eval_grading(params: &SctModelParams<f32>, blocks: &[Block]) -> Result<GradingEval> {
    check_grading_labels(blocks)?;
    let mut pred_isup = Vec::with_capacity(blocks.len());
    let mut actual_isup = Vec::with_capacity(blocks.len());
    let mut pred_primary = Vec::with_capacity(blocks.len());
    let mut actual_primary = Vec::with_capacity(blocks.len());
    let mut pred_secondary = Vec::with_capacity(blocks.len());
    let mut actual_secondary = Vec::with_capacity(blocks.len());
    let mut gg3_scores = Vec::with_capacity(blocks.len());
    let mut gg3_labels = Vec::with_capacity(blocks.len());
    for b in blocks {
        let prep: PreparedBlock<f32> = prepare_for_model(b, params)?;
        let (p1, p2, _) = model_forward_grade(&prep, params)?;
        let p1: Vec<f64> = p1.iter().map(|&v| v as f64).collect();
        let p2: Vec<f64> = p2.iter().map(|&v| v as f64).collect();
        let argmax = |d: &[f64]| {
            d.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        };
        let (pi, si) = (argmax(&p1), argmax(&p2));
        let (pp, ps) = normalize_pattern_pair(pi, si);
        let g = b.grading.expect("validated");
        let actual_gg = isup_group(g.primary, g.secondary)?;
        let pred_gg = isup_group(pp, ps)?;
        pred_isup.push(pred_gg.ordinal());
        actual_isup.push(actual_gg.ordinal());
        pred_primary.push(pp.class_index());
        actual_primary.push(g.primary.class_index());
        pred_secondary.push(ps.class_index());
        actual_secondary.push(g.secondary.class_index());
        gg3_scores.push(gg3plus_score(&p1, &p2));
        gg3_labels.push(actual_gg >= GradeGroup::GG3);
    }
    let kappa_isup = quadratic_kappa(&pred_isup, &actual_isup, 6)?;
    let kappa_primary = kappa_or_degenerate(&pred_primary, &actual_primary, 4);
    let kappa_secondary = kappa_or_degenerate(&pred_secondary, &actual_secondary, 4);
    let gg3plus_auc = roc_auc(&gg3_scores, &gg3_labels).ok().map(|r| r.auc);

    let group_names = ["benign", "gg1", "gg2", "gg3", "gg4", "gg5"];
    let mut per_group: Vec<(String, usize, usize)> = group_names
        .iter()
        .map(|n| (n.to_string(), 0, 0))
        .collect();
    for (&p, &a) in pred_isup.iter().zip(&actual_isup) {
        per_group[a].1 += 1;
        if p == a {
            per_group[a].2 += 1;
        }
    }
    Ok(GradingEval {
        n_blocks: blocks.len(),
        kappa_isup,
        kappa_primary,
        kappa_secondary,
        gg3plus_auc,
        per_group,
    })
}

fn kappa_or_degenerate(pred: &[usize], actual: &[usize], n_cat: usize) -> KappaResult {
    quadratic_kappa(pred, actual, n_cat).unwrap_or(KappaResult {
        kappa: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
    })
}

/// The grading head can argmax a None pattern next to a real one; fold
/// such pairs to a consistent benign/carcinoma call.
fn normalize_pattern_pair(
    p: usize,
    s: usize,
) -> (crate::blockdata::Pattern, crate::blockdata::Pattern) {
    use crate::blockdata::Pattern;
    let pp = Pattern::from_class_index(p).unwrap_or(Pattern::None);
    let ps = Pattern::from_class_index(s).unwrap_or(Pattern::None);
    match (pp, ps) {
        (Pattern::None, Pattern::None) => (Pattern::None, Pattern::None),
        (Pattern::None, other) => (other, other),
        (other, Pattern::None) => (other, other),
        pair => pair,
    }
}

fn check_grading_labels(blocks: &[Block]) -> Result<()> {
    for b in blocks {
        if b.label == DetectionLabel::Unknown || b.grading.is_none() {
            return Err(SctError::Data(format!(
                "block {} lacks grading ground truth",
                b.block_id
            )));
        }
    }
    Ok(())
}

fn cmd_screen(a: ScreenArgs) -> Result<i32> {
    let blocks = load_blocks(&a.data)?;
    let sensitive = load_weights(&a.sensitive)?;
    let specific = load_weights(&a.specific)?;
    let p_sens = detection_scores(&sensitive, &blocks)?;
    let p_spec = detection_scores(&specific, &blocks)?;

    let mut f = std::fs::File::create(&a.report)?;
    writeln!(f, "block_id,p_sensitive,p_specific,decision")?;
    let mut counts = [0usize; 3];
    for (i, b) in blocks.iter().enumerate() {
        let o = dual_decide(p_sens[i], p_spec[i], a.t_lo, a.t_hi)?;
        counts[match o.decision {
            crate::screening::Decision::RuleOutBenign => 0,
            crate::screening::Decision::RuleInCarcinoma => 1,
            crate::screening::Decision::Equivocal => 2,
        }] += 1;
        writeln!(
            f,
            "{},{},{},{}",
            b.block_id,
            fmt_sig(p_sens[i]),
            fmt_sig(p_spec[i]),
            o.decision.name()
        )?;
    }
    println!(
        "{} ruled out, {} ruled in, {} equivocal (of {}) at t_lo {} t_hi {}",
        counts[0],
        counts[1],
        counts[2],
        blocks.len(),
        fmt_sig(a.t_lo),
        fmt_sig(a.t_hi)
    );
    println!("decisions written to {}", a.report.display());
    Ok(0)
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let (cfg, _) = load_config(&a.config)?;
    let blocks = load_blocks(&a.data)?;
    let labels = known_labels(&blocks)?;
    let sensitive = load_weights(&a.sensitive)?;
    let specific = load_weights(&a.specific)?;
    let p_sens = detection_scores(&sensitive, &blocks)?;
    let p_spec = detection_scores(&specific, &blocks)?;
    let curves = threshold_sweep(&p_sens, &p_spec, &labels, &cfg.sweep_grid)?;
    emit_sweep_csv(&curves, &a.report)?;
    println!(
        "swept {} grid points over {} blocks ({} benign, {} carcinoma)",
        curves.points.len(),
        blocks.len(),
        curves.n_benign,
        curves.n_carcinoma
    );
    let (max_fnr, max_fpr) = (a.max_fnr.unwrap_or(cfg.max_fnr), a.max_fpr.unwrap_or(cfg.max_fpr));
    let choice = choose_thresholds(&curves, max_fnr, max_fpr)?;
    if choice.feasible {
        println!(
            "operating point: tau {} (t_lo {}, t_hi {}) screens {} at error {} (fnr {} fpr {})",
            fmt_sig(choice.tau),
            fmt_sig(choice.t_lo),
            fmt_sig(choice.t_hi),
            fmt_sig(choice.point.screened_total),
            fmt_sig(choice.point.total_error_screened),
            fmt_sig(choice.point.fnr),
            fmt_sig(choice.point.fpr)
        );
    } else {
        println!(
            "no feasible operating point under fnr <= {} and fpr <= {}; strictest grid point reported",
            fmt_sig(max_fnr),
            fmt_sig(max_fpr)
        );
    }
    println!("curves written to {}", a.report.display());
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let seed = resolve_seed(a.seed, None)?;
    let kernels: Vec<KernelKind> = if a.op == "all" {
        ALL_KERNELS.to_vec()
    } else {
        vec![a.op.parse()?]
    };
    let report = gradcheck(&kernels, a.trials, a.eps, seed);
    print!("{report}");
    match report.worst() {
        Some(worst) => {
            println!(
                "worst: {} / {} at {:.3e} (tolerance {:.1e}, {} trials, eps {:.1e})",
                worst.kernel, worst.tensor, worst.max_rel_err, a.tolerance, a.trials, a.eps
            );
            if report.passed(a.tolerance) {
                println!("gradcheck passed");
                Ok(0)
            } else {
                Err(SctError::Divergence {
                    step: 0,
                    message: format!(
                        "gradient mismatch {:.3e} above tolerance {:.1e} in {} / {}",
                        worst.max_rel_err, a.tolerance, worst.kernel, worst.tensor
                    ),
                })
            }
        }
        None => {
            println!("no kernels checked");
            Ok(0)
        }
    }
}

fn cmd_export(a: ExportArgs) -> Result<i32> {
    let blocks = load_blocks(&a.data)?;
    let model = load_weights(&a.weights)?;
    check_dims(&model, &blocks)?;
    let mut f = std::fs::File::create(&a.out)?;
    let dim = match &model {
        TrainedModel::Sct(params, _) => params.final_width().unwrap_or(model.input_dim()),
        TrainedModel::Abmil(_) => model.input_dim(),
    };
    let header: Vec<String> = (0..dim).map(|i| format!("e{i}")).collect();
    writeln!(f, "block_id,label,{}", header.join(","))?;
    for b in &blocks {
        let emb: Vec<f64> = match &model {
            TrainedModel::Sct(params, _) => {
                let prep: PreparedBlock<f32> = prepare_for_model(b, params)?;
                trunk_embedding(&prep, params)?.iter().map(|&v| v as f64).collect()
            }
            TrainedModel::Abmil(params) => {
                // attention-weighted mean of tile embeddings
                let feats = block_features_f32(b);
                let (_, cache) = abmil_forward(&feats, params)?;
                let mut pooled = vec![0.0f64; feats.ncols()];
                for i in 0..feats.nrows() {
                    for d in 0..feats.ncols() {
                        pooled[d] += cache.alpha[i] as f64 * feats[[i, d]] as f64;
                    }
                }
                pooled
            }
        };
        let label = match b.label {
            DetectionLabel::Benign => "benign",
            DetectionLabel::Carcinoma => "carcinoma",
            DetectionLabel::Unknown => "unknown",
        };
        let cells: Vec<String> = emb.iter().map(|&v| fmt_sig(v)).collect();
        writeln!(f, "{},{},{}", b.block_id, label, cells.join(","))?;
    }
    println!("wrote {} embeddings to {}", blocks.len(), a.out.display());
    Ok(0)
}

/// Re-exported for the binary target.
pub fn main_entry() -> i32 {
    run(std::env::args_os())
}
