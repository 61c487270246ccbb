//! Flat key=value run configuration.
//!
//! One file configures synthesis, training, architecture, and screening.
//! Lines are `key = value`; `#` starts a comment. Unknown keys are
//! rejected so typos cannot silently fall back to defaults.
//!
//! Keys (defaults in parentheses):
//!
//! * Synthesis: `n_blocks` (100), `tiles_per_slide_min` (20),
//!   `tiles_per_slide_max` (60), `slides_per_block_min` (1),
//!   `slides_per_block_max` (3), `embed_dim` (64), `focus_radius` (2),
//!   `carcinoma_shift` (2.0), `noise_sigma` (1.0), `carcinoma_fraction`
//!   (0.5), `pattern_mix` (`3+3:0.35,3+4:0.2,...`), `seed` (0)
//! * Training: `epochs` (30), `batch_size` (8), `learning_rate` (1e-3),
//!   `beta1` (0.9), `beta2` (0.999), `epsilon` (1e-8), `w_benign` (task
//!   default), `w_carcinoma` (task default), `task` (detection),
//!   `val_fraction` (0.2), `patience` (10)
//! * Architecture: `stage_widths` (`64,64,128,128,128`), `kernel_size` (3),
//!   `pool_size` (3), `stride` (3), `n_heads` (4), `mlp_hidden` (128),
//!   `pool_mode` (max), `aggregation` (mean), `attention_dim` (64, for the
//!   pooling baseline), `gated_attention` (false)
//! * Screening: `t_lo` (0.05), `t_hi` (0.95), `max_fnr` (0.01),
//!   `max_fpr` (0.02), `sweep_grid` (`default` or comma-separated taus)
//! * Execution: `threads` (1)

use crate::blockdata::{Pattern, SynthConfig};
use crate::error::{Result, SctError};
use crate::nn::model::{AggMode, HeadKind, ModelConfig};
use crate::nn::ssp::PoolMode;
use crate::screening::default_tau_grid;
use crate::training::{TaskKind, TrainConfig};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    /// Stage widths etc.; `input_dim` is filled from data or `embed_dim`.
    pub stage_widths: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub stride: usize,
    pub n_heads: usize,
    pub mlp_hidden: usize,
    pub pool_mode: PoolMode,
    pub aggregation: AggMode,
    pub attention_dim: usize,
    pub gated_attention: bool,
    pub t_lo: f64,
    pub t_hi: f64,
    pub max_fnr: f64,
    pub max_fpr: f64,
    pub sweep_grid: Vec<f64>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            train: TrainConfig::for_task(TaskKind::Detection),
            stage_widths: vec![64, 64, 128, 128, 128],
            kernel_size: 3,
            pool_size: 3,
            stride: 3,
            n_heads: 4,
            mlp_hidden: 128,
            pool_mode: PoolMode::Max,
            aggregation: AggMode::Mean,
            attention_dim: 64,
            gated_attention: false,
            t_lo: 0.05,
            t_hi: 0.95,
            max_fnr: 0.01,
            max_fpr: 0.02,
            sweep_grid: default_tau_grid(),
            threads: 1,
        }
    }
}

impl RunConfig {
    /// Parse a config file; unknown keys are config errors.
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<RunConfig> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<RunConfig> {
        let mut map = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SctError::Config(format!("line {}: expected key = value, got '{raw}'", ln + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut task: TaskKind = TaskKind::Detection;
        // two passes so the task's default class weights apply before
        // explicit overrides
        if let Some(t) = map.get("task") {
            task = t.parse()?;
        }
        cfg.train = TrainConfig::for_task(task);

        for (key, value) in &map {
            let v = value.as_str();
            match key.as_str() {
                "n_blocks" => cfg.synth.n_blocks = parse(key, v)?,
                "tiles_per_slide_min" => cfg.synth.tiles_per_slide.0 = parse(key, v)?,
                "tiles_per_slide_max" => cfg.synth.tiles_per_slide.1 = parse(key, v)?,
                "slides_per_block_min" => cfg.synth.slides_per_block.0 = parse(key, v)?,
                "slides_per_block_max" => cfg.synth.slides_per_block.1 = parse(key, v)?,
                "embed_dim" => cfg.synth.embed_dim = parse(key, v)?,
                "focus_radius" => cfg.synth.focus_radius = parse(key, v)?,
                "carcinoma_shift" => cfg.synth.carcinoma_shift = parse(key, v)?,
                "noise_sigma" => cfg.synth.noise_sigma = parse(key, v)?,
                "carcinoma_fraction" => cfg.synth.carcinoma_fraction = parse(key, v)?,
                "pattern_mix" => cfg.synth.pattern_mix = parse_pattern_mix(v)?,
                "seed" => {
                    cfg.synth.seed = parse(key, v)?;
                    cfg.train.seed = cfg.synth.seed;
                }
                "epochs" => cfg.train.epochs = parse(key, v)?,
                "batch_size" => cfg.train.batch_size = parse(key, v)?,
                "learning_rate" => cfg.train.learning_rate = parse(key, v)?,
                "beta1" => cfg.train.beta1 = parse(key, v)?,
                "beta2" => cfg.train.beta2 = parse(key, v)?,
                "epsilon" => cfg.train.epsilon = parse(key, v)?,
                "w_benign" => cfg.train.w_benign = parse(key, v)?,
                "w_carcinoma" => cfg.train.w_carcinoma = parse(key, v)?,
                "task" => {} // handled above
                "val_fraction" => cfg.train.val_fraction = parse(key, v)?,
                "patience" => cfg.train.patience = parse(key, v)?,
                "stage_widths" => cfg.stage_widths = parse_list(key, v)?,
                "kernel_size" => cfg.kernel_size = parse(key, v)?,
                "pool_size" => cfg.pool_size = parse(key, v)?,
                "stride" => cfg.stride = parse(key, v)?,
                "n_heads" => cfg.n_heads = parse(key, v)?,
                "mlp_hidden" => cfg.mlp_hidden = parse(key, v)?,
                "pool_mode" => {
                    cfg.pool_mode = match v {
                        "max" => PoolMode::Max,
                        "avg" => PoolMode::Avg,
                        other => {
                            return Err(SctError::Config(format!(
                                "pool_mode must be max or avg, got '{other}'"
                            )))
                        }
                    }
                }
                "aggregation" => {
                    cfg.aggregation = match v {
                        "mean" => AggMode::Mean,
                        "max" => AggMode::Max,
                        other => {
                            return Err(SctError::Config(format!(
                                "aggregation must be mean or max, got '{other}'"
                            )))
                        }
                    }
                }
                "attention_dim" => cfg.attention_dim = parse(key, v)?,
                "gated_attention" => cfg.gated_attention = parse_bool(key, v)?,
                "t_lo" => cfg.t_lo = parse(key, v)?,
                "t_hi" => cfg.t_hi = parse(key, v)?,
                "max_fnr" => cfg.max_fnr = parse(key, v)?,
                "max_fpr" => cfg.max_fpr = parse(key, v)?,
                "sweep_grid" => {
                    cfg.sweep_grid = if v == "default" {
                        default_tau_grid()
                    } else {
                        let mut g: Vec<f64> = parse_list(key, v)?;
                        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        g
                    }
                }
                "threads" => cfg.threads = parse(key, v)?,
                other => {
                    return Err(SctError::Config(format!("unknown config key '{other}'")))
                }
            }
        }
        cfg.train.threads = cfg.threads;
        Ok(cfg)
    }

    /// The SCT architecture for a given input dim and head.
    pub fn model_config(&self, input_dim: usize, head: HeadKind) -> ModelConfig {
        ModelConfig {
            input_dim,
            stage_widths: self.stage_widths.clone(),
            kernel_size: self.kernel_size,
            pool_size: self.pool_size,
            stride: self.stride,
            n_heads: self.n_heads,
            mlp_hidden: self.mlp_hidden,
            pool_mode: self.pool_mode,
            agg: self.aggregation,
            head,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| SctError::Config(format!("invalid value '{v}' for key '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(SctError::Config(format!("invalid boolean '{other}' for key '{key}'"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| SctError::Config(format!("invalid list entry '{s}' for key '{key}'")))
        })
        .collect()
}

/// `3+4:0.2,4+3:0.15,...` entries; weights need not sum to one.
fn parse_pattern_mix(v: &str) -> Result<Vec<(Pattern, Pattern, f64)>> {
    let pattern = |s: &str| -> Result<Pattern> {
        match s {
            "3" => Ok(Pattern::P3),
            "4" => Ok(Pattern::P4),
            "5" => Ok(Pattern::P5),
            other => Err(SctError::Config(format!("invalid Gleason pattern '{other}'"))),
        }
    };
    let mut out = Vec::new();
    for entry in v.split(',') {
        let entry = entry.trim();
        let (pair, weight) = entry
            .split_once(':')
            .ok_or_else(|| SctError::Config(format!("pattern_mix entry '{entry}' lacks ':'")))?;
        let (p, s) = pair
            .split_once('+')
            .ok_or_else(|| SctError::Config(format!("pattern_mix pair '{pair}' lacks '+'")))?;
        out.push((pattern(p.trim())?, pattern(s.trim())?, parse("pattern_mix", weight.trim())?));
    }
    if out.is_empty() {
        return Err(SctError::Config("pattern_mix must not be empty".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let cfg = RunConfig::from_str_contents("").unwrap();
        assert_eq!(cfg.stage_widths, vec![64, 64, 128, 128, 128]);
        assert_eq!(cfg.sweep_grid.len(), 199);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_str_contents("no_such_key = 1").unwrap_err();
        assert!(matches!(err, SctError::Config(_)));
    }

    #[test]
    fn task_defaults_apply_before_explicit_weights() {
        let cfg = RunConfig::from_str_contents("task = sensitive").unwrap();
        assert_eq!((cfg.train.w_benign, cfg.train.w_carcinoma), (1.0, 8.0));
        let cfg = RunConfig::from_str_contents("task = sensitive\nw_carcinoma = 4").unwrap();
        assert_eq!((cfg.train.w_benign, cfg.train.w_carcinoma), (1.0, 4.0));
        let cfg = RunConfig::from_str_contents("task = specific").unwrap();
        assert_eq!((cfg.train.w_benign, cfg.train.w_carcinoma), (8.0, 1.0));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::from_str_contents(
            "# a comment\n\nseed = 9 # trailing comment\nkernel_size = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.synth.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.kernel_size, 5);
    }

    #[test]
    fn pattern_mix_parses() {
        let cfg = RunConfig::from_str_contents("pattern_mix = 3+3:0.5, 4+5:0.5").unwrap();
        assert_eq!(cfg.synth.pattern_mix.len(), 2);
        assert_eq!(cfg.synth.pattern_mix[1], (Pattern::P4, Pattern::P5, 0.5));
    }

    #[test]
    fn malformed_lines_are_config_errors() {
        assert!(RunConfig::from_str_contents("just words").is_err());
        assert!(RunConfig::from_str_contents("epochs = abc").is_err());
    }
}
