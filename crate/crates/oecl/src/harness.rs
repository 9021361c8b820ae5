//! Experiment harness: configuration, the momentum-SGD training loop with
//! warm-up and cosine learning-rate decay, per-epoch metrics, and the
//! sweep / diminishing-effect / few-shot experiment drivers.
//!
//! Everything is deterministic in `(config, seed)`: data generation,
//! shuffling, augmentation draws, and evaluation all derive their RNG
//! streams from the experiment seed with `rng::mix`, so two runs of the
//! same configuration produce bitwise-identical metrics.

use std::path::Path;

use crate::data::{
    augment, make_oe_pool, sample_dataset, select_subset, LabeledSample, ModeSpec, OeKind,
    Origin, SyntheticSpec, TransformSpec,
};
use crate::encoder::{embed, init_params, project, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::losses::{
    alignment_loss, contrastive_loss, oe_norm_penalty, uniformity_loss, wang_isola_uniform,
    weighted_align_uniform, LossConfig, LossForm,
};
use crate::rng::{mix, mix2, mix3, rng_from};
use crate::scoring::{evaluate, norm_stats, ScoreKind};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;

// Seed-stream tags: every independent random decision gets its own
// derived stream so adding one never perturbs another.
const TAG_INIT: u64 = 0x11;
const TAG_SHUFFLE: u64 = 0x22;
const TAG_OE_SUBSET: u64 = 0x33;
const TAG_EVAL: u64 = 0x44;
const TAG_NORMSTATS: u64 = 0x45;
const TAG_VAL_ID: u64 = 0x5a;

/// Cap on per-mode validation samples; validation sets are fresh draws
/// from the same generators under a derived seed, kept small so the
/// per-epoch evaluation stays cheap.
const VAL_SAMPLES_PER_MODE: usize = 128;

/// Outlier-exposure setting for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OeSetting {
    None,
    Near,
    Far,
    Shift,
}

impl std::str::FromStr for OeSetting {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(OeSetting::None),
            "near" => Ok(OeSetting::Near),
            "far" => Ok(OeSetting::Far),
            "shift" => Ok(OeSetting::Shift),
            other => Err(format!("unknown oe_kind '{other}'")),
        }
    }
}

impl std::fmt::Display for OeSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OeSetting::None => "none",
            OeSetting::Near => "near",
            OeSetting::Far => "far",
            OeSetting::Shift => "shift",
        })
    }
}

/// Full description of one training run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    /// Normal (in-distribution) generator.
    pub data: SyntheticSpec,
    /// Anomaly generator for validation / evaluation; never trained on.
    pub anomaly: SyntheticSpec,
    /// In-distribution augmentations T.
    pub t: Vec<TransformSpec>,
    /// Augmentations applied to OE samples.
    pub t_oe: Vec<TransformSpec>,
    /// Distribution-shifting transforms (used when oe_kind = shift).
    pub s_oe: Vec<TransformSpec>,
    pub oe_kind: OeSetting,
    /// Few-shot: restrict the OE pool to k deterministically chosen samples.
    pub oe_subset_k: Option<usize>,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub eval_every: usize,
    pub n_aug_score: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Desk-scale defaults: a unimodal anisotropic Gaussian normal class
    /// (a "pancake" with two high-variance axes carrying the structure
    /// the encoder learns to amplify), an anomaly mode partly on and
    /// partly off that manifold, near OE, and the standard schedule.
    /// Augmentation noise deliberately exceeds the thin-axis data noise
    /// so alignment suppresses the unstable directions.
    pub fn desk_default(seed: u64) -> ExperimentConfig {
        let dim = 4;
        ExperimentConfig {
            encoder: EncoderConfig {
                input_dim: dim,
                hidden_widths: vec![32],
                feature_dim: 8,
                normalize_output: true,
            },
            loss: LossConfig::default(),
            data: SyntheticSpec {
                input_dim: dim,
                modes: vec![ModeSpec {
                    mean: vec![0.0; dim],
                    std: vec![2.0, 2.0, 0.2, 0.2],
                    label: 0,
                }],
                samples_per_mode: 512,
                seed: mix(seed, 0xda7a),
            },
            anomaly: SyntheticSpec {
                input_dim: dim,
                modes: vec![ModeSpec {
                    mean: vec![2.0, 0.0, 2.5, 0.0],
                    std: vec![0.2; dim],
                    label: 1,
                }],
                samples_per_mode: 256,
                seed: mix(seed, 0xa07a),
            },
            t: vec![
                TransformSpec::GaussianNoise { sigma: 0.6 },
                TransformSpec::RandomScale { lo: 0.9, hi: 1.1 },
            ],
            t_oe: vec![TransformSpec::GaussianNoise { sigma: 0.25 }],
            s_oe: vec![TransformSpec::PlanarRotation { angle_deg: 180.0 }],
            oe_kind: OeSetting::Near,
            oe_subset_k: None,
            epochs: 200,
            warmup_epochs: 20,
            batch_size: 128,
            lr0: 0.1,
            momentum: 0.9,
            eval_every: 10,
            n_aug_score: 32,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        self.data.validate()?;
        self.anomaly.validate()?;
        for t in self.t.iter().chain(&self.t_oe).chain(&self.s_oe) {
            t.validate()?;
        }
        if self.data.input_dim != self.encoder.input_dim
            || self.anomaly.input_dim != self.encoder.input_dim
        {
            return Err(Error::Config(format!(
                "input_dim mismatch: encoder={}, data={}, anomaly={}",
                self.encoder.input_dim, self.data.input_dim, self.anomaly.input_dim
            )));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config("warmup_epochs must not exceed epochs".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.lr0 <= 0.0 {
            return Err(Error::Config("lr0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.n_aug_score < 2 {
            return Err(Error::Config("n_aug_score must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Serialize to the flat `key = value` config format; `parse_config`
    /// round-trips this exactly.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let ints = |v: &[usize]| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        let floats = |v: &[f64]| {
            v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
        };
        kv("encoder.input_dim", self.encoder.input_dim.to_string());
        kv("encoder.hidden_widths", ints(&self.encoder.hidden_widths));
        kv("encoder.feature_dim", self.encoder.feature_dim.to_string());
        kv("encoder.normalize_output", self.encoder.normalize_output.to_string());
        kv("loss.tau", format!("{:.16e}", self.loss.tau));
        kv("loss.alpha", format!("{:.16e}", self.loss.alpha));
        kv("loss.uniform_weight", format!("{:.16e}", self.loss.uniform_weight));
        kv("loss.form", format_loss_form(self.loss.form).to_string());
        for (prefix, spec) in [("data", &self.data), ("anomaly", &self.anomaly)] {
            kv(&format!("{prefix}.input_dim"), spec.input_dim.to_string());
            kv(&format!("{prefix}.samples_per_mode"), spec.samples_per_mode.to_string());
            kv(&format!("{prefix}.seed"), spec.seed.to_string());
            for (i, m) in spec.modes.iter().enumerate() {
                kv(&format!("{prefix}.mode.{i}.mean"), floats(&m.mean));
                kv(&format!("{prefix}.mode.{i}.std"), floats(&m.std));
                kv(&format!("{prefix}.mode.{i}.label"), m.label.to_string());
            }
        }
        for (prefix, list) in [("t", &self.t), ("t_oe", &self.t_oe), ("s_oe", &self.s_oe)] {
            for (i, tr) in list.iter().enumerate() {
                kv(&format!("{prefix}.{i}"), format_transform(tr));
            }
        }
        kv("oe_kind", self.oe_kind.to_string());
        kv(
            "oe_subset_k",
            self.oe_subset_k.map_or("none".to_string(), |k| k.to_string()),
        );
        kv("epochs", self.epochs.to_string());
        kv("warmup_epochs", self.warmup_epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr0", format!("{:.16e}", self.lr0));
        kv("momentum", format!("{:.16e}", self.momentum));
        kv("eval_every", self.eval_every.to_string());
        kv("n_aug_score", self.n_aug_score.to_string());
        kv("seed", self.seed.to_string());
        out
    }
}

fn format_loss_form(form: LossForm) -> &'static str {
    match form {
        LossForm::CosineSoftmax => "cosine-softmax",
        LossForm::WangIsolaEuclidean => "wang-isola",
    }
}

fn parse_loss_form(s: &str) -> Result<LossForm> {
    match s {
        "cosine-softmax" => Ok(LossForm::CosineSoftmax),
        "wang-isola" => Ok(LossForm::WangIsolaEuclidean),
        other => Err(Error::Config(format!("unknown loss form '{other}'"))),
    }
}

/// Transform notation: `name:arg[:arg]`, e.g. `gaussian-noise:0.3`,
/// `random-scale:0.9:1.1`, `planar-rotation:180`, `reflection:0`.
pub fn format_transform(t: &TransformSpec) -> String {
    match t {
        TransformSpec::GaussianNoise { sigma } => format!("gaussian-noise:{sigma}"),
        TransformSpec::RandomScale { lo, hi } => format!("random-scale:{lo}:{hi}"),
        TransformSpec::CoordinateMask { prob } => format!("coordinate-mask:{prob}"),
        TransformSpec::PlanarRotation { angle_deg } => format!("planar-rotation:{angle_deg}"),
        TransformSpec::Reflection { axis } => format!("reflection:{axis}"),
    }
}

pub fn parse_transform(s: &str) -> Result<TransformSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let arg = |i: usize| -> Result<f64> {
        parts
            .get(i)
            .ok_or_else(|| Error::Config(format!("transform '{s}' is missing argument {i}")))?
            .parse()
            .map_err(|_| Error::Config(format!("bad numeric argument in transform '{s}'")))
    };
    let t = match parts[0] {
        "gaussian-noise" => TransformSpec::GaussianNoise { sigma: arg(1)? },
        "random-scale" => TransformSpec::RandomScale { lo: arg(1)?, hi: arg(2)? },
        "coordinate-mask" => TransformSpec::CoordinateMask { prob: arg(1)? },
        "planar-rotation" => TransformSpec::PlanarRotation { angle_deg: arg(1)? },
        "reflection" => TransformSpec::Reflection { axis: arg(1)? as usize },
        other => return Err(Error::Config(format!("unknown transform '{other}'"))),
    };
    t.validate()?;
    Ok(t)
}

/// Parse a flat `key = value` config. Every key must name a known field
/// (dotted nesting, e.g. `loss.tau`); unknown keys are a hard error.
/// Keys left unset keep the desk-scale defaults. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::desk_default(0);
    // collected per-index keys: modes and transform lists replace the
    // defaults wholesale when present
    let mut data_modes: Vec<(usize, String, String)> = Vec::new();
    let mut anomaly_modes: Vec<(usize, String, String)> = Vec::new();
    let mut t_list: Vec<(usize, String)> = Vec::new();
    let mut t_oe_list: Vec<(usize, String)> = Vec::new();
    let mut s_oe_list: Vec<(usize, String)> = Vec::new();

    let parse_usize = |k: &str, v: &str| -> Result<usize> {
        v.parse().map_err(|_| Error::Config(format!("{k}: expected an integer, got '{v}'")))
    };
    let parse_u64 = |k: &str, v: &str| -> Result<u64> {
        v.parse().map_err(|_| Error::Config(format!("{k}: expected an integer, got '{v}'")))
    };
    let parse_f64 = |k: &str, v: &str| -> Result<f64> {
        v.parse().map_err(|_| Error::Config(format!("{k}: expected a number, got '{v}'")))
    };
    let parse_bool = |k: &str, v: &str| -> Result<bool> {
        v.parse().map_err(|_| Error::Config(format!("{k}: expected true/false, got '{v}'")))
    };
    let parse_usize_list = |k: &str, v: &str| -> Result<Vec<usize>> {
        if v.is_empty() {
            return Ok(vec![]);
        }
        v.split(',').map(|p| parse_usize(k, p.trim())).collect()
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        // list-valued keys are collected first and resolved below
        if let Some(rest) = key.strip_prefix("data.mode.") {
            let (idx, field) = split_mode_key(key, rest)?;
            data_modes.push((idx, field, value.to_string()));
            continue;
        }
        if let Some(rest) = key.strip_prefix("anomaly.mode.") {
            let (idx, field) = split_mode_key(key, rest)?;
            anomaly_modes.push((idx, field, value.to_string()));
            continue;
        }
        if let Some(rest) = key.strip_prefix("t_oe.") {
            t_oe_list.push((parse_usize(key, rest)?, value.to_string()));
            continue;
        }
        if let Some(rest) = key.strip_prefix("s_oe.") {
            s_oe_list.push((parse_usize(key, rest)?, value.to_string()));
            continue;
        }
        if let Some(rest) = key.strip_prefix("t.") {
            t_list.push((parse_usize(key, rest)?, value.to_string()));
            continue;
        }
        match key {
            "encoder.input_dim" => cfg.encoder.input_dim = parse_usize(key, value)?,
            "encoder.hidden_widths" => cfg.encoder.hidden_widths = parse_usize_list(key, value)?,
            "encoder.feature_dim" => cfg.encoder.feature_dim = parse_usize(key, value)?,
            "encoder.normalize_output" => cfg.encoder.normalize_output = parse_bool(key, value)?,
            "loss.tau" => cfg.loss.tau = parse_f64(key, value)?,
            "loss.alpha" => cfg.loss.alpha = parse_f64(key, value)?,
            "loss.uniform_weight" => cfg.loss.uniform_weight = parse_f64(key, value)?,
            "loss.form" => cfg.loss.form = parse_loss_form(value)?,
            "data.input_dim" => cfg.data.input_dim = parse_usize(key, value)?,
            "data.samples_per_mode" => cfg.data.samples_per_mode = parse_usize(key, value)?,
            "data.seed" => cfg.data.seed = parse_u64(key, value)?,
            "anomaly.input_dim" => cfg.anomaly.input_dim = parse_usize(key, value)?,
            "anomaly.samples_per_mode" => {
                cfg.anomaly.samples_per_mode = parse_usize(key, value)?
            }
            "anomaly.seed" => cfg.anomaly.seed = parse_u64(key, value)?,
            "oe_kind" => {
                cfg.oe_kind = value.parse().map_err(Error::Config)?;
            }
            "oe_subset_k" => {
                cfg.oe_subset_k = if value == "none" {
                    None
                } else {
                    Some(parse_usize(key, value)?)
                };
            }
            "epochs" => cfg.epochs = parse_usize(key, value)?,
            "warmup_epochs" => cfg.warmup_epochs = parse_usize(key, value)?,
            "batch_size" => cfg.batch_size = parse_usize(key, value)?,
            "lr0" => cfg.lr0 = parse_f64(key, value)?,
            "momentum" => cfg.momentum = parse_f64(key, value)?,
            "eval_every" => cfg.eval_every = parse_usize(key, value)?,
            "n_aug_score" => cfg.n_aug_score = parse_usize(key, value)?,
            "seed" => cfg.seed = parse_u64(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown configuration key '{other}'")));
            }
        }
    }
    if !data_modes.is_empty() {
        cfg.data.modes = assemble_modes("data", data_modes)?;
    }
    if !anomaly_modes.is_empty() {
        cfg.anomaly.modes = assemble_modes("anomaly", anomaly_modes)?;
    }
    for (list, entries) in [
        (&mut cfg.t, t_list),
        (&mut cfg.t_oe, t_oe_list),
        (&mut cfg.s_oe, s_oe_list),
    ] {
        if !entries.is_empty() {
            *list = assemble_transforms(entries)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn split_mode_key(full: &str, rest: &str) -> Result<(usize, String)> {
    let (idx, field) = rest
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("malformed mode key '{full}'")))?;
    let idx = idx
        .parse()
        .map_err(|_| Error::Config(format!("bad mode index in '{full}'")))?;
    if !matches!(field, "mean" | "std" | "label") {
        return Err(Error::Config(format!("unknown mode field in '{full}'")));
    }
    Ok((idx, field.to_string()))
}

fn assemble_modes(prefix: &str, entries: Vec<(usize, String, String)>) -> Result<Vec<ModeSpec>> {
    let n = entries.iter().map(|(i, _, _)| i + 1).max().unwrap_or(0);
    let mut modes = vec![
        ModeSpec { mean: vec![], std: vec![], label: 0 };
        n
    ];
    let mut seen_label = vec![false; n];
    for (i, field, value) in entries {
        let floats = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        Error::Config(format!("{prefix}.mode.{i}.{field}: bad number '{p}'"))
                    })
                })
                .collect()
        };
        match field.as_str() {
            "mean" => modes[i].mean = floats()?,
            "std" => modes[i].std = floats()?,
            "label" => {
                modes[i].label = value.parse().map_err(|_| {
                    Error::Config(format!("{prefix}.mode.{i}.label: bad integer '{value}'"))
                })?;
                seen_label[i] = true;
            }
            _ => unreachable!(),
        }
    }
    for (i, m) in modes.iter().enumerate() {
        if m.mean.is_empty() || m.std.is_empty() {
            return Err(Error::Config(format!(
                "{prefix}.mode.{i} must define both mean and std"
            )));
        }
        let _ = seen_label[i]; // label defaults to 0 when omitted
    }
    Ok(modes)
}

fn assemble_transforms(mut entries: Vec<(usize, String)>) -> Result<Vec<TransformSpec>> {
    entries.sort_by_key(|(i, _)| *i);
    for (pos, (i, _)) in entries.iter().enumerate() {
        if *i != pos {
            return Err(Error::Config(format!(
                "transform indices must be contiguous from 0; found index {i} at position {pos}"
            )));
        }
    }
    entries.iter().map(|(_, v)| parse_transform(v)).collect()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Cosine decay without restart: lr0 · ½(1 + cos(π·epoch/epochs)).
pub fn lr_schedule(epoch: usize, config: &ExperimentConfig) -> f64 {
    config.lr0 * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / config.epochs as f64).cos())
}

/// One logged evaluation record.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_contrastive: f64,
    pub loss_align: f64,
    pub loss_uniform: f64,
    pub loss_penalty: f64,
    pub mean_norm_id: f64,
    pub mean_norm_ood: f64,
    pub mean_mu_over_sigma_v_id: f64,
    pub mean_mu_over_sigma_v_ood: f64,
    pub mean_sigma_v_id: f64,
    pub mean_sigma_v_ood: f64,
    pub auroc_s_mu: f64,
    pub auroc_s_l2: f64,
    pub auroc_s_l2_ens: f64,
}

pub const METRICS_HEADER: &str = "epoch,lr,loss_total,loss_contrastive,loss_align,loss_uniform,loss_penalty,mean_norm_id,mean_norm_ood,mean_mu_over_sigma_v_id,mean_mu_over_sigma_v_ood,mean_sigma_v_id,mean_sigma_v_ood,auroc_s_mu,auroc_s_l2,auroc_s_l2_ens";

/// Write the metrics CSV: header row, then one row per record with
/// 17-significant-digit floats.
pub fn emit_metrics(log: &[MetricsRecord], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{METRICS_HEADER}")?;
    for r in log {
        writeln!(
            f,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.epoch,
            r.lr,
            r.loss_total,
            r.loss_contrastive,
            r.loss_align,
            r.loss_uniform,
            r.loss_penalty,
            r.mean_norm_id,
            r.mean_norm_ood,
            r.mean_mu_over_sigma_v_id,
            r.mean_mu_over_sigma_v_ood,
            r.mean_sigma_v_id,
            r.mean_sigma_v_ood,
            r.auroc_s_mu,
            r.auroc_s_l2,
            r.auroc_s_l2_ens,
        )?;
    }
    Ok(())
}

/// Parse a metrics CSV back; inverse of `emit_metrics`.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse { line: 1, msg: "missing metrics header".into() });
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 16 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 16 columns, got {}", cells.len()),
            });
        }
        let f = |j: usize| -> Result<f64> {
            cells[j].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad float '{}'", cells[j]),
            })
        };
        out.push(MetricsRecord {
            epoch: cells[0].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad epoch '{}'", cells[0]),
            })?,
            lr: f(1)?,
            loss_total: f(2)?,
            loss_contrastive: f(3)?,
            loss_align: f(4)?,
            loss_uniform: f(5)?,
            loss_penalty: f(6)?,
            mean_norm_id: f(7)?,
            mean_norm_ood: f(8)?,
            mean_mu_over_sigma_v_id: f(9)?,
            mean_mu_over_sigma_v_ood: f(10)?,
            mean_sigma_v_id: f(11)?,
            mean_sigma_v_ood: f(12)?,
            auroc_s_mu: f(13)?,
            auroc_s_l2: f(14)?,
            auroc_s_l2_ens: f(15)?,
        });
    }
    Ok(out)
}

/// Training objective: the OECL loss (contrastive + α·norm penalty) or a
/// weighted alignment/uniformity combination (the sweep driver).
#[derive(Clone, Copy, Debug)]
enum Objective {
    Oecl,
    WeightedAlignUniform { uniform_weight: f64, form: LossForm },
}

struct MomentumSgd {
    velocity: Vec<Vec<f64>>,
    momentum: f64,
}

impl MomentumSgd {
    fn new(params: &EncoderParams, momentum: f64) -> Self {
        let velocity = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        MomentumSgd { velocity, momentum }
    }

    /// v ← m·v + g; p ← p − lr·v. Parameters are immutable tensors, so
    /// the step builds a fresh parameter set.
    fn step(&mut self, params: &EncoderParams, lr: f64) -> Result<EncoderParams> {
        let tensors = params.tensors();
        let mut new_data = Vec::with_capacity(tensors.len());
        for (t, v) in tensors.iter().zip(self.velocity.iter_mut()) {
            let grad = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
            let mut data = t.data().to_vec();
            for i in 0..data.len() {
                v[i] = self.momentum * v[i] + grad[i];
                data[i] -= lr * v[i];
            }
            new_data.push(data);
        }
        params.with_data(new_data)
    }
}

fn flatten_rows(rows: &[Vec<f64>], dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        data.extend_from_slice(r);
    }
    Tensor::from_vec(data, &[rows.len(), dim])
}

/// Train with the OECL objective; returns final parameters and the log.
pub fn train(config: &ExperimentConfig) -> Result<(EncoderParams, Vec<MetricsRecord>)> {
    train_inner(config, Objective::Oecl)
}

/// Train with the weighted alignment/uniformity objective (α-sweep).
pub fn train_weighted(
    config: &ExperimentConfig,
    uniform_weight: f64,
    form: LossForm,
) -> Result<(EncoderParams, Vec<MetricsRecord>)> {
    train_inner(config, Objective::WeightedAlignUniform { uniform_weight, form })
}

fn validation_spec(spec: &SyntheticSpec, reseed: Option<u64>) -> SyntheticSpec {
    SyntheticSpec {
        samples_per_mode: spec.samples_per_mode.min(VAL_SAMPLES_PER_MODE),
        seed: reseed.unwrap_or(spec.seed),
        ..spec.clone()
    }
}

fn train_inner(
    config: &ExperimentConfig,
    objective: Objective,
) -> Result<(EncoderParams, Vec<MetricsRecord>)> {
    config.validate()?;
    let seed = config.seed;
    let dim = config.data.input_dim;

    let train_set = sample_dataset(&config.data, Origin::Normal)?;
    let val_id = sample_dataset(
        &validation_spec(&config.data, Some(mix(config.data.seed, TAG_VAL_ID))),
        Origin::Normal,
    )?;
    let val_ood = sample_dataset(&validation_spec(&config.anomaly, None), Origin::Anomaly)?;

    let oe_pool = match config.oe_kind {
        OeSetting::None => Vec::new(),
        OeSetting::Near => make_oe_pool(OeKind::Near, &train_set, &config.data, &[])?,
        OeSetting::Far => make_oe_pool(OeKind::Far, &train_set, &config.data, &[])?,
        OeSetting::Shift => make_oe_pool(OeKind::Shift, &train_set, &config.data, &config.s_oe)?,
    };
    let oe_pool = match config.oe_subset_k {
        Some(k) if config.oe_kind != OeSetting::None => {
            select_subset(&oe_pool, k, mix(seed, TAG_OE_SUBSET))?
        }
        _ => oe_pool,
    };

    let mut params = init_params(&config.encoder, mix(seed, TAG_INIT))?;
    let mut opt = MomentumSgd::new(&params, config.momentum);
    let mut log = Vec::new();
    let mut global_step = 0usize;

    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config);
        let alpha = if epoch < config.warmup_epochs || oe_pool.is_empty() {
            0.0
        } else {
            config.loss.alpha
        };

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng_from(mix2(seed, TAG_SHUFFLE, epoch as u64)));

        let mut sums = [0.0f64; 5]; // total, contrastive, align, uniform, penalty
        let mut n_batches = 0usize;

        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue; // a trailing 1-sample batch has no negatives
            }
            let step_seed = mix3(seed, 1, epoch as u64, b as u64);
            let view = |view_id: u64| -> Vec<Vec<f64>> {
                chunk
                    .iter()
                    .enumerate()
                    .map(|(i, &idx)| {
                        augment(&train_set[idx].vector, &config.t, mix2(step_seed, view_id, i as u64))
                    })
                    .collect()
            };
            let z_a = project(&embed(&params, &flatten_rows(&view(0), dim)?)?)?;
            let z_b = project(&embed(&params, &flatten_rows(&view(1), dim)?)?)?;

            let contrastive = contrastive_loss(&z_a, &z_b, config.loss.tau)?;
            let align_v = alignment_loss(&z_a, &z_b, config.loss.tau)?.item()?;
            let uniform_v = uniformity_loss(&z_a, &z_b, config.loss.tau)?.item()?;

            // OE batch: cyclic deterministic walk over the pool
            let penalty_v;
            let total = match objective {
                Objective::Oecl => {
                    let (penalty, pv) = if oe_pool.is_empty() {
                        (None, 0.0)
                    } else {
                        let rows: Vec<Vec<f64>> = (0..chunk.len())
                            .map(|i| {
                                let idx = (global_step * config.batch_size + i) % oe_pool.len();
                                augment(
                                    &oe_pool[idx].vector,
                                    &config.t_oe,
                                    mix2(step_seed, 2, i as u64),
                                )
                            })
                            .collect();
                        let f_oe = embed(&params, &flatten_rows(&rows, dim)?)?;
                        let p = oe_norm_penalty(&f_oe)?;
                        let pv = p.item()?;
                        (Some(p), pv)
                    };
                    penalty_v = pv;
                    match (&penalty, alpha) {
                        // α = 0 (warm-up / no OE): the penalty is logged
                        // but must contribute nothing, so the total IS
                        // the contrastive tensor
                        (_, a) if a == 0.0 => contrastive.clone(),
                        (Some(p), a) => contrastive.add(&p.scale(a))?,
                        (None, _) => contrastive.clone(),
                    }
                }
                Objective::WeightedAlignUniform { uniform_weight, form } => {
                    penalty_v = 0.0;
                    weighted_align_uniform(&z_a, &z_b, &z_a, uniform_weight, form)?
                }
            };

            let total_v = total.item()?;
            if !total_v.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch}, batch {b}: training diverged"
                )));
            }
            total.backward()?;
            params = opt.step(&params, lr)?;
            global_step += 1;

            sums[0] += total_v;
            sums[1] += contrastive.item()?;
            sums[2] += align_v;
            sums[3] += uniform_v;
            sums[4] += penalty_v;
            n_batches += 1;
        }
        if n_batches == 0 {
            return Err(Error::Contract("no usable batches: dataset too small".into()));
        }

        if (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs {
            if log.last().map(|r: &MetricsRecord| r.epoch) == Some(epoch) {
                continue;
            }
            let nb = n_batches as f64;
            log.push(evaluate_epoch(
                config,
                &params,
                &val_id,
                &val_ood,
                epoch,
                lr,
                [sums[0] / nb, sums[1] / nb, sums[2] / nb, sums[3] / nb, sums[4] / nb],
            )?);
        }
    }
    Ok((params, log))
}

#[allow(clippy::too_many_arguments)]
fn evaluate_epoch(
    config: &ExperimentConfig,
    params: &EncoderParams,
    val_id: &[LabeledSample],
    val_ood: &[LabeledSample],
    epoch: usize,
    lr: f64,
    losses: [f64; 5],
) -> Result<MetricsRecord> {
    let seed = config.seed;
    let dim = config.data.input_dim;
    let mean_norm = |set: &[LabeledSample]| -> Result<f64> {
        let rows: Vec<Vec<f64>> = set.iter().map(|s| s.vector.clone()).collect();
        let f = embed(params, &flatten_rows(&rows, dim)?)?;
        let m = f.shape()[1];
        let total: f64 = (0..set.len())
            .map(|i| {
                f.data()[i * m..(i + 1) * m]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        Ok(total / set.len() as f64)
    };
    // sigma_v can be numerically zero early in training; the ratio is
    // floored to stay finite
    let stats = |set: &[LabeledSample], tag: u64| -> Result<(f64, f64)> {
        let mut ratio = 0.0;
        let mut sv = 0.0;
        for (i, s) in set.iter().enumerate() {
            let st = norm_stats(
                params,
                &s.vector,
                &config.t,
                config.n_aug_score,
                mix2(mix(seed, TAG_NORMSTATS), tag, i as u64),
            )?;
            ratio += st.mu / st.sigma_v.max(1e-12);
            sv += st.sigma_v;
        }
        let n = set.len() as f64;
        Ok((ratio / n, sv / n))
    };
    let (ratio_id, sv_id) = stats(val_id, 0)?;
    let (ratio_ood, sv_ood) = stats(val_ood, 1)?;
    let eval_seed = mix(seed, TAG_EVAL);
    let (auroc_s_mu, _) =
        evaluate(params, val_id, val_ood, ScoreKind::Mu, &config.t, config.n_aug_score, eval_seed)?;
    let (auroc_s_l2, _) =
        evaluate(params, val_id, val_ood, ScoreKind::L2, &config.t, config.n_aug_score, eval_seed)?;
    let (auroc_s_l2_ens, _) = evaluate(
        params,
        val_id,
        val_ood,
        ScoreKind::L2Ensemble,
        &config.t,
        config.n_aug_score,
        eval_seed,
    )?;
    Ok(MetricsRecord {
        epoch,
        lr,
        loss_total: losses[0],
        loss_contrastive: losses[1],
        loss_align: losses[2],
        loss_uniform: losses[3],
        loss_penalty: losses[4],
        mean_norm_id: mean_norm(val_id)?,
        mean_norm_ood: mean_norm(val_ood)?,
        mean_mu_over_sigma_v_id: ratio_id,
        mean_mu_over_sigma_v_ood: ratio_ood,
        mean_sigma_v_id: sv_id,
        mean_sigma_v_ood: sv_ood,
        auroc_s_mu,
        auroc_s_l2,
        auroc_s_l2_ens,
    })
}

/// One row of the α-sweep result table.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub weight: f64,
    /// exp of the Wang–Isola uniformity of the final in-distribution
    /// embedding; 1 means total collapse to a point.
    pub exp_uniform: f64,
    /// AUROC of the squared-norm score at the end of training.
    pub auroc: f64,
    pub log: Vec<MetricsRecord>,
}

/// Train a weighted alignment/uniformity objective at each weight
/// (0 = pure alignment, 1 = pure uniformity) and record the degree of
/// collapse plus detection accuracy.
pub fn run_alpha_sweep(config: &ExperimentConfig, weights: &[f64]) -> Result<Vec<SweepRow>> {
    if weights.is_empty() {
        return Err(Error::Contract("alpha sweep needs at least one weight".into()));
    }
    let mut rows = Vec::with_capacity(weights.len());
    for &w in weights {
        let (params, log) = train_weighted(config, w, LossForm::WangIsolaEuclidean)?;
        let val_id = sample_dataset(
            &validation_spec(&config.data, Some(mix(config.data.seed, TAG_VAL_ID))),
            Origin::Normal,
        )?;
        let val_ood = sample_dataset(&validation_spec(&config.anomaly, None), Origin::Anomaly)?;
        let rows_id: Vec<Vec<f64>> = val_id.iter().map(|s| s.vector.clone()).collect();
        let z = project(&embed(&params, &flatten_rows(&rows_id, config.data.input_dim)?)?)?;
        let exp_uniform = wang_isola_uniform(&z)?.item()?.exp();
        let (auroc, _) = evaluate(
            &params,
            &val_id,
            &val_ood,
            ScoreKind::L2,
            &config.t,
            config.n_aug_score,
            mix(config.seed, TAG_EVAL),
        )?;
        rows.push(SweepRow { weight: w, exp_uniform, auroc, log });
    }
    Ok(rows)
}

/// One row of the diminishing-effect table.
#[derive(Clone, Debug)]
pub struct DiminishRow {
    pub fraction: f64,
    pub oe_kind: OeSetting,
    pub auroc: f64,
    pub auroc_baseline: f64,
    /// auroc − auroc_baseline at the same training fraction.
    pub gain: f64,
}

/// Train at several training-set fractions, with and without OE, and
/// tabulate the OE gain in squared-norm-score AUROC. Fractions shrink
/// `samples_per_mode`; the per-mode sampler draws sequentially, so a
/// smaller fraction is a deterministic prefix subset of the full set.
pub fn run_diminishing(
    config: &ExperimentConfig,
    fractions: &[f64],
    kinds: &[OeSetting],
) -> Result<Vec<DiminishRow>> {
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) || fractions.is_empty() {
        return Err(Error::Contract("fractions must be in (0, 1]".into()));
    }
    if kinds.iter().any(|k| matches!(k, OeSetting::None)) {
        return Err(Error::Contract("diminishing-effect kinds must use OE".into()));
    }
    let mut rows = Vec::new();
    for &fraction in fractions {
        let spm = ((config.data.samples_per_mode as f64 * fraction).ceil() as usize).max(2);
        let mut frac_cfg = config.clone();
        frac_cfg.data.samples_per_mode = spm;
        let mut base_cfg = frac_cfg.clone();
        base_cfg.oe_kind = OeSetting::None;
        let (_, base_log) = train(&base_cfg)?;
        let auroc_baseline = final_record(&base_log)?.auroc_s_l2;
        for &kind in kinds {
            let mut oe_cfg = frac_cfg.clone();
            oe_cfg.oe_kind = kind;
            let (_, log) = train(&oe_cfg)?;
            let auroc = final_record(&log)?.auroc_s_l2;
            rows.push(DiminishRow {
                fraction,
                oe_kind: kind,
                auroc,
                auroc_baseline,
                gain: auroc - auroc_baseline,
            });
        }
    }
    Ok(rows)
}

/// One row of the few-shot table.
#[derive(Clone, Debug)]
pub struct FewshotRow {
    pub k: usize,
    pub auroc: f64,
}

/// Train with only k OE samples available (k = 0 disables OE entirely)
/// and record the augmentation-mean-score AUROC against the anomaly set.
pub fn run_fewshot(config: &ExperimentConfig, k_values: &[usize]) -> Result<Vec<FewshotRow>> {
    if k_values.is_empty() {
        return Err(Error::Contract("few-shot needs at least one k".into()));
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let mut cfg = config.clone();
        if k == 0 {
            cfg.oe_kind = OeSetting::None;
            cfg.oe_subset_k = None;
        } else {
            cfg.oe_subset_k = Some(k);
        }
        let (_, log) = train(&cfg)?;
        rows.push(FewshotRow { k, auroc: final_record(&log)?.auroc_s_mu });
    }
    Ok(rows)
}

fn final_record(log: &[MetricsRecord]) -> Result<&MetricsRecord> {
    log.last().ok_or_else(|| Error::Contract("empty metrics log".into()))
}
