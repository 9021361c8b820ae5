//! Anomaly scores, per-sample norm statistics, and exact AUROC.
//!
//! Scores follow the convention that in-distribution samples score higher.
//! All ensemble quantities are computed over a shared, seed-derived set of
//! augmentation draws, so the identities between `s_mu`, `s_l2_ens`, and
//! the (mu, sigma, sigma_v) decomposition hold exactly on the same draws.

use crate::data::{LabeledSample, Origin, TransformSpec};
use crate::encoder::{embed, EncoderParams};
use crate::error::{Error, Result};
use crate::rng::mix;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreKind {
    /// Squared feature norm of the raw sample.
    L2,
    /// Squared norm of the mean augmentation feature.
    Mu,
    /// Mean squared feature norm over augmentations.
    L2Ensemble,
}

impl std::str::FromStr for ScoreKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "s_l2" => Ok(ScoreKind::L2),
            "s_mu" => Ok(ScoreKind::Mu),
            "s_l2_ens" => Ok(ScoreKind::L2Ensemble),
            other => Err(format!("unknown score kind '{other}'")),
        }
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreKind::L2 => "s_l2",
            ScoreKind::Mu => "s_mu",
            ScoreKind::L2Ensemble => "s_l2_ens",
        })
    }
}

/// Norm statistics of the augmentation feature cloud of one sample:
/// `mu` is the norm of the mean feature, `sigma` the deviation std along
/// the mean direction, `sigma_v` the root total perpendicular variance.
/// Population normalization, so `mu^2 + sigma^2 + sigma_v^2` equals the
/// mean squared feature norm exactly.
#[derive(Clone, Copy, Debug)]
pub struct NormStats {
    pub mu: f64,
    pub sigma: f64,
    pub sigma_v: f64,
    pub n_aug: usize,
}

/// Default augmentation count for ensemble scores.
pub const DEFAULT_N_AUG: usize = 32;

/// Features of `n_aug` augmented views of `x`, one row per view, with
/// view `i` drawn from the stream `(seed, i)`.
pub fn aug_features(
    params: &EncoderParams,
    x: &[f64],
    aug: &[TransformSpec],
    n_aug: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let dim = x.len();
    let mut rows = Vec::with_capacity(n_aug * dim);
    for i in 0..n_aug {
        rows.extend(crate::data::augment(x, aug, mix(seed, i as u64)));
    }
    let batch = Tensor::from_vec(rows, &[n_aug, dim])?;
    let f = embed(params, &batch)?;
    let m = f.shape()[1];
    Ok((0..n_aug).map(|i| f.data()[i * m..(i + 1) * m].to_vec()).collect())
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Evaluate one anomaly score. `L2` ignores `n_aug`; the ensemble kinds
/// draw their augmentations deterministically from `seed`.
pub fn score(
    params: &EncoderParams,
    x: &[f64],
    kind: ScoreKind,
    aug: &[TransformSpec],
    n_aug: usize,
    seed: u64,
) -> Result<f64> {
    match kind {
        ScoreKind::L2 => {
            let f = embed(params, &Tensor::from_vec(x.to_vec(), &[1, x.len()])?)?;
            Ok(sq_norm(f.data()))
        }
        ScoreKind::Mu | ScoreKind::L2Ensemble => {
            if n_aug < 1 {
                return Err(Error::Contract("ensemble scores need n_aug >= 1".into()));
            }
            let feats = aug_features(params, x, aug, n_aug, seed)?;
            let m = feats[0].len();
            match kind {
                ScoreKind::Mu => {
                    let mut mean = vec![0.0; m];
                    for f in &feats {
                        for (a, b) in mean.iter_mut().zip(f) {
                            *a += b;
                        }
                    }
                    mean.iter_mut().for_each(|a| *a /= n_aug as f64);
                    Ok(sq_norm(&mean))
                }
                ScoreKind::L2Ensemble => {
                    Ok(feats.iter().map(|f| sq_norm(f)).sum::<f64>() / n_aug as f64)
                }
                ScoreKind::L2 => unreachable!(),
            }
        }
    }
}

/// Decompose the augmentation feature cloud of `x` into (mu, sigma, sigma_v).
pub fn norm_stats(
    params: &EncoderParams,
    x: &[f64],
    aug: &[TransformSpec],
    n_aug: usize,
    seed: u64,
) -> Result<NormStats> {
    if n_aug < 2 {
        return Err(Error::Contract("norm_stats needs n_aug >= 2".into()));
    }
    let feats = aug_features(params, x, aug, n_aug, seed)?;
    let m = feats[0].len();
    let nf = n_aug as f64;
    let mut mean = vec![0.0; m];
    for f in &feats {
        for (a, b) in mean.iter_mut().zip(f) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|a| *a /= nf);
    let mu = sq_norm(&mean).sqrt();

    let total_var = feats
        .iter()
        .map(|f| {
            f.iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / nf;

    let sigma_sq = if mu == 0.0 {
        0.0
    } else {
        let u: Vec<f64> = mean.iter().map(|a| a / mu).collect();
        feats
            .iter()
            .map(|f| {
                let proj: f64 = f
                    .iter()
                    .zip(&mean)
                    .zip(&u)
                    .map(|((a, b), c)| (a - b) * c)
                    .sum();
                proj * proj
            })
            .sum::<f64>()
            / nf
    };
    let sigma_v_sq = (total_var - sigma_sq).max(0.0);
    Ok(NormStats {
        mu,
        sigma: sigma_sq.sqrt(),
        sigma_v: sigma_v_sq.sqrt(),
        n_aug,
    })
}

/// Exact AUROC: the probability that a random normal score exceeds a
/// random anomalous score, ties counted one half. Computed by sorting and
/// rank summation; equal to the O(n^2) pairwise count.
pub fn auroc(scores_normal: &[f64], scores_anomalous: &[f64]) -> Result<f64> {
    if scores_normal.is_empty() || scores_anomalous.is_empty() {
        return Err(Error::Contract("auroc needs non-empty score lists".into()));
    }
    let n1 = scores_normal.len();
    let n0 = scores_anomalous.len();
    let mut all: Vec<(f64, bool)> = scores_normal
        .iter()
        .map(|&s| (s, true))
        .chain(scores_anomalous.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores must not be NaN"));
    // average ranks within tie groups, 1-based
    let mut rank_sum_normal = 0.0;
    let mut i = 0usize;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        for item in &all[i..j] {
            if item.1 {
                rank_sum_normal += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_normal - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

#[derive(Clone, Debug)]
pub struct ScoreRow {
    pub sample_id: usize,
    pub origin: Origin,
    pub score: f64,
}

/// Score every test sample and summarize with AUROC. Sample `i` of either
/// set draws its augmentations from the stream `(seed, i)` keyed by its
/// position, so identical test sets produce identical score lists.
pub fn evaluate(
    params: &EncoderParams,
    normal_test: &[LabeledSample],
    anomaly_test: &[LabeledSample],
    kind: ScoreKind,
    aug: &[TransformSpec],
    n_aug: usize,
    seed: u64,
) -> Result<(f64, Vec<ScoreRow>)> {
    if normal_test.is_empty() || anomaly_test.is_empty() {
        return Err(Error::Contract("evaluate needs non-empty test sets".into()));
    }
    let mut rows = Vec::with_capacity(normal_test.len() + anomaly_test.len());
    let mut normal_scores = Vec::with_capacity(normal_test.len());
    let mut anomaly_scores = Vec::with_capacity(anomaly_test.len());
    for (i, s) in normal_test.iter().enumerate() {
        let v = score(params, &s.vector, kind, aug, n_aug, mix(seed, i as u64))?;
        normal_scores.push(v);
        rows.push(ScoreRow { sample_id: rows.len(), origin: s.origin, score: v });
    }
    for (i, s) in anomaly_test.iter().enumerate() {
        let v = score(params, &s.vector, kind, aug, n_aug, mix(seed, i as u64))?;
        anomaly_scores.push(v);
        rows.push(ScoreRow { sample_id: rows.len(), origin: s.origin, score: v });
    }
    Ok((auroc(&normal_scores, &anomaly_scores)?, rows))
}

/// Score table CSV: header `sample_id,origin,score`, 17 significant digits.
pub fn write_score_table(path: &std::path::Path, rows: &[ScoreRow]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "sample_id,origin,score")?;
    for r in rows {
        writeln!(f, "{},{},{:.16e}", r.sample_id, r.origin, r.score)?;
    }
    Ok(())
}

/// O(n^2) pairwise AUROC used as the independent oracle in tests.
pub fn auroc_pairwise_oracle(normal: &[f64], anomalous: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in normal {
        for &b in anomalous {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (normal.len() * anomalous.len()) as f64
}
