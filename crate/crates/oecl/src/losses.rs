//! Training objectives.
//!
//! The contrastive term is NT-Xent over cosine similarities: for anchor
//! `z_b[i]` the positive is `z_a[i]` and the negatives are the other rows
//! of `z_a` (M = batch - 1). The temperature divides every similarity,
//! including the positive term inside the denominator, which makes the
//! decomposition `contrastive = alignment + uniformity` an exact algebraic
//! identity.
//!
//! The outlier-exposure penalty is the mean (unsquared) ℓ₂-norm of the
//! raw features of augmented OE samples; it drives OE features toward the
//! origin of the contrastive space.

use crate::data::TransformSpec;
use crate::encoder::{embed, project, EncoderParams};
use crate::error::{Error, Result};
use crate::rng::mix2;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossForm {
    CosineSoftmax,
    WangIsolaEuclidean,
}

#[derive(Clone, Debug)]
pub struct LossConfig {
    pub tau: f64,
    pub alpha: f64,
    /// Weight `a` of the uniformity term in `(1-a)*align + a*uniform`.
    pub uniform_weight: f64,
    pub form: LossForm,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::Config("loss.tau must be > 0".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config("loss.alpha must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.uniform_weight) {
            return Err(Error::Config("loss.uniform_weight must be in [0,1]".into()));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.5,
            alpha: 1.0,
            uniform_weight: 0.5,
            form: LossForm::CosineSoftmax,
        }
    }
}

fn check_pair(z_a: &Tensor, z_b: &Tensor) -> Result<(usize, usize)> {
    let (sa, sb) = (z_a.shape(), z_b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa != sb {
        return Err(Error::Dimension(format!(
            "positive pair batches must share a rank-2 shape, got {sa:?} and {sb:?}"
        )));
    }
    Ok((sa[0], sa[1]))
}

/// Positive-pair similarities <z_a[i], z_b[i]> as a length-n tensor.
fn pair_similarities(z_a: &Tensor, z_b: &Tensor) -> Result<Tensor> {
    z_a.mul(z_b)?.sum_axis(1)
}

/// Per-anchor log of the softmax denominator: log sum_j exp(<z_a[j], z_b[i]>/tau).
fn log_denominator(z_a: &Tensor, z_b: &Tensor, tau: f64) -> Result<Tensor> {
    let sims = z_b.matmul(&z_a.transpose()?)?; // sims[i][j] = <z_b[i], z_a[j]>
    sims.scale(1.0 / tau).exp()?.sum_axis(1)?.log()
}

/// NT-Xent loss, mean over anchors. Requires batch size >= 2 so that at
/// least one negative exists.
pub fn contrastive_loss(z_a: &Tensor, z_b: &Tensor, tau: f64) -> Result<Tensor> {
    let (n, _) = check_pair(z_a, z_b)?;
    if n < 2 {
        return Err(Error::Contract(
            "contrastive loss needs a batch of at least 2".into(),
        ));
    }
    let pos = pair_similarities(z_a, z_b)?.scale(1.0 / tau);
    let lse = log_denominator(z_a, z_b, tau)?;
    lse.sub(&pos)?.mean_all()
}

/// Alignment term: mean of -<z_a[i], z_b[i]> / tau.
pub fn alignment_loss(z_a: &Tensor, z_b: &Tensor, tau: f64) -> Result<Tensor> {
    check_pair(z_a, z_b)?;
    Ok(pair_similarities(z_a, z_b)?.mean_all()?.scale(-1.0 / tau))
}

/// Uniformity term: mean over anchors of the log softmax denominator.
pub fn uniformity_loss(z_a: &Tensor, z_b: &Tensor, tau: f64) -> Result<Tensor> {
    check_pair(z_a, z_b)?;
    log_denominator(z_a, z_b, tau)?.mean_all()
}

/// Euclidean alignment: mean squared gap over positive pairs.
pub fn wang_isola_align(z_a: &Tensor, z_b: &Tensor) -> Result<Tensor> {
    check_pair(z_a, z_b)?;
    let gap = z_a.sub(z_b)?;
    gap.mul(&gap)?.sum_axis(1)?.mean_all()
}

/// Euclidean uniformity: log mean of exp(-||z_i - z_j||^2) over all
/// distinct unordered pairs of the batch.
pub fn wang_isola_uniform(z_all: &Tensor) -> Result<Tensor> {
    let s = z_all.shape();
    if s.len() != 2 {
        return Err(Error::Dimension(format!(
            "wang_isola_uniform needs a rank-2 batch, got {s:?}"
        )));
    }
    let n = s[0];
    if n < 2 {
        return Err(Error::Contract(
            "uniformity needs at least 2 samples".into(),
        ));
    }
    // ||zi - zj||^2 = ni + nj - 2 <zi, zj>, computed from the Gram matrix
    let gram = z_all.matmul(&z_all.transpose()?)?;
    let sq = z_all.mul(z_all)?.sum_axis(1)?;
    let col = sq.reshape(&[n, 1])?;
    let row = sq.reshape(&[1, n])?;
    let d2 = col.add(&row)?.sub(&gram.scale(2.0))?;
    // keep only the strict upper triangle
    let mut mask = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            mask[i * n + j] = 1.0;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mask = Tensor::from_vec(mask, &[n, n])?;
    d2.scale(-1.0)
        .exp()?
        .mul(&mask)?
        .sum_all()?
        .scale(1.0 / pairs)
        .log()
}

/// Mean per-row ℓ₂-norm (not squared) of raw OE features.
pub fn oe_norm_penalty(f_oe: &Tensor) -> Result<Tensor> {
    f_oe.row_l2_norm()?.mean_all()
}

/// Full objective: contrastive + alpha * penalty.
pub fn oecl_loss(
    z_a: &Tensor,
    z_b: &Tensor,
    f_oe: &Tensor,
    config: &LossConfig,
) -> Result<Tensor> {
    config.validate()?;
    let contrastive = contrastive_loss(z_a, z_b, config.tau)?;
    if config.alpha == 0.0 {
        return Ok(contrastive);
    }
    let penalty = oe_norm_penalty(f_oe)?;
    contrastive.add(&penalty.scale(config.alpha))
}

/// Reject shift sets that contain (an equivalent of) the identity; the
/// identity is always in the closure of the in-distribution augmentations,
/// so it can never shift the distribution.
pub fn validate_shift_set(shifts: &[TransformSpec]) -> Result<()> {
    if shifts.is_empty() {
        return Err(Error::Contract("S_oe must be non-empty".into()));
    }
    for s in shifts {
        if !s.is_shift() {
            return Err(Error::Contract(format!(
                "{s:?} is not a distribution-shifting transform"
            )));
        }
        if let TransformSpec::PlanarRotation { angle_deg } = s {
            if angle_deg.rem_euclid(360.0) == 0.0 {
                return Err(Error::Contract(
                    "rotation by a multiple of 360 degrees is the identity".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Self-OECL: the OE batch is the training batch pushed through the shift
/// set, then augmented with T_oe. Deterministic in `seed`.
pub fn self_oecl_loss(
    params: &EncoderParams,
    batch: &[Vec<f64>],
    t_aug: &[TransformSpec],
    t_oe: &[TransformSpec],
    s_oe: &[TransformSpec],
    config: &LossConfig,
    seed: u64,
) -> Result<Tensor> {
    validate_shift_set(s_oe)?;
    if batch.len() < 2 {
        return Err(Error::Contract("self-OECL needs a batch of at least 2".into()));
    }
    let dim = batch[0].len();
    let flatten = |rows: &[Vec<f64>]| -> Result<Tensor> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            data.extend_from_slice(r);
        }
        Tensor::from_vec(data, &[rows.len(), dim])
    };
    let view = |view_id: u64| -> Vec<Vec<f64>> {
        batch
            .iter()
            .enumerate()
            .map(|(i, x)| crate::data::augment(x, t_aug, mix2(seed, view_id, i as u64)))
            .collect()
    };
    let z_a = project(&embed(params, &flatten(&view(0))?)?)?;
    let z_b = project(&embed(params, &flatten(&view(1))?)?)?;
    let oe_rows: Vec<Vec<f64>> = batch
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let shifted = crate::data::apply_shift(x, &s_oe[i % s_oe.len()])?;
            Ok(crate::data::augment(&shifted, t_oe, mix2(seed, 2, i as u64)))
        })
        .collect::<Result<_>>()?;
    let f_oe = embed(params, &flatten(&oe_rows)?)?;
    oecl_loss(&z_a, &z_b, &f_oe, config)
}

/// Weighted combination (1-a)*align + a*uniform in the selected form.
pub fn weighted_align_uniform(
    z_a: &Tensor,
    z_b: &Tensor,
    z_all: &Tensor,
    uniform_weight: f64,
    form: LossForm,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&uniform_weight) {
        return Err(Error::Contract("uniform_weight must be in [0,1]".into()));
    }
    let (align, uniform) = match form {
        LossForm::CosineSoftmax => (
            alignment_loss(z_a, z_b, 1.0)?,
            uniformity_loss(z_a, z_b, 1.0)?,
        ),
        LossForm::WangIsolaEuclidean => {
            (wang_isola_align(z_a, z_b)?, wang_isola_uniform(z_all)?)
        }
    };
    align
        .scale(1.0 - uniform_weight)
        .add(&uniform.scale(uniform_weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderConfig};
    use crate::rng::rng_from;
    use crate::tensor::grad_check;
    use rand::Rng;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    /// Random batch of unit-norm rows, deterministic in seed.
    fn unit_batch(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            data.extend(row.iter().map(|x| x / norm));
        }
        data
    }

    #[test]
    fn contrastive_hand_value_orthogonal_batch_of_two() {
        // z_a = z_b, two mutually orthogonal anchors, tau = 1:
        // per-anchor loss = -log(e / (e + 1))
        let z = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let loss = contrastive_loss(&z, &z, 1.0).unwrap().item().unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
        assert!((expected - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn contrastive_vanishes_in_perfect_limit() {
        // positive similarity 1, negatives -1, small tau
        let z_a = t(&[1.0, 0.0, -1.0, 0.0], &[2, 2]);
        let loss = contrastive_loss(&z_a, &z_a, 0.05).unwrap().item().unwrap();
        assert!(loss.abs() < 1e-10, "loss {loss}");
    }

    #[test]
    fn contrastive_is_non_negative() {
        for seed in 0..50 {
            let z_a = t(&unit_batch(4, 3, seed), &[4, 3]);
            let z_b = t(&unit_batch(4, 3, seed + 1000), &[4, 3]);
            let loss = contrastive_loss(&z_a, &z_b, 0.5).unwrap().item().unwrap();
            assert!(loss >= 0.0, "negative loss {loss}");
        }
    }

    #[test]
    fn contrastive_rejects_singleton_batch() {
        let z = t(&[1.0, 0.0], &[1, 2]);
        assert!(matches!(
            contrastive_loss(&z, &z, 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn alignment_hand_values() {
        let z = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        assert!((alignment_loss(&z, &z, 1.0).unwrap().item().unwrap() + 1.0).abs() < 1e-12);

        let orth = t(&[0.0, 1.0, 1.0, 0.0], &[2, 2]);
        assert!(alignment_loss(&z, &orth, 1.0).unwrap().item().unwrap().abs() < 1e-12);

        let anti = t(&[-1.0, 0.0, 0.0, -1.0], &[2, 2]);
        assert!((alignment_loss(&z, &anti, 0.5).unwrap().item().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniformity_log2_when_all_similarities_vanish() {
        // similarities z_b[i].z_a[j] all 0 in 4-d
        let z_a = t(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[2, 4]);
        let z_b = t(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], &[2, 4]);
        let u = uniformity_loss(&z_a, &z_b, 1.0).unwrap().item().unwrap();
        assert!((u - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniformity_grows_with_negative_spread() {
        // fixed positive similarity, negatives more aligned -> larger value
        let tight = t(&unit_batch(6, 4, 2), &[6, 4]);
        let u_self = uniformity_loss(&tight, &tight, 0.5).unwrap().item().unwrap();
        // evaluate against an independent direct-loop oracle
        let data = tight.data();
        let mut oracle = 0.0;
        for i in 0..6 {
            let mut denom = 0.0;
            for j in 0..6 {
                let s: f64 = (0..4).map(|k| data[i * 4 + k] * data[j * 4 + k]).sum();
                denom += (s / 0.5).exp();
            }
            oracle += denom.ln();
        }
        oracle /= 6.0;
        assert!((u_self - oracle).abs() < 1e-10);
    }

    #[test]
    fn decomposition_identity_holds() {
        for seed in 0..100 {
            let n = 2 + (seed as usize % 7);
            let d = 2 + (seed as usize % 5);
            let z_a = t(&unit_batch(n, d, seed), &[n, d]);
            let z_b = t(&unit_batch(n, d, seed + 500), &[n, d]);
            for tau in [0.1, 0.5, 1.0] {
                let c = contrastive_loss(&z_a, &z_b, tau).unwrap().item().unwrap();
                let a = alignment_loss(&z_a, &z_b, tau).unwrap().item().unwrap();
                let u = uniformity_loss(&z_a, &z_b, tau).unwrap().item().unwrap();
                assert!((c - (a + u)).abs() < 1e-10, "tau {tau}: {c} vs {}", a + u);
            }
        }
    }

    #[test]
    fn wang_isola_hand_values() {
        let z = t(&unit_batch(3, 2, 4), &[3, 2]);
        assert!(wang_isola_align(&z, &z).unwrap().item().unwrap().abs() < 1e-12);

        // all points identical -> exp(uniform) = 1
        let same = t(&[0.6, 0.8, 0.6, 0.8, 0.6, 0.8], &[3, 2]);
        let u = wang_isola_uniform(&same).unwrap().item().unwrap();
        assert!((u.exp() - 1.0).abs() < 1e-12);

        // two antipodal unit vectors: gap^2 = 4
        let anti = t(&[1.0, 0.0, -1.0, 0.0], &[2, 2]);
        let u = wang_isola_uniform(&anti).unwrap().item().unwrap();
        assert!((u + 4.0).abs() < 1e-12);
    }

    #[test]
    fn wang_isola_uniform_needs_two_rows() {
        let z = t(&[1.0, 0.0], &[1, 2]);
        assert!(matches!(
            wang_isola_uniform(&z),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn oe_penalty_hand_values() {
        assert_eq!(
            oe_norm_penalty(&t(&[0.0; 6], &[2, 3])).unwrap().item().unwrap(),
            0.0
        );
        let p = oe_norm_penalty(&t(&[3.0, 4.0, 0.0, 0.0], &[2, 2]))
            .unwrap()
            .item()
            .unwrap();
        assert_eq!(p, 2.5);
    }

    #[test]
    fn oecl_reduces_to_contrastive_when_penalty_inactive() {
        let z_a = t(&unit_batch(4, 3, 8), &[4, 3]);
        let z_b = t(&unit_batch(4, 3, 9), &[4, 3]);
        let f_oe = t(&[0.4, -0.2, 0.9, 1.0, 0.5, -0.3], &[2, 3]);
        let c = contrastive_loss(&z_a, &z_b, 0.5).unwrap().item().unwrap();

        let warmup = LossConfig { alpha: 0.0, ..LossConfig::default() };
        assert_eq!(oecl_loss(&z_a, &z_b, &f_oe, &warmup).unwrap().item().unwrap(), c);

        let zero_oe = t(&[0.0; 6], &[2, 3]);
        let full = LossConfig::default();
        assert_eq!(
            oecl_loss(&z_a, &z_b, &zero_oe, &full).unwrap().item().unwrap(),
            c
        );
    }

    #[test]
    fn oecl_is_component_sum() {
        let z_a = t(&unit_batch(4, 3, 8), &[4, 3]);
        let z_b = t(&unit_batch(4, 3, 9), &[4, 3]);
        let f_oe = t(&[0.4, -0.2, 0.9, 1.0, 0.5, -0.3], &[2, 3]);
        let cfg = LossConfig { alpha: 1.0, ..LossConfig::default() };
        let total = oecl_loss(&z_a, &z_b, &f_oe, &cfg).unwrap().item().unwrap();
        let c = contrastive_loss(&z_a, &z_b, 0.5).unwrap().item().unwrap();
        let p = oe_norm_penalty(&f_oe).unwrap().item().unwrap();
        assert!((total - (c + p)).abs() < 1e-12);
    }

    #[test]
    fn oecl_monotone_in_alpha() {
        let z_a = t(&unit_batch(4, 3, 8), &[4, 3]);
        let z_b = t(&unit_batch(4, 3, 9), &[4, 3]);
        let f_oe = t(&[0.4, -0.2, 0.9, 1.0, 0.5, -0.3], &[2, 3]);
        let mut prev = f64::NEG_INFINITY;
        for alpha in [0.0, 0.3, 1.0, 2.5] {
            let cfg = LossConfig { alpha, ..LossConfig::default() };
            let v = oecl_loss(&z_a, &z_b, &f_oe, &cfg).unwrap().item().unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn shift_set_validation() {
        assert!(validate_shift_set(&[]).is_err());
        assert!(validate_shift_set(&[TransformSpec::PlanarRotation { angle_deg: 360.0 }]).is_err());
        assert!(validate_shift_set(&[TransformSpec::GaussianNoise { sigma: 0.1 }]).is_err());
        assert!(validate_shift_set(&[
            TransformSpec::PlanarRotation { angle_deg: 180.0 },
            TransformSpec::Reflection { axis: 0 },
        ])
        .is_ok());
    }

    #[test]
    fn self_oecl_oe_batch_is_shifted_batch() {
        // 180-degree rotation on 2-d data: OE vectors are exactly -x,
        // verified pointwise through the embedding of an identity encoder.
        let cfg = EncoderConfig {
            input_dim: 2,
            hidden_widths: vec![],
            feature_dim: 2,
            normalize_output: true,
        };
        let p = init_params(&cfg, 0).unwrap();
        let id = p
            .with_data(vec![vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]])
            .unwrap();
        let batch = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        let s_oe = vec![TransformSpec::PlanarRotation { angle_deg: 180.0 }];
        let lc = LossConfig { alpha: 1.0, ..LossConfig::default() };
        let loss = self_oecl_loss(&id, &batch, &[], &[], &s_oe, &lc, 3)
            .unwrap()
            .item()
            .unwrap();
        // with identity encoder the OE penalty is the mean input norm
        let z_rows: Vec<Vec<f64>> = batch
            .iter()
            .map(|r| {
                let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                r.iter().map(|x| x / n).collect()
            })
            .collect();
        let z = t(&z_rows.concat(), &[2, 2]);
        let expected = contrastive_loss(&z, &z, 0.5).unwrap().item().unwrap() + 1.5;
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }

    #[test]
    fn self_oecl_alpha_zero_is_contrastive() {
        let cfg = EncoderConfig {
            input_dim: 2,
            hidden_widths: vec![4],
            feature_dim: 2,
            normalize_output: true,
        };
        let p = init_params(&cfg, 5).unwrap();
        let batch = vec![vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.2, -1.0]];
        let s_oe = vec![TransformSpec::Reflection { axis: 0 }];
        let warm = LossConfig { alpha: 0.0, ..LossConfig::default() };
        let a = self_oecl_loss(&p, &batch, &[], &[], &s_oe, &warm, 7)
            .unwrap()
            .item()
            .unwrap();
        // alpha = 0 path never touches the OE batch
        let full = LossConfig { alpha: 1.0, ..LossConfig::default() };
        let b = self_oecl_loss(&p, &batch, &[], &[], &s_oe, &full, 7)
            .unwrap()
            .item()
            .unwrap();
        assert!(b >= a);
    }

    #[test]
    fn weighted_combination_endpoints_and_midpoint() {
        let z_a = t(&unit_batch(4, 3, 1), &[4, 3]);
        let z_b = t(&unit_batch(4, 3, 2), &[4, 3]);
        let z_all = t(&unit_batch(8, 3, 3), &[8, 3]);
        for form in [LossForm::CosineSoftmax, LossForm::WangIsolaEuclidean] {
            let align = match form {
                LossForm::CosineSoftmax => alignment_loss(&z_a, &z_b, 1.0),
                LossForm::WangIsolaEuclidean => wang_isola_align(&z_a, &z_b),
            }
            .unwrap()
            .item()
            .unwrap();
            let uniform = match form {
                LossForm::CosineSoftmax => uniformity_loss(&z_a, &z_b, 1.0),
                LossForm::WangIsolaEuclidean => wang_isola_uniform(&z_all),
            }
            .unwrap()
            .item()
            .unwrap();
            let w = |a: f64| {
                weighted_align_uniform(&z_a, &z_b, &z_all, a, form)
                    .unwrap()
                    .item()
                    .unwrap()
            };
            assert!((w(0.0) - align).abs() < 1e-12);
            assert!((w(1.0) - uniform).abs() < 1e-12);
            assert!((w(0.5) - 0.5 * (align + uniform)).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_pass_grad_check() {
        for seed in 0..20 {
            let n = 3 + (seed as usize % 3);
            let d = 2 + (seed as usize % 3);
            let z_a = unit_batch(n, d, seed);
            let z_b = unit_batch(n, d, seed + 77);
            let err = grad_check(
                |ts| contrastive_loss(&ts[0].row_normalize(1e-12)?, &ts[1].row_normalize(1e-12)?, 0.5),
                &[(z_a.clone(), vec![n, d]), (z_b.clone(), vec![n, d])],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "contrastive grad err {err}");

            let err = grad_check(
                |ts| oe_norm_penalty(&ts[0]),
                &[(unit_batch(n, d, seed + 154), vec![n, d])],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-5, "penalty grad err {err}");

            let err = grad_check(
                |ts| wang_isola_uniform(&ts[0].row_normalize(1e-12)?),
                &[(z_a, vec![n, d])],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "wi uniform grad err {err}");
        }
    }
}
