//! Synthetic datasets, augmentations T, and distribution-shifting
//! transforms S_oe.
//!
//! Everything is deterministic in (spec, seed). Augmentations are the
//! desk-scale analogs of the usual image transforms: gaussian noise for
//! color jitter, random scaling for crop/zoom, coordinate masking for
//! grayscale/occlusion. Shifts (large rotations, reflections) are exact
//! linear maps whose outputs are treated as outliers.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Normal,
    OeNear,
    OeFar,
    Anomaly,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Origin::Normal => "normal",
            Origin::OeNear => "oe-near",
            Origin::OeFar => "oe-far",
            Origin::Anomaly => "anomaly",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Origin {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(Origin::Normal),
            "oe-near" => Ok(Origin::OeNear),
            "oe-far" => Ok(Origin::OeFar),
            "anomaly" => Ok(Origin::Anomaly),
            other => Err(format!("unknown origin '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub vector: Vec<f64>,
    pub label: u32,
    pub origin: Origin,
}

/// One Gaussian mode: mean vector, per-dimension standard deviations, label.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpec {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub label: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub input_dim: usize,
    pub modes: Vec<ModeSpec>,
    pub samples_per_mode: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 2 {
            return Err(Error::Config("input_dim must be at least 2".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        for m in &self.modes {
            if m.mean.len() != self.input_dim || m.std.len() != self.input_dim {
                return Err(Error::Config("mode vectors must match input_dim".into()));
            }
            if m.std.iter().any(|&s| s <= 0.0) {
                return Err(Error::Config("mode standard deviations must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TransformSpec {
    GaussianNoise { sigma: f64 },
    RandomScale { lo: f64, hi: f64 },
    CoordinateMask { prob: f64 },
    PlanarRotation { angle_deg: f64 },
    Reflection { axis: usize },
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TransformSpec::GaussianNoise { sigma } => {
                if *sigma < 0.0 {
                    return Err(Error::Config("gaussian-noise sigma must be >= 0".into()));
                }
            }
            TransformSpec::RandomScale { lo, hi } => {
                if lo > hi {
                    return Err(Error::Config("random-scale range must have lo <= hi".into()));
                }
            }
            TransformSpec::CoordinateMask { prob } => {
                if !(0.0..=1.0).contains(prob) {
                    return Err(Error::Config("coordinate-mask probability must be in [0,1]".into()));
                }
            }
            TransformSpec::PlanarRotation { .. } | TransformSpec::Reflection { .. } => {}
        }
        Ok(())
    }

    /// Shifts are the exact linear transforms usable as S_oe.
    pub fn is_shift(&self) -> bool {
        matches!(
            self,
            TransformSpec::PlanarRotation { .. } | TransformSpec::Reflection { .. }
        )
    }
}

/// Draw the full dataset: `samples_per_mode` Gaussian samples per mode,
/// deterministic in the spec seed.
pub fn sample_dataset(spec: &SyntheticSpec, origin: Origin) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.modes.len() * spec.samples_per_mode);
    for (mi, mode) in spec.modes.iter().enumerate() {
        let mut rng = rng_from(mix(spec.seed, mi as u64));
        for _ in 0..spec.samples_per_mode {
            let vector: Vec<f64> = mode
                .mean
                .iter()
                .zip(&mode.std)
                .map(|(&m, &s)| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    m + s * n
                })
                .collect();
            out.push(LabeledSample {
                vector,
                label: mode.label,
                origin,
            });
        }
    }
    Ok(out)
}

/// Apply each transform in order; transform `i` uses its own stream
/// derived from `(seed, i)`.
pub fn augment(x: &[f64], transforms: &[TransformSpec], seed: u64) -> Vec<f64> {
    let mut v = x.to_vec();
    for (i, t) in transforms.iter().enumerate() {
        let mut rng = rng_from(mix(seed, i as u64));
        match t {
            TransformSpec::GaussianNoise { sigma } => {
                for c in v.iter_mut() {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *c += sigma * n;
                }
            }
            TransformSpec::RandomScale { lo, hi } => {
                let s = if lo == hi { *lo } else { rng.gen_range(*lo..*hi) };
                for c in v.iter_mut() {
                    *c *= s;
                }
            }
            TransformSpec::CoordinateMask { prob } => {
                for c in v.iter_mut() {
                    if rng.gen::<f64>() < *prob {
                        *c = 0.0;
                    }
                }
            }
            // deterministic shifts are valid members of T as well
            TransformSpec::PlanarRotation { .. } | TransformSpec::Reflection { .. } => {
                v = apply_shift_unchecked(&v, t);
            }
        }
    }
    v
}

fn apply_shift_unchecked(x: &[f64], shift: &TransformSpec) -> Vec<f64> {
    let mut v = x.to_vec();
    match shift {
        TransformSpec::PlanarRotation { angle_deg } => {
            let theta = angle_deg.to_radians();
            let (s, c) = theta.sin_cos();
            let mut i = 0;
            while i + 1 < v.len() {
                let (a, b) = (v[i], v[i + 1]);
                v[i] = c * a - s * b;
                v[i + 1] = s * a + c * b;
                i += 2;
            }
        }
        TransformSpec::Reflection { axis } => {
            if *axis < v.len() {
                v[*axis] = -v[*axis];
            }
        }
        _ => unreachable!("not a shift"),
    }
    v
}

/// Exact linear distribution shift. Rotations act on coordinate pairs
/// (0,1),(2,3),…; reflections negate the chosen axis.
pub fn apply_shift(x: &[f64], shift: &TransformSpec) -> Result<Vec<f64>> {
    match shift {
        TransformSpec::PlanarRotation { .. } => {
            if x.len() < 2 {
                return Err(Error::Contract(
                    "planar rotation needs input_dim >= 2".into(),
                ));
            }
        }
        TransformSpec::Reflection { axis } => {
            if *axis >= x.len() {
                return Err(Error::Contract(format!(
                    "reflection axis {axis} out of range for dim {}",
                    x.len()
                )));
            }
        }
        other => {
            return Err(Error::Contract(format!(
                "{other:?} is not a distribution shift"
            )))
        }
    }
    Ok(apply_shift_unchecked(x, shift))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OeKind {
    Near,
    Far,
    Shift,
}

/// Distance (in units of mean normal std) at which "near" OE modes sit.
pub const NEAR_OE_DISTANCE: f64 = 3.0;
/// Distance for "far" OE modes; their spread is also broadened.
pub const FAR_OE_DISTANCE: f64 = 12.0;

/// Build an outlier-exposure pool.
///
/// `near`/`far` place held-out Gaussian modes along each coordinate axis at
/// `NEAR_OE_DISTANCE` / `FAR_OE_DISTANCE` mean standard deviations from
/// every normal mode; `shift` applies each transform in `shifts` to every
/// base sample (self-OE), giving |base| x |shifts| samples.
pub fn make_oe_pool(
    kind: OeKind,
    base: &[LabeledSample],
    spec: &SyntheticSpec,
    shifts: &[TransformSpec],
) -> Result<Vec<LabeledSample>> {
    match kind {
        OeKind::Shift => {
            if shifts.is_empty() {
                return Err(Error::Contract("shift OE needs a non-empty S_oe".into()));
            }
            let mut out = Vec::with_capacity(base.len() * shifts.len());
            for s in shifts {
                for sample in base {
                    out.push(LabeledSample {
                        vector: apply_shift(&sample.vector, s)?,
                        label: sample.label,
                        origin: Origin::OeNear,
                    });
                }
            }
            Ok(out)
        }
        OeKind::Near | OeKind::Far => {
            spec.validate()?;
            let (dist, spread, origin) = match kind {
                OeKind::Near => (NEAR_OE_DISTANCE, 1.0, Origin::OeNear),
                OeKind::Far => (FAR_OE_DISTANCE, 3.0, Origin::OeFar),
                OeKind::Shift => unreachable!(),
            };
            let mut modes = Vec::new();
            for mode in &spec.modes {
                let s_avg = mode.std.iter().sum::<f64>() / mode.std.len() as f64;
                for axis in 0..spec.input_dim {
                    for sign in [1.0, -1.0] {
                        let mut mean = mode.mean.clone();
                        mean[axis] += sign * dist * s_avg;
                        modes.push(ModeSpec {
                            mean,
                            std: mode.std.iter().map(|&s| s * spread).collect(),
                            label: mode.label,
                        });
                    }
                }
            }
            let per_mode =
                (base.len().max(spec.modes.len()) / modes.len().max(1)).max(1);
            let oe_spec = SyntheticSpec {
                input_dim: spec.input_dim,
                modes,
                samples_per_mode: per_mode,
                seed: mix(spec.seed, 0x0e0e),
            };
            sample_dataset(&oe_spec, origin)
        }
    }
}

/// Deterministic k-subset of a pool (few-shot OE).
pub fn select_subset(pool: &[LabeledSample], k: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    if k > pool.len() {
        return Err(Error::Contract(format!(
            "subset size {k} exceeds pool size {}",
            pool.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let mut rng = rng_from(seed);
    // partial Fisher-Yates
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    Ok(idx[..k].iter().map(|&i| pool[i].clone()).collect())
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write the dataset CSV: "# oecl-dataset v1 dim=<d>", a header row, then
/// one row per sample with 17-significant-digit floats.
pub fn save_dataset(path: &Path, dim: usize, samples: &[LabeledSample]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# oecl-dataset v1 dim={dim}")?;
    let cols: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(f, "label,origin,{}", cols.join(","))?;
    for s in samples {
        if s.vector.len() != dim {
            return Err(Error::Contract("sample dimension mismatch on save".into()));
        }
        let xs: Vec<String> = s.vector.iter().map(|&x| fmt_float(x)).collect();
        writeln!(f, "{},{},{}", s.label, s.origin, xs.join(","))?;
    }
    Ok(())
}

/// Read a dataset CSV back; parse failures name the offending line.
pub fn load_dataset(path: &Path) -> Result<(usize, Vec<LabeledSample>)> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let first = first?;
    let dim: usize = first
        .strip_prefix("# oecl-dataset v1 dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or(Error::Parse {
            line: 1,
            msg: "bad dataset header".into(),
        })?;

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 2,
        msg: "missing column header".into(),
    })?;
    let header = header?;
    if !header.starts_with("label,origin,") && header != "label,origin" {
        return Err(Error::Parse {
            line: 2,
            msg: "bad column header".into(),
        });
    }

    let mut samples = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != dim + 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} columns, found {}", dim + 2, parts.len()),
            });
        }
        let label: u32 = parts[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad label '{}'", parts[0]),
        })?;
        let origin: Origin = parts[1].parse().map_err(|msg| Error::Parse {
            line: line_no,
            msg,
        })?;
        let mut vector = Vec::with_capacity(dim);
        for p in &parts[2..] {
            vector.push(p.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad float '{p}'"),
            })?);
        }
        samples.push(LabeledSample {
            vector,
            label,
            origin,
        });
    }
    Ok((dim, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unimodal(n: usize) -> SyntheticSpec {
        SyntheticSpec {
            input_dim: 3,
            modes: vec![ModeSpec {
                mean: vec![0.0; 3],
                std: vec![1.0; 3],
                label: 0,
            }],
            samples_per_mode: n,
            seed: 7,
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = unimodal(50);
        let a = sample_dataset(&spec, Origin::Normal).unwrap();
        let b = sample_dataset(&spec, Origin::Normal).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_obeys_law_of_large_numbers() {
        let spec = unimodal(100_000);
        let data = sample_dataset(&spec, Origin::Normal).unwrap();
        let n = data.len() as f64;
        for c in 0..3 {
            let mean = data.iter().map(|s| s.vector[c]).sum::<f64>() / n;
            assert!(mean.abs() < 3.0 / n.sqrt(), "coord {c} mean {mean}");
        }
    }

    #[test]
    fn two_modes_have_exact_label_histogram() {
        let spec = SyntheticSpec {
            input_dim: 2,
            modes: vec![
                ModeSpec { mean: vec![0.0, 0.0], std: vec![1.0, 1.0], label: 0 },
                ModeSpec { mean: vec![5.0, 5.0], std: vec![1.0, 1.0], label: 1 },
            ],
            samples_per_mode: 40,
            seed: 3,
        };
        let data = sample_dataset(&spec, Origin::Normal).unwrap();
        let zeros = data.iter().filter(|s| s.label == 0).count();
        assert_eq!((zeros, data.len() - zeros), (40, 40));
    }

    #[test]
    fn augment_identity_cases() {
        let x = vec![1.0, -2.0, 0.5];
        assert_eq!(augment(&x, &[], 9), x);
        assert_eq!(
            augment(&x, &[TransformSpec::GaussianNoise { sigma: 0.0 }], 9),
            x
        );
        let half = augment(&x, &[TransformSpec::RandomScale { lo: 0.5, hi: 0.5 }], 9);
        assert_eq!(half, vec![0.5, -1.0, 0.25]);
    }

    #[test]
    fn augment_is_deterministic_in_seed() {
        let x = vec![0.4, 1.3];
        let t = vec![TransformSpec::GaussianNoise { sigma: 0.2 }];
        assert_eq!(augment(&x, &t, 5), augment(&x, &t, 5));
        assert_ne!(augment(&x, &t, 5), augment(&x, &t, 6));
    }

    #[test]
    fn rotation_examples() {
        let full = TransformSpec::PlanarRotation { angle_deg: 360.0 };
        let x = vec![0.3, -0.9];
        let y = apply_shift(&x, &full).unwrap();
        assert!((y[0] - x[0]).abs() < 1e-12 && (y[1] - x[1]).abs() < 1e-12);

        let half = TransformSpec::PlanarRotation { angle_deg: 180.0 };
        let y = apply_shift(&[1.0, 0.0], &half).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-12 && y[1].abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_norm() {
        let rot = TransformSpec::PlanarRotation { angle_deg: 77.0 };
        let x = vec![0.3, -0.9, 2.0, 0.1];
        let y = apply_shift(&x, &rot).unwrap();
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nx - ny).abs() < 1e-12);
    }

    #[test]
    fn reflection_is_involution() {
        let r = TransformSpec::Reflection { axis: 1 };
        let x = vec![1.0, -2.0, 3.0];
        let y = apply_shift(&apply_shift(&x, &r).unwrap(), &r).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rotation_needs_two_dims() {
        let rot = TransformSpec::PlanarRotation { angle_deg: 90.0 };
        assert!(apply_shift(&[1.0], &rot).is_err());
    }

    #[test]
    fn shift_pool_cardinality() {
        let spec = unimodal(10);
        let base = sample_dataset(&spec, Origin::Normal).unwrap();
        let shifts = vec![
            TransformSpec::PlanarRotation { angle_deg: 180.0 },
            TransformSpec::Reflection { axis: 0 },
        ];
        let pool = make_oe_pool(OeKind::Shift, &base, &spec, &shifts).unwrap();
        assert_eq!(pool.len(), base.len() * shifts.len());
    }

    #[test]
    fn far_pool_is_farther_than_near_pool() {
        let spec = unimodal(60);
        let base = sample_dataset(&spec, Origin::Normal).unwrap();
        let near = make_oe_pool(OeKind::Near, &base, &spec, &[]).unwrap();
        let far = make_oe_pool(OeKind::Far, &base, &spec, &[]).unwrap();
        let dist = |pool: &[LabeledSample]| {
            pool.iter()
                .map(|s| s.vector.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>()
                / pool.len() as f64
        };
        assert!(dist(&far) > dist(&near));
    }

    #[test]
    fn one_shot_subset_is_deterministic() {
        let spec = unimodal(30);
        let pool = sample_dataset(&spec, Origin::Normal).unwrap();
        let a = select_subset(&pool, 1, 4).unwrap();
        let b = select_subset(&pool, 1, 4).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
        assert!(select_subset(&pool, 31, 4).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("oecl-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        let spec = unimodal(20);
        let data = sample_dataset(&spec, Origin::Normal).unwrap();
        save_dataset(&path, 3, &data).unwrap();
        let (dim, loaded) = load_dataset(&path).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(data, loaded);

        // empty dataset: header-only file
        let empty = dir.join("e.csv");
        save_dataset(&empty, 2, &[]).unwrap();
        let (dim, loaded) = load_dataset(&empty).unwrap();
        assert_eq!(dim, 2);
        assert!(loaded.is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_row_names_the_line() {
        let dir = std::env::temp_dir().join(format!("oecl-badrow-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(
            &path,
            "# oecl-dataset v1 dim=2\nlabel,origin,x0,x1\n0,normal,1.0\n",
        )
        .unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
