//! Numerical checks of the normalization theory: the expected cosine
//! similarity of normalized Gaussian vectors with its Φ-based upper and
//! lower bounds, and the monotonicity/convexity of the auxiliary
//! integral f(y).
//!
//! Two independent estimators are provided — chunked Monte Carlo for any
//! dimension and adaptive quadrature for the two-dimensional case — so
//! each can serve as an oracle for the other.

use crate::error::{Error, Result};
use crate::rng::mix;
use rand_distr::{Distribution, Normal};

// ---------------------------------------------------------------------------
// Standard normal CDF
// ---------------------------------------------------------------------------

/// Rational approximation of erf/erfc after W. J. Cody (1969), absolute
/// error below 1e-15 on the whole line.
fn erfc_cody(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.161_123_743_870_565_6e0,
        1.138_641_541_510_501_6e2,
        3.774_852_376_853_020_2e2,
        3.209_377_589_138_469_5e3,
        1.857_777_061_846_031_5e-1,
    ];
    const B: [f64; 4] = [
        2.360_129_095_234_412_1e1,
        2.440_246_379_344_441_7e2,
        1.282_616_526_077_372_3e3,
        2.844_236_833_439_170_6e3,
    ];
    const C: [f64; 9] = [
        5.641_884_969_886_700_9e-1,
        8.883_149_794_388_376e0,
        6.611_919_063_714_163e1,
        2.986_351_381_974_001_3e2,
        8.819_522_212_417_691e2,
        1.712_047_612_634_070_6e3,
        2.051_078_377_826_071_5e3,
        1.230_339_354_797_997_2e3,
        2.153_115_354_744_038_5e-8,
    ];
    const D: [f64; 8] = [
        1.574_492_611_070_983_5e1,
        1.176_939_508_913_125e2,
        5.371_811_018_620_099e2,
        1.621_389_574_566_690_2e3,
        3.290_799_235_733_459_7e3,
        4.362_619_090_143_247e3,
        3.439_367_674_143_721_6e3,
        1.230_339_354_803_749_4e3,
    ];
    const P: [f64; 6] = [
        3.053_266_349_612_323_4e-1,
        3.603_448_999_498_044_4e-1,
        1.257_817_261_112_292_5e-1,
        1.608_378_514_874_227_7e-2,
        6.587_491_615_298_378e-4,
        1.631_538_713_730_209_8e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822_4e0,
        1.872_952_849_923_460_4e0,
        5.279_051_029_514_284e-1,
        6.051_834_131_244_132e-2,
        2.335_204_976_268_691_8e-3,
    ];
    const SQRPI: f64 = 5.641_895_835_477_562_9e-1; // 1/sqrt(pi)

    // Horner evaluation in Cody's coefficient order: the leading
    // coefficient is stored last, the rest fold in sequence.
    fn horner(lead: f64, rest: &[f64], x: f64) -> f64 {
        rest.iter().fold(lead, |acc, &c| acc * x + c)
    }

    let ax = x.abs();
    if ax <= 0.46875 {
        // erfc via erf on the central interval
        let z = ax * ax;
        let num = horner(A[4], &A[..4], z) * x;
        let den = horner(1.0, &B, z);
        return 1.0 - num / den;
    }
    let erfc_abs = if ax <= 4.0 {
        let num = horner(C[8], &C[..8], ax);
        let den = horner(1.0, &D, ax);
        (-ax * ax).exp() * num / den
    } else if ax < 26.0 {
        let z = 1.0 / (ax * ax);
        let num = horner(P[5], &P[..5], z);
        let den = horner(1.0, &Q, z);
        (-ax * ax).exp() / ax * (SQRPI - z * num / den)
    } else {
        0.0
    };
    if x < 0.0 { 2.0 - erfc_abs } else { erfc_abs }
}

/// Standard normal CDF, absolute error below 1e-10.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc_cody(-x / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Adaptive quadrature
// ---------------------------------------------------------------------------

const SIMPSON_MAX_DEPTH: u32 = 60;

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!(
            "adaptive quadrature failed to converge on [{a}, {b}] after {SIMPSON_MAX_DEPTH} subdivisions"
        )));
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a <= b) {
        return Err(Error::Contract(format!("invalid integration bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

// ---------------------------------------------------------------------------
// Lemma 1: f(y) = ∫ x/sqrt(x^2+y) exp(-(x-mu)^2 / 2 sigma^2) dx
// ---------------------------------------------------------------------------

const QUAD_TOL: f64 = 1e-8;
/// Gaussian tails are truncated this many standard deviations out; the
/// neglected mass is below 1e-42, far under every stated tolerance.
const TAIL_SIGMAS: f64 = 14.0;

/// The Lemma 1 integral over the whole line, computed in the folded form
/// ∫₀^∞ x/sqrt(x²+y) · (e^{-(x-μ)²/2σ²} - e^{-(x+μ)²/2σ²}) dx, which is
/// manifestly non-negative for μ ≥ 0 and stable near x = 0.
pub fn lemma1_f(y: f64, mu: f64, sigma: f64) -> Result<f64> {
    if y < 0.0 || mu < 0.0 || sigma <= 0.0 {
        return Err(Error::Contract(format!(
            "lemma1_f requires y >= 0, mu >= 0, sigma > 0 (got y={y}, mu={mu}, sigma={sigma})"
        )));
    }
    if mu == 0.0 {
        // odd integrand: the two folded exponentials coincide
        return Ok(0.0);
    }
    let two_s2 = 2.0 * sigma * sigma;
    let integrand = move |x: f64| -> f64 {
        if x == 0.0 {
            // x/sqrt(x²+y) is 0 for y > 0 and has a removable 0/0 at y = 0
            return 0.0;
        }
        let w = x / (x * x + y).sqrt();
        w * ((-(x - mu) * (x - mu) / two_s2).exp() - (-(x + mu) * (x + mu) / two_s2).exp())
    };
    let upper = mu + TAIL_SIGMAS * sigma;
    integrate(integrand, 0.0, upper, QUAD_TOL)
}

/// Result of the discrete Lemma 1 check on a y-grid.
#[derive(Clone, Debug)]
pub struct Lemma1Report {
    pub y_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub non_increasing: bool,
    pub convex: bool,
}

impl Lemma1Report {
    pub fn passed(&self) -> bool {
        self.non_increasing && self.convex
    }
}

/// Tolerance for the discrete monotonicity and convexity assertions.
pub const LEMMA1_TOL: f64 = 1e-6;

/// Discrete non-increase and convexity of a sampled function; exposed so
/// the negative control (a corrupted value list) can exercise it
/// directly. Convexity on a (possibly non-uniform) grid means the
/// secant slopes are non-decreasing.
pub fn check_monotone_convex(y_grid: &[f64], values: &[f64], tol: f64) -> (bool, bool) {
    let non_increasing = values.windows(2).all(|w| w[0] >= w[1] - tol);
    let slope = |i: usize| (values[i + 1] - values[i]) / (y_grid[i + 1] - y_grid[i]);
    let convex = (0..values.len().saturating_sub(2)).all(|i| slope(i + 1) >= slope(i) - tol);
    (non_increasing, convex)
}

/// Evaluate f on the grid and check non-increase and discrete convexity.
pub fn verify_lemma1(mu: f64, sigma: f64, y_grid: &[f64]) -> Result<Lemma1Report> {
    if y_grid.len() < 3 {
        return Err(Error::Contract("verify_lemma1 needs at least 3 grid points".into()));
    }
    if y_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("verify_lemma1 grid must be strictly ascending".into()));
    }
    let values: Vec<f64> = y_grid
        .iter()
        .map(|&y| lemma1_f(y, mu, sigma))
        .collect::<Result<_>>()?;
    let (non_increasing, convex) = check_monotone_convex(y_grid, &values, LEMMA1_TOL);
    Ok(Lemma1Report {
        y_grid: y_grid.to_vec(),
        values,
        non_increasing,
        convex,
    })
}

// ---------------------------------------------------------------------------
// Theorem 1: E<X/|X|, Y/|Y|> and its Φ bounds
// ---------------------------------------------------------------------------

/// A Gaussian with mean μe₁ and covariance diag(σ², perp_profile).
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    pub mu: f64,
    pub sigma: f64,
    pub sigma_v_sq: f64,
    pub dim: usize,
    /// Per-axis variances of the dim−1 perpendicular coordinates;
    /// must sum to `sigma_v_sq`.
    pub perp_profile: Vec<f64>,
}

impl GaussianSpec {
    /// Equal perpendicular variance on every axis. The bounds depend only
    /// on the trace, so this is the default shape.
    pub fn isotropic(mu: f64, sigma: f64, sigma_v_sq: f64, dim: usize) -> Result<Self> {
        let spec = GaussianSpec {
            mu,
            sigma,
            sigma_v_sq,
            dim,
            perp_profile: vec![sigma_v_sq / (dim - 1).max(1) as f64; dim.saturating_sub(1)],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu < 0.0 || self.sigma <= 0.0 || self.sigma_v_sq < 0.0 {
            return Err(Error::Contract(format!(
                "GaussianSpec requires mu >= 0, sigma > 0, sigma_v_sq >= 0 (got mu={}, sigma={}, sigma_v_sq={})",
                self.mu, self.sigma, self.sigma_v_sq
            )));
        }
        if self.dim < 2 {
            return Err(Error::Contract("GaussianSpec requires dim >= 2".into()));
        }
        if self.perp_profile.len() != self.dim - 1 {
            return Err(Error::Contract(format!(
                "perp_profile has {} entries, expected dim-1 = {}",
                self.perp_profile.len(),
                self.dim - 1
            )));
        }
        if self.perp_profile.iter().any(|&v| v < 0.0) {
            return Err(Error::Contract("perp_profile variances must be >= 0".into()));
        }
        let total: f64 = self.perp_profile.iter().sum();
        if (total - self.sigma_v_sq).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "perp_profile sums to {total}, expected sigma_v_sq = {}",
                self.sigma_v_sq
            )));
        }
        Ok(())
    }
}

/// Verdict of one bound check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    BoundsHold,
    ViolatedUpper,
    ViolatedLower,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::BoundsHold => "bounds-hold",
            Verdict::ViolatedUpper => "violated-upper",
            Verdict::ViolatedLower => "violated-lower",
        })
    }
}

/// One row of the bound verification report.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub spec: GaussianSpec,
    pub estimate: f64,
    pub stderr: f64,
    pub upper: f64,
    pub lower: f64,
    pub epsilon_star: f64,
    pub n_samples: usize,
    pub verdict: Verdict,
}

/// Upper bound (Φ(μ/σ) − Φ(−μ/σ))².
pub fn theorem1_upper(mu: f64, sigma: f64) -> f64 {
    let gap = phi(mu / sigma) - phi(-mu / sigma);
    gap * gap
}

/// Lower bound [1/(1+σ_V²/(ε²μ²))]·(Φ((1−ε)μ/σ) − Φ(−(1+ε)μ/σ))².
pub fn theorem1_lower(mu: f64, sigma: f64, sigma_v_sq: f64, epsilon: f64) -> Result<f64> {
    if mu <= 0.0 {
        return Err(Error::Contract(
            "theorem1_lower requires mu > 0 (the prefactor divides by mu)".into(),
        ));
    }
    if epsilon <= 0.0 {
        return Err(Error::Contract("theorem1_lower requires epsilon > 0".into()));
    }
    let prefactor = 1.0 / (1.0 + sigma_v_sq / (epsilon * epsilon * mu * mu));
    let gap = phi((1.0 - epsilon) * mu / sigma) - phi(-(1.0 + epsilon) * mu / sigma);
    Ok(prefactor * gap * gap)
}

/// Default ε grid: 20 log-spaced points in [1e-3, 1]. The prefactor
/// degrades for small ε and the Φ gap for large ε, so the best ε is
/// interior.
pub fn default_epsilon_grid() -> Vec<f64> {
    (0..20).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 19.0)).collect()
}

/// Maximize the lower bound over an ε grid; ties break toward smaller ε.
pub fn best_lower(
    mu: f64,
    sigma: f64,
    sigma_v_sq: f64,
    epsilon_grid: &[f64],
) -> Result<(f64, f64)> {
    if epsilon_grid.is_empty() || epsilon_grid.iter().any(|&e| e <= 0.0) {
        return Err(Error::Contract("best_lower needs a non-empty positive grid".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_eps = epsilon_grid[0];
    for &eps in epsilon_grid {
        let v = theorem1_lower(mu, sigma, sigma_v_sq, eps)?;
        if v > best || (v == best && eps < best_eps) {
            best = v;
            best_eps = eps;
        }
    }
    Ok((best, best_eps))
}

/// Fixed Monte Carlo chunk size; chunk i is seeded by mix(seed, i), so
/// the result depends only on (spec, n_samples, seed), never on how the
/// chunks are scheduled.
pub const MC_CHUNK: usize = 65_536;

/// Monte Carlo estimate of E⟨X/‖X‖, Y/‖Y‖⟩ with its standard error.
pub fn mc_expected_cosine(
    spec: &GaussianSpec,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    spec.validate()?;
    if n_samples < 1000 {
        return Err(Error::Contract("mc_expected_cosine requires n_samples >= 1000".into()));
    }
    let axis_std: Vec<f64> = std::iter::once(spec.sigma)
        .chain(spec.perp_profile.iter().map(|v| v.sqrt()))
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    for chunk in 0..n_chunks {
        let mut rng = crate::rng::rng_from(mix(seed, chunk as u64));
        let count = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
        for _ in 0..count {
            let draw = |rng: &mut rand::rngs::StdRng| -> (Vec<f64>, f64) {
                loop {
                    let v: Vec<f64> = axis_std
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| {
                            let m = if i == 0 { spec.mu } else { 0.0 };
                            m + s * normal.sample(rng)
                        })
                        .collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    // zero-norm draws have probability 0; redraw defensively
                    if n > 0.0 {
                        return (v, n);
                    }
                }
            };
            let (x, nx) = draw(&mut rng);
            let (y, ny) = draw(&mut rng);
            let cos = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny);
            sum += cos;
            sum_sq += cos * cos;
        }
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Quadrature oracle for dim = 2, via the proof identity
/// E⟨X/‖X‖, Y/‖Y‖⟩ = (E[X₁/‖X‖])², with the inner expectation reduced
/// to the Lemma 1 integral f(v²) averaged over the perpendicular
/// coordinate v ~ N(0, σ_V²).
pub fn quadrature_expected_cosine(spec: &GaussianSpec) -> Result<f64> {
    spec.validate()?;
    if spec.dim != 2 {
        return Err(Error::Contract("quadrature_expected_cosine requires dim = 2".into()));
    }
    if spec.mu == 0.0 {
        return Ok(0.0); // odd in the first coordinate
    }
    let norm_const = 1.0 / (spec.sigma * (2.0 * std::f64::consts::PI).sqrt());
    if spec.sigma_v_sq == 0.0 {
        // v ≡ 0: E[X₁/|X₁|] = E[sign(X₁)] = 2Φ(μ/σ) − 1
        let e = norm_const * lemma1_f(0.0, spec.mu, spec.sigma)?;
        return Ok(e * e);
    }
    let sv = spec.sigma_v_sq.sqrt();
    let (mu, sigma) = (spec.mu, spec.sigma);
    let gauss_v = 1.0 / (sv * (2.0 * std::f64::consts::PI).sqrt());
    // symmetric in v: integrate 0..∞ and double
    let integrand = move |v: f64| -> f64 {
        let inner = lemma1_f(v * v, mu, sigma).expect("inner quadrature converges");
        gauss_v * (-v * v / (2.0 * sv * sv)).exp() * norm_const * inner
    };
    let e = 2.0 * integrate(integrand, 0.0, TAIL_SIGMAS * sv, QUAD_TOL)?;
    Ok(e * e)
}

/// Check every spec's MC estimate against its bounds at 3·stderr.
pub fn verify_theorem1(
    specs: &[GaussianSpec],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let grid = default_epsilon_grid();
    let mut reports = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let (estimate, stderr) = mc_expected_cosine(spec, n_samples, mix(seed, i as u64))?;
        let upper = theorem1_upper(spec.mu, spec.sigma);
        let (lower, epsilon_star) = if spec.mu > 0.0 {
            best_lower(spec.mu, spec.sigma, spec.sigma_v_sq, &grid)?
        } else {
            (0.0, 0.0) // the bound chain is vacuous at mu = 0
        };
        let verdict = if estimate > upper + 3.0 * stderr {
            Verdict::ViolatedUpper
        } else if estimate < lower - 3.0 * stderr {
            Verdict::ViolatedLower
        } else {
            Verdict::BoundsHold
        };
        reports.push(BoundReport {
            spec: spec.clone(),
            estimate,
            stderr,
            upper,
            lower,
            epsilon_star,
            n_samples,
            verdict,
        });
    }
    Ok(reports)
}

/// Monotonicity in μ: within every fixed (σ, σ_V², dim) slice, estimates
/// ordered by μ must be non-decreasing within pairwise statistical
/// tolerance 3·√(se_i² + se_j²).
pub fn mu_monotonicity_ok(reports: &[BoundReport]) -> bool {
    let mut slices: std::collections::BTreeMap<(u64, u64, usize), Vec<&BoundReport>> =
        std::collections::BTreeMap::new();
    for r in reports {
        let key = (r.spec.sigma.to_bits(), r.spec.sigma_v_sq.to_bits(), r.spec.dim);
        slices.entry(key).or_default().push(r);
    }
    for group in slices.values_mut() {
        group.sort_by(|a, b| a.spec.mu.partial_cmp(&b.spec.mu).unwrap());
        for w in group.windows(2) {
            let tol = 3.0 * (w[0].stderr * w[0].stderr + w[1].stderr * w[1].stderr).sqrt();
            if w[1].estimate < w[0].estimate - tol {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_symmetry_and_center() {
        assert_eq!(phi(0.0), 0.5);
        for &x in &[0.1, 0.5, 1.0, 2.3, 5.0, 9.0] {
            assert!((phi(x) + phi(-x) - 1.0).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn phi_reference_values() {
        // high-precision reference values for the standard normal CDF
        assert!((phi(1.0) - 0.8413447460685429).abs() < 1e-10);
        assert!((phi(-1.0) - 0.15865525393145707).abs() < 1e-10);
        assert!((phi(2.0) - 0.9772498680518208).abs() < 1e-10);
        assert!((phi(0.5) - 0.6914624612740131).abs() < 1e-10);
        assert!((phi(-3.0) - 0.0013498980316300933).abs() < 1e-12);
    }

    #[test]
    fn phi_is_non_decreasing() {
        let mut prev = 0.0;
        let mut x = -8.0;
        while x <= 8.0 {
            let p = phi(x);
            assert!(p >= prev, "phi decreased at x={x}");
            assert!((0.0..=1.0).contains(&p));
            prev = p;
            x += 0.05;
        }
    }

    #[test]
    fn quadrature_known_integrals() {
        assert!((integrate(|x| x * x, 0.0, 1.0, 1e-10).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert!((integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-10).unwrap() - 2.0).abs() < 1e-9);
        // Gaussian mass over +-8 sigma
        let g = integrate(|x| (-0.5 * x * x).exp(), -8.0, 8.0, 1e-10).unwrap();
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-8);
        assert_eq!(integrate(|x| x, 2.0, 2.0, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn lemma1_closed_form_at_zero() {
        // f(0) = sigma sqrt(2 pi) (2 phi(mu/sigma) - 1)
        for &(mu, sigma) in &[(1.0, 1.0), (0.5, 2.0), (3.0, 0.7)] {
            let expected = sigma * (2.0 * std::f64::consts::PI).sqrt() * (2.0 * phi(mu / sigma) - 1.0);
            let got = lemma1_f(0.0, mu, sigma).unwrap();
            assert!((got - expected).abs() < 1e-7, "mu={mu} sigma={sigma}: {got} vs {expected}");
        }
        // spot value at mu = sigma = 1
        assert!((lemma1_f(0.0, 1.0, 1.0).unwrap() - 1.7112487837842973).abs() < 1e-7);
    }

    #[test]
    fn lemma1_limits() {
        assert!(lemma1_f(1e8, 1.0, 1.0).unwrap().abs() < 1e-3);
        for &y in &[0.0, 0.5, 4.0, 100.0] {
            assert_eq!(lemma1_f(y, 0.0, 1.0).unwrap(), 0.0);
        }
        assert!(lemma1_f(-1.0, 1.0, 1.0).is_err());
        assert!(lemma1_f(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn lemma1_verification_passes() {
        let report = verify_lemma1(1.0, 1.0, &[0.0, 1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        assert!(report.non_increasing && report.convex);
        // mu = 0 gives the constant-zero function, trivially passing
        let zero = verify_lemma1(0.0, 1.0, &[0.0, 1.0, 2.0]).unwrap();
        assert!(zero.passed());
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corrupted_values_fail_the_check() {
        let report = verify_lemma1(1.0, 1.0, &[0.0, 1.0, 2.0, 4.0, 8.0]).unwrap();
        let flipped: Vec<f64> = report.values.iter().map(|v| -v).collect();
        let (ni, cv) = check_monotone_convex(&report.y_grid, &flipped, LEMMA1_TOL);
        assert!(!(ni && cv), "sign-flipped f must fail at least one check");
    }

    #[test]
    fn lemma1_grid_preconditions() {
        assert!(verify_lemma1(1.0, 1.0, &[0.0, 1.0]).is_err());
        assert!(verify_lemma1(1.0, 1.0, &[0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn upper_bound_hand_values() {
        let u = theorem1_upper(1.0, 1.0);
        assert!((u - 0.4660649426743922).abs() < 1e-9);
        let gap = 2.0 * phi(1.0) - 1.0;
        assert!((u - gap * gap).abs() < 1e-15);
        assert_eq!(theorem1_upper(0.0, 1.0), 0.0);
    }

    #[test]
    fn lower_bound_approaches_upper() {
        // sigma_v_sq -> 0 and epsilon -> 0 jointly
        let upper = theorem1_upper(1.0, 1.0);
        let mut prev_gap = f64::INFINITY;
        for k in 1..=6 {
            let eps = 10f64.powi(-k);
            let svs = 10f64.powi(-3 * k);
            let lower = theorem1_lower(1.0, 1.0, svs, eps).unwrap();
            let gap = upper - lower;
            assert!(gap >= -1e-12);
            assert!(gap <= prev_gap + 1e-12);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-4);
    }

    #[test]
    fn lower_bound_preconditions() {
        assert!(theorem1_lower(0.0, 1.0, 1.0, 0.1).is_err());
        assert!(theorem1_lower(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn best_lower_properties() {
        // one-point grid returns that point
        let (v, e) = best_lower(1.0, 1.0, 1.0, &[0.25]).unwrap();
        assert_eq!(v, theorem1_lower(1.0, 1.0, 1.0, 0.25).unwrap());
        assert_eq!(e, 0.25);
        // never exceeds the upper bound
        let grid = default_epsilon_grid();
        assert_eq!(grid.len(), 20);
        for &(mu, sigma, svs) in &[(0.5, 1.0, 0.0), (1.0, 1.0, 1.0), (2.0, 0.5, 4.0)] {
            let (lo, eps) = best_lower(mu, sigma, svs, &grid).unwrap();
            assert!(lo <= theorem1_upper(mu, sigma) + 1e-15);
            assert!(grid.contains(&eps));
        }
        // a denser grid can only improve the maximum
        let coarse: Vec<f64> = grid.iter().step_by(4).copied().collect();
        let (dense, _) = best_lower(1.0, 1.0, 1.0, &grid).unwrap();
        let (sparse, _) = best_lower(1.0, 1.0, 1.0, &coarse).unwrap();
        assert!(dense >= sparse);
        // ties break toward smaller epsilon
        let (_, e) = best_lower(1.0, 1.0, 0.0, &[0.5, 0.5]).unwrap();
        assert_eq!(e, 0.5);
        assert!(best_lower(1.0, 1.0, 1.0, &[]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(GaussianSpec::isotropic(1.0, 1.0, 1.0, 2).is_ok());
        assert!(GaussianSpec::isotropic(1.0, 0.0, 1.0, 2).is_err());
        assert!(GaussianSpec::isotropic(1.0, 1.0, 1.0, 1).is_err());
        let bad = GaussianSpec {
            mu: 1.0,
            sigma: 1.0,
            sigma_v_sq: 1.0,
            dim: 3,
            perp_profile: vec![0.9, 0.2],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mc_symmetric_case_is_zero() {
        let spec = GaussianSpec::isotropic(0.0, 1.0, 1.0, 2).unwrap();
        let (est, se) = mc_expected_cosine(&spec, 100_000, 7).unwrap();
        assert!(est.abs() <= 3.0 * se, "est={est} se={se}");
    }

    #[test]
    fn mc_near_deterministic_case_is_one() {
        let spec = GaussianSpec::isotropic(1.0, 1e-6, 0.0, 2).unwrap();
        let (est, se) = mc_expected_cosine(&spec, 10_000, 3).unwrap();
        assert!((est - 1.0).abs() <= 3.0 * se + 1e-9, "est={est} se={se}");
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let spec = GaussianSpec::isotropic(1.0, 1.0, 1.0, 4).unwrap();
        let a = mc_expected_cosine(&spec, 70_000, 11).unwrap();
        let b = mc_expected_cosine(&spec, 70_000, 11).unwrap();
        assert_eq!(a, b);
        let c = mc_expected_cosine(&spec, 70_000, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn mc_stderr_scales_as_inverse_sqrt_n() {
        let spec = GaussianSpec::isotropic(1.0, 1.0, 1.0, 2).unwrap();
        let (_, se_n) = mc_expected_cosine(&spec, 50_000, 5).unwrap();
        let (_, se_4n) = mc_expected_cosine(&spec, 200_000, 5).unwrap();
        let ratio = se_n / se_4n;
        assert!((1.8..=2.2).contains(&ratio), "ratio={ratio}");
    }

    #[test]
    fn mc_rejects_tiny_sample_budget() {
        let spec = GaussianSpec::isotropic(1.0, 1.0, 1.0, 2).unwrap();
        assert!(mc_expected_cosine(&spec, 999, 0).is_err());
    }

    #[test]
    fn quadrature_special_cases() {
        let zero = GaussianSpec::isotropic(0.0, 1.0, 1.0, 2).unwrap();
        assert!(quadrature_expected_cosine(&zero).unwrap().abs() < 1e-8);
        // tight case: no perpendicular variance matches the closed form
        for &(mu, sigma) in &[(0.5, 1.0), (1.0, 1.0), (2.0, 0.7)] {
            let spec = GaussianSpec::isotropic(mu, sigma, 0.0, 2).unwrap();
            let q = quadrature_expected_cosine(&spec).unwrap();
            let gap = 2.0 * phi(mu / sigma) - 1.0;
            assert!((q - gap * gap).abs() < 1e-6, "mu={mu} sigma={sigma}: {q}");
        }
        let d3 = GaussianSpec::isotropic(1.0, 1.0, 1.0, 3).unwrap();
        assert!(quadrature_expected_cosine(&d3).is_err());
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo() {
        // cross-oracle consistency on a 5-point grid
        let cases = [
            (0.5, 1.0, 0.5),
            (1.0, 1.0, 1.0),
            (1.0, 0.5, 2.0),
            (2.0, 1.0, 0.25),
            (3.0, 2.0, 1.0),
        ];
        for (i, &(mu, sigma, svs)) in cases.iter().enumerate() {
            let spec = GaussianSpec::isotropic(mu, sigma, svs, 2).unwrap();
            let q = quadrature_expected_cosine(&spec).unwrap();
            let (est, se) = mc_expected_cosine(&spec, 200_000, 100 + i as u64).unwrap();
            assert!(
                (est - q).abs() <= 3.0 * se,
                "case {i}: mc={est} quad={q} se={se}"
            );
        }
    }

    #[test]
    fn bounds_depend_only_on_perpendicular_trace() {
        let iso = GaussianSpec::isotropic(1.0, 1.0, 2.0, 4).unwrap();
        let aniso = GaussianSpec {
            mu: 1.0,
            sigma: 1.0,
            sigma_v_sq: 2.0,
            dim: 4,
            perp_profile: vec![1.5, 0.5, 0.0],
        };
        aniso.validate().unwrap();
        let (e1, s1) = mc_expected_cosine(&iso, 150_000, 21).unwrap();
        let (e2, s2) = mc_expected_cosine(&aniso, 150_000, 22).unwrap();
        // both estimates obey the same trace-only bounds
        let upper = theorem1_upper(1.0, 1.0);
        let (lower, _) = best_lower(1.0, 1.0, 2.0, &default_epsilon_grid()).unwrap();
        for (e, s) in [(e1, s1), (e2, s2)] {
            assert!(e <= upper + 3.0 * s && e >= lower - 3.0 * s, "e={e} s={s}");
        }
    }

    #[test]
    fn verify_theorem1_small_grid() {
        let mut specs = Vec::new();
        for &mu in &[0.0, 1.0, 2.0] {
            for &svs in &[0.0, 1.0] {
                specs.push(GaussianSpec::isotropic(mu, 1.0, svs, 2).unwrap());
            }
        }
        let reports = verify_theorem1(&specs, 60_000, 9).unwrap();
        assert_eq!(reports.len(), specs.len());
        for r in &reports {
            assert_eq!(r.verdict, Verdict::BoundsHold, "mu={} svs={}", r.spec.mu, r.spec.sigma_v_sq);
            assert!(r.stderr >= 0.0 && r.lower <= r.upper + 1e-15);
        }
        assert!(mu_monotonicity_ok(&reports));
    }

    #[test]
    fn large_mean_drives_cosine_toward_one() {
        let spec = GaussianSpec::isotropic(10.0, 1.0, 0.0, 2).unwrap();
        let (est, _) = mc_expected_cosine(&spec, 20_000, 2).unwrap();
        assert!(est > 0.99, "est={est}");
        assert!(theorem1_lower(10.0, 1.0, 0.0, 0.1).unwrap() > 0.99);
    }

    #[test]
    fn monotonicity_detects_corruption() {
        let specs = vec![
            GaussianSpec::isotropic(0.5, 1.0, 0.0, 2).unwrap(),
            GaussianSpec::isotropic(2.0, 1.0, 0.0, 2).unwrap(),
        ];
        let mut reports = verify_theorem1(&specs, 50_000, 4).unwrap();
        assert!(mu_monotonicity_ok(&reports));
        // swap the estimates: a decreasing slice must be flagged
        let tmp = reports[0].estimate;
        reports[0].estimate = reports[1].estimate;
        reports[1].estimate = tmp;
        assert!(!mu_monotonicity_ok(&reports));
    }
}
