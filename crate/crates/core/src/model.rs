//! Closed-form detection model for almost-balanced weak-value (ABWV)
//! measurements, the weak-value-amplification (WVA) dark port and the
//! standard momentum measurement.
//!
//! A meter prepared in a Gaussian state of standard deviation `σ` couples to a
//! qubit with strength `g`. The qubit is projected onto a basis rotated by the
//! unbalancing phase `ε`, and the meter reading `q` is recorded on one of two
//! detectors. The joint (sub-normalized) densities are
//!
//! ```text
//! P₁(q) = ½ [1 − sin(ε + 2gq)] P(q)
//! P₂(q) = ½ [1 + sin(ε + 2gq)] P(q)
//! ```
//!
//! with `P(q)` the unit-normalized Gaussian. Everything in this module is a
//! pure function of its arguments.
//!
//! [`fisher_numeric`] evaluates Fisher information from [`density`] alone by
//! quadrature and finite differences. It shares no formula with
//! [`fisher_exact`] and is used to check it.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Validity ratio at or below which the weak-interaction approximation is
/// considered to hold.
pub const WEAK_THRESHOLD: f64 = 0.1;
/// Validity ratio above which the interaction is classified as strong.
pub const STRONG_THRESHOLD: f64 = 0.5;

/// Abstract protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Coupling strength, inverse meter units.
    pub g: f64,
    /// Unbalancing phase in radians, inside `(−π/2, π/2)`.
    pub epsilon: f64,
    /// Meter standard deviation, meter units.
    pub sigma: f64,
    /// Expected number of prepared events.
    pub n_events: f64,
}

impl ModelParams {
    pub fn new(g: f64, epsilon: f64, sigma: f64, n_events: f64) -> Result<Self> {
        let params = ModelParams {
            g,
            epsilon,
            sigma,
            n_events,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g.is_finite() {
            return Err(Error::param("g", "must be finite"));
        }
        if !(self.epsilon.abs() < FRAC_PI_2) {
            return Err(Error::param("epsilon", "must lie in (-pi/2, pi/2)"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive and finite"));
        }
        if !(self.n_events >= 1.0 && self.n_events.is_finite()) {
            return Err(Error::param("n_events", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_g(self, g: f64) -> Self {
        ModelParams { g, ..self }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        ModelParams { epsilon, ..self }
    }

    pub fn with_events(self, n_events: f64) -> Self {
        ModelParams { n_events, ..self }
    }
}

/// Detector index. `Det1` carries the `−sin` branch, `Det2` the `+sin` branch
/// (and the dark port for WVA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorId {
    Det1,
    Det2,
}

impl DetectorId {
    pub fn name(self) -> &'static str {
        match self {
            DetectorId::Det1 => "det1",
            DetectorId::Det2 => "det2",
        }
    }
}

/// Measurement technique. Every sampler, estimator and report is tagged with
/// exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    /// Both ports detected, shift read from the difference signal.
    Abwv,
    /// Dark-port postselection.
    Wva,
    /// Direct measurement of the conjugate momentum.
    Standard,
    /// Continuous-wave balanced detection (waveform regime only).
    CwBalanced,
}

impl Technique {
    pub fn name(self) -> &'static str {
        match self {
            Technique::Abwv => "abwv",
            Technique::Wva => "wva",
            Technique::Standard => "standard",
            Technique::CwBalanced => "cw",
        }
    }

    /// Detectors that record events for this technique.
    pub fn ports(self) -> &'static [DetectorId] {
        match self {
            Technique::Abwv => &[DetectorId::Det1, DetectorId::Det2],
            Technique::Wva | Technique::Standard => &[DetectorId::Det2],
            Technique::CwBalanced => &[],
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "abwv" => Ok(Technique::Abwv),
            "wva" => Ok(Technique::Wva),
            "standard" | "std" => Ok(Technique::Standard),
            "cw" | "cwbalanced" | "cw-balanced" => Ok(Technique::CwBalanced),
            other => Err(Error::Configuration(format!("unknown technique `{other}`"))),
        }
    }
}

/// The two weak values `A_w^{1,2} = ∓i cos ε / (1 ∓ sin ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValuePair {
    pub aw1: Complex64,
    pub aw2: Complex64,
}

impl WeakValuePair {
    pub fn product(&self) -> Complex64 {
        self.aw1 * self.aw2
    }
}

/// Fisher information about `g`, split per detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherReport {
    pub f1: f64,
    pub f2: f64,
    pub f_total: f64,
    /// `f_total^(-1/2)`, the smallest achievable standard deviation of an
    /// unbiased estimator of `g`.
    pub crb: f64,
    pub technique: Technique,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Weak,
    Marginal,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeDiagnostics {
    /// `2|g|σ / min{1, |tan ε|}`.
    pub validity_ratio: f64,
    pub regime: Regime,
}

/// Grid and step controls for [`fisher_numeric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Half-width of the integration window in units of the density's
    /// standard deviation. Must be at least 8.
    pub half_width: f64,
    /// Number of trapezoid nodes. Must be odd so the grid can be halved for
    /// the error estimate.
    pub nodes: usize,
    /// Finite-difference step for `∂/∂g`, relative to `max(1, |g|)`.
    pub fd_step: f64,
    /// Largest accepted relative difference between the full and the halved
    /// trapezoid sums.
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            half_width: 8.0,
            nodes: 4001,
            fd_step: 1e-6,
            tolerance: 1e-8,
        }
    }
}

/// Evaluation grid for [`approximation_error`], in units of `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalGrid {
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            half_width: 8.0,
            nodes: 4001,
        }
    }
}

pub(crate) fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sd)
}

/// Standard deviation of the momentum distribution conjugate to a meter of
/// width `sigma`.
pub fn momentum_sd(sigma: f64) -> f64 {
    0.5 / sigma
}

/// Joint density of a reading `x` on `detector`.
///
/// For ABWV this is `P₁` or `P₂`; for WVA the dark-port density
/// `sin²(ε/2 + gq) P(q)` (only `Det2` exists); for the standard technique the
/// normalized momentum Gaussian with mean `g` and standard deviation `1/(2σ)`,
/// in which case `x` is a momentum and `detector` is ignored.
///
/// `½[1 ∓ sin θ]` is evaluated as `sin²(π/4 ∓ …)`/`cos²(…)` so that the
/// density keeps full relative precision next to its zeros.
pub fn density(
    technique: Technique,
    params: &ModelParams,
    detector: DetectorId,
    x: f64,
) -> Result<f64> {
    params.validate()?;
    if !x.is_finite() {
        return Err(Error::Domain(format!("reading {x} is not finite")));
    }
    let ModelParams {
        g, epsilon, sigma, ..
    } = *params;
    match technique {
        Technique::Abwv => {
            let half = FRAC_PI_4 - 0.5 * (epsilon + 2.0 * g * x);
            let branch = match detector {
                DetectorId::Det1 => half.sin(),
                DetectorId::Det2 => half.cos(),
            };
            Ok(branch * branch * gaussian_pdf(x, 0.0, sigma))
        }
        Technique::Wva => {
            if detector == DetectorId::Det1 {
                return Err(Error::UnsupportedPort {
                    technique: "wva",
                    detector: "det1",
                });
            }
            let s = (0.5 * epsilon + g * x).sin();
            Ok(s * s * gaussian_pdf(x, 0.0, sigma))
        }
        Technique::Standard => Ok(gaussian_pdf(x, g, momentum_sd(sigma))),
        Technique::CwBalanced => Err(Error::param(
            "technique",
            "continuous-wave detection has no event density",
        )),
    }
}

/// Expected fraction of prepared events landing on `detector`.
pub fn detector_fraction(
    technique: Technique,
    params: &ModelParams,
    detector: DetectorId,
) -> Result<f64> {
    params.validate()?;
    let gs2 = 2.0 * (params.g * params.sigma).powi(2);
    let damping = (-gs2).exp();
    match technique {
        Technique::Abwv => {
            let det1 = 0.5 * (1.0 - damping * params.epsilon.sin());
            Ok(match detector {
                DetectorId::Det1 => det1,
                DetectorId::Det2 => 1.0 - det1,
            })
        }
        Technique::Wva => {
            if detector == DetectorId::Det1 {
                return Err(Error::UnsupportedPort {
                    technique: "wva",
                    detector: "det1",
                });
            }
            // ½[1 − e^{−2g²σ²} cos ε] without cancellation at small g and ε.
            let half = (0.5 * params.epsilon).sin();
            Ok(0.5 * (-(-gs2).exp_m1() + 2.0 * damping * half * half))
        }
        Technique::Standard => Ok(1.0),
        Technique::CwBalanced => Err(Error::param(
            "technique",
            "continuous-wave detection has no event model",
        )),
    }
}

/// Closed-form Fisher information about `g`.
///
/// Per-detector values use `F_i = N ∫ (∂_g P_i)² / P_i dq` over the joint
/// densities, giving `F₁ = 2Nσ²[1 + (1 − 4g²σ²) e^{−2g²σ²} sin ε]` and the
/// mirror image for `F₂`; their sum is `4Nσ²` for every `g` and `ε`.
/// Single-port techniques report their information in `f2`.
pub fn fisher_exact(technique: Technique, params: &ModelParams) -> Result<FisherReport> {
    params.validate()?;
    let ModelParams {
        g,
        epsilon,
        sigma,
        n_events,
    } = *params;
    let base = 2.0 * n_events * sigma * sigma;
    let gs2 = (g * sigma).powi(2);
    let modulation = (1.0 - 4.0 * gs2) * (-2.0 * gs2).exp();
    let (f1, f2, f_total) = match technique {
        Technique::Abwv => {
            let k = modulation * epsilon.sin();
            (base * (1.0 + k), base * (1.0 - k), 2.0 * base)
        }
        Technique::Wva => {
            let f = base * (1.0 + modulation * epsilon.cos());
            (0.0, f, f)
        }
        Technique::Standard => (0.0, 2.0 * base, 2.0 * base),
        Technique::CwBalanced => {
            return Err(Error::param(
                "technique",
                "continuous-wave detection has no event model",
            ))
        }
    };
    Ok(FisherReport {
        f1,
        f2,
        f_total,
        crb: f_total.sqrt().recip(),
        technique,
    })
}

/// Fisher information computed from [`density`] alone: a central finite
/// difference in `g` and a trapezoid rule over the reading.
///
/// Nodes sitting on a zero of a density (where `(∂P)²/P` is a removable
/// `0/0`) are filled in from their neighbours. The trapezoid sum is repeated
/// on every other node; a relative disagreement above `quad.tolerance` is
/// reported as [`Error::Numeric`].
pub fn fisher_numeric(
    technique: Technique,
    params: &ModelParams,
    quad: &QuadratureSpec,
) -> Result<f64> {
    params.validate()?;
    if !(quad.half_width >= 8.0) {
        return Err(Error::Configuration(
            "quadrature must span at least 8 standard deviations".into(),
        ));
    }
    if quad.nodes < 9 || quad.nodes % 2 == 0 {
        return Err(Error::Configuration(
            "quadrature node count must be odd and at least 9".into(),
        ));
    }
    if !(quad.fd_step > 0.0) {
        return Err(Error::Configuration(
            "finite-difference step must be positive".into(),
        ));
    }
    let (center, scale) = match technique {
        Technique::Standard => (params.g, momentum_sd(params.sigma)),
        Technique::Abwv | Technique::Wva => (0.0, params.sigma),
        Technique::CwBalanced => {
            return Err(Error::param(
                "technique",
                "continuous-wave detection has no event model",
            ))
        }
    };
    let h = quad.fd_step * params.g.abs().max(1.0);
    let lo = center - quad.half_width * scale;
    let step = 2.0 * quad.half_width * scale / (quad.nodes - 1) as f64;
    let up = params.with_g(params.g + h);
    let down = params.with_g(params.g - h);

    let mut fine = 0.0;
    let mut coarse = 0.0;
    for &port in technique.ports() {
        let mut dens = Vec::with_capacity(quad.nodes);
        let mut vals = Vec::with_capacity(quad.nodes);
        for k in 0..quad.nodes {
            let x = lo + step * k as f64;
            let p = density(technique, params, port, x)?;
            let dp = (density(technique, &up, port, x)? - density(technique, &down, port, x)?)
                / (2.0 * h);
            dens.push(p);
            vals.push(dp * dp / p);
        }
        patch_removable_zeros(&dens, &mut vals)?;
        fine += trapezoid(&vals, step);
        let halved: Vec<f64> = vals.iter().step_by(2).copied().collect();
        coarse += trapezoid(&halved, 2.0 * step);
    }
    if !(fine.is_finite() && fine > 0.0) {
        return Err(Error::Numeric(format!(
            "Fisher integral evaluated to {fine}"
        )));
    }
    let rel = ((fine - coarse) / fine).abs();
    if rel > quad.tolerance {
        return Err(Error::Numeric(format!(
            "quadrature not converged: halved-grid disagreement {rel:.3e} exceeds {:.3e}",
            quad.tolerance
        )));
    }
    Ok(params.n_events * fine)
}

fn is_degenerate(dens: &[f64], vals: &[f64], k: usize) -> bool {
    let p = dens[k];
    if p <= 0.0 || !vals[k].is_finite() {
        return true;
    }
    let left = if k > 0 { dens[k - 1] } else { 0.0 };
    let right = dens.get(k + 1).copied().unwrap_or(0.0);
    p < 1e-8 * left.max(right)
}

fn patch_removable_zeros(dens: &[f64], vals: &mut [f64]) -> Result<()> {
    let n = vals.len();
    let bad: Vec<bool> = (0..n).map(|k| is_degenerate(dens, vals, k)).collect();
    if bad.iter().all(|&b| b) {
        return Err(Error::Numeric("density vanishes on the whole grid".into()));
    }
    let ok = |k: usize| !bad[k];
    for k in (0..n).filter(|&k| bad[k]) {
        vals[k] = if k >= 2 && k + 2 < n && ok(k - 2) && ok(k - 1) && ok(k + 1) && ok(k + 2) {
            (-vals[k - 2] + 4.0 * vals[k - 1] + 4.0 * vals[k + 1] - vals[k + 2]) / 6.0
        } else if k >= 1 && k + 1 < n && ok(k - 1) && ok(k + 1) {
            0.5 * (vals[k - 1] + vals[k + 1])
        } else {
            0.0
        };
    }
    Ok(())
}

fn trapezoid(vals: &[f64], step: f64) -> f64 {
    let n = vals.len();
    let inner: f64 = vals[1..n - 1].iter().sum();
    step * (inner + 0.5 * (vals[0] + vals[n - 1]))
}

/// Cramér–Rao bound `1/(2√N σ)` on the standard deviation of `ĝ`.
pub fn crb(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    Ok(0.5 / (params.n_events.sqrt() * params.sigma))
}

/// Weak values of the two projections. Both are purely imaginary and their
/// moduli multiply to one.
pub fn weak_values(epsilon: f64) -> Result<WeakValuePair> {
    if !(epsilon.abs() < FRAC_PI_2) {
        return Err(Error::param("epsilon", "must lie in (-pi/2, pi/2)"));
    }
    // cos ε / (1 ∓ sin ε) = tan(π/4 ± ε/2)
    let m1 = (FRAC_PI_4 + 0.5 * epsilon).tan();
    let m2 = (FRAC_PI_4 - 0.5 * epsilon).tan();
    Ok(WeakValuePair {
        aw1: Complex64::new(0.0, -m1),
        aw2: Complex64::new(0.0, m2),
    })
}

/// Peak displacement predicted by the weak-interaction approximation:
/// `2gσ² cot ε` for ABWV, `2gσ² cot(ε/2)` for WVA, and the momentum shift `g`
/// for the standard technique.
pub fn predicted_shift(technique: Technique, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let ModelParams {
        g, epsilon, sigma, ..
    } = *params;
    let angle = match technique {
        Technique::Abwv => epsilon,
        Technique::Wva => 0.5 * epsilon,
        Technique::Standard => return Ok(g),
        Technique::CwBalanced => {
            return Err(Error::param(
                "technique",
                "no peak shift for continuous-wave detection",
            ))
        }
    };
    if angle == 0.0 {
        return Err(Error::Singular(format!(
            "{technique} shift diverges at epsilon = 0"
        )));
    }
    Ok(2.0 * g * sigma * sigma / angle.tan())
}

pub fn regime_check(params: &ModelParams) -> Result<RegimeDiagnostics> {
    params.validate()?;
    let numerator = 2.0 * params.g.abs() * params.sigma;
    let validity_ratio = if numerator == 0.0 {
        0.0
    } else {
        numerator / params.epsilon.tan().abs().min(1.0)
    };
    let regime = if validity_ratio <= WEAK_THRESHOLD {
        Regime::Weak
    } else if validity_ratio > STRONG_THRESHOLD {
        Regime::Strong
    } else {
        Regime::Marginal
    };
    Ok(RegimeDiagnostics {
        validity_ratio,
        regime,
    })
}

/// Sup-norm error of `sin(ε+2gq)P(q) ≈ sin(ε)P(q − 2gσ²cot ε)` over `grid`,
/// relative to the approximate peak `|sin ε| P(0)`.
pub fn approximation_error(params: &ModelParams, grid: &EvalGrid) -> Result<f64> {
    params.validate()?;
    if !(grid.half_width >= 5.0) || grid.nodes < 2 {
        return Err(Error::Configuration(
            "evaluation grid must span at least 5 standard deviations".into(),
        ));
    }
    let ModelParams {
        g, epsilon, sigma, ..
    } = *params;
    if epsilon == 0.0 {
        return Err(Error::Singular(
            "approximation undefined at epsilon = 0".into(),
        ));
    }
    let shift = 2.0 * g * sigma * sigma / epsilon.tan();
    let peak = epsilon.sin().abs() * gaussian_pdf(0.0, 0.0, sigma);
    let lo = -grid.half_width * sigma;
    let step = 2.0 * grid.half_width * sigma / (grid.nodes - 1) as f64;
    let worst = (0..grid.nodes)
        .map(|k| {
            let q = lo + step * k as f64;
            let exact = (epsilon + 2.0 * g * q).sin() * gaussian_pdf(q, 0.0, sigma);
            let approx = epsilon.sin() * gaussian_pdf(q, shift, sigma);
            (exact - approx).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst / peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(g: f64, epsilon: f64) -> ModelParams {
        ModelParams::new(g, epsilon, 1.0, 1e6).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn density_examples() {
        let p = params(0.0, 0.0);
        let d = density(Technique::Abwv, &p, DetectorId::Det1, 0.0).unwrap();
        assert!(close(d, 0.5 * gaussian_pdf(0.0, 0.0, 1.0), 1e-15));
        assert!(close(d, 0.19947114, 5e-9));

        let p = params(0.05, 0.1);
        let d = density(Technique::Abwv, &p, DetectorId::Det2, 1.0).unwrap();
        assert!(close(d, 0.145_021_443_215_678_8, 1e-15));

        let p = params(0.0, 0.2);
        let d = density(Technique::Wva, &p, DetectorId::Det2, 0.0).unwrap();
        assert!(close(d, 0.003_976_142_446_109_756, 1e-16));

        let p = params(0.05, 0.0);
        let d = density(Technique::Standard, &p, DetectorId::Det1, 0.05).unwrap();
        assert!(close(d, 0.797_884_560_802_865_4, 1e-15));
    }

    #[test]
    fn density_errors() {
        let p = params(0.0, 0.2);
        assert!(matches!(
            density(Technique::Wva, &p, DetectorId::Det1, 0.0),
            Err(Error::UnsupportedPort { .. })
        ));
        assert!(matches!(
            density(Technique::Abwv, &p, DetectorId::Det1, f64::NAN),
            Err(Error::Domain(_))
        ));
        assert!(ModelParams::new(0.0, 0.1, 0.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 0.1, 1.0, 0.5).is_err());
        assert!(ModelParams::new(0.0, FRAC_PI_2, 1.0, 1.0).is_err());
    }

    #[test]
    fn detector_fraction_examples() {
        let f = detector_fraction(Technique::Abwv, &params(0.0, 0.0), DetectorId::Det1).unwrap();
        assert_eq!(f, 0.5);
        let f = detector_fraction(Technique::Abwv, &params(0.0, 0.02), DetectorId::Det1).unwrap();
        assert!(close(f, 0.490_000_666_653_333_5, 1e-15));
        let f = detector_fraction(Technique::Wva, &params(0.0, 0.02), DetectorId::Det2).unwrap();
        assert!(close(f, 9.999_666_671_111_08e-5, 1e-18));
        let f =
            detector_fraction(Technique::Standard, &params(0.3, 0.1), DetectorId::Det2).unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn fisher_exact_examples() {
        for &(g, e) in &[(0.0, 0.0), (0.2, 0.7), (-1.3, -0.4)] {
            let r = fisher_exact(Technique::Abwv, &params(g, e)).unwrap();
            assert_eq!(r.f_total, 4.0e6);
            assert!(close(r.crb, 5.0e-4, 1e-18));
        }
        let r = fisher_exact(Technique::Abwv, &params(0.0, 0.1)).unwrap();
        assert!(close(r.f1, 2_199_666.833_293_656, 1e-6));
        assert!(close(r.f2, 1_800_333.166_706_344, 1e-6));
        let r = fisher_exact(Technique::Wva, &params(0.0, 0.2)).unwrap();
        assert!(close(r.f_total, 3_960_133.155_682_483, 1e-6));
        let r = fisher_exact(Technique::Standard, &params(0.4, 0.2)).unwrap();
        assert_eq!(r.f_total, 4.0e6);
    }

    #[test]
    fn fisher_numeric_examples() {
        let q = QuadratureSpec::default();
        let f = fisher_numeric(Technique::Abwv, &params(0.0, 0.0), &q).unwrap();
        assert!(close(f, 4.0e6, 1.0));
        let f = fisher_numeric(Technique::Abwv, &params(0.3, 0.5), &q).unwrap();
        assert!(((f - 4.0e6) / 4.0e6).abs() < 1e-6);
        let p = params(0.1, 0.3);
        let f = fisher_numeric(Technique::Wva, &p, &q).unwrap();
        let exact = fisher_exact(Technique::Wva, &p).unwrap().f_total;
        assert!(((f - exact) / exact).abs() < 1e-6);
        let p = params(0.05, 0.3);
        let f = fisher_numeric(Technique::Standard, &p, &q).unwrap();
        assert!(((f - 4.0e6) / 4.0e6).abs() < 1e-6);
    }

    #[test]
    fn fisher_numeric_rejects_bad_grids() {
        let p = params(0.0, 0.1);
        let narrow = QuadratureSpec {
            half_width: 4.0,
            ..Default::default()
        };
        assert!(fisher_numeric(Technique::Abwv, &p, &narrow).is_err());
        let coarse = QuadratureSpec {
            nodes: 11,
            ..Default::default()
        };
        assert!(matches!(
            fisher_numeric(Technique::Abwv, &p, &coarse),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn wva_fisher_survives_density_zero_on_a_node() {
        // sin²(ε/2 + gq) vanishes at q = −1.5, which is a grid node.
        let p = params(0.1, 0.3);
        let f = fisher_numeric(Technique::Wva, &p, &QuadratureSpec::default()).unwrap();
        let exact = fisher_exact(Technique::Wva, &p).unwrap().f_total;
        assert!(((f - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn crb_examples() {
        let p = ModelParams::new(0.0, 0.1, 0.5, 4.0).unwrap();
        assert!(close(crb(&p).unwrap(), 0.5, 1e-15));
        assert!(close(crb(&params(0.0, 0.1)).unwrap(), 5.0e-4, 1e-18));
        let p = ModelParams::new(0.0, 0.1, 1.0, 1e5).unwrap();
        assert!(close(crb(&p).unwrap(), 1.581_138_830_084_19e-3, 1e-15));
    }

    #[test]
    fn weak_value_examples() {
        let w = weak_values(0.0).unwrap();
        assert!(close(w.aw1.im, -1.0, 1e-15) && w.aw1.re == 0.0);
        assert!(close(w.aw2.im, 1.0, 1e-15) && w.aw2.re == 0.0);

        let w = weak_values(0.02).unwrap();
        assert!(close(w.aw1.norm(), 1.020_202_700_432_159, 1e-14));
        assert!(close(w.aw2.norm(), 0.980_197_366_245_354, 1e-14));
        // ∓i(1 ± ε) holds to second order: the residual is ε²/2 + O(ε³).
        let e: f64 = 0.02;
        assert!(close(w.aw1.norm(), 1.0 + e + 0.5 * e * e, 1e-5));
        assert!(close(w.aw2.norm(), 1.0 - e + 0.5 * e * e, 1e-5));
        assert!((w.aw2.norm() - (1.0 - e)).abs() <= 2e-4);

        assert!(weak_values(FRAC_PI_2).is_err());
    }

    #[test]
    fn weak_value_product_is_plus_one() {
        for &e in &[0.0, 0.3, -0.3, 1.0, -1.0] {
            let w = weak_values(e).unwrap();
            let p = w.product();
            assert!(
                close(p.re, 1.0, 1e-12) && close(p.im, 0.0, 1e-12),
                "{e}: {p}"
            );
            assert!(close(w.aw1.norm() * w.aw2.norm(), 1.0, 1e-12));
        }
    }

    #[test]
    fn predicted_shift_examples() {
        let p = ModelParams::new(1e-3, 0.1, 1.0, 1.0).unwrap();
        let abwv = predicted_shift(Technique::Abwv, &p).unwrap();
        let wva = predicted_shift(Technique::Wva, &p).unwrap();
        assert!(close(abwv, 0.019_933_288_846_518_48, 1e-15));
        assert!(close(wva, 0.039_966_661_109_788_03, 1e-15));
        assert!(close(wva / abwv, 2.005, 1e-3));
        assert_eq!(
            predicted_shift(Technique::Abwv, &p.with_g(0.0)).unwrap(),
            0.0
        );
        assert_eq!(predicted_shift(Technique::Standard, &p).unwrap(), 1e-3);
        assert!(matches!(
            predicted_shift(Technique::Abwv, &p.with_epsilon(0.0)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn shift_ratio_tends_to_two() {
        let p = ModelParams::new(1e-3, 0.01, 1.0, 1.0).unwrap();
        let ratio = predicted_shift(Technique::Wva, &p).unwrap()
            / predicted_shift(Technique::Abwv, &p).unwrap();
        // cot(ε/2)/cot(ε) = 2(1 + ε²/2 + …)
        assert!(close(ratio, 2.000_050_002_083_418, 1e-12));
        assert!((ratio - 2.0).abs() / 2.0 < 5e-3);
    }

    #[test]
    fn regime_examples() {
        let d = regime_check(&ModelParams::new(1e-4, 0.02, 1.0, 1.0).unwrap()).unwrap();
        assert!(close(d.validity_ratio, 0.009_998_666_631_109_757, 1e-15));
        assert_eq!(d.regime, Regime::Weak);
        let d = regime_check(&ModelParams::new(0.5, 1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(close(d.validity_ratio, 1.0, 1e-15));
        assert_eq!(d.regime, Regime::Strong);
        let d = regime_check(&ModelParams::new(0.0, 0.0, 3.0, 1.0).unwrap()).unwrap();
        assert_eq!(d.validity_ratio, 0.0);
        assert_eq!(d.regime, Regime::Weak);
        let d = regime_check(&ModelParams::new(0.1, 0.5, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(d.regime, Regime::Marginal);
    }

    #[test]
    fn approximation_error_examples() {
        let grid = EvalGrid::default();
        let p = ModelParams::new(0.0, 0.1, 1.0, 1.0).unwrap();
        assert_eq!(approximation_error(&p, &grid).unwrap(), 0.0);

        // validity ratio 2gσ/tan ε at 0.1 and 0.01 for ε = 0.1
        let t = 0.1f64.tan();
        let big = approximation_error(&p.with_g(0.05 * t), &grid).unwrap();
        let small = approximation_error(&p.with_g(0.005 * t), &grid).unwrap();
        assert!(big > small);

        // dense-grid value frozen from an independent evaluation
        let e = approximation_error(&p.with_g(1e-3), &grid).unwrap();
        assert!(close(e, 1.9866e-4, 2e-7), "{e}");
        assert!(e < 0.05);

        assert!(matches!(
            approximation_error(&p.with_epsilon(0.0), &grid),
            Err(Error::Singular(_))
        ));
    }
}
