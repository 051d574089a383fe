//! Estimators for ε, σ and g from detector events, and for the optical
//! rotation parameters from intensity waveforms.

use crate::error::{Error, Result};
use crate::fit::{fit_gaussian, FitGuess, FitOptions, FitResult};
use crate::model::{momentum_sd, DetectorId, Technique};
use crate::sampler::{EventBatch, EventSink, WaveformTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Moments,
    HistFit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Moments => "moments",
            Method::HistFit => "histfit",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "moments" => Ok(Method::Moments),
            "histfit" | "fit" => Ok(Method::HistFit),
            _ => Err(Error::Configuration(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    pub epsilon_hat: f64,
    pub g_hat: f64,
    pub sigma_hat: f64,
    /// `⟨q⟩₊`, the mean of the pooled readings.
    pub mean_q_plus: f64,
    /// `⟨q⟩₋`, the mean of the difference distribution.
    pub mean_q_minus: f64,
    /// Pointer shift the estimate is built from.
    pub shift_hat: f64,
    pub method: Method,
    pub technique: Technique,
    /// Plug-in standard error of `g_hat`, when one is available.
    pub stderr_g: Option<f64>,
}

/// Running sums over events. Enough for every moment estimator, so the
/// harness never has to keep individual readings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentSums {
    pub prepared: u64,
    pub n1: u64,
    pub n2: u64,
    pub sum1: f64,
    pub sum2: f64,
    pub sumsq1: f64,
    pub sumsq2: f64,
}

impl EventSink for MomentSums {
    fn prepared(&mut self, n: u64) {
        self.prepared += n;
    }

    fn record(&mut self, detector: DetectorId, q: f64) {
        match detector {
            DetectorId::Det1 => {
                self.n1 += 1;
                self.sum1 += q;
                self.sumsq1 += q * q;
            }
            DetectorId::Det2 => {
                self.n2 += 1;
                self.sum2 += q;
                self.sumsq2 += q * q;
            }
        }
    }
}

impl MomentSums {
    pub fn from_batch(batch: &EventBatch) -> Self {
        let mut sums = MomentSums {
            prepared: batch.prepared,
            ..Default::default()
        };
        for &q in &batch.q_det1 {
            sums.record(DetectorId::Det1, q);
        }
        for &q in &batch.q_det2 {
            sums.record(DetectorId::Det2, q);
        }
        sums
    }

    pub fn detected(&self) -> u64 {
        self.n1 + self.n2
    }

    pub fn epsilon_hat(&self) -> Result<f64> {
        epsilon_from_counts(self.n1, self.n2)
    }

    /// Pooled sample standard deviation, divisor `n − 1`.
    pub fn sigma_hat(&self) -> Result<f64> {
        let n = self.detected();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "sigma needs at least 2 events, have {n}"
            )));
        }
        let s = self.sum1 + self.sum2;
        let ss = self.sumsq1 + self.sumsq2;
        let var = (ss - s * s / n as f64) / (n - 1) as f64;
        positive_sigma(var.max(0.0).sqrt())
    }

    pub fn g_moments(&self, epsilon_hat: f64, sigma_hat: f64) -> Result<EstimateReport> {
        g_from_moments(
            self.n1,
            self.n2,
            self.sum1,
            self.sum2,
            epsilon_hat,
            sigma_hat,
        )
    }

    /// Fully self-contained ABWV estimate: ε̂ and σ̂ from the same events.
    pub fn abwv(&self) -> Result<EstimateReport> {
        let eps = self.epsilon_hat()?;
        let sigma = self.sigma_hat()?;
        self.g_moments(eps, sigma)
    }

    /// WVA estimate from the postselected port, with known ε and σ.
    pub fn wva(&self, epsilon: f64, sigma: f64) -> Result<EstimateReport> {
        g_wva(self.n2, self.sum2, epsilon, sigma)
    }

    /// Momentum-mean estimate; `sigma` is the position width of the meter.
    pub fn standard(&self, sigma: f64) -> Result<EstimateReport> {
        g_standard(self.n2, self.sum2, sigma)
    }
}

fn positive_sigma(sigma: f64) -> Result<f64> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(sigma)
    } else {
        Err(Error::InsufficientData("readings have zero spread".into()))
    }
}

fn epsilon_from_counts(n1: u64, n2: u64) -> Result<f64> {
    let n = n1 + n2;
    if n == 0 {
        return Err(Error::InsufficientData("no detected events".into()));
    }
    Ok(((n2 as f64 - n1 as f64) / n as f64).asin())
}

fn g_from_moments(
    n1: u64,
    n2: u64,
    sum1: f64,
    sum2: f64,
    epsilon_hat: f64,
    sigma_hat: f64,
) -> Result<EstimateReport> {
    if !(sigma_hat > 0.0) {
        return Err(Error::param("sigma_hat", "must be positive"));
    }
    if n1 == n2 {
        return Err(Error::Singular(format!(
            "equal detector counts ({n1}); the difference mean is undefined"
        )));
    }
    let plus = (sum2 + sum1) / (n2 + n1) as f64;
    let minus = (sum2 - sum1) / (n2 as f64 - n1 as f64);
    let shift = minus - plus;
    let s2 = sigma_hat * sigma_hat;
    let g_hat = shift * epsilon_hat.tan() / (2.0 * s2);
    Ok(EstimateReport {
        epsilon_hat,
        g_hat,
        sigma_hat,
        mean_q_plus: plus,
        mean_q_minus: minus,
        shift_hat: shift,
        method: Method::Moments,
        technique: Technique::Abwv,
        stderr_g: Some(0.5 / ((n1 + n2) as f64).sqrt() / sigma_hat),
    })
}

fn g_wva(n2: u64, sum2: f64, epsilon: f64, sigma: f64) -> Result<EstimateReport> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma_hat", "must be positive"));
    }
    if n2 < 2 {
        return Err(Error::InsufficientData(format!(
            "only {n2} postselected events"
        )));
    }
    let mean = sum2 / n2 as f64;
    let factor = (0.5 * epsilon).tan() / (2.0 * sigma * sigma);
    Ok(EstimateReport {
        epsilon_hat: epsilon,
        g_hat: mean * factor,
        sigma_hat: sigma,
        mean_q_plus: mean,
        mean_q_minus: mean,
        shift_hat: mean,
        method: Method::Moments,
        technique: Technique::Wva,
        stderr_g: Some(sigma / (n2 as f64).sqrt() * factor.abs()),
    })
}

fn g_standard(n: u64, sum: f64, sigma: f64) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::InsufficientData("no momentum readings".into()));
    }
    let mean = sum / n as f64;
    Ok(EstimateReport {
        epsilon_hat: 0.0,
        g_hat: mean,
        sigma_hat: sigma,
        mean_q_plus: mean,
        mean_q_minus: mean,
        shift_hat: mean,
        method: Method::Moments,
        technique: Technique::Standard,
        stderr_g: (sigma > 0.0).then(|| momentum_sd(sigma) / (n as f64).sqrt()),
    })
}

/// `asin((n₂ − n₁)/(n₁ + n₂))`.
pub fn estimate_epsilon(batch: &EventBatch) -> Result<f64> {
    epsilon_from_counts(batch.n1() as u64, batch.n2() as u64)
}

/// Sample standard deviation of the pooled readings, divisor `n − 1`.
pub fn estimate_sigma(batch: &EventBatch) -> Result<f64> {
    let n = batch.detected();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sigma needs at least 2 events, have {n}"
        )));
    }
    let mean = batch.pooled().sum::<f64>() / n as f64;
    let ss: f64 = batch.pooled().map(|q| (q - mean).powi(2)).sum();
    positive_sigma((ss / (n - 1) as f64).sqrt())
}

/// `ĝ = (⟨q⟩₋ − ⟨q⟩₊)·tan ε̂ / (2σ̂²)`.
pub fn estimate_g_moments(
    batch: &EventBatch,
    epsilon_hat: f64,
    sigma_hat: f64,
) -> Result<EstimateReport> {
    let sum1: f64 = batch.q_det1.iter().sum();
    let sum2: f64 = batch.q_det2.iter().sum();
    g_from_moments(
        batch.n1() as u64,
        batch.n2() as u64,
        sum1,
        sum2,
        epsilon_hat,
        sigma_hat,
    )
}

/// How to bin readings for [`build_histograms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// Bins of width `σ̂·width_fraction` on `±half_range·σ̂`, widened to
    /// cover every reading. Edges are symmetric about zero.
    Auto {
        width_fraction: f64,
        half_range: f64,
    },
    /// `bins` bins of width `width` starting at `lo`.
    Explicit { lo: f64, width: f64, bins: usize },
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Auto {
            width_fraction: 1.0 / 20.0,
            half_range: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPair {
    pub edges: Vec<f64>,
    /// Per-bin `n₁ + n₂`.
    pub counts_sum: Vec<u64>,
    /// Per-bin `n₂ − n₁`.
    pub counts_diff: Vec<i64>,
    pub bin_width: f64,
}

impl HistogramPair {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn bins(&self) -> usize {
        self.counts_sum.len()
    }
}

pub fn build_histograms(batch: &EventBatch, binning: &Binning) -> Result<HistogramPair> {
    let (lo, width, bins) = match *binning {
        Binning::Explicit { lo, width, bins } => {
            if bins == 0 {
                return Err(Error::Configuration("binning has zero bins".into()));
            }
            if !(width > 0.0 && width.is_finite() && lo.is_finite()) {
                return Err(Error::Configuration(format!("bad bin width {width}")));
            }
            (lo, width, bins)
        }
        Binning::Auto {
            width_fraction,
            half_range,
        } => {
            if !(width_fraction > 0.0 && half_range > 0.0) {
                return Err(Error::Configuration(
                    "auto binning needs positive width and range".into(),
                ));
            }
            let sigma = estimate_sigma(batch)?;
            let width = sigma * width_fraction;
            let extent = batch
                .pooled()
                .fold(half_range * sigma, |m, q| m.max(q.abs()));
            let per_side = (extent / width).ceil() as usize;
            if per_side == 0 {
                return Err(Error::Configuration("binning has zero bins".into()));
            }
            (-(per_side as f64) * width, width, 2 * per_side)
        }
    };
    let edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
    let hi = edges[bins];
    let mut counts_sum = vec![0u64; bins];
    let mut counts_diff = vec![0i64; bins];
    let mut place = |q: f64, sign: i64| -> Result<()> {
        if !(q >= lo && q <= hi) {
            return Err(Error::Configuration(format!(
                "reading {q} lies outside the binning range [{lo}, {hi}]"
            )));
        }
        let k = (((q - lo) / width) as usize).min(bins - 1);
        counts_sum[k] += 1;
        counts_diff[k] += sign;
        Ok(())
    };
    for &q in &batch.q_det1 {
        place(q, -1)?;
    }
    for &q in &batch.q_det2 {
        place(q, 1)?;
    }
    Ok(HistogramPair {
        edges,
        counts_sum,
        counts_diff,
        bin_width: width,
    })
}

/// `ĝ = c·tan ε̂ / (2σ̂²)` from the fitted center of the difference
/// distribution.
pub fn estimate_g_fit(fit: &FitResult, epsilon_hat: f64, sigma_hat: f64) -> Result<f64> {
    if !fit.converged {
        return Err(Error::FitFailure(format!(
            "fit did not converge after {} iterations",
            fit.iterations
        )));
    }
    if !(sigma_hat > 0.0) {
        return Err(Error::param("sigma_hat", "must be positive"));
    }
    Ok(fit.center * epsilon_hat.tan() / (2.0 * sigma_hat * sigma_hat))
}

/// ABWV estimate from a Gaussian fit to the difference histogram.
pub fn estimate_g_histfit(batch: &EventBatch, binning: &Binning) -> Result<EstimateReport> {
    let eps = estimate_epsilon(batch)?;
    let sigma = estimate_sigma(batch)?;
    let hist = build_histograms(batch, binning)?;
    let x = hist.centers();
    let y: Vec<f64> = hist.counts_diff.iter().map(|&c| c as f64).collect();
    let k = (0..y.len())
        .max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs()))
        .unwrap_or(0);
    let guess = FitGuess {
        amplitude: y[k],
        center: x[k],
        width: sigma,
    };
    let fit = fit_gaussian(&x, &y, Some(guess), &FitOptions::default())?;
    let g_hat = estimate_g_fit(&fit, eps, sigma)?;
    let n = batch.detected() as f64;
    let plus = batch.pooled().sum::<f64>() / n;
    let diff = batch.n2() as f64 - batch.n1() as f64;
    let minus = if diff != 0.0 {
        (batch.q_det2.iter().sum::<f64>() - batch.q_det1.iter().sum::<f64>()) / diff
    } else {
        f64::NAN
    };
    Ok(EstimateReport {
        epsilon_hat: eps,
        g_hat,
        sigma_hat: sigma,
        mean_q_plus: plus,
        mean_q_minus: minus,
        shift_hat: fit.center,
        method: Method::HistFit,
        technique: Technique::Abwv,
        stderr_g: None,
    })
}

/// `ĝ = mean(q₂)·tan(ε/2) / (2σ̂²)` from the WVA postselected port.
pub fn estimate_g_wva(batch: &EventBatch, epsilon: f64, sigma_hat: f64) -> Result<f64> {
    if batch.technique != Technique::Wva {
        return Err(Error::Configuration(format!(
            "WVA estimator applied to a {} batch",
            batch.technique
        )));
    }
    let sum: f64 = batch.q_det2.iter().sum();
    Ok(g_wva(batch.n2() as u64, sum, epsilon, sigma_hat)?.g_hat)
}

/// Sample mean of the momentum readings.
pub fn estimate_g_standard(batch: &EventBatch) -> Result<f64> {
    if batch.technique != Technique::Standard {
        return Err(Error::Configuration(format!(
            "standard estimator applied to a {} batch",
            batch.technique
        )));
    }
    let sum: f64 = batch.q_det2.iter().sum();
    Ok(g_standard(batch.n2() as u64, sum, batch.params_used.sigma)?.g_hat)
}

/// Where [`analyze_waveform`] takes the pulse envelope from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeSource {
    /// Fit the sum channel `i1 + i2`.
    #[default]
    FitSum,
    /// Use the `i0` and `tau` of the hint as a calibrated reference. The
    /// estimate then depends only on the difference channel.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformHint {
    pub tau: f64,
    pub i0: f64,
    pub envelope: EnvelopeSource,
}

impl WaveformHint {
    pub fn new(tau: f64, i0: f64) -> Self {
        WaveformHint {
            tau,
            i0,
            envelope: EnvelopeSource::FitSum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformEstimate {
    pub phi_hat: f64,
    pub delta_t_hat: f64,
    pub omega0_hat: f64,
    pub tau_hat: f64,
    pub i0_hat: f64,
    pub diff_fit: FitResult,
    pub sum_fit: Option<FitResult>,
}

/// Recovers `φ`, the pulse time shift and `ω₀` from a pulsed ABWV trace.
///
/// The difference pulse is fitted for its height and center. With
/// [`EnvelopeSource::FitSum`] the time shift is measured relative to the
/// fitted center of the sum pulse.
pub fn analyze_waveform(trace: &WaveformTrace, hint: &WaveformHint) -> Result<WaveformEstimate> {
    if trace.scenario != Technique::Abwv {
        return Err(Error::Configuration(format!(
            "pulse analysis needs an ABWV trace, got {}",
            trace.scenario
        )));
    }
    if !(hint.tau > 0.0 && hint.i0 > 0.0) {
        return Err(Error::param("hint", "tau and i0 must be positive"));
    }
    let opts = FitOptions::default();
    let diff = trace.difference();
    let k = (0..diff.len())
        .max_by(|&a, &b| diff[a].abs().total_cmp(&diff[b].abs()))
        .ok_or_else(|| Error::InsufficientData("empty trace".into()))?;
    let diff_fit = fit_gaussian(
        &trace.t,
        &diff,
        Some(FitGuess {
            amplitude: diff[k],
            center: trace.t[k],
            width: hint.tau,
        }),
        &opts,
    )?;
    if !diff_fit.converged {
        return Err(Error::FitFailure(
            "difference pulse fit did not converge".into(),
        ));
    }

    let (i0_hat, tau_hat, origin, sum_fit) = match hint.envelope {
        EnvelopeSource::Reference => (hint.i0, hint.tau, 0.0, None),
        EnvelopeSource::FitSum => {
            let sum = trace.sum();
            let fit = fit_gaussian(
                &trace.t,
                &sum,
                Some(FitGuess {
                    amplitude: hint.i0,
                    center: 0.0,
                    width: hint.tau,
                }),
                &opts,
            )?;
            if !fit.converged {
                return Err(Error::FitFailure("sum pulse fit did not converge".into()));
            }
            (fit.amplitude, fit.width, fit.center, Some(fit))
        }
    };

    let ratio = diff_fit.amplitude / i0_hat;
    if !(ratio.abs() <= 1.0) {
        return Err(Error::FitFailure(format!(
            "difference amplitude exceeds the envelope (ratio {ratio})"
        )));
    }
    let phi_hat = ratio.asin() / 4.0;
    let delta_t_hat = diff_fit.center - origin;
    let omega0_hat = delta_t_hat * phi_hat / (tau_hat * tau_hat);
    Ok(WaveformEstimate {
        phi_hat,
        delta_t_hat,
        omega0_hat,
        tau_hat,
        i0_hat,
        diff_fit,
        sum_fit,
    })
}

/// Straight-line fit of the continuous-wave difference signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwFit {
    pub omega0_hat: f64,
    pub slope: f64,
    pub intercept: f64,
    pub i0_hat: f64,
    /// Standard deviation of the regression residuals (divisor `n − 2`).
    pub residual_std: f64,
    pub samples: usize,
    /// `Σ(t − t̄)²` over the window.
    pub sxx: f64,
}

/// Regresses `i2 − i1` on `t` over `|t| ≤ window`; `ω̂₀ = slope/(4Î₀)` with
/// `Î₀` the window mean of `i1 + i2`.
pub fn fit_cw(trace: &WaveformTrace, window: f64) -> Result<CwFit> {
    if trace.scenario != Technique::CwBalanced {
        return Err(Error::Configuration(format!(
            "continuous-wave analysis needs a cw trace, got {}",
            trace.scenario
        )));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::Configuration(format!(
            "window {window} must be positive"
        )));
    }
    let span = trace.t.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if window > span * (1.0 + 1e-12) {
        return Err(Error::Configuration(format!(
            "window {window} s exceeds the trace half-span {span} s"
        )));
    }
    let limit = window * (1.0 + 1e-12);
    let idx: Vec<usize> = (0..trace.len())
        .filter(|&k| trace.t[k].abs() <= limit)
        .collect();
    let n = idx.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "{n} samples in the window"
        )));
    }
    let nf = n as f64;
    let t_mean = idx.iter().map(|&k| trace.t[k]).sum::<f64>() / nf;
    let d = |k: usize| trace.i2[k] - trace.i1[k];
    let d_mean = idx.iter().map(|&k| d(k)).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &k in &idx {
        let dt = trace.t[k] - t_mean;
        sxx += dt * dt;
        sxy += dt * (d(k) - d_mean);
    }
    let slope = sxy / sxx;
    let intercept = d_mean - slope * t_mean;
    let rss: f64 = idx
        .iter()
        .map(|&k| (d(k) - intercept - slope * trace.t[k]).powi(2))
        .sum();
    let i0_hat = idx.iter().map(|&k| trace.i1[k] + trace.i2[k]).sum::<f64>() / nf;
    if !(i0_hat > 0.0) {
        return Err(Error::InsufficientData("no light in the window".into()));
    }
    let omega0_hat = slope / (4.0 * i0_hat);
    if 4.0 * omega0_hat.abs() * window >= 0.1 {
        return Err(Error::Configuration(format!(
            "window {window} s is outside the small-angle regime for omega0 {omega0_hat:e}"
        )));
    }
    Ok(CwFit {
        omega0_hat,
        slope,
        intercept,
        i0_hat,
        residual_std: (rss / (nf - 2.0)).sqrt(),
        samples: n,
        sxx,
    })
}

pub fn estimate_omega_cw(trace: &WaveformTrace, window: f64) -> Result<f64> {
    Ok(fit_cw(trace, window)?.omega0_hat)
}
