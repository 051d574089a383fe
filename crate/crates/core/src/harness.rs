//! Repeated-trial Monte Carlo experiments: efficiency against the
//! Cramér–Rao bound, averaging sweeps, technique comparisons and
//! signal-to-noise figures.
//!
//! Trial `k` draws everything from stream `k` of the configured master seed,
//! so results do not depend on how trials are scheduled across threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    analyze_waveform, estimate_g_histfit, fit_cw, Binning, EnvelopeSource, Method, MomentSums,
    WaveformHint,
};
use crate::fit::{fit_gaussian, FitOptions};
use crate::model::{fisher_exact, ModelParams, Technique};
use crate::optics::{crb_omega, cw_intensity_at, intensity_at, map_to_model, OpticsScenario, Port};
use crate::sampler::{
    apply_noise_with, clean_waveform, draw_events, time_grid, EventBatch, NoiseSpec, RngSpec,
    WaveformTrace,
};

/// Largest fraction of trials that may be excluded before a run fails.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;

/// Reference-region noise below this fraction of the peak counts as none.
pub const SNR_NOISE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setup {
    /// Abstract model; estimates are of `g`.
    Model(ModelParams),
    /// Half-wave-plate experiment; estimates are of `ω₀`. Event mode runs
    /// the mapped model with `n_photons` events per pulse.
    Optics {
        optics: OpticsScenario,
        n_photons: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Sample individual meter readings.
    #[default]
    Event,
    /// Synthesize and fit detector intensity traces.
    Waveform,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Event => "event",
            Mode::Waveform => "waveform",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "event" | "events" => Ok(Mode::Event),
            "waveform" => Ok(Mode::Waveform),
            _ => Err(Error::Configuration(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub setup: Setup,
    pub techniques: Vec<Technique>,
    /// Number of trials `M`.
    pub trials: usize,
    /// Pulses `a` pooled into each estimate.
    pub averages: usize,
    pub noise: NoiseSpec,
    /// Master seed; the stream id is replaced by the trial index.
    pub rng: RngSpec,
    pub mode: Mode,
    pub method: Method,
    pub envelope: EnvelopeSource,
}

impl TrialConfig {
    pub fn new(setup: Setup, techniques: Vec<Technique>, trials: usize, seed: u64) -> Self {
        TrialConfig {
            setup,
            techniques,
            trials,
            averages: 1,
            noise: NoiseSpec::default(),
            rng: RngSpec::new(seed, 0),
            mode: Mode::Event,
            method: Method::Moments,
            envelope: EnvelopeSource::FitSum,
        }
    }

    pub fn with_averages(mut self, a: usize) -> Self {
        self.averages = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::Configuration("need at least 2 trials".into()));
        }
        if self.averages < 1 {
            return Err(Error::Configuration("averages must be at least 1".into()));
        }
        if self.techniques.is_empty() {
            return Err(Error::Configuration("no techniques selected".into()));
        }
        self.noise.validate()?;
        match self.setup {
            Setup::Model(p) => p.validate()?,
            Setup::Optics { optics, n_photons } => {
                optics.validate()?;
                if !(n_photons >= 1.0 && n_photons.is_finite()) {
                    return Err(Error::Configuration(format!(
                        "n_photons {n_photons} must be at least 1"
                    )));
                }
            }
        }
        for &t in &self.techniques {
            match (self.mode, t) {
                (_, Technique::CwBalanced) => {
                    return Err(Error::Configuration(
                        "continuous-wave detection is analyzed with the SNR tools, not trials"
                            .into(),
                    ))
                }
                (Mode::Waveform, Technique::Abwv) => {}
                (Mode::Waveform, other) => {
                    return Err(Error::Configuration(format!(
                        "waveform mode supports only ABWV, not {other}"
                    )))
                }
                (Mode::Event, _) => {}
            }
        }
        if self.mode == Mode::Waveform && !matches!(self.setup, Setup::Optics { .. }) {
            return Err(Error::Configuration(
                "waveform mode needs an optics setup".into(),
            ));
        }
        if self.method == Method::HistFit && self.mode == Mode::Event {
            if let Some(t) = self.techniques.iter().find(|&&t| t != Technique::Abwv) {
                return Err(Error::Configuration(format!(
                    "histogram fitting applies to ABWV only, not {t}"
                )));
            }
        }
        Ok(())
    }

    /// Model parameters for one pulse, after the configured drifts.
    fn model_at(&self, base: &ModelParams, pulse: u64) -> ModelParams {
        let k = pulse as f64;
        ModelParams {
            g: base.g + self.noise.coupling_drift_rate * k,
            epsilon: base.epsilon + self.noise.epsilon_drift_rate * k,
            ..*base
        }
    }

    /// Optical scenario for one pulse, with drifts expressed through
    /// `ε = 4φ` and `g = 2ω₀`.
    fn optics_at(&self, base: &OpticsScenario, pulse: u64) -> OpticsScenario {
        let k = pulse as f64;
        OpticsScenario {
            phi: base.phi + self.noise.epsilon_drift_rate * k / 4.0,
            omega0: base.omega0 + self.noise.coupling_drift_rate * k / 2.0,
            ..*base
        }
    }

    fn has_drift(&self) -> bool {
        self.noise.epsilon_drift_rate != 0.0 || self.noise.coupling_drift_rate != 0.0
    }
}

/// Which quantity a run estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    G,
    Omega0,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::G => "g",
            Target::Omega0 => "omega0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechniqueStats {
    pub technique: Technique,
    pub truth: f64,
    pub mean: f64,
    /// Sample standard deviation across included trials (divisor `M − 1`).
    pub std: f64,
    pub bias: f64,
    /// The technique's own bound for the pooled budget `a·N`.
    pub crb: f64,
    pub ratio_to_crb: f64,
    pub snr: Option<f64>,
    /// Detected over prepared events, pooled over included trials.
    pub events_used_fraction: f64,
    pub prepared_events: u64,
    pub detected_events: u64,
    pub included: usize,
    pub excluded: usize,
    /// Message of the last excluded trial.
    pub last_exclusion: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialStatistics {
    pub target: Target,
    pub trials: usize,
    pub averages: usize,
    pub per_technique: Vec<TechniqueStats>,
}

impl TrialStatistics {
    pub fn get(&self, technique: Technique) -> Option<&TechniqueStats> {
        self.per_technique.iter().find(|s| s.technique == technique)
    }
}

/// Per-technique seed offset so techniques compared in one run use
/// independent random numbers. ABWV keeps the master seed unchanged.
fn seed_salt(technique: Technique) -> u64 {
    match technique {
        Technique::Abwv => 0,
        Technique::Wva => 0x9e37_79b9_7f4a_7c15,
        Technique::Standard => 0xc2b2_ae3d_27d4_eb4f,
        Technique::CwBalanced => 0x1656_67b1_9e37_79f9,
    }
}

struct TrialOutcome {
    estimate: f64,
    prepared: u64,
    detected: u64,
    snr: Option<f64>,
}

fn is_exclusion(err: &Error) -> bool {
    matches!(
        err,
        Error::Singular(_) | Error::InsufficientData(_) | Error::FitFailure(_) | Error::Numeric(_)
    )
}

fn event_trial(
    config: &TrialConfig,
    technique: Technique,
    base: &ModelParams,
    trial: u64,
    scale: f64,
) -> Result<TrialOutcome> {
    let spec = RngSpec::new(
        config.rng.master_seed.wrapping_add(seed_salt(technique)),
        trial,
    );
    let mut rng = spec.rng();
    let a = config.averages as u64;
    let first = trial * a;

    if config.method == Method::HistFit {
        let mut batch = EventBatch::empty(technique, *base, spec);
        for p in 0..a {
            let params = config.model_at(base, first + p);
            draw_events(
                technique,
                &params,
                config.noise.count_mode,
                &mut rng,
                &mut batch,
            )?;
        }
        let report = estimate_g_histfit(&batch, &Binning::default())?;
        return Ok(TrialOutcome {
            estimate: report.g_hat * scale,
            prepared: batch.prepared,
            detected: batch.detected() as u64,
            snr: None,
        });
    }

    let mut sums = MomentSums::default();
    for p in 0..a {
        let params = config.model_at(base, first + p);
        draw_events(
            technique,
            &params,
            config.noise.count_mode,
            &mut rng,
            &mut sums,
        )?;
    }
    let report = match technique {
        Technique::Abwv => sums.abwv()?,
        Technique::Wva => sums.wva(base.epsilon, base.sigma)?,
        Technique::Standard => sums.standard(base.sigma)?,
        Technique::CwBalanced => unreachable!("rejected by validate"),
    };
    Ok(TrialOutcome {
        estimate: report.g_hat * scale,
        prepared: sums.prepared,
        detected: sums.detected(),
        snr: None,
    })
}

/// Pointwise mean of `a` noisy pulses.
fn averaged_trace(
    config: &TrialConfig,
    base: &OpticsScenario,
    trial: u64,
) -> Result<WaveformTrace> {
    let spec = RngSpec::new(
        config
            .rng
            .master_seed
            .wrapping_add(seed_salt(Technique::Abwv)),
        trial,
    );
    let mut rng = spec.rng();
    let a = config.averages as u64;
    let first = trial * a;
    let clean = clean_waveform(Technique::Abwv, base)?;
    let mut acc = WaveformTrace {
        i1: vec![0.0; clean.len()],
        i2: vec![0.0; clean.len()],
        ..clean.clone()
    };
    for p in 0..a {
        let mut pulse = if config.has_drift() {
            clean_waveform(Technique::Abwv, &config.optics_at(base, first + p))?
        } else {
            clean.clone()
        };
        apply_noise_with(&mut pulse, &config.noise, &mut rng);
        for k in 0..acc.len() {
            acc.i1[k] += pulse.i1[k];
            acc.i2[k] += pulse.i2[k];
        }
    }
    let inv = 1.0 / a as f64;
    for k in 0..acc.len() {
        acc.i1[k] *= inv;
        acc.i2[k] *= inv;
    }
    Ok(acc)
}

fn waveform_trial(config: &TrialConfig, base: &OpticsScenario, trial: u64) -> Result<TrialOutcome> {
    let trace = averaged_trace(config, base, trial)?;
    let hint = WaveformHint {
        tau: base.tau,
        i0: base.i0,
        envelope: config.envelope,
    };
    let est = analyze_waveform(&trace, &hint)?;
    let snr = if config.noise.per_detector_std > 0.0 {
        compute_snr(&trace, 3.0 * base.tau).ok()
    } else {
        None
    };
    Ok(TrialOutcome {
        estimate: est.omega0_hat,
        prepared: 0,
        detected: 0,
        snr,
    })
}

/// Bound on the standard deviation of the estimate for the pooled budget.
fn own_crb(technique: Technique, params: &ModelParams, averages: usize) -> Result<f64> {
    let pooled = params.with_events(params.n_events * averages as f64);
    let f = fisher_exact(technique, &pooled)?.f_total;
    if !(f > 0.0) {
        return Err(Error::Singular(format!(
            "{technique} carries no information about g"
        )));
    }
    Ok(1.0 / f.sqrt())
}

/// Runs `M` independent trials per technique and aggregates the estimates.
///
/// Trials whose estimator hits a singular or data-starved case are excluded
/// and counted; more than 10% exclusions for any technique is an error.
pub fn run_trials(config: &TrialConfig) -> Result<TrialStatistics> {
    config.validate()?;
    let (target, model, scale, truth) = match config.setup {
        Setup::Model(p) => (Target::G, p, 1.0, p.g),
        Setup::Optics { optics, n_photons } => (
            Target::Omega0,
            map_to_model(&optics, n_photons)?,
            0.5,
            optics.omega0,
        ),
    };

    let mut per_technique = Vec::with_capacity(config.techniques.len());
    for &technique in &config.techniques {
        let outcomes: Vec<Result<TrialOutcome>> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| match (config.mode, config.setup) {
                (Mode::Waveform, Setup::Optics { optics, .. }) => {
                    waveform_trial(config, &optics, trial)
                }
                _ => event_trial(config, technique, &model, trial, scale),
            })
            .collect();

        let mut estimates = Vec::with_capacity(outcomes.len());
        let (mut prepared, mut detected) = (0u64, 0u64);
        let mut snrs = Vec::new();
        let mut excluded = 0;
        let mut last_exclusion = None;
        for outcome in outcomes {
            match outcome {
                Ok(o) => {
                    estimates.push(o.estimate);
                    prepared += o.prepared;
                    detected += o.detected;
                    snrs.extend(o.snr);
                }
                Err(e) if is_exclusion(&e) => {
                    excluded += 1;
                    last_exclusion = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        if excluded as f64 > MAX_EXCLUDED_FRACTION * config.trials as f64 {
            return Err(Error::TooManyExclusions {
                excluded,
                trials: config.trials,
                cause: last_exclusion.unwrap_or_default(),
            });
        }
        if estimates.len() < 2 {
            return Err(Error::InsufficientData(
                "fewer than 2 trials survived".into(),
            ));
        }

        let (mean, std) = mean_std(&estimates);
        let crb = match config.setup {
            Setup::Optics { optics, n_photons } if config.mode == Mode::Waveform => crb_omega(
                &OpticsScenario {
                    averages: config.averages,
                    ..optics
                },
                n_photons,
            )?,
            _ => own_crb(technique, &model, config.averages)? * scale,
        };
        let snr = (!snrs.is_empty()).then(|| snrs.iter().sum::<f64>() / snrs.len() as f64);
        per_technique.push(TechniqueStats {
            technique,
            truth,
            mean,
            std,
            bias: mean - truth,
            crb,
            ratio_to_crb: std / crb,
            snr,
            events_used_fraction: if prepared > 0 {
                detected as f64 / prepared as f64
            } else {
                1.0
            },
            prepared_events: prepared,
            detected_events: detected,
            included: estimates.len(),
            excluded,
            last_exclusion,
        });
    }
    Ok(TrialStatistics {
        target,
        trials: config.trials,
        averages: config.averages,
        per_technique,
    })
}

/// Mean and sample standard deviation (divisor `n − 1`), summed in order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Ordinary least-squares line with standard errors from the residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::InsufficientData(format!(
            "line fit needs at least 3 points, have {n}"
        )));
    }
    let nf = n as f64;
    let xm = x.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Singular("line fit needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let s2 = rss / (nf - 2.0);
    Ok(LineFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / nf + xm * xm / sxx)).sqrt(),
    })
}

/// Weighted least-squares line through points with known standard errors
/// `se`. The parameter errors come from those, not from the residuals.
pub fn fit_line_weighted(x: &[f64], y: &[f64], se: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n != se.len() || n < 2 {
        return Err(Error::InsufficientData(format!(
            "weighted line fit needs at least 2 points, have {n}"
        )));
    }
    if se.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Singular("standard errors must be positive".into()));
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        let w = 1.0 / (se[k] * se[k]);
        sw += w;
        sx += w * x[k];
        sy += w * y[k];
        sxx += w * x[k] * x[k];
        sxy += w * x[k] * y[k];
    }
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::Singular("line fit needs distinct abscissae".into()));
    }
    Ok(LineFit {
        slope: (sw * sxy - sx * sy) / det,
        intercept: (sxx * sy - sx * sxy) / det,
        slope_se: (sw / det).sqrt(),
        intercept_se: (sxx / det).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Name of the swept variable.
    pub variable: &'static str,
    pub rows: Vec<(f64, TrialStatistics)>,
    /// Per technique: `log std` against `log a` for averaging sweeps, mean
    /// estimate against truth for response sweeps (weighted by the standard
    /// error of each mean). `None` with fewer than three rows.
    pub fits: Vec<(Technique, Option<LineFit>)>,
}

impl SweepResult {
    pub fn fit(&self, technique: Technique) -> Option<LineFit> {
        self.fits
            .iter()
            .find(|(t, _)| *t == technique)
            .and_then(|(_, f)| *f)
    }
}

/// Repeats [`run_trials`] for each averaging count and fits the scaling of
/// the standard deviation on log–log axes.
pub fn sweep_averaging(config: &TrialConfig, a_list: &[usize]) -> Result<SweepResult> {
    let mut distinct = a_list.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Configuration(
            "averaging sweep needs at least 3 distinct values".into(),
        ));
    }
    let mut rows = Vec::with_capacity(a_list.len());
    for &a in a_list {
        let stats = run_trials(&config.clone().with_averages(a))?;
        rows.push((a as f64, stats));
    }
    let fits = config
        .techniques
        .iter()
        .map(|&t| {
            let x: Vec<f64> = rows.iter().map(|(a, _)| a.ln()).collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|(_, s)| s.get(t).map_or(f64::NAN, |s| s.std.ln()))
                .collect();
            (t, fit_line(&x, &y).ok())
        })
        .collect();
    Ok(SweepResult {
        variable: "a",
        rows,
        fits,
    })
}

/// [`run_trials`] over ABWV, WVA and the standard technique on a shared
/// budget.
pub fn compare_techniques(config: &TrialConfig) -> Result<TrialStatistics> {
    for needed in [Technique::Abwv, Technique::Wva, Technique::Standard] {
        if !config.techniques.contains(&needed) {
            return Err(Error::Configuration(format!(
                "technique comparison needs {needed}"
            )));
        }
    }
    run_trials(config)
}

/// Estimates of `ω₀` against the true value across `omega_list`.
pub fn linear_response_sweep(
    optics_base: &OpticsScenario,
    omega_list: &[f64],
    config: &TrialConfig,
) -> Result<SweepResult> {
    let n_photons = match config.setup {
        Setup::Optics { n_photons, .. } => n_photons,
        Setup::Model(p) => p.n_events,
    };
    if omega_list.is_empty() {
        return Err(Error::Configuration("empty omega list".into()));
    }
    let mut rows = Vec::with_capacity(omega_list.len());
    for &w in omega_list {
        let optics = optics_base.with_omega0(w);
        let mapped = map_to_model(&optics, n_photons)?;
        let regime = crate::model::regime_check(&mapped)?;
        if regime.regime != crate::model::Regime::Weak {
            return Err(Error::Configuration(format!(
                "omega0 = {w:e} is outside the weak regime (ratio {:.3e})",
                regime.validity_ratio
            )));
        }
        let run = TrialConfig {
            setup: Setup::Optics { optics, n_photons },
            ..config.clone()
        };
        rows.push((w, run_trials(&run)?));
    }
    let fits = config
        .techniques
        .iter()
        .map(|&t| {
            let x: Vec<f64> = rows.iter().map(|(w, _)| *w).collect();
            let stats: Vec<_> = rows.iter().filter_map(|(_, s)| s.get(t)).collect();
            let y: Vec<f64> = stats.iter().map(|s| s.mean).collect();
            let se: Vec<f64> = stats
                .iter()
                .map(|s| s.std / (s.included as f64).sqrt())
                .collect();
            let fit = if rows.len() < 3 {
                None
            } else if se.iter().all(|&e| e > 0.0) {
                fit_line_weighted(&x, &y, &se).ok()
            } else {
                fit_line(&x, &y).ok()
            };
            (t, fit)
        })
        .collect();
    Ok(SweepResult {
        variable: "omega0",
        rows,
        fits,
    })
}

/// `max|i2 − i1|` divided by the noise level of the difference channel.
///
/// The noise level is the sample standard deviation, over `|t| > exclude`, of
/// the residuals left after subtracting a Gaussian fitted to the difference
/// pulse. Without the subtraction the pulse tail would count as noise.
pub fn compute_snr(trace: &WaveformTrace, exclude: f64) -> Result<f64> {
    let diff = trace.difference();
    let peak = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let fitted = fit_gaussian(&trace.t, &diff, None, &FitOptions::default())
        .ok()
        .filter(|f| f.converged);
    let residuals: Vec<f64> = trace
        .t
        .iter()
        .zip(&diff)
        .filter(|(t, _)| t.abs() > exclude)
        .map(|(&t, &d)| fitted.map_or(d, |f| d - f.eval(t)))
        .collect();
    if residuals.len() < 2 {
        return Err(Error::Configuration(format!(
            "no noise reference samples beyond |t| = {exclude}"
        )));
    }
    let (_, std) = mean_std(&residuals);
    // a noiseless pulse leaves only rounding and model-mismatch residuals
    if !(std > SNR_NOISE_FLOOR * peak) {
        return Err(Error::Numeric(
            "SNR undefined: no noise in the reference region".into(),
        ));
    }
    Ok(peak / std)
}

/// Ratio of the largest pulsed ABWV difference signal to the largest
/// continuous-wave difference signal over `|t| ≤ window`, both noiseless.
pub fn difference_contrast(optics: &OpticsScenario, window: f64) -> Result<f64> {
    optics.validate()?;
    let cw = OpticsScenario {
        phi: 0.0,
        ..*optics
    };
    let limit = window * (1.0 + 1e-12);
    let (mut pulsed, mut balanced) = (0.0f64, 0.0f64);
    for t in time_grid(optics).into_iter().filter(|t| t.abs() <= limit) {
        pulsed = pulsed.max(intensity_at(optics, t, Port::Diff).abs());
        balanced = balanced.max(cw_intensity_at(&cw, t, Port::Diff).abs());
    }
    if !(balanced > 0.0) {
        return Err(Error::Singular("continuous-wave signal vanishes".into()));
    }
    Ok(pulsed / balanced)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrComparison {
    /// Mean over trials of [`compute_snr`] on single noisy pulses.
    pub pulsed: f64,
    /// Mean over trials of the fitted continuous-wave signal
    /// `|4Î₀ω̂₀·window|` over the regression residual standard deviation.
    pub cw: f64,
    pub trials: usize,
}

impl SnrComparison {
    pub fn ratio(&self) -> f64 {
        self.pulsed / self.cw
    }
}

/// Single-shot signal-to-noise of the pulsed ABWV signal against the
/// balanced continuous-wave signal with the same detector noise.
pub fn compare_snr(
    optics: &OpticsScenario,
    noise: &NoiseSpec,
    window: f64,
    trials: usize,
    rng: RngSpec,
) -> Result<SnrComparison> {
    if trials == 0 {
        return Err(Error::Configuration("need at least one trial".into()));
    }
    noise.validate()?;
    let pulsed_clean = clean_waveform(Technique::Abwv, optics)?;
    let cw_optics = OpticsScenario {
        phi: 0.0,
        ..*optics
    };
    let cw_clean = clean_waveform(Technique::CwBalanced, &cw_optics)?;
    let pairs: Vec<Result<(f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let mut stream = rng.with_stream(k).rng();
            let mut p = pulsed_clean.clone();
            apply_noise_with(&mut p, noise, &mut stream);
            let mut c = cw_clean.clone();
            apply_noise_with(&mut c, noise, &mut stream);
            let pulsed = compute_snr(&p, 3.0 * optics.tau)?;
            let fit = fit_cw(&c, window)?;
            if !(fit.residual_std > 0.0) {
                return Err(Error::Numeric("SNR undefined: zero residual noise".into()));
            }
            let signal = (4.0 * fit.i0_hat * fit.omega0_hat * window).abs();
            Ok((pulsed, signal / fit.residual_std))
        })
        .collect();
    let (mut pulsed, mut cw) = (0.0, 0.0);
    for pair in pairs {
        let (p, c) = pair?;
        pulsed += p;
        cw += c;
    }
    Ok(SnrComparison {
        pulsed: pulsed / trials as f64,
        cw: cw / trials as f64,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::crb;
    use crate::sampler::CommonModeSine;

    fn model(g: f64, eps: f64, n: f64) -> ModelParams {
        ModelParams::new(g, eps, 1.0, n).unwrap()
    }

    #[test]
    fn unbiased_at_zero_coupling() {
        let p = model(0.0, 0.05, 1e5);
        let cfg = TrialConfig::new(Setup::Model(p), vec![Technique::Abwv], 100, 2024);
        let s = run_trials(&cfg).unwrap();
        let abwv = s.get(Technique::Abwv).unwrap();
        assert!((abwv.crb - 1.5811388300841897e-3).abs() < 1e-15);
        assert!(abwv.mean.abs() <= 3.0 * abwv.crb / 10.0);
        assert_eq!(abwv.events_used_fraction, 1.0);
        assert_eq!(abwv.included + abwv.excluded, 100);
    }

    #[test]
    fn same_seed_same_statistics() {
        let p = model(1e-3, 0.1, 1e4);
        let cfg = TrialConfig::new(
            Setup::Model(p),
            vec![Technique::Abwv, Technique::Wva, Technique::Standard],
            20,
            5,
        );
        let a = run_trials(&cfg).unwrap();
        let b = run_trials(&cfg).unwrap();
        assert_eq!(a, b);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_trials(&cfg).unwrap());
        assert_eq!(a, serial);
    }

    #[test]
    fn config_errors() {
        let p = model(0.0, 0.1, 10.0);
        let base = TrialConfig::new(Setup::Model(p), vec![Technique::Abwv], 10, 1);
        let one = TrialConfig {
            trials: 1,
            ..base.clone()
        };
        assert!(run_trials(&one).unwrap_err().is_configuration());
        let zero_a = base.clone().with_averages(0);
        assert!(run_trials(&zero_a).unwrap_err().is_configuration());
        let wave = TrialConfig {
            mode: Mode::Waveform,
            ..base.clone()
        };
        assert!(run_trials(&wave).unwrap_err().is_configuration());
        assert!(sweep_averaging(&base, &[1, 2, 2])
            .unwrap_err()
            .is_configuration());
        assert!(compare_techniques(&base).unwrap_err().is_configuration());
    }

    #[test]
    fn singular_trials_are_excluded_then_fatal() {
        // two events per trial: balanced counts are common
        let p = model(0.0, 0.0, 2.0);
        let cfg = TrialConfig::new(Setup::Model(p), vec![Technique::Abwv], 50, 7);
        match run_trials(&cfg) {
            Err(Error::TooManyExclusions {
                excluded, trials, ..
            }) => {
                assert_eq!(trials, 50);
                assert!(excluded > 5);
            }
            other => panic!("expected exclusion error, got {other:?}"),
        }
    }

    #[test]
    fn exclusions_are_counted() {
        // 4 events per trial at ε = 1.2: balanced 2–2 splits are rare
        let p = model(0.0, 1.2, 4.0);
        let cfg = TrialConfig::new(Setup::Model(p), vec![Technique::Abwv], 200, 3);
        let s = run_trials(&cfg).unwrap();
        let st = s.get(Technique::Abwv).unwrap();
        assert_eq!(st.included + st.excluded, 200);
        assert!(st.excluded > 0);
        assert!(st.last_exclusion.is_some());
    }

    #[test]
    fn averaging_first_row_matches_standalone_run() {
        let p = model(1e-3, 0.1, 2e3);
        let cfg = TrialConfig::new(Setup::Model(p), vec![Technique::Abwv], 30, 11);
        let sweep = sweep_averaging(&cfg, &[1, 2, 4]).unwrap();
        let alone = run_trials(&cfg).unwrap();
        assert_eq!(sweep.rows[0].1, alone);
        assert!(sweep.fit(Technique::Abwv).is_some());
    }

    #[test]
    fn epsilon_drift_leaves_abwv_unbiased() {
        let p = model(1e-3, 0.1, 1e4);
        let mut cfg = TrialConfig::new(Setup::Model(p), vec![Technique::Abwv], 200, 19);
        cfg.noise.epsilon_drift_rate = 1e-4;
        let s = run_trials(&cfg.with_averages(4)).unwrap();
        let st = s.get(Technique::Abwv).unwrap();
        assert!(st.bias.abs() <= 3.0 * st.std / (st.included as f64).sqrt());
        assert!(st.ratio_to_crb < 1.2);
    }

    #[test]
    fn coupling_drift_inflates_spread() {
        let p = model(1e-3, 0.1, 1e4);
        let mut cfg = TrialConfig::new(Setup::Model(p), vec![Technique::Abwv], 50, 23);
        cfg.noise.coupling_drift_rate = 1e-5;
        let s = run_trials(&cfg).unwrap();
        let st = s.get(Technique::Abwv).unwrap();
        // spread of the drift alone across 50 trials
        assert!(st.std > 1e-5 * 14.0);
    }

    #[test]
    fn wva_fraction_and_crb() {
        let p = model(0.0, 0.2, 1e4);
        let cfg = TrialConfig::new(Setup::Model(p), vec![Technique::Wva], 20, 8);
        let s = run_trials(&cfg).unwrap();
        let st = s.get(Technique::Wva).unwrap();
        let expected = (0.1f64).sin().powi(2);
        let n = st.prepared_events as f64;
        let sd = (expected * (1.0 - expected) / n).sqrt();
        assert!((st.events_used_fraction - expected).abs() <= 3.0 * sd);
        let f = fisher_exact(Technique::Wva, &p).unwrap().f_total;
        assert!((st.crb - 1.0 / f.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn optics_event_mode_reports_omega() {
        let optics = OpticsScenario::new(4.972e-3, 1e-5, 0.1, 1.0).unwrap();
        let setup = Setup::Optics {
            optics,
            n_photons: 1e5,
        };
        let cfg = TrialConfig::new(setup, vec![Technique::Abwv], 20, 1);
        let s = run_trials(&cfg).unwrap();
        assert_eq!(s.target, Target::Omega0);
        let st = s.get(Technique::Abwv).unwrap();
        assert_eq!(st.truth, 1e-5);
        let mapped = map_to_model(&optics, 1e5).unwrap();
        assert_eq!(st.crb, crb(&mapped).unwrap() / 2.0);
    }

    fn pulse_optics() -> OpticsScenario {
        let mut o = OpticsScenario::new(4.972e-3, 1e-5, 0.1, 1.0).unwrap();
        o.dt = 1e-3;
        o
    }

    #[test]
    fn common_mode_background_cancels() {
        let setup = Setup::Optics {
            optics: pulse_optics(),
            n_photons: 1e6,
        };
        let mut cfg = TrialConfig::new(setup, vec![Technique::Abwv], 5, 77);
        cfg.mode = Mode::Waveform;
        cfg.envelope = EnvelopeSource::Reference;
        cfg.noise.per_detector_std = 1e-3;
        let quiet = run_trials(&cfg).unwrap();
        cfg.noise.common_mode_offset = 0.3;
        cfg.noise.common_mode_sine = CommonModeSine {
            amplitude: 0.05,
            frequency: 50.0,
        };
        let loud = run_trials(&cfg).unwrap();
        let (a, b) = (
            quiet.get(Technique::Abwv).unwrap(),
            loud.get(Technique::Abwv).unwrap(),
        );
        assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs());
    }

    #[test]
    fn snr_examples() {
        let optics = pulse_optics();
        let clean = clean_waveform(Technique::Abwv, &optics).unwrap();
        assert!(matches!(compute_snr(&clean, 0.3), Err(Error::Numeric(_))));

        let snr_at = |s: f64, trials: u64| -> f64 {
            let noise = NoiseSpec {
                per_detector_std: s,
                ..Default::default()
            };
            (0..trials)
                .map(|k| {
                    let mut tr = clean.clone();
                    apply_noise_with(&mut tr, &noise, &mut RngSpec::new(12, k).rng());
                    compute_snr(&tr, 0.3).unwrap()
                })
                .sum::<f64>()
                / trials as f64
        };
        let single = snr_at(4.2e-4, 1);
        let expected = 0.0198867 / (4.2e-4 * 2f64.sqrt());
        assert!(
            (single / expected - 1.0).abs() < 0.1,
            "{single} vs {expected}"
        );
        let ratio = snr_at(4.2e-4, 500) / snr_at(8.4e-4, 500);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn contrast_matches_closed_form() {
        let optics = OpticsScenario::new(4.972e-3, 1e-5, 0.1, 1.0).unwrap();
        let c = difference_contrast(&optics, 0.2).unwrap();
        let exact = (4.0 * 4.972e-3f64).sin() / (8.0 * 1e-5 * 0.1f64).sin();
        assert!((c / exact - 1.0).abs() < 1e-6);
        assert!((exact - 2485.836120950127).abs() < 1e-6);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-14);
        assert!(fit_line(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn linear_response_is_unit_slope() {
        // ε = 0.5 keeps a full decade of ω₀ inside the weak regime
        let optics = OpticsScenario::new(0.125, 0.0, 0.1, 1.0).unwrap();
        let setup = Setup::Optics {
            optics,
            n_photons: 1e5,
        };
        let cfg = TrialConfig::new(setup, vec![Technique::Abwv], 200, 4);
        let omegas = [1.3e-2, 3e-2, 6e-2, 1.3e-1];
        let sweep = linear_response_sweep(&optics, &omegas, &cfg).unwrap();
        let fit = sweep.fit(Technique::Abwv).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.02, "{fit:?}");
        assert!(
            fit.intercept.abs() <= 3.0 * fit.intercept_se.max(1e-12),
            "{fit:?}"
        );

        let zero = linear_response_sweep(&optics, &[0.0], &cfg).unwrap();
        let st = zero.rows[0].1.get(Technique::Abwv).unwrap();
        assert!(st.mean.abs() <= 3.0 * st.std / (st.included as f64).sqrt());
        assert!(zero.fit(Technique::Abwv).is_none());
    }
}
