//! Seed-reproducible generation of event batches and detector waveforms.
//!
//! Every draw is keyed by an [`RngSpec`]: the master seed selects a ChaCha
//! key and the stream id selects one of its 2⁶⁴ independent streams, so a
//! trial's data do not depend on which thread runs it or in which order.
//!
//! Events are sampled from the exact densities: a Gaussian meter reading
//! followed by a Bernoulli port assignment conditioned on that reading.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{momentum_sd, DetectorId, ModelParams, Technique};
use crate::optics::{cw_intensity_at, intensity_at, OpticsScenario, Port};

/// Generator behind every [`RngSpec`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngSpec {
            master_seed,
            stream_id,
        }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        RngSpec { stream_id, ..self }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    /// Exactly the expected number of events.
    #[default]
    FixedN,
    /// Poisson-distributed event number.
    PoissonN,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommonModeSine {
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
}

/// Noise and drift injected into simulated acquisitions. All magnitudes are
/// non-negative; the default is noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    /// Standard deviation of white Gaussian noise added to each detector
    /// sample, intensity units.
    pub per_detector_std: f64,
    /// Constant added to both detectors.
    pub common_mode_offset: f64,
    /// Sinusoid added to both detectors.
    pub common_mode_sine: CommonModeSine,
    /// Linear drift of `ε` per acquired pulse, radians.
    pub epsilon_drift_rate: f64,
    /// Linear drift of `g` per acquired pulse, inverse meter units.
    pub coupling_drift_rate: f64,
    pub count_mode: CountMode,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let magnitudes = [
            ("per_detector_std", self.per_detector_std),
            ("common_mode_offset", self.common_mode_offset),
            (
                "common_mode_sine.amplitude",
                self.common_mode_sine.amplitude,
            ),
            (
                "common_mode_sine.frequency",
                self.common_mode_sine.frequency,
            ),
            ("epsilon_drift_rate", self.epsilon_drift_rate),
            ("coupling_drift_rate", self.coupling_drift_rate),
        ];
        for (name, value) in magnitudes {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::param(
                    "noise",
                    format!("{name} must be non-negative"),
                ));
            }
        }
        Ok(())
    }

    fn has_detector_noise(&self) -> bool {
        self.per_detector_std > 0.0
    }

    fn has_common_mode(&self) -> bool {
        self.common_mode_offset != 0.0 || self.common_mode_sine.amplitude != 0.0
    }
}

/// Receiver for sampled events. [`EventBatch`] stores them; the harness uses
/// running sums instead so large averaging runs stay in constant memory.
pub trait EventSink {
    /// Called once per pulse with the number of prepared events.
    fn prepared(&mut self, n: u64);
    fn record(&mut self, detector: DetectorId, reading: f64);
}

/// Meter readings from one simulated acquisition. Single-port techniques
/// (WVA, standard) fill only `q_det2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventBatch {
    pub q_det1: Vec<f64>,
    pub q_det2: Vec<f64>,
    pub technique: Technique,
    pub params_used: ModelParams,
    pub rng: RngSpec,
    /// Number of prepared events (before any postselection).
    pub prepared: u64,
}

impl EventBatch {
    pub fn empty(technique: Technique, params: ModelParams, rng: RngSpec) -> Self {
        EventBatch {
            q_det1: Vec::new(),
            q_det2: Vec::new(),
            technique,
            params_used: params,
            rng,
            prepared: 0,
        }
    }

    pub fn n1(&self) -> usize {
        self.q_det1.len()
    }

    pub fn n2(&self) -> usize {
        self.q_det2.len()
    }

    pub fn detected(&self) -> usize {
        self.n1() + self.n2()
    }

    pub fn pooled(&self) -> impl Iterator<Item = f64> + '_ {
        self.q_det1.iter().chain(self.q_det2.iter()).copied()
    }
}

impl EventSink for EventBatch {
    fn prepared(&mut self, n: u64) {
        self.prepared += n;
    }

    fn record(&mut self, detector: DetectorId, reading: f64) {
        match detector {
            DetectorId::Det1 => self.q_det1.push(reading),
            DetectorId::Det2 => self.q_det2.push(reading),
        }
    }
}

pub fn draw_event_count(mode: CountMode, mean_n: f64, rng: &RngSpec) -> Result<u64> {
    draw_count_with(mode, mean_n, &mut rng.rng())
}

pub fn draw_count_with<R: Rng + ?Sized>(mode: CountMode, mean_n: f64, rng: &mut R) -> Result<u64> {
    if !(mean_n >= 0.0 && mean_n.is_finite()) {
        return Err(Error::param("mean_n", "must be non-negative"));
    }
    Ok(match mode {
        CountMode::FixedN => mean_n.round() as u64,
        CountMode::PoissonN if mean_n == 0.0 => 0,
        CountMode::PoissonN => {
            let poisson =
                Poisson::new(mean_n).map_err(|e| Error::param("mean_n", e.to_string()))?;
            poisson.sample(rng) as u64
        }
    })
}

/// One acquisition of `params.n_events` (expected) prepared events.
pub fn sample_events(
    technique: Technique,
    params: &ModelParams,
    noise: &NoiseSpec,
    rng: &RngSpec,
) -> Result<EventBatch> {
    noise.validate()?;
    let mut batch = EventBatch::empty(technique, *params, *rng);
    let mut stream = rng.rng();
    draw_events(technique, params, noise.count_mode, &mut stream, &mut batch)?;
    Ok(batch)
}

/// Draws one pulse worth of events from `rng` into `sink`.
pub fn draw_events<R, S>(
    technique: Technique,
    params: &ModelParams,
    count_mode: CountMode,
    rng: &mut R,
    sink: &mut S,
) -> Result<()>
where
    R: Rng + ?Sized,
    S: EventSink + ?Sized,
{
    params.validate()?;
    let n = draw_count_with(count_mode, params.n_events, rng)?;
    sink.prepared(n);
    let ModelParams {
        g, epsilon, sigma, ..
    } = *params;
    match technique {
        Technique::Abwv => {
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let q = sigma * z;
                let u: f64 = rng.random();
                let p2 = 0.5 * (1.0 + (epsilon + 2.0 * g * q).sin());
                let det = if u < p2 {
                    DetectorId::Det2
                } else {
                    DetectorId::Det1
                };
                sink.record(det, q);
            }
        }
        Technique::Wva => {
            let half = 0.5 * epsilon;
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let q = sigma * z;
                let u: f64 = rng.random();
                let s = (half + g * q).sin();
                if u < s * s {
                    sink.record(DetectorId::Det2, q);
                }
            }
        }
        Technique::Standard => {
            let sd = momentum_sd(sigma);
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                sink.record(DetectorId::Det2, g + sd * z);
            }
        }
        Technique::CwBalanced => {
            return Err(Error::param(
                "technique",
                "continuous-wave detection has no event model",
            ))
        }
    }
    Ok(())
}

/// Time-gridded detector intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformTrace {
    pub t: Vec<f64>,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
    pub dt: f64,
    pub scenario: Technique,
}

impl WaveformTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `i2 − i1`.
    pub fn difference(&self) -> Vec<f64> {
        self.i2.iter().zip(&self.i1).map(|(b, a)| b - a).collect()
    }

    /// `i1 + i2`.
    pub fn sum(&self) -> Vec<f64> {
        self.i1.iter().zip(&self.i2).map(|(a, b)| a + b).collect()
    }
}

/// Uniform grid `kΔt` spanning ±4τ.
pub fn time_grid(optics: &OpticsScenario) -> Vec<f64> {
    let ratio = 4.0 * optics.tau / optics.dt;
    let half = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    } as i64;
    (-half..=half).map(|k| k as f64 * optics.dt).collect()
}

/// Closed-form detector intensities plus noise. `scenario` selects the
/// pulsed ABWV signal or the continuous-wave balanced signal at `φ = 0`.
pub fn synth_waveform(
    scenario: Technique,
    optics: &OpticsScenario,
    noise: &NoiseSpec,
    rng: &RngSpec,
) -> Result<WaveformTrace> {
    noise.validate()?;
    let mut trace = clean_waveform(scenario, optics)?;
    apply_noise_with(&mut trace, noise, &mut rng.rng());
    Ok(trace)
}

/// Noiseless trace; deterministic and independent of any RNG.
pub fn clean_waveform(scenario: Technique, optics: &OpticsScenario) -> Result<WaveformTrace> {
    optics.validate()?;
    let eval: fn(&OpticsScenario, f64, Port) -> f64 = match scenario {
        Technique::Abwv => {
            if optics.dt > optics.tau / 20.0 {
                return Err(Error::Configuration(format!(
                    "waveform step {} s is coarser than tau/20",
                    optics.dt
                )));
            }
            intensity_at
        }
        Technique::CwBalanced => cw_intensity_at,
        other => {
            return Err(Error::Configuration(format!(
                "no waveform model for {other}"
            )))
        }
    };
    let t = time_grid(optics);
    let i1 = t.iter().map(|&x| eval(optics, x, Port::I1)).collect();
    let i2 = t.iter().map(|&x| eval(optics, x, Port::I2)).collect();
    Ok(WaveformTrace {
        t,
        i1,
        i2,
        dt: optics.dt,
        scenario,
    })
}

pub fn apply_noise(trace: &WaveformTrace, noise: &NoiseSpec, rng: &RngSpec) -> WaveformTrace {
    let mut out = trace.clone();
    apply_noise_with(&mut out, noise, &mut rng.rng());
    out
}

/// Adds independent white noise to each detector and the common-mode
/// background to both. Common-mode terms consume no random numbers.
pub fn apply_noise_with<R: Rng + ?Sized>(
    trace: &mut WaveformTrace,
    noise: &NoiseSpec,
    rng: &mut R,
) {
    if noise.has_detector_noise() {
        let s = noise.per_detector_std;
        for k in 0..trace.len() {
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            trace.i1[k] += s * n1;
            trace.i2[k] += s * n2;
        }
    }
    if noise.has_common_mode() {
        let sine = noise.common_mode_sine;
        for k in 0..trace.len() {
            let c = noise.common_mode_offset
                + sine.amplitude * (2.0 * PI * sine.frequency * trace.t[k]).sin();
            trace.i1[k] += c;
            trace.i2[k] += c;
        }
    }
}
