//! Run settings: defaults, `key = value` config files and flag overrides.
//!
//! Every key is listed once in [`KEYS`] with its unit and default. A value
//! may carry its unit as a trailing word (`tau = 0.1 s`); a different unit
//! is rejected.

use std::collections::BTreeMap;
use std::path::Path;

use abwv::estimators::{EnvelopeSource, Method};
use abwv::harness::Mode;
use abwv::model::Technique;
use abwv::sampler::CountMode;

use crate::CliError;

pub struct KeySpec {
    pub name: &'static str,
    pub unit: Option<&'static str>,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(
    name: &'static str,
    unit: Option<&'static str>,
    default: &'static str,
    help: &'static str,
) -> KeySpec {
    KeySpec {
        name,
        unit,
        default,
        help,
    }
}

pub const KEYS: &[KeySpec] = &[
    key("g", Some("1/m"), "1e-3", "coupling strength"),
    key("epsilon", Some("rad"), "0.1", "offset phase"),
    key("sigma", Some("m"), "1", "meter width"),
    key("events", Some("counts"), "1e5", "prepared events per pulse"),
    key(
        "technique",
        None,
        "abwv",
        "comma-separated techniques: abwv, wva, standard; compare always adds all three",
    ),
    key("trials", Some("counts"), "100", "trials M"),
    key(
        "averages",
        Some("counts"),
        "1",
        "pulses averaged per estimate; a list for sweeps",
    ),
    key("setup", None, "model", "model or optics"),
    key("mode", None, "event", "event or waveform"),
    key("method", None, "moments", "moments or histfit"),
    key(
        "envelope",
        None,
        "fitsum",
        "pulse envelope source: fitsum or reference",
    ),
    key(
        "sweep",
        None,
        "averages",
        "swept variable: averages or omega0",
    ),
    key(
        "omega_list",
        Some("rad/s"),
        "1e-5",
        "true omega0 values for a response sweep",
    ),
    key(
        "per_detector_std",
        None,
        "0",
        "white noise per detector sample, intensity units",
    ),
    key(
        "common_mode_offset",
        None,
        "0",
        "background added to both detectors",
    ),
    key(
        "common_mode_sine_amplitude",
        None,
        "0",
        "sinusoidal background amplitude",
    ),
    key(
        "common_mode_sine_frequency",
        Some("Hz"),
        "0",
        "sinusoidal background frequency",
    ),
    key(
        "epsilon_drift_rate",
        Some("rad"),
        "0",
        "epsilon drift per pulse",
    ),
    key("coupling_drift_rate", Some("1/m"), "0", "g drift per pulse"),
    key(
        "count_mode",
        None,
        "fixed",
        "events per pulse: fixed or poisson",
    ),
    key("phi", Some("rad"), "4.972e-3", "plate offset angle"),
    key("omega0", Some("rad/s"), "1e-5", "plate angular velocity"),
    key("tau", Some("s"), "0.1", "pulse width"),
    key("i0", None, "1", "peak intensity"),
    key("dt", Some("s"), "auto", "waveform step; auto is tau/100"),
    key("n_photons", Some("counts"), "5.246e5", "photons per pulse"),
    key(
        "window",
        Some("s"),
        "0.2",
        "half-width of the continuous-wave window",
    ),
    key("wavelength", Some("m"), "7.95e-7", "optical wavelength"),
    key(
        "peak_power",
        Some("W"),
        "none",
        "peak pulse power; sets the photon budget",
    ),
    key(
        "seed",
        None,
        "random",
        "master seed; a generated seed is recorded",
    ),
    key(
        "format",
        None,
        "auto",
        "csv or json; auto picks from the --out extension, else json",
    ),
];

pub fn find_key(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetupKind {
    Model,
    Optics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Averages,
    Omega0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Auto,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub g: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub events: f64,
    pub techniques: Vec<Technique>,
    pub trials: usize,
    pub averages: Vec<usize>,
    pub setup: SetupKind,
    pub mode: Mode,
    pub method: Method,
    pub envelope: EnvelopeSource,
    pub sweep: SweepKind,
    pub omega_list: Vec<f64>,
    pub per_detector_std: f64,
    pub common_mode_offset: f64,
    pub common_mode_sine_amplitude: f64,
    pub common_mode_sine_frequency: f64,
    pub epsilon_drift_rate: f64,
    pub coupling_drift_rate: f64,
    pub count_mode: CountMode,
    pub phi: f64,
    pub omega0: f64,
    pub tau: f64,
    pub i0: f64,
    pub dt: Option<f64>,
    pub n_photons: f64,
    pub window: f64,
    pub wavelength: f64,
    pub peak_power: Option<f64>,
    pub seed: Option<u64>,
    pub format: Format,
}

fn parse_float(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v = parse_float(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v < 9.007_199_254_740_992e15 {
        Ok(v as usize)
    } else {
        Err(format!("`{s}` is not a non-negative whole number"))
    }
}

fn parse_list<T>(s: &str, item: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let out: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(item)
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        Err("empty list".into())
    } else {
        Ok(out)
    }
}

fn parse_technique(s: &str) -> Result<Technique, String> {
    s.parse().map_err(|e: abwv::Error| e.to_string())
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

impl Default for Settings {
    fn default() -> Self {
        let mut s = Settings {
            g: 0.0,
            epsilon: 0.0,
            sigma: 0.0,
            events: 0.0,
            techniques: Vec::new(),
            trials: 0,
            averages: Vec::new(),
            setup: SetupKind::Model,
            mode: Mode::Event,
            method: Method::Moments,
            envelope: EnvelopeSource::FitSum,
            sweep: SweepKind::Averages,
            omega_list: Vec::new(),
            per_detector_std: 0.0,
            common_mode_offset: 0.0,
            common_mode_sine_amplitude: 0.0,
            common_mode_sine_frequency: 0.0,
            epsilon_drift_rate: 0.0,
            coupling_drift_rate: 0.0,
            count_mode: CountMode::FixedN,
            phi: 0.0,
            omega0: 0.0,
            tau: 0.0,
            i0: 0.0,
            dt: None,
            n_photons: 0.0,
            window: 0.0,
            wavelength: 0.0,
            peak_power: None,
            seed: None,
            format: Format::Auto,
        };
        for k in KEYS {
            s.set(k.name, k.default).expect("built-in defaults parse");
        }
        s
    }
}

impl Settings {
    /// Sets `key` from its textual value, without unit handling.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let v = v.trim();
        match key {
            "g" => self.g = parse_float(v)?,
            "epsilon" => self.epsilon = parse_float(v)?,
            "sigma" => self.sigma = parse_float(v)?,
            "events" => self.events = parse_float(v)?,
            "technique" => self.techniques = parse_list(v, parse_technique)?,
            "trials" => self.trials = parse_count(v)?,
            "averages" => self.averages = parse_list(v, parse_count)?,
            "setup" => {
                self.setup = match v.to_ascii_lowercase().as_str() {
                    "model" => SetupKind::Model,
                    "optics" => SetupKind::Optics,
                    _ => return Err(format!("unknown setup `{v}`")),
                }
            }
            "mode" => self.mode = v.parse().map_err(|e: abwv::Error| e.to_string())?,
            "method" => self.method = v.parse().map_err(|e: abwv::Error| e.to_string())?,
            "envelope" => {
                self.envelope = match v.to_ascii_lowercase().as_str() {
                    "fitsum" => EnvelopeSource::FitSum,
                    "reference" => EnvelopeSource::Reference,
                    _ => return Err(format!("unknown envelope source `{v}`")),
                }
            }
            "sweep" => {
                self.sweep = match v.to_ascii_lowercase().as_str() {
                    "averages" => SweepKind::Averages,
                    "omega0" => SweepKind::Omega0,
                    _ => return Err(format!("unknown sweep variable `{v}`")),
                }
            }
            "omega_list" => self.omega_list = parse_list(v, parse_float)?,
            "per_detector_std" => self.per_detector_std = parse_float(v)?,
            "common_mode_offset" => self.common_mode_offset = parse_float(v)?,
            "common_mode_sine_amplitude" => self.common_mode_sine_amplitude = parse_float(v)?,
            "common_mode_sine_frequency" => self.common_mode_sine_frequency = parse_float(v)?,
            "epsilon_drift_rate" => self.epsilon_drift_rate = parse_float(v)?,
            "coupling_drift_rate" => self.coupling_drift_rate = parse_float(v)?,
            "count_mode" => {
                self.count_mode = match v.to_ascii_lowercase().as_str() {
                    "fixed" => CountMode::FixedN,
                    "poisson" => CountMode::PoissonN,
                    _ => return Err(format!("unknown count mode `{v}`")),
                }
            }
            "phi" => self.phi = parse_float(v)?,
            "omega0" => self.omega0 = parse_float(v)?,
            "tau" => self.tau = parse_float(v)?,
            "i0" => self.i0 = parse_float(v)?,
            "dt" => {
                self.dt = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_float(v)?)
                }
            }
            "n_photons" => self.n_photons = parse_float(v)?,
            "window" => self.window = parse_float(v)?,
            "wavelength" => self.wavelength = parse_float(v)?,
            "peak_power" => {
                self.peak_power = if v.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse_float(v)?)
                }
            }
            "seed" => {
                self.seed = if v.eq_ignore_ascii_case("random") {
                    None
                } else {
                    Some(
                        v.parse()
                            .map_err(|_| format!("`{v}` is not a seed (0 to 2^64-1)"))?,
                    )
                }
            }
            "format" => {
                self.format = match v.to_ascii_lowercase().as_str() {
                    "auto" => Format::Auto,
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(format!("unknown format `{v}`")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Canonical text of `key`; [`Settings::set`] reads it back exactly.
    pub fn get(&self, key: &str) -> String {
        match key {
            "g" => fmt_float(self.g),
            "epsilon" => fmt_float(self.epsilon),
            "sigma" => fmt_float(self.sigma),
            "events" => fmt_float(self.events),
            "technique" => join(&self.techniques, |t| t.name().to_string()),
            "trials" => self.trials.to_string(),
            "averages" => join(&self.averages, |a| a.to_string()),
            "setup" => match self.setup {
                SetupKind::Model => "model",
                SetupKind::Optics => "optics",
            }
            .into(),
            "mode" => self.mode.name().into(),
            "method" => self.method.name().into(),
            "envelope" => match self.envelope {
                EnvelopeSource::FitSum => "fitsum",
                EnvelopeSource::Reference => "reference",
            }
            .into(),
            "sweep" => match self.sweep {
                SweepKind::Averages => "averages",
                SweepKind::Omega0 => "omega0",
            }
            .into(),
            "omega_list" => join(&self.omega_list, |w| fmt_float(*w)),
            "per_detector_std" => fmt_float(self.per_detector_std),
            "common_mode_offset" => fmt_float(self.common_mode_offset),
            "common_mode_sine_amplitude" => fmt_float(self.common_mode_sine_amplitude),
            "common_mode_sine_frequency" => fmt_float(self.common_mode_sine_frequency),
            "epsilon_drift_rate" => fmt_float(self.epsilon_drift_rate),
            "coupling_drift_rate" => fmt_float(self.coupling_drift_rate),
            "count_mode" => match self.count_mode {
                CountMode::FixedN => "fixed",
                CountMode::PoissonN => "poisson",
            }
            .into(),
            "phi" => fmt_float(self.phi),
            "omega0" => fmt_float(self.omega0),
            "tau" => fmt_float(self.tau),
            "i0" => fmt_float(self.i0),
            "dt" => self.dt.map_or("auto".into(), fmt_float),
            "n_photons" => fmt_float(self.n_photons),
            "window" => fmt_float(self.window),
            "wavelength" => fmt_float(self.wavelength),
            "peak_power" => self.peak_power.map_or("none".into(), fmt_float),
            "seed" => self.seed.map_or("random".into(), |s| s.to_string()),
            "format" => match self.format {
                Format::Auto => "auto",
                Format::Csv => "csv",
                Format::Json => "json",
            }
            .into(),
            _ => String::new(),
        }
    }

    /// Every key with its canonical value, in [`KEYS`] order.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|k| (k.name, self.get(k.name))).collect()
    }

    /// Sets `key` from user text that may end in a unit word.
    pub fn set_with_unit(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let spec = find_key(key).ok_or_else(|| format!("unknown key `{key}`"))?;
        let value = strip_unit(spec, raw)?;
        self.set(key, value)
    }
}

fn strip_unit<'a>(spec: &KeySpec, raw: &'a str) -> Result<&'a str, String> {
    let raw = raw.trim();
    let Some((value, unit)) = raw.rsplit_once(char::is_whitespace) else {
        return Ok(raw);
    };
    let (value, unit) = (value.trim(), unit.trim());
    match spec.unit {
        Some(expected) if expected == unit => Ok(value),
        Some(expected) => Err(format!(
            "unit `{unit}` does not match `{}` (expected `{expected}`)",
            spec.name
        )),
        None => Err(format!("`{}` takes no unit, got `{unit}`", spec.name)),
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(
    text: &str,
    origin: &str,
) -> Result<BTreeMap<String, (usize, String)>, CliError> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(CliError::Config(format!(
                "{origin}:{lineno}: expected `key = value`"
            )));
        };
        let k = k.trim();
        if find_key(k).is_none() {
            return Err(CliError::Config(format!(
                "{origin}:{lineno}: unknown key `{k}`"
            )));
        }
        if out
            .insert(k.to_string(), (lineno, v.trim().to_string()))
            .is_some()
        {
            return Err(CliError::Config(format!(
                "{origin}:{lineno}: `{k}` is set twice"
            )));
        }
    }
    Ok(out)
}

/// Defaults, then the config file, then flags.
pub fn resolve(
    file: Option<&Path>,
    flags: &[(&'static str, String)],
) -> Result<Settings, CliError> {
    let mut settings = Settings::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let origin = path.display().to_string();
        let entries = parse_config_text(&text, &origin)?;
        let mut ordered: Vec<_> = entries.into_iter().collect();
        ordered.sort_by_key(|(_, (line, _))| *line);
        for (k, (lineno, v)) in ordered {
            settings
                .set_with_unit(&k, &v)
                .map_err(|e| CliError::Config(format!("{origin}:{lineno}: {k}: {e}")))?;
        }
    }
    for (k, v) in flags {
        settings
            .set_with_unit(k, v)
            .map_err(|e| CliError::Config(format!("--{}: {e}", k.replace('_', "-"))))?;
    }
    Ok(settings)
}
