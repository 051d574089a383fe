//! Subcommand bodies: settings in, [`Report`] out.

use abwv::estimators::{analyze_waveform, WaveformHint};
use abwv::harness::{
    compare_techniques, compute_snr, difference_contrast, linear_response_sweep, run_trials,
    sweep_averaging, Setup, SweepResult, TrialConfig, TrialStatistics,
};
use abwv::model::{
    crb, fisher_exact, fisher_numeric, regime_check, ModelParams, QuadratureSpec, Technique,
};
use abwv::optics::{
    crb_omega, map_to_model, photons_from_power, predicted_time_shift, OpticsScenario,
};
use abwv::sampler::{synth_waveform, CommonModeSine, NoiseSpec, RngSpec};
use abwv::Error;

use crate::config::{Settings, SetupKind, SweepKind};
use crate::output::{Cell, Report, Table};
use crate::CliError;

pub const FISHER_COLUMNS: &[&str] = &["technique", "f1", "f2", "f_total", "f_numeric", "crb"];
pub const TRIAL_COLUMNS: &[&str] = &[
    "technique",
    "target",
    "truth",
    "mean",
    "std",
    "bias",
    "crb",
    "ratio_to_crb",
    "snr",
    "events_used_fraction",
    "included_trials",
    "excluded_trials",
];
pub const SWEEP_COLUMNS: &[&str] = &[
    "a",
    "technique",
    "mean",
    "std",
    "bias",
    "ratio_to_crb",
    "excluded_trials",
];
pub const RESPONSE_COLUMNS: &[&str] = &[
    "omega0",
    "technique",
    "mean",
    "std",
    "bias",
    "ratio_to_crb",
    "excluded_trials",
];
pub const FIT_COLUMNS: &[&str] = &[
    "technique",
    "slope",
    "intercept",
    "slope_se",
    "intercept_se",
];
pub const OPTICS_COLUMNS: &[&str] = &[
    "phi",
    "omega0",
    "tau",
    "g",
    "epsilon",
    "sigma",
    "n_photons",
    "time_shift",
    "crb_omega",
    "validity_ratio",
    "regime",
    "contrast",
];
pub const WAVEFORM_COLUMNS: &[&str] = &[
    "phi",
    "omega0",
    "phi_hat",
    "delta_t_hat",
    "omega0_hat",
    "tau_hat",
    "i0_hat",
    "snr",
];

pub fn dispatch(name: &str, s: &Settings) -> Result<Report, CliError> {
    match name {
        "fisher" => fisher(s),
        "simulate" => simulate(s),
        "sweep" => sweep(s),
        "compare" => compare(s),
        "optics" => optics(s),
        "waveform" => waveform(s),
        other => Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn model_params(s: &Settings) -> Result<ModelParams, Error> {
    ModelParams::new(s.g, s.epsilon, s.sigma, s.events)
}

fn optics_scenario(s: &Settings) -> Result<OpticsScenario, Error> {
    let mut o = OpticsScenario::new(s.phi, s.omega0, s.tau, s.i0)?;
    o.wavelength = s.wavelength;
    o.peak_power = s.peak_power;
    o.averages = s.averages.first().copied().unwrap_or(1);
    if let Some(dt) = s.dt {
        o.dt = dt;
    }
    o.validate()?;
    Ok(o)
}

/// Photons per pulse: from the peak power when one is given.
fn photon_budget(s: &Settings, o: &OpticsScenario) -> Result<f64, Error> {
    match s.peak_power {
        Some(p) => photons_from_power(p, o.tau, o.wavelength),
        None => Ok(s.n_photons),
    }
}

fn noise_spec(s: &Settings) -> NoiseSpec {
    NoiseSpec {
        per_detector_std: s.per_detector_std,
        common_mode_offset: s.common_mode_offset,
        common_mode_sine: CommonModeSine {
            amplitude: s.common_mode_sine_amplitude,
            frequency: s.common_mode_sine_frequency,
        },
        epsilon_drift_rate: s.epsilon_drift_rate,
        coupling_drift_rate: s.coupling_drift_rate,
        count_mode: s.count_mode,
    }
}

fn trial_config(s: &Settings) -> Result<TrialConfig, CliError> {
    let setup = match s.setup {
        SetupKind::Model => Setup::Model(model_params(s)?),
        SetupKind::Optics => {
            let optics = optics_scenario(s)?;
            Setup::Optics {
                optics,
                n_photons: photon_budget(s, &optics)?,
            }
        }
    };
    Ok(TrialConfig {
        setup,
        techniques: s.techniques.clone(),
        trials: s.trials,
        averages: s.averages[0],
        noise: noise_spec(s),
        rng: RngSpec::new(s.seed.unwrap_or(0), 0),
        mode: s.mode,
        method: s.method,
        envelope: s.envelope,
    })
}

fn single_average(s: &Settings) -> Result<(), CliError> {
    if s.averages.len() != 1 {
        return Err(CliError::Config(
            "averages must be a single value here; use `sweep` for lists".into(),
        ));
    }
    Ok(())
}

fn fisher(s: &Settings) -> Result<Report, CliError> {
    let params = model_params(s)?;
    let bound = crb(&params)?;
    let mut t = Table::new(FISHER_COLUMNS);
    for &tech in &s.techniques {
        let r = fisher_exact(tech, &params)?;
        let numeric = fisher_numeric(tech, &params, &QuadratureSpec::default())?;
        let own = if tech == Technique::Abwv {
            bound
        } else {
            1.0 / r.f_total.sqrt()
        };
        t.push(vec![
            tech.name().into(),
            r.f1.into(),
            r.f2.into(),
            r.f_total.into(),
            numeric.into(),
            own.into(),
        ]);
    }
    Ok(Report {
        table: t,
        extras: Vec::new(),
    })
}

fn stats_table(stats: &TrialStatistics) -> Table {
    let mut t = Table::new(TRIAL_COLUMNS);
    for st in &stats.per_technique {
        t.push(vec![
            st.technique.name().into(),
            stats.target.name().into(),
            st.truth.into(),
            st.mean.into(),
            st.std.into(),
            st.bias.into(),
            st.crb.into(),
            st.ratio_to_crb.into(),
            st.snr.into(),
            st.events_used_fraction.into(),
            st.included.into(),
            st.excluded.into(),
        ]);
    }
    t
}

fn simulate(s: &Settings) -> Result<Report, CliError> {
    single_average(s)?;
    let stats = run_trials(&trial_config(s)?)?;
    Ok(Report {
        table: stats_table(&stats),
        extras: Vec::new(),
    })
}

fn compare(s: &Settings) -> Result<Report, CliError> {
    single_average(s)?;
    let stats = compare_techniques(&trial_config(s)?)?;
    Ok(Report {
        table: stats_table(&stats),
        extras: Vec::new(),
    })
}

fn sweep_report(result: &SweepResult, columns: &[&'static str]) -> Report {
    let mut t = Table::new(columns);
    for (x, stats) in &result.rows {
        for st in &stats.per_technique {
            let first: Cell = if result.variable == "a" {
                (*x as u64).into()
            } else {
                (*x).into()
            };
            t.push(vec![
                first,
                st.technique.name().into(),
                st.mean.into(),
                st.std.into(),
                st.bias.into(),
                st.ratio_to_crb.into(),
                st.excluded.into(),
            ]);
        }
    }
    let mut fits = Table::new(FIT_COLUMNS);
    for (tech, fit) in &result.fits {
        let (a, b, c, d) = fit.map_or((None, None, None, None), |f| {
            (
                Some(f.slope),
                Some(f.intercept),
                Some(f.slope_se),
                Some(f.intercept_se),
            )
        });
        fits.push(vec![
            tech.name().into(),
            a.into(),
            b.into(),
            c.into(),
            d.into(),
        ]);
    }
    Report {
        table: t,
        extras: vec![("fits", fits)],
    }
}

fn sweep(s: &Settings) -> Result<Report, CliError> {
    let config = trial_config(s)?;
    match s.sweep {
        SweepKind::Averages => {
            let result = sweep_averaging(&config, &s.averages)?;
            Ok(sweep_report(&result, SWEEP_COLUMNS))
        }
        SweepKind::Omega0 => {
            single_average(s)?;
            let optics = optics_scenario(s)?;
            let config = TrialConfig {
                setup: Setup::Optics {
                    optics,
                    n_photons: photon_budget(s, &optics)?,
                },
                ..config
            };
            let result = linear_response_sweep(&optics, &s.omega_list, &config)?;
            Ok(sweep_report(&result, RESPONSE_COLUMNS))
        }
    }
}

fn optics(s: &Settings) -> Result<Report, CliError> {
    let o = optics_scenario(s)?;
    let n = photon_budget(s, &o)?;
    let mapped = map_to_model(&o, n)?;
    let regime = regime_check(&mapped)?;
    let shift = match predicted_time_shift(&o) {
        Ok(v) => Some(v),
        Err(Error::Singular(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let contrast = match difference_contrast(&o, s.window) {
        Ok(v) => Some(v),
        Err(Error::Singular(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut t = Table::new(OPTICS_COLUMNS);
    t.push(vec![
        o.phi.into(),
        o.omega0.into(),
        o.tau.into(),
        mapped.g.into(),
        mapped.epsilon.into(),
        mapped.sigma.into(),
        n.into(),
        shift.into(),
        crb_omega(&o, n)?.into(),
        regime.validity_ratio.into(),
        format!("{:?}", regime.regime)
            .to_lowercase()
            .as_str()
            .into(),
        contrast.into(),
    ]);
    Ok(Report {
        table: t,
        extras: Vec::new(),
    })
}

fn waveform(s: &Settings) -> Result<Report, CliError> {
    let o = optics_scenario(s)?;
    let rng = RngSpec::new(s.seed.unwrap_or(0), 0);
    let trace = synth_waveform(Technique::Abwv, &o, &noise_spec(s), &rng)?;
    let hint = WaveformHint {
        tau: o.tau,
        i0: o.i0,
        envelope: s.envelope,
    };
    let est = analyze_waveform(&trace, &hint)?;
    let snr = match compute_snr(&trace, 3.0 * o.tau) {
        Ok(v) => Some(v),
        Err(Error::Numeric(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut t = Table::new(WAVEFORM_COLUMNS);
    t.push(vec![
        o.phi.into(),
        o.omega0.into(),
        est.phi_hat.into(),
        est.delta_t_hat.into(),
        est.omega0_hat.into(),
        est.tau_hat.into(),
        est.i0_hat.into(),
        snr.into(),
    ]);
    Ok(Report {
        table: t,
        extras: Vec::new(),
    })
}
