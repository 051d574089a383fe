//! Mapping between the abstract protocol and the rotating half-wave-plate
//! experiment.
//!
//! A Gaussian pulse `I(t) = I₀ e^{−t²/2τ²}` polarized along `|D⟩` passes a
//! half-wave plate rotated by `φ + ω₀t`. The two outputs of a Wollaston prism
//! realize the ABWV detectors with time as the meter:
//!
//! ```text
//! ε = 4φ,   g = 2ω₀,   σ = τ
//! I₁,₂(t) = (I₀/2) [1 ∓ sin(4φ + 4ω₀t)] e^{−t²/2τ²}
//! ```

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Laser wavelength used when none is given, meters.
pub const DEFAULT_WAVELENGTH: f64 = 795e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticsScenario {
    /// Static offset of the plate from the `|D⟩` axis, radians.
    pub phi: f64,
    /// Angular velocity of the plate, rad/s.
    pub omega0: f64,
    /// Pulse width (intensity standard deviation), seconds.
    pub tau: f64,
    /// Peak intensity, arbitrary units.
    pub i0: f64,
    /// Wavelength, meters.
    pub wavelength: f64,
    /// Peak optical power, watts.
    pub peak_power: Option<f64>,
    /// Number of pulses averaged per estimate.
    pub averages: usize,
    /// Waveform sampling step, seconds.
    pub dt: f64,
}

impl OpticsScenario {
    /// Scenario with the default wavelength, a single pulse and `dt = τ/100`.
    pub fn new(phi: f64, omega0: f64, tau: f64, i0: f64) -> Result<Self> {
        let optics = OpticsScenario {
            phi,
            omega0,
            tau,
            i0,
            wavelength: DEFAULT_WAVELENGTH,
            peak_power: None,
            averages: 1,
            dt: tau / 100.0,
        };
        optics.validate()?;
        Ok(optics)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau", "must be positive"));
        }
        if !(self.phi.is_finite() && (4.0 * self.phi).abs() < FRAC_PI_2) {
            return Err(Error::param("phi", "|4 phi| must be below pi/2"));
        }
        if !self.omega0.is_finite() {
            return Err(Error::param("omega0", "must be finite"));
        }
        if !(self.i0 >= 0.0 && self.i0.is_finite()) {
            return Err(Error::param("i0", "must be non-negative"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::param("wavelength", "must be positive"));
        }
        if self.averages == 0 {
            return Err(Error::param("averages", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_omega0(self, omega0: f64) -> Self {
        OpticsScenario { omega0, ..self }
    }

    pub fn with_phi(self, phi: f64) -> Self {
        OpticsScenario { phi, ..self }
    }
}

/// Piezo ramp driving the plate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    /// Piezo response, rad/V.
    pub alpha: f64,
    /// Peak-to-peak drive voltage, V.
    pub v_pp: f64,
    /// Ramp frequency, Hz.
    pub f_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesSample {
    pub c_h: Complex64,
    pub c_v: Complex64,
    /// `⟨R|ψ⟩` with `|R⟩ = (|H⟩ − i|V⟩)/√2`.
    pub c_r: Complex64,
    /// `⟨L|ψ⟩` with `|L⟩ = (|H⟩ + i|V⟩)/√2`.
    pub c_l: Complex64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    I1,
    I2,
    Sum,
    Diff,
}

/// `ε = 4φ`, `g = 2ω₀`, `σ = τ`, `N = n_photons`.
pub fn map_to_model(optics: &OpticsScenario, n_photons: f64) -> Result<ModelParams> {
    optics.validate()?;
    ModelParams::new(2.0 * optics.omega0, 4.0 * optics.phi, optics.tau, n_photons)
}

/// Inverse of [`map_to_model`]; fields with no model counterpart come from
/// `template`.
pub fn map_from_model(params: &ModelParams, template: &OpticsScenario) -> OpticsScenario {
    OpticsScenario {
        phi: params.epsilon / 4.0,
        omega0: params.g / 2.0,
        tau: params.sigma,
        ..*template
    }
}

/// Small-angle time shift `ω₀τ²/φ` of the difference pulse.
pub fn predicted_time_shift(optics: &OpticsScenario) -> Result<f64> {
    optics.validate()?;
    if optics.phi == 0.0 {
        return Err(Error::Singular("time shift diverges at phi = 0".into()));
    }
    Ok(optics.omega0 * optics.tau * optics.tau / optics.phi)
}

/// Shot-noise bound `1/(4√(aN) τ)` on the standard deviation of `ω̂₀`.
pub fn crb_omega(optics: &OpticsScenario, n_photons: f64) -> Result<f64> {
    optics.validate()?;
    if !(n_photons >= 1.0) {
        return Err(Error::param("n_photons", "must be at least 1"));
    }
    let total = optics.averages as f64 * n_photons;
    // written as crb(g)/2 so the two agree bit for bit
    Ok(0.5 / (total.sqrt() * optics.tau) / 2.0)
}

pub fn intensity_at(optics: &OpticsScenario, t: f64, port: Port) -> f64 {
    let envelope = optics.i0 * (-0.5 * (t / optics.tau).powi(2)).exp();
    let s = (4.0 * optics.phi + 4.0 * optics.omega0 * t).sin();
    let half = 0.5 * envelope;
    match port {
        Port::I1 => half * (1.0 - s),
        Port::I2 => half * (1.0 + s),
        Port::Sum => envelope,
        Port::Diff => envelope * s,
    }
}

/// Continuous-wave intensities at `φ = 0`: `(I₀/2)[1 ∓ sin(4ω₀t)]`.
pub fn cw_intensity_at(optics: &OpticsScenario, t: f64, port: Port) -> f64 {
    let s = (4.0 * optics.omega0 * t).sin();
    let half = 0.5 * optics.i0;
    match port {
        Port::I1 => half * (1.0 - s),
        Port::I2 => half * (1.0 + s),
        Port::Sum => optics.i0,
        Port::Diff => optics.i0 * s,
    }
}

/// Field amplitudes of the `|D⟩`-polarized input after the plate, rotated by
/// `2(φ + ω₀t)`.
pub fn jones_after_hwp(optics: &OpticsScenario, t: f64) -> JonesSample {
    let theta = 2.0 * (optics.phi + optics.omega0 * t);
    let (s, c) = theta.sin_cos();
    let h = (c - s) * FRAC_1_SQRT_2;
    let v = (c + s) * FRAC_1_SQRT_2;
    let c_h = Complex64::new(h, 0.0);
    let c_v = Complex64::new(v, 0.0);
    let i = Complex64::i();
    JonesSample {
        c_h,
        c_v,
        c_r: (c_h + i * c_v) * FRAC_1_SQRT_2,
        c_l: (c_h - i * c_v) * FRAC_1_SQRT_2,
        t,
    }
}

/// Detector intensities obtained by propagating the Jones vector:
/// `(I₀|c_h|², I₀|c_v|²)` times the pulse envelope.
pub fn jones_intensities(optics: &OpticsScenario, t: f64) -> (f64, f64) {
    let j = jones_after_hwp(optics, t);
    let envelope = optics.i0 * (-0.5 * (t / optics.tau).powi(2)).exp();
    (envelope * j.c_h.norm_sqr(), envelope * j.c_v.norm_sqr())
}

/// Angular velocity of the ramp segment of the triangle drive.
pub fn drive_to_omega(drive: &DriveSpec) -> Result<f64> {
    if !(drive.alpha >= 0.0 && drive.v_pp >= 0.0 && drive.f_r >= 0.0) {
        return Err(Error::param(
            "drive",
            "alpha, v_pp and f_r must be non-negative",
        ));
    }
    Ok(10.0 / 6.0 * drive.alpha * drive.v_pp * drive.f_r)
}

/// Photon energy `hc/λ` in joules.
pub fn photon_energy(wavelength: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / wavelength
}

/// Photons in a Gaussian pulse of the given peak power: the pulse energy
/// `P₀√(2π)τ` divided by `hc/λ`.
pub fn photons_from_power(peak_power: f64, tau: f64, wavelength: f64) -> Result<f64> {
    if !(peak_power > 0.0 && tau > 0.0 && wavelength > 0.0) {
        return Err(Error::param(
            "photons_from_power",
            "power, pulse width and wavelength must be positive",
        ));
    }
    let energy = peak_power * (2.0 * PI).sqrt() * tau;
    Ok(energy / photon_energy(wavelength))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{crb, predicted_shift, Technique};

    fn plate() -> OpticsScenario {
        OpticsScenario::new(4.972e-3, 1e-5, 0.1, 1.0).unwrap()
    }

    #[test]
    fn mapping_examples() {
        let o = plate();
        let p = map_to_model(&o, 1e6).unwrap();
        assert!((p.epsilon - 0.019_888).abs() < 1e-12);
        assert_eq!(p.g, 2e-5);
        assert_eq!(p.sigma, 0.1);
        let p = map_to_model(&o.with_omega0(161e-9), 1e6).unwrap();
        assert!((p.g - 3.22e-7).abs() < 1e-20);
        assert_eq!(map_from_model(&p, &o), o.with_omega0(161e-9));
        assert!(map_to_model(&o.with_phi(0.4), 1.0).is_err());
    }

    #[test]
    fn time_shift_examples() {
        let o = plate();
        let dt = predicted_time_shift(&o).unwrap();
        assert!((dt - 2.011_263_073_209_976e-5).abs() < 1e-18);
        assert_eq!(predicted_time_shift(&o.with_omega0(0.0)).unwrap(), 0.0);
        assert!(matches!(
            predicted_time_shift(&o.with_phi(0.0)),
            Err(Error::Singular(_))
        ));
        let p = map_to_model(&o, 1.0).unwrap();
        let shift = predicted_shift(Technique::Abwv, &p).unwrap();
        // 4φ cot 4φ = 1 − x²/3 − x⁴/45 − …
        let x2 = (4.0 * o.phi).powi(2);
        let rel = ((shift - dt) / dt).abs();
        assert!(rel <= x2 / 3.0 * (1.0 + x2));
        assert!((rel - x2 / 3.0) / rel < 1e-3);
    }

    #[test]
    fn crb_omega_examples() {
        let o = plate();
        let c1 = crb_omega(&o, 5.246e5).unwrap();
        assert!((c1 - 3.451_642_958_869_962e-3).abs() < 1e-15);
        let o25 = OpticsScenario { averages: 25, ..o };
        let c25 = crb_omega(&o25, 5.246e5).unwrap();
        assert!((c25 - c1 / 5.0).abs() < 1e-17);
        let p = map_to_model(&o, 5.246e5).unwrap();
        assert_eq!(c1, crb(&p).unwrap() / 2.0);
    }

    #[test]
    fn intensity_examples() {
        let o = plate().with_omega0(0.0);
        assert!((intensity_at(&o, 0.0, Port::Diff) - 0.019_886_688_967_388_89).abs() < 1e-16);
        assert_eq!(intensity_at(&plate(), 0.0, Port::Sum), 1.0);

        // Diff against the shifted-Gaussian approximation, ω₀τ/φ = 0.02
        let o = OpticsScenario::new(0.01, 0.02 * 0.01 / 0.1, 0.1, 1.0).unwrap();
        let dt = predicted_time_shift(&o).unwrap();
        let amp = (4.0 * o.phi).sin();
        let worst = (0..=2000)
            .map(|k| {
                let t = (-0.4) + 0.8 * k as f64 / 2000.0;
                let approx = amp * (-0.5 * ((t - dt) / o.tau).powi(2)).exp();
                (intensity_at(&o, t, Port::Diff) - approx).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst / amp < 0.01, "{}", worst / amp);
    }

    #[test]
    fn jones_examples() {
        let o = OpticsScenario::new(0.0, 0.0, 0.1, 1.0).unwrap();
        let j = jones_after_hwp(&o, 0.0);
        assert!((j.c_h.re - FRAC_1_SQRT_2).abs() < 1e-16);
        assert!((j.c_v.re - FRAC_1_SQRT_2).abs() < 1e-16);
        assert!(((j.c_r / j.c_l).arg() - FRAC_PI_2).abs() < 1e-15);

        let o = o.with_phi(0.1);
        let j = jones_after_hwp(&o, 0.0);
        assert!((j.c_v.norm_sqr() - 0.694_709_171_154_325_2).abs() < 1e-15);
    }

    #[test]
    fn circular_phase_tracks_rotation() {
        let o = OpticsScenario::new(0.01, 3e-3, 0.1, 1.0).unwrap();
        for &t in &[-0.3, 0.0, 0.05, 0.2] {
            let j = jones_after_hwp(&o, t);
            let expected = 4.0 * (o.phi + o.omega0 * t) + FRAC_PI_2;
            let got = (j.c_r / j.c_l).arg();
            assert!((got - expected).abs() < 1e-14, "{t}: {got} vs {expected}");
            assert!((j.c_r.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
            assert!((j.c_l.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn drive_examples() {
        let d = DriveSpec {
            alpha: 1e-6,
            v_pp: 15.0,
            f_r: 1.0,
        };
        assert!((drive_to_omega(&d).unwrap() - 2.5e-5).abs() < 1e-18);
        assert_eq!(drive_to_omega(&DriveSpec { v_pp: 0.0, ..d }).unwrap(), 0.0);
        let base = drive_to_omega(&d).unwrap();
        for doubled in [
            DriveSpec { alpha: 2e-6, ..d },
            DriveSpec { v_pp: 30.0, ..d },
            DriveSpec { f_r: 2.0, ..d },
        ] {
            assert_eq!(drive_to_omega(&doubled).unwrap(), 2.0 * base);
        }
        assert!(drive_to_omega(&DriveSpec { alpha: -1.0, ..d }).is_err());
    }

    #[test]
    fn photon_budget_examples() {
        let n = photons_from_power(136e-6, 21.398e-3, 795e-9).unwrap();
        assert!((n - 2.919_392_056_706_6e13).abs() / n < 1e-12);
        assert!((n - 2.9e13).abs() / 2.9e13 < 0.05);
        let n2 = photons_from_power(136e-6, 2.0 * 21.398e-3, 795e-9).unwrap();
        assert_eq!(n2, 2.0 * n);
        assert!((photon_energy(795e-9) - 2.498_674_034_149_596e-19).abs() < 1e-31);
        assert!(photons_from_power(0.0, 1.0, 1.0).is_err());
    }
}
