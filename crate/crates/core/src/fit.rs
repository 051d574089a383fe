//! Least-squares fit of a single Gaussian peak `A·exp(−(x−c)²/2w²)` by
//! Levenberg–Marquardt iteration with analytic derivatives.

use crate::error::{Error, Result};

/// Starting point for [`fit_gaussian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitGuess {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Largest `|data|` treated as "no peak".
    pub noise_floor: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the relative parameter update.
    pub rel_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            noise_floor: 0.0,
            max_iterations: 500,
            rel_step: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    /// `‖model − data‖ / ‖data‖`.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn eval(&self, x: f64) -> f64 {
        gaussian(self.amplitude, self.center, self.width, x)
    }
}

fn gaussian(a: f64, c: f64, w: f64, x: f64) -> f64 {
    let z = (x - c) / w;
    a * (-0.5 * z * z).exp()
}

/// Initial guess from the data: the extremal sample for amplitude and center,
/// and the spread of the samples above half of that extreme for the width.
pub fn guess_from_data(x: &[f64], y: &[f64]) -> Option<FitGuess> {
    let k = (0..y.len()).max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs()))?;
    let amplitude = y[k];
    let center = x[k];
    let (mut w_sum, mut m2) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let v = yi / amplitude;
        if v > 0.5 {
            w_sum += v;
            m2 += v * (xi - center).powi(2);
        }
    }
    let mut width = (m2 / w_sum).sqrt();
    if !(width > 0.0) {
        // single point above half maximum
        width = x
            .windows(2)
            .map(|p| (p[1] - p[0]).abs())
            .fold(f64::INFINITY, f64::min);
    }
    Some(FitGuess {
        amplitude,
        center,
        width,
    })
}

fn cost(x: &[f64], y: &[f64], p: [f64; 3]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| (gaussian(p[0], p[1], p[2], xi) - yi).powi(2))
        .sum()
}

/// `JᵀJ` and `Jᵀr` for residuals `model − data` at parameters `p`.
fn normal_equations(x: &[f64], y: &[f64], p: [f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let (a, c, w) = (p[0], p[1], p[2]);
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let d = xi - c;
        let e = (-0.5 * (d / w).powi(2)).exp();
        let r = a * e - yi;
        let j = [e, a * e * d / (w * w), a * e * d * d / (w * w * w)];
        for m in 0..3 {
            jtr[m] += j[m] * r;
            for n in 0..3 {
                jtj[m][n] += j[m] * j[n];
            }
        }
    }
    (jtj, jtr)
}

/// Solves the 3×3 symmetric system by Gaussian elimination with partial
/// pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * out[k]).sum();
        out[row] = (b[row] - tail) / a[row][row];
    }
    Some(out)
}

/// Fits `A·exp(−(x−c)²/2w²)` to `(x, y)`.
///
/// Fails with [`Error::FitFailure`] when the data have no peak above
/// `options.noise_floor` or fewer than five points above a tenth of the peak.
/// Running out of iterations is not an error: the result comes back with
/// `converged == false`.
pub fn fit_gaussian(
    x: &[f64],
    y: &[f64],
    init: Option<FitGuess>,
    options: &FitOptions,
) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::Configuration(format!(
            "fit abscissa has {} points but data has {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("data contain non-finite values".into()));
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > options.noise_floor) {
        return Err(Error::FitFailure(format!(
            "no peak above the noise floor ({peak:e})"
        )));
    }
    let informative = y.iter().filter(|v| v.abs() > 0.1 * peak).count();
    if informative < 5 {
        return Err(Error::FitFailure(format!(
            "only {informative} informative points"
        )));
    }
    let guess = match init {
        Some(g) => g,
        None => guess_from_data(x, y).ok_or_else(|| Error::FitFailure("empty data".into()))?,
    };
    if !(guess.width.abs() > 0.0 && guess.amplitude != 0.0) {
        return Err(Error::FitFailure("degenerate initial guess".into()));
    }

    let mut p = [guess.amplitude, guess.center, guess.width.abs()];
    let mut current = cost(x, y, p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(x, y, p);

        let mut accepted = None;
        for _ in 0..60 {
            let mut damped = jtj;
            for m in 0..3 {
                damped[m][m] += lambda * jtj[m][m].max(f64::MIN_POSITIVE);
            }
            let step = solve3(damped, [-jtr[0], -jtr[1], -jtr[2]]);
            if let Some(step) = step {
                let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
                let trial_cost = cost(x, y, trial);
                if trial_cost.is_finite() && trial_cost <= current {
                    accepted = Some((trial, trial_cost, step));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, trial_cost, step)) = accepted else {
            // no descent direction left: at a minimum to working precision
            converged = true;
            break;
        };
        let scale = [p[0].abs(), p[2], p[2]];
        let rel = (0..3)
            .map(|m| step[m].abs() / scale[m].max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        p = trial;
        current = trial_cost;
        lambda = (lambda / 10.0).max(1e-12);
        if rel < options.rel_step {
            converged = true;
            break;
        }
    }

    if converged {
        // Cost comparisons cannot resolve the minimum better than √ε, so
        // finish with plain Gauss–Newton steps, which can.
        for _ in 0..10 {
            let (jtj, jtr) = normal_equations(x, y, p);
            let Some(step) = solve3(jtj, [-jtr[0], -jtr[1], -jtr[2]]) else {
                break;
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
            let trial_cost = cost(x, y, trial);
            if !(trial_cost <= current * (1.0 + 1e-8)) {
                break;
            }
            p = trial;
            current = trial_cost;
            let rel = (step[0] / p[0])
                .abs()
                .max((step[1] / p[2]).abs())
                .max((step[2] / p[2]).abs());
            if rel < 4.0 * f64::EPSILON {
                break;
            }
        }
    }

    let data_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(FitResult {
        amplitude: p[0],
        center: p[1],
        width: p[2],
        residual_norm: current.sqrt() / data_norm,
        converged: converged && p[2] > 0.0,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|k| lo + step * k as f64).collect()
    }

    #[test]
    fn recovers_exact_gaussian() {
        let x = grid(-8.0, 8.0, 0.01);
        let y: Vec<f64> = x.iter().map(|&v| gaussian(1.0, 0.02, 1.0, v)).collect();
        let fit = fit_gaussian(&x, &y, None, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.amplitude - 1.0).abs() < 1e-8);
        assert!((fit.center - 0.02).abs() < 1e-8);
        assert!((fit.width - 1.0).abs() < 1e-8);
        assert!(fit.residual_norm < 1e-10);
    }

    #[test]
    fn recovers_negative_peak_from_poor_guess() {
        let x = grid(-5.0, 5.0, 0.05);
        let y: Vec<f64> = x.iter().map(|&v| gaussian(-3.0, -0.7, 0.4, v)).collect();
        let guess = FitGuess {
            amplitude: -1.0,
            center: 0.0,
            width: 1.5,
        };
        let fit = fit_gaussian(&x, &y, Some(guess), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.amplitude + 3.0).abs() < 1e-8);
        assert!((fit.center + 0.7).abs() < 1e-8);
        assert!((fit.width - 0.4).abs() < 1e-8);
    }

    #[test]
    fn zero_data_fails() {
        let x = grid(-1.0, 1.0, 0.1);
        let y = vec![0.0; x.len()];
        assert!(matches!(
            fit_gaussian(&x, &y, None, &FitOptions::default()),
            Err(Error::FitFailure(_))
        ));
    }

    #[test]
    fn too_few_informative_points_fails() {
        let x = grid(-1.0, 1.0, 0.1);
        let mut y = vec![0.0; x.len()];
        y[10] = 1.0;
        y[11] = 0.5;
        assert!(matches!(
            fit_gaussian(&x, &y, None, &FitOptions::default()),
            Err(Error::FitFailure(_))
        ));
    }

    #[test]
    fn iteration_cap_flags_unconverged() {
        let x = grid(-8.0, 8.0, 0.01);
        let y: Vec<f64> = x.iter().map(|&v| gaussian(1.0, 0.5, 1.0, v)).collect();
        let opts = FitOptions {
            max_iterations: 1,
            ..Default::default()
        };
        let guess = FitGuess {
            amplitude: 0.3,
            center: -1.0,
            width: 2.0,
        };
        let fit = fit_gaussian(&x, &y, Some(guess), &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn solve3_matches_known_solution() {
        let a = [[4.0, 1.0, 2.0], [1.0, 3.0, 0.5], [2.0, 0.5, 5.0]];
        let x = [1.0, -2.0, 0.5];
        let b = [
            a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
            a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
            a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
        ];
        let got = solve3(a, b).unwrap();
        for k in 0..3 {
            assert!((got[k] - x[k]).abs() < 1e-14);
        }
    }
}
