//! Field calibration: (B, θ) from the two measured |0⟩ ↔ |±1⟩ electron
//! lines, using the hyperfine-free electron Hamiltonian.
//!
//! The frequencies are even in θ, so solutions are reported on θ ∈ [0, π/2].

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};
use crate::params::NvParams;

pub const B_MAX: f64 = 500.0;
/// Newton stops once both residual components are below this (MHz).
pub const NEWTON_TOL: f64 = 1e-11;
/// Accepted residual per component (MHz).
pub const RESIDUAL_TOL: f64 = 1e-6;
/// |det J| (MHz² / (G·rad)) below which θ is reported as undetermined.
pub const DET_MIN: f64 = 1e-6;
const MAX_NEWTON: usize = 60;
const H_B: f64 = 1e-4;
const H_THETA: f64 = 1e-6;
const SEED_THETA_POINTS: usize = 181;

/// Measured line positions (MHz) with 1σ uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInput {
    pub e_plus: f64,
    pub e_minus: f64,
    #[serde(default)]
    pub sigma_plus: f64,
    #[serde(default)]
    pub sigma_minus: f64,
}

impl CalibrationInput {
    pub fn new(e_plus: f64, e_minus: f64, sigma_plus: f64, sigma_minus: f64) -> Result<Self> {
        let s = Self {
            e_plus,
            e_minus,
            sigma_plus,
            sigma_minus,
        };
        s.validate()?;
        Ok(s)
    }

    /// Input reproducing given (E_mean, E_diff).
    pub fn from_mean_diff(e_mean: f64, e_diff: f64, sigma_line: f64) -> Result<Self> {
        Self::new(e_mean + e_diff / 2.0, e_mean - e_diff / 2.0, sigma_line, sigma_line)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_plus.is_finite() && self.e_minus.is_finite()) {
            return Err(NvError::invalid("line frequencies must be finite"));
        }
        if !(self.e_plus >= self.e_minus && self.e_minus > 0.0) {
            return Err(NvError::invalid(format!(
                "expected E_plus >= E_minus > 0, got {} and {}",
                self.e_plus, self.e_minus
            )));
        }
        if !(self.sigma_plus >= 0.0 && self.sigma_minus >= 0.0) {
            return Err(NvError::invalid("uncertainties must be >= 0"));
        }
        Ok(())
    }

    pub fn e_mean(&self) -> f64 {
        (self.e_plus + self.e_minus) / 2.0
    }

    pub fn e_diff(&self) -> f64 {
        self.e_plus - self.e_minus
    }

    /// Covariance of (E_mean, E_diff).
    pub fn covariance(&self) -> Matrix2<f64> {
        let a = Matrix2::new(0.5, 0.5, 1.0, -1.0);
        let c = Matrix2::new(self.sigma_plus.powi(2), 0.0, 0.0, self.sigma_minus.powi(2));
        a * c * a.transpose()
    }
}

/// (E_plus, E_minus) for the electron spin alone.
pub fn forward_lines(params: &NvParams, b: f64, theta: f64) -> (f64, f64) {
    let t = theta.abs();
    let (bx, bz) = (params.gamma_e * b * t.sin(), params.gamma_e * b * t.cos());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // basis m_S = +1, 0, −1
    let h = Matrix3::new(
        params.d + bz,
        s * bx,
        0.0,
        s * bx,
        0.0,
        s * bx,
        0.0,
        s * bx,
        params.d - bz,
    );
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    (e[2] - e[0], e[1] - e[0])
}

/// (E_mean, E_diff) at field magnitude `b` (G) and polar angle `theta` (rad).
pub fn forward_frequencies(params: &NvParams, b: f64, theta: f64) -> (f64, f64) {
    let (p, m) = forward_lines(params, b, theta);
    ((p + m) / 2.0, p - m)
}

fn forward_vec(params: &NvParams, x: Vector2<f64>) -> Vector2<f64> {
    let (m, d) = forward_frequencies(params, x[0], x[1]);
    Vector2::new(m, d)
}

/// Centered finite-difference Jacobian d(E_mean, E_diff)/d(B, θ).
pub fn jacobian(params: &NvParams, b: f64, theta: f64, h_b: f64, h_theta: f64) -> Matrix2<f64> {
    let db = (forward_vec(params, Vector2::new(b + h_b, theta)) - forward_vec(params, Vector2::new(b - h_b, theta))) / (2.0 * h_b);
    let dt = (forward_vec(params, Vector2::new(b, theta + h_theta)) - forward_vec(params, Vector2::new(b, theta - h_theta)))
        / (2.0 * h_theta);
    Matrix2::from_columns(&[db, dt])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub b: f64,
    pub theta: f64,
    pub sigma_b: f64,
    pub sigma_theta: f64,
    /// Covariance of (B, θ) in G and rad.
    pub covariance: [[f64; 2]; 2],
    /// Max |forward − target| (MHz).
    pub residual: f64,
    pub jacobian_det: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourTarget {
    Mean,
    Diff,
}

/// Sampling for level sets: B ∈ [0, b_max], θ ∈ [0, theta_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub b_max: f64,
    pub theta_max: f64,
    pub points: usize,
}

impl Default for ContourGrid {
    fn default() -> Self {
        Self {
            b_max: B_MAX,
            theta_max: FRAC_PI_2,
            points: SEED_THETA_POINTS,
        }
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Field magnitude on the E_diff level set at angle `theta`.
fn b_on_diff_locus(params: &NvParams, theta: f64, value: f64, b_max: f64) -> Option<f64> {
    bisect(0.0, b_max, |b| forward_frequencies(params, b, theta).1 - value)
}

fn theta_on_mean_locus(params: &NvParams, b: f64, value: f64, theta_max: f64) -> Option<f64> {
    bisect(0.0, theta_max, |t| forward_frequencies(params, b, t).0 - value)
}

/// Level set of E_mean or E_diff as polylines of (B, θ). E_diff loci are
/// traced along θ, E_mean loci along B.
pub fn contour_pairs(params: &NvParams, target: ContourTarget, value: f64, grid: &ContourGrid) -> Result<Vec<Vec<(f64, f64)>>> {
    params.validate()?;
    if grid.points < 2 || !(grid.b_max > 0.0) || !(grid.theta_max > 0.0 && grid.theta_max <= FRAC_PI_2) {
        return Err(NvError::invalid("contour grid needs >= 2 points, b_max > 0, theta_max in (0, pi/2]"));
    }
    let n = grid.points;
    let mut lines: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current: Vec<(f64, f64)> = Vec::new();
    for k in 0..n {
        let s = k as f64 / (n - 1) as f64;
        let point = match target {
            ContourTarget::Diff => {
                let t = s * grid.theta_max;
                b_on_diff_locus(params, t, value, grid.b_max).map(|b| (b, t))
            }
            ContourTarget::Mean => {
                let b = s * grid.b_max;
                theta_on_mean_locus(params, b, value, grid.theta_max).map(|t| (b, t))
            }
        };
        match point {
            Some(p) => current.push(p),
            None if !current.is_empty() => lines.push(std::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        lines.push(current);
    }
    if lines.is_empty() {
        return Err(NvError::EmptyLocus);
    }
    Ok(lines)
}

/// Seed from the intersection of the E_diff locus with the E_mean level.
fn seed(params: &NvParams, e_mean: f64, e_diff: f64) -> Option<(f64, f64)> {
    let g = |t: f64| b_on_diff_locus(params, t, e_diff, B_MAX).map(|b| (b, forward_frequencies(params, b, t).0 - e_mean));
    let n = SEED_THETA_POINTS;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..n {
        let t = FRAC_PI_2 * k as f64 / (n - 1) as f64;
        let Some((b, r)) = g(t) else {
            prev = None;
            continue;
        };
        if r == 0.0 {
            return Some((b, t));
        }
        if let Some((tp, rp)) = prev {
            if rp.signum() != r.signum() {
                let root = bisect(tp, t, |x| g(x).map_or(f64::NAN, |v| v.1))?;
                return g(root).map(|(b, _)| (b, root));
            }
        }
        prev = Some((t, r));
    }
    None
}

/// (B, θ) reproducing the measured lines, with first-order uncertainties.
pub fn invert_field(params: &NvParams, input: &CalibrationInput) -> Result<CalibrationResult> {
    params.validate()?;
    input.validate()?;
    let target = Vector2::new(input.e_mean(), input.e_diff());
    let (b0, t0) = seed(params, target[0], target[1]).ok_or(NvError::NoSolution)?;
    let mut x = Vector2::new(b0, t0);
    let mut r = forward_vec(params, x) - target;
    let mut iterations = 0;
    while r.amax() > NEWTON_TOL && iterations < MAX_NEWTON {
        iterations += 1;
        let j = jacobian(params, x[0], x[1], H_B, H_THETA);
        let Some(step) = j.lu().solve(&(-r)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = x + step * lambda;
            trial[0] = trial[0].clamp(0.0, B_MAX);
            trial[1] = trial[1].clamp(0.0, FRAC_PI_2);
            let rt = forward_vec(params, trial) - target;
            if rt.amax() < r.amax() {
                x = trial;
                r = rt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let residual = r.amax();
    if residual > RESIDUAL_TOL {
        return Err(NvError::NoSolution);
    }
    let j = jacobian(params, x[0], x[1], H_B, H_THETA);
    let det = j.determinant();
    if det.abs() < DET_MIN {
        return Err(NvError::IllConditioned {
            det,
            b_gauss: x[0],
            theta_rad: x[1],
        });
    }
    let ji = j.try_inverse().ok_or(NvError::IllConditioned {
        det,
        b_gauss: x[0],
        theta_rad: x[1],
    })?;
    let cov = ji * input.covariance() * ji.transpose();
    Ok(CalibrationResult {
        b: x[0],
        theta: x[1],
        sigma_b: cov[(0, 0)].max(0.0).sqrt(),
        sigma_theta: cov[(1, 1)].max(0.0).sqrt(),
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        residual,
        jacobian_det: det,
        iterations,
    })
}
