//! Deterministic least-squares fits of the four line and time-series shapes,
//! and the T₂* linewidth conversion.
//!
//! All fits use a damped Gauss–Newton (Levenberg–Marquardt) iteration with
//! analytic Jacobians, at most [`MAX_ITER`] iterations and a relative step
//! tolerance of [`STEP_TOL`]. Initial guesses come from fixed heuristics so
//! identical inputs always give identical outputs.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};

pub const MAX_ITER: usize = 200;
pub const STEP_TOL: f64 = 1e-10;
/// A fit whose largest residual exceeds this fraction of the fitted
/// amplitude is flagged as a poor fit.
pub const RESIDUAL_FRACTION: f64 = 0.05;
/// Physical bounds for a Lorentzian contrast.
pub const CONTRAST_BOUNDS: (f64, f64) = (0.0, 1.05);
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    /// 1σ from the Jacobian covariance, ≥ 0.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<FitParam>,
    /// `sqrt(Σ r²)`.
    pub residual_norm: f64,
    /// Largest `|r|` divided by `|amplitude|`.
    pub relative_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `contrast_clamped`, `degenerate`, `residual_exceeds_threshold`, `max_iterations`.
    pub flags: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> f64 {
        self.param(name).map(|p| p.value).unwrap_or(f64::NAN)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.param(name).map(|p| p.sigma).unwrap_or(f64::NAN)
    }

    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// The error a caller should raise when it treats a poor fit as failure.
    pub fn failure(&self) -> Option<NvError> {
        if self.converged {
            None
        } else {
            Some(NvError::fit(
                &self.model,
                format!("relative residual {:.3e}, flags {:?}", self.relative_residual, self.flags),
            ))
        }
    }
}

/// Unit-peak Gaussian line `offset + amplitude·exp(−4 ln2 (x − center)²/fwhm²)`.
pub fn gaussian(x: f64, center: f64, fwhm: f64, amplitude: f64, offset: f64) -> f64 {
    let u = (x - center) / fwhm;
    offset + amplitude * (-4.0 * LN_2 * u * u).exp()
}

/// Lorentzian dip `baseline·(1 − contrast·(w/2)²/((x − center)² + (w/2)²))`.
pub fn lorentzian(x: f64, center: f64, fwhm: f64, contrast: f64, baseline: f64) -> f64 {
    let h2 = 0.25 * fwhm * fwhm;
    let d = x - center;
    baseline * (1.0 - contrast * h2 / (d * d + h2))
}

/// `amplitude·exp(−t/tau)·cos(2π·omega·t + phase) + offset`, `omega` in MHz.
pub fn damped_sin(t: f64, omega: f64, tau: f64, phase: f64, amplitude: f64, offset: f64) -> f64 {
    amplitude * (-t / tau).exp() * (2.0 * PI * omega * t + phase).cos() + offset
}

/// `amplitude·exp(−rate·t) + offset`.
pub fn exp_decay(t: f64, rate: f64, amplitude: f64, offset: f64) -> f64 {
    amplitude * (-rate * t).exp() + offset
}

struct LmOutcome {
    p: Vec<f64>,
    cov: DMatrix<f64>,
    ssr: f64,
    iterations: usize,
    converged: bool,
}

/// `model(x, p, grad)` returns the model value and writes ∂f/∂p into `grad`.
fn levenberg_marquardt(x: &[f64], y: &[f64], p0: &[f64], model: &dyn Fn(f64, &[f64], &mut [f64]) -> f64) -> LmOutcome {
    let n = x.len();
    let np = p0.len();
    let eval = |p: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, np);
        let mut g = vec![0.0; np];
        for k in 0..n {
            let f = model(x[k], p, &mut g);
            r[k] = y[k] - f;
            for (q, gq) in g.iter().enumerate() {
                j[(k, q)] = *gq;
            }
        }
        (r, j)
    };
    let ssr_of = |p: &[f64]| -> f64 {
        let mut g = vec![0.0; np];
        x.iter().zip(y).map(|(&xk, &yk)| (yk - model(xk, p, &mut g)).powi(2)).sum()
    };

    let mut p = p0.to_vec();
    let (mut r, mut j) = eval(&p);
    let mut ssr = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        if ssr == 0.0 {
            converged = true;
            break;
        }
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        let dmax = a.diagonal().max().max(1e-300);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut m = a.clone();
            for q in 0..np {
                m[(q, q)] += lambda * a[(q, q)].max(1e-12 * dmax);
            }
            let Some(step) = m.clone().cholesky().map(|c| c.solve(&g)).or_else(|| m.lu().solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_ssr = ssr_of(&trial);
            if trial_ssr.is_finite() && trial_ssr <= ssr {
                let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let small = step.norm() <= STEP_TOL * (pnorm + STEP_TOL);
                let stalled = ssr - trial_ssr <= 1e-15 * ssr;
                p = trial;
                ssr = trial_ssr;
                (r, j) = eval(&p);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small || stalled {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step exists at any damping: a stationary point
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    let a = j.transpose() * &j;
    let dof = n.saturating_sub(np).max(1) as f64;
    let s2 = ssr / dof;
    let inv = a
        .clone()
        .try_inverse()
        .unwrap_or_else(|| a.pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::zeros(np, np)));
    LmOutcome {
        p,
        cov: inv * s2,
        ssr,
        iterations,
        converged,
    }
}

fn check_input(x: &[f64], y: &[f64], model: &str) -> Result<()> {
    if x.len() != y.len() {
        return Err(NvError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < MIN_SAMPLES {
        return Err(NvError::fit(model, format!("need at least {MIN_SAMPLES} samples, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(NvError::fit(model, "non-finite sample"));
    }
    Ok(())
}

fn span(y: &[f64]) -> f64 {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn is_flat(y: &[f64]) -> bool {
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    span(y) <= 1e-12 * scale
}

fn build_result(
    model: &str,
    names: &[&str],
    out: &LmOutcome,
    values: Vec<f64>,
    x: &[f64],
    y: &[f64],
    amplitude: f64,
    f: impl Fn(f64) -> f64,
    mut flags: Vec<String>,
) -> FitResult {
    let max_res = x.iter().zip(y).map(|(&xk, &yk)| (yk - f(xk)).abs()).fold(0.0, f64::max);
    let relative_residual = if amplitude.abs() > 0.0 {
        max_res / amplitude.abs()
    } else {
        f64::INFINITY
    };
    if !out.converged {
        flags.push("max_iterations".into());
    }
    let poor = relative_residual > RESIDUAL_FRACTION;
    if poor {
        flags.push("residual_exceeds_threshold".into());
    }
    let parameters = names
        .iter()
        .zip(values)
        .enumerate()
        .map(|(q, (name, value))| FitParam {
            name: name.to_string(),
            value,
            sigma: out.cov[(q, q)].max(0.0).sqrt(),
        })
        .collect();
    FitResult {
        model: model.to_string(),
        parameters,
        residual_norm: out.ssr.sqrt(),
        relative_residual,
        converged: out.converged && !poor,
        iterations: out.iterations,
        flags,
    }
}

/// Index of the sample farthest from `baseline`.
fn extremum(y: &[f64], baseline: f64) -> usize {
    let mut best = 0;
    for k in 1..y.len() {
        if (y[k] - baseline).abs() > (y[best] - baseline).abs() {
            best = k;
        }
    }
    best
}

/// Mean of the outer 10% of samples on each side.
fn edge_baseline(y: &[f64]) -> f64 {
    let m = (y.len() / 10).max(1);
    let s: f64 = y[..m].iter().chain(&y[y.len() - m..]).sum();
    s / (2 * m) as f64
}

/// Full width at half depth around `peak`, by linear interpolation.
fn half_width(x: &[f64], y: &[f64], peak: usize, baseline: f64) -> f64 {
    let half = 0.5 * (y[peak] + baseline);
    let below = |k: usize| (y[k] - half) * (y[peak] - half) > 0.0;
    let mut l = peak;
    while l > 0 && below(l - 1) {
        l -= 1;
    }
    let mut r = peak;
    while r + 1 < y.len() && below(r + 1) {
        r += 1;
    }
    let cross = |a: usize, b: usize| {
        let t = (half - y[a]) / (y[b] - y[a]);
        x[a] + t * (x[b] - x[a])
    };
    let xl = if l > 0 { cross(l - 1, l) } else { x[0] };
    let xr = if r + 1 < y.len() { cross(r, r + 1) } else { x[y.len() - 1] };
    let w = xr - xl;
    if w > 0.0 && w.is_finite() {
        w
    } else {
        (x[x.len() - 1] - x[0]) / 10.0
    }
}

/// Gaussian line: parameters `center`, `fwhm`, `amplitude`, `offset`.
pub fn fit_gaussian(x: &[f64], y: &[f64]) -> Result<FitResult> {
    const M: &str = "gaussian";
    check_input(x, y, M)?;
    if is_flat(y) {
        return Err(NvError::fit(M, "flat trace"));
    }
    let offset = edge_baseline(y);
    let k = extremum(y, offset);
    let p0 = [x[k], half_width(x, y, k, offset), y[k] - offset, offset];
    let model = |xv: f64, p: &[f64], g: &mut [f64]| {
        let u = (xv - p[0]) / p[1];
        let e = (-4.0 * LN_2 * u * u).exp();
        g[0] = p[2] * e * 8.0 * LN_2 * u / p[1];
        g[1] = p[2] * e * 8.0 * LN_2 * u * u / p[1];
        g[2] = e;
        g[3] = 1.0;
        p[3] + p[2] * e
    };
    let out = levenberg_marquardt(x, y, &p0, &model);
    let p = &out.p;
    let values = vec![p[0], p[1].abs(), p[2], p[3]];
    let (c, w, a, o) = (p[0], p[1], p[2], p[3]);
    Ok(build_result(M, &["center", "fwhm", "amplitude", "offset"], &out, values, x, y, a, |xv| gaussian(xv, c, w, a, o), vec![]))
}

/// Lorentzian dip: parameters `center`, `fwhm`, `contrast`, `baseline`.
/// A contrast outside [`CONTRAST_BOUNDS`] is clamped and flagged.
pub fn fit_lorentzian(x: &[f64], y: &[f64]) -> Result<FitResult> {
    const M: &str = "lorentzian";
    check_input(x, y, M)?;
    if is_flat(y) {
        return Err(NvError::fit(M, "flat trace"));
    }
    let base = edge_baseline(y);
    if base == 0.0 {
        return Err(NvError::fit(M, "zero baseline"));
    }
    let k = extremum(y, base);
    let p0 = [x[k], half_width(x, y, k, base), 1.0 - y[k] / base, base];
    let model = |xv: f64, p: &[f64], g: &mut [f64]| {
        let h2 = 0.25 * p[1] * p[1];
        let d = xv - p[0];
        let den = d * d + h2;
        let l = h2 / den;
        g[0] = -p[3] * p[2] * h2 * 2.0 * d / (den * den);
        g[1] = -p[3] * p[2] * (0.5 * p[1] * d * d) / (den * den);
        g[2] = -p[3] * l;
        g[3] = 1.0 - p[2] * l;
        p[3] * (1.0 - p[2] * l)
    };
    let out = levenberg_marquardt(x, y, &p0, &model);
    let p = &out.p;
    let mut flags = vec![];
    let contrast = p[2].clamp(CONTRAST_BOUNDS.0, CONTRAST_BOUNDS.1);
    if contrast != p[2] {
        flags.push("contrast_clamped".to_string());
    }
    let values = vec![p[0], p[1].abs(), contrast, p[3]];
    let (c, w, ct, b) = (p[0], p[1], p[2], p[3]);
    Ok(build_result(
        M,
        &["center", "fwhm", "contrast", "baseline"],
        &out,
        values,
        x,
        y,
        ct * b,
        |xv| lorentzian(xv, c, w, ct, b),
        flags,
    ))
}

/// Dominant frequency (cycles per unit x) of a uniformly sampled signal,
/// from a zero-padded DFT, with its amplitude and phase.
fn dominant_frequency(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let dt = (x[n - 1] - x[0]) / (n - 1) as f64;
    let pad = 8;
    let m = n * pad;
    let mut best = (0.0, 0.0, 0.0);
    for k in 1..m / 2 {
        let f = k as f64 / (m as f64 * dt);
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().zip(y) {
            let ph = 2.0 * PI * f * (t - x[0]);
            re += (v - mean) * ph.cos();
            im -= (v - mean) * ph.sin();
        }
        let mag = re.hypot(im);
        if mag > best.1 {
            best = (f, mag, im.atan2(re));
        }
    }
    (best.0, 2.0 * best.1 / n as f64, best.2)
}

/// Damped sinusoid: parameters `omega` (MHz, cycles per μs), `tau`,
/// `phase`, `amplitude`, `offset`. Expects uniformly sampled `t`.
pub fn fit_damped_sin(t: &[f64], y: &[f64]) -> Result<FitResult> {
    const M: &str = "damped_sin";
    check_input(t, y, M)?;
    if is_flat(y) {
        return Err(NvError::fit(M, "zero amplitude"));
    }
    let (f0, a0, ph0) = dominant_frequency(t, y);
    if f0 == 0.0 || a0 == 0.0 {
        return Err(NvError::fit(M, "no oscillation found"));
    }
    let offset = y.iter().sum::<f64>() / y.len() as f64;
    let duration = t[t.len() - 1] - t[0];
    // phase refers to t = t[0]; shift to t = 0
    let phase0 = ph0 - 2.0 * PI * f0 * t[0];
    // the DFT amplitude underestimates a decaying envelope; start from a
    // moderate decay and the larger of the two estimates
    let rate0 = 1.0 / duration;
    let amp0 = a0.max(0.5 * span(y));
    let p0 = [f0, rate0, phase0, amp0, offset];
    let model = |tv: f64, p: &[f64], g: &mut [f64]| {
        let env = (-p[1] * tv).exp();
        let arg = 2.0 * PI * p[0] * tv + p[2];
        let (s, c) = arg.sin_cos();
        g[0] = -p[3] * env * s * 2.0 * PI * tv;
        g[1] = -p[3] * env * c * tv;
        g[2] = -p[3] * env * s;
        g[3] = env * c;
        g[4] = 1.0;
        p[3] * env * c + p[4]
    };
    let mut out = levenberg_marquardt(t, y, &p0, &model);
    // re-express with positive amplitude and phase in (−π, π]
    let mut p = out.p.clone();
    if p[3] < 0.0 {
        p[3] = -p[3];
        p[2] += PI;
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[2] = -p[2];
    }
    p[2] = (p[2] + PI).rem_euclid(2.0 * PI) - PI;
    let rate = p[1];
    let tau = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    // σ_τ = σ_rate / rate²
    let rate_var = out.cov[(1, 1)];
    out.cov[(1, 1)] = if rate > 0.0 { rate_var / rate.powi(4) } else { 0.0 };
    let mut flags = vec![];
    if rate <= 0.0 {
        flags.push("degenerate".to_string());
    }
    let values = vec![p[0], tau, p[2], p[3], p[4]];
    let (w, ph, a, o) = (p[0], p[2], p[3], p[4]);
    Ok(build_result(
        M,
        &["omega", "tau", "phase", "amplitude", "offset"],
        &out,
        values,
        t,
        y,
        a,
        |tv| a * (-rate * tv).exp() * (2.0 * PI * w * tv + ph).cos() + o,
        flags,
    ))
}

/// Exponential decay: parameters `rate`, `amplitude`, `offset`. A constant
/// trace gives `rate = 0` flagged `degenerate`.
pub fn fit_exp_decay(t: &[f64], y: &[f64]) -> Result<FitResult> {
    const M: &str = "exp_decay";
    check_input(t, y, M)?;
    let n = y.len();
    if is_flat(y) {
        return Ok(FitResult {
            model: M.into(),
            parameters: vec![
                FitParam {
                    name: "rate".into(),
                    value: 0.0,
                    sigma: 0.0,
                },
                FitParam {
                    name: "amplitude".into(),
                    value: 0.0,
                    sigma: 0.0,
                },
                FitParam {
                    name: "offset".into(),
                    value: y.iter().sum::<f64>() / n as f64,
                    sigma: 0.0,
                },
            ],
            residual_norm: 0.0,
            relative_residual: 0.0,
            converged: true,
            iterations: 0,
            flags: vec!["degenerate".into()],
        });
    }
    let (rate0, amp0, off0) = exp_initial_guess(t, y);
    let model = |tv: f64, p: &[f64], g: &mut [f64]| {
        let e = (-p[0] * tv).exp();
        g[0] = -p[1] * tv * e;
        g[1] = e;
        g[2] = 1.0;
        p[1] * e + p[2]
    };
    let out = levenberg_marquardt(t, y, &[rate0, amp0, off0], &model);
    let p = out.p.clone();
    let mut flags = vec![];
    if p[0].abs() * (t[n - 1] - t[0]) < 1e-9 {
        flags.push("degenerate".to_string());
    }
    let (r, a, o) = (p[0], p[1], p[2]);
    Ok(build_result(M, &["rate", "amplitude", "offset"], &out, p, t, y, a, |tv| exp_decay(tv, r, a, o), flags))
}

/// Log-linear regression of `ln|y − C|` against `t`, with the asymptote `C`
/// taken from the three-point (Aitken) estimate on the first, middle and last
/// samples, falling back to the final sample.
fn exp_initial_guess(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len();
    let (y0, y1, y2) = (y[0], y[n / 2], y[n - 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let mut c = if denom.abs() > 1e-14 * span(y) {
        (y0 * y2 - y1 * y1) / denom
    } else {
        y2
    };
    // the asymptote must lie beyond the last sample, on the far side of the first
    if !c.is_finite() || (y0 - c) * (y2 - c) <= 0.0 {
        c = y2 - 1e-3 * (y0 - y2);
    }
    let amp_scale = (y0 - c).abs();
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| (v - c).abs() > 0.02 * amp_scale && (v - c) * (y0 - c) > 0.0)
        .map(|(&tt, &v)| (tt, (v - c).abs().ln()))
        .collect();
    let rate = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let st: f64 = pts.iter().map(|p| p.0).sum();
        let sl: f64 = pts.iter().map(|p| p.1).sum();
        let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let stl: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * stl - st * sl) / (m * stt - st * st);
        -slope
    } else {
        1.0 / (t[n - 1] - t[0])
    };
    let rate = if rate.is_finite() && rate > 0.0 {
        rate
    } else {
        1.0 / (t[n - 1] - t[0])
    };
    let amp = (y0 - c) * (rate * t[0]).exp();
    (rate, amp, c)
}

/// `T₂* = 2√ln2 / (π·Γ₂*)` with Γ₂* the Gaussian FWHM in MHz; result in μs.
pub fn t2star_from_fwhm(fwhm: f64) -> Result<f64> {
    if !(fwhm > 0.0 && fwhm.is_finite()) {
        return Err(NvError::NonPositiveWidth(fwhm));
    }
    Ok(2.0 * LN_2.sqrt() / (PI * fwhm))
}

pub fn fwhm_from_t2star(t2star: f64) -> Result<f64> {
    if !(t2star > 0.0 && t2star.is_finite()) {
        return Err(NvError::NonPositiveWidth(t2star));
    }
    Ok(2.0 * LN_2.sqrt() / (PI * t2star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transitions::linspace;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gaussian_round_trip() {
        let x = linspace(2869.0, 2871.0, 201);
        let y: Vec<f64> = x.iter().map(|&v| gaussian(v, 2870.1, 0.237, -0.03, 1.0)).collect();
        let r = fit_gaussian(&x, &y).unwrap();
        assert!(r.converged);
        assert!(rel(r.get("fwhm"), 0.237) < 1e-6);
        assert!(rel(r.get("center"), 2870.1) < 1e-9);
    }

    #[test]
    fn flat_traces_fail() {
        let x = linspace(0.0, 1.0, 20);
        let y = vec![0.7; 20];
        assert!(matches!(fit_gaussian(&x, &y), Err(NvError::FitFailure { .. })));
        assert!(matches!(fit_lorentzian(&x, &y), Err(NvError::FitFailure { .. })));
        assert!(matches!(fit_damped_sin(&x, &y), Err(NvError::FitFailure { .. })));
        let r = fit_exp_decay(&x, &y).unwrap();
        assert_eq!(r.get("rate"), 0.0);
        assert!(r.has_flag("degenerate"));
    }

    #[test]
    fn lorentzian_round_trip() {
        let x = linspace(-0.05, 0.05, 301);
        let y: Vec<f64> = x.iter().map(|&v| lorentzian(v, 0.001, 0.0082, 0.95, 0.8)).collect();
        let r = fit_lorentzian(&x, &y).unwrap();
        assert!(rel(r.get("fwhm"), 0.0082) < 1e-6);
        assert!(rel(r.get("contrast"), 0.95) < 1e-6);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn contrast_is_clamped() {
        let x = linspace(-1.0, 1.0, 101);
        // a peak in a dip model is a negative contrast
        let y: Vec<f64> = x.iter().map(|&v| lorentzian(v, 0.0, 0.2, -0.3, 1.0)).collect();
        let r = fit_lorentzian(&x, &y).unwrap();
        assert_eq!(r.get("contrast"), 0.0);
        assert!(r.has_flag("contrast_clamped"));
    }

    #[test]
    fn damped_sin_round_trips() {
        for (w, tau) in [(0.147, 22.0), (0.138, 26.0)] {
            let t = linspace(0.0, 40.0, 401);
            let y: Vec<f64> = t.iter().map(|&v| damped_sin(v, w, tau, 0.0, 0.5, 0.5)).collect();
            let r = fit_damped_sin(&t, &y).unwrap();
            assert!(rel(r.get("omega"), w) < 1e-6, "{r:?}");
            assert!(rel(r.get("tau"), tau) < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn exp_round_trip_and_biexponential_flag() {
        let t = linspace(0.0, 300.0, 301);
        let y: Vec<f64> = t.iter().map(|&v| exp_decay(v, 0.0225, 0.4, 0.1)).collect();
        let r = fit_exp_decay(&t, &y).unwrap();
        assert!(rel(r.get("rate"), 0.0225) < 1e-6);
        assert!(r.converged);

        let y: Vec<f64> = t.iter().map(|&v| 0.5 * (-0.2 * v).exp() + 0.5 * (-0.005 * v).exp()).collect();
        let r = fit_exp_decay(&t, &y).unwrap();
        assert!(r.has_flag("residual_exceeds_threshold"));
        assert!(r.failure().is_some());
    }

    #[test]
    fn t2star_values() {
        let t = t2star_from_fwhm(0.237).unwrap();
        assert!((t - 2.24).abs() < 0.005);
        assert!((t2star_from_fwhm(0.474).unwrap() - t / 2.0).abs() < 1e-15);
        assert!((t2star_from_fwhm(fwhm_from_t2star(2.2).unwrap()).unwrap() - 2.2).abs() < 1e-12);
        assert_eq!(t2star_from_fwhm(0.0), Err(NvError::NonPositiveWidth(0.0)));
    }
}
