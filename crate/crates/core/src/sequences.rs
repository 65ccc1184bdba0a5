//! Driven protocols: Rabi oscillations, CPT in an effective Λ system, and
//! the optical/microwave nuclear-polarization sequence.
//!
//! Rabi frequencies Ω and detunings are quoted as Ω/2π in MHz.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};
use crate::fitting::{fit_lorentzian, FitResult};
use crate::lindblad::{dense_liouvillian, Channel, DensityMatrix, LindbladModel, OpenSystem, BLOCKS, DIM};
use crate::linalg::{block_diag, c, CMat};
use crate::spin::{electron_operator, BareState, EigenSystem};
use crate::trace::{SpectrumTrace, TimeTrace};
use crate::transitions::{linspace, synth_weighted, transition_table, Branch, DriveAxis, FamilyTag};
use crate::C64;

/// Stark-correction iterations for the pump tone frequency.
pub const STARK_ITERATIONS: usize = 8;

fn lindblad_with_dephasing(h: &CMat, jumps: &[CMat], dephasing: &[(usize, usize, f64)]) -> DMatrix<C64> {
    let n = h.nrows();
    let mut l = dense_liouvillian(h, jumps);
    // extra decay of ρ_ab and ρ_ba at the given rate (column stacking: ρ[a,b] ↦ b·n + a)
    for &(a, b, g) in dephasing {
        for (i, j) in [(a, b), (b, a)] {
            l[(j * n + i, j * n + i)] -= c(g, 0.0);
        }
    }
    l
}

fn dense_steady_state(l: &DMatrix<C64>, n: usize) -> Result<CMat> {
    let svd = SVD::new(l.clone(), false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let smax = s.max();
    let null = s.iter().filter(|&&x| x <= 1e-12 * smax).count();
    if null > 1 {
        return Err(NvError::NonUniqueSteadyState { dim: null });
    }
    let k = (0..s.len()).min_by(|&a, &b| s[a].total_cmp(&s[b])).expect("non-empty");
    let v: Vec<C64> = v_t.row(k).iter().map(|z| z.conj()).collect();
    let rho = CMat::from_column_slice(n, n, &v);
    let tr = rho.trace();
    let rho = rho / tr;
    Ok((&rho + rho.adjoint()) * c(0.5, 0.0))
}

/// Excited-state population of a resonantly or detuned driven two-level
/// system with coherence decay rate `gamma_dephase`, starting in the ground
/// state.
pub fn rabi_trace(omega: f64, delta: f64, gamma_dephase: f64, times: &[f64]) -> Result<TimeTrace> {
    if !(omega > 0.0) {
        return Err(NvError::invalid("Rabi frequency must be positive"));
    }
    if gamma_dephase < 0.0 {
        return Err(NvError::invalid("dephasing rate must be >= 0"));
    }
    let h = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(omega / 2.0, 0.0), c(omega / 2.0, 0.0), c(-delta, 0.0)]);
    let l = lindblad_with_dephasing(&h, &[], &[(0, 1, gamma_dephase)]);
    let mut rho0 = CMat::zeros(2, 2);
    rho0[(0, 0)] = c(1.0, 0.0);
    let v0 = DVector::from_column_slice(rho0.as_slice());
    let values = times
        .iter()
        .map(|&t| ((&l * c(t, 0.0)).exp() * &v0)[3].re)
        .collect();
    Ok(TimeTrace::new(times.to_vec(), values, "p_excited")?
        .with_meta("omega_mhz", omega)
        .with_meta("delta_mhz", delta)
        .with_meta("gamma_dephase_mhz", gamma_dephase))
}

/// Effective Λ system: `g1 = |0,0⟩~`, `g2 = |0,−1⟩~`, `e = |−1,−1⟩~`, with
/// `Ω_a` on g1 ↔ e and `Ω_1` on g2 ↔ e. Laser-induced rates scale with
/// `gamma_las`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaModel {
    pub omega_a: f64,
    pub omega_1: f64,
    /// Common single-photon detuning (MHz).
    pub delta: f64,
    /// Optical repolarization rate out of e.
    pub gamma_las: f64,
    /// Fraction of `gamma_las` decaying e → g2; the rest goes to g1.
    pub branching_g2: f64,
    /// Extra e → g1 rate as a fraction of `gamma_las`.
    pub e2g1_fraction: f64,
    /// g1 ↔ g2 exchange rate (each direction) as a fraction of `gamma_las`.
    pub g2g1_fraction: f64,
    /// Decay rate of the e–g coherences (MHz).
    pub dephasing_eg: f64,
    /// Decay rate of the g1–g2 coherence (MHz).
    pub dephasing_gg: f64,
}

impl Default for LambdaModel {
    fn default() -> Self {
        Self {
            omega_a: 0.0306,
            omega_1: 0.0129,
            delta: 0.0,
            gamma_las: 0.018,
            branching_g2: 1.0,
            e2g1_fraction: 0.1,
            g2g1_fraction: 0.05,
            // 1/T2* for a 0.237 MHz Gaussian linewidth
            dephasing_eg: PI * 0.237 / (2.0 * std::f64::consts::LN_2.sqrt()),
            dephasing_gg: 0.0,
        }
    }
}

impl LambdaModel {
    /// No ground relaxation, no dephasing.
    pub fn ideal(omega_a: f64, omega_1: f64, gamma_las: f64) -> Self {
        Self {
            omega_a,
            omega_1,
            gamma_las,
            e2g1_fraction: 0.0,
            g2g1_fraction: 0.0,
            dephasing_eg: 0.0,
            dephasing_gg: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_a", self.omega_a),
            ("omega_1", self.omega_1),
            ("gamma_las", self.gamma_las),
            ("e2g1_fraction", self.e2g1_fraction),
            ("g2g1_fraction", self.g2g1_fraction),
            ("dephasing_eg", self.dephasing_eg),
            ("dephasing_gg", self.dephasing_gg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(NvError::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.branching_g2) {
            return Err(NvError::invalid("branching_g2 must lie in [0, 1]"));
        }
        if !self.delta.is_finite() {
            return Err(NvError::invalid("delta is not finite"));
        }
        Ok(())
    }

    fn liouvillian(&self, two_photon: f64) -> DMatrix<C64> {
        let (g1, g2, e) = (0, 1, 2);
        let da = self.delta + two_photon / 2.0;
        let d1 = self.delta - two_photon / 2.0;
        let mut h = CMat::zeros(3, 3);
        h[(e, e)] = c(-da, 0.0);
        h[(g2, g2)] = c(-(da - d1), 0.0);
        h[(e, g1)] = c(self.omega_a / 2.0, 0.0);
        h[(g1, e)] = h[(e, g1)];
        h[(e, g2)] = c(self.omega_1 / 2.0, 0.0);
        h[(g2, e)] = h[(e, g2)];
        let mut jumps = Vec::new();
        let mut jump = |from: usize, to: usize, rate: f64| {
            if rate > 0.0 {
                let mut m = CMat::zeros(3, 3);
                m[(to, from)] = c(rate.sqrt(), 0.0);
                jumps.push(m);
            }
        };
        jump(e, g2, self.branching_g2 * self.gamma_las);
        jump(e, g1, (1.0 - self.branching_g2 + self.e2g1_fraction) * self.gamma_las);
        jump(g1, g2, self.g2g1_fraction * self.gamma_las);
        jump(g2, g1, self.g2g1_fraction * self.gamma_las);
        lindblad_with_dephasing(
            &h,
            &jumps,
            &[(g1, e, self.dephasing_eg), (g2, e, self.dephasing_eg), (g1, g2, self.dephasing_gg)],
        )
    }

    /// Steady state at two-photon detuning `two_photon` (MHz), basis (g1, g2, e).
    pub fn steady_state(&self, two_photon: f64) -> Result<CMat> {
        self.validate()?;
        dense_steady_state(&self.liouvillian(two_photon), 3)
    }

    /// Normalized dark state `Ω_1|g1⟩ − Ω_a|g2⟩`.
    pub fn dark_state(&self) -> DVector<C64> {
        let v = DVector::from_vec(vec![c(self.omega_1, 0.0), c(-self.omega_a, 0.0), c(0.0, 0.0)]);
        let n = v.norm();
        v / c(n, 0.0)
    }
}

pub fn cpt_excited_population(model: &LambdaModel, two_photon: f64) -> Result<f64> {
    Ok(model.steady_state(two_photon)?[(2, 2)].re)
}

/// `⟨D|ρ_ss|D⟩` at two-photon resonance.
pub fn dark_state_fidelity(model: &LambdaModel) -> Result<f64> {
    let rho = model.steady_state(0.0)?;
    let d = model.dark_state();
    Ok((d.adjoint() * rho * d)[(0, 0)].re)
}

/// Steady-state excited population versus two-photon detuning, normalized
/// to its value at the grid end farthest from resonance (1 = the plain
/// ODMR dip level, 0 = complete transparency).
pub fn cpt_spectrum(model: &LambdaModel, grid: &[f64]) -> Result<SpectrumTrace> {
    model.validate()?;
    if !(model.omega_a > 0.0 && model.omega_1 > 0.0 && model.gamma_las > 0.0) {
        return Err(NvError::invalid("CPT needs both drives and gamma_las positive"));
    }
    if grid.is_empty() {
        return SpectrumTrace::new(vec![], vec![]);
    }
    let pe: Vec<f64> = grid
        .par_iter()
        .map(|&d| cpt_excited_population(model, d))
        .collect::<Result<_>>()?;
    let far = if grid[0].abs() >= grid[grid.len() - 1].abs() { 0 } else { grid.len() - 1 };
    let base = pe[far];
    if !(base > 0.0) {
        return Err(NvError::invalid("far-detuned excited population vanishes"));
    }
    Ok(SpectrumTrace::new(grid.to_vec(), pe.iter().map(|p| p / base).collect())?
        .with_meta("baseline_excited_population", base)
        .with_meta("omega_a_mhz", model.omega_a)
        .with_meta("omega_1_mhz", model.omega_1)
        .with_meta("gamma_las_mhz", model.gamma_las))
}

/// Spectrum on an automatically sized grid plus its Lorentzian fit. The
/// half-span starts at 30 kHz and is widened or narrowed until it covers
/// between 4 and 40 fitted linewidths. Each pass narrows by at most 10×, so
/// a dip that falls between grid points is resolved step by step instead of
/// trusting a fit to a single sample.
pub fn cpt_spectrum_fitted(model: &LambdaModel, points: usize) -> Result<(SpectrumTrace, FitResult)> {
    let mut half = 0.03;
    let mut last = None;
    for _ in 0..24 {
        let grid = linspace(-half, half, points);
        let spec = cpt_spectrum(model, &grid)?;
        let fit = fit_lorentzian(&spec.frequency_mhz, &spec.signal)?;
        let w = fit.get("fwhm");
        let span = 2.0 * half / w;
        let done = fit.converged && w > 0.0 && (4.0..=40.0).contains(&span);
        last = Some((spec, fit));
        if done {
            break;
        }
        half = if w > 0.0 && span > 40.0 { (10.0 * w).max(half / 10.0) } else { half * 2.0 };
    }
    Ok(last.expect("at least one pass"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CptSweepVariable {
    Omega1,
    GammaLas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptScalingRow {
    pub x: f64,
    pub fwhm: f64,
    pub contrast: f64,
    pub fit_ok: bool,
    pub error: Option<String>,
}

/// FWHM and contrast of the fitted CPT peak along a sweep. Fit failures are
/// tabulated, not raised.
pub fn cpt_scaling(model: &LambdaModel, variable: CptSweepVariable, values: &[f64], points: usize) -> Result<Vec<CptScalingRow>> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(NvError::invalid("sweep values must be positive"));
    }
    Ok(values
        .par_iter()
        .map(|&x| {
            let m = match variable {
                CptSweepVariable::Omega1 => LambdaModel { omega_1: x, ..*model },
                CptSweepVariable::GammaLas => LambdaModel { gamma_las: x, ..*model },
            };
            match cpt_spectrum_fitted(&m, points) {
                Ok((_, fit)) => CptScalingRow {
                    x,
                    fwhm: fit.get("fwhm"),
                    contrast: fit.get("contrast"),
                    fit_ok: fit.converged,
                    error: fit.failure().map(|e| e.to_string()),
                },
                Err(e) => CptScalingRow {
                    x,
                    fwhm: f64::NAN,
                    contrast: f64::NAN,
                    fit_ok: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Microwave tone on one or more line families (several families share one
/// tone at their mean frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveTone {
    pub targets: Vec<FamilyTag>,
    /// Rabi frequency Ω/2π on the first target (MHz).
    pub omega: f64,
    /// Offset from the Stark-corrected resonance (MHz).
    #[serde(default)]
    pub detuning: f64,
    #[serde(default)]
    pub axis: DriveAxis,
}

impl DriveTone {
    pub fn new(targets: Vec<FamilyTag>, omega: f64) -> Self {
        Self {
            targets,
            omega,
            detuning: 0.0,
            axis: DriveAxis::X,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(NvError::invalid("drive tone needs at least one target family"));
        }
        let b = self.targets[0].branch;
        if self.targets.iter().any(|t| t.branch != b) {
            return Err(NvError::invalid("all targets of a tone must share a branch"));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(NvError::invalid("tone Rabi frequency must be >= 0"));
        }
        Ok(())
    }
}

/// Stage lengths in μs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceDurations {
    pub polarize: f64,
    pub pump: f64,
    pub repolarize: f64,
    pub read: f64,
}

impl Default for SequenceDurations {
    fn default() -> Self {
        Self {
            polarize: 100.0,
            pump: 300.0,
            repolarize: 100.0,
            read: 25.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceResult {
    /// Ground-normalized nuclear populations for m_I = +1, 0, −1.
    pub nuclear_populations: [f64; 3],
    /// m_I populations (same order) at the end of each stage.
    pub stage_populations: Vec<[f64; 3]>,
    /// Largest |tr ρ − 1| seen at stage boundaries.
    pub max_trace_error: f64,
    /// Tone frequency after Stark correction and detuning (MHz).
    pub tone_frequency: f64,
    pub target_strength: f64,
    #[serde(skip)]
    pub readout: SpectrumTrace,
}

/// Open system in a frame rotating at `frame[i]` (MHz) for ground
/// eigenstate `i`, with extra ground-block couplings `drive` (eigenbasis,
/// MHz). Jumps are split by frame frequency and the oscillating cross terms
/// dropped.
fn rotating_frame_system(model: &LindbladModel, ground: &EigenSystem, frame: &[f64], drive: &CMat) -> Result<OpenSystem> {
    let id9 = CMat::identity(9, 9);
    let id3 = CMat::identity(3, 3);
    let w = block_diag(&[&ground.vectors, &id9, &id3]);
    let mut h = w.adjoint() * model.hamiltonian() * &w;
    for i in 0..9 {
        h[(i, i)] -= c(frame[i], 0.0);
        for j in 0..9 {
            h[(i, j)] += drive[(i, j)];
        }
    }
    let h = (&h + h.adjoint()) * c(0.5, 0.0);

    let mut classes: Vec<f64> = Vec::new();
    for &f in frame {
        if !classes.contains(&f) {
            classes.push(f);
        }
    }
    let projector = |f: f64| {
        CMat::from_fn(DIM, DIM, |i, j| {
            let member = if i < 9 { frame[i] == f } else { f == 0.0 };
            if i == j && member {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    };
    // non-ground states belong to the zero-frequency class
    if !classes.contains(&0.0) {
        classes.push(0.0);
    }
    let projectors: Vec<CMat> = classes.iter().map(|&f| projector(f)).collect();
    let mut channels = Vec::new();
    for j in &model.jumps {
        let ch = Channel::from_jump(j, DIM).transformed(&w);
        for pl in &projectors {
            for pr in &projectors {
                let piece = ch.projected(pl, pr);
                if !piece.is_zero() {
                    channels.push(piece);
                }
            }
        }
    }
    OpenSystem::new(h, channels, &BLOCKS)
}

fn nuclear_populations(rho: &DensityMatrix, ground: &EigenSystem) -> Result<[f64; 3]> {
    let mut pops = [0.0; 3];
    for i in 0..9 {
        let mi = ground.label(i)?.mi.expect("electron-nuclear label");
        pops[crate::spin::index_of_m(mi)] += rho.matrix[(i, i)].re;
    }
    let total: f64 = pops.iter().sum();
    Ok(pops.map(|p| p / total))
}

/// Laser polarization, microwave pump on the targeted families, laser
/// repolarization, then a synthetic read-out spectrum weighted by the final
/// nuclear populations. Starts from a maximally mixed ground manifold.
pub fn polarization_sequence(model: &LindbladModel, pump: &DriveTone, durations: &SequenceDurations) -> Result<SequenceResult> {
    pump.validate()?;
    for (name, d) in [
        ("polarize", durations.polarize),
        ("pump", durations.pump),
        ("repolarize", durations.repolarize),
        ("read", durations.read),
    ] {
        if !(d > 0.0 && d.is_finite()) {
            return Err(NvError::invalid(format!("{name} duration must be positive")));
        }
    }
    let ground = model.ground_eigensystem()?;
    let branch = pump.targets[0].branch;
    let table = transition_table(&ground, branch)?;
    let targets: Vec<(usize, usize, f64)> = pump
        .targets
        .iter()
        .map(|t| {
            let r = crate::transitions::find_family(&table, *t)?;
            Ok((r.from_index, r.to_index, r.frequency))
        })
        .collect::<Result<_>>()?;

    // drive operator between the m_S = 0 and m_S = branch ground eigenstates
    let op9 = ground.vectors.adjoint() * electron_operator(&pump.axis.electron_operator()) * &ground.vectors;
    let is_upper: Vec<bool> = (0..9).map(|i| ground.label(i).map(|l| l.ms == Some(branch.ms()))).collect::<Result<_>>()?;
    let is_zero: Vec<bool> = (0..9).map(|i| ground.label(i).map(|l| l.ms == Some(0))).collect::<Result<_>>()?;
    let (g0, e0, _) = targets[0];
    let strength = op9[(e0, g0)].norm();
    let amplitude = if pump.omega > 0.0 {
        if strength < crate::transitions::DEGENERATE_STRENGTH {
            return Err(NvError::DegenerateDenominator {
                theta: model.field.theta,
                strength,
            });
        }
        pump.omega / strength
    } else {
        0.0
    };
    let mut drive = CMat::zeros(9, 9);
    for i in 0..9 {
        for j in 0..9 {
            if (is_upper[i] && is_zero[j]) || (is_zero[i] && is_upper[j]) {
                drive[(i, j)] = op9[(i, j)] * c(amplitude / 2.0, 0.0);
            }
        }
    }

    // tone frequency: mean target frequency, corrected for the light shifts of
    // all non-target couplings
    let mut omega = targets.iter().map(|t| t.2).sum::<f64>() / targets.len() as f64;
    let sign = branch_sign(branch, &ground, g0, e0);
    for _ in 0..STARK_ITERATIONS {
        let mut hg = CMat::zeros(9, 9);
        for i in 0..9 {
            let f = if is_upper[i] { sign * omega } else { 0.0 };
            hg[(i, i)] = c(ground.energies[i] - f, 0.0);
        }
        let mut d = drive.clone();
        for &(g, e, _) in &targets {
            d[(g, e)] = c(0.0, 0.0);
            d[(e, g)] = c(0.0, 0.0);
        }
        let eig = SymmetricEigen::new(hg + d);
        let dressed = |k: usize| {
            let col = (0..9)
                .max_by(|&a, &b| eig.eigenvectors[(k, a)].norm().total_cmp(&eig.eigenvectors[(k, b)].norm()))
                .expect("nine columns");
            eig.eigenvalues[col]
        };
        let shift = targets.iter().map(|&(g, e, _)| dressed(e) - dressed(g)).sum::<f64>() / targets.len() as f64;
        omega += sign * shift;
    }
    omega += pump.detuning;

    let frame: Vec<f64> = (0..9).map(|i| if is_upper[i] { sign * omega } else { 0.0 }).collect();
    let laser = rotating_frame_system(model, &ground, &frame, &CMat::zeros(9, 9))?;
    let pumped = rotating_frame_system(model, &ground, &frame, &drive)?;

    let mut p0 = vec![0.0; DIM];
    p0[..9].fill(1.0 / 9.0);
    let mut rho = DensityMatrix::from_populations(&p0);
    let mut stage_populations = Vec::new();
    let mut max_trace_error: f64 = 0.0;
    for (sys, t) in [(&laser, durations.polarize), (&pumped, durations.pump), (&laser, durations.repolarize)] {
        rho = sys.propagate(&rho, t)?;
        max_trace_error = max_trace_error.max((rho.trace() - 1.0).abs());
        stage_populations.push(nuclear_populations(&rho, &ground)?);
        // renormalize away round-off so the next stage sees a valid state
        let tr = rho.trace();
        rho.matrix /= c(tr, 0.0);
    }
    let nuc = *stage_populations.last().expect("three stages");

    // read-out: all lines of the branch, weighted by the population of the
    // nuclear state they start from
    let weights: Vec<f64> = table
        .iter()
        .map(|r| nuc[crate::spin::index_of_m(r.from_label.mi.expect("labeled"))] * r.strength(pump.axis).powi(2))
        .collect();
    let fmin = table.iter().map(|r| r.frequency).fold(f64::INFINITY, f64::min);
    let fmax = table.iter().map(|r| r.frequency).fold(f64::NEG_INFINITY, f64::max);
    let grid = linspace(fmin - 2.0, fmax + 2.0, 801);
    let readout = synth_weighted(&table, &weights, 0.237, 0.1, &grid)?.with_meta("read_duration_us", durations.read);

    Ok(SequenceResult {
        nuclear_populations: nuc,
        stage_populations,
        max_trace_error,
        tone_frequency: omega,
        target_strength: strength,
        readout,
    })
}

/// +1 when the upper state of the target lies above the lower one.
fn branch_sign(_branch: Branch, ground: &EigenSystem, g: usize, e: usize) -> f64 {
    if ground.energies[e] >= ground.energies[g] {
        1.0
    } else {
        -1.0
    }
}

/// Look up a labeled pair's eigenindices.
pub fn pair_indices(ground: &EigenSystem, from: BareState, to: BareState) -> Result<(usize, usize)> {
    Ok((ground.index_of(from)?, ground.index_of(to)?))
}
