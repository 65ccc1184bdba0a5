//! 21-level open-system dynamics, `dρ/dt = −i·2π[H, ρ] + Σ_k (L ρ L† − ½{L†L, ρ})`.
//!
//! Every jump operator used here is rank one, `L = |u⟩⟨w|`, with `u` and `w`
//! each confined to one manifold, and the Hamiltonian is block diagonal. A
//! state whose manifold blocks are the only non-zero ones therefore stays
//! block diagonal, and the diagonal blocks evolve under a closed real linear
//! generator of dimension Σ n_b² (171 for 9 + 9 + 3). Off-diagonal blocks
//! decouple and evolve as `ρ_ab(t) = e^{A_a t} ρ_ab e^{A_b† t}` with
//! `A = −i2πH − ½Σ L†L`. Both parts are propagated with exact matrix
//! exponentials, one per distinct time step.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};
use crate::fitting::{fit_exp_decay, FitResult};
use crate::linalg::{block_diag, c, hermiticity_deviation, CMat, RMat};
use crate::params::{FieldConfig, NvParams};
use crate::photophysics::{
    build_electron_rate_matrix, extend_to_nuclear, k_las_for_repolarization_rate, RateSet, RateUncertainty,
};
use crate::spin::{
    build_excited_hamiltonian, build_ground_hamiltonian, build_metastable_hamiltonian, labeled_ground, BareState,
    EigenSystem, MetastableModel,
};
use crate::trace::TimeTrace;
use crate::C64;

pub const DIM: usize = 21;
pub const BLOCKS: [usize; 3] = [9, 9, 3];
/// Largest tolerated drift of tr ρ over an evolution.
pub const TRACE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: CMat,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn pure(ket: &DVector<C64>) -> Self {
        let k = ket / c(ket.norm(), 0.0);
        Self {
            matrix: &k * k.adjoint(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMat::identity(dim, dim) * c(1.0 / dim as f64, 0.0),
        }
    }

    /// Diagonal state with the given populations.
    pub fn from_populations(p: &[f64]) -> Self {
        Self {
            matrix: CMat::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|&x| c(x, 0.0)))),
        }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * c(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    /// Hermitian to 1e−10, unit trace to 1e−10, eigenvalues above −1e−8.
    pub fn validate(&self) -> Result<()> {
        if !self.matrix.is_square() {
            return Err(NvError::InvalidInitialState("density matrix is not square".into()));
        }
        let dev = hermiticity_deviation(&self.matrix);
        if dev > 1e-10 {
            return Err(NvError::InvalidInitialState(format!("not Hermitian (deviation {dev:e})")));
        }
        let tr = self.matrix.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(NvError::InvalidInitialState(format!("trace {tr} differs from 1")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -1e-8 {
            return Err(NvError::InvalidInitialState(format!("negative eigenvalue {lmin:e}")));
        }
        Ok(())
    }

    /// `⟨v|ρ|v⟩`.
    pub fn expectation(&self, v: &DVector<C64>) -> f64 {
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }
}

/// Incoherent transition `from → to` in the bare basis, `L = √rate |to⟩⟨from|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpOperator {
    pub rate: f64,
    pub from: usize,
    pub to: usize,
}

impl JumpOperator {
    pub fn matrix(&self, dim: usize) -> CMat {
        let mut m = CMat::zeros(dim, dim);
        m[(self.to, self.from)] = c(self.rate.sqrt(), 0.0);
        m
    }
}

/// Rank-one jump `L = |ket⟩⟨bra|`, rate folded into the vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub ket: DVector<C64>,
    pub bra: DVector<C64>,
}

impl Channel {
    pub fn from_jump(j: &JumpOperator, dim: usize) -> Self {
        let mut ket = DVector::zeros(dim);
        let mut bra = DVector::zeros(dim);
        ket[j.to] = c(j.rate.sqrt(), 0.0);
        bra[j.from] = c(1.0, 0.0);
        Self { ket, bra }
    }

    /// `U†·L·U`.
    pub fn transformed(&self, u: &CMat) -> Self {
        Self {
            ket: u.adjoint() * &self.ket,
            bra: u.adjoint() * &self.bra,
        }
    }

    /// `P·L·Q` for projectors `P`, `Q`.
    pub fn projected(&self, left: &CMat, right: &CMat) -> Self {
        Self {
            ket: left * &self.ket,
            bra: right.adjoint() * &self.bra,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ket.norm() * self.bra.norm() < 1e-300
    }

    pub fn matrix(&self) -> CMat {
        &self.ket * self.bra.adjoint()
    }
}

struct Propagator {
    diag: RMat,
    /// `e^{A_b dt}` per block.
    blocks: Vec<CMat>,
}

/// Hamiltonian plus rank-one jump channels on a block-structured space.
pub struct OpenSystem {
    pub hamiltonian: CMat,
    pub channels: Vec<Channel>,
    pub blocks: Vec<usize>,
    offsets: Vec<usize>,
    a_eff: CMat,
    generator: OnceLock<RMat>,
}

impl std::fmt::Debug for OpenSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenSystem")
            .field("dim", &self.dim())
            .field("blocks", &self.blocks)
            .field("channels", &self.channels.len())
            .finish()
    }
}

fn block_of(offsets: &[usize], sizes: &[usize], v: &DVector<C64>) -> Option<usize> {
    let mut found = None;
    for (b, (&o, &n)) in offsets.iter().zip(sizes).enumerate() {
        if v.rows(o, n).iter().any(|z| z.norm() > 0.0) {
            if found.is_some() {
                return None;
            }
            found = Some(b);
        }
    }
    found.or(Some(0))
}

impl OpenSystem {
    /// Falls back to a single block when `h` or a channel straddles the
    /// requested block structure.
    pub fn new(hamiltonian: CMat, channels: Vec<Channel>, blocks: &[usize]) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if blocks.iter().sum::<usize>() != dim {
            return Err(NvError::DimensionMismatch {
                expected: dim,
                got: blocks.iter().sum(),
            });
        }
        let dev = hermiticity_deviation(&hamiltonian);
        if dev > 1e-10 * crate::linalg::max_abs(&hamiltonian).max(1.0) {
            return Err(NvError::NotHermitian { deviation: dev });
        }
        for ch in &channels {
            if ch.ket.len() != dim || ch.bra.len() != dim {
                return Err(NvError::DimensionMismatch {
                    expected: dim,
                    got: ch.ket.len(),
                });
            }
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        for &n in blocks {
            offsets.push(acc);
            acc += n;
        }
        let block_id = |k: usize| offsets.iter().rposition(|&o| o <= k).expect("offset 0 exists");
        let h_blocky = (0..dim).all(|i| (0..dim).all(|j| block_id(i) == block_id(j) || hamiltonian[(i, j)].norm() == 0.0));
        let ch_blocky = channels
            .iter()
            .all(|ch| block_of(&offsets, blocks, &ch.ket).is_some() && block_of(&offsets, blocks, &ch.bra).is_some());
        let (blocks, offsets) = if h_blocky && ch_blocky {
            (blocks.to_vec(), offsets)
        } else {
            (vec![dim], vec![0])
        };
        let mut k = CMat::zeros(dim, dim);
        for ch in &channels {
            k += &ch.bra * ch.bra.adjoint() * c(ch.ket.norm_squared(), 0.0);
        }
        let a_eff = &hamiltonian * c(0.0, -2.0 * std::f64::consts::PI) - k * c(0.5, 0.0);
        Ok(Self {
            hamiltonian,
            channels,
            blocks,
            offsets,
            a_eff,
            generator: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// Real dimension of the block-diagonal state space.
    pub fn real_dim(&self) -> usize {
        self.blocks.iter().map(|n| n * n).sum()
    }

    /// `L(ρ)` for an arbitrary matrix.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = &self.a_eff * rho + rho * self.a_eff.adjoint();
        for ch in &self.channels {
            let w = (ch.bra.adjoint() * rho * &ch.bra)[(0, 0)];
            out += &ch.ket * ch.ket.adjoint() * w;
        }
        out
    }

    fn to_coords(&self, rho: &CMat) -> DVector<f64> {
        let mut v = DVector::zeros(self.real_dim());
        let mut k = 0;
        for (&o, &n) in self.offsets.iter().zip(&self.blocks) {
            for i in 0..n {
                v[k] = rho[(o + i, o + i)].re;
                k += 1;
            }
            for i in 0..n {
                for j in i + 1..n {
                    let z = rho[(o + i, o + j)];
                    v[k] = z.re;
                    v[k + 1] = z.im;
                    k += 2;
                }
            }
        }
        v
    }

    fn write_coords(&self, v: &DVector<f64>, rho: &mut CMat) {
        let mut k = 0;
        for (&o, &n) in self.offsets.iter().zip(&self.blocks) {
            for i in 0..n {
                rho[(o + i, o + i)] = c(v[k], 0.0);
                k += 1;
            }
            for i in 0..n {
                for j in i + 1..n {
                    let z = c(v[k], v[k + 1]);
                    rho[(o + i, o + j)] = z;
                    rho[(o + j, o + i)] = z.conj();
                    k += 2;
                }
            }
        }
    }

    /// Real generator acting on the block-diagonal coordinates.
    pub fn generator(&self) -> &RMat {
        self.generator.get_or_init(|| {
            let n = self.real_dim();
            let dim = self.dim();
            let cols: Vec<DVector<f64>> = (0..n)
                .into_par_iter()
                .map(|k| {
                    let mut e = DVector::zeros(n);
                    e[k] = 1.0;
                    let mut basis = CMat::zeros(dim, dim);
                    self.write_coords(&e, &mut basis);
                    self.to_coords(&self.apply(&basis))
                })
                .collect();
            RMat::from_columns(&cols)
        })
    }

    fn propagator(&self, dt: f64) -> Propagator {
        let diag = (self.generator() * dt).exp();
        let blocks = self
            .offsets
            .iter()
            .zip(&self.blocks)
            .map(|(&o, &n)| (self.a_eff.view((o, o), (n, n)) * c(dt, 0.0)).exp())
            .collect();
        Propagator { diag, blocks }
    }

    fn step(&self, p: &Propagator, rho: &CMat) -> CMat {
        let dim = self.dim();
        let mut out = CMat::zeros(dim, dim);
        self.write_coords(&(&p.diag * self.to_coords(rho)), &mut out);
        let nb = self.blocks.len();
        for a in 0..nb {
            for b in 0..nb {
                if a == b {
                    continue;
                }
                let (oa, na, ob, nb_) = (self.offsets[a], self.blocks[a], self.offsets[b], self.blocks[b]);
                let blk = rho.view((oa, ob), (na, nb_));
                if blk.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                let evolved = &p.blocks[a] * blk * p.blocks[b].adjoint();
                out.view_mut((oa, ob), (na, nb_)).copy_from(&evolved);
            }
        }
        out
    }

    /// Evolve `rho0` (given at t = 0) and call `visit(k, ρ(t_k))` for every
    /// requested time.
    pub fn evolve_with(
        &self,
        rho0: &DensityMatrix,
        times: &[f64],
        mut visit: impl FnMut(usize, &DensityMatrix),
    ) -> Result<()> {
        if rho0.dim() != self.dim() {
            return Err(NvError::InvalidInitialState(format!(
                "dimension {} does not match model dimension {}",
                rho0.dim(),
                self.dim()
            )));
        }
        rho0.validate()?;
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(NvError::invalid("time grid must be ascending and non-negative"));
        }
        let mut cache: HashMap<u64, Propagator> = HashMap::new();
        let tr0 = rho0.trace();
        let mut rho = rho0.matrix.clone();
        let mut now = 0.0;
        for (k, &t) in times.iter().enumerate() {
            let dt = t - now;
            if dt > 0.0 {
                let p = cache.entry(dt.to_bits()).or_insert_with(|| self.propagator(dt));
                rho = self.step(p, &rho);
                now = t;
            }
            let tr = rho.trace().re;
            if !tr.is_finite() || (tr - tr0).abs() > TRACE_TOL {
                return Err(NvError::IntegratorFailure(format!("trace drifted to {tr} at t = {t} us")));
            }
            visit(k, &DensityMatrix { matrix: rho.clone() });
        }
        Ok(())
    }

    pub fn evolve(&self, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        let mut out = Vec::with_capacity(times.len());
        self.evolve_with(rho0, times, |_, r| out.push(r.clone()))?;
        Ok(out)
    }

    /// State after a single interval `t`.
    pub fn propagate(&self, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        let mut last = None;
        self.evolve_with(rho0, &[t], |_, r| last = Some(r.clone()))?;
        Ok(last.expect("one output"))
    }
}

/// The 21-level model: block Hamiltonian and the 36 bare-basis jumps.
#[derive(Debug)]
pub struct LindbladModel {
    pub params: NvParams,
    pub field: FieldConfig,
    pub rates: RateSet,
    pub metastable: MetastableModel,
    pub jumps: Vec<JumpOperator>,
    pub system: OpenSystem,
}

impl LindbladModel {
    pub fn hamiltonian(&self) -> &CMat {
        &self.system.hamiltonian
    }

    pub fn ground_eigensystem(&self) -> Result<EigenSystem> {
        labeled_ground(&self.params, &self.field)
    }

    pub fn evolve(&self, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        self.system.evolve(rho0, times)
    }
}

/// Block Hamiltonian `H_g ⊕ H_es ⊕ H_meta` (21×21).
pub fn block_hamiltonian(params: &NvParams, field: &FieldConfig, metastable: MetastableModel) -> CMat {
    block_diag(&[
        &build_ground_hamiltonian(params, field).matrix,
        &build_excited_hamiltonian(params, field).matrix,
        &build_metastable_hamiltonian(params, field, metastable).matrix,
    ])
}

pub fn build_model(params: &NvParams, field: &FieldConfig, rs: &RateSet) -> Result<LindbladModel> {
    build_model_with(params, field, rs, MetastableModel::default())
}

pub fn build_model_with(
    params: &NvParams,
    field: &FieldConfig,
    rs: &RateSet,
    metastable: MetastableModel,
) -> Result<LindbladModel> {
    params.validate()?;
    rs.validate()?;
    let k = extend_to_nuclear(&build_electron_rate_matrix(rs))?;
    let mut jumps = Vec::with_capacity(36);
    for from in 0..DIM {
        for to in 0..DIM {
            let rate = k.rates[(from, to)];
            if from != to && rate > 0.0 {
                jumps.push(JumpOperator { rate, from, to });
            }
        }
    }
    let channels = jumps.iter().map(|j| Channel::from_jump(j, DIM)).collect();
    let system = OpenSystem::new(block_hamiltonian(params, field, metastable), channels, &BLOCKS)?;
    Ok(LindbladModel {
        params: *params,
        field: *field,
        rates: *rs,
        metastable,
        jumps,
        system,
    })
}

/// Total population of the nine excited levels.
pub fn observable_p_exc(rho: &DensityMatrix) -> f64 {
    (9..18).map(|i| rho.matrix[(i, i)].re).sum()
}

/// Embed a ground 9-vector into the 21-level space.
pub fn ground_ket(v: &DVector<C64>) -> DVector<C64> {
    let mut out = DVector::zeros(DIM);
    out.rows_mut(0, 9).copy_from(v);
    out
}

/// Population difference between the labeled ground eigenstates `a` and `b`.
pub fn observable_p_signal(rho: &DensityMatrix, ground: &EigenSystem, a: BareState, b: BareState) -> Result<f64> {
    let va = ground_ket(&ground.vector(ground.index_of(a)?));
    let vb = ground_ket(&ground.vector(ground.index_of(b)?));
    Ok(rho.expectation(&va) - rho.expectation(&vb))
}

/// Knobs of the depolarization-rate extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepolarizationOptions {
    /// Expected rate seed as a fraction of `k_las`; horizon = `horizon_factor / (seed·k_las)`.
    pub seed_fraction: f64,
    pub horizon_factor: f64,
    pub points: usize,
    /// Leading fraction of the horizon excluded from the fit.
    pub discard_fraction: f64,
}

impl Default for DepolarizationOptions {
    fn default() -> Self {
        Self {
            seed_fraction: 0.08,
            horizon_factor: 20.0,
            points: 400,
            discard_fraction: 0.05,
        }
    }
}

impl DepolarizationOptions {
    pub fn horizon(&self, k_las: f64) -> f64 {
        self.horizon_factor / (self.seed_fraction * k_las)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepolarizationResult {
    /// Fitted decay rate of P_signal from `|0,0⟩~` (MHz).
    pub gamma_0: f64,
    /// Same from `|0,+1⟩~`.
    pub gamma_plus1: f64,
    pub ratio: f64,
    /// Either fit left more than 5% of its amplitude unexplained.
    pub fit_flagged: bool,
    pub fit_0: FitResult,
    pub fit_plus1: FitResult,
    #[serde(skip)]
    pub traces: Vec<TimeTrace>,
}

/// P_signal relaxation from a polarized ground eigenstate `|0,m_I⟩~`,
/// read out against `|−1,m_I⟩~`.
pub fn p_signal_trace(model: &LindbladModel, mi: i8, times: &[f64]) -> Result<TimeTrace> {
    let ground = model.ground_eigensystem()?;
    let a = BareState::new(0, mi);
    let b = BareState::new(-1, mi);
    let rho0 = DensityMatrix::pure(&ground_ket(&ground.vector(ground.index_of(a)?)));
    let mut values = vec![0.0; times.len()];
    let mut err = None;
    model.system.evolve_with(&rho0, times, |k, rho| match observable_p_signal(rho, &ground, a, b) {
        Ok(v) => values[k] = v,
        Err(e) => err = Some(e),
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    TimeTrace::new(times.to_vec(), values, &format!("p_signal_mi{mi:+}"))
}

fn fit_tail(trace: &TimeTrace, start: f64) -> Result<FitResult> {
    let (t, y): (Vec<f64>, Vec<f64>) = trace
        .time_us
        .iter()
        .zip(&trace.values)
        .filter(|(t, _)| **t >= start)
        .map(|(t, v)| (*t, *v))
        .unzip();
    fit_exp_decay(&t, &y)
}

/// Fitted P_signal decay rates for the `|0,0⟩~` and `|0,+1⟩~` initial states.
pub fn depolarization_rates(model: &LindbladModel, opts: &DepolarizationOptions) -> Result<DepolarizationResult> {
    if !(model.rates.k_las > 0.0) {
        return Err(NvError::invalid("depolarization needs k_las > 0"));
    }
    let horizon = opts.horizon(model.rates.k_las);
    let times = crate::transitions::linspace(0.0, horizon, opts.points);
    let (r0, r1) = rayon::join(|| p_signal_trace(model, 0, &times), || p_signal_trace(model, 1, &times));
    let (t0, t1) = (r0?, r1?);
    let start = opts.discard_fraction * horizon;
    let f0 = fit_tail(&t0, start)?;
    let f1 = fit_tail(&t1, start)?;
    let gamma_0 = f0.get("rate");
    let gamma_plus1 = f1.get("rate");
    Ok(DepolarizationResult {
        gamma_0,
        gamma_plus1,
        ratio: gamma_0 / gamma_plus1,
        fit_flagged: !(f0.converged && f1.converged),
        fit_0: f0,
        fit_plus1: f1,
        traces: vec![t0, t1],
    })
}

/// Uncertainty sources of the depolarization envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeSpec {
    /// ± on the excited-state transverse hyperfine (MHz), region a.
    pub a_perp_es_sigma: f64,
    /// Alternative rate set compared against the central one, region b.
    pub alternative: Option<RateSet>,
    /// ±σ corners of the central rate set, region c.
    pub rate_sigma: RateUncertainty,
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        Self {
            a_perp_es_sigma: 3.0,
            alternative: Some(RateSet::set2()),
            rate_sigma: crate::photophysics::RatePreset::Set1.uncertainty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub region: char,
    pub gamma_las: f64,
    pub central_gamma_0: f64,
    pub central_gamma_plus1: f64,
    pub gamma_0: (f64, f64),
    pub gamma_plus1: (f64, f64),
    pub ratio: (f64, f64),
}

/// Min/max of the depolarization rates per γ_las for regions a, b and c.
/// γ_las is converted to a pump rate per rate set through the 7-level
/// spectral gap.
pub fn depolarization_envelope(
    params: &NvParams,
    field: &FieldConfig,
    central: &RateSet,
    spec: &EnvelopeSpec,
    gamma_las_grid: &[f64],
    opts: &DepolarizationOptions,
) -> Result<Vec<EnvelopeRow>> {
    let run = |p: &NvParams, rs: &RateSet, g: f64| -> Result<DepolarizationResult> {
        let k = k_las_for_repolarization_rate(rs, g)?;
        depolarization_rates(&build_model(p, field, &rs.with_k_las(k))?, opts)
    };
    let mut jobs: Vec<(char, usize, NvParams, RateSet)> = Vec::new();
    for (gi, _) in gamma_las_grid.iter().enumerate() {
        jobs.push(('*', gi, *params, *central));
        for s in [-1.0, 1.0] {
            let p = NvParams {
                a_perp_es: params.a_perp_es + s * spec.a_perp_es_sigma,
                ..*params
            };
            jobs.push(('a', gi, p, *central));
        }
        if let Some(alt) = spec.alternative {
            jobs.push(('b', gi, *params, alt));
        }
        for corner in central.corners(&spec.rate_sigma) {
            jobs.push(('c', gi, *params, corner));
        }
    }
    let results: Vec<DepolarizationResult> = jobs
        .par_iter()
        .map(|(_, gi, p, rs)| run(p, rs, gamma_las_grid[*gi]))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (gi, &g) in gamma_las_grid.iter().enumerate() {
        let central_res = jobs
            .iter()
            .zip(&results)
            .find(|((r, i, _, _), _)| *r == '*' && *i == gi)
            .map(|(_, res)| res)
            .expect("central job");
        for region in ['a', 'b', 'c'] {
            let members: Vec<&DepolarizationResult> = jobs
                .iter()
                .zip(&results)
                .filter(|((r, i, _, _), _)| *i == gi && (*r == region || *r == '*'))
                .map(|(_, res)| res)
                .collect();
            if region == 'b' && spec.alternative.is_none() {
                continue;
            }
            let span = |f: &dyn Fn(&DepolarizationResult) -> f64| {
                members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                    let v = f(m);
                    (lo.min(v), hi.max(v))
                })
            };
            rows.push(EnvelopeRow {
                region,
                gamma_las: g,
                central_gamma_0: central_res.gamma_0,
                central_gamma_plus1: central_res.gamma_plus1,
                gamma_0: span(&|m| m.gamma_0),
                gamma_plus1: span(&|m| m.gamma_plus1),
                ratio: span(&|m| m.ratio),
            });
        }
    }
    Ok(rows)
}

/// Dense 441×441 Liouvillian in column-stacking convention, for small
/// systems and cross-checks.
pub fn dense_liouvillian(h: &CMat, jumps: &[CMat]) -> DMatrix<C64> {
    let n = h.nrows();
    let id = CMat::identity(n, n);
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * c(0.0, -2.0 * std::f64::consts::PI);
    for lk in jumps {
        let ldl = lk.adjoint() * lk;
        l += lk.conjugate().kronecker(lk) - (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)) * c(0.5, 0.0);
    }
    l
}
