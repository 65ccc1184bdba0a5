//! Electron and electron⊗nuclear spin Hamiltonians, their diagonalization and
//! the labeling of eigenstates by dominant bare component.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};
use crate::linalg::{assignment_with_margin, best_assignment, c, hermiticity_deviation, kron, max_abs, CMat, RMat};
use crate::params::{FieldConfig, NvParams};
use crate::C64;

/// Summed-overlap gap below which a labeling is reported as ambiguous.
pub const LABEL_MARGIN: f64 = 1e-6;
/// Steps used when labeling by adiabatic continuation in θ.
pub const CONTINUATION_STEPS: usize = 100;

/// Spin-1 operators `(Sx, Sy, Sz)` in the ordering `m = (+1, 0, −1)`.
pub fn spin1_matrices() -> (CMat, CMat, CMat) {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let sx = CMat::from_row_slice(3, 3, &[z, c(r, 0.0), z, c(r, 0.0), z, c(r, 0.0), z, c(r, 0.0), z]);
    let sy = CMat::from_row_slice(
        3,
        3,
        &[z, c(0.0, -r), z, c(0.0, r), z, c(0.0, -r), z, c(0.0, r), z],
    );
    let sz = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), z, c(-1.0, 0.0)]));
    (sx, sy, sz)
}

/// Projection quantum number for index `k` in the ordering `(+1, 0, −1)`.
pub fn m_of_index(k: usize) -> i8 {
    1 - k as i8
}

pub fn index_of_m(m: i8) -> usize {
    debug_assert!((-1..=1).contains(&m));
    (1 - m) as usize
}

/// A bare product state `|m_S, m_I⟩`; `mi` is `None` for electron-only bases
/// and `ms` is `None` for nuclear-only bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BareState {
    pub ms: Option<i8>,
    pub mi: Option<i8>,
}

impl BareState {
    pub fn new(ms: i8, mi: i8) -> Self {
        Self {
            ms: Some(ms),
            mi: Some(mi),
        }
    }

    pub fn electron(ms: i8) -> Self {
        Self { ms: Some(ms), mi: None }
    }

    pub fn nuclear(mi: i8) -> Self {
        Self { ms: None, mi: Some(mi) }
    }
}

impl std::fmt::Display for BareState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.ms, self.mi) {
            (Some(s), Some(n)) => write!(f, "|{s:+},{n:+}>"),
            (Some(s), None) => write!(f, "|{s:+}>"),
            (None, Some(n)) => write!(f, "|mI={n:+}>"),
            (None, None) => write!(f, "|?>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// 3 states, `m_S` only.
    Electron,
    /// 9 states, `m_S ⊗ m_I`.
    ElectronNuclear,
    /// 3 states, `m_I` only.
    Nuclear,
}

impl BasisKind {
    pub fn dim(self) -> usize {
        match self {
            BasisKind::Electron | BasisKind::Nuclear => 3,
            BasisKind::ElectronNuclear => 9,
        }
    }

    pub fn bare_state(self, k: usize) -> BareState {
        match self {
            BasisKind::Electron => BareState::electron(m_of_index(k)),
            BasisKind::Nuclear => BareState::nuclear(m_of_index(k)),
            BasisKind::ElectronNuclear => BareState::new(m_of_index(k / 3), m_of_index(k % 3)),
        }
    }

    pub fn bare_index(self, s: BareState) -> Option<usize> {
        match (self, s.ms, s.mi) {
            (BasisKind::Electron, Some(ms), None) => Some(index_of_m(ms)),
            (BasisKind::Nuclear, None, Some(mi)) => Some(index_of_m(mi)),
            (BasisKind::ElectronNuclear, Some(ms), Some(mi)) => Some(3 * index_of_m(ms) + index_of_m(mi)),
            _ => None,
        }
    }
}

/// Electronic manifold of the 9×9 electron⊗nuclear Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    Ground,
    Excited,
}

/// Model used for the nuclear spin while the electron sits in the metastable
/// singlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetastableModel {
    /// `Q·Iz² − γn·I·B`.
    #[default]
    NuclearZeeman,
    /// Diagonal part only, no mixing.
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HamiltonianOptions {
    /// Keep the `−γn·B⊥·I_x` term.
    pub nuclear_transverse: bool,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        Self {
            nuclear_transverse: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub matrix: CMat,
    pub basis: BasisKind,
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn spin_hamiltonian(
    d: f64,
    a_zz: f64,
    a_perp: f64,
    params: &NvParams,
    field: &FieldConfig,
    opts: HamiltonianOptions,
) -> Hamiltonian {
    let (sx, sy, sz) = spin1_matrices();
    let id = CMat::identity(3, 3);
    let [bx, by, bz] = field.components();
    let sz2 = &sz * &sz;
    let re = |x: f64| c(x, 0.0);

    let electron = &sz2 * re(d) + (&sx * re(bx) + &sy * re(by) + &sz * re(bz)) * re(params.gamma_e);
    let (nbx, nby) = if opts.nuclear_transverse { (bx, by) } else { (0.0, 0.0) };
    let nuclear = &sz2 * re(params.q) - (&sx * re(nbx) + &sy * re(nby) + &sz * re(bz)) * re(params.gamma_n);

    let mut h = kron(&electron, &id) + kron(&id, &nuclear);
    h += kron(&sz, &sz) * re(a_zz);
    h += (kron(&sx, &sx) + kron(&sy, &sy)) * re(a_perp);
    Hamiltonian {
        matrix: symmetrize(h),
        basis: BasisKind::ElectronNuclear,
    }
}

fn symmetrize(h: CMat) -> CMat {
    (&h + h.adjoint()) * c(0.5, 0.0)
}

/// Ground-state 9×9 Hamiltonian
/// `D·Sz² + γe·S·B + Q·Iz² − γn·I·B + A_zz·Sz·Iz + A⊥·(Sx·Ix + Sy·Iy)`.
pub fn build_ground_hamiltonian(params: &NvParams, field: &FieldConfig) -> Hamiltonian {
    build_ground_hamiltonian_with(params, field, HamiltonianOptions::default())
}

pub fn build_ground_hamiltonian_with(params: &NvParams, field: &FieldConfig, opts: HamiltonianOptions) -> Hamiltonian {
    spin_hamiltonian(params.d, params.a_zz, params.a_perp, params, field, opts)
}

/// Excited-state 9×9 Hamiltonian, same form with the excited-state constants.
pub fn build_excited_hamiltonian(params: &NvParams, field: &FieldConfig) -> Hamiltonian {
    build_excited_hamiltonian_with(params, field, HamiltonianOptions::default())
}

pub fn build_excited_hamiltonian_with(params: &NvParams, field: &FieldConfig, opts: HamiltonianOptions) -> Hamiltonian {
    spin_hamiltonian(params.d_es, params.a_zz_es, params.a_perp_es, params, field, opts)
}

pub fn build_manifold_hamiltonian(params: &NvParams, field: &FieldConfig, manifold: Manifold) -> Hamiltonian {
    match manifold {
        Manifold::Ground => build_ground_hamiltonian(params, field),
        Manifold::Excited => build_excited_hamiltonian(params, field),
    }
}

/// Electron-only 3×3 Hamiltonian `D·Sz² + γe·S·B`.
pub fn build_electron_hamiltonian(params: &NvParams, field: &FieldConfig) -> Hamiltonian {
    let (sx, sy, sz) = spin1_matrices();
    let [bx, by, bz] = field.components();
    let re = |x: f64| c(x, 0.0);
    let h = &sz * &sz * re(params.d) + (&sx * re(bx) + &sy * re(by) + &sz * re(bz)) * re(params.gamma_e);
    Hamiltonian {
        matrix: symmetrize(h),
        basis: BasisKind::Electron,
    }
}

/// Nuclear-only 3×3 Hamiltonian for the metastable singlet.
pub fn build_metastable_hamiltonian(params: &NvParams, field: &FieldConfig, model: MetastableModel) -> Hamiltonian {
    let (ix, iy, iz) = spin1_matrices();
    let [bx, by, bz] = field.components();
    let re = |x: f64| c(x, 0.0);
    let mut h = &iz * &iz * re(params.q) - &iz * re(params.gamma_n * bz);
    if model == MetastableModel::NuclearZeeman {
        h -= (&ix * re(bx) + &iy * re(by)) * re(params.gamma_n);
    }
    Hamiltonian {
        matrix: symmetrize(h),
        basis: BasisKind::Nuclear,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labeling {
    /// `labels[i]` is the bare index assigned to eigenstate `i`.
    Assigned(Vec<usize>),
    /// Best assignment found, but the runner-up is within `margin`.
    Ambiguous { best: Vec<usize>, margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub basis: BasisKind,
    /// Ascending, MHz.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the bare basis.
    pub vectors: CMat,
    /// `overlaps[(i, k)] = |⟨bare k|i⟩|²`.
    pub overlaps: RMat,
    pub labeling: Labeling,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Bare index assigned to every eigenstate.
    pub fn labels(&self) -> Result<&[usize]> {
        match &self.labeling {
            Labeling::Assigned(l) => Ok(l),
            Labeling::Ambiguous { margin, .. } => Err(NvError::AmbiguousLabeling { margin: *margin }),
        }
    }

    pub fn label(&self, i: usize) -> Result<BareState> {
        if i >= self.dim() {
            return Err(NvError::IndexOutOfRange { index: i, dim: self.dim() });
        }
        Ok(self.basis.bare_state(self.labels()?[i]))
    }

    /// Eigenindex whose label is `state`.
    pub fn index_of(&self, state: BareState) -> Result<usize> {
        let k = self
            .basis
            .bare_index(state)
            .ok_or_else(|| NvError::invalid(format!("{state} does not belong to this basis")))?;
        let labels = self.labels()?;
        Ok(labels.iter().position(|&l| l == k).expect("labeling is a bijection"))
    }

    pub fn vector(&self, i: usize) -> nalgebra::DVector<C64> {
        self.vectors.column(i).into_owned()
    }

    /// Replace the labeling, e.g. by one obtained from continuation.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Self {
        self.labeling = Labeling::Assigned(labels);
        self
    }
}

/// Full eigen-decomposition of a Hermitian Hamiltonian with the labeling from
/// [`label_states`]. An ambiguous labeling is kept inside the result rather
/// than failing; callers that need labels get the error from
/// [`EigenSystem::labels`].
pub fn diagonalize(h: &Hamiltonian) -> Result<EigenSystem> {
    let scale = max_abs(&h.matrix).max(1.0);
    let dev = hermiticity_deviation(&h.matrix);
    if dev > 1e-10 * scale {
        return Err(NvError::NotHermitian { deviation: dev });
    }
    let n = h.dim();
    let eig = SymmetricEigen::new(symmetrize(h.matrix.clone()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut vectors = CMat::zeros(n, n);
    let mut energies = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        energies.push(eig.eigenvalues[src]);
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut v);
        vectors.set_column(col, &v);
    }
    let overlaps = overlap_matrix(&vectors);
    let labeling = label_states(&overlaps);
    Ok(EigenSystem {
        basis: h.basis,
        energies,
        vectors,
        overlaps,
        labeling,
    })
}

/// Make the largest-magnitude component real and positive. Ties go to the
/// lowest index.
pub fn fix_phase(v: &mut nalgebra::DVector<C64>) {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].norm() > v[best].norm() + 1e-12 {
            best = k;
        }
    }
    let z = v[best];
    if z.norm() > 0.0 {
        let phase = z.conj() / z.norm();
        *v *= phase;
        v[best] = c(v[best].re, 0.0);
    }
    let norm = v.norm();
    *v /= c(norm, 0.0);
}

pub fn overlap_matrix(vectors: &CMat) -> RMat {
    let n = vectors.ncols();
    RMat::from_fn(n, n, |i, k| vectors[(k, i)].norm_sqr())
}

/// Bijective eigenstate → bare-state assignment maximizing the summed overlap.
pub fn label_states(overlaps: &RMat) -> Labeling {
    let (cols, best, second) = assignment_with_margin(overlaps);
    let margin = best - second;
    if margin < LABEL_MARGIN {
        Labeling::Ambiguous { best: cols, margin }
    } else {
        Labeling::Assigned(cols)
    }
}

/// Diagonalize a 9×9 manifold Hamiltonian and label it by following the
/// eigenvectors along a θ ramp from 0 to `field.theta` in
/// [`CONTINUATION_STEPS`] steps.
pub fn label_by_continuation(params: &NvParams, field: &FieldConfig, manifold: Manifold) -> Result<EigenSystem> {
    label_by_continuation_with(field, CONTINUATION_STEPS, |f| build_manifold_hamiltonian(params, f, manifold))
}

pub fn label_by_continuation_with(
    field: &FieldConfig,
    steps: usize,
    build: impl Fn(&FieldConfig) -> Hamiltonian,
) -> Result<EigenSystem> {
    let start = diagonalize(&build(&field.with_theta(0.0)))?;
    let mut labels = start.labels()?.to_vec();
    let mut prev = start;
    for k in 1..=steps.max(1) {
        let theta = field.theta * k as f64 / steps.max(1) as f64;
        let next = diagonalize(&build(&field.with_theta(theta)))?;
        let n = next.dim();
        let w = RMat::from_fn(n, n, |i, j| {
            (prev.vectors.column(i).adjoint() * next.vectors.column(j))[(0, 0)].norm_sqr()
        });
        let (perm, _) = best_assignment(&w, None).expect("square matrix");
        let mut new_labels = vec![0; n];
        for (i, &j) in perm.iter().enumerate() {
            new_labels[j] = labels[i];
        }
        labels = new_labels;
        prev = next;
    }
    Ok(prev.with_labels(labels))
}

/// Ground eigensystem with labels, falling back to continuation when the
/// direct assignment is ambiguous.
pub fn labeled_ground(params: &NvParams, field: &FieldConfig) -> Result<EigenSystem> {
    labeled_manifold(params, field, Manifold::Ground)
}

pub fn labeled_manifold(params: &NvParams, field: &FieldConfig, manifold: Manifold) -> Result<EigenSystem> {
    let eig = diagonalize(&build_manifold_hamiltonian(params, field, manifold))?;
    match eig.labeling {
        Labeling::Assigned(_) => Ok(eig),
        Labeling::Ambiguous { .. } => label_by_continuation(params, field, manifold),
    }
}

/// `A ⊗ 1₃` for an electron operator acting on the 9-dimensional space.
pub fn electron_operator(op: &CMat) -> CMat {
    kron(op, &DMatrix::identity(3, 3))
}

pub fn nuclear_operator(op: &CMat) -> CMat {
    kron(&DMatrix::identity(3, 3), op)
}
