//! Incoherent optical-cycle rate models.
//!
//! 7-level electron ordering: ground `m_S = (+1, 0, −1)` → 0, 1, 2; excited
//! `(+1, 0, −1)` → 3, 4, 5; metastable singlet → 6. The 21-level model
//! replaces each ground and excited level by three nuclear sublevels (bare
//! index `3·s + n` inside a manifold, ground first) and the singlet by three
//! nuclear levels, giving indices 0–8, 9–17 and 18–20.
//!
//! `rates[(n, m)]` is the rate n → m in MHz (per μs).

use nalgebra::{DVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};
use crate::linalg::RMat;
use crate::params::{FieldConfig, NvParams};
use crate::spin::{
    build_electron_hamiltonian, build_excited_hamiltonian, build_ground_hamiltonian, build_metastable_hamiltonian,
    diagonalize, index_of_m, label_by_continuation_with, EigenSystem, Hamiltonian, Labeling, MetastableModel,
};

pub const GROUND7: [usize; 3] = [0, 1, 2];
pub const EXCITED7: [usize; 3] = [3, 4, 5];
pub const METASTABLE7: usize = 6;

/// Relative singular-value threshold for the generator null space.
pub const NULL_TOL: f64 = 1e-10;

/// Index of `(m_S, m_I)` in the ground block of the 21-level basis.
pub fn ground21(ms: i8, mi: i8) -> usize {
    3 * index_of_m(ms) + index_of_m(mi)
}

pub fn excited21(ms: i8, mi: i8) -> usize {
    9 + ground21(ms, mi)
}

pub fn metastable21(mi: i8) -> usize {
    18 + index_of_m(mi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatePreset {
    Set1,
    Set2,
}

/// Intrinsic rates (MHz) of the electron optical cycle plus the tunable pump
/// rate `k_las`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSet {
    pub k_pl: f64,
    pub k_47: f64,
    pub k_57: f64,
    pub k_71: f64,
    pub k_72: f64,
    pub k_las: f64,
}

/// 1σ uncertainties of the intrinsic rates, same field order as [`RateSet`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateUncertainty {
    pub k_pl: f64,
    pub k_47: f64,
    pub k_57: f64,
    pub k_71: f64,
    pub k_72: f64,
}

impl RatePreset {
    pub fn rates(self) -> RateSet {
        let (k_pl, k_47, k_57, k_71, k_72) = match self {
            RatePreset::Set1 => (67.9, 5.7, 49.9, 1.01, 0.75),
            RatePreset::Set2 => (63.0, 12.0, 80.0, 3.3, 2.4),
        };
        RateSet {
            k_pl,
            k_47,
            k_57,
            k_71,
            k_72,
            k_las: 0.01 * k_pl,
        }
    }

    pub fn uncertainty(self) -> RateUncertainty {
        let (k_pl, k_47, k_57, k_71, k_72) = match self {
            RatePreset::Set1 => (1.3, 0.7, 1.6, 0.28, 0.11),
            RatePreset::Set2 => (3.0, 3.0, 6.0, 0.4, 0.4),
        };
        RateUncertainty {
            k_pl,
            k_47,
            k_57,
            k_71,
            k_72,
        }
    }
}

impl RateSet {
    pub fn set1() -> Self {
        RatePreset::Set1.rates()
    }

    pub fn set2() -> Self {
        RatePreset::Set2.rates()
    }

    pub fn with_k_las(self, k_las: f64) -> Self {
        Self { k_las, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_pl", self.k_pl),
            ("k_47", self.k_47),
            ("k_57", self.k_57),
            ("k_71", self.k_71),
            ("k_72", self.k_72),
            ("k_las", self.k_las),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(NvError::invalid(format!("rate {name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// All 2⁵ combinations of ±σ on the intrinsic rates, clipped at zero.
    pub fn corners(&self, sigma: &RateUncertainty) -> Vec<RateSet> {
        (0..32u32)
            .map(|mask| {
                let s = |bit: u32, v: f64, d: f64| {
                    let sign = if mask & (1 << bit) != 0 { 1.0 } else { -1.0 };
                    (v + sign * d).max(0.0)
                };
                RateSet {
                    k_pl: s(0, self.k_pl, sigma.k_pl),
                    k_47: s(1, self.k_47, sigma.k_47),
                    k_57: s(2, self.k_57, sigma.k_57),
                    k_71: s(3, self.k_71, sigma.k_71),
                    k_72: s(4, self.k_72, sigma.k_72),
                    k_las: self.k_las,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub rates: RMat,
}

impl RateMatrix {
    pub fn new(rates: RMat) -> Result<Self> {
        if rates.nrows() != rates.ncols() {
            return Err(NvError::DimensionMismatch {
                expected: rates.nrows(),
                got: rates.ncols(),
            });
        }
        for i in 0..rates.nrows() {
            for j in 0..rates.ncols() {
                let r = rates[(i, j)];
                if i != j && !(r.is_finite() && r >= 0.0) {
                    return Err(NvError::invalid(format!("rate {i}->{j} = {r} must be >= 0")));
                }
            }
        }
        Ok(Self { rates })
    }

    pub fn dim(&self) -> usize {
        self.rates.nrows()
    }

    /// `G[(m, n)] = rates[(n, m)] − δ_nm Σ_p rates[(n, p)]`, so `dp/dt = G·p`.
    pub fn generator(&self) -> RMat {
        let n = self.dim();
        let mut g = RMat::zeros(n, n);
        for i in 0..n {
            let mut out = 0.0;
            for j in 0..n {
                if i != j {
                    g[(j, i)] = self.rates[(i, j)];
                    out += self.rates[(i, j)];
                }
            }
            g[(i, i)] = -out;
        }
        g
    }

    pub fn nonzero_count(&self) -> usize {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.rates[(i, j)] != 0.0)
            .count()
    }

    pub fn total_rate(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| self.rates[(i, j)])
            .sum()
    }
}

/// The 12 electronic transitions of the optical cycle.
pub fn build_electron_rate_matrix(rs: &RateSet) -> RateMatrix {
    let mut k = RMat::zeros(7, 7);
    for (g, e) in GROUND7.iter().zip(EXCITED7) {
        k[(*g, e)] = rs.k_las;
        k[(e, *g)] = rs.k_pl;
    }
    // excited m_S = 0 sits at index 4, ground m_S = 0 at index 1
    k[(4, METASTABLE7)] = rs.k_47;
    k[(3, METASTABLE7)] = rs.k_57;
    k[(5, METASTABLE7)] = rs.k_57;
    k[(METASTABLE7, 1)] = rs.k_71;
    k[(METASTABLE7, 0)] = rs.k_72;
    k[(METASTABLE7, 2)] = rs.k_72;
    RateMatrix { rates: k }
}

/// 21-level index of electron level `e` (7-level index) with nuclear index `n`.
pub fn index21(e: usize, n: usize) -> usize {
    match e {
        0..=2 => 3 * e + n,
        3..=5 => 9 + 3 * (e - 3) + n,
        _ => 18 + n,
    }
}

/// Split every electronic transition into three nuclear-spin-preserving ones.
pub fn extend_to_nuclear(rm: &RateMatrix) -> Result<RateMatrix> {
    if rm.dim() != 7 {
        return Err(NvError::DimensionMismatch {
            expected: 7,
            got: rm.dim(),
        });
    }
    let mut k = RMat::zeros(21, 21);
    for a in 0..7 {
        for b in 0..7 {
            let r = rm.rates[(a, b)];
            if a == b || r == 0.0 {
                continue;
            }
            for n in 0..3 {
                k[(index21(a, n), index21(b, n))] = r;
            }
        }
    }
    Ok(RateMatrix { rates: k })
}

/// Average over the initial nuclear level and sum over the final one.
pub fn trace_out_nucleus(rm: &RateMatrix) -> Result<RateMatrix> {
    if rm.dim() != 21 {
        return Err(NvError::DimensionMismatch {
            expected: 21,
            got: rm.dim(),
        });
    }
    let mut k = RMat::zeros(7, 7);
    for a in 0..7 {
        for b in 0..7 {
            if a == b {
                continue;
            }
            let mut s = 0.0;
            for n in 0..3 {
                for m in 0..3 {
                    s += rm.rates[(index21(a, n), index21(b, m))];
                }
            }
            k[(a, b)] = s / 3.0;
        }
    }
    Ok(RateMatrix { rates: k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelLevel {
    #[serde(rename = "7")]
    Seven,
    #[serde(rename = "21")]
    TwentyOne,
}

impl ModelLevel {
    pub fn dim(self) -> usize {
        match self {
            ModelLevel::Seven => 7,
            ModelLevel::TwentyOne => 21,
        }
    }
}

/// Eigenbases of every manifold of a rate model. `weights[(ĩ, p)] = |α_ĩp|²`
/// with rows indexed by the bare label of each eigenstate, so the identity
/// is recovered when nothing mixes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeBasis {
    pub level: ModelLevel,
    pub weights: RMat,
    /// Per manifold (ground, excited, metastable): eigensystems in energy order.
    pub ground: EigenSystem,
    pub excited: EigenSystem,
    pub metastable: EigenSystem,
}

fn labeled(field: &FieldConfig, build: impl Fn(&FieldConfig) -> Hamiltonian) -> Result<EigenSystem> {
    let eig = diagonalize(&build(field))?;
    match eig.labeling {
        Labeling::Assigned(_) => Ok(eig),
        Labeling::Ambiguous { .. } => label_by_continuation_with(field, crate::spin::CONTINUATION_STEPS, build),
    }
}

/// Label-ordered overlap block: row `k` holds `|α|²` of the eigenstate
/// labeled with bare index `k`.
fn label_ordered_weights(eig: &EigenSystem) -> Result<RMat> {
    let labels = eig.labels()?;
    let n = eig.dim();
    let mut w = RMat::zeros(n, n);
    for (i, &k) in labels.iter().enumerate() {
        w.set_row(k, &eig.overlaps.row(i));
    }
    Ok(w)
}

impl CompositeBasis {
    pub fn new(params: &NvParams, field: &FieldConfig, level: ModelLevel, metastable: MetastableModel) -> Result<Self> {
        let (ground, excited) = match level {
            ModelLevel::Seven => {
                let g = labeled(field, |f| build_electron_hamiltonian(params, f))?;
                let ep = NvParams { d: params.d_es, ..*params };
                let e = labeled(field, |f| build_electron_hamiltonian(&ep, f))?;
                (g, e)
            }
            ModelLevel::TwentyOne => (
                labeled(field, |f| build_ground_hamiltonian(params, f))?,
                labeled(field, |f| build_excited_hamiltonian(params, f))?,
            ),
        };
        let meta = match level {
            ModelLevel::Seven => {
                let h = Hamiltonian {
                    matrix: crate::linalg::CMat::identity(1, 1),
                    basis: crate::spin::BasisKind::Nuclear,
                };
                EigenSystem {
                    basis: h.basis,
                    energies: vec![0.0],
                    vectors: h.matrix,
                    overlaps: RMat::identity(1, 1),
                    labeling: Labeling::Assigned(vec![0]),
                }
            }
            ModelLevel::TwentyOne => labeled(field, |f| build_metastable_hamiltonian(params, f, metastable))?,
        };
        let blocks = [
            label_ordered_weights(&ground)?,
            label_ordered_weights(&excited)?,
            label_ordered_weights(&meta)?,
        ];
        let dim = level.dim();
        let mut weights = RMat::zeros(dim, dim);
        let mut off = 0;
        for b in &blocks {
            let k = b.nrows();
            weights.view_mut((off, off), (k, k)).copy_from(b);
            off += k;
        }
        Ok(Self {
            level,
            weights,
            ground,
            excited,
            metastable: meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Row index of the lowest-energy ground eigenstate.
    pub fn lowest_ground(&self) -> usize {
        self.ground.labels().expect("labeled")[0]
    }

    /// Row indices of the three lowest-energy ground eigenstates.
    pub fn lowest_ground_triplet(&self) -> [usize; 3] {
        let l = self.ground.labels().expect("labeled");
        [l[0], l[1], l[2]]
    }
}

/// `k̃ = W·k·Wᵀ`.
pub fn rotate_rates(rm: &RateMatrix, basis: &CompositeBasis) -> Result<RateMatrix> {
    if rm.dim() != basis.dim() {
        return Err(NvError::DimensionMismatch {
            expected: basis.dim(),
            got: rm.dim(),
        });
    }
    let w = &basis.weights;
    let mut k = w * &rm.rates * w.transpose();
    for i in 0..k.nrows() {
        k[(i, i)] = 0.0;
        for j in 0..k.ncols() {
            // products of non-negative weights; clear round-off below zero
            if k[(i, j)] < 0.0 {
                k[(i, j)] = 0.0;
            }
        }
    }
    Ok(RateMatrix { rates: k })
}

/// Unique stationary distribution, from the null space of the generator.
/// Long-time integration agrees to better than 1e−8 (checked in tests).
pub fn steady_state(rm: &RateMatrix) -> Result<DVector<f64>> {
    let g = rm.generator();
    let n = g.nrows();
    let svd = SVD::new(g, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Err(NvError::NonUniqueSteadyState { dim: n });
    }
    let null: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] <= NULL_TOL * smax).collect();
    if null.len() > 1 {
        return Err(NvError::NonUniqueSteadyState { dim: null.len() });
    }
    let kmin = (0..n)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .expect("non-empty");
    let mut p: DVector<f64> = v_t.row(kmin).transpose();
    let s = p.sum();
    p /= s;
    for x in p.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s = p.sum();
    p /= s;
    Ok(p)
}

/// Populations `exp(G·t)·p0` at each requested time.
pub fn integrate_populations(rm: &RateMatrix, p0: &DVector<f64>, times: &[f64]) -> Result<Vec<DVector<f64>>> {
    if p0.len() != rm.dim() {
        return Err(NvError::DimensionMismatch {
            expected: rm.dim(),
            got: p0.len(),
        });
    }
    let g = rm.generator();
    Ok(times.iter().map(|&t| (&g * t).exp() * p0).collect())
}

/// Smallest non-zero relaxation rate of the generator (MHz).
pub fn spectral_gap(rm: &RateMatrix) -> f64 {
    let g = rm.generator();
    let scale = g.amax().max(1e-300);
    g.complex_eigenvalues()
        .iter()
        .map(|z| -z.re)
        .filter(|&r| r > 1e-12 * scale)
        .fold(f64::INFINITY, f64::min)
}

/// Effective repolarization rate γ_las of the 7-level model, defined as its
/// spectral gap.
pub fn effective_repolarization_rate(rs: &RateSet) -> f64 {
    spectral_gap(&build_electron_rate_matrix(rs))
}

/// Pump rate `k_las` whose 7-level spectral gap equals `gamma_las`.
pub fn k_las_for_repolarization_rate(rs: &RateSet, gamma_las: f64) -> Result<f64> {
    if !(gamma_las > 0.0 && gamma_las.is_finite()) {
        return Err(NvError::invalid("gamma_las must be positive"));
    }
    let f = |k: f64| effective_repolarization_rate(&rs.with_k_las(k)) - gamma_las;
    let (mut lo, mut hi) = (1e-6_f64, 1e-3_f64);
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(NvError::invalid(format!("gamma_las {gamma_las} is not reachable")));
        }
    }
    if f(lo) > 0.0 {
        return Err(NvError::invalid(format!("gamma_las {gamma_las} is below the reachable range")));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Rotated rate matrix for a field and model level.
pub fn rotated_model(
    params: &NvParams,
    rs: &RateSet,
    field: &FieldConfig,
    level: ModelLevel,
    metastable: MetastableModel,
) -> Result<(RateMatrix, CompositeBasis)> {
    rs.validate()?;
    let basis = CompositeBasis::new(params, field, level, metastable)?;
    let k7 = build_electron_rate_matrix(rs);
    let k = match level {
        ModelLevel::Seven => k7,
        ModelLevel::TwentyOne => extend_to_nuclear(&k7)?,
    };
    Ok((rotate_rates(&k, &basis)?, basis))
}

/// Steady-state polarization at one field: the population of the lowest
/// ground eigenstate (7 levels) or of the three lowest ground eigenstates
/// (21 levels), as a fraction of the total ground-manifold population.
pub fn polarization_at(
    params: &NvParams,
    rs: &RateSet,
    field: &FieldConfig,
    level: ModelLevel,
    metastable: MetastableModel,
) -> Result<f64> {
    let (k, basis) = rotated_model(params, rs, field, level, metastable)?;
    let p = steady_state(&k)?;
    let nground = match level {
        ModelLevel::Seven => 3,
        ModelLevel::TwentyOne => 9,
    };
    let ground: f64 = p.rows(0, nground).sum();
    let target: f64 = match level {
        ModelLevel::Seven => p[basis.lowest_ground()],
        ModelLevel::TwentyOne => basis.lowest_ground_triplet().iter().map(|&i| p[i]).sum(),
    };
    Ok(target / ground)
}

/// Polarization curve over a θ grid at fixed `b`.
pub fn polarization_vs_angle(
    params: &NvParams,
    rs: &RateSet,
    b: f64,
    theta_grid: &[f64],
    level: ModelLevel,
) -> Result<Vec<(f64, f64)>> {
    theta_grid
        .par_iter()
        .map(|&theta| {
            let field = FieldConfig::new(b, theta)?;
            Ok((theta, polarization_at(params, rs, &field, level, MetastableModel::default())?))
        })
        .collect()
}

/// Min/max envelope over the ±σ corners of the intrinsic rates.
pub fn polarization_envelope(
    params: &NvParams,
    rs: &RateSet,
    sigma: &RateUncertainty,
    b: f64,
    theta_grid: &[f64],
    level: ModelLevel,
) -> Result<Vec<(f64, f64, f64)>> {
    let corners = rs.corners(sigma);
    theta_grid
        .par_iter()
        .map(|&theta| {
            let field = FieldConfig::new(b, theta)?;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for c in &corners {
                let v = polarization_at(params, c, &field, level, MetastableModel::default())?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            Ok((theta, lo, hi))
        })
        .collect()
}

/// Uniform initial distribution over the ground manifold of a model.
pub fn uniform_ground(dim: usize) -> DVector<f64> {
    let ng = if dim == 7 { 3 } else { 9 };
    DVector::from_fn(dim, |i, _| if i < ng { 1.0 / ng as f64 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn electron_matrix_has_twelve_transitions() {
        let k = build_electron_rate_matrix(&RateSet::set1());
        assert_eq!(k.nonzero_count(), 12);
        let g = k.generator();
        for j in 0..7 {
            assert!(g.column(j).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn nuclear_extension_round_trip() {
        let k7 = build_electron_rate_matrix(&RateSet::set2());
        let k21 = extend_to_nuclear(&k7).unwrap();
        assert_eq!(k21.nonzero_count(), 36);
        let back = trace_out_nucleus(&k21).unwrap();
        assert!((back.rates - k7.rates).amax() < 1e-14);
        for i in 0..21 {
            for j in 0..21 {
                let ni = if i >= 18 { i - 18 } else { i % 3 };
                let nj = if j >= 18 { j - 18 } else { j % 3 };
                if ni != nj {
                    assert_eq!(k21.rates[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn two_level_detailed_balance() {
        let (r, s) = (0.3, 1.7);
        let k = RateMatrix::new(RMat::from_row_slice(2, 2, &[0.0, r, s, 0.0])).unwrap();
        let p = steady_state(&k).unwrap();
        assert!((p[0] - s / (r + s)).abs() < 1e-14);
        assert!((p[1] - r / (r + s)).abs() < 1e-14);
    }

    #[test]
    fn no_pumping_is_not_unique() {
        let k = build_electron_rate_matrix(&RateSet::set1().with_k_las(0.0));
        assert_eq!(steady_state(&k), Err(NvError::NonUniqueSteadyState { dim: 3 }));
    }

    #[test]
    fn corners_cover_all_signs() {
        let c = RateSet::set1().corners(&RatePreset::Set1.uncertainty());
        assert_eq!(c.len(), 32);
        assert!(c.iter().any(|r| (r.k_pl - 69.2).abs() < 1e-12 && (r.k_72 - 0.64).abs() < 1e-12));
    }

    #[test]
    fn gap_inversion() {
        let rs = RateSet::set1();
        let k = k_las_for_repolarization_rate(&rs, 0.0225).unwrap();
        assert!((effective_repolarization_rate(&rs.with_k_las(k)) - 0.0225).abs() < 1e-10);
    }
}
