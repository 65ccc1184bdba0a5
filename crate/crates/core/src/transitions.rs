//! Microwave transition strengths, line-family tables and synthetic ODMR.
//!
//! Family naming within a branch (`+`: m_S 0 → +1, `−`: m_S 0 → −1) follows
//! ascending transition frequency inside each Δm_I class:
//!
//! | Δm_I | families        |
//! |------|-----------------|
//! | 0    | `1`, `2`, `3`   |
//! | ±1   | `a`, `b`, `c`, `d` |
//! | ±2   | `Other`         |
//!
//! With the default constants this gives, for the `−` branch, `a− = |0,0⟩ →
//! |−1,−1⟩`, `b− = |0,0⟩ → |−1,+1⟩`, `c−`/`d− = |0,±1⟩ → |−1,0⟩`, and
//! `1−`/`2−`/`3−` for `m_I = −1, 0, +1`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};
use crate::linalg::CMat;
use crate::params::{FieldConfig, NvParams};
use crate::spin::{electron_operator, labeled_ground, spin1_matrices, BareState, BasisKind, EigenSystem};
use crate::trace::SpectrumTrace;
use crate::C64;

/// Strengths below this are treated as a vanishing denominator.
pub const DEGENERATE_STRENGTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriveAxis {
    #[default]
    X,
    Y,
    /// Linear polarization at this angle (rad) from x in the x–y plane.
    InPlane(f64),
}

impl DriveAxis {
    fn weights(self) -> (f64, f64) {
        match self {
            DriveAxis::X => (1.0, 0.0),
            DriveAxis::Y => (0.0, 1.0),
            DriveAxis::InPlane(a) => (a.cos(), a.sin()),
        }
    }

    /// Drive operator on the electron, `cos a·Sx + sin a·Sy`.
    pub fn electron_operator(self) -> CMat {
        let (sx, sy, _) = spin1_matrices();
        let (wx, wy) = self.weights();
        sx * C64::new(wx, 0.0) + sy * C64::new(wy, 0.0)
    }

    fn combine(self, ex: C64, ey: C64) -> f64 {
        let (wx, wy) = self.weights();
        (ex * wx + ey * wy).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn ms(self) -> i8 {
        match self {
            Branch::Plus => 1,
            Branch::Minus => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    One,
    Two,
    Three,
    A,
    B,
    C,
    D,
    Other,
}

impl Family {
    const PRESERVING: [Family; 3] = [Family::One, Family::Two, Family::Three];
    const EXCHANGING: [Family; 4] = [Family::A, Family::B, Family::C, Family::D];

    pub fn is_exchanging(self) -> bool {
        Self::EXCHANGING.contains(&self)
    }

    pub fn is_preserving(self) -> bool {
        Self::PRESERVING.contains(&self)
    }
}

/// A line family in a branch, written `a-`, `2+`, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FamilyTag {
    pub family: Family,
    pub branch: Branch,
}

impl FamilyTag {
    pub const fn new(family: Family, branch: Branch) -> Self {
        Self { family, branch }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.family {
            Family::One => "1",
            Family::Two => "2",
            Family::Three => "3",
            Family::A => "a",
            Family::B => "b",
            Family::C => "c",
            Family::D => "d",
            Family::Other => "other",
        };
        let sign = match self.branch {
            Branch::Plus => '+',
            Branch::Minus => '-',
        };
        write!(f, "{name}{sign}")
    }
}

impl FromStr for FamilyTag {
    type Err = NvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, sign) = s.split_at(s.len().saturating_sub(1));
        let branch = match sign {
            "+" => Branch::Plus,
            "-" | "−" => Branch::Minus,
            _ => return Err(NvError::invalid(format!("family `{s}` needs a trailing + or -"))),
        };
        let family = match name.to_ascii_lowercase().as_str() {
            "1" => Family::One,
            "2" => Family::Two,
            "3" => Family::Three,
            "a" => Family::A,
            "b" => Family::B,
            "c" => Family::C,
            "d" => Family::D,
            "other" => Family::Other,
            _ => return Err(NvError::invalid(format!("unknown family `{s}`"))),
        };
        Ok(Self { family, branch })
    }
}

impl Serialize for FamilyTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FamilyTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from_label: BareState,
    pub to_label: BareState,
    pub from_index: usize,
    pub to_index: usize,
    /// MHz, ≥ 0.
    pub frequency: f64,
    pub strength_x: f64,
    pub strength_y: f64,
    /// `⟨to|Sx|from⟩` and `⟨to|Sy|from⟩`.
    pub element_x: C64,
    pub element_y: C64,
    pub family: Option<FamilyTag>,
}

impl TransitionRecord {
    pub fn strength(&self, axis: DriveAxis) -> f64 {
        match axis {
            DriveAxis::X => self.strength_x,
            DriveAxis::Y => self.strength_y,
            other => other.combine(self.element_x, self.element_y),
        }
    }

    pub fn delta_mi(&self) -> i8 {
        self.to_label.mi.unwrap_or(0) - self.from_label.mi.unwrap_or(0)
    }
}

fn drive_element(eig: &EigenSystem, op: &CMat, i: usize, j: usize) -> C64 {
    let full = match eig.basis {
        BasisKind::ElectronNuclear => electron_operator(op),
        _ => op.clone(),
    };
    (eig.vectors.column(j).adjoint() * &full * eig.vectors.column(i))[(0, 0)]
}

fn check_pair(eig: &EigenSystem, i: usize, j: usize) -> Result<()> {
    let n = eig.dim();
    for k in [i, j] {
        if k >= n {
            return Err(NvError::IndexOutOfRange { index: k, dim: n });
        }
    }
    if i == j {
        return Err(NvError::invalid("transition requires two distinct eigenstates"));
    }
    Ok(())
}

/// `|⟨j|S_axis ⊗ 1|i⟩|` between eigenstates `i` and `j`.
pub fn transition_strength(eig: &EigenSystem, i: usize, j: usize, axis: DriveAxis) -> Result<f64> {
    check_pair(eig, i, j)?;
    Ok(drive_element(eig, &axis.electron_operator(), i, j).norm())
}

/// Rabi frequency `γe·B_uw·strength` (MHz).
pub fn rabi_frequency(strength: f64, b_uw: f64, params: &NvParams) -> f64 {
    params.gamma_e * b_uw * strength
}

/// All nine transitions from the `m_S = 0` states to the `m_S = ±1` states
/// of `branch`, tagged with their family.
pub fn transition_table(eig: &EigenSystem, branch: Branch) -> Result<Vec<TransitionRecord>> {
    if eig.basis != BasisKind::ElectronNuclear {
        return Err(NvError::DimensionMismatch {
            expected: 9,
            got: eig.dim(),
        });
    }
    let (sx, sy, _) = spin1_matrices();
    let mut records = Vec::with_capacity(9);
    for mi_from in [1i8, 0, -1] {
        for mi_to in [1i8, 0, -1] {
            let from_label = BareState::new(0, mi_from);
            let to_label = BareState::new(branch.ms(), mi_to);
            let i = eig.index_of(from_label)?;
            let j = eig.index_of(to_label)?;
            let ex = drive_element(eig, &sx, i, j);
            let ey = drive_element(eig, &sy, i, j);
            records.push(TransitionRecord {
                from_label,
                to_label,
                from_index: i,
                to_index: j,
                frequency: (eig.energies[j] - eig.energies[i]).abs(),
                strength_x: ex.norm(),
                strength_y: ey.norm(),
                element_x: ex,
                element_y: ey,
                family: None,
            });
        }
    }
    for (class, names) in [(0i8, &Family::PRESERVING[..]), (1, &Family::EXCHANGING[..])] {
        let mut idx: Vec<usize> = (0..records.len())
            .filter(|&k| records[k].delta_mi().abs() == class)
            .collect();
        idx.sort_by(|&a, &b| records[a].frequency.total_cmp(&records[b].frequency));
        for (k, fam) in idx.into_iter().zip(names) {
            records[k].family = Some(FamilyTag::new(*fam, branch));
        }
    }
    for r in records.iter_mut().filter(|r| r.delta_mi().abs() == 2) {
        r.family = Some(FamilyTag::new(Family::Other, branch));
    }
    records.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(records)
}

pub fn find_family(table: &[TransitionRecord], tag: FamilyTag) -> Result<&TransitionRecord> {
    table
        .iter()
        .find(|r| r.family == Some(tag))
        .ok_or_else(|| NvError::MissingFamily(tag.to_string()))
}

/// Strength ratio `num/den` along a θ grid at fixed `b`.
pub fn strength_ratio_curve(
    params: &NvParams,
    b: f64,
    num: FamilyTag,
    den: FamilyTag,
    theta_grid: &[f64],
    axis: DriveAxis,
) -> Result<Vec<(f64, f64)>> {
    theta_grid
        .par_iter()
        .map(|&theta| {
            if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
                return Err(NvError::invalid(format!("theta {theta} outside [0, pi/2)")));
            }
            let field = FieldConfig::new(b, theta)?;
            let eig = labeled_ground(params, &field)?;
            let sn = family_strength(&eig, num, axis)?;
            let sd = family_strength(&eig, den, axis)?;
            if sd < DEGENERATE_STRENGTH {
                return Err(NvError::DegenerateDenominator { theta, strength: sd });
            }
            Ok((theta, sn / sd))
        })
        .collect()
}

pub fn family_strength(eig: &EigenSystem, tag: FamilyTag, axis: DriveAxis) -> Result<f64> {
    let table = transition_table(eig, tag.branch)?;
    Ok(find_family(&table, tag)?.strength(axis))
}

/// Unit-peak Gaussian in units of its FWHM.
fn unit_gaussian(x: f64) -> f64 {
    (-4.0 * std::f64::consts::LN_2 * x * x).exp()
}

/// ODMR spectrum `1 − c·Σ_k (s_k²/s_max²)·g((f − f_k)/Γ)` clamped at 0.
pub fn synth_odmr(
    table: &[TransitionRecord],
    linewidth_fwhm: f64,
    contrast_scale: f64,
    axis: DriveAxis,
    grid: &[f64],
) -> Result<SpectrumTrace> {
    let weights: Vec<f64> = table.iter().map(|r| r.strength(axis).powi(2)).collect();
    synth_weighted(table, &weights, linewidth_fwhm, contrast_scale, grid)
        .map(|t| t.with_meta("drive_axis", format!("{axis:?}")))
}

/// Same as [`synth_odmr`] with explicit per-line weights, normalized to the
/// largest weight.
pub fn synth_weighted(
    table: &[TransitionRecord],
    weights: &[f64],
    linewidth_fwhm: f64,
    contrast_scale: f64,
    grid: &[f64],
) -> Result<SpectrumTrace> {
    if table.is_empty() {
        return Err(NvError::EmptyTable);
    }
    if weights.len() != table.len() {
        return Err(NvError::DimensionMismatch {
            expected: table.len(),
            got: weights.len(),
        });
    }
    if !(linewidth_fwhm > 0.0) {
        return Err(NvError::NonPositiveWidth(linewidth_fwhm));
    }
    if !(contrast_scale > 0.0 && contrast_scale <= 1.0) {
        return Err(NvError::invalid("contrast_scale must lie in (0, 1]"));
    }
    let wmax = weights.iter().copied().fold(0.0, f64::max);
    let signal = grid
        .iter()
        .map(|&f| {
            if wmax == 0.0 {
                return 1.0;
            }
            let dip: f64 = table
                .iter()
                .zip(weights)
                .map(|(r, w)| w / wmax * unit_gaussian((f - r.frequency) / linewidth_fwhm))
                .sum();
            (1.0 - contrast_scale * dip).max(0.0)
        })
        .collect();
    Ok(SpectrumTrace::new(grid.to_vec(), signal)?
        .with_meta("linewidth_fwhm_mhz", linewidth_fwhm)
        .with_meta("contrast_scale", contrast_scale))
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}
