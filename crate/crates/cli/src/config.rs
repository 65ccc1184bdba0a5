//! Experiment configuration. Every section has defaults at the operating
//! points used for the figures, so an empty file is a valid config.

use std::path::{Path, PathBuf};

use nvsim::lindblad::DepolarizationOptions;
use nvsim::photophysics::{k_las_for_repolarization_rate, ModelLevel, RatePreset, RateSet};
use nvsim::sequences::{DriveTone, LambdaModel, SequenceDurations};
use nvsim::transitions::{Branch, DriveAxis, FamilyTag};
use nvsim::{FieldConfig, NvParams};
use serde::{Deserialize, Serialize};

pub const B_LIMIT: f64 = 500.0;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub params: NvParams,
    pub rates: RatesConfig,
    pub output: OutputConfig,
    pub spectrum: SpectrumConfig,
    pub ratio: RatioConfig,
    pub polarization: PolarizationConfig,
    pub depolarization: DepolarizationConfig,
    pub cpt: CptConfig,
    pub cpt_sweep: CptSweepConfig,
    pub polarize: PolarizeConfig,
    pub calibrate: CalibrateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// G
    pub b: f64,
    pub theta_deg: f64,
    #[serde(default)]
    pub phi_deg: f64,
}

impl FieldSpec {
    pub const fn new(b: f64, theta_deg: f64) -> Self {
        Self { b, theta_deg, phi_deg: 0.0 }
    }

    fn validate(&self, what: &str) -> Result<(), String> {
        check_b(self.b, what)?;
        check_theta(self.theta_deg, what)?;
        if !self.phi_deg.is_finite() {
            return Err(format!("{what}: phi_deg is not finite"));
        }
        Ok(())
    }

    pub fn field(&self) -> nvsim::Result<FieldConfig> {
        FieldConfig::with_phi(self.b, self.theta_deg.to_radians(), self.phi_deg.to_radians())
    }
}

fn check_b(b: f64, what: &str) -> Result<(), String> {
    if !(0.0..=B_LIMIT).contains(&b) {
        return Err(format!("{what}: B = {b} G outside [0, {B_LIMIT}]"));
    }
    Ok(())
}

fn check_theta(t: f64, what: &str) -> Result<(), String> {
    if !(0.0..=90.0).contains(&t) {
        return Err(format!("{what}: theta = {t} deg outside [0, 90]"));
    }
    Ok(())
}

fn check_points(n: usize, min: usize, what: &str) -> Result<(), String> {
    if n < min {
        return Err(format!("{what}: need at least {min} points, got {n}"));
    }
    Ok(())
}

fn check_positive(v: f64, what: &str) -> Result<(), String> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("{what} must be positive, got {v}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub preset: RatePreset,
    /// `k_las` as a multiple of `k_pl`; ignored when `k_las` is given.
    pub k_las_fraction: f64,
    pub k_las: Option<f64>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            preset: RatePreset::Set1,
            k_las_fraction: 0.01,
            k_las: None,
        }
    }
}

impl RatesConfig {
    pub fn rate_set(&self) -> RateSet {
        let rs = self.preset.rates();
        let k = self.k_las.unwrap_or(self.k_las_fraction * rs.k_pl);
        rs.with_k_las(k)
    }

    fn validate(&self) -> Result<(), String> {
        check_positive(self.k_las_fraction, "rates.k_las_fraction")?;
        if let Some(k) = self.k_las {
            check_positive(k, "rates.k_las")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchChoice {
    Plus,
    Minus,
    Both,
}

impl BranchChoice {
    pub fn branches(self) -> Vec<Branch> {
        match self {
            BranchChoice::Plus => vec![Branch::Plus],
            BranchChoice::Minus => vec![Branch::Minus],
            BranchChoice::Both => vec![Branch::Minus, Branch::Plus],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub field: FieldSpec,
    pub branch: BranchChoice,
    pub axis: DriveAxis,
    /// Gaussian FWHM of every line (MHz).
    pub linewidth: f64,
    pub contrast: f64,
    pub points: usize,
    /// Grid extends this far beyond the outermost line (MHz).
    pub margin: f64,
    /// Lines closer than this are reported as one resolved line (MHz).
    pub merge_distance: f64,
    /// Resolved lines below this fraction of the strongest weight are dropped.
    pub min_relative_weight: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            field: FieldSpec::new(75.0, 87.8),
            branch: BranchChoice::Plus,
            axis: DriveAxis::X,
            linewidth: 0.237,
            contrast: 0.1,
            points: 2001,
            margin: 3.0,
            merge_distance: 0.12,
            min_relative_weight: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioConfig {
    pub b_values: Vec<f64>,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub points: usize,
    pub numerator: FamilyTag,
    pub denominator: FamilyTag,
}

impl Default for RatioConfig {
    fn default() -> Self {
        Self {
            b_values: vec![57.0, 75.0, 82.0],
            theta_min_deg: 84.0,
            theta_max_deg: 89.7,
            points: 58,
            numerator: "a-".parse().expect("valid tag"),
            denominator: "2-".parse().expect("valid tag"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarizationConfig {
    pub b: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub points: usize,
    pub level: ModelLevel,
    /// Rate set plotted next to the central one.
    pub alternative: Option<RatePreset>,
    /// Min/max over the ±σ corners of the central rates.
    pub envelope: bool,
}

impl Default for PolarizationConfig {
    fn default() -> Self {
        Self {
            b: 100.0,
            theta_min_deg: 0.0,
            theta_max_deg: 90.0,
            points: 91,
            level: ModelLevel::Seven,
            alternative: Some(RatePreset::Set2),
            envelope: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepolarizationConfig {
    pub field: FieldSpec,
    pub options: DepolarizationOptions,
    /// Extra runs at these multiples of the configured `k_las`.
    pub k_las_scales: Vec<f64>,
}

impl Default for DepolarizationConfig {
    fn default() -> Self {
        Self {
            field: FieldSpec::new(82.71, 10.2),
            options: DepolarizationOptions::default(),
            k_las_scales: vec![0.1, 0.2, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CptConfig {
    pub model: LambdaModel,
    pub points: usize,
    /// Half-width of the two-photon detuning grid (MHz); sized from the fit when absent.
    pub half_span: Option<f64>,
}

impl Default for CptConfig {
    fn default() -> Self {
        Self {
            model: LambdaModel::default(),
            points: 241,
            half_span: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CptSweepConfig {
    pub model: LambdaModel,
    pub points: usize,
    pub omega_1: Vec<f64>,
    pub gamma_las: Vec<f64>,
}

impl Default for CptSweepConfig {
    fn default() -> Self {
        Self {
            model: LambdaModel::default(),
            points: 161,
            omega_1: vec![0.005, 0.0075, 0.01, 0.0129, 0.015, 0.02, 0.025, 0.03],
            gamma_las: vec![0.005, 0.01, 0.015, 0.018, 0.025, 0.035, 0.05],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub name: String,
    pub targets: Vec<FamilyTag>,
    pub omega: f64,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default)]
    pub axis: DriveAxis,
}

impl PumpSpec {
    pub fn tone(&self) -> DriveTone {
        DriveTone {
            targets: self.targets.clone(),
            omega: self.omega,
            detuning: self.detuning,
            axis: self.axis,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarizeConfig {
    pub field: FieldSpec,
    /// Effective electron repolarization rate; converted to `k_las`.
    pub gamma_las: f64,
    pub durations: SequenceDurations,
    pub pumps: Vec<PumpSpec>,
}

impl Default for PolarizeConfig {
    fn default() -> Self {
        let pump = |name: &str, targets: &[&str], omega: f64| PumpSpec {
            name: name.into(),
            targets: targets.iter().map(|t| t.parse().expect("valid tag")).collect(),
            omega,
            detuning: 0.0,
            axis: DriveAxis::X,
        };
        Self {
            field: FieldSpec::new(82.71, 10.2),
            gamma_las: 0.0225,
            durations: SequenceDurations::default(),
            pumps: vec![
                pump("none", &["a-"], 0.0),
                pump("a", &["a-"], 0.017),
                pump("b", &["b-"], 0.017),
                pump("cd", &["c-", "d-"], 0.017),
            ],
        }
    }
}

impl PolarizeConfig {
    pub fn k_las(&self, rs: &RateSet) -> nvsim::Result<f64> {
        k_las_for_repolarization_rate(rs, self.gamma_las)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    pub e_plus: Option<f64>,
    pub e_minus: Option<f64>,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| format!("params: {e}"))?;
        self.rates.validate()?;

        let s = &self.spectrum;
        s.field.validate("spectrum.field")?;
        check_points(s.points, 2, "spectrum")?;
        check_positive(s.linewidth, "spectrum.linewidth")?;
        if !(s.contrast > 0.0 && s.contrast <= 1.0) {
            return Err("spectrum.contrast must lie in (0, 1]".into());
        }
        if !(s.margin >= 0.0 && s.merge_distance >= 0.0 && s.min_relative_weight >= 0.0) {
            return Err("spectrum: margin, merge_distance and min_relative_weight must be >= 0".into());
        }

        let r = &self.ratio;
        if r.b_values.is_empty() {
            return Err("ratio.b_values is empty".into());
        }
        for &b in &r.b_values {
            check_b(b, "ratio.b_values")?;
        }
        check_theta(r.theta_min_deg, "ratio")?;
        check_theta(r.theta_max_deg, "ratio")?;
        if !(r.theta_max_deg < 90.0 && r.theta_min_deg <= r.theta_max_deg) {
            return Err("ratio: need theta_min_deg <= theta_max_deg < 90".into());
        }
        check_points(r.points, 1, "ratio")?;

        let p = &self.polarization;
        check_b(p.b, "polarization")?;
        check_theta(p.theta_min_deg, "polarization")?;
        check_theta(p.theta_max_deg, "polarization")?;
        if p.theta_min_deg > p.theta_max_deg {
            return Err("polarization: theta_min_deg > theta_max_deg".into());
        }
        check_points(p.points, 1, "polarization")?;

        let d = &self.depolarization;
        d.field.validate("depolarization.field")?;
        let o = &d.options;
        check_positive(o.seed_fraction, "depolarization.options.seed_fraction")?;
        check_positive(o.horizon_factor, "depolarization.options.horizon_factor")?;
        check_points(o.points, 16, "depolarization.options")?;
        if !(0.0..0.9).contains(&o.discard_fraction) {
            return Err("depolarization.options.discard_fraction must lie in [0, 0.9)".into());
        }
        for &k in &d.k_las_scales {
            check_positive(k, "depolarization.k_las_scales")?;
        }

        self.cpt.model.validate().map_err(|e| format!("cpt.model: {e}"))?;
        check_points(self.cpt.points, 9, "cpt")?;
        if let Some(h) = self.cpt.half_span {
            check_positive(h, "cpt.half_span")?;
        }
        let cs = &self.cpt_sweep;
        cs.model.validate().map_err(|e| format!("cpt_sweep.model: {e}"))?;
        check_points(cs.points, 9, "cpt_sweep")?;
        for &v in cs.omega_1.iter().chain(&cs.gamma_las) {
            check_positive(v, "cpt_sweep values")?;
        }

        let z = &self.polarize;
        z.field.validate("polarize.field")?;
        check_positive(z.gamma_las, "polarize.gamma_las")?;
        for (name, v) in [
            ("polarize", z.durations.polarize),
            ("pump", z.durations.pump),
            ("repolarize", z.durations.repolarize),
            ("read", z.durations.read),
        ] {
            check_positive(v, &format!("polarize.durations.{name}"))?;
        }
        for pump in &z.pumps {
            if pump.name.is_empty() || !pump.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(format!("polarize.pumps: invalid name {:?}", pump.name));
            }
            pump.tone().validate().map_err(|e| format!("polarize.pumps.{}: {e}", pump.name))?;
        }

        let c = &self.calibrate;
        if !(c.sigma_plus >= 0.0 && c.sigma_minus >= 0.0) {
            return Err("calibrate: sigmas must be >= 0".into());
        }
        Ok(())
    }
}
