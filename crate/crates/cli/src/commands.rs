use nvsim::calibration::{invert_field, CalibrationInput};
use nvsim::fitting::{fit_lorentzian, FitResult};
use nvsim::lindblad::{build_model, depolarization_rates};
use nvsim::photophysics::{polarization_envelope, polarization_vs_angle};
use nvsim::sequences::{cpt_scaling, cpt_spectrum, cpt_spectrum_fitted, polarization_sequence, CptScalingRow, CptSweepVariable};
use nvsim::spin::labeled_ground;
use nvsim::transitions::{linspace, strength_ratio_curve, synth_odmr, transition_table, DriveAxis, FamilyTag, TransitionRecord};
use nvsim::NvError;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{meta, Writer};

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(NvError),
    Fit(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Fit(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
            CliError::Fit(m) => write!(f, "fit failure: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<NvError> for CliError {
    fn from(e: NvError) -> Self {
        match e {
            NvError::FitFailure { .. } => CliError::Fit(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CmdResult = Result<(), CliError>;

fn fmt(x: f64) -> String {
    nvsim::trace::format_g(x, nvsim::trace::CSV_DIGITS)
}

#[derive(Serialize)]
struct ResolvedLine {
    frequency_mhz: f64,
    relative_weight: f64,
    families: Vec<String>,
}

#[derive(Serialize)]
struct BranchLines {
    branch: String,
    resolved_lines: Vec<ResolvedLine>,
    transitions: Vec<TransitionRecord>,
}

#[derive(Serialize)]
struct SpectrumLines {
    b_gauss: f64,
    theta_deg: f64,
    linewidth_mhz: f64,
    branches: Vec<BranchLines>,
}

/// Groups lines closer than `merge` (MHz), weight-averaging their positions.
fn resolve_lines(table: &[TransitionRecord], axis: DriveAxis, merge: f64, min_rel: f64) -> Vec<ResolvedLine> {
    let mut groups: Vec<(f64, f64, Vec<String>)> = Vec::new();
    let mut last_f = f64::NEG_INFINITY;
    for r in table {
        let w = r.strength(axis).powi(2);
        let tag = r.family.map(|f| f.to_string()).unwrap_or_default();
        match groups.last_mut() {
            Some((fw, wsum, fams)) if r.frequency - last_f < merge => {
                *fw += w * r.frequency;
                *wsum += w;
                fams.push(tag);
            }
            _ => groups.push((w * r.frequency, w, vec![tag])),
        }
        last_f = r.frequency;
    }
    let wmax = groups.iter().map(|g| g.1).fold(0.0, f64::max);
    groups
        .into_iter()
        .filter(|g| wmax > 0.0 && g.1 / wmax >= min_rel)
        .map(|(fw, w, families)| ResolvedLine {
            frequency_mhz: fw / w,
            relative_weight: w / wmax,
            families,
        })
        .collect()
}

pub fn spectrum(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let s = &cfg.spectrum;
    let field = s.field.field()?;
    let eig = labeled_ground(&cfg.params, &field)?;
    let mut all = Vec::new();
    let mut branches = Vec::new();
    for branch in s.branch.branches() {
        let table = transition_table(&eig, branch)?;
        branches.push(BranchLines {
            branch: format!("{branch:?}").to_lowercase(),
            resolved_lines: resolve_lines(&table, s.axis, s.merge_distance, s.min_relative_weight),
            transitions: table.clone(),
        });
        all.extend(table);
    }
    let lo = all.iter().map(|r| r.frequency).fold(f64::INFINITY, f64::min) - s.margin;
    let hi = all.iter().map(|r| r.frequency).fold(f64::NEG_INFINITY, f64::max) + s.margin;
    let trace = synth_odmr(&all, s.linewidth, s.contrast, s.axis, &linspace(lo, hi, s.points))?
        .with_meta("b_gauss", fmt(s.field.b))
        .with_meta("theta_deg", fmt(s.field.theta_deg));
    out.spectrum("spectrum.csv", &trace)?;
    let n: usize = branches.iter().map(|b| b.resolved_lines.len()).sum();
    out.json(
        "spectrum_lines.json",
        &SpectrumLines {
            b_gauss: s.field.b,
            theta_deg: s.field.theta_deg,
            linewidth_mhz: s.linewidth,
            branches,
        },
    )?;
    println!("spectrum: {n} resolved lines");
    Ok(())
}

pub fn ratio(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let r = &cfg.ratio;
    let thetas: Vec<f64> = linspace(r.theta_min_deg, r.theta_max_deg, r.points)
        .iter()
        .map(|t| t.to_radians())
        .collect();
    let mut rows = Vec::new();
    for &b in &r.b_values {
        let x = strength_ratio_curve(&cfg.params, b, r.numerator, r.denominator, &thetas, DriveAxis::X)?;
        let y = strength_ratio_curve(&cfg.params, b, r.numerator, r.denominator, &thetas, DriveAxis::Y)?;
        for ((t, rx), (_, ry)) in x.into_iter().zip(y) {
            rows.push(vec![b, t.to_degrees(), rx, ry]);
        }
    }
    out.table(
        "ratio.csv",
        meta([("numerator", r.numerator.to_string()), ("denominator", r.denominator.to_string())]),
        &["b_gauss", "theta_deg", "ratio_x", "ratio_y"],
        &rows,
    )?;
    println!("ratio: {} rows", rows.len());
    Ok(())
}

pub fn polarization(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let p = &cfg.polarization;
    let rs = cfg.rates.rate_set();
    let thetas: Vec<f64> = linspace(p.theta_min_deg, p.theta_max_deg, p.points)
        .iter()
        .map(|t| t.to_radians())
        .collect();
    let central = polarization_vs_angle(&cfg.params, &rs, p.b, &thetas, p.level)?;
    let mut header = vec!["theta_deg", "polarization"];
    let mut cols: Vec<Vec<f64>> = vec![central.iter().map(|c| c.1).collect()];
    if let Some(alt) = p.alternative {
        let ars = alt.rates().with_k_las(cfg.rates.k_las_fraction * alt.rates().k_pl);
        let ars = cfg.rates.k_las.map_or(ars, |k| ars.with_k_las(k));
        header.push("polarization_alternative");
        cols.push(polarization_vs_angle(&cfg.params, &ars, p.b, &thetas, p.level)?.iter().map(|c| c.1).collect());
    }
    if p.envelope {
        let env = polarization_envelope(&cfg.params, &rs, &cfg.rates.preset.uncertainty(), p.b, &thetas, p.level)?;
        header.extend(["envelope_lo", "envelope_hi"]);
        cols.push(env.iter().map(|e| e.1).collect());
        cols.push(env.iter().map(|e| e.2).collect());
    }
    let rows: Vec<Vec<f64>> = thetas
        .iter()
        .enumerate()
        .map(|(i, t)| std::iter::once(t.to_degrees()).chain(cols.iter().map(|c| c[i])).collect())
        .collect();
    out.table(
        "polarization.csv",
        meta([
            ("b_gauss", fmt(p.b)),
            ("k_las_mhz", fmt(rs.k_las)),
            ("level", format!("{:?}", p.level)),
        ]),
        &header,
        &rows,
    )?;
    println!("polarization: theta = {} deg -> {:.4}", p.theta_min_deg, central[0].1);
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    k_las_scale: f64,
    k_las: f64,
    gamma_0: f64,
    gamma_plus1: f64,
    ratio: f64,
    fit_flagged: bool,
}

#[derive(Serialize)]
struct LinearFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared: if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 },
    }
}

#[derive(Serialize)]
struct DepolarizationReport {
    b_gauss: f64,
    theta_deg: f64,
    k_las: f64,
    gamma_0: f64,
    gamma_plus1: f64,
    ratio: f64,
    fit_flagged: bool,
    fit_0: FitResult,
    fit_plus1: FitResult,
    sweep: Vec<SweepRow>,
    sweep_fit_0: Option<LinearFit>,
    sweep_fit_plus1: Option<LinearFit>,
}

pub fn depolarization(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let d = &cfg.depolarization;
    let field = d.field.field()?;
    let rs = cfg.rates.rate_set();
    let res = depolarization_rates(&build_model(&cfg.params, &field, &rs)?, &d.options)?;
    let mut sweep = Vec::new();
    for &scale in &d.k_las_scales {
        let k = rs.k_las * scale;
        let r = depolarization_rates(&build_model(&cfg.params, &field, &rs.with_k_las(k))?, &d.options)?;
        sweep.push(SweepRow {
            k_las_scale: scale,
            k_las: k,
            gamma_0: r.gamma_0,
            gamma_plus1: r.gamma_plus1,
            ratio: r.ratio,
            fit_flagged: r.fit_flagged,
        });
    }
    let (sweep_fit_0, sweep_fit_plus1) = if sweep.len() >= 2 {
        let k: Vec<f64> = sweep.iter().map(|s| s.k_las).collect();
        let g0: Vec<f64> = sweep.iter().map(|s| s.gamma_0).collect();
        let g1: Vec<f64> = sweep.iter().map(|s| s.gamma_plus1).collect();
        (Some(linear_fit(&k, &g0)), Some(linear_fit(&k, &g1)))
    } else {
        (None, None)
    };
    let (t0, t1) = (&res.traces[0], &res.traces[1]);
    let rows: Vec<Vec<f64>> = t0
        .time_us
        .iter()
        .zip(&t0.values)
        .zip(&t1.values)
        .map(|((t, a), b)| vec![*t, *a, *b])
        .collect();
    out.table(
        "depolarization_traces.csv",
        meta([
            ("b_gauss", fmt(d.field.b)),
            ("theta_deg", fmt(d.field.theta_deg)),
            ("k_las_mhz", fmt(rs.k_las)),
        ]),
        &["time_us", "p_signal_mi0", "p_signal_mi+1"],
        &rows,
    )?;
    println!(
        "depolarization: gamma_0 = {:.6} MHz, gamma_+1 = {:.6} MHz, ratio = {:.4}{}",
        res.gamma_0,
        res.gamma_plus1,
        res.ratio,
        if res.fit_flagged { " (fit flagged)" } else { "" }
    );
    out.json(
        "depolarization.json",
        &DepolarizationReport {
            b_gauss: d.field.b,
            theta_deg: d.field.theta_deg,
            k_las: rs.k_las,
            gamma_0: res.gamma_0,
            gamma_plus1: res.gamma_plus1,
            ratio: res.ratio,
            fit_flagged: res.fit_flagged,
            fit_0: res.fit_0,
            fit_plus1: res.fit_plus1,
            sweep,
            sweep_fit_0,
            sweep_fit_plus1,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CptReport {
    model: nvsim::sequences::LambdaModel,
    fwhm_khz: f64,
    contrast: f64,
    fit: FitResult,
}

pub fn cpt(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let c = &cfg.cpt;
    let (trace, fit) = match c.half_span {
        Some(h) => {
            let t = cpt_spectrum(&c.model, &linspace(-h, h, c.points))?;
            let f = fit_lorentzian(&t.frequency_mhz, &t.signal)?;
            (t, f)
        }
        None => cpt_spectrum_fitted(&c.model, c.points)?,
    };
    out.spectrum("cpt.csv", &trace)?;
    let failure = fit.failure();
    let report = CptReport {
        model: c.model,
        fwhm_khz: fit.get("fwhm") * 1e3,
        contrast: fit.get("contrast"),
        fit,
    };
    println!("cpt: FWHM = {:.3} kHz, contrast = {:.4}", report.fwhm_khz, report.contrast);
    out.json("cpt_fit.json", &report)?;
    match failure {
        Some(e) => Err(CliError::Fit(e.to_string())),
        None => Ok(()),
    }
}

fn sweep_rows(rows: &[CptScalingRow]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| vec![r.x, r.fwhm, r.contrast, if r.fit_ok { 1.0 } else { 0.0 }])
        .collect()
}

pub fn cpt_sweep(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let c = &cfg.cpt_sweep;
    for (variable, values, name) in [
        (CptSweepVariable::Omega1, &c.omega_1, "cpt_sweep_omega_1.csv"),
        (CptSweepVariable::GammaLas, &c.gamma_las, "cpt_sweep_gamma_las.csv"),
    ] {
        if values.is_empty() {
            continue;
        }
        let rows = cpt_scaling(&c.model, variable, values, c.points)?;
        let failed = rows.iter().filter(|r| !r.fit_ok).count();
        out.table(
            name,
            meta([("variable", format!("{variable:?}")), ("failed_fits", failed.to_string())]),
            &["x_mhz", "fwhm_mhz", "contrast", "fit_ok"],
            &sweep_rows(&rows),
        )?;
        println!("cpt-sweep {variable:?}: {} points, {failed} failed fits", rows.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct PumpReport {
    name: String,
    targets: Vec<FamilyTag>,
    omega_mhz: f64,
    tone_frequency_mhz: f64,
    /// m_I = +1, 0, −1
    nuclear_populations: [f64; 3],
    stage_populations: Vec<[f64; 3]>,
    max_trace_error: f64,
}

#[derive(Serialize)]
struct PolarizeReport {
    b_gauss: f64,
    theta_deg: f64,
    gamma_las: f64,
    k_las: f64,
    durations: nvsim::sequences::SequenceDurations,
    pumps: Vec<PumpReport>,
}

pub fn polarize(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let z = &cfg.polarize;
    let field = z.field.field()?;
    let rs = cfg.rates.rate_set();
    let k = z.k_las(&rs)?;
    let model = build_model(&cfg.params, &field, &rs.with_k_las(k))?;
    let mut pumps = Vec::new();
    for pump in &z.pumps {
        let r = polarization_sequence(&model, &pump.tone(), &z.durations)?;
        out.spectrum(&format!("polarize_readout_{}.csv", pump.name), &r.readout)?;
        println!(
            "polarize {}: m_I (+1, 0, -1) = ({:.3}, {:.3}, {:.3})",
            pump.name, r.nuclear_populations[0], r.nuclear_populations[1], r.nuclear_populations[2]
        );
        pumps.push(PumpReport {
            name: pump.name.clone(),
            targets: pump.targets.clone(),
            omega_mhz: pump.omega,
            tone_frequency_mhz: r.tone_frequency,
            nuclear_populations: r.nuclear_populations,
            stage_populations: r.stage_populations,
            max_trace_error: r.max_trace_error,
        });
    }
    out.json(
        "polarize.json",
        &PolarizeReport {
            b_gauss: z.field.b,
            theta_deg: z.field.theta_deg,
            gamma_las: z.gamma_las,
            k_las: k,
            durations: z.durations,
            pumps,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CalibrationReport {
    input: CalibrationInput,
    e_mean_mhz: f64,
    e_diff_mhz: f64,
    b_gauss: f64,
    sigma_b_gauss: f64,
    theta_deg: f64,
    sigma_theta_deg: f64,
    theta_rad: f64,
    sigma_theta_rad: f64,
    covariance: [[f64; 2]; 2],
    residual_mhz: f64,
    jacobian_det: f64,
    iterations: usize,
}

pub fn calibrate(cfg: &ExperimentConfig, out: &mut Writer) -> CmdResult {
    let c = &cfg.calibrate;
    let (Some(e_plus), Some(e_minus)) = (c.e_plus, c.e_minus) else {
        return Err(CliError::Config("calibrate needs e_plus and e_minus".into()));
    };
    let input = CalibrationInput::new(e_plus, e_minus, c.sigma_plus, c.sigma_minus).map_err(|e| CliError::Config(e.to_string()))?;
    let r = invert_field(&cfg.params, &input)?;
    println!(
        "calibrate: B = {:.4} ± {:.4} G, theta = {:.4} ± {:.4} deg",
        r.b,
        r.sigma_b,
        r.theta.to_degrees(),
        r.sigma_theta.to_degrees()
    );
    out.json(
        "calibration.json",
        &CalibrationReport {
            input,
            e_mean_mhz: input.e_mean(),
            e_diff_mhz: input.e_diff(),
            b_gauss: r.b,
            sigma_b_gauss: r.sigma_b,
            theta_deg: r.theta.to_degrees(),
            sigma_theta_deg: r.sigma_theta.to_degrees(),
            theta_rad: r.theta,
            sigma_theta_rad: r.sigma_theta,
            covariance: r.covariance,
            residual_mhz: r.residual,
            jacobian_det: r.jacobian_det,
            iterations: r.iterations,
        },
    )?;
    Ok(())
}
