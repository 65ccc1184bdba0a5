mod common;

use common::{z, Cm};
use nalgebra::DVector;
use nvsim::fitting::{damped_sin, fit_damped_sin};
use nvsim::lindblad::{build_model, LindbladModel};
use nvsim::photophysics::{k_las_for_repolarization_rate, RateSet};
use nvsim::sequences::{
    cpt_excited_population, cpt_scaling, cpt_spectrum, cpt_spectrum_fitted, dark_state_fidelity, polarization_sequence,
    rabi_trace, CptSweepVariable, DriveTone, LambdaModel, SequenceDurations,
};
use nvsim::transitions::{linspace, FamilyTag};
use nvsim::{FieldConfig, NvParams};
use proptest::prelude::*;

/// Closed-form detuned Rabi population without damping.
fn rabi_oracle(omega: f64, delta: f64, t: f64) -> f64 {
    let w = omega.hypot(delta);
    (omega / w).powi(2) * (std::f64::consts::PI * w * t).sin().powi(2)
}

/// Steady state of the Λ model from an independently assembled Liouvillian,
/// with coherence dephasing expressed as a `√(2γ)|e⟩⟨e|` jump.
fn lambda_oracle(m: &LambdaModel, two_photon: f64) -> f64 {
    let (g1, g2, e) = (0, 1, 2);
    let mut h = Cm::zeros(3, 3);
    h[(e, e)] = z(-(m.delta + two_photon / 2.0));
    h[(g2, g2)] = z(-two_photon);
    h[(e, g1)] = z(m.omega_a / 2.0);
    h[(g1, e)] = z(m.omega_a / 2.0);
    h[(e, g2)] = z(m.omega_1 / 2.0);
    h[(g2, e)] = z(m.omega_1 / 2.0);
    let jump = |from: usize, to: usize, rate: f64| {
        let mut j = Cm::zeros(3, 3);
        j[(to, from)] = z(rate.sqrt());
        j
    };
    let g = m.gamma_las;
    let jumps = vec![
        jump(e, g2, m.branching_g2 * g),
        jump(e, g1, (1.0 - m.branching_g2 + m.e2g1_fraction) * g),
        jump(g1, g2, m.g2g1_fraction * g),
        jump(g2, g1, m.g2g1_fraction * g),
        jump(e, e, 2.0 * m.dephasing_eg),
    ];
    let mut l = common::liouvillian(&h, &jumps);
    // replace one equation by the trace condition
    let mut rhs = DVector::from_element(9, z(0.0));
    for k in 0..9 {
        l[(0, k)] = z(if k % 4 == 0 { 1.0 } else { 0.0 });
    }
    rhs[0] = z(1.0);
    let v = l.lu().solve(&rhs).unwrap();
    v[8].re
}

#[test]
fn rabi_matches_closed_form() {
    let times = linspace(0.0, 30.0, 301);
    for (w, d) in [(0.147, 0.0), (0.147, 0.05), (0.1, 1.0)] {
        let tr = rabi_trace(w, d, 0.0, &times).unwrap();
        for (t, v) in tr.time_us.iter().zip(&tr.values) {
            assert!((v - rabi_oracle(w, d, *t)).abs() < 1e-9, "Ω={w} δ={d} t={t}");
        }
    }
}

#[test]
fn dephased_rabi_settles_at_half() {
    let tr = rabi_trace(0.147, 0.0, 0.5, &[200.0]).unwrap();
    assert!((tr.values[0] - 0.5).abs() < 1e-9);
}

#[test]
fn synthetic_rabi_round_trips_through_fit() {
    for (w, tau) in [(0.147, 22.0), (0.138, 26.0)] {
        let t = linspace(0.0, 40.0, 801);
        let y: Vec<f64> = t.iter().map(|&s| damped_sin(s, w, tau, 0.0, -0.5, 0.5)).collect();
        let fit = fit_damped_sin(&t, &y).unwrap();
        assert!((fit.get("omega") / w - 1.0).abs() < 0.01);
        assert!((fit.get("tau") / tau - 1.0).abs() < 0.01);
    }
}

#[test]
fn lambda_steady_state_matches_oracle() {
    let ideal = LambdaModel::ideal(0.0306, 0.0129, 0.018);
    let relaxed = LambdaModel { delta: 0.04, ..LambdaModel::default() };
    for m in [LambdaModel::default(), ideal, relaxed] {
        for d in [0.0, 0.003, -0.01, 0.05] {
            let got = cpt_excited_population(&m, d).unwrap();
            let want = lambda_oracle(&m, d);
            assert!((got - want).abs() < 1e-10 * want + 1e-14, "Δ={d}: {got} vs {want}");
        }
    }
}

#[test]
fn ideal_lambda_has_a_perfect_dark_state() {
    for (wa, w1) in [(0.0306, 0.0129), (0.01, 0.05), (0.2, 0.2)] {
        let m = LambdaModel::ideal(wa, w1, 0.018);
        assert!(cpt_excited_population(&m, 0.0).unwrap() < 1e-10);
        assert!(dark_state_fidelity(&m).unwrap() > 1.0 - 1e-8);
    }
}

#[test]
fn spectrum_is_symmetric_about_two_photon_resonance() {
    let grid = linspace(-0.02, 0.02, 41);
    let s = cpt_spectrum(&LambdaModel::default(), &grid).unwrap();
    let n = s.signal.len();
    for k in 0..n {
        assert!((s.signal[k] - s.signal[n - 1 - k]).abs() < 1e-8);
    }
}

#[test]
fn single_drive_spectrum_is_flat() {
    let m = LambdaModel { omega_1: 0.0, ..LambdaModel::default() };
    let grid = linspace(-0.02, 0.02, 21);
    let p: Vec<f64> = grid.iter().map(|&d| cpt_excited_population(&m, d).unwrap()).collect();
    for v in &p {
        assert!((v - p[0]).abs() < 1e-3 * p[0]);
    }
}

#[test]
fn paper_drives_give_narrow_high_contrast_peak() {
    let (_, fit) = cpt_spectrum_fitted(&LambdaModel::default(), 201).unwrap();
    assert!(fit.converged);
    assert!(fit.get("contrast") > 0.8);
    let fwhm_khz = fit.get("fwhm") * 1e3;
    assert!((2.0..=30.0).contains(&fwhm_khz), "{fwhm_khz}");
}

/// Λ system without ground relaxation but with the single-photon e–g
/// dephasing kept, symmetric branching and equal drives.
fn textbook(omega: f64) -> LambdaModel {
    LambdaModel {
        omega_a: omega,
        omega_1: omega,
        branching_g2: 0.5,
        e2g1_fraction: 0.0,
        g2g1_fraction: 0.0,
        dephasing_gg: 0.0,
        ..LambdaModel::default()
    }
}

#[test]
fn weak_drive_width_scales_with_drive_power() {
    // well below the e–g linewidth, so power broadening of the dark resonance is negligible
    let omegas = [0.04 * 0.0306, 0.06 * 0.0306, 0.085 * 0.0306];
    let widths: Vec<f64> = omegas.iter().map(|&w| cpt_spectrum_fitted(&textbook(w), 201).unwrap().1.get("fwhm")).collect();
    let slope = common::log_log_slope(&omegas, &widths);
    assert!((slope - 2.0).abs() < 0.1, "{slope}");
}

#[test]
fn contrast_is_complete_without_ground_relaxation() {
    for w in [0.0306, 0.003] {
        let (_, fit) = cpt_spectrum_fitted(&textbook(w), 201).unwrap();
        assert!(fit.converged);
        assert!(fit.get("contrast") > 0.99);
    }
}

#[test]
fn width_grows_with_laser_rate() {
    let g = linspace(0.005, 0.03, 6);
    let rows = cpt_scaling(&LambdaModel::default(), CptSweepVariable::GammaLas, &g, 201).unwrap();
    for w in rows.windows(2) {
        assert!(w[0].fit_ok && w[1].fit_ok);
        assert!(w[1].fwhm > w[0].fwhm, "{} -> {}", w[0].fwhm, w[1].fwhm);
    }
}

fn paper_sequence_model() -> LindbladModel {
    let rs = RateSet::set1();
    let k = k_las_for_repolarization_rate(&rs, 0.0225).unwrap();
    build_model(&NvParams::default(), &FieldConfig::from_degrees(82.71, 10.2).unwrap(), &rs.with_k_las(k)).unwrap()
}

fn pump(tags: &[&str], omega: f64) -> DriveTone {
    DriveTone::new(tags.iter().map(|t| t.parse::<FamilyTag>().unwrap()).collect(), omega)
}

#[test]
fn pumping_moves_population_as_observed() {
    let m = paper_sequence_model();
    let d = SequenceDurations::default();
    let base = polarization_sequence(&m, &pump(&["a-"], 0.0), &d).unwrap().nuclear_populations;
    // m_I order is +1, 0, −1
    for (tags, check) in [
        (&["a-"][..], Box::new(|p: [f64; 3]| p[0] < base[0]) as Box<dyn Fn([f64; 3]) -> bool>),
        (&["b-"][..], Box::new(|p: [f64; 3]| p[2] < base[2])),
        (&["c-", "d-"][..], Box::new(|p: [f64; 3]| p[1] > base[1] && p[1] > p[0] && p[1] > p[2])),
    ] {
        let r = polarization_sequence(&m, &pump(tags, 0.017), &d).unwrap();
        let p = r.nuclear_populations;
        assert!(check(p), "{tags:?}: {p:?} vs {base:?}");
        assert!(p.iter().copied().fold(0.0, f64::max) > 0.5, "{tags:?}: {p:?}");
        assert!(r.max_trace_error < 1e-8);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn unpumped_sequence_matches_laser_only_evolution() {
    let m = paper_sequence_model();
    let d = SequenceDurations::default();
    let r = polarization_sequence(&m, &pump(&["b-"], 0.0), &d).unwrap();
    // with no tone the three stages are one continuous laser exposure
    let mut p0 = vec![0.0; 21];
    p0[..9].fill(1.0 / 9.0);
    let rho = m
        .system
        .propagate(&nvsim::lindblad::DensityMatrix::from_populations(&p0), d.polarize + d.pump + d.repolarize)
        .unwrap();
    let ground = m.ground_eigensystem().unwrap();
    let w = &ground.vectors;
    let g = w.adjoint() * rho.matrix.view((0, 0), (9, 9)) * w;
    let mut pops = [0.0; 3];
    for i in 0..9 {
        pops[nvsim::spin::index_of_m(ground.label(i).unwrap().mi.unwrap())] += g[(i, i)].re;
    }
    let total: f64 = pops.iter().sum();
    for (a, b) in r.nuclear_populations.iter().zip(pops) {
        assert!((a - b / total).abs() < 1e-8, "{a} vs {}", b / total);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dark_state_exists_for_any_drive_ratio(wa in 0.001..0.3f64, w1 in 0.001..0.3f64, g in 0.001..0.1f64) {
        let m = LambdaModel::ideal(wa, w1, g);
        prop_assert!(cpt_excited_population(&m, 0.0).unwrap() < 1e-10);
        prop_assert!(dark_state_fidelity(&m).unwrap() > 1.0 - 1e-8);
    }

    #[test]
    fn rabi_population_is_bounded(w in 0.01..1.0f64, d in -2.0..2.0f64, g in 0.0..1.0f64, t in 0.0..50.0f64) {
        let v = rabi_trace(w, d, g, &[t]).unwrap().values[0];
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }
}
