//! Independent reference implementations used as oracles by the
//! integration tests. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type Cm = DMatrix<Complex64>;

pub fn z(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Spin-1 matrices in the (+1, 0, −1) ordering, written out by hand.
pub fn spin1() -> (Cm, Cm, Cm) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sx = DMatrix::from_row_slice(3, 3, &[0.0, s, 0.0, s, 0.0, s, 0.0, s, 0.0]).map(z);
    let i = Complex64::new(0.0, s);
    let o = z(0.0);
    let sy = DMatrix::from_row_slice(3, 3, &[o, -i, o, i, o, -i, o, i, o]);
    let sz = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).map(z);
    (sx, sy, sz)
}

pub fn kron(a: &Cm, b: &Cm) -> Cm {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// NV electron-nuclear Hamiltonian assembled term by term.
#[allow(clippy::too_many_arguments)]
pub fn nv_hamiltonian(d: f64, q: f64, ge: f64, gn: f64, azz: f64, aperp: f64, b: f64, theta: f64) -> Cm {
    let (sx, sy, sz) = spin1();
    let id = Cm::identity(3, 3);
    let (bx, bz) = (b * theta.sin(), b * theta.cos());
    let e = |m: &Cm| kron(m, &id);
    let n = |m: &Cm| kron(&id, m);
    e(&(&sz * &sz)) * z(d) + (e(&sx) * z(bx) + e(&sz) * z(bz)) * z(ge) + n(&(&sz * &sz)) * z(q)
        - (n(&sx) * z(bx) + n(&sz) * z(bz)) * z(gn)
        + kron(&sz, &sz) * z(azz)
        + (kron(&sx, &sx) + kron(&sy, &sy)) * z(aperp)
}

/// θ = 0 diagonal energy of |m_S, m_I⟩.
pub fn axial_energy(d: f64, q: f64, ge: f64, gn: f64, azz: f64, b: f64, ms: f64, mi: f64) -> f64 {
    d * ms * ms + ge * b * ms + q * mi * mi - gn * b * mi + azz * ms * mi
}

/// Cyclic Jacobi eigenvalues of a real symmetric matrix, ascending.
pub fn jacobi_symmetric(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Eigenvalues of a Hermitian matrix via its real 2n×2n embedding, where
/// every eigenvalue appears twice.
pub fn hermitian_eigenvalues(h: &Cm) -> Vec<f64> {
    let n = h.nrows();
    let m = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (a, b) = (h[(i % n, j % n)].re, h[(i % n, j % n)].im);
        match (i < n, j < n) {
            (true, true) | (false, false) => a,
            (true, false) => -b,
            (false, true) => b,
        }
    });
    jacobi_symmetric(m).into_iter().step_by(2).collect()
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm_taylor(m: &Cm) -> Cm {
    let norm: f64 = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let a = m / z(2f64.powi(s));
    let n = m.nrows();
    let mut term = Cm::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &a / z(k as f64);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Column-stacking Liouvillian built from Kronecker products:
/// vec(AXB) = (Bᵀ ⊗ A) vec(X).
pub fn liouvillian(h: &Cm, jumps: &[Cm]) -> Cm {
    let n = h.nrows();
    let id = Cm::identity(n, n);
    let mi2pi = Complex64::new(0.0, -2.0 * std::f64::consts::PI);
    let mut l = (kron(&id, h) - kron(&h.transpose(), &id)) * mi2pi;
    for j in jumps {
        let jd = j.adjoint();
        let jdj = &jd * j;
        l += kron(&j.conjugate(), j) - kron(&id, &jdj) * z(0.5) - kron(&jdj.transpose(), &id) * z(0.5);
    }
    l
}

/// Fixed-step RK4 for dp/dt = G p.
pub fn rk4(g: &DMatrix<f64>, p0: &DVector<f64>, t: f64, steps: usize) -> DVector<f64> {
    let h = t / steps as f64;
    let mut p = p0.clone();
    for _ in 0..steps {
        let k1 = g * &p;
        let k2 = g * (&p + &k1 * (h / 2.0));
        let k3 = g * (&p + &k2 * (h / 2.0));
        let k4 = g * (&p + &k3 * h);
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    p
}

/// Ordinary least-squares slope of ln y against ln x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
