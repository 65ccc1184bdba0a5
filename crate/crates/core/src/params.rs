//! Physical constants and field configuration.

use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};

/// Spin Hamiltonian constants, in MHz (splittings, couplings) and MHz/G
/// (gyromagnetic ratios).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvParams {
    /// Ground-state electron zero-field splitting.
    pub d: f64,
    /// Excited-state electron zero-field splitting.
    pub d_es: f64,
    /// Nuclear quadrupole splitting.
    pub q: f64,
    pub gamma_e: f64,
    pub gamma_n: f64,
    /// Ground-state hyperfine tensor, axial component.
    pub a_zz: f64,
    /// Ground-state hyperfine tensor, transverse component (A_xx = A_yy).
    pub a_perp: f64,
    pub a_zz_es: f64,
    pub a_perp_es: f64,
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            d: 2870.0,
            d_es: 1430.0,
            q: -4.945,
            gamma_e: 2.802,
            gamma_n: 0.308e-3,
            a_zz: -2.162,
            a_perp: -2.62,
            a_zz_es: 40.0,
            a_perp_es: 23.0,
        }
    }
}

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        let values = [
            ("d", self.d),
            ("d_es", self.d_es),
            ("q", self.q),
            ("gamma_e", self.gamma_e),
            ("gamma_n", self.gamma_n),
            ("a_zz", self.a_zz),
            ("a_perp", self.a_perp),
            ("a_zz_es", self.a_zz_es),
            ("a_perp_es", self.a_perp_es),
        ];
        for (name, v) in values {
            if !v.is_finite() {
                return Err(NvError::invalid(format!("{name} is not finite")));
            }
        }
        if self.gamma_e <= 0.0 {
            return Err(NvError::invalid("gamma_e must be positive"));
        }
        Ok(())
    }
}

/// Static magnetic field: magnitude `b` (G), polar angle `theta` to the NV
/// axis and azimuth `phi` (both radians). The default azimuth places the field
/// in the z–x plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub b: f64,
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
}

impl FieldConfig {
    pub fn new(b: f64, theta: f64) -> Result<Self> {
        Self::with_phi(b, theta, 0.0)
    }

    pub fn with_phi(b: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(NvError::invalid(format!("field magnitude {b} must be >= 0")));
        }
        let tol = 1e-12;
        if !(theta.is_finite() && theta >= -tol && theta <= std::f64::consts::FRAC_PI_2 + tol) {
            return Err(NvError::invalid(format!("theta {theta} outside [0, pi/2]")));
        }
        if !phi.is_finite() {
            return Err(NvError::invalid("phi is not finite"));
        }
        Ok(Self {
            b,
            theta: theta.clamp(0.0, std::f64::consts::FRAC_PI_2),
            phi,
        })
    }

    pub fn from_degrees(b: f64, theta_deg: f64) -> Result<Self> {
        Self::new(b, theta_deg.to_radians())
    }

    pub fn b_parallel(&self) -> f64 {
        self.b * self.theta.cos()
    }

    pub fn b_perp(&self) -> f64 {
        self.b * self.theta.sin()
    }

    /// Cartesian components (Bx, By, Bz) in the NV frame.
    pub fn components(&self) -> [f64; 3] {
        let perp = self.b_perp();
        [perp * self.phi.cos(), perp * self.phi.sin(), self.b_parallel()]
    }

    pub(crate) fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..*self }
    }
}
