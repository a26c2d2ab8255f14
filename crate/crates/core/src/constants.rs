//! Physical constants in SI units (CODATA 2018 recommended values).

use serde::{Deserialize, Serialize};

/// Gravitational constant (m³·kg⁻¹·s⁻²).
pub const G: f64 = 6.674_30e-11;

/// Reduced Planck constant ħ (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant (J·K⁻¹). Exact since the 2019 SI redefinition.
pub const K_B: f64 = 1.380_649e-23;

/// Atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;

/// Proton mass (kg).
pub const PROTON_MASS: f64 = 1.672_621_923_69e-27;

/// The fundamental constants every rate formula in the crate depends on.
///
/// Values are fixed at construction and never mutated, so a `PhysicalConstants`
/// can be shared freely across threads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Gravitational constant (m³·kg⁻¹·s⁻²).
    pub g: f64,
    /// Reduced Planck constant (J·s).
    pub hbar: f64,
    /// Boltzmann constant (J·K⁻¹).
    pub k_b: f64,
    /// Atomic mass unit (kg).
    pub amu: f64,
}

impl PhysicalConstants {
    pub const fn codata() -> Self {
        Self {
            g: G,
            hbar: HBAR,
            k_b: K_B,
            amu: AMU,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_strictly_positive() {
        let c = PhysicalConstants::codata();
        assert!(c.g > 0.0 && c.hbar > 0.0 && c.k_b > 0.0 && c.amu > 0.0);
    }

    #[test]
    fn hbar_consistent_with_planck() {
        // h = 6.62607015e-34 exactly; hbar = h / 2pi.
        let h = 6.626_070_15e-34;
        let derived = h / std::f64::consts::TAU;
        assert!((derived - HBAR).abs() / HBAR < 1e-9);
    }
}
