//! Dimensionless decoherence kernels shared by every dynamical module.
//!
//! With lengths in units of the kernel length d (R₀ or r_c) and rates in
//! units of the total collapse rate Λ, both models reduce to a single
//! correlation function c(x) ∈ [0, 1]:
//!
//!   DP:  c(x) = √π·erf(x/2)/x      (Newtonian noise, Gaussian-smeared)
//!   CSL: c(x) = exp(−x²/4)
//!
//! and the decoherence function is d(x) = 1 − c(x), so that the coherence
//! between points separated by Δ decays at rate Λ·d(Δ/d).

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Kernel shape in scaled units (length unit = kernel length, rate unit = Λ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaledKernel {
    Dp,
    Csl,
}

impl ScaledKernel {
    /// Noise correlation c(x); c(0) = 1, c(∞) = 0.
    pub fn correlation(self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match self {
            // erf(x/2)/x is 0/0 at the origin; the series keeps both branches
            // in agreement to 1e-12 at the switch.
            ScaledKernel::Dp => {
                if x < 2e-4 {
                    let x2 = x * x;
                    1.0 - x2 / 12.0 + x2 * x2 / 160.0 - x2 * x2 * x2 / 2688.0
                        + x2 * x2 * x2 * x2 / 55296.0
                } else {
                    SQRT_PI * erf(x / 2.0) / x
                }
            }
            ScaledKernel::Csl => (-x * x / 4.0).exp(),
        }
    }

    /// Decoherence function d(x) = 1 − c(x); d(0) = 0, d(∞) = 1, monotone.
    pub fn decoherence(self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match self {
            // 1 − c(x) cancels catastrophically for small x; switch to the
            // series well before precision is lost.
            ScaledKernel::Dp => {
                if x < 0.05 {
                    let x2 = x * x;
                    x2 / 12.0 - x2 * x2 / 160.0 + x2 * x2 * x2 / 2688.0
                        - x2 * x2 * x2 * x2 / 55296.0
                } else {
                    1.0 - SQRT_PI * erf(x / 2.0) / x
                }
            }
            ScaledKernel::Csl => -(-x * x / 4.0).exp_m1(),
        }
    }
}
