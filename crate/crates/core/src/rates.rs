//! Closed-form rates, kernels, heating and dissipation coefficients for the
//! gravity-related (DP) and CSL collapse models.
//!
//! Conventions, all in SI:
//!
//! - one-particle momentum-space rate densities
//!   `Γ_DP(Q) = Gm²/(2π²ħ²Q²)·exp(−Q²R₀²/ħ²)` and
//!   `Γ_CSL(Q) = γ m²/(m₀²(2πħ)³)·exp(−Q²r_c²/ħ²)`,
//! - total rates `Λ_DP = Gm²/(√π ħ R₀)` and
//!   `Λ_CSL = (m/m₀)²·γ/(4π r_c²)^{3/2}`,
//! - Newtonian self-energy `U(Δ) = −Gm²·erf(Δ/2R₀)/Δ`, whose offset from
//!   `U(0)` divided by ħ is the DP decoherence function,
//! - center-of-mass amplification through the squared form factor of a
//!   homogeneous rigid body.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{CoreError, Result};
use crate::kernels::ScaledKernel;
use crate::units::{
    CollapseModel, CslParams, DpParams, FormFactorShape, ModelParams, RigidBodySpec,
};

const PI: f64 = std::f64::consts::PI;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Total collapse rate Λ of the active model for a point particle of mass `m`.
pub fn collapse_rate_point(model: CollapseModel, m: f64, params: &ModelParams) -> f64 {
    let c = &params.constants;
    match model {
        CollapseModel::Dp => c.g * m * m / (SQRT_PI * c.hbar * params.dp.r0),
        CollapseModel::Csl => {
            let csl = &params.csl;
            (m / csl.m0).powi(2) * csl.gamma / (4.0 * PI * csl.r_c * csl.r_c).powf(1.5)
        }
    }
}

/// Newtonian self-energy of the Gaussian-smeared mass density,
/// `U(Δ) = −Gm²·erf(Δ/2R₀)/Δ`, with the analytic limit `−Gm²/(√π R₀)` at
/// Δ = 0 (evaluated by series below the branch switch).
pub fn self_energy_u(delta: f64, m: f64, r0: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(CoreError::Param {
            name: "R0",
            reason: format!("must be > 0, got {r0:e}"),
        });
    }
    if !(delta >= 0.0) || !(m >= 0.0) {
        return Err(CoreError::Param {
            name: "delta/m",
            reason: "delta and m must be nonnegative".into(),
        });
    }
    let c = PhysicalConstants::codata();
    // erf(Δ/2R₀)/Δ = c(Δ/R₀)/(√π R₀) with the scaled correlation c.
    Ok(-c.g * m * m / (SQRT_PI * r0) * ScaledKernel::Dp.correlation(delta / r0))
}

/// CSL spatial decoherence kernel `Φ(Δ) = Λ_CSL · exp(−Δ²/4r_c²)` (s⁻¹),
/// the Fourier transform of `Γ_CSL`. `Φ(0)` is the CSL collapse rate.
pub fn csl_phi(delta: f64, m: f64, csl: &CslParams) -> f64 {
    assert!(delta >= 0.0, "separation must be nonnegative");
    let lambda = (m / csl.m0).powi(2) * csl.gamma / (4.0 * PI * csl.r_c * csl.r_c).powf(1.5);
    lambda * ScaledKernel::Csl.correlation(delta / csl.r_c)
}

/// Lifetime of a spatial superposition, τ(Δ) = 1/D(Δ).
///
/// Diagonal elements never decay (D(0) = 0); that case is reported as the
/// distinguished [`DampingTime::NoDecay`], not a numeric infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DampingTime {
    NoDecay,
    Seconds(f64),
}

impl DampingTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            DampingTime::NoDecay => None,
            DampingTime::Seconds(t) => Some(t),
        }
    }
}

/// Position-space decoherence function D(Δ) of one model for one particle:
/// `D(Δ) = (U(Δ) − U(0))/ħ` for DP, `Φ(0) − Φ(Δ)` for CSL.
///
/// D(0) = 0, D is monotone nondecreasing, and D(∞) = Λ. This is the object
/// whose inverse is plotted as the damping-time curve.
#[derive(Debug, Clone, Copy)]
pub struct DecoherenceKernel {
    pub model: CollapseModel,
    pub mass: f64,
    params: ModelParams,
    lambda: f64,
}

impl DecoherenceKernel {
    pub fn new(model: CollapseModel, mass: f64, params: &ModelParams) -> Result<Self> {
        if !(mass >= 0.0) {
            return Err(CoreError::Param {
                name: "mass",
                reason: format!("must be >= 0, got {mass:e}"),
            });
        }
        Ok(Self {
            model,
            mass,
            params: *params,
            lambda: collapse_rate_point(model, mass, params),
        })
    }

    /// Total rate Λ, the large-separation limit of D.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Kernel length d: R₀ for DP, r_c for CSL.
    pub fn kernel_length(&self) -> f64 {
        match self.model {
            CollapseModel::Dp => self.params.dp.r0,
            CollapseModel::Csl => self.params.csl.r_c,
        }
    }

    pub fn scaled(&self) -> ScaledKernel {
        match self.model {
            CollapseModel::Dp => ScaledKernel::Dp,
            CollapseModel::Csl => ScaledKernel::Csl,
        }
    }

    /// D(Δ) in s⁻¹ for a separation Δ in meters.
    pub fn evaluate(&self, delta: f64) -> f64 {
        assert!(delta >= 0.0, "separation must be nonnegative");
        self.lambda * self.scaled().decoherence(delta / self.kernel_length())
    }

    /// Noise correlation C(Δ) = Λ − D(Δ) in s⁻¹.
    pub fn correlation(&self, delta: f64) -> f64 {
        assert!(delta >= 0.0, "separation must be nonnegative");
        self.lambda * self.scaled().correlation(delta / self.kernel_length())
    }

    /// τ(Δ) = 1/D(Δ); for Δ ≫ d this approaches 1/Λ.
    pub fn damping_time(&self, delta: f64) -> DampingTime {
        let d = self.evaluate(delta);
        if d == 0.0 {
            DampingTime::NoDecay
        } else {
            DampingTime::Seconds(1.0 / d)
        }
    }
}

/// Fourier transform of a rigid body's internal mass density (kg).
///
/// `sphere_exact` is `M·3(sin x − x cos x)/x³` with `x = QR/ħ`;
/// `gaussian_approx` is `M·exp(−x²/2)`. Both tend to M as Q → 0.
pub fn form_factor(body: &RigidBodySpec, q: f64) -> f64 {
    assert!(q >= 0.0, "momentum must be nonnegative");
    let c = PhysicalConstants::codata();
    let x = q * body.radius / c.hbar;
    match body.form_factor {
        FormFactorShape::GaussianApprox => body.mass * (-x * x / 2.0).exp(),
        FormFactorShape::SphereExact => {
            if x < 1e-2 {
                let x2 = x * x;
                body.mass * (1.0 - x2 / 10.0 + x2 * x2 / 280.0 - x2 * x2 * x2 / 15120.0)
            } else {
                body.mass * 3.0 * (x.sin() - x * x.cos()) / (x * x * x)
            }
        }
    }
}

/// Center-of-mass collapse rate of a rigid body in the Gaussian form-factor
/// approximation:
///
///   Λ^M_DP  = GM²/(ħ √(π(R²+R₀²)))
///   Λ^M_CSL = γM²/(8π^{3/2} m₀² (R²+r_c²)^{3/2})
///
/// At R = 0 both reduce to the point-particle rate with mass M.
pub fn collapse_rate_cm(model: CollapseModel, body: &RigidBodySpec, params: &ModelParams) -> f64 {
    let c = &params.constants;
    let m = body.mass;
    let r2 = body.radius * body.radius;
    match model {
        CollapseModel::Dp => {
            let eff = r2 + params.dp.r0 * params.dp.r0;
            c.g * m * m / (c.hbar * (PI * eff).sqrt())
        }
        CollapseModel::Csl => {
            let csl = &params.csl;
            let eff = r2 + csl.r_c * csl.r_c;
            csl.gamma * m * m / (8.0 * PI.powf(1.5) * csl.m0 * csl.m0 * eff.powf(1.5))
        }
    }
}

/// Energy production of the non-dissipative DP dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingRate {
    /// dE/dt (J·s⁻¹): `m G ħ / (4√π R₀³)`.
    pub power: f64,
    /// dT/dt (K·s⁻¹) under the kinetic convention E = (3/2)·k_B·T.
    pub temperature_rate: f64,
}

/// `dE/dt = (2π/m)∫₀^∞ Γ_DP(Q) Q⁴ dQ = mGħ/(4√π R₀³)`, quoted both as power
/// and as a temperature rate via equipartition.
pub fn heating_rate(m: f64, r0: f64) -> Result<HeatingRate> {
    if !(r0 > 0.0) {
        return Err(CoreError::Param {
            name: "R0",
            reason: format!("must be > 0, got {r0:e}"),
        });
    }
    if !(m >= 0.0) {
        return Err(CoreError::Param {
            name: "m",
            reason: format!("must be >= 0, got {m:e}"),
        });
    }
    let c = PhysicalConstants::codata();
    let power = m * c.g * c.hbar / (4.0 * SQRT_PI * r0 * r0 * r0);
    Ok(HeatingRate {
        power,
        temperature_rate: power / (1.5 * c.k_b),
    })
}

/// Asymptotic temperature of the dissipative model. `m_r = 0` recovers the
/// non-dissipative dynamics, whose bath is effectively at infinite
/// temperature; that case is a distinguished sentinel, not an f64 infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Kelvin(f64),
    Infinite,
}

impl Temperature {
    pub fn kelvin(self) -> Option<f64> {
        match self {
            Temperature::Kelvin(t) => Some(t),
            Temperature::Infinite => None,
        }
    }
}

/// Coefficients of the dissipative energy flow dE/dt = γ − ξ·E.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipativeCoeffs {
    /// γ = mGħ/(4√π(1+k)³R₀³) (J·s⁻¹).
    pub gamma: f64,
    /// ξ = 4m²Gk/(3√π(1+k)³ħR₀) (s⁻¹).
    pub xi: f64,
    /// T = 2γ/(3k_B ξ) = ħ²/(8 k_B m_r R₀²).
    pub temperature: Temperature,
    /// k = m_r/m.
    pub k: f64,
}

pub fn dissipative_coeffs(m: f64, dp: &DpParams) -> Result<DissipativeCoeffs> {
    if !(m > 0.0) {
        return Err(CoreError::Param {
            name: "m",
            reason: format!("must be > 0, got {m:e}"),
        });
    }
    let c = PhysicalConstants::codata();
    let k = dp.m_r / m;
    let one_k3 = (1.0 + k).powi(3);
    let gamma = m * c.g * c.hbar / (4.0 * SQRT_PI * one_k3 * dp.r0.powi(3));
    let xi = 4.0 * m * m * c.g * k / (3.0 * SQRT_PI * one_k3 * c.hbar * dp.r0);
    let temperature = if dp.m_r == 0.0 {
        Temperature::Infinite
    } else {
        Temperature::Kelvin(c.hbar * c.hbar / (8.0 * c.k_b * dp.m_r * dp.r0 * dp.r0))
    };
    Ok(DissipativeCoeffs {
        gamma,
        xi,
        temperature,
        k,
    })
}

/// Closed-form mean energy `E(t) = E(0)e^{−ξt} + (γ/ξ)(1 − e^{−ξt})`,
/// degrading gracefully to the non-dissipative linear growth `E(0) + γt`
/// when ξ·t is below cancellation range.
pub fn energy_trajectory(e0: f64, t: f64, coeffs: &DissipativeCoeffs) -> f64 {
    energy_relaxation(e0, t, coeffs.gamma, coeffs.xi)
}

/// The relaxation formula shared by the SI and scaled-unit coefficient sets.
pub fn energy_relaxation(e0: f64, t: f64, gamma: f64, xi: f64) -> f64 {
    assert!(t >= 0.0, "time must be nonnegative");
    let xt = xi * t;
    if xt < 1e-12 {
        e0 + gamma * t
    } else {
        let decay = (-xt).exp();
        e0 * decay + gamma / xi * (-(-xt).exp_m1())
    }
}

/// One row of the damping-time comparison: separation in units of the
/// respective kernel length, τ·Λ for both models, and the SI damping times
/// for the given particle mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub separation_over_d: f64,
    pub dp_tau_lambda: f64,
    pub csl_tau_lambda: f64,
    pub dp_tau_seconds: f64,
    pub csl_tau_seconds: f64,
}

/// Damping-time curves τ(Δ)·Λ for both models on a logarithmic abscissa
/// Δ/d ∈ [range.0, range.1]:
///
///   DP:  τΛ = 1/(1 − √π·erf(x/2)/x)
///   CSL: τΛ = 1/(1 − exp(−x²/4))
pub fn figure1_dataset(
    dp: &DpParams,
    csl: &CslParams,
    m: f64,
    points: usize,
    range: (f64, f64),
) -> Result<Vec<Fig1Row>> {
    if points < 2 {
        return Err(CoreError::Param {
            name: "points",
            reason: format!("need at least 2, got {points}"),
        });
    }
    if !(range.0 > 0.0 && range.1 > range.0) {
        return Err(CoreError::Param {
            name: "range",
            reason: format!("need 0 < min < max, got [{:e}, {:e}]", range.0, range.1),
        });
    }
    let c = PhysicalConstants::codata();
    let lambda_dp = c.g * m * m / (SQRT_PI * c.hbar * dp.r0);
    let lambda_csl = (m / csl.m0).powi(2) * csl.gamma / (4.0 * PI * csl.r_c * csl.r_c).powf(1.5);
    let log_min = range.0.ln();
    let log_max = range.1.ln();
    let rows = (0..points)
        .map(|i| {
            let x = (log_min + (log_max - log_min) * i as f64 / (points - 1) as f64).exp();
            let dp_tau_lambda = 1.0 / ScaledKernel::Dp.decoherence(x);
            let csl_tau_lambda = 1.0 / ScaledKernel::Csl.decoherence(x);
            Fig1Row {
                separation_over_d: x,
                dp_tau_lambda,
                csl_tau_lambda,
                dp_tau_seconds: dp_tau_lambda / lambda_dp,
                csl_tau_seconds: csl_tau_lambda / lambda_csl,
            }
        })
        .collect();
    Ok(rows)
}

/// Isotropic momentum-space rate density Γ(Q) of one model, point particle or
/// rigid-body center of mass (Gaussian form factor, as in the closed-form
/// amplified rates). Integrating over d³Q gives the model's Λ.
#[derive(Debug, Clone, Copy)]
pub struct RateFunction {
    model: CollapseModel,
    /// Point mass or total body mass (kg).
    mass: f64,
    /// Squared length in the Gaussian damping: R₀²(+R²) or r_c²(+R²).
    length_sq: f64,
    params: ModelParams,
}

impl RateFunction {
    pub fn point(model: CollapseModel, mass: f64, params: &ModelParams) -> Self {
        let d = params.kernel_length_for(model);
        Self {
            model,
            mass,
            length_sq: d * d,
            params: *params,
        }
    }

    /// Center-of-mass density with the Gaussian form-factor approximation:
    /// the damping length becomes √(R² + d²).
    pub fn center_of_mass(model: CollapseModel, body: &RigidBodySpec, params: &ModelParams) -> Self {
        let d = params.kernel_length_for(model);
        Self {
            model,
            mass: body.mass,
            length_sq: body.radius * body.radius + d * d,
            params: *params,
        }
    }

    /// Γ(Q) in s⁻¹·(kg·m/s)⁻³.
    pub fn evaluate(&self, q: f64) -> f64 {
        let c = &self.params.constants;
        let damping = (-q * q * self.length_sq / (c.hbar * c.hbar)).exp();
        match self.model {
            CollapseModel::Dp => {
                c.g * self.mass * self.mass / (2.0 * PI * PI * c.hbar * c.hbar * q * q) * damping
            }
            CollapseModel::Csl => {
                let csl = &self.params.csl;
                csl.gamma / (2.0 * PI * c.hbar).powi(3) * (self.mass / csl.m0).powi(2) * damping
            }
        }
    }

    /// Closed-form value of ∫Γ(Q)d³Q.
    pub fn lambda_closed_form(&self) -> f64 {
        let c = &self.params.constants;
        match self.model {
            CollapseModel::Dp => {
                c.g * self.mass * self.mass / (SQRT_PI * c.hbar * self.length_sq.sqrt())
            }
            CollapseModel::Csl => {
                let csl = &self.params.csl;
                csl.gamma * self.mass * self.mass
                    / (8.0 * PI.powf(1.5) * csl.m0 * csl.m0 * self.length_sq.powf(1.5))
            }
        }
    }

    pub fn hbar(&self) -> f64 {
        self.params.constants.hbar
    }

    /// Decay scale of Γ in momentum: ħ divided by the Gaussian length.
    /// Semi-infinite integrals over Γ truncate at ten times this.
    pub fn momentum_decay_scale(&self) -> f64 {
        self.params.constants.hbar / self.length_sq.sqrt()
    }
}

impl ModelParams {
    /// Kernel length of an arbitrary (not necessarily active) model.
    pub fn kernel_length_for(&self, model: CollapseModel) -> f64 {
        match model {
            CollapseModel::Dp => self.dp.r0,
            CollapseModel::Csl => self.csl.r_c,
        }
    }
}
