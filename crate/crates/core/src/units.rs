//! Model parameter sets, presets, unit conversion, and the dimensionless
//! scaling used by the dynamical modules.
//!
//! Everything analytic runs in SI. Dynamical simulations (grid propagation,
//! trajectory unraveling, the momentum jump process) run in scaled units where
//! the kernel length is 1, the total collapse rate Λ is 1, and ħ = 1; physical
//! collapse rates are ~10⁻¹⁵ s⁻¹, so SI-time simulation would be meaningless.
//! [`ScaleSet`] carries the exact SI ↔ scaled mapping.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{CoreError, Result};

/// Which spatial coarse-graining regularizes the mass density.
///
/// The sharp sphere and the Gaussian produce practically identical damping
/// (`e^{-x²/2} ≈ 3(sin x − x cos x)/x³`); the Gaussian is the default
/// everywhere and the sphere is kept for form-factor comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseGraining {
    Gaussian,
    Sphere,
}

/// Parameters of the gravity-related (Diósi-Penrose) collapse model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    /// Coarse-graining cut-off length R₀ (m).
    pub r0: f64,
    /// Reference mass m_r (kg) controlling dissipation; 0 disables it.
    pub m_r: f64,
    pub coarse_graining: CoarseGraining,
}

impl DpParams {
    pub fn new(r0: f64, m_r: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(CoreError::Param {
                name: "R0",
                reason: format!("must be > 0, got {r0:e}"),
            });
        }
        if !(m_r >= 0.0) {
            return Err(CoreError::Param {
                name: "m_r",
                reason: format!("must be >= 0, got {m_r:e}"),
            });
        }
        Ok(Self {
            r0,
            m_r,
            coarse_graining: CoarseGraining::Gaussian,
        })
    }
}

/// Parameters of the mass-proportional CSL model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CslParams {
    /// Collapse strength γ (m³·s⁻¹).
    pub gamma: f64,
    /// Noise correlation length r_c (m).
    pub r_c: f64,
    /// Reference mass m₀ (kg).
    pub m0: f64,
}

impl CslParams {
    pub fn new(gamma: f64, r_c: f64, m0: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("r_c", r_c), ("m0", m0)] {
            if !(v > 0.0) {
                return Err(CoreError::Param {
                    name: match name {
                        "gamma" => "gamma",
                        "r_c" => "r_c",
                        _ => "m0",
                    },
                    reason: format!("must be > 0, got {v:e}"),
                });
            }
        }
        Ok(Self { gamma, r_c, m0 })
    }
}

/// A point particle, identified by its mass (kg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    pub mass: f64,
}

impl ParticleSpec {
    pub fn new(mass: f64) -> Result<Self> {
        if !(mass >= 0.0) {
            return Err(CoreError::Param {
                name: "mass",
                reason: format!("must be >= 0, got {mass:e}"),
            });
        }
        Ok(Self { mass })
    }

    /// One atomic mass unit, the reference "nucleon" of the rate estimates.
    pub fn nucleon() -> Self {
        Self {
            mass: crate::constants::AMU,
        }
    }

    pub fn proton() -> Self {
        Self {
            mass: crate::constants::PROTON_MASS,
        }
    }
}

/// Internal mass-density shape used for the center-of-mass form factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormFactorShape {
    SphereExact,
    GaussianApprox,
}

/// A homogeneous rigid body whose center of mass undergoes collapse dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodySpec {
    /// Total mass M (kg).
    pub mass: f64,
    /// Radius R (m).
    pub radius: f64,
    pub form_factor: FormFactorShape,
}

impl RigidBodySpec {
    pub fn new(mass: f64, radius: f64, form_factor: FormFactorShape) -> Result<Self> {
        if !(mass >= 0.0) {
            return Err(CoreError::Param {
                name: "M",
                reason: format!("must be >= 0, got {mass:e}"),
            });
        }
        if !(radius >= 0.0) {
            return Err(CoreError::Param {
                name: "R",
                reason: format!("must be >= 0, got {radius:e}"),
            });
        }
        Ok(Self {
            mass,
            radius,
            form_factor,
        })
    }
}

/// Which collapse model drives a given run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseModel {
    Dp,
    Csl,
}

/// Named parameter presets from the collapse-model literature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Diósi's original cut-off, the nucleon Compton wavelength.
    Diosi,
    /// The much larger cut-off proposed by Ghirardi et al. to tame heating.
    Ghirardi,
    /// Canonical GRW/CSL collapse strength.
    CslGrw,
    /// Adler's enhanced collapse strength.
    CslAdler,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "diosi" => Ok(Self::Diosi),
            "ghirardi" => Ok(Self::Ghirardi),
            "csl_grw" | "csl-grw" => Ok(Self::CslGrw),
            "csl_adler" | "csl-adler" => Ok(Self::CslAdler),
            other => Err(CoreError::Config(format!(
                "unknown preset '{other}' (expected diosi | ghirardi | csl_grw | csl_adler)"
            ))),
        }
    }
}

/// Full parameter set: constants plus both models, with one model active.
///
/// Presets fill the active model from literature values and leave the other
/// model at its canonical defaults so cross-model comparisons always have
/// something sensible to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub constants: PhysicalConstants,
    pub model: CollapseModel,
    pub dp: DpParams,
    pub csl: CslParams,
    /// Where the active parameter values come from.
    pub provenance: &'static str,
}

/// Diósi's original cut-off: the nucleon Compton wavelength.
pub const R0_DIOSI: f64 = 1e-15;
/// Cut-off of Ghirardi et al., matching the CSL correlation length.
pub const R0_GHIRARDI: f64 = 1e-7;
/// Canonical GRW/CSL collapse strength (m³·s⁻¹).
pub const GAMMA_GRW: f64 = 1e-36;
/// Adler's enhanced collapse strength (m³·s⁻¹).
pub const GAMMA_ADLER: f64 = 1e-28;
/// CSL noise correlation length (m).
pub const R_C_CSL: f64 = 1e-7;

impl ModelParams {
    /// Build a parameter set from a named preset.
    pub fn preset(preset: Preset) -> Self {
        let constants = PhysicalConstants::codata();
        let csl_default = CslParams {
            gamma: GAMMA_GRW,
            r_c: R_C_CSL,
            m0: constants.amu,
        };
        let dp_default = DpParams {
            r0: R0_DIOSI,
            m_r: 0.0,
            coarse_graining: CoarseGraining::Gaussian,
        };
        match preset {
            Preset::Diosi => Self {
                constants,
                model: CollapseModel::Dp,
                dp: dp_default,
                csl: csl_default,
                provenance: "Diosi's original cut-off R0 = 1e-15 m (nucleon Compton wavelength)",
            },
            Preset::Ghirardi => Self {
                constants,
                model: CollapseModel::Dp,
                dp: DpParams {
                    r0: R0_GHIRARDI,
                    ..dp_default
                },
                csl: csl_default,
                provenance: "Ghirardi et al. regularization R0 = 1e-7 m",
            },
            Preset::CslGrw => Self {
                constants,
                model: CollapseModel::Csl,
                dp: dp_default,
                csl: csl_default,
                provenance: "canonical GRW/CSL parameters gamma = 1e-36 m^3/s, r_c = 1e-7 m",
            },
            Preset::CslAdler => Self {
                constants,
                model: CollapseModel::Csl,
                dp: dp_default,
                csl: CslParams {
                    gamma: GAMMA_ADLER,
                    ..csl_default
                },
                provenance: "Adler's enhanced collapse strength gamma = 1e-28 m^3/s",
            },
        }
    }

    /// The kernel length of the active model: R₀ for DP, r_c for CSL.
    pub fn kernel_length(&self) -> f64 {
        match self.model {
            CollapseModel::Dp => self.dp.r0,
            CollapseModel::Csl => self.csl.r_c,
        }
    }
}

/// Units understood by [`convert`]. Kelvin is the *kinetic* convention:
/// an energy E maps to the temperature with E = (3/2)·k_B·T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Amu,
    Kg,
    Joule,
    KelvinKinetic,
    Meter,
    Nanometer,
}

impl Unit {
    fn dimension(self) -> &'static str {
        match self {
            Unit::Amu | Unit::Kg => "mass",
            Unit::Joule | Unit::KelvinKinetic => "energy",
            Unit::Meter | Unit::Nanometer => "length",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unit::Amu => "amu",
            Unit::Kg => "kg",
            Unit::Joule => "J",
            Unit::KelvinKinetic => "K (kinetic)",
            Unit::Meter => "m",
            Unit::Nanometer => "nm",
        }
    }

    /// Factor taking a value in this unit to the dimension's SI base unit.
    fn to_base(self, c: &PhysicalConstants) -> f64 {
        match self {
            Unit::Amu => c.amu,
            Unit::Kg => 1.0,
            Unit::Joule => 1.0,
            Unit::KelvinKinetic => 1.5 * c.k_b,
            Unit::Meter => 1.0,
            Unit::Nanometer => 1e-9,
        }
    }
}

/// Exact linear unit conversion. Errors on dimensionally incompatible units.
pub fn convert(value: f64, from: Unit, to: Unit, c: &PhysicalConstants) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(CoreError::UnitMismatch {
            from: from.name(),
            to: to.name(),
        });
    }
    if from == to {
        return Ok(value);
    }
    Ok(value * from.to_base(c) / to.to_base(c))
}

/// SI ↔ dimensionless mapping for the dynamical modules.
///
/// Lengths are measured in the active model's kernel length, times in the
/// inverse collapse rate 1/Λ, energies in ħΛ. The derived momentum and mass
/// scales make the system consistent with ħ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    /// Length unit (m): R₀ or r_c.
    pub length: f64,
    /// Time unit (s): 1/Λ.
    pub time: f64,
    /// Energy unit (J): ħΛ.
    pub energy: f64,
    hbar: f64,
}

impl ScaleSet {
    /// Momentum unit (kg·m·s⁻¹): ħ / length.
    pub fn momentum(&self) -> f64 {
        self.hbar / self.length
    }

    /// Mass unit (kg): ħ·time / length².
    pub fn mass(&self) -> f64 {
        self.hbar * self.time / (self.length * self.length)
    }

    /// Rate unit (s⁻¹): Λ.
    pub fn rate(&self) -> f64 {
        1.0 / self.time
    }

    pub fn to_scaled_length(&self, si: f64) -> f64 {
        si / self.length
    }
    pub fn to_si_length(&self, scaled: f64) -> f64 {
        scaled * self.length
    }
    pub fn to_scaled_time(&self, si: f64) -> f64 {
        si / self.time
    }
    pub fn to_si_time(&self, scaled: f64) -> f64 {
        scaled * self.time
    }
    pub fn to_scaled_energy(&self, si: f64) -> f64 {
        si / self.energy
    }
    pub fn to_si_energy(&self, scaled: f64) -> f64 {
        scaled * self.energy
    }
    pub fn to_scaled_momentum(&self, si: f64) -> f64 {
        si / self.momentum()
    }
    pub fn to_si_momentum(&self, scaled: f64) -> f64 {
        scaled * self.momentum()
    }
    pub fn to_scaled_mass(&self, si: f64) -> f64 {
        si / self.mass()
    }
    pub fn to_si_mass(&self, scaled: f64) -> f64 {
        scaled * self.mass()
    }
}

/// Build the dimensionless scale set for a particle under the active model.
///
/// Errors with [`CoreError::DegenerateScale`] when the collapse rate vanishes
/// (massless particle), since 1/Λ is then undefined.
pub fn dimensionless_scaling(params: &ModelParams, particle: &ParticleSpec) -> Result<ScaleSet> {
    let lambda = crate::rates::collapse_rate_point(params.model, particle.mass, params);
    if lambda <= 0.0 {
        return Err(CoreError::DegenerateScale);
    }
    let length = params.kernel_length();
    Ok(ScaleSet {
        length,
        time: 1.0 / lambda,
        energy: params.constants.hbar * lambda,
        hbar: params.constants.hbar,
    })
}
