//! Simulation and calculation toolkit for gravity-related (Diósi-Penrose)
//! and CSL wave-function collapse models.
//!
//! The crate has three layers:
//!
//! - closed-form rates and kernels ([`rates`], [`kernels`], [`units`]),
//!   evaluated in SI;
//! - an independent adaptive-quadrature oracle ([`quadrature`]) that
//!   cross-checks every closed form by brute force;
//! - dynamical solvers in dimensionless units: master-equation propagation on
//!   a position lattice ([`grid`]), stochastic-Schrödinger-equation
//!   unraveling ([`sse`]), and the momentum jump process of the dissipative
//!   model ([`jump`]).

pub mod constants;
pub mod error;
pub mod grid;
pub mod jump;
pub mod kernels;
pub mod quadrature;
pub mod rates;
pub mod sse;
pub mod units;

pub use constants::PhysicalConstants;
pub use error::{CoreError, Result};
pub use kernels::ScaledKernel;
pub use rates::{
    collapse_rate_cm, collapse_rate_point, csl_phi, dissipative_coeffs, energy_trajectory,
    figure1_dataset, form_factor, heating_rate, self_energy_u, DampingTime, DecoherenceKernel,
    DissipativeCoeffs, Fig1Row, HeatingRate, RateFunction, Temperature,
};
pub use units::{
    convert, dimensionless_scaling, CollapseModel, CoarseGraining, CslParams, DpParams,
    FormFactorShape, ModelParams, ParticleSpec, Preset, RigidBodySpec, ScaleSet, Unit,
};
