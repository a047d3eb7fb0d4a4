//! Saturated high-gain velocity observer for rigid robot manipulators with
//! position-only measurements.
//!
//! * [`dynamics`]: manipulator models (`M`, Coriolis quadratic forms, `F`,
//!   `g`, `H`), structural property checks, the built-in Pendubot.
//! * [`observer`]: saturation, observer vector field, scaled error
//!   coordinates.
//! * [`gains`]: Lyapunov-based synthesis of the minimum gain `θ*`.
//! * [`sim`]: RK4 co-simulation, envelope fitting, initial-state campaigns.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64`/`*32` aliases below fix the scalar.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod gains;
pub mod linalg;
pub mod observer;
pub mod scalar;
pub mod sim;

pub use dynamics::{
    constant_inertia_model, coriolis_jacobian, coriolis_vector, pendubot, pendubot_with, plant_derivative,
    validate_properties, ConstantInertia, JointDomain, ManipulatorModel, PendubotDynamics, PendubotParams, PlantState,
    RigidDynamics, ValidationReport,
};
pub use error::{Error, Result};
pub use gains::{
    achieved_rate, build_g, estimate_bounds, solve_lyapunov, solve_lyapunov_dense, spectral_norm, synthesize,
    BoundEstimate, GainSynthesis, LipschitzRule, LipschitzSource, SamplingPlan,
};
pub use linalg::Matrix;
pub use observer::{
    from_error_coordinates, observer_derivative, perturbation_term, saturate, to_error_coordinates, ErrorCoordinates,
    ObserverParams, ObserverState,
};
pub use scalar::Real;
pub use sim::{
    fit_envelope, initial_state_campaign, simulate, step_rk4, CampaignReport, CampaignSpec, EnvelopeFit, InputSignal,
    SimulationConfig, SimulationFailure, Trajectory,
};

pub type ManipulatorModel64 = ManipulatorModel<f64>;
pub type ManipulatorModel32 = ManipulatorModel<f32>;
pub type PlantState64 = PlantState<f64>;
pub type PlantState32 = PlantState<f32>;
pub type ObserverParams64 = ObserverParams<f64>;
pub type ObserverParams32 = ObserverParams<f32>;
pub type ObserverState64 = ObserverState<f64>;
pub type ObserverState32 = ObserverState<f32>;
pub type GainSynthesis64 = GainSynthesis<f64>;
pub type GainSynthesis32 = GainSynthesis<f32>;
pub type SimulationConfig64 = SimulationConfig<f64>;
pub type SimulationConfig32 = SimulationConfig<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
