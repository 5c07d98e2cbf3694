//! Runge–Kutta invariant-energy-quadratization (IEQ) schemes for the
//! Cahn–Hilliard equation on periodic domains.
//!
//! With a symplectic tableau (the Gauss collocation methods) the scheme keeps
//! `q = φ² − 1 − C` exactly and therefore dissipates the original free energy
//! `E(φ)`, not only the quadratized one. The [`diagnostics`] module turns those
//! properties into checks over recorded trajectories.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod initial;
pub mod midpoint;
pub mod model;
pub mod scalar;
pub mod stepper;
pub mod tableau;

pub use diagnostics::{
    check_energy_dissipation, check_energy_equivalence, check_mass, check_q_consistency,
    estimate_order, q_consistency_residual, EnergyVerdict, OrderEstimate, Record, RunMeta,
    TimeSeries, Verdict,
};
pub use error::{Error, Result};
pub use grid::{PeriodicGrid, ScalarField};
pub use initial::InitialCondition;
pub use midpoint::step_midpoint;
pub use model::{CHParams, CHState};
pub use scalar::Real;
pub use stepper::{
    integrate, solve_stage_system, stage_residual, step, strong_stage_residual, IeqRkStepper,
    IntegrateError, Run, SolverOptions, StageSystem, StepReport,
};
pub use tableau::ButcherTableau;

pub type Grid = PeriodicGrid<f64>;
pub type Field = ScalarField<f64>;
pub type Tableau = ButcherTableau<f64>;
pub type Params = CHParams<f64>;
pub type State = CHState<f64>;
pub type Options = SolverOptions<f64>;
pub type Series = TimeSeries<f64>;
