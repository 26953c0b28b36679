//! Quasi-shadowing by contraction on sequence spaces.
//!
//! A pseudo orbit `{x_k}` is traced by `y_k = exp_{x_k}(v_k)` with
//! `v_k ∈ E^s ⊕ E^u`, where each `y_k` is reached from `f(y_{k-1})` by a
//! move along the center direction. Writing the step relation in charts
//! gives `v = (center part) + A v + η(v)` with `A` the hyperbolic blocks of
//! the linearization and `η` the remainder; the solution is the fixed point
//! of `Φ = P^{-1} η`, iterated from zero.
//!
//! Three kinds of center move are supported (see [`Variant`]). Finite
//! windows pin the stable component at the left edge and the unstable
//! component at the right edge; cyclic orbits are solved exactly.

mod estimate;
mod iterate;
mod problem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::systems::SystemError;

pub use estimate::{estimate_contraction, ContractionEstimates};
pub use iterate::{iterate_phi, shadow, shadow_tau2, shadow_tau3, ShadowResult};
pub use problem::{SequenceVector, ShadowProblem};

/// How `y_k` is obtained from `f(y_{k-1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Add a center vector `u_k ∈ E^c(x_k)` in the chart at `x_k`.
    Tau1,
    /// Slide along the center leaf onto the transversal disk at `x_k`.
    Tau2,
    /// Flow for time `τ̃_k` along the unit center field.
    Tau3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Stable part zero at the left edge, unstable part zero at the right.
    Truncated,
    /// Indices taken mod the period.
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Tracing radius; must stay below the chart's working radius.
    pub epsilon: f64,
    pub fixed_point_tol: f64,
    pub max_iterations: usize,
    pub boundary_policy: BoundaryPolicy,
    /// Random probes per quantity in the contraction estimate.
    pub probes: usize,
    pub probe_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Tau1,
            epsilon: 0.04,
            fixed_point_tol: 1e-12,
            max_iterations: 200,
            boundary_policy: BoundaryPolicy::Truncated,
            probes: 16,
            probe_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, rho: f64) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0 && self.epsilon < rho) {
            return Err(SolverError::InvalidConfig(format!(
                "epsilon={} must lie in (0, rho={rho})",
                self.epsilon
            )));
        }
        if !(self.fixed_point_tol > 0.0) {
            return Err(SolverError::InvalidConfig("fixed_point_tol must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("window of length {0} is too short (need at least 2 points)")]
    WindowTooShort(usize),
    #[error("boundary policy {policy:?} does not match a {} orbit", if *cyclic { "cyclic" } else { "finite" })]
    PolicyMismatch { policy: BoundaryPolicy, cyclic: bool },
    #[error("variant {0:?} needs a one-dimensional center foliation")]
    CenterDimension(Variant),
    #[error("hyperbolic block at index {index} is not contracting (factor {factor})")]
    BlockNotContracting { index: usize, factor: f64 },
    #[error("cyclic {bundle} system is singular")]
    SingularCycle { bundle: &'static str },
    #[error("chart overflow at index {index}: {source}")]
    ChartOverflow {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("no contraction: observed factor {0}")]
    NoContraction(f64),
    #[error("orbit not admissible: predicted radius {predicted} is not below epsilon {epsilon}")]
    NotAdmissible { predicted: f64, epsilon: f64 },
    #[error("iterate left the epsilon-ball at iteration {iteration} (norm {norm})")]
    Escaped { iteration: usize, norm: f64 },
    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    MaxIterations { iterations: usize, last_step: f64 },
    #[error(transparent)]
    System(#[from] SystemError),
}
