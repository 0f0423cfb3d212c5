//! Closed-form evaporation-driven mixture flow and its ranking consequences.
//!
//! * [`mixture`]: rate spectra, initial profiles, the front `y_C(t)` and
//!   particle maps.
//! * [`solution`]: densities and velocity on both sides of the front, plus
//!   finite-difference, quadrature and ODE verification.
//! * [`pareto`]: incomplete-gamma form of the front for Pareto rates and the
//!   rank trajectory `x_C(t) = 1 + N y_C(t)`.
//! * [`simulate`]: move-to-front stochastic ranking simulator.
//! * [`fit`]: least-squares fits of rank trajectories.
//! * [`io`]: trajectory CSV and JSON helpers.

pub mod error;
pub mod fit;
pub mod io;
pub mod mixture;
pub mod ode;
pub mod pareto;
pub mod quadrature;
pub mod roots;
pub mod simulate;
pub mod solution;
pub mod special;

pub use error::{Error, Result};
pub use fit::{FitOptions, FitProblem, FitResult, NModel};
pub use io::{Observation, Trajectory};
pub use mixture::{Component, InitialProfile, RateMixture};
pub use pareto::ParetoParams;
pub use simulate::{InitialOrder, RankingState, TrackedTrajectory};
pub use solution::{Branch, SolutionField, StateSample};
