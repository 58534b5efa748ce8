//! Energy evaluation, Riemannian gradients and the multi-start optimiser.

mod energy;
mod minimize;

pub use energy::{
    common_cell, expectation_energy, physical_covariances, pull_back, riemannian_gradient, EnergyProblem, Evaluation,
    IMAG_TOL,
};
pub use minimize::{
    descend, gradient_norm, minimize, minimize_from, newton_polish, retract, OptimConfig, OptimReport, State,
    Trajectory,
};
