//! Gaussian fermionic tensor network states with isometric constraints on a
//! square lattice: model Hamiltonians, momentum-space contraction,
//! special-orthogonal parametrisation, Riemannian optimisation and
//! observables.

pub mod checkpoint;
pub mod error;
pub mod extras;
pub mod gaussian;
pub mod iso;
pub mod linalg;
pub mod models;
pub mod observables;
pub mod optimize;

pub use error::{Error, Result};
pub use gaussian::{contract_physical, CellTensors, Contraction, Leg, LocalTensorCovariance, Mode, VirtualBonds};
pub use iso::{
    build_local_covariance, build_local_covariance_unconstrained, manifold_dimension, random_init,
    random_init_unconstrained, ArrowPattern, IsoParams, LegSet, ManifoldKind, SiteLayout, UnconstrainedParams,
};
pub use models::{BlochHamiltonian, Boundary, CellShape, KPoint, ModelKind, ModelSpec, MomentumGrid};
pub use observables::{
    occupation, projector_defect, realspace_chern, realspace_correlator, unfolded_occupation, RealSpaceCovariance, Region, RegionPartition,
};
pub use optimize::{expectation_energy, minimize, riemannian_gradient, EnergyProblem, OptimConfig, OptimReport};
