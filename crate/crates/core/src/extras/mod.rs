//! Sequential-circuit scheduling of isometric layouts and the quantum-double
//! isometry check.

pub mod circuit;
pub mod quantum_double;

pub use circuit::{schedule_circuit, CircuitSchedule, Gate};
pub use quantum_double::{
    isometry_check, quantum_double_checks, quantum_double_tensor, DenseTensor, GroupTable, IsometryCheck,
};
