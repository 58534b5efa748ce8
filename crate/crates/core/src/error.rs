use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("model {model} requires a {need} unit cell, got {got}")]
    IncompatibleCell {
        model: &'static str,
        need: String,
        got: String,
    },

    #[error("degenerate k-point ({kx:.6}, {ky:.6}): single-particle eigenvalue {eig:e} is numerically zero")]
    DegenerateKPoint { kx: f64, ky: f64, eig: f64 },

    #[error("mode orders do not span the same set of modes")]
    ModeMismatch,

    #[error("no isometry with n_in = {n_in} incoming and n_out = {n_out} outgoing modes (need n_in >= n_out, even difference)")]
    OddFreeModes { n_in: usize, n_out: usize },

    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("energy trace has imaginary residue {residue:e}")]
    ImaginaryEnergy { residue: f64 },

    #[error("occupation {value} outside [0, 1] beyond tolerance")]
    OccupationOutOfRange { value: f64 },

    #[error("correlator projector is not idempotent: |P^2 - P| = {residual:e}")]
    NotIdempotent { residual: f64 },

    #[error("invalid arrow layout: {0}")]
    InvalidLayout(String),

    #[error("invalid group table: {0}")]
    InvalidGroup(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
