use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("agents on edge {edge} are coincident (separation {separation:e} m)")]
    CoincidentAgents { edge: usize, separation: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("vehicle {vehicle} cannot realise the requested velocity (residual {residual:e} m/s)")]
    InfeasibleVelocity { vehicle: usize, residual: f64 },

    #[error("control effectiveness matrix is singular (det = {det:e})")]
    SingularG { det: f64 },

    #[error("non-finite {what} at t = {time} s")]
    NonFiniteState { what: &'static str, time: f64 },

    #[error("vertical load {load:.3} N exceeds the available thrust {available:.3} N")]
    Overloaded { load: f64, available: f64 },

    #[error("rope of length {rope_length} m cannot span a separation of {separation} m")]
    RopeInfeasible { separation: f64, rope_length: f64 },

    #[error("horizontal budget {budget:.3} N leaves no margin over the tension bound {tension:.3} N")]
    NoMargin { budget: f64, tension: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("simulation is not running")]
    NotRunning,

    #[error("trace is empty")]
    EmptyTrace,
}
