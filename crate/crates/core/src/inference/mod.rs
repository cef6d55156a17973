//! MAP inference for the scene CRF.

use thiserror::Error;

use crate::crf::CrfError;

pub mod exact;
pub mod maxflow;
pub mod qpbo;
pub mod solver;
pub mod temporal;

pub use exact::{minimize_energy_exact, ExactSolution, MAX_EXACT_STATES};
pub use maxflow::{FlowNetwork, MaxFlow, FLOW_QUANTUM};
pub use qpbo::{qpbo, BinaryProblem, BinarySolution, Fill, PartialLabeling, QuadraticProblem};
pub use solver::{minimize_energy, minimize_frame, unary_argmin, FrameSolution, SearchSpace, SolveReport, SolverConfig};
pub use temporal::{minimize_temporal, TemporalReport, TemporalSolution};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error("model has {0} frames; single-frame inference needs exactly one")]
    NotSingleFrame(usize),
    #[error("frame {frame} out of range for {frames} frames")]
    Frame { frame: usize, frames: usize },
    #[error("search space has {states} labelings, above the enumeration cap")]
    TooLarge { states: u128 },
    #[error("invalid search domain: {0}")]
    Domain(String),
}
