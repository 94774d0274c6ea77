//! Estimability of noisy sensing parameters and learnability of noisy
//! channels, decided from first derivatives of states and Choi matrices.

pub mod error;
pub mod estimability;
pub mod io;
pub mod learnability;
pub mod linalg;
pub mod pauli;
pub mod sensing;
pub mod state;
pub mod testkit;

pub use error::{Error, Result};
pub use estimability::{EstimabilityVerdict, OptimalMeasurement, QfimResult, Tolerances};
pub use learnability::{CycleModel, LearnabilityReport, ParameterizedChannel, Relation};
pub use linalg::{HermitianOperator, RealSymmetricMatrix};
pub use pauli::{PauliChannel, PauliIndex, PauliTransferMatrix};
pub use sensing::{BiasVarianceReport, Scenario, ShotRecord};
pub use state::{EvaluatedModel, ParameterizedState};
