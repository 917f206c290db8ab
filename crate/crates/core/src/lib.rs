//! Linear classifiers trained under group-fairness rate constraints when the
//! protected-group labels seen at training time are noisy.
//!
//! Approaches: the naive Lagrangian on noisy groups, a distributionally
//! robust variant over total-variation balls ([`dro`]), and soft group
//! assignments bounded by a noise model ([`softassign`]).

pub mod constraints;
pub mod data;
pub mod dro;
pub mod error;
pub mod harness;
pub mod lp;
pub mod model;
pub mod softassign;
pub mod trainers;

pub use constraints::{ConstraintSpec, Indicator, RateKind, ViolationReport};
pub use data::{EncodedDataset, Encoder, NoiseModel, Schema, TrainView};
pub use error::{Error, Result};
pub use harness::{Approach, ExperimentConfig, ModelFile, RunRecord, SummaryRow, TrainedModel};
pub use model::ModelParams;
pub use softassign::StochasticClassifier;
pub use trainers::{Optimizer, TrainOutcome, TrainerConfig};
