//! Label noise and long-tailed sub-population laboratory.
//!
//! Synthesizes noisy long-tailed corpora, trains small classifiers with a
//! fairness regularizer over sub-populations, measures leave-one-group-out
//! influence, evaluates the binary Gaussian error analysis and runs paired
//! t-tests.

pub mod corpus;
pub mod error;
pub mod influence;
pub mod io;
pub mod objectives;
pub mod population;
pub mod rng;
pub mod stats;
pub mod synthesis;
pub mod theory;
pub mod trainer;

pub use corpus::{CorpusSummary, GroupAssignment, LabeledCorpus};
pub use error::{Error, Result};
