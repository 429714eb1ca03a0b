//! Activation-function architecture search for dense feed-forward classifiers.
//!
//! A network here is a stack of fully connected layers where each layer picks its own
//! activation from a 48-entry menu. The crate provides the menu ([`activation`]), a from-scratch
//! full-batch trainer ([`nn`]), three architecture samplers ([`samplers`]), the per-dataset
//! experiment protocol ([`harness`]) and the reporting statistics ([`stats`]).

pub mod activation;
pub mod architecture;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod nn;
pub mod samplers;
pub mod seed;
pub mod selftest;
pub mod special;
pub mod stats;

pub use activation::{parse_activation, registry, ActivationKind, ActivationState, Arity, Mode};
pub use architecture::Architecture;
pub use data::{Dataset, Scaler, Split};
pub use harness::{ExperimentConfig, ExperimentMethod, ReplicateRecord};
pub use error::{Error, Result};
pub use nn::{Network, TrainConfig};
pub use samplers::{study_run, Method, SearchSpace, TrialRecord};
