//! Data-parallel training of convolutional networks with a lock-free shared
//! weight store, and an analytical model of the resulting training time.
//!
//! Workers each own a private replica of the activation and gradient state
//! ([`WorkerState`]) while reading and writing a single [`SharedWeights`]
//! store without locks. Work is divided dynamically through a
//! [`WorkSampler`], and every layer's gradients are published as soon as
//! that layer's backward step finishes.
//!
//! The [`perf`] module predicts training time and speedup for a given
//! workload and can be calibrated against measured runs.

pub mod affinity;
mod aligned;
pub mod checkpoint;
pub mod config;
pub mod engine;
mod error;
pub mod mnist;
pub mod network;
pub mod perf;
pub mod propagate;
pub mod rng;
pub mod sampler;
mod scalar;
pub mod state;
pub mod weights;

pub use aligned::AlignedVec;
pub use config::{Activation, LayerKind, LayerSpec, NetworkConfig};
pub use engine::{train, Hyperparams, TrainOptions, TrainReport};
pub use error::{Error, Result};
pub use mnist::{Dataset, LabeledSet, PreprocessedImage};
pub use network::{build_network, Network};
pub use propagate::{backward, backward_with, forward, loss_and_output_delta, predict};
pub use sampler::WorkSampler;
pub use scalar::Scalar;
pub use state::WorkerState;
pub use weights::{Params, SharedWeights, WeightRead};
