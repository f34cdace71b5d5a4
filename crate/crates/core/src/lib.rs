//! Replica-symmetric theory, synthetic data and message passing for a
//! teacher-student perceptron trained on labelled and unlabelled data that
//! carry a classification margin.
//!
//! The crate is `no_std` with `alloc`. File formats, the CLI and parallel
//! ensembles live in the `semiperc` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod amp;
pub mod replica;
pub mod rng;
pub mod specfun;
pub mod synthdata;

pub use amp::{AmpConfig, AmpError, AmpResult, AmpState, ChannelEquations, UpdateOrder};
pub use replica::{LearningSetup, OrderParams, ReplicaError, SaddleResidual};
pub use specfun::{Integrator, Peak, QuadratureRule, SpecfunError};
pub use synthdata::{DataError, Dataset, Matrix, Teacher};

