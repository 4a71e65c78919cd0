//! Learning sparse Boolean juntas from lazy random-walk data.
//!
//! The crate is organised around the data-generating process and the two
//! families of learners that consume it:
//!
//! * [`boolfn`]: exact Fourier–Walsh representation of targets.
//! * [`walk`]: the p-lazy hypercube walk, i.i.d. sampling, the projected
//!   support chain and the edge chain.
//! * [`loss`]: the temporal-difference loss family.
//! * [`shallow`]: the two-layer ReLU network and the layerwise two-phase
//!   training procedure.
//! * [`deepnet`]: a general MLP trained jointly with batch-1 SGD.
//! * [`analysis`]: metrics, cross-predictability, the large-batch lower
//!   bound and the edge-chain CLT diagnostics.
//! * [`harness`]: experiment specs, orchestration and persistence.
//! * [`verify`]: the release-gate checks shared by the test-suite and CLI.
//!
//! Coordinates are 1-indexed everywhere in the public API.

pub mod analysis;
pub mod boolfn;
pub mod deepnet;
mod error;
pub mod harness;
pub mod loss;
pub mod record;
pub mod rng;
pub mod shallow;
pub mod verify;
pub mod walk;

pub use error::{Error, Result};
