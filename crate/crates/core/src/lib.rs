//! Cross-modal matching of apartment floorplans and room photographs.
//!
//! The crate is `no_std` (with `alloc`): a small reverse-mode autodiff
//! engine, CNN encoders, the pair / photo-set / k-way matching heads, a
//! procedural apartment generator with planted ground truth, the training
//! and evaluation harness, and occlusion-based interpretation tools. File
//! formats, the CLI and process-level parallelism live in the `fpmatch`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod encoders;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod interpret;
pub mod matchers;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod synthgen;
pub mod tensor;

pub use autodiff::{Gradients, Graph, NodeId, Pointwise};
pub use error::{Error, Result};
pub use params::{ParamId, ParamStore};
pub use tensor::{DType, Scalar, Tensor};
