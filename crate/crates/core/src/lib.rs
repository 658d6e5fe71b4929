//! Screen-space path guiding for a CPU path tracer.
//!
//! Each pixel keeps a small parametric model of where its incoming light
//! comes from: a 2D Gaussian over an equal-area square parameterisation of
//! the hemisphere, mixed with BRDF sampling. Models are trained online by
//! expectation-maximisation from the first-bounce radiance samples (VPLs) of
//! nearby pixels and carried between frames by reprojection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod guide_buffers;
pub mod math;
pub mod metrics;
pub mod mixture;
pub mod par;
pub mod ptrace;
pub mod rng;
pub mod scene;
pub mod session;
pub mod sgmap;

pub use error::{Error, Result};
