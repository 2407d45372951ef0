//! Adaptive piecewise-constant density estimation on binary sequential
//! partitions of a hyper-rectangle.
//!
//! A leaf of the partition is split until the samples it holds look uniform.
//! Three uniformity criteria are available:
//!
//! - star discrepancy (`DSP`), the classical baseline;
//! - mixture discrepancy (`DSP-mix`), an L2-type discrepancy with a closed
//!   form that is invariant under reflections and rotations of the cube;
//! - moment comparison (`MSP`), matching the mean and covariance of the leaf
//!   samples against the uniform distribution on the leaf.
//!
//! ```
//! use dspmix::engine::{estimate, EngineConfig, UniformityCriterion};
//! use dspmix::geometry::{AxisBox, SampleSet};
//!
//! let samples = SampleSet::new(1, vec![0.1, 0.2, 0.3, 0.8]).unwrap();
//! let domain = AxisBox::unit(1);
//! let criterion = UniformityCriterion::mixture(0.1).unwrap();
//! let pcd = estimate(&samples, &domain, &criterion, &EngineConfig::default()).unwrap();
//! assert!((pcd.total_mass() - 1.0).abs() < 1e-12);
//! ```

#![forbid(unsafe_code)]

pub mod cli;
pub mod discrepancy;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod invariance;
pub mod io;
pub mod models;
pub mod moments;
pub mod numeric;

pub use error::{Error, Result};
