//! Optoacoustic tomography toolkit.
//!
//! End-to-end pipeline for desk-scale optoacoustic data work: transducer
//! array geometries and channel masks, a discrete forward model from initial
//! pressure maps to raw signal matrices, delay-and-sum backprojection with
//! sparse-sampling and limited-view acquisition variants, synthetic forearm
//! phantoms with ground-truth labels, the usual image-quality and
//! segmentation metrics, and a deterministic compressed dataset container.
//!
//! The `oadx` binary composes these into `phantom`, `forward`, `recon`,
//! `eval`, `bench`, `export-png` and `split` subcommands.

pub mod dataio;
pub mod error;
pub mod export;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod phantom;
pub mod recon;

pub use error::{Error, Result};
