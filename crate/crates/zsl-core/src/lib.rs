//! Desk-scale, framework-free training and evaluation for discriminative
//! zero-shot learning.
//!
//! The crate implements an attribute-attention scoring head with manually
//! derived gradients, dropout-generated fictitious classes plus the
//! mixup/cutmix augmentation family, calibrated stacking with gamma
//! selection, a two-phase training schedule with forgetting telemetry, and
//! a self-contained Gaussian toy experiment.
//!
//! Evaluation-side loops (batch scoring, gamma sweeps, boundary grids) run
//! data-parallel on rayon by default; build with
//! `--no-default-features` for the sequential fallback. Both paths merge
//! results in index order and produce identical output.

pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod rng;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
pub use exec::ExecMode;
