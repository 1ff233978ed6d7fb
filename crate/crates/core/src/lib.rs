//! Truncated-SVD denoising and reconstruction of multi-input/multi-output
//! vibration response datasets.
//!
//! A dataset is a complex `n_o × n_i × n_k` array of frequency or impulse
//! response functions. Three low-rank representations are available:
//!
//! * the per-line input/output matrix ([`filters::classic_tsvd`]),
//! * the spectrally unfolded `n_k × n_o·n_i` matrix whose dominant left
//!   singular vectors are the principal response functions
//!   ([`filters::prf_tsvd`]),
//! * a Hankel matrix per response with anti-diagonal averaging
//!   ([`filters::hankel_filter_dataset`]).
//!
//! The combined pipelines [`filters::prank_ph`], [`filters::prank_hp`] and the
//! mixed [`filters::prank_hip`] chain them. Truncation ranks come from a
//! [`selection::SelectionStrategy`], including an automated Marchenko-Pastur
//! noise floor fit ([`selection::e15`]).
//!
//! ```
//! use prank::benchmark::{ChainSystem, FrequencyGrid, synthesize_direct};
//! use prank::filters::{run, PrankConfig};
//! use prank::metrics::consist;
//!
//! let sys = ChainSystem::uniform(4, 1.0, 0.002, 1.0, prank::benchmark::Boundary::FixedFree);
//! let grid = FrequencyGrid::new(0.004, 501).unwrap();
//! let clean = synthesize_direct(&sys, &grid, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap().dataset;
//! let (filtered, report) = run(&clean, &PrankConfig::default()).unwrap();
//! assert!(consist(&clean, &filtered).unwrap().overall > 0.999);
//! assert!(report.total_seconds >= 0.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod dataset;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod report;
pub mod selection;
pub mod tsvd;

pub use dataset::{Domain, FlatDataset, ResponseDataset};
pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = faer::Mat<Complex64>;
