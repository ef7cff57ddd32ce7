//! Disparity proxy-label distillation from rectified stereo pairs.
//!
//! The pipeline has two stages. A classical matcher (census block matching,
//! optionally followed by semi-global aggregation) produces a disparity map
//! that is filtered down to a sparse set of reliable seeds. A completer then
//! densifies random subsets of those seeds many times under image
//! augmentation, and a per-pixel consensus gate keeps the mean wherever the
//! completions agree.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithm and
//! metric. File formats, process adapters and the CLI live in the
//! `stereoproxy` crate.
#![no_std]

extern crate alloc;

pub mod colormap;
pub mod completer;
pub mod consensus;
pub mod error;
pub mod matcher;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod seeds;
pub mod sgm;

pub use completer::{Completer, CompleterConfig, ReferenceCompleter};
pub use consensus::{distill, ConsensusAccumulator, ConsensusConfig};
pub use error::{Error, Result};
pub use matcher::{CensusField, ConfidenceMap, CostVolume};
pub use raster::{Calibration, DisparityMap, Raster};
pub use seeds::{FilterConfig, Seed, SeedSet};
pub use sgm::SgmParams;

/// Default number of disparity levels (KITTI convention).
pub const DEFAULT_MAX_DISPARITY: usize = 192;
