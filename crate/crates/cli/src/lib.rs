//! File formats, the external completer adapter and batch commands for
//! [`stereoproxy_core`].

pub mod config;
pub mod external;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use config::PipelineConfig;
pub use external::ExternalCompleter;
pub use manifest::{Frame, Manifest};
pub use stereoproxy_core as core;
