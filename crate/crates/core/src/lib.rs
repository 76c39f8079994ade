//! Open-world video instance tracking.

pub mod assignment;
pub mod association;
pub mod classification;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod synth;
pub mod types;
