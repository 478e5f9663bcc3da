//! One module per group of pipeline stages. Every stage returns the paths it
//! wrote so they can be listed in the run manifest.

pub mod factor;
pub mod prepare;
pub mod report;
pub mod train;
