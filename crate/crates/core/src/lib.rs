pub mod bbox;
pub mod error;
pub mod geometry;
pub mod localization;
pub mod losses;
pub mod pointcloud;
pub mod bench;
pub mod annotations;
pub mod arch;
pub mod metrics;
pub mod simulator;
pub mod cli;
