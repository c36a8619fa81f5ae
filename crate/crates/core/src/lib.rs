pub mod cli;
pub mod config;
pub mod curation;
pub mod diff_fp;
pub mod error;
pub mod format;
pub mod geometry;
pub mod io;
pub mod rope2d;
pub mod selfcheck;
pub mod video;

pub use error::{Error, Result};
