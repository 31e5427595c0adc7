//! File formats, reports and the command-line front end for `kinid-core`.
//!
//! - [`model_file`] parses the line-oriented model format.
//! - [`data_file`] reads measurement CSVs and adds synthetic noise.
//! - [`report`] renders the iteration protocol and fit statistics.
//! - [`cli`] implements the `simulate`, `sens`, `fit` and `rank` commands.

pub mod cli;
pub mod data_file;
pub mod model_file;
pub mod report;

pub use cli::run;
pub use data_file::{add_noise, read_data, DataFileError};
pub use model_file::{parse_model, ModelFileError};
