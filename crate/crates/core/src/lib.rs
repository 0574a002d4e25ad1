pub mod calibration;
pub mod error;
pub mod error_model;
pub mod formats;
pub mod likelihood;
pub mod maxsprt;
mod optim;
pub mod simharness;
pub mod stats;
pub mod surveillance;

pub use error::{Error, Result};
