pub mod dataset;
pub mod dgp;
pub mod doe;
pub mod error;
pub mod gp;
pub mod infill;
pub mod kernels;
pub mod numerics;
pub mod optimizers;

pub use dataset::Dataset;
pub use error::{Error, Result};
