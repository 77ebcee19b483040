pub mod cv;
pub mod error;
pub mod hrf;
pub mod lm;
pub mod matrix_io;
pub mod pipeline;
pub mod ridge;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use matrix_io::DenseMatrix;
