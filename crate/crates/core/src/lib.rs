pub mod autodiff;
pub mod blood;
pub mod datasets;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod instrument;
pub mod network;
pub mod parallel;
pub mod record;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
