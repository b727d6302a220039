pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod model;
pub mod nn;
pub mod optim;
pub mod reciprocal;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
