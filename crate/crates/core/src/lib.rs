pub mod dynamics;
pub mod error;
pub mod harness;
pub mod henn;
pub mod linalg;
pub mod models;
pub mod pauli;
pub mod persist;
pub mod seed;
pub mod tomography;

pub use error::{Error, Result};
