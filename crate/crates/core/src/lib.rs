pub mod cache;
pub mod engine;
pub mod error;
pub mod field;
pub mod harness;
pub mod inr;
pub mod macrocell;
pub mod math;
pub mod render;
pub mod sampler;
pub mod scheduler;
pub mod service;

pub use error::{Error, Result};
