#![no_std]
extern crate alloc;

pub mod autodiff;
pub mod circuit;
pub mod data;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod samplers;
pub mod statevector;
pub mod train;
pub mod zoo;

pub use error::{Error, Result};
