#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fisher;
pub mod interpret;
pub mod linalg;
pub mod ops;
pub mod population;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
