#![no_std]
// float methods come from `num_traits::Float` unless std ends up linked
// (tests, or a std feature of num-traits enabled elsewhere in the graph)
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod entangle;
pub mod error;
pub mod fit;
pub mod noise;
pub mod protocol;
pub mod qcore;
pub mod rates;
pub mod tomo;

pub use error::{Error, Result};
