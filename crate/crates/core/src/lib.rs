#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod dinn;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod rng;
pub mod room;
pub mod scene;
pub mod signal;
pub mod stats;
pub mod study;
pub mod tdoa;

pub use error::{Error, Result};
