//! Tracking fast moving objects by joint deblurring and matting.

pub mod curve;
pub mod deblatting;
pub mod detector;
pub mod error;
pub mod eval;
pub mod formation;
pub mod imaging;
pub mod synth;
pub mod trajfit;
pub mod tracker;

pub use error::{Error, Result};
