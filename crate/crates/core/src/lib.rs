pub mod data;
pub mod error;
pub mod estimators;
pub mod fcs;
pub mod fit;
pub mod io;
pub mod rng;
pub mod sim;
pub mod study;

pub use error::{Error, Result};
