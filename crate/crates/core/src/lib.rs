pub mod baseline;
pub mod channel;
pub mod error;
pub mod grid;
pub mod harness;
pub mod net;
pub mod seed;
pub mod sirius;
pub mod special;

pub use error::{Error, Result};
