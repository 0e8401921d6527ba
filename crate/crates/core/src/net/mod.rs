//! Fourier-feature sine network with a hand-written reverse pass and Adam.

mod adam;
mod fourier;
mod matrix;
mod siren;
mod trig;

pub use adam::AdamState;
pub use fourier::FourierMapping;
pub use matrix::{gemm, Matrix, Op};
pub use siren::{flatten, Dense, Forward, SirenNetwork};
