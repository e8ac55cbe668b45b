//! Core-radius regularized nonlocal perimeters for exponents `s >= 1`,
//! their curvatures and the level-set flows they drive.

pub mod curvature;
pub mod dislocation;
pub mod error;
pub mod fftconv;
pub mod flow;
pub mod grid;
pub mod kernel_table;
pub mod kernels;
pub mod perimeter;
pub mod quadrature;
pub mod reference;
pub mod selftest;
pub mod shapes;

pub use error::{Error, Result};
