//! Random walks on Carnot groups, their large-deviation rate functions and
//! Monte Carlo checks of the predicted decay.

pub mod algebra;
pub mod diagnostics;
pub mod error;
pub mod mc;
pub mod par;
pub mod paths;
pub mod rate;
pub mod real;
pub mod walk;

pub use algebra::{CarnotGroup, GroupDescriptor, Step2Law};
pub use error::{Error, Result};
pub use real::{DoubleF64, Real};
