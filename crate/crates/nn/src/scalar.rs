use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use beamseq_core::Real;
use ndarray::{LinalgScalar, ScalarOperand};

/// Element type of every tensor in the network.
pub trait Scalar: Real + LinalgScalar + ScalarOperand + AddAssign + SubAssign + MulAssign + DivAssign {}

impl<T: Real + LinalgScalar + ScalarOperand + AddAssign + SubAssign + MulAssign + DivAssign> Scalar for T {}
