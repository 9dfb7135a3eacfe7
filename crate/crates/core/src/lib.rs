//! Channel simulation and dataset assembly for predicting a target base
//! station's future beams from a source base station's past CSI.
//!
//! The array and codebook math in [`phy`] and [`features`] is generic over
//! the float type; the scene simulator and datasets work in `f64`. The
//! aliases below fix the scalar to `f64` for everyday use.

pub mod dataset;
pub mod features;
pub mod gridcache;
pub mod phy;
pub mod real;
pub mod scene;

pub use real::Real;

pub type Complex = num_complex::Complex<f64>;
pub type ArrayGeometry = phy::ArrayGeometry<f64>;
pub type PathComponent = phy::PathComponent<f64>;
pub type ChannelSnapshot = phy::ChannelSnapshot<f64>;
pub type Codebook = phy::Codebook<f64>;

pub use phy::BeamLabel;
