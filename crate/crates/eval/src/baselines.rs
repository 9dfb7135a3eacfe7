//! Location-based beam selection from a (possibly noisy) position fix.

use std::f64::consts::TAU;

use beamseq_core::phy::{optimal_beam, steering_vector, BeamLabel};
use beamseq_core::scene::{BsId, Point2, Scene};
use beamseq_core::{ChannelSnapshot, Codebook};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// How the offset between the true and the reported position is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDistribution {
    /// Exactly `magnitude` meters in a uniformly random ground-plane direction.
    Fixed,
    /// Isotropic Gaussian with RMS offset `magnitude` meters.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositioningErrorModel {
    pub magnitude: f64,
    pub distribution: ErrorDistribution,
}

impl PositioningErrorModel {
    pub fn new(magnitude: f64, distribution: ErrorDistribution) -> Result<Self> {
        if !(magnitude >= 0.0) || !magnitude.is_finite() {
            return Err(EvalError::InvalidErrorMagnitude(magnitude));
        }
        Ok(Self { magnitude, distribution })
    }

    pub fn exact() -> Self {
        Self { magnitude: 0.0, distribution: ErrorDistribution::Fixed }
    }

    pub fn fixed(magnitude: f64) -> Result<Self> {
        Self::new(magnitude, ErrorDistribution::Fixed)
    }

    /// Draw one offset. A zero magnitude consumes no randomness.
    pub fn offset<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        if self.magnitude == 0.0 {
            return [0.0, 0.0];
        }
        match self.distribution {
            ErrorDistribution::Fixed => {
                let phi = rng.gen_range(0.0..TAU);
                [self.magnitude * phi.cos(), self.magnitude * phi.sin()]
            }
            ErrorDistribution::Gaussian => {
                let sigma = self.magnitude / std::f64::consts::SQRT_2;
                let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
                [normal.sample(rng), normal.sample(rng)]
            }
        }
    }

    /// Reported position for a vehicle at `position`.
    pub fn report<R: Rng + ?Sized>(&self, position: Point2, rng: &mut R) -> Point2 {
        let d = self.offset(rng);
        [position[0] + d[0], position[1] + d[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocationBeam {
    pub label: BeamLabel,
    /// The reported position fell outside the grid and was clamped onto it.
    pub clamped: bool,
}

/// Codeword best aligned with the direct link from `bs` toward `position`:
/// `argmax_x |a(aod)^H f_x|`, lowest index on ties.
pub fn direct_link_beam(scene: &Scene, bs: BsId, position: Point2, codebook: &Codebook) -> Result<BeamLabel> {
    let aod = scene
        .los_aod(bs, position)
        .ok_or_else(|| EvalError::NoDirectLink { bs: bs.to_string(), x: position[0], y: position[1] })?;
    let a = steering_vector(&scene.bs(bs).geometry, aod)?;
    Ok(optimal_beam(&ChannelSnapshot::new(a, 0), codebook)?)
}

/// Beam a location-based scheme picks for a vehicle whose position is
/// reported through `error`.
pub fn location_beam<R: Rng + ?Sized>(
    scene: &Scene,
    target: BsId,
    true_position: Point2,
    error: &PositioningErrorModel,
    codebook: &Codebook,
    rng: &mut R,
) -> Result<LocationBeam> {
    let reported = error.report(true_position, rng);
    let (lo, hi) = scene.grid.bounds();
    let clamped_pos = [reported[0].clamp(lo[0], hi[0]), reported[1].clamp(lo[1], hi[1])];
    let label = direct_link_beam(scene, target, clamped_pos, codebook)?;
    Ok(LocationBeam { label, clamped: clamped_pos != reported })
}
