//! Uniform linear array responses, narrowband multipath channels, DFT
//! codebooks and the beamforming metrics built on top of them.
//!
//! All functions here are pure. Angles are measured from the array
//! broadside, in radians, and must lie in `[-pi/2, pi/2]`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),
    #[error("angle {0} rad is not finite")]
    NonFiniteAngle(f64),
    #[error("angle {0} rad lies outside [-pi/2, pi/2]")]
    AngleOutOfRange(f64),
    #[error("no propagation path (deep outage)")]
    NoPropagationPath,
    #[error("codebook needs at least as many beams as antennas (beams {beams}, antennas {antennas})")]
    TooFewBeams { beams: usize, antennas: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("channel is identically zero (outage)")]
    ZeroChannel,
    #[error("transmit SNR must be positive, got {0}")]
    NonPositiveSnr(f64),
    #[error("beam index {index} out of range for {num_beams} beams")]
    BeamOutOfRange { index: usize, num_beams: usize },
}

pub type Result<T> = std::result::Result<T, PhyError>;

/// Horizontal ULA description. `spacing` is in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry<T> {
    pub num_antennas: usize,
    pub spacing: T,
    pub carrier_frequency: T,
}

impl<T: Real> ArrayGeometry<T> {
    pub fn new(num_antennas: usize, spacing: T, carrier_frequency: T) -> Result<Self> {
        if num_antennas == 0 {
            return Err(PhyError::InvalidGeometry("num_antennas must be >= 1".into()));
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(PhyError::InvalidGeometry(format!("spacing must be > 0, got {spacing}")));
        }
        if !(carrier_frequency > T::zero()) || !carrier_frequency.is_finite() {
            return Err(PhyError::InvalidGeometry(format!(
                "carrier frequency must be > 0, got {carrier_frequency}"
            )));
        }
        Ok(Self { num_antennas, spacing, carrier_frequency })
    }

    /// Half-wavelength array at the given carrier.
    pub fn half_wavelength(num_antennas: usize, carrier_frequency: T) -> Result<Self> {
        Self::new(num_antennas, T::of(0.5), carrier_frequency)
    }

    pub fn wavelength(&self) -> T {
        T::of(SPEED_OF_LIGHT) / self.carrier_frequency
    }
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One propagation path: complex gain, departure angle at the BS and
/// arrival angle at the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent<T> {
    pub gain: Complex<T>,
    pub aod: T,
    pub aoa: T,
}

/// Downlink CSI vector between a BS array and a single-antenna vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot<T> {
    pub coefficients: Vec<Complex<T>>,
    pub slot_index: u64,
}

impl<T: Real> ChannelSnapshot<T> {
    pub fn new(coefficients: Vec<Complex<T>>, slot_index: u64) -> Self {
        Self { coefficients, slot_index }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| c.re == T::zero() && c.im == T::zero())
    }
}

/// Index into a [`Codebook`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeamLabel(pub usize);

impl BeamLabel {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `num_beams` unit-norm codewords of length `num_antennas`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    codewords: Vec<Vec<Complex<T>>>,
    num_antennas: usize,
}

impl<T: Real> Codebook<T> {
    pub fn num_beams(&self) -> usize {
        self.codewords.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn codeword(&self, label: BeamLabel) -> Result<&[Complex<T>]> {
        self.codewords
            .get(label.0)
            .map(Vec::as_slice)
            .ok_or(PhyError::BeamOutOfRange { index: label.0, num_beams: self.num_beams() })
    }

    pub fn codewords(&self) -> impl Iterator<Item = &[Complex<T>]> {
        self.codewords.iter().map(Vec::as_slice)
    }

    pub fn check_label(&self, label: BeamLabel) -> Result<()> {
        self.codeword(label).map(|_| ())
    }
}

/// Sine of the direction codeword `x` of an `X`-beam DFT codebook steers
/// toward, for an array with the given element spacing (in wavelengths).
///
/// The raw spatial frequency `x / X` is wrapped into `[-1/2, 1/2)` first.
pub fn dft_codeword_sine<T: Real>(beam: usize, num_beams: usize, spacing: T) -> T {
    let mut freq = T::of(beam as f64) / T::of(num_beams as f64);
    if beam * 2 >= num_beams {
        freq = freq - T::one();
    }
    freq / spacing
}

fn check_angle<T: Real>(angle: T) -> Result<()> {
    if !angle.is_finite() {
        return Err(PhyError::NonFiniteAngle(angle.to_f64().unwrap_or(f64::NAN)));
    }
    if angle.abs() > T::FRAC_PI_2() {
        return Err(PhyError::AngleOutOfRange(angle.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// ULA response `[a(theta)]_i = exp(-j 2 pi d i sin(theta))`, `d` in wavelengths.
pub fn steering_vector<T: Real>(geometry: &ArrayGeometry<T>, angle: T) -> Result<Vec<Complex<T>>> {
    check_angle(angle)?;
    let step = -T::TAU() * geometry.spacing * angle.sin();
    Ok((0..geometry.num_antennas)
        .map(|i| Complex::from_polar(T::one(), step * T::of(i as f64)))
        .collect())
}

/// Superposition of the path steering vectors weighted by their gains.
/// The receiver has a single antenna, so its array response is 1.
pub fn synthesize_channel<T: Real>(
    paths: &[PathComponent<T>],
    bs: &ArrayGeometry<T>,
    slot: u64,
) -> Result<ChannelSnapshot<T>> {
    if paths.is_empty() {
        return Err(PhyError::NoPropagationPath);
    }
    let mut coefficients = vec![Complex::new(T::zero(), T::zero()); bs.num_antennas];
    for path in paths {
        let a = steering_vector(bs, path.aod)?;
        for (acc, ai) in coefficients.iter_mut().zip(a) {
            *acc = *acc + path.gain * ai;
        }
    }
    Ok(ChannelSnapshot::new(coefficients, slot))
}

/// Columns of an `num_beams`-point DFT matrix truncated to the first
/// `num_antennas` rows and rescaled to unit norm.
pub fn build_dft_codebook<T: Real>(num_beams: usize, num_antennas: usize) -> Result<Codebook<T>> {
    if num_antennas == 0 {
        return Err(PhyError::InvalidGeometry("num_antennas must be >= 1".into()));
    }
    if num_beams < num_antennas {
        return Err(PhyError::TooFewBeams { beams: num_beams, antennas: num_antennas });
    }
    let scale = T::one() / T::of(num_antennas as f64).sqrt();
    let x_len = T::of(num_beams as f64);
    let codewords = (0..num_beams)
        .map(|x| {
            (0..num_antennas)
                .map(|i| {
                    // Reduce the phase index mod X before scaling for accuracy.
                    let k = (i * x) % num_beams;
                    let phase = -T::TAU() * T::of(k as f64) / x_len;
                    Complex::from_polar(scale, phase)
                })
                .collect()
        })
        .collect();
    Ok(Codebook { codewords, num_antennas })
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(PhyError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `|h^H f|^2`.
pub fn received_signal_strength<T: Real>(h: &ChannelSnapshot<T>, f: &[Complex<T>]) -> Result<T> {
    check_dims(h.len(), f.len())?;
    Ok(inner_power(&h.coefficients, f))
}

#[inline]
fn inner_power<T: Real>(h: &[Complex<T>], f: &[Complex<T>]) -> T {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (hi, fi) in h.iter().zip(f) {
        acc = acc + hi.conj() * fi;
    }
    acc.norm_sqr()
}

/// RSS of every codeword against `h`.
pub fn beam_powers<T: Real>(h: &ChannelSnapshot<T>, cb: &Codebook<T>) -> Result<Vec<T>> {
    check_dims(cb.num_antennas(), h.len())?;
    Ok(cb.codewords().map(|f| inner_power(&h.coefficients, f)).collect())
}

/// Exhaustive beam search: the codeword maximizing RSS, lowest index on ties.
pub fn optimal_beam<T: Real>(h: &ChannelSnapshot<T>, cb: &Codebook<T>) -> Result<BeamLabel> {
    check_dims(cb.num_antennas(), h.len())?;
    if h.is_zero() {
        return Err(PhyError::ZeroChannel);
    }
    let mut best = 0;
    let mut best_power = T::neg_infinity();
    for (x, f) in cb.codewords().enumerate() {
        let p = inner_power(&h.coefficients, f);
        if p > best_power {
            best = x;
            best_power = p;
        }
    }
    Ok(BeamLabel(best))
}

/// `log2(1 + snr * |h^H f|^2)` in bits/s/Hz.
pub fn spectral_efficiency<T: Real>(h: &ChannelSnapshot<T>, f: &[Complex<T>], tx_snr: T) -> Result<T> {
    check_snr(tx_snr)?;
    let rss = received_signal_strength(h, f)?;
    Ok(se_from_rss(rss, tx_snr))
}

pub fn check_snr<T: Real>(tx_snr: T) -> Result<()> {
    if !(tx_snr > T::zero()) || !tx_snr.is_finite() {
        return Err(PhyError::NonPositiveSnr(tx_snr.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// Spectral efficiency for an already computed RSS.
pub fn se_from_rss<T: Real>(rss: T, tx_snr: T) -> T {
    (T::one() + tx_snr * rss).log2()
}
