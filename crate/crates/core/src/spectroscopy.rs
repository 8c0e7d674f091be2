//! Two-photon line model and n-th harmonic synchronous detection.
//!
//! The line is Lorentzian, `A / (1 + ((δ - δ_sys) / γ)²)`, with `γ` the
//! HWHM and `δ_sys` a fixed shift standing in for baseline and cavity
//! systematics. Frequency modulation `δ_c + a cos ωt` followed by
//! demodulation at `nω` gives the error signal
//!
//! ```text
//! S_n(δ_c) = (2/T) ∫₀ᵀ L(δ_c + a cos ωt) cos(nωt) dt
//! ```
//!
//! evaluated by the trapezoidal rule over one period, which converges
//! geometrically for this smooth periodic integrand. With the cosine
//! convention used here the 3f signal has a positive slope at line center
//! and the 1f signal a negative one.

use rayon::prelude::*;
use thiserror::Error;

use crate::frequency::ExactFrequency;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectroscopyError {
    #[error("invalid line model: {0}")]
    InvalidLine(&'static str),
    #[error("invalid modulation: {0}")]
    InvalidModulation(&'static str),
    #[error("discriminant slope vanishes at line center (harmonic {harmonic}); the line cannot be locked")]
    Unlockable { harmonic: u32 },
    #[error("measurement bandwidth must be > 0, got {0}")]
    InvalidBandwidth(f64),
    #[error("finesse must be >= 1, got {0}")]
    InvalidFinesse(f64),
    #[error("scan needs at least 2 points and a non-empty range")]
    InvalidScan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineModel {
    pub center: ExactFrequency,
    /// Half width at half maximum, Hz.
    pub hwhm: f64,
    /// Peak signal in detection units.
    pub amplitude: f64,
    /// Peak signal over noise rms in `snr_bandwidth`.
    pub snr: f64,
    pub snr_bandwidth: f64,
    /// Apparent line-center shift, Hz.
    pub systematic_offset: f64,
}

impl LineModel {
    pub fn validate(&self) -> Result<(), SpectroscopyError> {
        if !(self.hwhm > 0.0 && self.hwhm.is_finite()) {
            return Err(SpectroscopyError::InvalidLine("hwhm must be > 0"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(SpectroscopyError::InvalidLine("amplitude must be > 0"));
        }
        if !(self.snr > 0.0) {
            return Err(SpectroscopyError::InvalidLine("snr must be > 0"));
        }
        if !(self.snr_bandwidth > 0.0 && self.snr_bandwidth.is_finite()) {
            return Err(SpectroscopyError::InvalidLine("snr bandwidth must be > 0"));
        }
        if !self.systematic_offset.is_finite() {
            return Err(SpectroscopyError::InvalidLine(
                "systematic offset must be finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationConfig {
    /// Peak frequency excursion, Hz.
    pub depth: f64,
    /// Modulation frequency, Hz.
    pub rate: f64,
    /// Demodulation harmonic.
    pub harmonic: u32,
    pub samples_per_cycle: usize,
}

/// Default quadrature resolution.
pub const DEFAULT_SAMPLES_PER_CYCLE: usize = 64;

impl ModulationConfig {
    pub fn validate(&self) -> Result<(), SpectroscopyError> {
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(SpectroscopyError::InvalidModulation("depth must be > 0"));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(SpectroscopyError::InvalidModulation("rate must be > 0"));
        }
        if self.harmonic < 1 {
            return Err(SpectroscopyError::InvalidModulation(
                "harmonic must be >= 1",
            ));
        }
        if !self.samples_per_cycle.is_multiple_of(2) {
            return Err(SpectroscopyError::InvalidModulation(
                "samples_per_cycle must be even",
            ));
        }
        if self.samples_per_cycle < 16 * self.harmonic as usize {
            return Err(SpectroscopyError::InvalidModulation(
                "samples_per_cycle must be >= 16 * harmonic",
            ));
        }
        Ok(())
    }

    /// Modulation at the depth that maximises the central discriminant slope.
    pub fn optimal_for(line: &LineModel, harmonic: u32, rate: f64) -> Self {
        let samples_per_cycle = DEFAULT_SAMPLES_PER_CYCLE.max(16 * harmonic as usize);
        let depth = optimal_depth(line, harmonic, samples_per_cycle);
        Self {
            depth,
            rate,
            harmonic,
            samples_per_cycle,
        }
    }
}

pub fn absorption(line: &LineModel, delta: f64) -> f64 {
    let x = (delta - line.systematic_offset) / line.hwhm;
    line.amplitude / (1.0 + x * x)
}

/// Precomputed quadrature nodes for repeated demodulation.
///
/// Nodes come in pairs `θ` and `θ + π` whose excursions are exact
/// negatives, so odd harmonics give a bit-exact odd signal with an exact
/// zero at line center.
#[derive(Debug, Clone)]
pub struct Demodulator {
    excursion: Vec<f64>,
    reference: Vec<f64>,
    partner_sign: f64,
    samples: usize,
}

impl Demodulator {
    pub fn new(modulation: &ModulationConfig) -> Self {
        let n = modulation.samples_per_cycle;
        let h = f64::from(modulation.harmonic);
        let phases = (0..n / 2).map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64);
        let excursion = phases.clone().map(|t| modulation.depth * t.cos()).collect();
        let reference = phases.map(|t| (h * t).cos()).collect();
        Self {
            excursion,
            reference,
            partner_sign: if modulation.harmonic.is_multiple_of(2) {
                1.0
            } else {
                -1.0
            },
            samples: n,
        }
    }

    pub fn signal(&self, line: &LineModel, delta_c: f64) -> f64 {
        let sum: f64 = self
            .excursion
            .iter()
            .zip(&self.reference)
            .map(|(&dx, &r)| {
                r * (absorption(line, delta_c + dx)
                    + self.partner_sign * absorption(line, delta_c - dx))
            })
            .sum();
        2.0 * sum / self.samples as f64
    }
}

/// n-th harmonic lock-in output at laser detuning `delta_c` (Hz).
pub fn demodulated_signal(line: &LineModel, modulation: &ModulationConfig, delta_c: f64) -> f64 {
    Demodulator::new(modulation).signal(line, delta_c)
}

/// Central derivative of the error signal at zero detuning, units per Hz.
///
/// Errors with [`SpectroscopyError::Unlockable`] when the slope is
/// negligible against the line's natural scale `A / γ` (even harmonics).
pub fn discriminant_slope(
    line: &LineModel,
    modulation: &ModulationConfig,
) -> Result<f64, SpectroscopyError> {
    let demod = Demodulator::new(modulation);
    let h = line.hwhm / 1000.0;
    let slope = (demod.signal(line, h) - demod.signal(line, -h)) / (2.0 * h);
    if !(slope.abs() > 1e-9 * line.amplitude / line.hwhm) {
        return Err(SpectroscopyError::Unlockable {
            harmonic: modulation.harmonic,
        });
    }
    Ok(slope)
}

/// Smallest positive detuning (beyond the central zero) where the error
/// signal changes sign: the half-width of the capture range. Returns
/// `None` if no crossing exists within `limit` Hz.
pub fn capture_half_range(
    line: &LineModel,
    modulation: &ModulationConfig,
    limit: f64,
) -> Option<f64> {
    let demod = Demodulator::new(modulation);
    let s = |d: f64| demod.signal(line, line.systematic_offset + d);
    let step = line.hwhm / 200.0;
    let mut prev_x = step;
    let mut prev = s(prev_x);
    let mut x = prev_x;
    while x < limit {
        x += step;
        let v = s(x);
        if v.signum() != prev.signum() && v != 0.0 {
            // bisection refine
            let (mut a, mut b) = (prev_x, x);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if s(mid).signum() == prev.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev_x = x;
        prev = v;
    }
    None
}

/// Depth in `[γ/10, 6γ]` maximising |discriminant slope| (golden section).
pub fn optimal_depth(line: &LineModel, harmonic: u32, samples_per_cycle: usize) -> f64 {
    let slope = |depth: f64| {
        let m = ModulationConfig {
            depth,
            rate: 1.0,
            harmonic,
            samples_per_cycle,
        };
        let demod = Demodulator::new(&m);
        let h = line.hwhm / 1000.0;
        let c = line.systematic_offset;
        ((demod.signal(line, c + h) - demod.signal(line, c - h)) / (2.0 * h)).abs()
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.1 * line.hwhm, 6.0 * line.hwhm);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (slope(c), slope(d));
    while (b - a) > 1e-6 * line.hwhm {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = slope(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = slope(d);
        }
    }
    0.5 * (a + b)
}

/// Detection-noise rms in `measurement_bandwidth`, scaled from the quoted
/// SNR as white noise (`∝ √bandwidth`).
pub fn detection_noise_sigma(
    line: &LineModel,
    measurement_bandwidth: f64,
) -> Result<f64, SpectroscopyError> {
    if !(measurement_bandwidth > 0.0 && measurement_bandwidth.is_finite()) {
        return Err(SpectroscopyError::InvalidBandwidth(measurement_bandwidth));
    }
    Ok(line.amplitude / line.snr * (measurement_bandwidth / line.snr_bandwidth).sqrt())
}

/// Proportionality constant between cavity finesse and SNR gain.
pub const CAVITY_GAIN_PER_FINESSE: f64 = 1.0;

/// SNR gain of the absorption cavity, `finesse * CAVITY_GAIN_PER_FINESSE`.
pub fn cavity_gain(finesse: f64) -> Result<f64, SpectroscopyError> {
    cavity_gain_with(finesse, CAVITY_GAIN_PER_FINESSE)
}

pub fn cavity_gain_with(finesse: f64, per_finesse: f64) -> Result<f64, SpectroscopyError> {
    if !(finesse >= 1.0 && finesse.is_finite()) {
        return Err(SpectroscopyError::InvalidFinesse(finesse));
    }
    Ok(finesse * per_finesse)
}

/// Error signal sampled at `points` evenly spaced detunings in `[lo, hi]`.
pub fn scan(
    line: &LineModel,
    modulation: &ModulationConfig,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>, SpectroscopyError> {
    if points < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(SpectroscopyError::InvalidScan);
    }
    let demod = Demodulator::new(modulation);
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .into_par_iter()
        .map(|i| {
            // symmetric grids hit zero exactly
            let d = if 2 * i + 1 == points && lo == -hi {
                0.0
            } else {
                lo + step * i as f64
            };
            (d, demod.signal(line, d))
        })
        .collect())
}
