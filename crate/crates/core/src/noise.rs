//! Seedable power-law fractional-frequency noise.
//!
//! Each component with one-sided spectral density `S_y(f) = h_α f^α` is
//! synthesised by fractional integration of white Gaussian noise (the
//! discrete filter `c_0 = 1, c_k = c_{k-1} (β/2 + k - 1) / k` applied to a
//! white sequence, which has PSD `∝ f^-β` at low frequency).
//!
//! * α ∈ {0, -1, -2}: the frequency itself is filtered with β = -α.
//! * α ∈ {+1, +2}: a phase sequence with β = 2 - α is filtered and the
//!   fractional frequency is its first difference divided by `dt`.
//!
//! The flicker filters are truncated at the series length, so the lowest
//! represented frequency is `1 / (n dt)`. Flicker noise has no stationary
//! variance; statistics beyond that span are not meaningful.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("unsupported spectral exponent α = {0} (expected -2..=2)")]
    UnsupportedAlpha(i32),
    #[error("coefficient h_{alpha} = {value} must be finite and >= 0")]
    InvalidCoefficient { alpha: i32, value: f64 },
    #[error("sample count must be >= 1")]
    Empty,
    #[error("sample interval must be > 0, got {0}")]
    InvalidInterval(f64),
    #[error("drift and offset must be finite")]
    NonFinite,
}

/// Power-law noise, drift and offset in fractional-frequency units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseSpec {
    h_alpha: BTreeMap<i32, f64>,
    /// Linear drift, fractional frequency per second.
    pub drift_rate: f64,
    /// Constant fractional offset.
    pub offset: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Sets `h_α`; a zero coefficient removes the component.
    pub fn set_h(&mut self, alpha: i32, h: f64) -> Result<(), NoiseError> {
        if !(-2..=2).contains(&alpha) {
            return Err(NoiseError::UnsupportedAlpha(alpha));
        }
        if !(h.is_finite() && h >= 0.0) {
            return Err(NoiseError::InvalidCoefficient { alpha, value: h });
        }
        if h == 0.0 {
            self.h_alpha.remove(&alpha);
        } else {
            self.h_alpha.insert(alpha, h);
        }
        Ok(())
    }

    pub fn with_h(mut self, alpha: i32, h: f64) -> Result<Self, NoiseError> {
        self.set_h(alpha, h)?;
        Ok(self)
    }

    pub fn with_drift(mut self, drift_rate: f64) -> Self {
        self.drift_rate = drift_rate;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn h(&self, alpha: i32) -> f64 {
        self.h_alpha.get(&alpha).copied().unwrap_or(0.0)
    }

    pub fn components(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.h_alpha.iter().map(|(&a, &h)| (a, h))
    }

    pub fn is_zero(&self) -> bool {
        self.h_alpha.is_empty() && self.drift_rate == 0.0 && self.offset == 0.0
    }

    fn validate(&self) -> Result<(), NoiseError> {
        for (&alpha, &h) in &self.h_alpha {
            if !(-2..=2).contains(&alpha) {
                return Err(NoiseError::UnsupportedAlpha(alpha));
            }
            if !(h.is_finite() && h >= 0.0) {
                return Err(NoiseError::InvalidCoefficient { alpha, value: h });
            }
        }
        if !(self.drift_rate.is_finite() && self.offset.is_finite()) {
            return Err(NoiseError::NonFinite);
        }
        Ok(())
    }
}

/// Uniformly sampled fractional-frequency series.
#[derive(Debug, Clone, PartialEq)]
pub struct FracSeries {
    pub dt: f64,
    pub values: Vec<f64>,
}

/// Synthesises `n` samples spaced `dt` seconds apart.
///
/// Components use independent ChaCha streams derived from `spec.seed`, so a
/// component's samples do not change when other coefficients are edited.
pub fn generate(spec: &NoiseSpec, n: usize, dt: f64) -> Result<FracSeries, NoiseError> {
    if n == 0 {
        return Err(NoiseError::Empty);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(NoiseError::InvalidInterval(dt));
    }
    spec.validate()?;

    let mut values = vec![0.0; n];
    for (alpha, h) in spec.components() {
        let component = power_law_component(alpha, h, n, dt, spec.seed);
        for (v, c) in values.iter_mut().zip(component) {
            *v += c;
        }
    }
    for (k, v) in values.iter_mut().enumerate() {
        *v += spec.offset + spec.drift_rate * (k as f64 * dt);
    }
    Ok(FracSeries { dt, values })
}

fn power_law_component(alpha: i32, h: f64, n: usize, dt: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((alpha + 2) as u64 + 1);

    if alpha <= 0 {
        let beta = -alpha;
        let q = white_variance(h, beta, dt);
        let white = gaussian(&mut rng, n, q.sqrt());
        fractional_integrate(&white, beta)
    } else {
        // Phase PSD is S_y / (2π f)².
        let beta = 2 - alpha;
        let q = white_variance(h / (4.0 * PI * PI), beta, dt);
        let white = gaussian(&mut rng, n + 1, q.sqrt());
        let phase = fractional_integrate(&white, beta);
        phase.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
    }
}

/// Driving variance `Q` so that `2 Q dt / (2π f dt)^β` equals `h f^-β`.
fn white_variance(h: f64, beta: i32, dt: f64) -> f64 {
    h * (2.0 * PI).powi(beta) * dt.powi(beta - 1) / 2.0
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Applies the length-n fractional integration filter for exponent β.
fn fractional_integrate(white: &[f64], beta: i32) -> Vec<f64> {
    match beta {
        0 => white.to_vec(),
        2 => white
            .iter()
            .scan(0.0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect(),
        _ => {
            let n = white.len();
            let mut coeffs = Vec::with_capacity(n);
            let mut c = 1.0;
            coeffs.push(c);
            for k in 1..n {
                c *= (f64::from(beta) / 2.0 + k as f64 - 1.0) / k as f64;
                coeffs.push(c);
            }
            fft_convolve(white, &coeffs)
        }
    }
}

/// First `signal.len()` samples of the linear convolution.
fn fft_convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let size = (signal.len() + kernel.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let pad = |x: &[f64]| {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let mut a = pad(signal);
    let mut b = pad(kernel);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..n].iter().map(|c| c.re * scale).collect()
}

/// Preset for the transmitted RF reference, tuned for 1 s gates: white
/// phase noise giving about 8×10⁻¹⁵ at 1 s, falling as τ⁻¹, on a
/// flicker-frequency floor of 1×10⁻¹⁵.
pub fn reference_profile() -> NoiseSpec {
    NoiseSpec::new(0)
        .with_h(2, white_pm_h(8.0e-15, 1.0))
        .and_then(|s| s.with_h(-1, flicker_fm_h(1.0e-15)))
        .expect("preset coefficients are valid")
}

/// Preset for the reference after the unstabilised fibre link: the same
/// floor with white phase noise raised to about 3×10⁻¹⁴ at 1 s.
pub fn link_profile() -> NoiseSpec {
    NoiseSpec::new(0)
        .with_h(2, white_pm_h(3.0e-14, 1.0))
        .and_then(|s| s.with_h(-1, flicker_fm_h(1.0e-15)))
        .expect("preset coefficients are valid")
}

/// `h_2` giving Allan deviation `sigma_1s` at τ = 1 s for sample spacing
/// `dt` (white PM: σ_y² = 3 f_h h_2 / (4π² τ²), f_h = 1 / (2 dt)).
pub fn white_pm_h(sigma_1s: f64, dt: f64) -> f64 {
    let f_h = 1.0 / (2.0 * dt);
    sigma_1s * sigma_1s * 4.0 * PI * PI / (3.0 * f_h)
}

/// `h_0` giving Allan deviation `sigma_1s` at τ = 1 s (σ_y² = h_0 / (2τ)).
pub fn white_fm_h(sigma_1s: f64) -> f64 {
    2.0 * sigma_1s * sigma_1s
}

/// `h_-1` giving the flicker floor `sigma` (σ_y² = 2 ln 2 h_-1).
pub fn flicker_fm_h(sigma: f64) -> f64 {
    sigma * sigma / (2.0 * std::f64::consts::LN_2)
}
