//! Gate series, Allan deviation, drift fitting and campaign statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::frequency::ExactFrequency;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("gate time must be > 0, got {0}")]
    InvalidGate(f64),
    #[error("series needs at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("averaging factor must be >= 1")]
    ZeroTau,
    #[error("reference uncertainty must be > 0, got {0}")]
    InvalidUncertainty(f64),
    #[error("campaign is empty")]
    EmptyCampaign,
    #[error("center frequency must be > 0")]
    NonPositiveCenter,
}

/// Contiguous (dead-time free) gate averages of fractional frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSeries {
    pub gate: f64,
    pub y: Vec<f64>,
}

impl GateSeries {
    pub fn new(gate: f64, y: Vec<f64>) -> Result<Self, StatsError> {
        if !(gate > 0.0 && gate.is_finite()) {
            return Err(StatsError::InvalidGate(gate));
        }
        Ok(Self { gate, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Start time of gate `k`.
    pub fn t_start(&self, k: usize) -> f64 {
        k as f64 * self.gate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllanEstimator {
    /// Adjacent non-overlapping τ-averages.
    #[default]
    Standard,
    /// All τ-averages starting at every gate.
    Overlapping,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllanPoint {
    pub tau: f64,
    pub sigma: f64,
    /// Number of averaged differences.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllanCurve {
    pub points: Vec<AllanPoint>,
    pub estimator: AllanEstimator,
    /// Requested τ values (seconds) dropped for lack of data.
    pub omitted: Vec<f64>,
}

impl AllanCurve {
    pub fn sigma_at(&self, tau: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.tau - tau).abs() <= 1e-9 * tau.max(1.0))
            .map(|p| p.sigma)
    }
}

/// 1-2-5 grid of averaging factors from 1 up to `len / 4`.
pub fn default_taus(len: usize) -> Vec<usize> {
    let max = (len / 4).max(1);
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for step in [1, 2, 5] {
            let m = step * decade;
            if m > max {
                break 'outer;
            }
            out.push(m);
        }
        decade *= 10;
    }
    out
}

/// Allan deviation at τ = `m * gate` for each averaging factor `m`.
///
/// A factor that does not leave at least one difference is omitted and
/// listed in [`AllanCurve::omitted`]. Factors are sorted and deduplicated.
pub fn allan_deviation(
    series: &GateSeries,
    taus: &[usize],
    estimator: AllanEstimator,
) -> Result<AllanCurve, StatsError> {
    if series.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    if taus.contains(&0) {
        return Err(StatsError::ZeroTau);
    }
    let mut factors = taus.to_vec();
    factors.sort_unstable();
    factors.dedup();

    let results: Vec<(usize, Option<(f64, usize)>)> = factors
        .par_iter()
        .map(|&m| {
            let r = match estimator {
                AllanEstimator::Standard => standard_avar(&series.y, m),
                AllanEstimator::Overlapping => overlapping_avar(&series.y, m),
            };
            (m, r)
        })
        .collect();

    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for (m, r) in results {
        let tau = m as f64 * series.gate;
        match r {
            Some((avar, n)) => points.push(AllanPoint {
                tau,
                sigma: avar.sqrt(),
                n,
            }),
            None => omitted.push(tau),
        }
    }
    Ok(AllanCurve {
        points,
        estimator,
        omitted,
    })
}

fn standard_avar(y: &[f64], m: usize) -> Option<(f64, usize)> {
    let blocks = y.len() / m;
    if blocks < 2 {
        return None;
    }
    let means: Vec<f64> = y
        .chunks_exact(m)
        .map(|c| c.iter().sum::<f64>() / m as f64)
        .collect();
    let n = blocks - 1;
    let sum: f64 = means.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Some((sum / (2.0 * n as f64), n))
}

fn overlapping_avar(y: &[f64], m: usize) -> Option<(f64, usize)> {
    if y.len() < 2 * m {
        return None;
    }
    let n = y.len() - 2 * m + 1;
    // Each window mean is summed afresh; a running sum would drift in the
    // last bits as rounding accumulates.
    let means: Vec<f64> = y
        .windows(m)
        .map(|w| w.iter().sum::<f64>() / m as f64)
        .collect();
    let sum: f64 = (0..n).map(|j| (means[j + m] - means[j]).powi(2)).sum();
    Some((sum / (2.0 * n as f64), n))
}

/// Least-squares line through `(t_k, y_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftFit {
    /// Fractional frequency per second.
    pub rate: f64,
    /// Fitted value at t = 0.
    pub intercept: f64,
    /// Standard error of `rate` from the residual scatter.
    pub rate_std_error: f64,
    /// Residuals after removing the fitted line.
    pub removed: GateSeries,
}

/// Fits and removes a linear drift; `t_k` is the start time of gate `k`.
pub fn fit_drift(series: &GateSeries) -> Result<DriftFit, StatsError> {
    let n = series.len();
    if n < 3 {
        return Err(StatsError::TooShort { needed: 3, got: n });
    }
    let nf = n as f64;
    let t_mean = series.gate * (nf - 1.0) / 2.0;
    let y_mean = series.y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (k, &y) in series.y.iter().enumerate() {
        let dt = series.t_start(k) - t_mean;
        sxx += dt * dt;
        sxy += dt * (y - y_mean);
    }
    let rate = sxy / sxx;
    let intercept = y_mean - rate * t_mean;
    let residuals: Vec<f64> = series
        .y
        .iter()
        .enumerate()
        .map(|(k, &y)| y - (intercept + rate * series.t_start(k)))
        .collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let rate_std_error = (rss / (nf - 2.0) / sxx).sqrt();
    Ok(DriftFit {
        rate,
        intercept,
        rate_std_error,
        removed: GateSeries {
            gate: series.gate,
            y: residuals,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Previous set-up with intermediate laser diodes.
    Old,
    /// Offset-free sum-frequency scheme.
    New,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Old => "old",
            Scheme::New => "new",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "old" => Ok(Scheme::Old),
            "new" => Ok(Scheme::New),
            other => Err(format!("unknown scheme `{other}` (expected old|new)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// ISO-8601 date or date-time label; not interpreted.
    pub timestamp: String,
    pub frequency: ExactFrequency,
    pub scheme: Scheme,
    /// Optional 1-σ uncertainty, Hz; only used by [`weighted_mean`].
    pub uncertainty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub measurements: Vec<Measurement>,
}

impl Campaign {
    pub fn new(measurements: Vec<Measurement>) -> Result<Self, StatsError> {
        if measurements.is_empty() {
            return Err(StatsError::EmptyCampaign);
        }
        Ok(Self { measurements })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignStats {
    pub n: usize,
    /// Unweighted mean, rounded to the nearest µHz.
    pub mean: ExactFrequency,
    /// 1-σ sample deviation (n - 1 normalisation), Hz; absent for n = 1.
    pub sigma: Option<f64>,
    pub old_mean: Option<ExactFrequency>,
    pub new_mean: Option<ExactFrequency>,
    /// |old - new|, Hz; absent unless both schemes are present.
    pub scheme_gap: Option<f64>,
}

fn exact_mean(values: impl Iterator<Item = ExactFrequency>) -> Option<ExactFrequency> {
    let (sum, n) = values.fold((ExactFrequency::ZERO, 0i128), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum.div_round(n).0)
}

pub fn campaign_stats(c: &Campaign) -> CampaignStats {
    let n = c.measurements.len();
    let mean = exact_mean(c.measurements.iter().map(|m| m.frequency))
        .expect("campaign holds at least one measurement");
    let sigma = (n > 1).then(|| {
        // Deviations from the rounded mean are exact; re-centre them in f64.
        let dev: Vec<f64> = c
            .measurements
            .iter()
            .map(|m| (m.frequency - mean).to_hz())
            .collect();
        let centre = dev.iter().sum::<f64>() / n as f64;
        let ss: f64 = dev.iter().map(|d| (d - centre).powi(2)).sum();
        (ss / (n as f64 - 1.0)).sqrt()
    });
    let scheme_mean = |s: Scheme| {
        exact_mean(
            c.measurements
                .iter()
                .filter(|m| m.scheme == s)
                .map(|m| m.frequency),
        )
    };
    let old_mean = scheme_mean(Scheme::Old);
    let new_mean = scheme_mean(Scheme::New);
    let scheme_gap = match (old_mean, new_mean) {
        (Some(a), Some(b)) => Some((a - b).abs().to_hz()),
        _ => None,
    };
    CampaignStats {
        n,
        mean,
        sigma,
        old_mean,
        new_mean,
        scheme_gap,
    }
}

/// Inverse-variance weighted mean and its uncertainty (Hz), using
/// measurements that carry an uncertainty. `None` if none do.
pub fn weighted_mean(c: &Campaign) -> Option<(ExactFrequency, f64)> {
    let weighted: Vec<(ExactFrequency, f64)> = c
        .measurements
        .iter()
        .filter_map(|m| {
            m.uncertainty
                .filter(|u| *u > 0.0)
                .map(|u| (m.frequency, 1.0 / (u * u)))
        })
        .collect();
    if weighted.is_empty() {
        return None;
    }
    let pivot = weighted[0].0;
    let wsum: f64 = weighted.iter().map(|(_, w)| w).sum();
    let shift: f64 = weighted
        .iter()
        .map(|(f, w)| w * (*f - pivot).to_hz())
        .sum::<f64>()
        / wsum;
    let mean = pivot + ExactFrequency::from_micro_hz((shift * 1e6).round() as i128);
    Some((mean, wsum.sqrt().recip()))
}

/// `sigma / center`.
pub fn fractional_uncertainty(sigma: f64, center: ExactFrequency) -> Result<f64, StatsError> {
    if !center.is_positive() {
        return Err(StatsError::NonPositiveCenter);
    }
    Ok(sigma / center.to_hz())
}

/// Pull below which a measurement counts as consistent with a reference.
pub const CONSISTENCY_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    pub pull: f64,
    pub consistent: bool,
}

/// `pull = (measured - reference) / ref_uncertainty`, consistent iff |pull| <= 3.
pub fn consistency_check(
    measured: ExactFrequency,
    reference: ExactFrequency,
    ref_uncertainty: f64,
) -> Result<Consistency, StatsError> {
    if !(ref_uncertainty > 0.0 && ref_uncertainty.is_finite()) {
        return Err(StatsError::InvalidUncertainty(ref_uncertainty));
    }
    let pull = (measured - reference).to_hz() / ref_uncertainty;
    Ok(Consistency {
        pull,
        consistent: pull.abs() <= CONSISTENCY_THRESHOLD,
    })
}

/// Synthetic campaign around `center` with whole-hertz values.
///
/// Deviations are Gaussian, re-centred per scheme so both scheme means sit
/// on `center`, and rescaled to a sample deviation of `sigma_hz` before
/// rounding. The first `n_old` points use the old scheme (dated 2004), the
/// rest the new scheme (dated 2005).
pub fn synthetic_campaign(
    center: ExactFrequency,
    sigma_hz: f64,
    n_old: usize,
    n_new: usize,
    seed: u64,
) -> Result<Campaign, StatsError> {
    let n = n_old + n_new;
    if n_old < 2 || n_new < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: n_old.min(n_new),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    for range in [0..n_old, n_old..n] {
        let part = &mut dev[range];
        let mean = part.iter().sum::<f64>() / part.len() as f64;
        part.iter_mut().for_each(|d| *d -= mean);
    }
    let sd = (dev.iter().map(|d| d * d).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let measurements = dev
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (scheme, timestamp) = if i < n_old {
                (
                    Scheme::Old,
                    format!("2004-{:02}-{:02}", 9 + i * 4 / n_old, 1 + (i * 7) % 28),
                )
            } else {
                let j = i - n_old;
                (
                    Scheme::New,
                    format!("2005-{:02}-{:02}", 1 + j * 4 / n_new, 1 + (j * 5) % 28),
                )
            };
            Measurement {
                timestamp,
                frequency: center + ExactFrequency::from_hz((d / sd * sigma_hz).round() as i128),
                scheme,
                uncertainty: None,
            }
        })
        .collect();
    Campaign::new(measurements)
}
