//! Discrete-time simulation of the locked clock.
//!
//! Two loops run in sequence each step:
//!
//! 1. The laser is servoed onto the two-photon line through the harmonic
//!    lock-in error signal (quasi-static demodulation plus white detection
//!    noise). The error is divided by the discriminant slope, so the PI
//!    gains act on an estimated detuning in Hz.
//! 2. The repetition rate is steered so that the beat `f_laser - m f_rep`,
//!    passed through the tracking oscillator (a first-order low-pass on the
//!    beat frequency), sits on its setpoint.
//!
//! A Π-type counter averages the repetition rate over contiguous gates
//! against the noisy reference and reports fractional offsets from the
//! nominal rate.
//!
//! The loops propagate small deviations in `f64` around exact nominal
//! values. The carrier-envelope offset enters only through the exact
//! SFG-minus-comb beat at set-up, where it cancels.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::comb::{mode_frequency, sfg_mode_frequency, CombError, CombState};
use crate::frequency::ExactFrequency;
use crate::noise::{generate, NoiseError, NoiseSpec};
use crate::spectroscopy::{
    capture_half_range, detection_noise_sigma, discriminant_slope, Demodulator, LineModel,
    ModulationConfig, SpectroscopyError,
};
use crate::stats::GateSeries;

/// Tracking-oscillator loop bandwidth, Hz.
pub const TRACKING_BANDWIDTH: f64 = 1.0e6;

/// Gate readings beyond this fractional offset count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e-6;
/// Consecutive divergent gates before the run is declared unlocked.
pub const DIVERGENCE_GATES: usize = 3;
/// Time the laser may spend outside the capture range, s.
pub const UNLOCK_HOLD: f64 = 0.1;
const TRACE_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Spectroscopy(#[from] SpectroscopyError),
    #[error(transparent)]
    Comb(#[from] CombError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("{0}")]
    Unlocked(Box<UnlockDiagnostic>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiConfig {
    pub k_p: f64,
    /// Integral gain, s⁻¹.
    pub k_i: f64,
    /// Output clamp, Hz.
    pub output_limit: f64,
    /// Hz.
    pub update_rate: f64,
}

impl PiConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let finite = self.k_p.is_finite() && self.k_i.is_finite();
        if !finite {
            return Err(SimError::Config("PI gains must be finite".into()));
        }
        if !(self.update_rate > 0.0 && self.update_rate.is_finite()) {
            return Err(SimError::Config("update rate must be > 0".into()));
        }
        if !(self.output_limit > 0.0) {
            return Err(SimError::Config("output limit must be > 0".into()));
        }
        Ok(())
    }
}

/// PI controller with a clamped output and conditional integration.
#[derive(Debug, Clone)]
pub struct PiController {
    config: PiConfig,
    integral: f64,
}

impl PiController {
    pub fn new(config: PiConfig) -> Self {
        Self {
            config,
            integral: 0.0,
        }
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Advances by `dt` with the given error and returns the correction.
    ///
    /// While the output is saturated the integrator only accepts updates
    /// that move it back towards the linear range, and it never exceeds
    /// `output_limit` in magnitude.
    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        let limit = self.config.output_limit;
        let p = self.config.k_p * error;
        let candidate = (self.integral + self.config.k_i * error * dt).clamp(-limit, limit);
        let unclamped = p + candidate;
        let winding_up = (unclamped > limit && candidate > self.integral)
            || (unclamped < -limit && candidate < self.integral);
        if !winding_up {
            self.integral = candidate;
        }
        (p + self.integral).clamp(-limit, limit)
    }
}

/// Single-step helper over an explicit integral state.
pub fn pi_step(config: &PiConfig, integral: &mut f64, error: f64, dt: f64) -> f64 {
    let mut pi = PiController {
        config: *config,
        integral: *integral,
    };
    let out = pi.step(error, dt);
    *integral = pi.integral;
    out
}

/// First-order low-pass modelling the tracking oscillator on the
/// beat-frequency record. Starts from zero.
#[derive(Debug, Clone)]
pub struct TrackingFilter {
    decay: f64,
    input: f64,
    /// Output minus the latest input; decays to exactly zero for a held input.
    lag: f64,
}

impl TrackingFilter {
    /// Filter for a record sampled at `sample_rate`; requires
    /// `sample_rate >= 2 * bandwidth`.
    pub fn new(bandwidth: f64, sample_rate: f64) -> Result<Self, SimError> {
        if !(bandwidth > 0.0) {
            return Err(SimError::Config("tracking bandwidth must be > 0".into()));
        }
        if !(sample_rate >= 2.0 * bandwidth) {
            return Err(SimError::Config(format!(
                "tracking filter sample rate {sample_rate} Hz below twice its bandwidth {bandwidth} Hz"
            )));
        }
        Ok(Self::zero_order_hold(bandwidth, 1.0 / sample_rate))
    }

    /// Exact response to an input held constant over each step of `dt`;
    /// valid for any step length.
    pub fn zero_order_hold(bandwidth: f64, dt: f64) -> Self {
        Self {
            decay: (-2.0 * PI * bandwidth * dt).exp(),
            input: 0.0,
            lag: 0.0,
        }
    }

    pub fn step(&mut self, x: f64) -> f64 {
        self.lag = self.decay * (self.lag + (self.input - x));
        self.input = x;
        x + self.lag
    }
}

/// Filters a beat-frequency record sampled at `sample_rate`.
pub fn tracking_filter(
    beat_samples: &[f64],
    bandwidth: f64,
    sample_rate: f64,
) -> Result<Vec<f64>, SimError> {
    let mut f = TrackingFilter::new(bandwidth, sample_rate)?;
    Ok(beat_samples.iter().map(|&x| f.step(x)).collect())
}

/// Everything needed to run the clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockScenario {
    pub line: LineModel,
    pub modulation: ModulationConfig,
    /// `f_rep` here is the nominal rate the counter compares against.
    pub comb: CombState,
    pub m: i64,
    pub beat_setpoint: ExactFrequency,
    /// Free-running laser noise; the loop suppresses it.
    pub laser_noise: NoiseSpec,
    /// Reference noise seen by the counter, sampled once per gate.
    pub reference_noise: NoiseSpec,
    pub loop_laser: PiConfig,
    pub loop_comb: PiConfig,
    /// Linear drift of the lock point, fractional frequency per second.
    pub lock_point_drift: f64,
    pub tracking_bandwidth: f64,
    /// Seed for the detection noise.
    pub seed: u64,
    /// s.
    pub duration: f64,
    /// s.
    pub gate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Timing {
    gates: usize,
    steps_per_gate: usize,
    substeps: usize,
    dt_laser: f64,
    dt_comb: f64,
}

fn integer_ratio(x: f64, what: &str) -> Result<usize, SimError> {
    let r = x.round();
    if r < 1.0 || (x - r).abs() > 1e-9 * x.max(1.0) {
        return Err(SimError::Config(format!(
            "{what} must be a positive integer, got {x}"
        )));
    }
    Ok(r as usize)
}

impl ClockScenario {
    fn timing(&self) -> Result<Timing, SimError> {
        self.line.validate()?;
        self.modulation.validate()?;
        self.loop_laser.validate()?;
        self.loop_comb.validate()?;
        if !(self.gate > 0.0 && self.gate.is_finite()) {
            return Err(SimError::Config("gate must be > 0".into()));
        }
        if !(self.duration >= self.gate) {
            return Err(SimError::Config("duration must be >= gate".into()));
        }
        if self.loop_laser.update_rate < 1.0 / self.gate
            || self.loop_comb.update_rate < 1.0 / self.gate
        {
            return Err(SimError::Config(
                "loop update rates must be >= 1 / gate".into(),
            ));
        }
        if !(self.tracking_bandwidth > 0.0) {
            return Err(SimError::Config("tracking bandwidth must be > 0".into()));
        }
        if !self.lock_point_drift.is_finite() {
            return Err(SimError::Config("lock point drift must be finite".into()));
        }
        if self.m < 1 {
            return Err(CombError::InvalidHarmonic(self.m).into());
        }
        let steps_per_gate = integer_ratio(
            self.gate * self.loop_laser.update_rate,
            "gate × laser update rate",
        )?;
        let substeps = integer_ratio(
            self.loop_comb.update_rate / self.loop_laser.update_rate,
            "comb / laser update rate ratio",
        )?;
        let gates = (self.duration / self.gate + 1e-9).floor() as usize;
        let dt_laser = 1.0 / self.loop_laser.update_rate;
        Ok(Timing {
            gates,
            steps_per_gate,
            substeps,
            dt_laser,
            dt_comb: dt_laser / substeps as f64,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.timing().map(|_| ())
    }

    /// Same scenario with a different carrier-envelope offset.
    pub fn with_offset(&self, f_offset: ExactFrequency) -> Result<Self, SimError> {
        Ok(Self {
            comb: self.comb.with_offset(f_offset)?,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockReport {
    pub locked: bool,
    /// Time after which the laser stayed within `hwhm / 100` of the lock point, s.
    pub acquisition_time: f64,
    /// RMS fractional laser deviation from the lock point after acquisition.
    pub residual_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockRun {
    pub series: GateSeries,
    pub report: LockReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// Laser minus lock point, Hz.
    pub detuning: f64,
    pub laser_correction: f64,
    pub error_signal: f64,
    /// Repetition-rate deviation from nominal, Hz.
    pub rep_rate_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnlockReason {
    OutsideCaptureRange { capture: f64 },
    Divergence { y: f64 },
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlockDiagnostic {
    pub time: f64,
    pub reason: UnlockReason,
    /// Most recent laser steps, oldest first.
    pub trace: Vec<TraceSample>,
}

impl std::fmt::Display for UnlockDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.reason {
            UnlockReason::OutsideCaptureRange { capture } => write!(
                f,
                "laser left the ±{capture:.1} Hz capture range for more than {UNLOCK_HOLD} s at t = {:.3} s",
                self.time
            )?,
            UnlockReason::Divergence { y } => write!(
                f,
                "gate readings diverged (|y| = {y:.3e} > {DIVERGENCE_LIMIT:e}) at t = {:.3} s",
                self.time
            )?,
            UnlockReason::NonFinite => write!(f, "non-finite loop state at t = {:.3} s", self.time)?,
        }
        for s in &self.trace {
            write!(
                f,
                "\n  t={:.4} s detuning={:.3} Hz correction={:.3} Hz error={:.4e} f_rep_offset={:.6} Hz",
                s.t, s.detuning, s.laser_correction, s.error_signal, s.rep_rate_offset
            )?;
        }
        Ok(())
    }
}

/// Runs the closed-loop clock and returns the gate record.
pub fn simulate_clock(scenario: &ClockScenario) -> Result<ClockRun, SimError> {
    let timing = scenario.timing()?;
    let line = &scenario.line;
    let slope = discriminant_slope(line, &scenario.modulation)?;
    let capture = capture_half_range(line, &scenario.modulation, 20.0 * line.hwhm)
        .unwrap_or(20.0 * line.hwhm);
    let demod = Demodulator::new(&scenario.modulation);

    // Exact beat of the lowest usable pair at the nominal rate.
    let comb = &scenario.comb;
    let q = comb.p_min();
    let beat = sfg_mode_frequency(comb, q, line.center)? - mode_frequency(comb, q + scenario.m)?;
    let beat_offset = (beat - scenario.beat_setpoint).to_hz();
    let f_nominal = comb.f_rep().to_hz();
    let m = scenario.m as f64;
    let nu = line.center.to_hz();

    let n_laser = timing.gates * timing.steps_per_gate;
    let laser_noise: Vec<f64> = generate(&scenario.laser_noise, n_laser.max(1), timing.dt_laser)?
        .values
        .into_iter()
        .map(|y| y * nu)
        .collect();
    let reference = generate(
        &scenario.reference_noise,
        timing.gates.max(1),
        scenario.gate,
    )?
    .values;

    let sigma_det = detection_noise_sigma(line, scenario.loop_laser.update_rate / 2.0)?;
    let mut det_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let drift_hz = scenario.lock_point_drift * nu;

    let mut pi_laser = PiController::new(scenario.loop_laser);
    let mut pi_comb = PiController::new(scenario.loop_comb);
    let mut tracker = TrackingFilter::zero_order_hold(scenario.tracking_bandwidth, timing.dt_comb);

    let acquire_threshold = line.hwhm / 100.0;
    let hold_steps = (UNLOCK_HOLD / timing.dt_laser).ceil() as usize;
    let mut laser_correction = 0.0;
    let mut rep_offset = 0.0;
    let mut outside = 0usize;
    let mut divergent = 0usize;
    let mut last_unacquired: Option<usize> = None;
    let mut gate_sq = Vec::with_capacity(timing.gates);
    let mut y = Vec::with_capacity(timing.gates);
    let mut trace: VecDeque<TraceSample> = VecDeque::with_capacity(TRACE_LEN);

    let unlocked = |time: f64, reason: UnlockReason, trace: &VecDeque<TraceSample>| {
        SimError::Unlocked(Box::new(UnlockDiagnostic {
            time,
            reason,
            trace: trace.iter().copied().collect(),
        }))
    };

    for (g, &r) in reference.iter().enumerate().take(timing.gates) {
        let mut rep_sum = 0.0;
        let mut sq_sum = 0.0;
        for s in 0..timing.steps_per_gate {
            let k = g * timing.steps_per_gate + s;
            let t = k as f64 * timing.dt_laser;
            let lock_shift = drift_hz * t;
            let laser = laser_noise[k] + laser_correction;
            let detuning = laser - lock_shift - line.systematic_offset;

            let noise: f64 = StandardNormal.sample(&mut det_rng);
            let signal = demod.signal(line, laser - lock_shift) + sigma_det * noise;
            laser_correction = pi_laser.step(-signal / slope, timing.dt_laser);

            if trace.len() == TRACE_LEN {
                trace.pop_front();
            }
            trace.push_back(TraceSample {
                t,
                detuning,
                laser_correction,
                error_signal: signal,
                rep_rate_offset: rep_offset,
            });
            if !(detuning.is_finite() && signal.is_finite()) {
                return Err(unlocked(t, UnlockReason::NonFinite, &trace));
            }
            if detuning.abs() > capture {
                outside += 1;
                if outside > hold_steps {
                    return Err(unlocked(
                        t,
                        UnlockReason::OutsideCaptureRange { capture },
                        &trace,
                    ));
                }
            } else {
                outside = 0;
            }
            if detuning.abs() > acquire_threshold {
                last_unacquired = Some(k);
            }
            sq_sum += (detuning / nu).powi(2);

            for _ in 0..timing.substeps {
                rep_sum += rep_offset;
                let beat_error = laser - m * rep_offset + beat_offset;
                let filtered = tracker.step(beat_error);
                rep_offset = pi_comb.step(filtered / m, timing.dt_comb);
            }
        }
        let mean_offset = rep_sum / (timing.steps_per_gate * timing.substeps) as f64;
        let reading = (mean_offset / f_nominal - r) / (1.0 + r);
        let t_end = (g + 1) as f64 * scenario.gate;
        if !reading.is_finite() {
            return Err(unlocked(t_end, UnlockReason::NonFinite, &trace));
        }
        if reading.abs() > DIVERGENCE_LIMIT {
            divergent += 1;
            if divergent >= DIVERGENCE_GATES {
                return Err(unlocked(
                    t_end,
                    UnlockReason::Divergence { y: reading },
                    &trace,
                ));
            }
        } else {
            divergent = 0;
        }
        y.push(reading);
        gate_sq.push(sq_sum);
    }

    let acquisition_time = last_unacquired.map_or(0.0, |k| (k + 1) as f64 * timing.dt_laser);
    let first_gate =
        ((acquisition_time / scenario.gate).ceil() as usize).min(timing.gates.saturating_sub(1));
    let settled = &gate_sq[first_gate..];
    let residual_rms =
        (settled.iter().sum::<f64>() / (settled.len() * timing.steps_per_gate) as f64).sqrt();
    let locked = acquisition_time < timing.gates as f64 * scenario.gate;

    Ok(ClockRun {
        series: GateSeries::new(scenario.gate, y).map_err(|e| SimError::Config(e.to_string()))?,
        report: LockReport {
            locked,
            acquisition_time,
            residual_rms,
        },
    })
}
