//! Comb bookkeeping: mode frequencies, the sum-frequency comb, offset-free
//! beat notes, mode-pair enumeration and the SFG power budget.
//!
//! Every frequency here is an [`ExactFrequency`]. The carrier-envelope
//! offset appears in both `mode_frequency` and `sfg_mode_frequency` and
//! cancels exactly in their difference, which is why nothing downstream of
//! the beat note depends on it.

use thiserror::Error;

use crate::frequency::ExactFrequency;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CombError {
    #[error("repetition rate must be positive, got {0} Hz")]
    NonPositiveRepetitionRate(ExactFrequency),
    #[error("offset {offset} Hz outside [0, f_rep = {f_rep} Hz)")]
    OffsetOutOfRange {
        offset: ExactFrequency,
        f_rep: ExactFrequency,
    },
    #[error("mode range [{p_min}, {p_max}] must satisfy 0 <= p_min < p_max")]
    InvalidModeRange { p_min: i64, p_max: i64 },
    #[error("mode index {p} outside emitted range [{p_min}, {p_max}]")]
    ModeOutOfRange { p: i64, p_min: i64, p_max: i64 },
    #[error("harmonic index must be >= 1, got {0}")]
    InvalidHarmonic(i64),
    #[error("beat band [{lo}, {hi}] Hz must lie inside (0, f_rep = {f_rep} Hz)")]
    InvalidBeatBand {
        lo: ExactFrequency,
        hi: ExactFrequency,
        f_rep: ExactFrequency,
    },
    #[error("no harmonic m >= 1 yields a beat below f_rep for f_laser = {0} Hz")]
    NoHarmonic(ExactFrequency),
    #[error("repetition rate solution {f_rep} Hz is not positive or does not exceed the setpoint {setpoint} Hz")]
    InfeasibleRepetitionRate {
        f_rep: ExactFrequency,
        setpoint: ExactFrequency,
    },
    #[error("invalid SFG configuration: {0}")]
    InvalidSfg(&'static str),
}

/// Repetition rate, carrier-envelope offset and the emitted mode range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CombState {
    f_rep: ExactFrequency,
    f_offset: ExactFrequency,
    p_min: i64,
    p_max: i64,
}

impl CombState {
    pub fn new(
        f_rep: ExactFrequency,
        f_offset: ExactFrequency,
        p_min: i64,
        p_max: i64,
    ) -> Result<Self, CombError> {
        if !f_rep.is_positive() {
            return Err(CombError::NonPositiveRepetitionRate(f_rep));
        }
        if f_offset.is_negative() || f_offset >= f_rep {
            return Err(CombError::OffsetOutOfRange {
                offset: f_offset,
                f_rep,
            });
        }
        if p_min < 0 || p_min >= p_max {
            return Err(CombError::InvalidModeRange { p_min, p_max });
        }
        Ok(Self {
            f_rep,
            f_offset,
            p_min,
            p_max,
        })
    }

    pub fn f_rep(&self) -> ExactFrequency {
        self.f_rep
    }

    pub fn f_offset(&self) -> ExactFrequency {
        self.f_offset
    }

    pub fn p_min(&self) -> i64 {
        self.p_min
    }

    pub fn p_max(&self) -> i64 {
        self.p_max
    }

    /// Same comb with a different carrier-envelope offset.
    pub fn with_offset(&self, f_offset: ExactFrequency) -> Result<Self, CombError> {
        Self::new(self.f_rep, f_offset, self.p_min, self.p_max)
    }

    /// Same comb with a different repetition rate.
    pub fn with_rep_rate(&self, f_rep: ExactFrequency) -> Result<Self, CombError> {
        Self::new(f_rep, self.f_offset, self.p_min, self.p_max)
    }

    fn check_index(&self, p: i64) -> Result<(), CombError> {
        if p < self.p_min || p > self.p_max {
            return Err(CombError::ModeOutOfRange {
                p,
                p_min: self.p_min,
                p_max: self.p_max,
            });
        }
        Ok(())
    }
}

/// Sum-frequency generation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfgConfig {
    /// Conversion efficiency in W⁻¹ (0.5 mW/W² is `5e-4`).
    pub efficiency: f64,
    /// Femtosecond laser power in the crystal, W.
    pub p_fs: f64,
    /// CW laser power in the crystal, W.
    pub p_co2: f64,
    pub pm_center: ExactFrequency,
    pub pm_bandwidth: ExactFrequency,
}

impl SfgConfig {
    pub fn validate(&self) -> Result<(), CombError> {
        if !(self.efficiency >= 0.0 && self.efficiency.is_finite()) {
            return Err(CombError::InvalidSfg("efficiency must be >= 0"));
        }
        if !(self.p_fs >= 0.0
            && self.p_co2 >= 0.0
            && self.p_fs.is_finite()
            && self.p_co2.is_finite())
        {
            return Err(CombError::InvalidSfg("powers must be >= 0"));
        }
        if !self.pm_bandwidth.is_positive() {
            return Err(CombError::InvalidSfg(
                "phase-matching bandwidth must be > 0",
            ));
        }
        Ok(())
    }
}

/// `p * f_rep + f_offset`.
pub fn mode_frequency(comb: &CombState, p: i64) -> Result<ExactFrequency, CombError> {
    comb.check_index(p)?;
    Ok(comb.f_rep * i128::from(p) + comb.f_offset)
}

/// Mode `q` of the sum-frequency comb: `q * f_rep + f_offset + f_laser`.
pub fn sfg_mode_frequency(
    comb: &CombState,
    q: i64,
    f_laser: ExactFrequency,
) -> Result<ExactFrequency, CombError> {
    Ok(mode_frequency(comb, q)? + f_laser)
}

/// Signed low-frequency beat `f_laser - m * f_rep`.
///
/// The carrier-envelope offset does not enter.
pub fn beat_note(
    comb: &CombState,
    f_laser: ExactFrequency,
    m: i64,
) -> Result<ExactFrequency, CombError> {
    if m < 1 {
        return Err(CombError::InvalidHarmonic(m));
    }
    Ok(f_laser - comb.f_rep * i128::from(m))
}

/// One (SFG mode, comb mode) pair contributing to the detected beat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModePair {
    pub q: i64,
    pub p: i64,
    pub sfg: ExactFrequency,
    pub mode: ExactFrequency,
    pub beat: ExactFrequency,
}

/// All pairs `(q, q + m)` whose SFG mode falls inside the phase-matching
/// window `pm_center ± pm_bandwidth / 2` (closed), with both indices in the
/// emitted range. An empty window gives an empty list.
pub fn enumerate_beat_pairs(
    comb: &CombState,
    f_laser: ExactFrequency,
    sfg: &SfgConfig,
    m: i64,
) -> Result<Vec<ModePair>, CombError> {
    if m < 1 {
        return Err(CombError::InvalidHarmonic(m));
    }
    sfg.validate()?;
    // Window edges; for an odd µHz bandwidth the upper half gets the extra µHz.
    let half_lo = ExactFrequency::from_micro_hz(sfg.pm_bandwidth.micro_hz() / 2);
    let lo = sfg.pm_center - half_lo;
    let hi = lo + sfg.pm_bandwidth;
    let base = comb.f_offset + f_laser;
    let q_lo = (lo - base).div_ceil(comb.f_rep).max(i128::from(comb.p_min));
    let q_hi = (hi - base)
        .div_floor(comb.f_rep)
        .min(i128::from(comb.p_max) - i128::from(m));
    if q_lo > q_hi {
        return Ok(Vec::new());
    }
    (q_lo..=q_hi)
        .map(|q| {
            let q = q as i64;
            let p = q + m;
            let sfg_f = sfg_mode_frequency(comb, q, f_laser)?;
            let mode = mode_frequency(comb, p)?;
            Ok(ModePair {
                q,
                p,
                sfg: sfg_f,
                mode,
                beat: sfg_f - mode,
            })
        })
        .collect()
}

/// Result of [`harmonic_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarmonicMatch {
    pub m: i64,
    pub beat: ExactFrequency,
    /// `false` when no harmonic puts the beat inside the band; `m` is then
    /// the harmonic whose beat is nearest to the band.
    pub in_band: bool,
}

/// Finds the harmonic `m` with `f_laser - m * f_rep` inside `beat_band`.
///
/// The band must lie inside `(0, f_rep)`, so at most one harmonic can match.
pub fn harmonic_index(
    f_laser: ExactFrequency,
    f_rep: ExactFrequency,
    beat_band: (ExactFrequency, ExactFrequency),
) -> Result<HarmonicMatch, CombError> {
    let (lo, hi) = beat_band;
    if !f_rep.is_positive() {
        return Err(CombError::NonPositiveRepetitionRate(f_rep));
    }
    if !lo.is_positive() || hi >= f_rep || lo > hi {
        return Err(CombError::InvalidBeatBand { lo, hi, f_rep });
    }
    let m0 = f_laser.div_floor(f_rep);
    if m0 < 1 {
        return Err(CombError::NoHarmonic(f_laser));
    }
    let beat0 = f_laser.rem_floor(f_rep);
    if beat0 >= lo && beat0 <= hi {
        return Ok(HarmonicMatch {
            m: m0 as i64,
            beat: beat0,
            in_band: true,
        });
    }
    let distance = |b: ExactFrequency| {
        if b < lo {
            lo - b
        } else if b > hi {
            b - hi
        } else {
            ExactFrequency::ZERO
        }
    };
    // Candidates m0 - 1, m0, m0 + 1; ties go to the smallest |beat|.
    let best = [m0 - 1, m0, m0 + 1]
        .into_iter()
        .filter(|&m| m >= 1)
        .map(|m| (m, f_laser - f_rep * m))
        .min_by_key(|&(_, b)| (distance(b), b.abs()))
        .expect("m0 >= 1 is always a candidate");
    Ok(HarmonicMatch {
        m: best.0 as i64,
        beat: best.1,
        in_band: false,
    })
}

/// Repetition rate locking harmonic `m` at the given beat setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepRateSolution {
    pub f_rep: ExactFrequency,
    /// `f_laser - setpoint - m * f_rep`; bounded by `m / 2` µHz.
    pub residual: ExactFrequency,
}

/// `f_rep = (f_laser - beat_setpoint) / m`, rounded to the nearest µHz.
pub fn solve_repetition_rate(
    f_laser: ExactFrequency,
    m: i64,
    beat_setpoint: ExactFrequency,
) -> Result<RepRateSolution, CombError> {
    if m < 1 {
        return Err(CombError::InvalidHarmonic(m));
    }
    let (f_rep, residual) = (f_laser - beat_setpoint).div_round(i128::from(m));
    if !f_rep.is_positive() || beat_setpoint.is_negative() || beat_setpoint >= f_rep {
        return Err(CombError::InfeasibleRepetitionRate {
            f_rep,
            setpoint: beat_setpoint,
        });
    }
    Ok(RepRateSolution { f_rep, residual })
}

/// Generated sum-frequency power in watts (`efficiency * p_fs * p_co2`).
pub fn sfg_power(sfg: &SfgConfig) -> f64 {
    sfg.efficiency * sfg.p_fs * sfg.p_co2
}
