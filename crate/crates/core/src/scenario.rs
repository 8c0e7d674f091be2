//! TOML scenario files.
//!
//! Every key carries its unit (`_hz`, `_s`, `_w`, `_per_s`); unknown keys
//! are rejected. See `scenarios/baseline.toml` for a complete example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comb::{solve_repetition_rate, CombError, CombState, SfgConfig};
use crate::frequency::ExactFrequency;
use crate::noise::{link_profile, reference_profile, NoiseError, NoiseSpec};
use crate::servo::{ClockScenario, PiConfig, TRACKING_BANDWIDTH};
use crate::spectroscopy::{
    optimal_depth, LineModel, ModulationConfig, SpectroscopyError, DEFAULT_SAMPLES_PER_CYCLE,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Comb(#[from] CombError),
    #[error(transparent)]
    Spectroscopy(#[from] SpectroscopyError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub comb: CombSection,
    pub sfg: SfgSection,
    pub lock: LockSection,
    pub line: LineSection,
    pub modulation: ModulationSection,
    pub noise: NoiseSection,
    pub servo: ServoSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombSection {
    /// Solved from the laser frequency, harmonic and setpoint when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_rep_hz: Option<ExactFrequency>,
    pub f_offset_hz: ExactFrequency,
    pub p_min: i64,
    pub p_max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfgSection {
    pub efficiency_per_w: f64,
    pub p_fs_w: f64,
    pub p_co2_w: f64,
    pub pm_center_hz: ExactFrequency,
    pub pm_bandwidth_hz: ExactFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockSection {
    pub harmonic: i64,
    pub beat_setpoint_hz: ExactFrequency,
    /// `[lo, hi]` accepted by the tracking oscillator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beat_band_hz: Option<[ExactFrequency; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSection {
    pub center_hz: ExactFrequency,
    pub hwhm_hz: f64,
    pub amplitude: f64,
    pub snr: f64,
    pub snr_bandwidth_hz: f64,
    #[serde(default)]
    pub systematic_offset_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSection {
    /// Optimal depth for the harmonic when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_hz: Option<f64>,
    pub rate_hz: f64,
    pub harmonic: u32,
    #[serde(default = "default_samples_per_cycle")]
    pub samples_per_cycle: usize,
}

fn default_samples_per_cycle() -> usize {
    DEFAULT_SAMPLES_PER_CYCLE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseProfile {
    Reference,
    Link,
    #[default]
    None,
}

/// A preset plus per-coefficient overrides, fractional-frequency units.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    #[serde(default)]
    pub profile: NoiseProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_m1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_p2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_rate_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

impl NoiseEntry {
    pub fn to_spec(&self, seed: u64) -> Result<NoiseSpec, NoiseError> {
        let mut spec = match self.profile {
            NoiseProfile::Reference => reference_profile(),
            NoiseProfile::Link => link_profile(),
            NoiseProfile::None => NoiseSpec::default(),
        }
        .with_seed(seed);
        let overrides = [
            (-2, self.h_m2),
            (-1, self.h_m1),
            (0, self.h_0),
            (1, self.h_p1),
            (2, self.h_p2),
        ];
        for (alpha, h) in overrides {
            if let Some(h) = h {
                spec.set_h(alpha, h)?;
            }
        }
        if let Some(d) = self.drift_rate_per_s {
            spec.drift_rate = d;
        }
        if let Some(o) = self.offset {
            spec.offset = o;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Free-running laser.
    #[serde(default)]
    pub laser: NoiseEntry,
    /// Counter reference.
    #[serde(default)]
    pub reference: NoiseEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSection {
    pub k_p: f64,
    pub k_i_per_s: f64,
    pub output_limit_hz: f64,
    pub update_rate_hz: f64,
}

impl From<LoopSection> for PiConfig {
    fn from(s: LoopSection) -> Self {
        PiConfig {
            k_p: s.k_p,
            k_i: s.k_i_per_s,
            output_limit: s.output_limit_hz,
            update_rate: s.update_rate_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoSection {
    pub laser: LoopSection,
    pub comb: LoopSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub duration_s: f64,
    pub gate_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub lock_point_drift_per_s: f64,
    #[serde(default = "default_tracking_bandwidth")]
    pub tracking_bandwidth_hz: f64,
}

fn default_tracking_bandwidth() -> f64 {
    TRACKING_BANDWIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub min_hz: f64,
    pub max_hz: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beatmap: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allan: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign: Option<PathBuf>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Replaces the run seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    /// Laser, reference and detection seeds.
    pub fn seeds(&self) -> (u64, u64, u64) {
        let s = self.run.seed;
        (s, s.wrapping_add(1), s.wrapping_add(2))
    }

    pub fn f_laser(&self) -> ExactFrequency {
        self.line.center_hz
    }

    /// Configured or solved repetition rate.
    pub fn f_rep(&self) -> Result<ExactFrequency, ScenarioError> {
        match self.comb.f_rep_hz {
            Some(f) => Ok(f),
            None => Ok(solve_repetition_rate(
                self.f_laser(),
                self.lock.harmonic,
                self.lock.beat_setpoint_hz,
            )?
            .f_rep),
        }
    }

    pub fn comb_state(&self) -> Result<CombState, ScenarioError> {
        Ok(CombState::new(
            self.f_rep()?,
            self.comb.f_offset_hz,
            self.comb.p_min,
            self.comb.p_max,
        )?)
    }

    pub fn sfg_config(&self) -> Result<SfgConfig, ScenarioError> {
        let s = &self.sfg;
        let cfg = SfgConfig {
            efficiency: s.efficiency_per_w,
            p_fs: s.p_fs_w,
            p_co2: s.p_co2_w,
            pm_center: s.pm_center_hz,
            pm_bandwidth: s.pm_bandwidth_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn line_model(&self) -> Result<LineModel, ScenarioError> {
        let l = &self.line;
        let line = LineModel {
            center: l.center_hz,
            hwhm: l.hwhm_hz,
            amplitude: l.amplitude,
            snr: l.snr,
            snr_bandwidth: l.snr_bandwidth_hz,
            systematic_offset: l.systematic_offset_hz,
        };
        line.validate()?;
        Ok(line)
    }

    pub fn modulation(&self) -> Result<ModulationConfig, ScenarioError> {
        let m = &self.modulation;
        let depth = match m.depth_hz {
            Some(d) => d,
            None => optimal_depth(&self.line_model()?, m.harmonic.max(1), m.samples_per_cycle),
        };
        let cfg = ModulationConfig {
            depth,
            rate: m.rate_hz,
            harmonic: m.harmonic,
            samples_per_cycle: m.samples_per_cycle,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Beat band, if configured, after checking it contains the setpoint.
    pub fn beat_band(&self) -> Result<Option<(ExactFrequency, ExactFrequency)>, ScenarioError> {
        let Some([lo, hi]) = self.lock.beat_band_hz else {
            return Ok(None);
        };
        let sp = self.lock.beat_setpoint_hz;
        if lo > hi || sp < lo || sp > hi {
            return Err(ScenarioError::Invalid(format!(
                "beat setpoint {sp} Hz outside beat band [{lo}, {hi}] Hz"
            )));
        }
        Ok(Some((lo, hi)))
    }

    pub fn clock_scenario(&self) -> Result<ClockScenario, ScenarioError> {
        let (laser_seed, reference_seed, detection_seed) = self.seeds();
        self.beat_band()?;
        let run = &self.run;
        if !(run.gate_s > 0.0 && run.duration_s >= run.gate_s) {
            return Err(ScenarioError::Invalid(
                "run needs duration_s >= gate_s > 0".into(),
            ));
        }
        Ok(ClockScenario {
            line: self.line_model()?,
            modulation: self.modulation()?,
            comb: self.comb_state()?,
            m: self.lock.harmonic,
            beat_setpoint: self.lock.beat_setpoint_hz,
            laser_noise: self.noise.laser.to_spec(laser_seed)?,
            reference_noise: self.noise.reference.to_spec(reference_seed)?,
            loop_laser: self.servo.laser.into(),
            loop_comb: self.servo.comb.into(),
            lock_point_drift: run.lock_point_drift_per_s,
            tracking_bandwidth: run.tracking_bandwidth_hz,
            seed: detection_seed,
            duration: run.duration_s,
            gate: run.gate_s,
        })
    }
}
