//! `molclock` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 unlock.
//! Data (or the path written) goes to stdout, diagnostics to stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use molclock::comb::{enumerate_beat_pairs, harmonic_index, sfg_power};
use molclock::csvio::{self, CampaignReport, CsvError};
use molclock::scenario::{Scenario, ScenarioError};
use molclock::servo::{simulate_clock, SimError};
use molclock::spectroscopy::{capture_half_range, discriminant_slope, scan, ModulationConfig};
use molclock::stats::{
    allan_deviation, campaign_stats, consistency_check, default_taus, fit_drift,
    fractional_uncertainty, AllanEstimator, StatsError,
};
use molclock::ExactFrequency;

#[derive(Parser)]
#[command(
    name = "molclock",
    version,
    about = "Offset-free comb molecular clock simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the (q, p) mode pairs inside the phase-matching window.
    Beatmap {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Demodulated error signal across the line.
    Scan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        min_hz: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        max_hz: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Demodulation harmonic, overriding the scenario.
        #[arg(long)]
        harmonic: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the closed-loop clock and write the gate record.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Allan deviation of a gate record.
    Allan {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Estimator::Standard)]
        estimator: Estimator,
        #[arg(long)]
        remove_drift: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Statistics of a measurement campaign.
    Campaign {
        input: PathBuf,
        #[arg(long, requires = "reference_sigma_hz")]
        reference_hz: Option<ExactFrequency>,
        #[arg(long, requires = "reference_hz")]
        reference_sigma_hz: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Standard,
    Overlapping,
}

impl From<Estimator> for AllanEstimator {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Standard => AllanEstimator::Standard,
            Estimator::Overlapping => AllanEstimator::Overlapping,
        }
    }
}

enum Failure {
    Config(String),
    Unlock(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Unlock(msg)) => {
            eprintln!("unlock: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Writes to `out`, or the scenario's default path, or stdout. Prints the
/// path when a file is written.
fn emit(
    out: Option<PathBuf>,
    fallback: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> Result<(), CsvError>,
) -> Result<(), Failure> {
    match out.or_else(|| fallback.map(Path::to_path_buf)) {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
            }
            let file = File::create(&path)
                .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
            println!("{}", path.display());
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    Scenario::load(path)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Beatmap { scenario, out } => {
            let s = load(&scenario)?;
            let comb = s.comb_state()?;
            let sfg = s.sfg_config()?;
            let f_laser = s.f_laser();
            let pairs = enumerate_beat_pairs(&comb, f_laser, &sfg, s.lock.harmonic)?;
            if let Some(band) = s.beat_band()? {
                let h = harmonic_index(f_laser, comb.f_rep(), band)?;
                if h.m != s.lock.harmonic || !h.in_band {
                    eprintln!(
                        "warning: nearest in-band harmonic is m = {} (beat {} Hz, in band: {})",
                        h.m, h.beat, h.in_band
                    );
                }
            }
            if pairs.is_empty() {
                eprintln!("warning: no mode pairs inside the phase-matching window");
            } else {
                eprintln!(
                    "{} pairs, beat {} Hz, f_rep {} Hz, SFG power {:.3e} W",
                    pairs.len(),
                    pairs[0].beat,
                    comb.f_rep(),
                    sfg_power(&sfg)
                );
            }
            emit(out, s.output.beatmap.as_deref(), |w| {
                csvio::write_beatmap(w, &pairs)
            })
        }
        Command::Scan {
            scenario,
            min_hz,
            max_hz,
            points,
            harmonic,
            out,
        } => {
            let s = load(&scenario)?;
            let line = s.line_model()?;
            let mut modulation = s.modulation()?;
            if let Some(n) = harmonic {
                modulation = ModulationConfig {
                    harmonic: n,
                    samples_per_cycle: modulation.samples_per_cycle.max(16 * n as usize),
                    ..modulation
                };
                modulation.validate()?;
            }
            let (lo, hi, n) = match (&s.scan, min_hz, max_hz, points) {
                (_, Some(lo), Some(hi), Some(n)) => (lo, hi, n),
                (Some(sc), lo, hi, n) => (
                    lo.unwrap_or(sc.min_hz),
                    hi.unwrap_or(sc.max_hz),
                    n.unwrap_or(sc.points),
                ),
                (None, ..) => return Err(Failure::Config(
                    "scan range missing: give --min-hz, --max-hz and --points or a [scan] section"
                        .into(),
                )),
            };
            let data = scan(&line, &modulation, lo, hi, n)?;
            eprintln!(
                "depth {:.3} Hz, harmonic {}",
                modulation.depth, modulation.harmonic
            );
            emit(out, s.output.scan.as_deref(), |w| {
                csvio::write_scan(w, &data)
            })
        }
        Command::Simulate {
            scenario,
            seed,
            out,
        } => {
            let mut s = load(&scenario)?;
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            let clock = s.clock_scenario()?;
            let slope = discriminant_slope(&clock.line, &clock.modulation)?;
            let capture =
                capture_half_range(&clock.line, &clock.modulation, 20.0 * clock.line.hwhm);
            eprintln!(
                "f_rep {} Hz, depth {:.1} Hz, slope {:.4e} /Hz, capture ±{} Hz",
                clock.comb.f_rep(),
                clock.modulation.depth,
                slope,
                capture.map_or("?".to_string(), |c| format!("{c:.0}"))
            );
            let run = match simulate_clock(&clock) {
                Ok(run) => run,
                Err(SimError::Unlocked(diag)) => return Err(Failure::Unlock(diag.to_string())),
                Err(e) => return Err(e.into()),
            };
            let r = &run.report;
            eprintln!(
                "locked={} acquisition_time_s={} residual_rms={:e}",
                r.locked, r.acquisition_time, r.residual_rms
            );
            emit(out, s.output.gates.as_deref(), |w| {
                csvio::write_gate_series(w, &run.series)
            })
        }
        Command::Allan {
            input,
            estimator,
            remove_drift,
            out,
        } => {
            let mut series = csvio::read_gate_series(open(&input)?)?;
            if remove_drift {
                let fit = fit_drift(&series)?;
                eprintln!("drift {:e} ± {:e} /s removed", fit.rate, fit.rate_std_error);
                series = fit.removed;
            }
            let curve = allan_deviation(&series, &default_taus(series.len()), estimator.into())?;
            if !curve.omitted.is_empty() {
                eprintln!("warning: tau omitted for lack of data: {:?}", curve.omitted);
            }
            emit(out, None, |w| csvio::write_allan_curve(w, &curve))
        }
        Command::Campaign {
            input,
            reference_hz,
            reference_sigma_hz,
            out,
        } => {
            let campaign = csvio::read_campaign(open(&input)?)?;
            let stats = campaign_stats(&campaign);
            let fractional = stats
                .sigma
                .map(|s| fractional_uncertainty(s, stats.mean))
                .transpose()?;
            let reference = reference_hz.zip(reference_sigma_hz);
            let consistency = reference
                .map(|(f, u)| consistency_check(stats.mean, f, u))
                .transpose()
                .map_err(|e: StatsError| Failure::Config(e.to_string()))?;
            let report = CampaignReport {
                stats,
                fractional_uncertainty: fractional,
                reference,
                consistency,
            };
            emit(out, None, |w| csvio::write_campaign_report(w, &report))
        }
    }
}
