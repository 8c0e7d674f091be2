//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use molclock::comb::{beat_note, enumerate_beat_pairs, solve_repetition_rate};
use molclock::csvio;
use molclock::scenario::Scenario;
use molclock::servo::simulate_clock;
use molclock::spectroscopy::{absorption, demodulated_signal, scan};
use molclock::stats::{allan_deviation, AllanEstimator};
use molclock::{ExactFrequency, GateSeries, ModulationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const BASELINE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/baseline.toml");
const CAMPAIGN: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../scenarios/campaign_synthetic.csv"
);
const F_CO2_HZ: i128 = 28_412_881_552_402;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn molclock(args: &[&str]) -> Result<std::process::Output, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_molclock"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!(
            "molclock {args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    Ok(o)
}

fn baseline() -> Scenario {
    Scenario::load(BASELINE).expect("bundled scenario loads")
}

/// Overlapping two-sample deviation from the definition.
fn oracle_adev(y: &[f64], m: usize) -> f64 {
    let avg = |j: usize| y[j..j + m].iter().sum::<f64>() / m as f64;
    let n = y.len() + 1 - 2 * m;
    let s: f64 = (0..n).map(|j| (avg(j + m) - avg(j)).powi(2)).sum();
    (s / (2.0 * n as f64)).sqrt()
}

fn offset_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = baseline();
    let mut clock = s.clock_scenario().map_err(|e| e.to_string())?;
    clock.duration = 30.0;
    let laser = s.f_laser();
    let f_rep = clock.comb.f_rep();
    let reference_beat = beat_note(&clock.comb, laser, clock.m).map_err(|e| e.to_string())?;
    let reference_run = simulate_clock(&clock).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let off = ExactFrequency::from_micro_hz(rng.random_range(0..f_rep.micro_hz()));
        let shifted = clock.with_offset(off).map_err(|e| e.to_string())?;
        check(
            beat_note(&shifted.comb, laser, clock.m).ok() == Some(reference_beat),
            format!("beat moved at f_0 = {off}"),
        )?;
        let run = simulate_clock(&shifted).map_err(|e| e.to_string())?;
        let same = run.series.gate.to_bits() == reference_run.series.gate.to_bits()
            && run.series.y.len() == reference_run.series.y.len()
            && run
                .series
                .y
                .iter()
                .zip(&reference_run.series.y)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        check(same, format!("gate record changed at f_0 = {off} Hz"))?;
    }
    Ok("100 offsets, beat and 30-gate records bit-identical".into())
}

fn mode_pair_count() -> Outcome {
    let s = baseline();
    let comb = s.comb_state().map_err(|e| e.to_string())?;
    let sfg = s.sfg_config().map_err(|e| e.to_string())?;
    let pairs = enumerate_beat_pairs(&comb, s.f_laser(), &sfg, s.lock.harmonic)
        .map_err(|e| e.to_string())?;
    check(
        (499..=501).contains(&pairs.len()),
        format!("{} pairs", pairs.len()),
    )?;
    check(
        pairs.iter().all(|p| p.beat == pairs[0].beat),
        "pairs disagree on the beat",
    )?;
    Ok(format!(
        "{} pairs in 500 GHz at f_rep {} Hz",
        pairs.len(),
        comb.f_rep()
    ))
}

fn lock_equation() -> Outcome {
    let laser = ExactFrequency::from_hz(F_CO2_HZ);
    let (m, setpoint) = (28_410i64, ExactFrequency::from_mhz(200));
    let sol = solve_repetition_rate(laser, m, setpoint).map_err(|e| e.to_string())?;
    // independent integer division, nearest µHz
    let num = (F_CO2_HZ - 200_000_000) * 1_000_000;
    let want = (2 * num + i128::from(m)) / (2 * i128::from(m));
    check(
        sol.f_rep.micro_hz() == want,
        format!("f_rep {} vs {want} µHz", sol.f_rep),
    )?;
    let comb = s_comb(sol.f_rep)?;
    let beat = beat_note(&comb, laser, m).map_err(|e| e.to_string())?;
    let miss = (beat - setpoint).micro_hz().abs();
    check(
        2 * miss <= i128::from(m),
        format!("beat misses setpoint by {miss} µHz"),
    )?;
    Ok(format!(
        "f_rep {} Hz, beat {} Hz, miss {miss} µHz <= m/2",
        sol.f_rep, beat
    ))
}

fn s_comb(f_rep: ExactFrequency) -> Result<molclock::CombState, String> {
    molclock::CombState::new(f_rep, ExactFrequency::from_mhz(137), 355_000, 395_000)
        .map_err(|e| e.to_string())
}

fn lineshape() -> Outcome {
    let s = baseline();
    let line = s.line_model().map_err(|e| e.to_string())?;
    let modulation = s.modulation().map_err(|e| e.to_string())?;
    let pts = scan(&line, &modulation, -60e3, 60e3, 601).map_err(|e| e.to_string())?;
    check(
        pts[300] == (0.0, 0.0),
        format!("center sample {:?}", pts[300]),
    )?;
    let worst_odd = (0..300)
        .map(|i| (pts[i].1 + pts[600 - i].1).abs())
        .fold(0.0, f64::max);
    check(worst_odd == 0.0, format!("odd-symmetry defect {worst_odd}"))?;

    let a = line.hwhm / 50.0;
    let small = ModulationConfig {
        depth: a,
        ..modulation
    };
    let h = line.hwhm / 200.0;
    let f = |d: f64| absorption(&line, d);
    let mut worst: f64 = 0.0;
    for x in [-45e3, -17e3, -8e3, 5e3, 13e3, 30e3] {
        let d3 =
            (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h.powi(3));
        let want = a.powi(3) / 24.0 * d3;
        worst = worst.max((demodulated_signal(&line, &small, x) / want - 1.0).abs());
    }
    check(
        worst < 0.02,
        format!("small-depth mismatch {:.3}%", 100.0 * worst),
    )?;
    Ok(format!(
        "odd, zero at center; small-depth vs third derivative within {:.3}%",
        100.0 * worst
    ))
}

fn allan_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let len = rng.random_range(2..=64);
        let y: Vec<f64> = (0..len)
            .map(|_| rng.random_range(-1.0..1.0) * 1e-13)
            .collect();
        let series = GateSeries::new(1.0, y.clone()).map_err(|e| e.to_string())?;
        let taus: Vec<usize> = (1..=len / 2).collect();
        let curve = allan_deviation(&series, &taus, AllanEstimator::Overlapping)
            .map_err(|e| e.to_string())?;
        for p in &curve.points {
            let want = oracle_adev(&y, p.tau as usize);
            check(
                p.sigma == want,
                format!("trial {trial} tau {}: {} vs {want}", p.tau, p.sigma),
            )?;
        }
        let std =
            allan_deviation(&series, &taus, AllanEstimator::Standard).map_err(|e| e.to_string())?;
        for p in &std.points {
            let m = p.tau as usize;
            let means: Vec<f64> = y
                .chunks_exact(m)
                .map(|c| c.iter().sum::<f64>() / m as f64)
                .collect();
            let s: f64 = means.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            let want = (s / (2.0 * (means.len() - 1) as f64)).sqrt();
            check(p.sigma == want, format!("trial {trial} standard tau {m}"))?;
        }
    }
    let d = 2.8e-16;
    let ramp = GateSeries::new(1.0, (0..4000).map(|k| d * k as f64).collect())
        .map_err(|e| e.to_string())?;
    let curve = allan_deviation(&ramp, &[1, 10, 30, 100, 1000], AllanEstimator::Standard)
        .map_err(|e| e.to_string())?;
    for p in &curve.points {
        let want = d * p.tau / 2f64.sqrt();
        check(
            (p.sigma / want - 1.0).abs() < 0.01,
            format!("drift tau {}: {} vs {want}", p.tau, p.sigma),
        )?;
    }
    Ok("1000 random series equal the brute-force oracle; drift gives D·τ/√2".into())
}

fn stability_curve(dir: &Path) -> Outcome {
    let gates = dir.join("gates.csv");
    let o = molclock(&[
        "simulate",
        "--scenario",
        BASELINE,
        "--out",
        gates.to_str().unwrap(),
    ])?;
    let log = String::from_utf8_lossy(&o.stderr).into_owned();
    check(log.contains("locked=true"), format!("not locked: {log}"))?;
    let series = csvio::read_gate_series(fs::File::open(&gates).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    check(series.len() == 4000, format!("{} gates", series.len()))?;
    let grid = [1usize, 2, 5, 10, 20, 50, 100, 200, 500, 1000];
    let sig: Vec<f64> = grid.iter().map(|&m| oracle_adev(&series.y, m)).collect();
    let at1 = sig[0];
    check(
        (1.5e-14..=6e-14).contains(&at1),
        format!("Allan(1 s) = {at1:.3e}"),
    )?;
    let (imin, _) =
        sig.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc },
        );
    let tau_min = grid[imin];
    check(
        (10..=100).contains(&tau_min),
        format!("minimum at {tau_min} s"),
    )?;
    let slope = (sig[9] / sig[6]).log10();
    check(
        (0.7..=1.3).contains(&slope),
        format!("slope over 100-1000 s = {slope:.2}"),
    )?;
    Ok(format!(
        "Allan(1 s) = {at1:.2e}, minimum {:.2e} at {tau_min} s, slope {slope:.2} over 100-1000 s",
        sig[imin]
    ))
}

fn campaign(dir: &Path) -> Outcome {
    let report = dir.join("report.csv");
    molclock(&[
        "campaign",
        CAMPAIGN,
        "--reference-hz",
        "28412881.6e6",
        "--reference-sigma-hz",
        "1.0e6",
        "--out",
        report.to_str().unwrap(),
    ])?;
    let r = csvio::read_campaign_report(fs::File::open(&report).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let st = &r.stats;
    let centre = ExactFrequency::from_hz(F_CO2_HZ);
    let tol = 44.0 / (st.n as f64).sqrt();
    let off = (st.mean - centre).to_hz();
    check(
        off.abs() <= tol,
        format!("mean off by {off} Hz (tolerance {tol:.2})"),
    )?;
    let sigma = st.sigma.ok_or("no spread reported")?;
    let gap = st.scheme_gap.ok_or("no scheme gap reported")?;
    check(gap < 2.0, format!("scheme gap {gap} Hz"))?;
    let frac = r
        .fractional_uncertainty
        .ok_or("no fractional uncertainty")?;
    check(
        (frac / 1.5e-12 - 1.0).abs() < 0.05,
        format!("fractional uncertainty {frac:.3e}"),
    )?;
    let c = r.consistency.ok_or("no consistency result")?;
    check(c.consistent, format!("inconsistent, pull {}", c.pull))?;
    Ok(format!(
        "n {}, mean {} Hz, σ {sigma:.1} Hz, gap {gap} Hz, σ/f {frac:.3e}, pull {:.4}",
        st.n, st.mean, c.pull
    ))
}

fn determinism(dir: &Path) -> Outcome {
    let runs: [(&str, Vec<&str>); 4] = [
        (
            "gates",
            vec!["simulate", "--scenario", BASELINE, "--seed", "77"],
        ),
        ("beatmap", vec!["beatmap", "--scenario", BASELINE]),
        ("scan", vec!["scan", "--scenario", BASELINE]),
        ("campaign", vec!["campaign", CAMPAIGN]),
    ];
    for (name, args) in &runs {
        let mut bytes = Vec::new();
        for k in 0..2 {
            let out = dir.join(format!("{name}-{k}.csv"));
            let mut a = args.clone();
            a.extend(["--out", out.to_str().unwrap()]);
            molclock(&a)?;
            bytes.push(fs::read(&out).map_err(|e| e.to_string())?);
        }
        check(
            bytes[0] == bytes[1],
            format!("{name} output differs between runs"),
        )?;
        if *name == "gates" {
            let allan: Vec<Vec<u8>> = (0..2)
                .map(|k| {
                    let src = dir.join(format!("gates-{k}.csv"));
                    molclock(&["allan", src.to_str().unwrap(), "--estimator", "overlapping"])
                        .map(|o| o.stdout)
                })
                .collect::<Result<_, _>>()?;
            check(allan[0] == allan[1], "allan output differs between runs")?;
        }
    }
    Ok("simulate, allan, beatmap, scan and campaign outputs byte-identical across runs".into())
}

fn main() -> ExitCode {
    let dir = TempDir::new().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("1 offset independence", Box::new(offset_independence)),
        ("2 mode-pair count", Box::new(mode_pair_count)),
        ("3 lock equation", Box::new(lock_equation)),
        ("4 3f lineshape", Box::new(lineshape)),
        ("5 Allan estimator", Box::new(allan_correctness)),
        (
            "6 stability curve",
            Box::new(|| stability_curve(dir.path())),
        ),
        ("7 campaign statistics", Box::new(|| campaign(dir.path()))),
        ("8 determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1} s): {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
