use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use molclock::csvio;
use tempfile::TempDir;

const BASELINE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/baseline.toml");
const CAMPAIGN: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../scenarios/campaign_synthetic.csv"
);

fn molclock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molclock"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes the baseline scenario with textual replacements applied.
fn variant(dir: &TempDir, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = fs::read_to_string(BASELINE).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "`{from}` not in scenario");
        text = text.replacen(from, to, 1);
    }
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn beatmap_baseline_defaults() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("beats.csv");
    let o = molclock(&["beatmap", "--scenario", BASELINE, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), s(&out));
    let pairs = csvio::read_beatmap(fs::File::open(&out).unwrap()).unwrap();
    assert!((499..=501).contains(&pairs.len()), "{}", pairs.len());
    assert!(pairs.iter().all(|p| p.beat == pairs[0].beat));
}

#[test]
fn beatmap_narrow_and_empty_windows() {
    let dir = TempDir::new().unwrap();
    let all = molclock(&["beatmap", "--scenario", BASELINE]);
    let pairs = csvio::read_beatmap(all.stdout.as_slice()).unwrap();
    let centre = pairs[10].sfg.to_string();

    let narrow = variant(
        &dir,
        "narrow.toml",
        &[
            (
                "pm_center_hz = 388.5e12",
                &format!("pm_center_hz = \"{centre}\""),
            ),
            ("pm_bandwidth_hz = 500e9", "pm_bandwidth_hz = 1000"),
        ],
    );
    let o = molclock(&["beatmap", "--scenario", s(&narrow)]);
    assert_eq!(code(&o), 0);
    assert_eq!(csvio::read_beatmap(o.stdout.as_slice()).unwrap().len(), 1);

    let empty = variant(
        &dir,
        "empty.toml",
        &[("pm_center_hz = 388.5e12", "pm_center_hz = 1e12")],
    );
    let o = molclock(&["beatmap", "--scenario", s(&empty)]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "q,p,sfg_hz,mode_hz,beat_hz\n"
    );
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let unknown = variant(
        &dir,
        "unknown.toml",
        &[("gate_s = 1", "gate_s = 1\ngate_ms = 1000")],
    );
    for args in [
        vec!["simulate", "--scenario", s(&unknown)],
        vec!["beatmap", "--scenario", "/nonexistent/scenario.toml"],
        vec!["allan", "/nonexistent/gates.csv"],
        vec!["campaign", BASELINE],
        vec!["simulate", "--scenario", BASELINE, "--seed", "-4"],
    ] {
        let o = molclock(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn scan_is_odd_with_central_zero() {
    let o = molclock(&["scan", "--scenario", BASELINE]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pts = csvio::read_scan(o.stdout.as_slice()).unwrap();
    assert_eq!(pts.len(), 601);
    assert_eq!(pts[300], (0.0, 0.0));
    for i in 0..300 {
        assert_eq!(pts[i].0, -pts[600 - i].0);
        assert_eq!(pts[i].1, -pts[600 - i].1);
    }
    let o = molclock(&[
        "scan",
        "--scenario",
        BASELINE,
        "--harmonic",
        "1",
        "--min-hz",
        "-60000",
        "--max-hz",
        "60000",
        "--points",
        "121",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pts = csvio::read_scan(o.stdout.as_slice()).unwrap();
    assert!(pts[0].1 > 0.0 && pts[120].1 < 0.0);
}

#[test]
fn noiseless_simulation_is_all_zero() {
    let dir = TempDir::new().unwrap();
    // setpoint equal to the beat at the configured rate
    let sc = variant(
        &dir,
        "quiet.toml",
        &[
            (
                "f_offset_hz = 137e6",
                "f_rep_hz = 1000000000\nf_offset_hz = 137e6",
            ),
            ("beat_setpoint_hz = 200e6", "beat_setpoint_hz = 881552402"),
            ("beat_band_hz = [100e6, 300e6]", ""),
            ("h_0 = 1e-27", ""),
            ("drift_rate_per_s = 1e-12", ""),
            ("profile = \"reference\"", "profile = \"none\""),
            ("snr = 1000", "snr = inf"),
            ("duration_s = 4000", "duration_s = 10"),
            (
                "lock_point_drift_per_s = 2.8e-16",
                "lock_point_drift_per_s = 0",
            ),
            ("harmonic = 28410", "harmonic = 28412"),
        ],
    );
    let out = dir.path().join("g.csv");
    let o = molclock(&["simulate", "--scenario", s(&sc), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("locked=true"));
    let g = csvio::read_gate_series(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(g.len(), 10);
    assert!(g.y.iter().all(|y| (y * 1e9).abs() < 1e-6), "{:?}", g.y);
}

#[test]
fn zero_gain_exits_3_with_trace() {
    let dir = TempDir::new().unwrap();
    let sc = variant(
        &dir,
        "open.toml",
        &[
            ("k_p = 0.2", "k_p = 0"),
            ("k_i_per_s = 200\n", "k_i_per_s = 0\n"),
        ],
    );
    let out = dir.path().join("g.csv");
    let o = molclock(&["simulate", "--scenario", s(&sc), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("capture range"));
    assert!(stderr(&o).contains("detuning="));
    assert!(o.stdout.is_empty());
    assert!(!out.exists());
}

#[test]
fn allan_and_campaign_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let gates = dir.path().join("g.csv");
    let sc = variant(
        &dir,
        "short.toml",
        &[("duration_s = 4000", "duration_s = 200")],
    );
    assert_eq!(
        code(&molclock(&[
            "simulate",
            "--scenario",
            s(&sc),
            "--out",
            s(&gates)
        ])),
        0
    );
    let series = csvio::read_gate_series(fs::File::open(&gates).unwrap()).unwrap();
    let mut text = Vec::new();
    csvio::write_gate_series(&mut text, &series).unwrap();
    assert_eq!(text, fs::read(&gates).unwrap());

    let allan = dir.path().join("a.csv");
    let o = molclock(&[
        "allan",
        s(&gates),
        "--estimator",
        "overlapping",
        "--remove-drift",
        "--out",
        s(&allan),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = csvio::read_allan_curve(fs::File::open(&allan).unwrap()).unwrap();
    assert_eq!(curve.points.first().unwrap().tau, 1.0);
    assert_eq!(curve.points.last().unwrap().tau, 50.0);
    let mut text = Vec::new();
    csvio::write_allan_curve(&mut text, &curve).unwrap();
    assert_eq!(text, fs::read(&allan).unwrap());

    let report = dir.path().join("r.csv");
    let o = molclock(&[
        "campaign",
        CAMPAIGN,
        "--reference-hz",
        "28412881600000",
        "--reference-sigma-hz",
        "1e6",
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = csvio::read_campaign_report(fs::File::open(&report).unwrap()).unwrap();
    assert!(r.consistency.unwrap().consistent);
    let mut text = Vec::new();
    csvio::write_campaign_report(&mut text, &r).unwrap();
    assert_eq!(text, fs::read(&report).unwrap());
}

#[test]
fn allan_matches_library_on_the_same_file() {
    let dir = TempDir::new().unwrap();
    let gates = dir.path().join("g.csv");
    fs::write(
        &gates,
        "gate_index,t_start_s,y_fractional\n0,0,1\n1,1,3\n2,2,2\n3,3,6\n",
    )
    .unwrap();
    let o = molclock(&["allan", s(&gates)]);
    assert_eq!(code(&o), 0);
    let c = csvio::read_allan_curve(o.stdout.as_slice()).unwrap();
    // differences 2, -1, 4: sqrt((4 + 1 + 16) / 6)
    assert_eq!(c.points[0].sigma, (21.0f64 / 6.0).sqrt());
}

#[test]
fn scenario_output_path_is_the_default() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("nested").join("pairs.csv");
    let sc = variant(
        &dir,
        "paths.toml",
        &[(
            "points = 601",
            &format!("points = 601\n\n[output]\nbeatmap = {:?}", s(&target)),
        )],
    );
    let o = molclock(&["beatmap", "--scenario", s(&sc)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), s(&target));
    assert!(
        csvio::read_beatmap(fs::File::open(&target).unwrap())
            .unwrap()
            .len()
            > 400
    );
}
