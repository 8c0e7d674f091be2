use molclock::spectroscopy::{
    absorption, capture_half_range, demodulated_signal, discriminant_slope, scan,
};
use molclock::{ExactFrequency, LineModel, ModulationConfig};

fn line() -> LineModel {
    LineModel {
        center: ExactFrequency::from_hz(28_412_881_552_402),
        hwhm: 20e3,
        amplitude: 1.0,
        snr: 1000.0,
        snr_bandwidth: 1000.0,
        systematic_offset: 0.0,
    }
}

fn modulation(depth: f64, harmonic: u32) -> ModulationConfig {
    ModulationConfig {
        depth,
        rate: 20e3,
        harmonic,
        samples_per_cycle: 64,
    }
}

#[test]
fn small_depth_third_harmonic_is_scaled_third_derivative() {
    let l = line();
    let a = l.hwhm / 50.0;
    let m = modulation(a, 3);
    let h = l.hwhm / 200.0;
    let d3 = |x: f64| {
        let f = |d| absorption(&l, d);
        (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h)
    };
    for x in [-40e3, -17e3, -6e3, 3e3, 11e3, 25e3, 50e3] {
        let want = a * a * a / 24.0 * d3(x);
        let got = demodulated_signal(&l, &m, x);
        assert!((got / want - 1.0).abs() < 0.02, "δ {x}: {got} vs {want}");
    }
}

#[test]
fn first_harmonic_is_dispersive_with_one_zero() {
    let l = line();
    let pts = scan(&l, &modulation(20e3, 1), -60e3, 60e3, 601).unwrap();
    let nonzero: Vec<f64> = pts.iter().map(|p| p.1).filter(|&v| v != 0.0).collect();
    let crossings = nonzero
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    assert_eq!(crossings, 1);
    assert_eq!(pts[300], (0.0, 0.0));
    assert!(discriminant_slope(&l, &modulation(20e3, 1)).unwrap() < 0.0);
}

#[test]
fn third_harmonic_scan_is_odd() {
    let l = line();
    let pts = scan(&l, &modulation(20e3, 3), -60e3, 60e3, 601).unwrap();
    assert_eq!(pts[300].1, 0.0);
    for i in 0..300 {
        let (a, b) = (pts[i].1, pts[600 - i].1);
        assert!((a + b).abs() <= 1e-12, "{}: {a} {b}", pts[i].0);
    }
}

#[test]
fn finer_grid_agrees_at_shared_points() {
    let l = line();
    let m = modulation(20e3, 3);
    let coarse = scan(&l, &m, -60e3, 60e3, 601).unwrap();
    let fine = scan(&l, &m, -60e3, 60e3, 1201).unwrap();
    for (i, c) in coarse.iter().enumerate() {
        let f = fine[2 * i];
        assert!((c.0 - f.0).abs() < 1e-9);
        assert!((c.1 - f.1).abs() < 1e-6);
    }
}

#[test]
fn capture_range_brackets_the_lock() {
    let l = line();
    let m = modulation(20e3, 3);
    let c = capture_half_range(&l, &m, 200e3).unwrap();
    assert!(c > l.hwhm && c < 2.0 * l.hwhm, "{c}");
    let just_inside = demodulated_signal(&l, &m, 0.9 * c);
    let just_outside = demodulated_signal(&l, &m, 1.1 * c);
    assert!(just_inside > 0.0 && just_outside < 0.0);
}

#[test]
fn third_harmonic_has_three_crossings_within_three_widths() {
    let l = line();
    for depth in [l.hwhm, 1.637 * l.hwhm] {
        let pts = scan(&l, &modulation(depth, 3), -3.0 * l.hwhm, 3.0 * l.hwhm, 1201).unwrap();
        let nonzero: Vec<f64> = pts.iter().map(|p| p.1).filter(|&v| v != 0.0).collect();
        let crossings = nonzero
            .windows(2)
            .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
            .count();
        assert_eq!(crossings, 3, "depth {depth}");
        assert_eq!(pts[600], (0.0, 0.0));
    }
}
