use std::path::Path;

use cascade_frontier::synthlab::{analytic_frontier, synth_generate, tau_grid, SynthSpec};
use cascade_frontier::{sweep_pair, EvalTable, ModelId};

fn csv_of(t: &EvalTable) -> String {
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn golden_concave_n10() {
    let got = csv_of(&synth_generate(&SynthSpec::concave(10, 42)).unwrap());
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/synth_concave_n10_seed42.csv");
    if !path.exists() {
        std::fs::write(&path, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(&path).unwrap());
}

fn max_gap(n: usize, seed: u64, analytic: &cascade_frontier::Frontier) -> f64 {
    let t = synth_generate(&SynthSpec::concave(n, seed)).unwrap();
    let pair = (&ModelId::from("L"), &ModelId::from("H"));
    let f = sweep_pair(&t, pair, 200, &t.all_indices()).unwrap();
    (0..20)
        .map(|i| {
            let c = 1.0 + 10.0 * (i as f64 + 0.5) / 20.0;
            (f.interpolate(c).unwrap() - analytic.interpolate(c).unwrap()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn empirical_sweep_tracks_analytic_frontier() {
    let a = analytic_frontier(&SynthSpec::concave(0, 0), &tau_grid(2000)).unwrap();
    assert!(max_gap(50_000, 2, &a) <= 0.01);
}

#[test]
fn deviation_shrinks_like_root_n() {
    let a = analytic_frontier(&SynthSpec::concave(0, 0), &tau_grid(2000)).unwrap();
    let avg = |n: usize| (0..16).map(|s| max_gap(n, 100 + s, &a)).sum::<f64>() / 16.0;
    let ratio = avg(2_000) / avg(8_000);
    // quadrupling n should roughly halve the deviation
    assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "ratio {ratio}");
}
