//! Checks against the shipped thermodynamic data and reference phase table.

use std::path::{Path, PathBuf};

use bits_core::distillation::{step_stages, ColumnSpec, EquilibriumCurve};
use bits_core::vle::{bubble_point, read_phase_csv, BinarySystem, Wilson};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn system() -> BinarySystem {
    BinarySystem::from_json_file(&data("system.json")).unwrap()
}

#[test]
fn reference_table_layout() {
    let rows = read_phase_csv(&data("reference_table.csv")).unwrap();
    assert_eq!(rows.len(), 26);
    assert_eq!((rows[0].x, rows[0].t, rows[0].y), (0.0, 373.600986, 0.0));
    assert_eq!((rows[5].x, rows[5].t, rows[5].y), (0.204082, 359.582669, 0.430179));
    assert!(rows.windows(2).all(|w| w[1].x > w[0].x));
    assert_eq!(rows[25].x, 1.0);
}

#[test]
fn interpolant_passes_through_table_knots() {
    let rows = read_phase_csv(&data("reference_table.csv")).unwrap();
    let curve = EquilibriumCurve::from_rows(&rows).unwrap();
    assert_eq!(curve.eval(0.040816), 0.241782);
    for r in &rows {
        assert!((curve.eval(r.x) - r.y).abs() < 1e-15);
    }
}

#[test]
fn wilson_reproduces_water_endpoint() {
    let sys = system();
    let (t, y) = bubble_point(0.0, sys.pressure_pa, &Wilson(&sys), &sys).unwrap();
    assert!((t - 373.600986).abs() < 0.05, "T = {t}");
    assert_eq!(y, 0.0);
}

#[test]
fn wilson_curve_has_minimum_boiling_azeotrope() {
    let sys = system();
    let w = Wilson(&sys);
    let p = sys.pressure_pa;
    let side = |x: f64| {
        let (_, y) = bubble_point(x, p, &w, &sys).unwrap();
        y - x
    };
    assert!(side(0.2) > 0.0);
    assert!(side(0.8) < 0.0);
    let (t_mid, _) = bubble_point(0.5, p, &w, &sys).unwrap();
    let (t_water, _) = bubble_point(0.0, p, &w, &sys).unwrap();
    let (t_propanol, _) = bubble_point(1.0, p, &w, &sys).unwrap();
    assert!(t_mid < t_water.min(t_propanol));
}

/// Characterises the shipped parameters against the reference table below
/// x = 0.82, where the table still behaves like a physical bubble curve.
#[test]
fn wilson_tracks_reference_table_body() {
    let sys = system();
    let w = Wilson(&sys);
    let rows = read_phase_csv(&data("reference_table.csv")).unwrap();
    let devs: Vec<f64> = rows
        .iter()
        .filter(|r| r.x > 0.0 && r.x <= 0.82)
        .map(|r| (bubble_point(r.x, sys.pressure_pa, &w, &sys).unwrap().0 - r.t).abs())
        .collect();
    let mean = devs.iter().sum::<f64>() / devs.len() as f64;
    let max = devs.iter().copied().fold(0.0, f64::max);
    assert!(mean < 0.7, "mean |dT| = {mean}");
    assert!(max < 1.35, "max |dT| = {max}");
}

#[test]
fn reference_column_reaches_bottoms_with_feed_on_stage_two() {
    let rows = read_phase_csv(&data("reference_table.csv")).unwrap();
    let curve = EquilibriumCurve::from_rows(&rows).unwrap();
    let spec = ColumnSpec::default();
    let profile = step_stages(&spec, &curve).unwrap();
    assert!(profile.reached_bottoms);
    assert!(profile.bottoms_composition <= spec.x_w);
    assert_eq!(profile.stages[0].y, spec.x_d);
    // Above the feed the liquid leaving stage 1 sits on the equilibrium curve.
    assert!((curve.eval(profile.stages[0].x) - spec.x_d).abs() < 1e-9);
}
