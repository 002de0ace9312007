use approx::assert_relative_eq;
use proptest::prelude::*;

use cplab::asymptotics::{
    convergence_study, fit_power_law, sweep_r, ConvergenceOptions, FitWindow, PointValue,
};
use cplab::error::CplabError;
use cplab::model::{make_gaussian_profile, ChargeProfile, ModelParams};

fn ladder() -> Vec<f64> {
    vec![30.0, 42.0, 60.0, 84.0, 120.0]
}

#[test]
fn pure_power_law_is_recovered() {
    let points: Vec<(f64, f64)> = ladder()
        .into_iter()
        .map(|r| (r, 5.0 * r.powi(-7)))
        .collect();
    let fit = fit_power_law(&points, FitWindow::All).unwrap();
    assert!((fit.exponent + 7.0).abs() <= 1e-12);
    assert_relative_eq!(fit.coefficient, 5.0, max_relative = 1e-10);
    assert!(fit.residual_rms < 1e-12);
    assert_eq!(fit.points, 5);
    assert!(!fit.low_confidence);
}

#[test]
fn subleading_correction_shifts_exponent_slightly() {
    let points: Vec<(f64, f64)> = ladder()
        .into_iter()
        .map(|r| (r, r.powi(-7) * (1.0 + 10.0 / (r * r))))
        .collect();
    let fit = fit_power_law(&points, FitWindow::All).unwrap();
    assert!(
        fit.exponent > -7.1 && fit.exponent < -6.9,
        "{}",
        fit.exponent
    );
    assert!(fit.exponent < -7.0);
}

#[test]
fn fit_windows_and_degenerate_cases() {
    let points: Vec<(f64, f64)> = ladder()
        .into_iter()
        .map(|r| (r, -2.0 * r.powi(-9)))
        .collect();
    let upper = fit_power_law(&points, FitWindow::UpperHalf).unwrap();
    assert_eq!(upper.window, (60.0, 120.0));
    assert_relative_eq!(upper.coefficient, -2.0, max_relative = 1e-10);
    let range = fit_power_law(&points, FitWindow::Range(40.0, 90.0)).unwrap();
    assert_eq!(range.points, 3);

    let two = fit_power_law(&points[..2], FitWindow::All).unwrap();
    assert!(two.low_confidence);
    assert!(two.residual_rms < 1e-14);

    let mixed = [(1.0, 1.0), (2.0, -1.0), (3.0, 0.5)];
    assert!(matches!(
        fit_power_law(&mixed, FitWindow::All),
        Err(CplabError::FitDomain(_))
    ));
    assert!(matches!(
        fit_power_law(&points[..1], FitWindow::All),
        Err(CplabError::FitDomain(_))
    ));
}

proptest! {
    #[test]
    fn fit_recovers_any_power(p in -12.0f64..-1.0, c in 1e-6f64..1e6) {
        let points: Vec<(f64, f64)> = ladder().into_iter().map(|r| (r, c * r.powf(p))).collect();
        let fit = fit_power_law(&points, FitWindow::All).unwrap();
        prop_assert!((fit.exponent - p).abs() <= 1e-10);
        prop_assert!((fit.coefficient / c - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn constant_sweep_scales_columns() {
    let grid = ladder();
    let sweep = sweep_r(&grid, "one", |_| Ok(PointValue::new(1.0))).unwrap();
    for row in &sweep.rows {
        assert_eq!(row.r7_scaled, Some(row.r.powi(7)));
        assert_eq!(row.r9_scaled, Some(row.r.powi(9)));
        assert!(!row.warning);
    }
    assert_eq!(sweep.points().len(), 5);
}

#[test]
fn failing_points_become_gap_rows() {
    let sweep = sweep_r(&[1.0, 2.0, 3.0], "partial", |r| {
        if r == 2.0 {
            Err(CplabError::FitDomain("synthetic failure".into()))
        } else {
            Ok(PointValue::new(r))
        }
    })
    .unwrap();
    assert_eq!(sweep.rows[1].value, None);
    assert!(sweep.rows[1]
        .diagnostic
        .as_deref()
        .unwrap()
        .contains("synthetic failure"));
    assert_eq!(sweep.points(), vec![(1.0, 1.0), (3.0, 3.0)]);
    assert!(sweep_r(&[2.0, 1.0], "bad", |_| Ok(PointValue::new(1.0))).is_err());
    assert!(sweep_r(&[], "empty", |_| Ok(PointValue::new(1.0))).is_err());
}

#[test]
fn zero_profile_ladder_is_flat() {
    let params = ModelParams::new(0.5, 2.0).unwrap();
    let table = convergence_study(
        &[1.0, 2.0],
        &[1.0],
        &params,
        &ChargeProfile::zero(),
        0.3,
        &ConvergenceOptions::default(),
    )
    .unwrap();
    assert_eq!(table.rows.len(), 2);
    for row in &table.rows {
        assert_eq!(row.energy, Some(1.5 * params.e_nu()));
        assert_eq!(row.binding, Some(0.0));
        assert_eq!(row.fourth_order, Some(0.0));
    }
    assert_eq!(table.rows[1].delta_energy, Some(0.0));
}

#[test]
fn refinement_differences_shrink() {
    let params = ModelParams::new(0.5, 3.0).unwrap();
    let prof = make_gaussian_profile(0.3).unwrap();
    let table = convergence_study(
        &[1.0, 2.0, 3.0],
        &[1.0],
        &params,
        &prof,
        0.3,
        &ConvergenceOptions::default(),
    )
    .unwrap();
    assert!(!table.truncated);
    let d: Vec<f64> = table
        .rows
        .iter()
        .skip(1)
        .map(|r| r.delta_energy.unwrap().abs())
        .collect();
    assert!(d[1] < d[0], "{d:?}");
}

#[test]
fn dimension_cap_truncates_but_keeps_traces() {
    let params = ModelParams::new(0.5, 2.0).unwrap();
    let prof = make_gaussian_profile(1.0).unwrap();
    let options = ConvergenceOptions {
        max_dimension: 200,
        ..ConvergenceOptions::default()
    };
    let table = convergence_study(&[1.0, 2.0], &[1.0], &params, &prof, 0.3, &options).unwrap();
    assert!(table.truncated);
    assert!(table.rows[0].energy.is_some());
    assert!(table.rows[1].energy.is_none());
    assert!(table.rows[1].fourth_order.is_some());
    assert!(table.rows[1].diagnostic.is_some());
}

#[test]
fn separation_must_fit_in_the_smallest_box() {
    let params = ModelParams::new(0.5, 2.0).unwrap();
    let prof = make_gaussian_profile(1.0).unwrap();
    let options = ConvergenceOptions::default();
    assert!(convergence_study(&[1.0, 2.0], &[1.0], &params, &prof, 0.5, &options).is_err());
    assert!(convergence_study(&[2.0, 1.0], &[1.0], &params, &prof, 0.3, &options).is_err());
}
