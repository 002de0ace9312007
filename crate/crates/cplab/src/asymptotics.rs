//! Sweeps over the separation, log-log power-law fits, and lattice
//! refinement studies.

use serde::Serialize;

use crate::error::{CplabError, Result};
use crate::model::{build_lattice, ChargeProfile, Geometry, ModelParams};
use crate::oscillator::binding_energy_exact;
use crate::traces::{trace_words, IndexWord, QuadratureSpec, TraceSystem};

/// What an evaluator returns at one separation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointValue {
    pub value: f64,
    pub estimated_error: f64,
    pub warning: bool,
}

impl PointValue {
    pub fn new(value: f64) -> Self {
        PointValue {
            value,
            estimated_error: 0.0,
            warning: false,
        }
    }
}

/// One row of a sweep. A failed evaluation leaves the numeric fields empty
/// and explains itself in `diagnostic`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub value: Option<f64>,
    pub r7_scaled: Option<f64>,
    pub r9_scaled: Option<f64>,
    pub estimated_error: Option<f64>,
    pub warning: bool,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub evaluator: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `(R, value)` for rows that succeeded.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|row| row.value.map(|v| (row.r, v)))
            .collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(CplabError::invalid(
            "R_grid",
            "must contain at least one separation",
        ));
    }
    if let Some(bad) = grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(CplabError::invalid(
            "R_grid",
            format!("separations must be positive and finite, got {bad}"),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CplabError::invalid(
            "R_grid",
            "separations must be strictly increasing",
        ));
    }
    Ok(())
}

/// Evaluates `f` on every separation of `grid`. Failures become gap rows
/// and the sweep moves on.
pub fn sweep_r<F: FnMut(f64) -> Result<PointValue>>(
    grid: &[f64],
    evaluator: &str,
    mut f: F,
) -> Result<SweepResult> {
    check_grid(grid)?;
    let rows = grid
        .iter()
        .map(|&r| match f(r) {
            Ok(p) => SweepRow {
                r,
                value: Some(p.value),
                r7_scaled: Some(p.value * r.powi(7)),
                r9_scaled: Some(p.value * r.powi(9)),
                estimated_error: Some(p.estimated_error),
                warning: p.warning,
                diagnostic: None,
            },
            Err(e) => SweepRow {
                r,
                value: None,
                r7_scaled: None,
                r9_scaled: None,
                estimated_error: None,
                warning: true,
                diagnostic: Some(e.to_string()),
            },
        })
        .collect();
    Ok(SweepResult {
        evaluator: evaluator.to_string(),
        rows,
    })
}

/// Which points enter a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FitWindow {
    All,
    /// The last `ceil(n/2)` points, where the asymptotic regime is best.
    UpperHalf,
    /// Points with `lo <= R <= hi`.
    Range(f64, f64),
}

/// `value ~ coefficient * R^exponent` from least squares on log-log data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub log_coefficient: f64,
    /// Carries the common sign of the data.
    pub coefficient: f64,
    pub residual_rms: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// Set when only two points were available; the fit is exact and the
    /// residual says nothing.
    pub low_confidence: bool,
}

pub fn fit_power_law(points: &[(f64, f64)], window: FitWindow) -> Result<PowerFit> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let chosen: Vec<(f64, f64)> = match window {
        FitWindow::All => sorted,
        FitWindow::UpperHalf => {
            let n = sorted.len();
            sorted[n / 2..].to_vec()
        }
        FitWindow::Range(lo, hi) => sorted
            .into_iter()
            .filter(|(r, _)| *r >= lo && *r <= hi)
            .collect(),
    };
    if chosen.len() < 2 {
        return Err(CplabError::FitDomain(format!(
            "need at least two points in the window, found {}",
            chosen.len()
        )));
    }
    if let Some((r, _)) = chosen
        .iter()
        .find(|(r, v)| !(*r > 0.0) || !v.is_finite() || *v == 0.0)
    {
        return Err(CplabError::FitDomain(format!(
            "point at R = {r} is not usable on a log scale"
        )));
    }
    let sign = chosen[0].1.signum();
    if chosen.iter().any(|(_, v)| v.signum() != sign) {
        return Err(CplabError::FitDomain(
            "values change sign inside the fit window".into(),
        ));
    }
    let n = chosen.len() as f64;
    let xs: Vec<f64> = chosen.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = chosen.iter().map(|(_, v)| v.abs().ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(CplabError::FitDomain(
            "all separations in the window coincide".into(),
        ));
    }
    let exponent = sxy / sxx;
    let log_coefficient = my - exponent * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - log_coefficient - exponent * x).powi(2))
        .sum();
    Ok(PowerFit {
        exponent,
        log_coefficient,
        coefficient: sign * log_coefficient.exp(),
        residual_rms: (ss / n).sqrt(),
        window: (chosen[0].0, chosen[chosen.len() - 1].0),
        points: chosen.len(),
        low_confidence: chosen.len() == 2,
    })
}

/// Options for [`convergence_study`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceOptions {
    /// Largest two-electron matrix dimension diagonalized exactly.
    pub max_dimension: usize,
    pub include_direct_term: bool,
    pub quad: QuadratureSpec,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            max_dimension: 3000,
            include_direct_term: false,
            quad: QuadratureSpec::default(),
        }
    }
}

/// One lattice of the refinement ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub lattice_points: usize,
    pub dimension: usize,
    /// Exact one-electron energy; empty above the dimension cap.
    pub energy: Option<f64>,
    /// Exact `2E - E(R)`; empty above the dimension cap.
    pub binding: Option<f64>,
    /// `<Q1 Q1 Q2 Q2> + <Q2 Q2 Q1 Q1>` on this lattice.
    pub fourth_order: Option<f64>,
    /// Signed change from the previous row with the same cutoff.
    pub delta_energy: Option<f64>,
    pub delta_binding: Option<f64>,
    pub delta_fourth_order: Option<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    #[serde(rename = "R")]
    pub r: f64,
    pub rows: Vec<ConvergenceRow>,
    /// True when some row skipped the exact energies.
    pub truncated: bool,
}

fn delta(cur: Option<f64>, prev: Option<f64>) -> Option<f64> {
    Some(cur? - prev?)
}

fn check_ladder(name: &str, ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(CplabError::invalid(name, "ladder is empty"));
    }
    if ladder.iter().any(|v| !(*v > 0.0 && v.is_finite()))
        || ladder.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(CplabError::invalid(
            name,
            "ladder must be positive and strictly increasing",
        ));
    }
    Ok(())
}

/// Energies and binding energies along a refinement ladder. The box size
/// varies fastest, then the cutoff, following the order in which the
/// limits are taken.
pub fn convergence_study(
    l_ladder: &[f64],
    lambda_ladder: &[f64],
    params: &ModelParams,
    profile: &ChargeProfile,
    r: f64,
    options: &ConvergenceOptions,
) -> Result<ConvergenceTable> {
    check_ladder("L_ladder", l_ladder)?;
    check_ladder("Lambda_ladder", lambda_ladder)?;
    let geometry = Geometry::new(r)?;
    if r >= 0.5 * l_ladder[0] {
        return Err(CplabError::invalid(
            "R",
            format!(
                "must stay below half the smallest box, {}",
                0.5 * l_ladder[0]
            ),
        ));
    }
    let words = [IndexWord::parse("1122")?, IndexWord::parse("2211")?];
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut truncated = false;
    for &lambda in lambda_ladder {
        let mut prev: Option<(Option<f64>, Option<f64>, Option<f64>)> = None;
        for &l in l_ladder {
            let lattice = match build_lattice(l, lambda) {
                Ok(lat) => lat,
                Err(e) => {
                    rows.push(ConvergenceRow {
                        l,
                        lambda,
                        lattice_points: 0,
                        dimension: 0,
                        energy: None,
                        binding: None,
                        fourth_order: None,
                        delta_energy: None,
                        delta_binding: None,
                        delta_fourth_order: None,
                        diagnostic: Some(e.to_string()),
                    });
                    prev = None;
                    continue;
                }
            };
            let dimension = 6 + 4 * lattice.len();
            let mut notes = Vec::new();
            let (energy, binding) = if dimension <= options.max_dimension {
                match binding_energy_exact(
                    params,
                    &lattice,
                    profile,
                    &geometry,
                    options.include_direct_term,
                ) {
                    Ok(b) => (Some(b.single.energy), Some(b.binding)),
                    Err(e) => {
                        notes.push(e.to_string());
                        (None, None)
                    }
                }
            } else {
                truncated = true;
                notes.push(format!(
                    "dimension {dimension} above cap {}; exact energies skipped",
                    options.max_dimension
                ));
                (None, None)
            };
            let system = TraceSystem::two_electron(params, &lattice, profile, &geometry);
            let fourth_order = match trace_words(&words, &system, &options.quad) {
                Ok(v) => Some(v[0].value + v[1].value),
                Err(e) => {
                    notes.push(e.to_string());
                    None
                }
            };
            let (de, db, d4) = match prev {
                Some((pe, pb, p4)) => (
                    delta(energy, pe),
                    delta(binding, pb),
                    delta(fourth_order, p4),
                ),
                None => (None, None, None),
            };
            prev = Some((energy, binding, fourth_order));
            rows.push(ConvergenceRow {
                l,
                lambda,
                lattice_points: lattice.len(),
                dimension,
                energy,
                binding,
                fourth_order,
                delta_energy: de,
                delta_binding: db,
                delta_fourth_order: d4,
                diagnostic: if notes.is_empty() {
                    None
                } else {
                    Some(notes.join("; "))
                },
            });
        }
    }
    Ok(ConvergenceTable { r, rows, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_selection() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, (i as f64).powi(-3))).collect();
        let fit = fit_power_law(&pts, FitWindow::UpperHalf).unwrap();
        assert_eq!(fit.points, 3);
        assert_eq!(fit.window, (3.0, 5.0));
        assert!(fit_power_law(&pts[..1], FitWindow::All).is_err());
    }

    #[test]
    fn grid_must_increase() {
        assert!(sweep_r(&[1.0, 1.0], "x", |_| Ok(PointValue::new(1.0))).is_err());
        assert!(sweep_r(&[], "x", |_| Ok(PointValue::new(1.0))).is_err());
    }
}
