//! Batch front end: configuration parsing, subcommand dispatch and table
//! serialization.
//!
//! A configuration is one flat TOML table, or the same flat object written
//! as JSON when the text starts with `{`. Every key is optional.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `e`, `nu0`, `xi` | 0.5, 2, 1 | coupling, trap frequency, Gaussian width |
//! | `L`, `Lambda` | 2, 1 | box period and momentum cutoff |
//! | `R_grid` | per subcommand | explicit separations |
//! | `R_min`, `R_max`, `R_count`, `R_spacing` | | generated separations (`linear` or `geometric`) |
//! | `R` | `0.3 min(L_ladder)` | separation for `convergence` |
//! | `L_ladder`, `Lambda_ladder` | `[L, 1.5 L, 2 L]`, `[Lambda]` | refinement ladders |
//! | `max_order` | 4 | even truncation order of the series |
//! | `quad_rel_tol` | 1e-10 | relative quadrature tolerance |
//! | `include_direct_term` | false | add the electrostatic dipole term |
//! | `max_dimension` | 3000 | largest matrix diagonalized exactly |
//! | `output_path`, `output_format` | stdout, `csv` | where and how to write |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::ser::Serializer;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::asymptotics::{
    convergence_study, fit_power_law, sweep_r, ConvergenceOptions, FitWindow, PointValue, PowerFit,
};
use crate::continuum::{
    ab_identity_check, angular_bracket_kernels, angular_factor, angular_factor_quadrature,
    closed_integral, cp_constant, fourth_order_error, fourth_order_main,
    integral_quadrature_oracle, FourthOrderRoute, IntegralKind,
};
use crate::error::{CplabError, Result};
use crate::model::{
    build_lattice, check_constraints, make_gaussian_profile, ConstraintReport, Geometry,
    ModelParams,
};
use crate::oscillator::{assemble_one_electron, binding_energy_exact, ground_energy};
use crate::quad::QuadSpec;
use crate::traces::{series_binding, series_one_electron, QuadratureSpec, TraceSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(CplabError::config(
                "output_format",
                format!("expected `csv` or `json`, got `{other}`"),
            )),
        }
    }
}

/// Fully validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub e: f64,
    pub nu0: f64,
    pub xi: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "R_grid")]
    pub r_grid: Option<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "L_ladder")]
    pub l_ladder: Option<Vec<f64>>,
    #[serde(rename = "Lambda_ladder")]
    pub lambda_ladder: Option<Vec<f64>>,
    pub max_order: usize,
    pub quad_rel_tol: f64,
    pub include_direct_term: bool,
    pub max_dimension: usize,
    pub output_path: Option<String>,
    pub output_format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            e: 0.5,
            nu0: 2.0,
            xi: 1.0,
            l: 2.0,
            lambda: 1.0,
            r_grid: None,
            r: None,
            l_ladder: None,
            lambda_ladder: None,
            max_order: 4,
            quad_rel_tol: 1e-10,
            include_direct_term: false,
            max_dimension: 3000,
            output_path: None,
            output_format: OutputFormat::Csv,
        }
    }
}

const KNOWN_KEYS: [&str; 19] = [
    "e",
    "nu0",
    "xi",
    "L",
    "Lambda",
    "R_grid",
    "R_min",
    "R_max",
    "R_count",
    "R_spacing",
    "R",
    "L_ladder",
    "Lambda_ladder",
    "max_order",
    "quad_rel_tol",
    "include_direct_term",
    "max_dimension",
    "output_path",
    "output_format",
];

struct Doc(Map<String, Value>);

impl Doc {
    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| CplabError::config(key, format!("expected a number, got {v}"))),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.number(key)?.unwrap_or(default);
        if !(v > 0.0 && v.is_finite()) {
            return Err(CplabError::config(
                key,
                format!("must be positive and finite, got {v}"),
            ));
        }
        Ok(v)
    }

    fn integer(&self, key: &str) -> Result<Option<u64>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| {
                CplabError::config(key, format!("expected a nonnegative integer, got {v}"))
            }),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| CplabError::config(key, format!("expected true or false, got {v}"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| CplabError::config(key, format!("expected a string, got {v}"))),
        }
    }

    fn ladder(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.0.get(key) else {
            return Ok(None);
        };
        let arr = v.as_array().ok_or_else(|| {
            CplabError::config(key, format!("expected a list of numbers, got {v}"))
        })?;
        let mut out = Vec::with_capacity(arr.len());
        for item in arr {
            let x = item
                .as_f64()
                .ok_or_else(|| CplabError::config(key, format!("expected numbers, got {item}")))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(CplabError::config(
                    key,
                    format!("entries must be positive and finite, got {x}"),
                ));
            }
            out.push(x);
        }
        if out.is_empty() {
            return Err(CplabError::config(key, "list is empty"));
        }
        if out.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CplabError::config(
                key,
                "entries must be strictly increasing",
            ));
        }
        Ok(Some(out))
    }
}

fn generated_grid(doc: &Doc) -> Result<Option<Vec<f64>>> {
    let range_keys = ["R_min", "R_max", "R_count", "R_spacing"];
    let present: Vec<&str> = range_keys
        .iter()
        .copied()
        .filter(|k| doc.0.contains_key(*k))
        .collect();
    if present.is_empty() {
        return Ok(None);
    }
    if doc.0.contains_key("R_grid") {
        return Err(CplabError::config(
            present[0],
            "give either R_grid or the R_min/R_max/R_count range, not both",
        ));
    }
    for k in ["R_min", "R_max", "R_count"] {
        if !doc.0.contains_key(k) {
            return Err(CplabError::config(
                k,
                "required when a separation range is given",
            ));
        }
    }
    let lo = doc.positive("R_min", 1.0)?;
    let hi = doc.positive("R_max", 1.0)?;
    let n = doc.integer("R_count")?.unwrap_or(0) as usize;
    if hi <= lo {
        return Err(CplabError::config("R_max", "must exceed R_min"));
    }
    if n < 2 {
        return Err(CplabError::config(
            "R_count",
            "need at least two separations",
        ));
    }
    let spacing = doc
        .string("R_spacing")?
        .unwrap_or_else(|| "geometric".to_string());
    let step = (n - 1) as f64;
    let grid = match spacing.as_str() {
        "linear" => (0..n).map(|i| lo + (hi - lo) * i as f64 / step).collect(),
        "geometric" => (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / step))
            .collect(),
        other => {
            return Err(CplabError::config(
                "R_spacing",
                format!("expected `linear` or `geometric`, got `{other}`"),
            ))
        }
    };
    Ok(Some(grid))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let map: Map<String, Value> = if text.trim_start().starts_with('{') {
        serde_json::from_str(text)
            .map_err(|e| CplabError::config("<document>", format!("invalid JSON object: {e}")))?
    } else {
        let table: toml::Table = toml::from_str(text).map_err(|e| {
            CplabError::config("<document>", format!("invalid TOML: {}", e.message()))
        })?;
        match serde_json::to_value(table) {
            Ok(Value::Object(m)) => m,
            _ => return Err(CplabError::config("<document>", "expected a flat table")),
        }
    };
    if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(CplabError::config(k, "unknown key"));
    }
    if let Some((k, _)) = map.iter().find(|(_, v)| v.is_object()) {
        return Err(CplabError::config(k, "nested tables are not allowed"));
    }
    let doc = Doc(map);
    let d = RunConfig::default();
    let max_order = match doc.integer("max_order")? {
        None => d.max_order,
        Some(m) if m < 2 => {
            return Err(CplabError::config(
                "max_order",
                format!("must be at least 2, got {m}"),
            ))
        }
        Some(m) if m % 2 == 1 => {
            return Err(CplabError::config(
                "max_order",
                format!("must be even, got {m}; only orders 2j occur"),
            ))
        }
        Some(m) => m as usize,
    };
    let quad_rel_tol = doc.positive("quad_rel_tol", d.quad_rel_tol)?;
    if quad_rel_tol >= 1.0 {
        return Err(CplabError::config("quad_rel_tol", "must be below 1"));
    }
    let max_dimension = match doc.integer("max_dimension")? {
        None => d.max_dimension,
        Some(0) => return Err(CplabError::config("max_dimension", "must be positive")),
        Some(m) => m as usize,
    };
    let generated = generated_grid(&doc)?;
    let r_grid = doc.ladder("R_grid")?.or(generated);
    let r = match doc.number("R")? {
        None => None,
        Some(_) => Some(doc.positive("R", 1.0)?),
    };
    Ok(RunConfig {
        e: doc.positive("e", d.e)?,
        nu0: doc.positive("nu0", d.nu0)?,
        xi: doc.positive("xi", d.xi)?,
        l: doc.positive("L", d.l)?,
        lambda: doc.positive("Lambda", d.lambda)?,
        r_grid,
        r,
        l_ladder: doc.ladder("L_ladder")?,
        lambda_ladder: doc.ladder("Lambda_ladder")?,
        max_order,
        quad_rel_tol,
        include_direct_term: doc
            .boolean("include_direct_term")?
            .unwrap_or(d.include_direct_term),
        max_dimension,
        output_path: doc.string("output_path")?,
        output_format: match doc.string("output_format")? {
            Some(s) => OutputFormat::parse(&s)?,
            None => d.output_format,
        },
    })
}

/// One table entry.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

fn nonfinite_text(v: f64) -> &'static str {
    if v.is_nan() {
        "nan"
    } else if v > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Num(v) if v.is_finite() => s.serialize_f64(*v),
            Cell::Num(v) => s.serialize_str(nonfinite_text(*v)),
            Cell::Int(v) => s.serialize_i64(*v),
            Cell::Text(t) => s.serialize_str(t),
            Cell::Empty => s.serialize_none(),
        }
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => nonfinite_text(*v).to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(t) if t.contains([',', '"', '\n']) => {
                format!("\"{}\"", t.replace('"', "\"\""))
            }
            Cell::Text(t) => t.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// Column-named result table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Everything a run produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: RunConfig,
    pub constraints: ConstraintReport,
    pub constraints_pass: bool,
    pub table: Table,
    pub summary: BTreeMap<String, Cell>,
    /// Checks or points that did not succeed; any entry makes the run fail.
    pub failures: Vec<String>,
    /// Kept out of the serialized report so that outputs are reproducible.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl RunReport {
    /// 0 on success, 1 when something failed, 2 when results were produced
    /// for parameters that violate the constraints.
    pub fn exit_code(&self) -> i32 {
        if !self.failures.is_empty() {
            1
        } else if !self.constraints_pass {
            2
        } else {
            0
        }
    }
}

/// The subcommands understood by [`run`].
pub const SUBCOMMANDS: [&str; 8] = [
    "check",
    "energy",
    "binding",
    "series",
    "cp-sweep",
    "error-sweep",
    "convergence",
    "integrals-selftest",
];

struct Context {
    params: ModelParams,
    profile: crate::model::ChargeProfile,
    lattice: crate::model::Lattice,
    report: ConstraintReport,
}

fn lattice_grid(cfg: &RunConfig) -> Vec<f64> {
    cfg.r_grid
        .clone()
        .unwrap_or_else(|| vec![0.3 * cfg.l, 0.45 * cfg.l])
}

fn continuum_grid(cfg: &RunConfig) -> Vec<f64> {
    cfg.r_grid.clone().unwrap_or_else(|| {
        [30.0, 42.0, 60.0, 84.0, 120.0]
            .iter()
            .map(|r| r * cfg.xi)
            .collect()
    })
}

fn fit_summary(summary: &mut BTreeMap<String, Cell>, fit: &PowerFit) {
    summary.insert("fit_exponent".into(), fit.exponent.into());
    summary.insert("fit_coefficient".into(), fit.coefficient.into());
    summary.insert("fit_residual_rms".into(), fit.residual_rms.into());
    summary.insert("fit_window_min".into(), fit.window.0.into());
    summary.insert("fit_window_max".into(), fit.window.1.into());
    summary.insert("fit_points".into(), fit.points.into());
    summary.insert("fit_low_confidence".into(), fit.low_confidence.into());
}

/// Runs one subcommand.
pub fn run(subcommand: &str, cfg: &RunConfig) -> Result<RunReport> {
    if !SUBCOMMANDS.contains(&subcommand) {
        return Err(CplabError::invalid(
            "subcommand",
            format!("unknown subcommand `{subcommand}`"),
        ));
    }
    let start = std::time::Instant::now();
    let params = ModelParams::new(cfg.e, cfg.nu0)?;
    let profile = make_gaussian_profile(cfg.xi)?;
    let lattice = build_lattice(cfg.l, cfg.lambda)?;
    let report = check_constraints(&params, &profile, &lattice);
    let ctx = Context {
        params,
        profile,
        lattice,
        report,
    };
    let mut summary = BTreeMap::new();
    let mut failures = Vec::new();
    let table = match subcommand {
        "check" => run_check(&ctx),
        "energy" => run_energy(&ctx)?,
        "binding" => run_binding(&ctx, cfg, &mut summary)?,
        "series" => run_series(&ctx, cfg, &mut summary, &mut failures)?,
        "cp-sweep" => run_cp_sweep(&ctx, cfg, &mut summary, &mut failures)?,
        "error-sweep" => run_error_sweep(&ctx, cfg, &mut summary, &mut failures)?,
        "convergence" => run_convergence(&ctx, cfg, &mut summary, &mut failures)?,
        _ => run_selftest(&mut summary, &mut failures)?,
    };
    Ok(RunReport {
        tool: "cplab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        config: cfg.clone(),
        constraints_pass: ctx.report.all_pass(),
        constraints: ctx.report,
        table,
        summary,
        failures,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_check(ctx: &Context) -> Table {
    let r = &ctx.report;
    let mut t = Table::new(&[
        "c_inf",
        "a",
        "d_rho",
        "c_L",
        "nu",
        "alpha",
        "norm_m1",
        "norm_0",
        "norm_1",
        "lattice_norm_m1",
        "lattice_norm_0",
        "lattice_norm_1",
        "lattice_coupling",
        "c_inf_below_half",
        "frequency_condition",
        "coupling_condition",
        "a_below_quarter",
    ]);
    t.push(vec![
        r.c_inf.into(),
        r.a.into(),
        r.d_rho.into(),
        r.c_l.into(),
        r.nu.into(),
        r.alpha.into(),
        r.continuum_norms[0].into(),
        r.continuum_norms[1].into(),
        r.continuum_norms[2].into(),
        r.lattice_norms[0].into(),
        r.lattice_norms[1].into(),
        r.lattice_norms[2].into(),
        r.lattice_coupling.into(),
        r.flags.c_inf_below_half.into(),
        r.flags.frequency_condition.into(),
        r.flags.coupling_condition.into(),
        r.flags.a_below_quarter.into(),
    ]);
    t
}

fn run_energy(ctx: &Context) -> Result<Table> {
    let form = assemble_one_electron(&ctx.params, &ctx.lattice, &ctx.profile);
    let res = ground_energy(&form)?;
    let mut t = Table::new(&[
        "L",
        "Lambda",
        "lattice_points",
        "dimension",
        "energy",
        "trace_difference",
        "min_eigenvalue",
        "clamped_count",
    ]);
    t.push(vec![
        ctx.lattice.period().into(),
        ctx.lattice.uv_cutoff().into(),
        ctx.lattice.len().into(),
        form.dimension().into(),
        res.energy.into(),
        res.trace_difference.into(),
        res.min_eigenvalue.into(),
        res.clamped_count.into(),
    ]);
    Ok(t)
}

fn run_binding(
    ctx: &Context,
    cfg: &RunConfig,
    summary: &mut BTreeMap<String, Cell>,
) -> Result<Table> {
    let mut t = Table::new(&[
        "R",
        "binding",
        "energy_single",
        "energy_pair",
        "periodic_warning",
    ]);
    let mut warned = false;
    for r in lattice_grid(cfg) {
        let g = Geometry::new(r)?;
        let b = binding_energy_exact(
            &ctx.params,
            &ctx.lattice,
            &ctx.profile,
            &g,
            cfg.include_direct_term,
        )?;
        warned |= b.periodic_warning;
        t.push(vec![
            r.into(),
            b.binding.into(),
            b.single.energy.into(),
            b.pair.energy.into(),
            b.periodic_warning.into(),
        ]);
    }
    summary.insert("periodic_warning".into(), warned.into());
    Ok(t)
}

fn run_series(
    ctx: &Context,
    cfg: &RunConfig,
    summary: &mut BTreeMap<String, Cell>,
    failures: &mut Vec<String>,
) -> Result<Table> {
    let quad = QuadratureSpec::with_rel_tol(cfg.quad_rel_tol)?;
    let mut t = Table::new(&[
        "quantity",
        "R",
        "max_order",
        "series_value",
        "tail_bound",
        "quadrature_error",
        "exact_value",
        "difference",
        "within_bound",
    ]);
    let exact_ok = 6 + 4 * ctx.lattice.len() <= cfg.max_dimension;
    let slack = |value: f64| 10.0 * cfg.quad_rel_tol * value.abs() + 1e-12;
    let mut push = |t: &mut Table,
                    name: &str,
                    r: Option<f64>,
                    s: &crate::traces::TraceSeries,
                    exact: Option<f64>| {
        let diff = exact.map(|x| x - s.value);
        let within = diff.map(|d| d.abs() <= s.tail_bound + s.quadrature_error + slack(s.value));
        if within == Some(false) {
            failures.push(format!(
                "{name} at R = {r:?}: series and exact value differ beyond the tail bound"
            ));
        }
        t.push(vec![
            name.into(),
            r.into(),
            cfg.max_order.into(),
            s.value.into(),
            s.tail_bound.into(),
            s.quadrature_error.into(),
            exact.into(),
            diff.into(),
            within.map_or(Cell::Empty, Cell::from),
        ]);
    };
    let one = TraceSystem::one_electron(&ctx.params, &ctx.lattice, &ctx.profile);
    let s1 = series_one_electron(&one, cfg.max_order, &quad)?;
    let exact1 = if exact_ok {
        Some(
            ground_energy(&assemble_one_electron(
                &ctx.params,
                &ctx.lattice,
                &ctx.profile,
            ))?
            .energy,
        )
    } else {
        None
    };
    summary.insert("a".into(), s1.a.into());
    summary.insert("envelope_integral".into(), s1.envelope_integral.into());
    for o in &s1.orders {
        summary.insert(format!("energy_order_{:02}", o.order), o.value.into());
    }
    push(&mut t, "energy", None, &s1, exact1);
    for r in lattice_grid(cfg) {
        let g = Geometry::new(r)?;
        let two = TraceSystem::two_electron(&ctx.params, &ctx.lattice, &ctx.profile, &g);
        let s2 = series_binding(&two, cfg.max_order, &quad, true)?;
        let exact2 = if exact_ok {
            Some(binding_energy_exact(&ctx.params, &ctx.lattice, &ctx.profile, &g, false)?.binding)
        } else {
            None
        };
        push(&mut t, "binding", Some(r), &s2, exact2);
    }
    summary.insert("exact_compared".into(), exact_ok.into());
    Ok(t)
}

fn run_cp_sweep(
    ctx: &Context,
    cfg: &RunConfig,
    summary: &mut BTreeMap<String, Cell>,
    failures: &mut Vec<String>,
) -> Result<Table> {
    let spec = QuadSpec::with_rel_tol(cfg.quad_rel_tol);
    let cp = cp_constant(cfg.nu0);
    let mut parts = BTreeMap::new();
    let sweep = sweep_r(&continuum_grid(cfg), "continuum_main", |r| {
        let res = fourth_order_main(
            r,
            &ctx.params,
            &ctx.profile,
            FourthOrderRoute::TRepresentation,
            &spec,
        )?;
        parts.insert(r.to_bits(), (res.regular_part, res.irregular_part));
        Ok(PointValue {
            value: res.value,
            estimated_error: res.estimated_error,
            warning: false,
        })
    })?;
    let mut t = Table::new(&[
        "R",
        "value",
        "r7_scaled",
        "r9_scaled",
        "estimated_error",
        "regular_part",
        "irregular_part",
        "ratio_to_cp_constant",
    ]);
    for row in &sweep.rows {
        if let Some(d) = &row.diagnostic {
            failures.push(format!("R = {}: {d}", row.r));
        }
        let (re, ir) = parts.get(&row.r.to_bits()).copied().unwrap_or((None, None));
        t.push(vec![
            row.r.into(),
            row.value.into(),
            row.r7_scaled.into(),
            row.r9_scaled.into(),
            row.estimated_error.into(),
            re.into(),
            ir.into(),
            row.r7_scaled.map(|v| v / cp).into(),
        ]);
    }
    summary.insert("cp_constant".into(), cp.into());
    if let Some(last) = sweep.rows.iter().rev().find_map(|r| r.r7_scaled) {
        summary.insert("final_r7_scaled".into(), last.into());
        summary.insert("final_relative_deviation".into(), (last / cp - 1.0).into());
    }
    match fit_power_law(&sweep.points(), FitWindow::UpperHalf) {
        Ok(fit) => fit_summary(summary, &fit),
        Err(e) => failures.push(e.to_string()),
    }
    Ok(t)
}

fn run_error_sweep(
    ctx: &Context,
    cfg: &RunConfig,
    summary: &mut BTreeMap<String, Cell>,
    failures: &mut Vec<String>,
) -> Result<Table> {
    let spec = QuadSpec::with_rel_tol(cfg.quad_rel_tol);
    let mut main = BTreeMap::new();
    let sweep = sweep_r(&continuum_grid(cfg), "continuum_error", |r| {
        let res = fourth_order_error(
            r,
            &ctx.params,
            &ctx.profile,
            FourthOrderRoute::TRepresentation,
            &spec,
        )?;
        let m = fourth_order_main(
            r,
            &ctx.params,
            &ctx.profile,
            FourthOrderRoute::TRepresentation,
            &spec,
        )?;
        main.insert(r.to_bits(), m.value);
        Ok(PointValue {
            value: res.value,
            estimated_error: res.estimated_error,
            warning: false,
        })
    })?;
    let mut t = Table::new(&[
        "R",
        "value",
        "r7_scaled",
        "r9_scaled",
        "estimated_error",
        "b_term",
        "main_value",
        "b_over_main",
    ]);
    let mut last_ratio = None;
    for row in &sweep.rows {
        if let Some(d) = &row.diagnostic {
            failures.push(format!("R = {}: {d}", row.r));
        }
        let m = main.get(&row.r.to_bits()).copied();
        let b = row.value.map(|v| 2.0 * v);
        let ratio = match (b, m) {
            (Some(b), Some(m)) => Some(b / m),
            _ => None,
        };
        if ratio.is_some() {
            last_ratio = ratio;
        }
        t.push(vec![
            row.r.into(),
            row.value.into(),
            row.r7_scaled.into(),
            row.r9_scaled.into(),
            row.estimated_error.into(),
            b.into(),
            m.into(),
            ratio.into(),
        ]);
    }
    summary.insert("final_b_over_main".into(), last_ratio.into());
    match fit_power_law(&sweep.points(), FitWindow::UpperHalf) {
        Ok(fit) => fit_summary(summary, &fit),
        Err(e) => failures.push(e.to_string()),
    }
    Ok(t)
}

fn run_convergence(
    ctx: &Context,
    cfg: &RunConfig,
    summary: &mut BTreeMap<String, Cell>,
    failures: &mut Vec<String>,
) -> Result<Table> {
    let l_ladder = cfg
        .l_ladder
        .clone()
        .unwrap_or_else(|| vec![cfg.l, 1.5 * cfg.l, 2.0 * cfg.l]);
    let lambda_ladder = cfg
        .lambda_ladder
        .clone()
        .unwrap_or_else(|| vec![cfg.lambda]);
    let r = cfg.r.unwrap_or(0.3 * l_ladder[0]);
    let options = ConvergenceOptions {
        max_dimension: cfg.max_dimension,
        include_direct_term: cfg.include_direct_term,
        quad: QuadratureSpec::with_rel_tol(cfg.quad_rel_tol)?,
    };
    let table = convergence_study(
        &l_ladder,
        &lambda_ladder,
        &ctx.params,
        &ctx.profile,
        r,
        &options,
    )?;
    let mut t = Table::new(&[
        "L",
        "Lambda",
        "lattice_points",
        "dimension",
        "energy",
        "binding",
        "fourth_order",
        "delta_energy",
        "delta_binding",
        "delta_fourth_order",
    ]);
    for row in &table.rows {
        if row.fourth_order.is_none() {
            failures.push(format!(
                "L = {}, Lambda = {}: {}",
                row.l,
                row.lambda,
                row.diagnostic.clone().unwrap_or_default()
            ));
        }
        t.push(vec![
            row.l.into(),
            row.lambda.into(),
            row.lattice_points.into(),
            row.dimension.into(),
            row.energy.into(),
            row.binding.into(),
            row.fourth_order.into(),
            row.delta_energy.into(),
            row.delta_binding.into(),
            row.delta_fourth_order.into(),
        ]);
    }
    summary.insert("R".into(), r.into());
    summary.insert("truncated".into(), table.truncated.into());
    let spec = QuadSpec::with_rel_tol(cfg.quad_rel_tol);
    let continuum = fourth_order_main(
        r,
        &ctx.params,
        &ctx.profile,
        FourthOrderRoute::TRepresentation,
        &spec,
    )?;
    summary.insert("continuum_fourth_order".into(), continuum.value.into());
    Ok(t)
}

struct Check<'a> {
    table: &'a mut Table,
    failures: &'a mut Vec<String>,
}

impl Check<'_> {
    fn record(&mut self, name: &str, measured: f64, expected: f64, deviation: f64, tolerance: f64) {
        let pass = deviation <= tolerance;
        if !pass {
            self.failures.push(format!(
                "{name}: deviation {deviation:e} above {tolerance:e}"
            ));
        }
        self.table.push(vec![
            name.into(),
            measured.into(),
            expected.into(),
            deviation.into(),
            tolerance.into(),
            pass.into(),
        ]);
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn run_selftest(summary: &mut BTreeMap<String, Cell>, failures: &mut Vec<String>) -> Result<Table> {
    let mut table = Table::new(&[
        "check",
        "measured",
        "expected",
        "deviation",
        "tolerance",
        "pass",
    ]);
    let mut c = Check {
        table: &mut table,
        failures,
    };
    let v = closed_integral(IntegralKind::I111, 1.0, 1.0, 1.0)?;
    c.record("I111(1;1;1)", v, 0.125, rel(v, 0.125), 1e-14);
    let v = closed_integral(IntegralKind::I111, 1.0, 4.0, 9.0)?;
    c.record("I111(1;4;9)", v, 1.0 / 60.0, rel(v, 1.0 / 60.0), 1e-14);

    let mut rng = StdRng::seed_from_u64(20_240_607);
    let kinds = [
        IntegralKind::I111,
        IntegralKind::I221,
        IntegralKind::I212,
        IntegralKind::I311,
    ];
    let mut worst = [0.0f64; 4];
    let mut worst_swap = 0.0f64;
    for _ in 0..100 {
        let (a, b, cc) = (
            rng.random_range(0.1..10.0),
            rng.random_range(0.1..10.0),
            rng.random_range(0.1..10.0),
        );
        for (w, kind) in worst.iter_mut().zip(kinds) {
            let (na, nb, nc) = kind.exponents();
            let closed = closed_integral(kind, a, b, cc)?;
            let oracle = integral_quadrature_oracle(na, nb, nc, a, b, cc)?;
            *w = w.max(rel(closed, oracle));
        }
        let x = closed_integral(IntegralKind::I221, a, b, cc)?;
        let y = closed_integral(IntegralKind::I212, a, cc, b)?;
        worst_swap = worst_swap.max(rel(x, y));
    }
    for (kind, w) in ["I111", "I221", "I212", "I311"].iter().zip(worst) {
        c.record(
            &format!("{kind} closed form vs quadrature, 100 random triples"),
            w,
            0.0,
            w,
            1e-8,
        );
    }
    c.record(
        "I221(a;b;c) = I212(a;c;b)",
        worst_swap,
        0.0,
        worst_swap,
        1e-12,
    );

    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut worst_s = 0.0f64;
    for &x1 in &grid {
        for &x2 in &grid {
            worst_s =
                worst_s.max((angular_factor(x1, x2) - angular_factor_quadrature(x1, x2)).abs());
        }
    }
    c.record(
        "angular factor closed form vs 2D quadrature",
        worst_s,
        0.0,
        worst_s,
        1e-8,
    );

    let ab = ab_identity_check();
    let target = 23.0 * PI;
    c.record(
        "AB identity equals 23 pi",
        ab,
        target,
        rel(ab, target),
        1e-6,
    );
    summary.insert("ab_identity_times_4pi2".into(), (ab * 4.0 * PI * PI).into());
    summary.insert("ninety_two_pi_cubed".into(), (92.0 * PI.powi(3)).into());

    let (_, k2) = angular_bracket_kernels(PI);
    let expect = -4.0 / (PI * PI);
    c.record(
        "second bracket kernel at pi",
        k2,
        expect,
        (k2 - expect).abs(),
        1e-14,
    );
    Ok(table)
}

/// Serializes a report. CSV carries only the result table.
pub fn emit(report: &RunReport, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| CplabError::invalid("report", format!("serialization failed: {e}")))?;
            s.push('\n');
            Ok(s)
        }
        OutputFormat::Csv => {
            let mut s = report.table.columns.join(",");
            s.push('\n');
            for row in &report.table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            Ok(s)
        }
    }
}

/// Human-readable constraint block and summary, for stderr.
pub fn describe(report: &RunReport) -> String {
    let r = &report.constraints;
    let f = r.flags;
    let mark = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    let mut s = String::new();
    let _ = writeln!(s, "constraints:");
    let _ = writeln!(
        s,
        "  c_inf = {:.6e} < 1/2: {}",
        r.c_inf,
        mark(f.c_inf_below_half)
    );
    let _ = writeln!(s, "  sqrt(2) e nu0 >= 1: {}", mark(f.frequency_condition));
    let _ = writeln!(s, "  sqrt(2) e ||rho|| < 1: {}", mark(f.coupling_condition));
    let _ = writeln!(s, "  a = {:.6e} < 1/4: {}", r.a, mark(f.a_below_quarter));
    let _ = writeln!(s, "  D(rho) = {:.6e}, c_L = {:.6e}", r.d_rho, r.c_l);
    for (k, v) in &report.summary {
        let text = match v {
            Cell::Num(x) => format!("{x:.10e}"),
            other => other.csv(),
        };
        let _ = writeln!(s, "{k}: {text}");
    }
    for fail in &report.failures {
        let _ = writeln!(s, "FAILED: {fail}");
    }
    s
}
