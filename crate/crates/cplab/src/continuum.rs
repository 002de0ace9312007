//! Continuum evaluation of the fourth-order binding terms.
//!
//! After the frequency integral is done in closed form and the angular
//! integrals are done analytically, the leading binding term is
//!
//! `A(R) = e^4 int int dr1 dr2 h(r1) h(r2) I(a; r1^2; r2^2) K(r1 R, r2 R)`
//!
//! with `h(r) = r^4 rho(r)^2`, `a = e^2 nu^2`, `I = (I_221 + I_212) / 2` and
//! the oscillatory kernel `K` built from the two bracket kernels below.
//! The subleading term `<Q2 Q1 Q1 Q2>` has the same shape with
//! `I_311 / 2` in place of `I`.
//!
//! Two routes are provided. The t-representation writes every factor
//! `1 / (r1 + r2)` as `int_0^inf e^(-t (r1 + r2)) dt`, after which the
//! double radial integral factorizes into products of one-dimensional
//! brackets. The direct route integrates the double integral as it stands,
//! panel by panel over half periods of the kernel.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{CplabError, Result};
use crate::model::{ChargeProfile, ModelParams};
use crate::quad::{
    integrate, integrate_half_line, integrate_half_line_vec, integrate_panels_vec, integrate_vec,
    QuadSpec,
};

/// Which resolvent triple integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum IntegralKind {
    I111,
    I221,
    I212,
    I311,
}

impl IntegralKind {
    pub fn exponents(self) -> (u32, u32, u32) {
        match self {
            IntegralKind::I111 => (1, 1, 1),
            IntegralKind::I221 => (2, 2, 1),
            IntegralKind::I212 => (2, 1, 2),
            IntegralKind::I311 => (3, 1, 1),
        }
    }
}

/// Closed form without argument checks; square roots are passed in.
fn triple(kind: IntegralKind, sa: f64, sb: f64, sc: f64) -> f64 {
    let a = sa + sb;
    let b = sb + sc;
    let c = sc + sa;
    let base = 1.0 / (a * b * c);
    match kind {
        IntegralKind::I111 => base,
        IntegralKind::I221 => {
            base / (4.0 * sa * sb) * (2.0 / (a * a) + 1.0 / (a * c) + 1.0 / (a * b) + 1.0 / (b * c))
        }
        IntegralKind::I212 => {
            base / (4.0 * sa * sc) * (2.0 / (c * c) + 1.0 / (a * c) + 1.0 / (b * c) + 1.0 / (a * b))
        }
        IntegralKind::I311 => {
            base / (8.0 * sa * sa)
                * (2.0 / (a * a) + 2.0 / (c * c) + 2.0 / (a * c) + 1.0 / (sa * a) + 1.0 / (sa * c))
        }
    }
}

/// `I_{na,nb,nc}(a; b; c) = (1/pi) int_R s^2 (s^2+a)^-na (s^2+b)^-nb (s^2+c)^-nc ds`
/// in closed form.
pub fn closed_integral(kind: IntegralKind, a: f64, b: f64, c: f64) -> Result<f64> {
    for (name, v) in [("a", a), ("b", b), ("c", c)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CplabError::invalid(
                name,
                format!("argument must be positive and finite, got {v}"),
            ));
        }
    }
    Ok(triple(kind, a.sqrt(), b.sqrt(), c.sqrt()))
}

/// Brute-force quadrature of the same definition, for checking.
pub fn integral_quadrature_oracle(
    na: u32,
    nb: u32,
    nc: u32,
    a: f64,
    b: f64,
    c: f64,
) -> Result<f64> {
    if na < 1 || nb < 1 || nc < 1 {
        return Err(CplabError::invalid(
            "exponents",
            "each exponent must be at least 1",
        ));
    }
    if na + nb + nc < 2 {
        return Err(CplabError::invalid(
            "exponents",
            "integrand is not integrable at infinity",
        ));
    }
    for (name, v) in [("a", a), ("b", b), ("c", c)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CplabError::invalid(
                name,
                format!("argument must be positive and finite, got {v}"),
            ));
        }
    }
    let f = |s: f64| {
        let s2 = s * s;
        s2 / ((s2 + a).powi(na as i32) * (s2 + b).powi(nb as i32) * (s2 + c).powi(nc as i32))
    };
    let scale = (a * b * c).powf(1.0 / 6.0);
    let r = integrate_half_line(f, scale, &QuadSpec::with_rel_tol(1e-12));
    if !r.converged {
        return Err(CplabError::Accuracy {
            context: "triple resolvent integral".into(),
            estimate: 2.0 * r.value / PI,
            error: 2.0 * r.error / PI,
            requested: 1e-12,
        });
    }
    Ok(2.0 * r.value / PI)
}

/// `S(X1, X2) = 6 pi^2 - 2 pi^2 (X1^2 + X2^2) + 6 pi^2 X1^2 X2^2`.
pub fn angular_factor(x1: f64, x2: f64) -> f64 {
    let p2 = PI * PI;
    6.0 * p2 - 2.0 * p2 * (x1 * x1 + x2 * x2) + 6.0 * p2 * x1 * x1 * x2 * x2
}

/// The defining double azimuthal integral
/// `int dphi1 int dphi2 {1 + (cos(phi1 - phi2) Y1 Y2 + X1 X2)^2}` with
/// `Y = sqrt(1 - X^2)`, by nested quadrature.
pub fn angular_factor_quadrature(x1: f64, x2: f64) -> f64 {
    let y = (1.0 - x1 * x1).max(0.0).sqrt() * (1.0 - x2 * x2).max(0.0).sqrt();
    let x = x1 * x2;
    let spec = QuadSpec::with_rel_tol(1e-12);
    let inner = |p1: f64| {
        integrate(
            |p2| {
                let u = (p1 - p2).cos() * y + x;
                1.0 + u * u
            },
            0.0,
            2.0 * PI,
            &spec,
        )
        .value
    };
    integrate(inner, 0.0, 2.0 * PI, &spec).value
}

/// `(int_-1^1 e^(iqX) dX, int_-1^1 X^2 e^(iqX) dX)`.
pub fn angular_bracket_kernels(q: f64) -> (f64, f64) {
    let q = q.abs();
    if q < 1.0 {
        // Alternating Taylor series; the closed form of the second kernel
        // loses all digits to cancellation as q -> 0.
        let q2 = q * q;
        let mut k0 = 0.0;
        let mut k2 = 0.0;
        let mut pow = 1.0;
        let mut fact = 1.0;
        for n in 0..12 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            k0 += sign * 2.0 * pow / ((2 * n + 1) as f64 * fact);
            k2 += sign * 2.0 * pow / ((2 * n + 3) as f64 * fact);
            pow *= q2;
            fact *= ((2 * n + 1) * (2 * n + 2)) as f64;
        }
        return (k0, k2);
    }
    let (s, c) = q.sin_cos();
    (
        2.0 * s / q,
        2.0 * ((q * q - 2.0) * s + 2.0 * q * c) / (q * q * q),
    )
}

/// `K(q1, q2) = int int dX1 dX2 e^(i q1 X1 + i q2 X2) S(X1, X2)`.
pub fn oscillatory_kernel(q1: f64, q2: f64) -> f64 {
    let (a0, a2) = angular_bracket_kernels(q1);
    let (b0, b2) = angular_bracket_kernels(q2);
    combine([a0, a2], [b0, b2])
}

fn combine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let p2 = PI * PI;
    6.0 * p2 * a[0] * b[0] - 2.0 * p2 * (a[0] * b[1] + a[1] * b[0]) + 6.0 * p2 * a[1] * b[1]
}

/// How a continuum fourth-order term was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FourthOrderRoute {
    TRepresentation,
    DirectQuadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FourthOrderResult {
    pub r: f64,
    pub value: f64,
    pub route: FourthOrderRoute,
    pub estimated_error: f64,
    /// Part of the main term coming from the separable piece of `I`; only
    /// the t-representation reports it.
    pub regular_part: Option<f64>,
    /// The remainder, which decays two powers of `R` faster.
    pub irregular_part: Option<f64>,
}

/// One factor pair in the t-representation:
/// `coef * B[p1, n1](t) (x) B[p2, n2](t)` contracted with the kernel matrix.
type TTerm = (f64, (i32, i32), (i32, i32));

const MAIN_REGULAR: [TTerm; 2] = [(1.0, (3, 2), (3, 1)), (1.0, (3, 1), (3, 2))];
const MAIN_IRREGULAR: [TTerm; 4] = [
    (2.0, (3, 3), (4, 1)),
    (1.0, (3, 2), (4, 2)),
    (2.0, (4, 1), (3, 3)),
    (1.0, (4, 2), (3, 2)),
];

fn check_inputs(r: f64, profile: &ChargeProfile) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(CplabError::invalid(
            "R",
            format!("separation must be positive and finite, got {r}"),
        ));
    }
    if profile.is_zero() {
        return Err(CplabError::invalid(
            "profile",
            "zero profile has no fourth-order term",
        ));
    }
    Ok(())
}

/// Brackets `int_0^inf r^p rho^2 e^(-t r) (sqrt(a) + r)^-n K_alpha(r R) dr`
/// for every key, laid out `[key0 alpha0, key0 alpha2, key1 alpha0, ...]`.
fn brackets(
    t: f64,
    r: f64,
    sa: f64,
    profile: &ChargeProfile,
    keys: &[(i32, i32)],
    spec: &QuadSpec,
) -> Vec<f64> {
    let extent = profile.radial_extent();
    let upper = if t > 0.0 {
        extent.min(60.0 / t)
    } else {
        extent
    };
    let step = PI / r;
    let mut breaks = vec![0.0];
    let mut x = step;
    while x < upper {
        breaks.push(x);
        x += step;
    }
    breaks.push(upper);
    let res = integrate_vec(
        |x, out: &mut [f64]| {
            let base = profile.value_sq(x) * (-t * x).exp();
            let (k0, k2) = angular_bracket_kernels(x * r);
            for (i, &(p, n)) in keys.iter().enumerate() {
                let w = base * x.powi(p) * (sa + x).powi(-n);
                out[2 * i] = w * k0;
                out[2 * i + 1] = w * k2;
            }
        },
        2 * keys.len(),
        &breaks,
        spec,
    );
    res.values
}

fn contract(terms: &[TTerm], keys: &[(i32, i32)], b: &[f64]) -> f64 {
    let at = |key: (i32, i32)| {
        let i = keys
            .iter()
            .position(|k| *k == key)
            .expect("bracket key registered");
        [b[2 * i], b[2 * i + 1]]
    };
    terms
        .iter()
        .map(|(coef, k1, k2)| coef * combine(at(*k1), at(*k2)))
        .sum()
}

fn keys_of(groups: &[&[TTerm]]) -> Vec<(i32, i32)> {
    let mut keys = Vec::new();
    for g in groups {
        for (_, k1, k2) in g.iter() {
            for k in [k1, k2] {
                if !keys.contains(k) {
                    keys.push(*k);
                }
            }
        }
    }
    keys
}

fn inner_spec(spec: &QuadSpec) -> QuadSpec {
    QuadSpec {
        rel_tol: (spec.rel_tol * 1e-2).max(1e-13),
        abs_tol: 0.0,
        max_intervals: spec.max_intervals.max(2000),
    }
}

/// Integrates `prefactor * sum_g contract(g)` over t for each group.
fn t_representation(
    r: f64,
    sa: f64,
    profile: &ChargeProfile,
    groups: &[&[TTerm]],
    prefactor: f64,
    spec: &QuadSpec,
    context: &str,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let keys = keys_of(groups);
    let inner = inner_spec(spec);
    let res = integrate_half_line_vec(
        |t, out: &mut [f64]| {
            let b = brackets(t, r, sa, profile, &keys, &inner);
            for (o, g) in out.iter_mut().zip(groups) {
                *o = contract(g, &keys, &b);
            }
        },
        groups.len(),
        r,
        spec,
    );
    let values: Vec<f64> = res.values.iter().map(|v| v * prefactor).collect();
    let errors: Vec<f64> = res.errors.iter().map(|v| v * prefactor.abs()).collect();
    if !res.converged {
        let total: f64 = values.iter().sum();
        return Err(CplabError::Accuracy {
            context: format!("{context} at R = {r}"),
            estimate: total,
            error: errors.iter().sum(),
            requested: spec.rel_tol,
        });
    }
    Ok((values, errors))
}

/// Double radial integral `int int h h w(r1, r2) K(r1 R, r2 R)` by nested
/// half-period panels.
fn direct_double<W: Fn(f64, f64) -> f64>(
    r: f64,
    profile: &ChargeProfile,
    weight: W,
    spec: &QuadSpec,
) -> (f64, f64, bool) {
    let width = PI / r;
    let max_panels = (profile.radial_extent() / width).ceil() as usize + 4;
    let inner = inner_spec(spec);
    let h = |x: f64| x.powi(4) * profile.value_sq(x);
    let mut accelerated = false;
    let outer = integrate_panels_vec(
        |r1, out: &mut [f64]| {
            let g = integrate_panels_vec(
                |r2, o: &mut [f64]| {
                    let (k0, k2) = angular_bracket_kernels(r2 * r);
                    let w = h(r2) * weight(r1, r2);
                    o[0] = w * k0;
                    o[1] = w * k2;
                },
                2,
                0.0,
                width,
                max_panels,
                &inner,
                1e-17,
            );
            accelerated |= g.accelerated;
            let (k0, k2) = angular_bracket_kernels(r1 * r);
            out[0] = h(r1) * combine([k0, k2], [g.values[0], g.values[1]]);
        },
        1,
        0.0,
        width,
        max_panels,
        spec,
        1e-17,
    );
    (
        outer.values[0],
        outer.errors[0],
        outer.accelerated || accelerated,
    )
}

/// Continuum `A(R) = <Q1 Q1 Q2 Q2> + <Q2 Q2 Q1 Q1>`.
pub fn fourth_order_main(
    r: f64,
    params: &ModelParams,
    profile: &ChargeProfile,
    route: FourthOrderRoute,
    spec: &QuadSpec,
) -> Result<FourthOrderResult> {
    check_inputs(r, profile)?;
    let sa = params.e_nu();
    let e4 = params.e.powi(4);
    match route {
        FourthOrderRoute::TRepresentation => {
            let (v, err) = t_representation(
                r,
                sa,
                profile,
                &[&MAIN_REGULAR, &MAIN_IRREGULAR],
                e4 / (8.0 * sa),
                spec,
                "fourth-order main term",
            )?;
            Ok(FourthOrderResult {
                r,
                value: v[0] + v[1],
                route,
                estimated_error: err[0] + err[1],
                regular_part: Some(v[0]),
                irregular_part: Some(v[1]),
            })
        }
        FourthOrderRoute::DirectQuadrature => {
            let w = |r1: f64, r2: f64| {
                0.5 * (triple(IntegralKind::I221, sa, r1, r2)
                    + triple(IntegralKind::I212, sa, r1, r2))
            };
            let (v, err, _) = direct_double(r, profile, w, spec);
            Ok(FourthOrderResult {
                r,
                value: e4 * v,
                route,
                estimated_error: e4 * err,
                regular_part: None,
                irregular_part: None,
            })
        }
    }
}

const ERROR_TERMS_T: [TTerm; 3] = [
    (2.0, (4, 3), (4, 1)),
    (2.0, (4, 1), (4, 3)),
    (2.0, (4, 2), (4, 2)),
];

/// Continuum `<Q2 Q1 Q1 Q2>`; the mixed fourth-order words other than the
/// main pair contribute twice this.
pub fn fourth_order_error(
    r: f64,
    params: &ModelParams,
    profile: &ChargeProfile,
    route: FourthOrderRoute,
    spec: &QuadSpec,
) -> Result<FourthOrderResult> {
    check_inputs(r, profile)?;
    let sa = params.e_nu();
    let a = sa * sa;
    let e4 = params.e.powi(4);
    match route {
        FourthOrderRoute::TRepresentation => {
            let inv = 1.0 / sa;
            let terms: [TTerm; 5] = [
                ERROR_TERMS_T[0],
                ERROR_TERMS_T[1],
                ERROR_TERMS_T[2],
                (inv, (4, 2), (4, 1)),
                (inv, (4, 1), (4, 2)),
            ];
            let (v, err) = t_representation(
                r,
                sa,
                profile,
                &[&terms],
                e4 / (16.0 * a),
                spec,
                "fourth-order error term",
            )?;
            Ok(FourthOrderResult {
                r,
                value: v[0],
                route,
                estimated_error: err[0],
                regular_part: None,
                irregular_part: None,
            })
        }
        FourthOrderRoute::DirectQuadrature => {
            let w = |r1: f64, r2: f64| 0.5 * triple(IntegralKind::I311, sa, r1, r2);
            let (v, err, _) = direct_double(r, profile, w, spec);
            Ok(FourthOrderResult {
                r,
                value: e4 * v,
                route,
                estimated_error: e4 * err,
                regular_part: None,
                irregular_part: None,
            })
        }
    }
}

/// `int_0^inf {3/2 A^2 - A B + 3/2 B^2} dt` for
/// `A(t) = (12 t^2 - 4) / (1 + t^2)^3` and `B(t) = 4 (t^2 - 3) / (1 + t^2)^3`.
/// Equals `23 pi`.
pub fn ab_identity_check() -> f64 {
    let f = |t: f64| {
        let d = (1.0 + t * t).powi(3);
        let a = (12.0 * t * t - 4.0) / d;
        let b = 4.0 * (t * t - 3.0) / d;
        1.5 * a * a - a * b + 1.5 * b * b
    };
    integrate_half_line(f, 1.0, &QuadSpec::with_rel_tol(1e-12)).value
}

/// Limit of `R^7 A(R)`: `23 / (256 pi^3 nu0^4)`.
pub fn cp_constant(nu0: f64) -> f64 {
    23.0 / (256.0 * PI.powi(3) * nu0.powi(4))
}
