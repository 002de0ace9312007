//! Charge profiles, the momentum lattice, polarization conventions, form
//! factors and the parameter constraints that the rest of the crate checks
//! before trusting a series or an asymptotic statement.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{CplabError, Result};
use crate::quad::{compensated_sum, integrate_half_line, QuadSpec};

/// Value of a normalized form factor at the origin, `(2 pi)^(-3/2)`.
pub fn rho_at_origin() -> f64 {
    (2.0 * PI).powf(-1.5)
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Gaussian { xi: f64 },
    Zero,
    Radial { form: fn(f64) -> f64, extent: f64 },
}

/// Radial charge form factor `rho(|k|)` with its continuum norms cached for
/// the weights `|k|^-1`, `1` and `|k|`.
#[derive(Clone, Copy, Debug)]
pub struct ChargeProfile {
    shape: Shape,
    norms: [f64; 3],
}

/// Builds the Gaussian family `rho(r) = (2 pi)^(-3/2) exp(-xi^2 r^2)`.
pub fn make_gaussian_profile(xi: f64) -> Result<ChargeProfile> {
    ChargeProfile::gaussian(xi)
}

fn half_integer_gamma(p: i32) -> f64 {
    // Gamma(p + 3/2) for integer p >= -1, by upward recursion from Gamma(1/2).
    let mut g = PI.sqrt();
    let mut x = 0.5;
    for _ in -1..p {
        g *= x;
        x += 1.0;
    }
    g
}

fn gaussian_norm(xi: f64, p: i32) -> f64 {
    // 4 pi (2 pi)^-3 * int r^(2+2p) exp(-2 xi^2 r^2) dr
    let beta = 2.0 * xi * xi;
    let m = p as f64 + 1.5;
    let radial = half_integer_gamma(p) / (2.0 * beta.powf(m));
    (4.0 * PI * (2.0 * PI).powi(-3) * radial).sqrt()
}

fn radial_norm(form: fn(f64) -> f64, p: i32) -> Result<f64> {
    if p < -1 {
        return Err(CplabError::Integrability {
            p,
            reason: "weight |k|^(2p+2) is not integrable at the origin".into(),
        });
    }
    let spec = QuadSpec::with_rel_tol(1e-10);
    let q = integrate_half_line(
        |r| {
            let f = form(r);
            4.0 * PI * r.powi(2 + 2 * p) * f * f
        },
        1.0,
        &spec,
    );
    if !q.value.is_finite() || !q.converged {
        return Err(CplabError::Integrability {
            p,
            reason: format!(
                "radial quadrature did not settle (estimate {:e}, error {:e})",
                q.value, q.error
            ),
        });
    }
    Ok(q.value.max(0.0).sqrt())
}

impl ChargeProfile {
    /// Gaussian profile of width `xi`.
    pub fn gaussian(xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(CplabError::invalid(
                "xi",
                format!("must be a positive finite number, got {xi}"),
            ));
        }
        let norms = [
            gaussian_norm(xi, -1),
            gaussian_norm(xi, 0),
            gaussian_norm(xi, 1),
        ];
        Ok(ChargeProfile {
            shape: Shape::Gaussian { xi },
            norms,
        })
    }

    /// The identically vanishing profile, which decouples every oscillator.
    pub fn zero() -> Self {
        ChargeProfile {
            shape: Shape::Zero,
            norms: [0.0; 3],
        }
    }

    /// A user supplied radial form factor. `extent` is a radius beyond which
    /// `form(r)^2 r^8` is negligible; continuum routines integrate up to it.
    pub fn radial(form: fn(f64) -> f64, extent: f64) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(CplabError::invalid("extent", "must be positive and finite"));
        }
        let norms = [
            radial_norm(form, -1)?,
            radial_norm(form, 0)?,
            radial_norm(form, 1)?,
        ];
        Ok(ChargeProfile {
            shape: Shape::Radial { form, extent },
            norms,
        })
    }

    /// `rho(r)` for `r >= 0`.
    pub fn value(&self, r: f64) -> f64 {
        match self.shape {
            Shape::Gaussian { xi } => rho_at_origin() * (-xi * xi * r * r).exp(),
            Shape::Zero => 0.0,
            Shape::Radial { form, .. } => form(r),
        }
    }

    /// `rho(r)^2`, computed without squaring a possibly underflowing value.
    pub fn value_sq(&self, r: f64) -> f64 {
        match self.shape {
            Shape::Gaussian { xi } => (2.0 * PI).powi(-3) * (-2.0 * xi * xi * r * r).exp(),
            _ => {
                let v = self.value(r);
                v * v
            }
        }
    }

    /// Width parameter for Gaussian profiles.
    pub fn xi(&self) -> Option<f64> {
        match self.shape {
            Shape::Gaussian { xi } => Some(xi),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, Shape::Zero)
    }

    /// Cached continuum norm `|| |k|^p rho ||` for `p` in {-1, 0, 1}.
    pub fn cached_norm(&self, p: i32) -> Option<f64> {
        match p {
            -1 => Some(self.norms[0]),
            0 => Some(self.norms[1]),
            1 => Some(self.norms[2]),
            _ => None,
        }
    }

    /// Radius past which the profile no longer contributes to radial
    /// integrals at double precision.
    pub fn radial_extent(&self) -> f64 {
        match self.shape {
            // exp(-2 xi^2 r^2) < 1e-36 beyond this radius
            Shape::Gaussian { xi } => 6.5 / xi,
            Shape::Zero => 1.0,
            Shape::Radial { extent, .. } => extent,
        }
    }

    /// The value `||rho||^2 / 3` that one would obtain by tying the trap
    /// frequency to the profile. It is only reported; `nu0` stays an input.
    pub fn nu0_squared_from_profile(&self) -> f64 {
        self.norms[1] * self.norms[1] / 3.0
    }
}

/// Continuum norm `(4 pi int r^(2+2p) rho(r)^2 dr)^(1/2)`.
pub fn profile_norm(profile: &ChargeProfile, p: i32) -> Result<f64> {
    if let Some(v) = profile.cached_norm(p) {
        return Ok(v);
    }
    if p < -1 {
        return Err(CplabError::Integrability {
            p,
            reason: "weight |k|^(2p+2) is not integrable at the origin".into(),
        });
    }
    match profile.shape {
        Shape::Gaussian { xi } => Ok(gaussian_norm(xi, p)),
        Shape::Zero => Ok(0.0),
        Shape::Radial { form, .. } => radial_norm(form, p),
    }
}

/// Orthonormal transverse pair attached to a momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizationPair {
    pub eps1: Vector3<f64>,
    pub eps2: Vector3<f64>,
}

impl PolarizationPair {
    /// Vector of channel `lambda`; channels 3 and 4 reuse 1 and 2.
    pub fn channel(&self, lambda: usize) -> Vector3<f64> {
        if lambda % 2 == 1 {
            self.eps1
        } else {
            self.eps2
        }
    }

    /// Rotates the pair by `theta` inside the transverse plane.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        PolarizationPair {
            eps1: self.eps1 * c + self.eps2 * s,
            eps2: self.eps2 * c - self.eps1 * s,
        }
    }
}

/// Polarization convention: `eps1 = (k2, -k1, 0)/sqrt(k1^2 + k2^2)` and
/// `eps2 = k_hat x eps1`. Momenta along the third axis use `eps1 = (0, -1, 0)`.
pub fn polarization(k: &Vector3<f64>) -> Result<PolarizationPair> {
    let norm = k.norm();
    if !(norm > 0.0) {
        return Err(CplabError::invalid(
            "k",
            "polarization vectors need a nonzero momentum",
        ));
    }
    let planar = (k.x * k.x + k.y * k.y).sqrt();
    let eps1 = if planar > 0.0 {
        Vector3::new(k.y / planar, -k.x / planar, 0.0)
    } else {
        Vector3::new(0.0, -1.0, 0.0)
    };
    let eps2 = (k / norm).cross(&eps1);
    Ok(PolarizationPair { eps1, eps2 })
}

/// One lattice momentum with its cached length and polarization pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePoint {
    pub k: Vector3<f64>,
    pub norm: f64,
    pub polarization: PolarizationPair,
}

/// Momenta `k` in `(2 pi Z / L)^3` with `|k_i| <= 2 pi Lambda` and `k != 0`,
/// in lexicographic order.
#[derive(Clone, Debug)]
pub struct Lattice {
    period: f64,
    cutoff: f64,
    modes_per_axis: i64,
    points: Vec<LatticePoint>,
}

/// Hard ceiling on the number of points, to fail early instead of
/// exhausting memory.
const MAX_POINTS: usize = 50_000_000;

/// Enumerates the cutoff box.
pub fn build_lattice(l: f64, lambda: f64) -> Result<Lattice> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(CplabError::invalid(
            "L",
            format!("must be positive and finite, got {l}"),
        ));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CplabError::invalid(
            "Lambda",
            format!("must be positive and finite, got {lambda}"),
        ));
    }
    // The small slack absorbs products such as 0.1 * 30 landing just below an integer.
    let m = (lambda * l + 1e-9).floor() as i64;
    if m < 1 {
        return Err(CplabError::EmptyLattice {
            l,
            lambda,
            modes: m,
        });
    }
    let side = (2 * m + 1) as usize;
    let count = side.pow(3) - 1;
    if count > MAX_POINTS {
        return Err(CplabError::invalid(
            "Lambda",
            format!("lattice would hold {count} points"),
        ));
    }
    let step = 2.0 * PI / l;
    let mut points = Vec::with_capacity(count);
    for n1 in -m..=m {
        for n2 in -m..=m {
            for n3 in -m..=m {
                if n1 == 0 && n2 == 0 && n3 == 0 {
                    continue;
                }
                let k = Vector3::new(n1 as f64 * step, n2 as f64 * step, n3 as f64 * step);
                let polarization = polarization(&k)?;
                points.push(LatticePoint {
                    k,
                    norm: k.norm(),
                    polarization,
                });
            }
        }
    }
    Ok(Lattice {
        period: l,
        cutoff: lambda,
        modes_per_axis: m,
        points,
    })
}

impl Lattice {
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn uv_cutoff(&self) -> f64 {
        self.cutoff
    }

    /// `floor(Lambda L)`, the largest integer index along an axis.
    pub fn modes_per_axis(&self) -> i64 {
        self.modes_per_axis
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(2 pi / L)^3`, the quadrature weight of one lattice cell.
    pub fn cell_weight(&self) -> f64 {
        (2.0 * PI / self.period).powi(3)
    }

    /// Same momenta with every polarization pair turned by `angle(point)`.
    /// Physical outputs must not notice.
    pub fn with_rotated_polarizations<F: Fn(&LatticePoint) -> f64>(&self, angle: F) -> Lattice {
        let points = self
            .points
            .iter()
            .map(|p| LatticePoint {
                polarization: p.polarization.rotated(angle(p)),
                ..p.clone()
            })
            .collect();
        Lattice {
            points,
            ..self.clone()
        }
    }
}

/// `(2 pi / L)^(3/2) |k| rho(|k|)`, the common amplitude of all four channels.
pub fn form_amplitude(point: &LatticePoint, lattice: &Lattice, profile: &ChargeProfile) -> f64 {
    lattice.cell_weight().sqrt() * point.norm * profile.value(point.norm)
}

/// `F_x(k, lambda)`: cosine channels 1 and 2, sine channels 3 and 4.
pub fn form_factor(
    x: &Vector3<f64>,
    point: &LatticePoint,
    lambda: usize,
    lattice: &Lattice,
    profile: &ChargeProfile,
) -> Result<f64> {
    let phase = point.k.dot(x);
    let amp = form_amplitude(point, lattice, profile);
    match lambda {
        1 | 2 => Ok(amp * phase.cos()),
        3 | 4 => Ok(amp * phase.sin()),
        _ => Err(CplabError::invalid(
            "lambda",
            format!("channel must be 1..4, got {lambda}"),
        )),
    }
}

/// `((2 pi / L)^3 sum_k |k|^(2p) rho(|k|)^2)^(1/2)`.
pub fn lattice_norm(profile: &ChargeProfile, lattice: &Lattice, p: i32) -> f64 {
    lattice_weighted_norm_sq(profile, lattice, |k| k.powi(2 * p)).sqrt()
}

/// `(2 pi / L)^3 sum_k w(|k|) rho(|k|)^2`, summed in lattice order.
pub fn lattice_weighted_norm_sq<W: Fn(f64) -> f64>(
    profile: &ChargeProfile,
    lattice: &Lattice,
    weight: W,
) -> f64 {
    let sum = compensated_sum(
        lattice
            .points()
            .iter()
            .map(|p| weight(p.norm) * profile.value_sq(p.norm)),
    );
    lattice.cell_weight() * sum
}

/// Coupling strength and trap frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub e: f64,
    pub nu0: f64,
}

impl ModelParams {
    pub fn new(e: f64, nu0: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) {
            return Err(CplabError::invalid(
                "e",
                format!("must be positive and finite, got {e}"),
            ));
        }
        if !(nu0 > 0.0 && nu0.is_finite()) {
            return Err(CplabError::invalid(
                "nu0",
                format!("must be positive and finite, got {nu0}"),
            ));
        }
        Ok(ModelParams { e, nu0 })
    }

    /// `nu = sqrt(2) nu0`.
    pub fn nu(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.nu0
    }

    /// `nu^2 = 2 nu0^2`, formed without a square root.
    pub fn nu_sq(&self) -> f64 {
        2.0 * self.nu0 * self.nu0
    }

    /// Static polarizability `nu0^-2`.
    pub fn alpha(&self) -> f64 {
        1.0 / (self.nu0 * self.nu0)
    }

    /// Bare particle frequency `e nu`.
    pub fn e_nu(&self) -> f64 {
        self.e * self.nu()
    }
}

/// Second electron at `r = (0, 0, R)`; the first sits at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Geometry {
    pub separation: f64,
}

impl Geometry {
    pub fn new(separation: f64) -> Result<Self> {
        if !(separation > 0.0 && separation.is_finite()) {
            return Err(CplabError::invalid(
                "R",
                format!("separation must be positive and finite, got {separation}"),
            ));
        }
        Ok(Geometry { separation })
    }

    pub fn direction(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, 1.0)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.direction() * self.separation
    }
}

/// The four inequalities that gate the theory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstraintFlags {
    /// `c_inf < 1/2`.
    pub c_inf_below_half: bool,
    /// `sqrt(2) e nu0 >= 1`.
    pub frequency_condition: bool,
    /// `sqrt(2) e ||rho|| < 1`.
    pub coupling_condition: bool,
    /// `a < 1/4`.
    pub a_below_quarter: bool,
}

/// Constants entering the convergence and bound lemmas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub c_inf: f64,
    /// The three candidates whose maximum is `c_inf`.
    pub c_inf_terms: [f64; 3],
    pub a: f64,
    pub d_rho: f64,
    pub c_l: f64,
    pub nu: f64,
    pub alpha: f64,
    /// Continuum norms for `p = -1, 0, 1`.
    pub continuum_norms: [f64; 3],
    /// Lattice norms for `p = -1, 0, 1`.
    pub lattice_norms: [f64; 3],
    /// `sqrt(2) e ||rho||_*`, the lattice version of the coupling condition.
    pub lattice_coupling: f64,
    pub flags: ConstraintFlags,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        let f = self.flags;
        f.c_inf_below_half && f.frequency_condition && f.coupling_condition && f.a_below_quarter
    }
}

/// Evaluates every constant and flag. Violations are reported, not raised.
pub fn check_constraints(
    params: &ModelParams,
    profile: &ChargeProfile,
    lattice: &Lattice,
) -> ConstraintReport {
    let s2 = std::f64::consts::SQRT_2;
    let e = params.e;
    let nu = params.nu();
    let cn = profile.norms;
    let ln = [
        lattice_norm(profile, lattice, -1),
        lattice_norm(profile, lattice, 0),
        lattice_norm(profile, lattice, 1),
    ];
    let c_inf_terms = [
        s2 * e * cn[0],
        cn[2] / (s2 * e * params.nu0 * params.nu0),
        cn[1] / params.nu0,
    ];
    let c_inf = c_inf_terms.iter().cloned().fold(0.0, f64::max);
    let q = s2 * ln[1] / nu;
    let a = q * q;
    let d_rho = (s2 * e * ln[0]).max(s2 / (e * params.nu_sq()) * ln[2]);
    let c_l = d_rho.max(q);
    let flags = ConstraintFlags {
        c_inf_below_half: c_inf < 0.5,
        frequency_condition: s2 * e * params.nu0 >= 1.0,
        coupling_condition: s2 * e * cn[1] < 1.0,
        a_below_quarter: a < 0.25,
    };
    ConstraintReport {
        c_inf,
        c_inf_terms,
        a,
        d_rho,
        c_l,
        nu,
        alpha: params.alpha(),
        continuum_norms: cn,
        lattice_norms: ln,
        lattice_coupling: s2 * e * ln[1],
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_norm_matches_direct_formula() {
        let p = make_gaussian_profile(1.0).unwrap();
        let expected = ((2.0 * PI).powi(-3) * (PI / 2.0).powf(1.5)).sqrt();
        assert!((p.cached_norm(0).unwrap() / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn half_integer_gamma_values() {
        assert!((half_integer_gamma(-1) - PI.sqrt()).abs() < 1e-15);
        assert!((half_integer_gamma(0) - PI.sqrt() / 2.0).abs() < 1e-15);
        assert!((half_integer_gamma(1) - 0.75 * PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn axis_momenta_use_fallback() {
        let p = polarization(&Vector3::new(0.0, 0.0, -2.0)).unwrap();
        assert_eq!(p.eps1, Vector3::new(0.0, -1.0, 0.0));
        assert!((p.eps2 - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rotation_keeps_handedness() {
        let k = Vector3::new(0.3, -1.2, 0.7);
        let p = polarization(&k).unwrap().rotated(0.9);
        assert!((k.normalize().cross(&p.eps1) - p.eps2).norm() < 1e-14);
    }

    #[test]
    fn params_reject_nonpositive() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0).is_err());
        assert!(Geometry::new(0.0).is_err());
    }
}
