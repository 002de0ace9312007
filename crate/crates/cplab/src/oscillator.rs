//! Quadratic forms of one or two dipole oscillators coupled to the lattice
//! field, and their exact ground-state energies from the zero-point trace
//! formula `E = 1/2 tr[sqrt(omega) - sqrt(omega0)] + shift`.
//!
//! Coordinates are ordered particle blocks first (three per electron), then
//! four field channels per lattice point in lattice order.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;

use crate::error::{CplabError, Result};
use crate::model::{form_amplitude, ChargeProfile, Geometry, Lattice, ModelParams};
use crate::quad::compensated_sum;

/// Dense `3 x 4N` matrix `T(x)` with `T[i, (k, lambda)] = eps_i(k, lambda) F_x(k, lambda)`.
#[derive(Clone, Debug)]
pub struct CouplingMatrix {
    pub position: Vector3<f64>,
    pub entries: DMatrix<f64>,
}

/// Builds `T(x)` with columns grouped `(k,1), (k,2), (k,3), (k,4)` per point.
pub fn build_coupling(
    x: &Vector3<f64>,
    lattice: &Lattice,
    profile: &ChargeProfile,
) -> CouplingMatrix {
    let n = lattice.len();
    let mut t = DMatrix::zeros(3, 4 * n);
    for (j, p) in lattice.points().iter().enumerate() {
        let amp = form_amplitude(p, lattice, profile);
        if amp == 0.0 {
            continue;
        }
        let (sin, cos) = p.k.dot(x).sin_cos();
        let e1 = p.polarization.eps1;
        let e2 = p.polarization.eps2;
        for i in 0..3 {
            t[(i, 4 * j)] = e1[i] * amp * cos;
            t[(i, 4 * j + 1)] = e2[i] * amp * cos;
            t[(i, 4 * j + 2)] = e1[i] * amp * sin;
            t[(i, 4 * j + 3)] = e2[i] * amp * sin;
        }
    }
    CouplingMatrix {
        position: *x,
        entries: t,
    }
}

/// Squared field frequencies `|k|^2`, repeated for the four channels.
pub fn field_frequencies_sq(lattice: &Lattice) -> Vec<f64> {
    lattice
        .points()
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.norm * p.norm, 4))
        .collect()
}

/// `gamma(R) = e^2 (2 pi / L)^3 sum_k rho(k)^2 cos(k . r)`, the direct
/// electrostatic dipole coupling that the model normally drops.
pub fn direct_term(
    params: &ModelParams,
    lattice: &Lattice,
    profile: &ChargeProfile,
    r: &Vector3<f64>,
) -> f64 {
    let sum = compensated_sum(
        lattice
            .points()
            .iter()
            .map(|p| profile.value_sq(p.norm) * p.k.dot(r).cos()),
    );
    params.e * params.e * lattice.cell_weight() * sum
}

/// Assembled `omega = omega0 + coupling` together with its bookkeeping.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub omega: DMatrix<f64>,
    pub omega0_diag: DVector<f64>,
    pub zero_point_shift: f64,
    pub electrons: usize,
    pub include_direct_term: bool,
    pub params: ModelParams,
    pub geometry: Option<Geometry>,
}

impl QuadraticForm {
    pub fn dimension(&self) -> usize {
        self.omega0_diag.len()
    }

    /// Same bare part with the coupling multiplied by `scale`. Used to peel
    /// off the leading order of the energy by finite differences.
    pub fn with_coupling_scale(&self, scale: f64) -> QuadraticForm {
        let bare = DMatrix::from_diagonal(&self.omega0_diag);
        let omega = &bare + (&self.omega - &bare) * scale;
        QuadraticForm {
            omega,
            ..self.clone()
        }
    }
}

fn assemble(
    params: &ModelParams,
    lattice: &Lattice,
    profile: &ChargeProfile,
    positions: &[Vector3<f64>],
    direct: Option<f64>,
    geometry: Option<Geometry>,
) -> QuadraticForm {
    let ne = positions.len();
    let particles = 3 * ne;
    let d = particles + 4 * lattice.len();
    let particle_sq = params.e * params.e * params.nu_sq();
    let mut diag = DVector::zeros(d);
    for i in 0..particles {
        diag[i] = particle_sq;
    }
    for (j, w) in field_frequencies_sq(lattice).into_iter().enumerate() {
        diag[particles + j] = w;
    }
    let mut omega = DMatrix::from_diagonal(&diag);
    for (a, x) in positions.iter().enumerate() {
        let t = build_coupling(x, lattice, profile).entries * params.e;
        omega
            .view_mut((3 * a, particles), (3, t.ncols()))
            .copy_from(&t);
        omega
            .view_mut((particles, 3 * a), (t.ncols(), 3))
            .copy_from(&t.transpose());
    }
    if let Some(gamma) = direct {
        for i in 0..3 {
            omega[(i, 3 + i)] = gamma;
            omega[(3 + i, i)] = gamma;
        }
    }
    QuadraticForm {
        omega,
        omega0_diag: diag,
        zero_point_shift: 1.5 * params.e_nu() * ne as f64,
        electrons: ne,
        include_direct_term: direct.is_some(),
        params: *params,
        geometry,
    }
}

/// One electron at the origin.
pub fn assemble_one_electron(
    params: &ModelParams,
    lattice: &Lattice,
    profile: &ChargeProfile,
) -> QuadraticForm {
    assemble_one_electron_at(params, lattice, profile, &Vector3::zeros())
}

/// One electron at `x0`; the spectrum does not depend on `x0`.
pub fn assemble_one_electron_at(
    params: &ModelParams,
    lattice: &Lattice,
    profile: &ChargeProfile,
    x0: &Vector3<f64>,
) -> QuadraticForm {
    assemble(params, lattice, profile, &[*x0], None, None)
}

/// Electrons at the origin and at `(0, 0, R)`.
pub fn assemble_two_electron(
    params: &ModelParams,
    lattice: &Lattice,
    profile: &ChargeProfile,
    geometry: &Geometry,
    include_direct_term: bool,
) -> QuadraticForm {
    let mut form = assemble_two_electron_at(
        params,
        lattice,
        profile,
        &Vector3::zeros(),
        &geometry.position(),
        include_direct_term,
    );
    form.geometry = Some(*geometry);
    form
}

/// Electrons at arbitrary positions `x1`, `x2`.
pub fn assemble_two_electron_at(
    params: &ModelParams,
    lattice: &Lattice,
    profile: &ChargeProfile,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
    include_direct_term: bool,
) -> QuadraticForm {
    let direct = include_direct_term.then(|| direct_term(params, lattice, profile, &(x2 - x1)));
    assemble(params, lattice, profile, &[*x1, *x2], direct, None)
}

/// Exact ground energy with diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyResult {
    pub energy: f64,
    pub min_eigenvalue: f64,
    /// `1/2 sum (sqrt(lambda_i) - sqrt(lambda0_i))`.
    pub trace_difference: f64,
    pub eigenvalue_count: usize,
    pub clamped_count: usize,
}

/// Ground energy from a full symmetric eigendecomposition.
///
/// Eigenvalues within `1e-10 ||omega||` below zero are treated as roundoff
/// and clamped; anything lower means the form is not positive and the
/// constraints behind the model were violated.
pub fn ground_energy(form: &QuadraticForm) -> Result<EnergyResult> {
    let omega = &form.omega;
    let scale = omega.amax();
    let asym = (omega - omega.transpose()).amax();
    if asym > 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(CplabError::invalid(
            "omega",
            format!("matrix is not symmetric (defect {asym:e})"),
        ));
    }
    let sym = (omega + omega.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
    eig.sort_by(f64::total_cmp);
    let norm = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = 1e-10 * norm;
    let min_eigenvalue = eig[0];
    if min_eigenvalue < -threshold {
        return Err(CplabError::NotPositiveSemidefinite {
            eigenvalue: min_eigenvalue,
            threshold,
        });
    }
    let clamped_count = eig.iter().filter(|v| **v < 0.0).count();
    let mut bare: Vec<f64> = form.omega0_diag.iter().cloned().collect();
    bare.sort_by(f64::total_cmp);
    // Sorted eigenvalues paired with sorted bare values keep each difference
    // small, so the compensated sum loses nothing to cancellation.
    let diffs = eig
        .iter()
        .zip(&bare)
        .map(|(l, b)| l.max(0.0).sqrt() - b.sqrt());
    let trace_difference = 0.5 * compensated_sum(diffs);
    Ok(EnergyResult {
        energy: trace_difference + form.zero_point_shift,
        min_eigenvalue,
        trace_difference,
        eigenvalue_count: eig.len(),
        clamped_count,
    })
}

/// Exact binding energy with the two energies it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BindingResult {
    /// `2 E - E(R)`; positive means attraction.
    pub binding: f64,
    pub single: EnergyResult,
    pub pair: EnergyResult,
    /// Set when `R >= L/2`, where lattice periodicity distorts the result.
    pub periodic_warning: bool,
}

/// `2 E - E(R)` on the lattice.
pub fn binding_energy_exact(
    params: &ModelParams,
    lattice: &Lattice,
    profile: &ChargeProfile,
    geometry: &Geometry,
    include_direct_term: bool,
) -> Result<BindingResult> {
    let single = ground_energy(&assemble_one_electron(params, lattice, profile))?;
    let pair = ground_energy(&assemble_two_electron(
        params,
        lattice,
        profile,
        geometry,
        include_direct_term,
    ))?;
    Ok(BindingResult {
        binding: 2.0 * single.energy - pair.energy,
        single,
        pair,
        periodic_warning: geometry.separation >= 0.5 * lattice.period(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lattice, make_gaussian_profile};

    #[test]
    fn block_layout() {
        let params = ModelParams::new(0.5, 2.0).unwrap();
        let lattice = build_lattice(1.0, 1.0).unwrap();
        let profile = make_gaussian_profile(0.3).unwrap();
        let g = Geometry::new(0.4).unwrap();
        let form = assemble_two_electron(&params, &lattice, &profile, &g, false);
        assert_eq!(form.dimension(), 6 + 4 * 26);
        assert_eq!(form.omega.view((0, 3), (3, 3)).amax(), 0.0);
        assert_eq!(form.zero_point_shift, 3.0 * params.e_nu());
        let with = assemble_two_electron(&params, &lattice, &profile, &g, true);
        assert!(with.omega[(0, 3)] != 0.0);
        assert_eq!(with.omega[(0, 3)], with.omega[(3, 0)]);
    }

    #[test]
    fn scaled_coupling_interpolates() {
        let params = ModelParams::new(0.5, 2.0).unwrap();
        let lattice = build_lattice(1.0, 1.0).unwrap();
        let profile = make_gaussian_profile(0.3).unwrap();
        let form = assemble_one_electron(&params, &lattice, &profile);
        let off = form.with_coupling_scale(0.0);
        assert_eq!(off.omega, DMatrix::from_diagonal(&form.omega0_diag));
        let e = ground_energy(&off).unwrap();
        assert_eq!(e.trace_difference, 0.0);
    }
}
