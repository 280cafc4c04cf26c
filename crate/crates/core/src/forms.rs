//! The convective trilinear form and the three nonlinear couplings of the
//! state, linearized and adjoint equations, evaluated as Galerkin projections.
//!
//! Production evaluation is pointwise: scalar curls are synthesized on the
//! grid, the cross products are formed in physical space and projected back by
//! quadrature. The convective-form route b(phi,z,sigma(y)) - b(z,phi,sigma(y))
//! gives the same numbers to roundoff and is kept as the independent oracle.

use crate::spectral::{curl_sigma, SigmaDir, SpectralField, Tables};

/// Galerkin projection (term, e_j) for every retained mode.
#[derive(Debug, Clone)]
pub struct ProjectedTerm {
    coeff: Vec<f64>,
}

impl ProjectedTerm {
    pub fn coeff(&self) -> &[f64] {
        &self.coeff
    }

    pub fn dot(&self, f: &SpectralField) -> f64 {
        self.coeff
            .iter()
            .zip(f.coeff())
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// b(phi, z, y) = integral of (phi . grad z) . y, exact for truncated fields.
pub fn trilinear_b(
    tables: &Tables,
    phi: &SpectralField,
    z: &SpectralField,
    y: &SpectralField,
) -> f64 {
    let np = tables.grid().n_points();
    let mut p1 = vec![0.0; np];
    let mut p2 = vec![0.0; np];
    tables.synth_values(phi, &mut p1, &mut p2);
    let zs = crate::spectral::synthesize_velocity(tables, z);
    let mut y1 = vec![0.0; np];
    let mut y2 = vec![0.0; np];
    tables.synth_values(y, &mut y1, &mut y2);
    let integrand: Vec<f64> = (0..np)
        .map(|p| {
            (p1[p] * zs.d1v1[p] + p2[p] * zs.d2v1[p]) * y1[p]
                + (p1[p] * zs.d1v2[p] + p2[p] * zs.d2v2[p]) * y2[p]
        })
        .collect();
    tables.quad(&integrand)
}

/// Projection of curl sigma(y) x y onto every basis mode.
///
/// Pointwise route: omega = curl sigma(y) synthesized on the grid, then
/// omega * (-y2, y1) projected by quadrature. The projection is orthogonal to
/// y itself since (omega zhat x y) . y = 0 pointwise.
pub fn state_nonlinear(tables: &Tables, y: &SpectralField) -> ProjectedTerm {
    let np = tables.grid().n_points();
    let w = curl_sigma(tables.basis(), y);
    let mut om = vec![0.0; np];
    tables.synth_scalar(&w, &mut om);
    let mut y1 = vec![0.0; np];
    let mut y2 = vec![0.0; np];
    tables.synth_values(y, &mut y1, &mut y2);
    let f1: Vec<f64> = (0..np).map(|p| -om[p] * y2[p]).collect();
    let f2: Vec<f64> = (0..np).map(|p| om[p] * y1[p]).collect();
    let mut coeff = vec![0.0; tables.n_modes()];
    tables.project_velocity(&f1, &f2, &mut coeff);
    ProjectedTerm { coeff }
}

/// Projection of curl sigma(z) x y1 + curl sigma(y2) x z onto every mode.
pub fn linearized_nonlinear(
    tables: &Tables,
    z: &SpectralField,
    y1: &SpectralField,
    y2: &SpectralField,
) -> ProjectedTerm {
    let np = tables.grid().n_points();
    let wz = curl_sigma(tables.basis(), z);
    let wy2 = curl_sigma(tables.basis(), y2);
    let mut om_z = vec![0.0; np];
    let mut om_y2 = vec![0.0; np];
    tables.synth_scalar(&wz, &mut om_z);
    tables.synth_scalar(&wy2, &mut om_y2);
    let mut a1 = vec![0.0; np];
    let mut a2 = vec![0.0; np];
    tables.synth_values(y1, &mut a1, &mut a2);
    let mut b1 = vec![0.0; np];
    let mut b2 = vec![0.0; np];
    tables.synth_values(z, &mut b1, &mut b2);
    let f1: Vec<f64> = (0..np).map(|p| -om_z[p] * a2[p] - om_y2[p] * b2[p]).collect();
    let f2: Vec<f64> = (0..np).map(|p| om_z[p] * a1[p] + om_y2[p] * b1[p]).collect();
    let mut coeff = vec![0.0; tables.n_modes()];
    tables.project_velocity(&f1, &f2, &mut coeff);
    ProjectedTerm { coeff }
}

/// Projection of -curl sigma(y) x p + curl sigma(y x p) onto every mode.
///
/// The first summand is pointwise; the second uses the streamfunction route:
/// the scalar s = y1 p2 - y2 p1 has sine-sine content of degree <= 2K, its
/// projection onto mode (k,m) gets multiplied by (1+alpha lambda) sqrt(lambda).
pub fn adjoint_nonlinear(tables: &Tables, p: &SpectralField, y: &SpectralField) -> ProjectedTerm {
    let np = tables.grid().n_points();
    let wy = curl_sigma(tables.basis(), y);
    let mut om_y = vec![0.0; np];
    tables.synth_scalar(&wy, &mut om_y);
    let mut p1 = vec![0.0; np];
    let mut p2 = vec![0.0; np];
    tables.synth_values(p, &mut p1, &mut p2);
    let mut y1 = vec![0.0; np];
    let mut y2 = vec![0.0; np];
    tables.synth_values(y, &mut y1, &mut y2);

    // -(omega_y zhat x p) = omega_y * (p2, -p1)
    let f1: Vec<f64> = (0..np).map(|p_| om_y[p_] * p2[p_]).collect();
    let f2: Vec<f64> = (0..np).map(|p_| -om_y[p_] * p1[p_]).collect();
    let mut coeff = vec![0.0; tables.n_modes()];
    tables.project_velocity(&f1, &f2, &mut coeff);

    let s: Vec<f64> = (0..np).map(|p_| y1[p_] * p2[p_] - y2[p_] * p1[p_]).collect();
    let mut shat = vec![0.0; tables.n_modes()];
    tables.project_scalar(&s, &mut shat);
    let basis = tables.basis();
    for (idx, c) in coeff.iter_mut().enumerate() {
        *c += shat[idx] * basis.mass_factor()[idx] * basis.sqrt_lambda()[idx];
    }
    ProjectedTerm { coeff }
}

/// Oracle route for the state coupling: (curl sigma(y) x z, phi) via the
/// trilinear identity b(phi,z,sigma(y)) - b(z,phi,sigma(y)).
pub fn state_coupling_b_route(
    tables: &Tables,
    y: &SpectralField,
    z: &SpectralField,
    phi: &SpectralField,
) -> f64 {
    let sig_y = crate::spectral::apply_sigma(tables.basis(), y, SigmaDir::Forward);
    trilinear_b(tables, phi, z, &sig_y) - trilinear_b(tables, z, phi, &sig_y)
}

/// Pointwise route for the same scalar: quadrature of (omega_y zhat x z) . phi.
pub fn state_coupling_pointwise(
    tables: &Tables,
    y: &SpectralField,
    z: &SpectralField,
    phi: &SpectralField,
) -> f64 {
    let np = tables.grid().n_points();
    let wy = curl_sigma(tables.basis(), y);
    let mut om = vec![0.0; np];
    tables.synth_scalar(&wy, &mut om);
    let mut z1 = vec![0.0; np];
    let mut z2 = vec![0.0; np];
    tables.synth_values(z, &mut z1, &mut z2);
    let mut p1 = vec![0.0; np];
    let mut p2 = vec![0.0; np];
    tables.synth_values(phi, &mut p1, &mut p2);
    let integrand: Vec<f64> = (0..np)
        .map(|p| om[p] * (-z2[p] * p1[p] + z1[p] * p2[p]))
        .collect();
    tables.quad(&integrand)
}

/// Oracle route for the adjoint coupling: (curl sigma(y x z), phi) via
/// b(z,y,sigma(phi)) - b(y,z,sigma(phi)).
pub fn adjoint_coupling_b_route(
    tables: &Tables,
    y: &SpectralField,
    z: &SpectralField,
    phi: &SpectralField,
) -> f64 {
    let sig_phi = crate::spectral::apply_sigma(tables.basis(), phi, SigmaDir::Forward);
    trilinear_b(tables, z, y, &sig_phi) - trilinear_b(tables, y, z, &sig_phi)
}

/// Streamfunction route for (curl sigma(y x z), e_j) over all retained modes.
pub fn adjoint_coupling_modal(tables: &Tables, y: &SpectralField, z: &SpectralField) -> Vec<f64> {
    let np = tables.grid().n_points();
    let mut y1 = vec![0.0; np];
    let mut y2 = vec![0.0; np];
    tables.synth_values(y, &mut y1, &mut y2);
    let mut z1 = vec![0.0; np];
    let mut z2 = vec![0.0; np];
    tables.synth_values(z, &mut z1, &mut z2);
    let s: Vec<f64> = (0..np).map(|p| y1[p] * z2[p] - y2[p] * z1[p]).collect();
    let mut shat = vec![0.0; tables.n_modes()];
    tables.project_scalar(&s, &mut shat);
    let basis = tables.basis();
    shat.iter()
        .enumerate()
        .map(|(idx, c)| c * basis.mass_factor()[idx] * basis.sqrt_lambda()[idx])
        .collect()
}
