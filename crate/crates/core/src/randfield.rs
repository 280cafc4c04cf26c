//! Seeded random data for the verification batteries.
//!
//! Coefficients are i.i.d. uniform[-1,1] scaled by lambda^{-3/2}, so random
//! fields sit in the regularity class the solver assumes; every seeded
//! battery in the crate draws from here.

use crate::spectral::{BasisTable, SpectralField};
use crate::state::ControlTrajectory;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(basis: &BasisTable, rng: &mut ChaCha8Rng, scale: f64) -> SpectralField {
    let coeff = basis
        .lambda()
        .iter()
        .map(|lam| scale * rng.random_range(-1.0..=1.0) * lam.powf(-1.5))
        .collect();
    SpectralField::from_coeffs(basis.k_trunc(), coeff)
}

pub fn random_control(
    basis: &BasisTable,
    rng: &mut ChaCha8Rng,
    n_intervals: usize,
    t_final: f64,
    scale: f64,
) -> ControlTrajectory {
    let values = (0..n_intervals)
        .map(|_| random_field(basis, rng, scale))
        .collect();
    ControlTrajectory::new(t_final, values)
}
