//! Seeded random states, effects and unitaries for property tests and restarts.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::fock::{spectral_map, DensityOperator, Operator, PureState};

/// Deterministic generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) / 2f64.sqrt()
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Operator {
    Operator::from_fn(rows, cols, |_, _| complex_normal(rng))
}

pub fn random_pure<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PureState {
    let v = DVector::from_fn(dim, |_, _| complex_normal(rng));
    PureState::new(v).expect("Gaussian vector is nonzero")
}

/// Pure state with amplitudes damped as `e^{−n/(2 scale)}` over the basis index.
pub fn random_low_energy_pure<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> PureState {
    let v = DVector::from_fn(dim, |n, _| complex_normal(rng) * (-(n as f64) / (2.0 * scale)).exp());
    PureState::new(v).expect("Gaussian vector is nonzero")
}

/// Ginibre-induced density operator of the given rank.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityOperator {
    let g = ginibre(dim, rank.max(1), rng);
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityOperator::new(m / tr).expect("Wishart matrix is a valid state")
}

/// Random effect `0 ≤ T ≤ 1` with uniformly drawn spectrum in a Haar-random basis.
pub fn random_effect<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let u = random_unitary(dim, rng);
    let vals: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    spectral_map(&vals, &u, |x| x)
}

/// Haar-random unitary via the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let g = ginibre(dim, dim, rng);
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Random Hermitian matrix with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, lo: f64, hi: f64, rng: &mut R) -> Operator {
    let u = random_unitary(dim, rng);
    let vals: Vec<f64> = (0..dim).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    spectral_map(&vals, &u, |x| x)
}
