//! Angles between right eigenvectors.
//!
//! For two eigenvalues at microscopic separation `ω = √N|λᵢ−λⱼ|`, the angle
//! `w = Rᵢ*Rⱼ/(‖Rᵢ‖‖Rⱼ‖)` satisfies `ω²|Φ⁻¹(w)|² ~ Exp(1)` with
//! `Φ(z) = z/√(1+|z|²)`. Only moduli are tested, so eigenvector phase
//! conventions never matter.

use num_complex::Complex;
use rand::Rng;

use crate::estimators::{ks_distance, KsReport};
use crate::formulas::{angle_limit_cdf, angle_origin_finite_n_cdf};
use crate::rand_ensembles::{sample_gamma, sample_standard_complex_gaussian};
use crate::{ComplexMatrix, Error, Real, Result};

/// Minimum sample size accepted by [`angle_distribution_test`].
pub const MIN_ANGLE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSample<T> {
    pub i: usize,
    pub j: usize,
    pub value: Complex<T>,
    /// `√N|λᵢ − λⱼ|`.
    pub omega: T,
}

/// `Rᵢ*Rⱼ/(‖Rᵢ‖‖Rⱼ‖)` for columns `i`, `j` of `x`.
pub fn eigenvector_angle<T: Real>(x: &ComplexMatrix<T>, i: usize, j: usize) -> Complex<T> {
    let (ri, rj) = (x.column(i), x.column(j));
    let mut dot = Complex::new(T::zero(), T::zero());
    let (mut ni, mut nj) = (T::zero(), T::zero());
    for (a, b) in ri.iter().zip(rj) {
        dot += a.conj() * b;
        ni += a.norm_sqr();
        nj += b.norm_sqr();
    }
    let w = dot / (ni.sqrt() * nj.sqrt());
    // rounding can push |w| a hair above 1
    let m = w.norm();
    if m > T::one() {
        w / m
    } else {
        w
    }
}

/// `Φ(z) = z/√(1+|z|²)`.
pub fn phi_map<T: Real>(z: Complex<T>) -> Complex<T> {
    z / (T::one() + z.norm_sqr()).sqrt()
}

/// `Φ⁻¹(w) = w/√(1−|w|²)` on the open unit disk.
pub fn phi_inverse<T: Real>(w: Complex<T>) -> Complex<T> {
    w / (T::one() - w.norm_sqr()).sqrt()
}

/// Angles of all unordered pairs with `ω_min ≤ ω ≤ ω_max`.
pub fn collect_angle_samples<T: Real>(
    eigenvalues: &[Complex<T>],
    x: &ComplexMatrix<T>,
    omega_min: T,
    omega_max: T,
) -> Vec<AngleSample<T>> {
    let sqrt_n = T::of_usize(eigenvalues.len()).sqrt();
    let mut out = Vec::new();
    for i in 0..eigenvalues.len() {
        for j in i + 1..eigenvalues.len() {
            let omega = sqrt_n * (eigenvalues[i] - eigenvalues[j]).norm();
            if omega >= omega_min && omega <= omega_max {
                out.push(AngleSample { i, j, value: eigenvector_angle(x, i, j), omega });
            }
        }
    }
    out
}

/// Draws an angle from the microscopic law `Φ(X/ω)`, `E|X|² = 1`.
pub fn sample_angle_law<T: Real, R: Rng + ?Sized>(omega: T, rng: &mut R) -> Complex<T> {
    phi_map(sample_standard_complex_gaussian::<T, R>(rng) / omega)
}

/// Draws the angle between the eigenvectors of `λ₁ = 0` and a uniformly
/// chosen other eigenvalue of an `N×N` Ginibre matrix conditioned on
/// `λ₁ = 0`, via the `N = 2` Schur block.
pub fn sample_angle_at_origin<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Complex<T> {
    assert!(n >= 2);
    let k = rng.random_range(2..=n as u32);
    let nn = T::of_usize(n);
    let r = (T::of(sample_gamma(k, rng)) / nn).sqrt();
    let theta = T::of(rng.random::<f64>()) * T::TAU();
    let lambda2 = Complex::from_polar(r, theta);
    let t12 = sample_standard_complex_gaussian::<T, R>(rng) / nn.sqrt();
    let b2 = t12 / (-lambda2);
    -b2.conj() / (T::one() + b2.norm_sqr()).sqrt()
}

/// Reference law for [`angle_distribution_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleMode {
    /// `ω²|Φ⁻¹(w)|²` against `Exp(1)`, each sample scaled by its own `ω`.
    Separation,
    /// `N|w|²` against the limit law at the origin, or against the finite-N
    /// average of `Beta(1, k)` laws when `finite_n` is set.
    AtOrigin { n: usize, finite_n: bool },
}

/// KS test of angle moduli; passes when the distance is below `threshold`.
pub fn angle_distribution_test<T: Real>(samples: &[AngleSample<T>], mode: AngleMode, threshold: f64) -> Result<KsReport> {
    if samples.len() < MIN_ANGLE_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_ANGLE_SAMPLES, got: samples.len() });
    }
    let mut t: Vec<f64> = match mode {
        AngleMode::Separation => samples
            .iter()
            .map(|s| (s.omega * s.omega * phi_inverse(s.value).norm_sqr()).to_f64_lossy())
            .collect(),
        AngleMode::AtOrigin { n, .. } => samples.iter().map(|s| n as f64 * s.value.norm_sqr().to_f64_lossy()).collect(),
    };
    t.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let (name, d) = match mode {
        AngleMode::Separation => ("angle_separation_exp1", ks_distance(&t, |x: f64| -(-x.max(0.0)).exp_m1())),
        AngleMode::AtOrigin { n, finite_n: true } => ("angle_origin_finite_n", ks_distance(&t, |x: f64| angle_origin_finite_n_cdf(n, x))),
        AngleMode::AtOrigin { finite_n: false, .. } => ("angle_origin_limit", ks_distance(&t, |x: f64| angle_limit_cdf(x))),
    };
    Ok(KsReport::new(name, t.len(), d, threshold))
}
