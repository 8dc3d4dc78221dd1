//! Seeded sampling of matrix ensembles, eigenvalue radii and Schur data.
//!
//! Every Monte Carlo trial owns one [`RngStream`], a ChaCha12 generator keyed
//! by the root seed (expanded through SplitMix64) and positioned on the
//! ChaCha stream `stream_index`. Streams are therefore counter-based: trial `k`
//! reproduces the same draws no matter which worker runs it or in what order.

use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::{ComplexMatrix, Error, Real, Spectrum};

#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    stream_index: u64,
    inner: ChaCha12Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(root_seed: u64, stream_index: u64) -> Self {
        let mut state = root_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha12Rng::from_seed(key);
        inner.set_stream(stream_index);
        Self { root_seed, stream_index, inner }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform draw on (0, 1].
    pub fn uniform_open(&mut self) -> f64 {
        uniform_open(self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    ComplexGaussian,
    ComplexBernoulli,
    ComplexUniformDisk,
    RealGaussian,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::ComplexGaussian => "complex_gaussian",
            Self::ComplexBernoulli => "complex_bernoulli",
            Self::ComplexUniformDisk => "complex_uniform_disk",
            Self::RealGaussian => "real_gaussian",
        }
    }

    pub fn is_real(self) -> bool {
        matches!(self, Self::RealGaussian)
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "complex_gaussian" => Ok(Self::ComplexGaussian),
            "complex_bernoulli" => Ok(Self::ComplexBernoulli),
            "complex_uniform_disk" => Ok(Self::ComplexUniformDisk),
            "real_gaussian" => Ok(Self::RealGaussian),
            other => Err(Error::InvalidArgument(format!("unknown ensemble kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    /// `E|G_ij|²`; `1/N` unless overridden.
    pub entry_variance: f64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, n: usize) -> Self {
        Self { kind, n, entry_variance: 1.0 / n.max(1) as f64 }
    }

    pub fn with_variance(mut self, v: f64) -> Self {
        self.entry_variance = v;
        self
    }
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Box–Muller pair returned as one complex number with `E|X|² = 1`.
fn box_muller<R: Rng + ?Sized>(rng: &mut R) -> Complex<f64> {
    let r = (-uniform_open(rng).ln()).sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    Complex::new(r * theta.cos(), r * theta.sin())
}

/// `X = (𝒩₁ + i𝒩₂)/√2`, so that `E|X|² = 1` and `E X² = 0`.
pub fn sample_standard_complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let z = box_muller(rng);
    Complex::new(T::of(z.re), T::of(z.im))
}

pub fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    box_muller(rng).re * std::f64::consts::SQRT_2
}

pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -uniform_open(rng).ln()
}

/// Gamma(k, 1) for integer shape `k ≥ 1`: a sum of `k` exponentials up to
/// `k = 32`, Marsaglia–Tsang rejection above.
pub fn sample_gamma<R: Rng + ?Sized>(k: u32, rng: &mut R) -> f64 {
    assert!(k >= 1, "gamma shape must be positive");
    if k <= 32 {
        return (0..k).map(|_| sample_exponential(rng)).sum();
    }
    let d = k as f64 - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = sample_standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = uniform_open(rng);
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

pub fn sample_matrix<T: Real, R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> ComplexMatrix<T> {
    assert!(spec.n >= 1, "dimension must be positive");
    let n = spec.n as f64;
    // all base laws below have E|G_ij|² = 1/N
    let rescale = (spec.entry_variance * n).sqrt();
    let mut m = match spec.kind {
        EnsembleKind::ComplexGaussian => {
            let s = rescale / n.sqrt();
            ComplexMatrix::from_fn(spec.n, |_, _| {
                let z = box_muller(rng);
                Complex::new(T::of(z.re * s), T::of(z.im * s))
            })
        }
        EnsembleKind::ComplexBernoulli => {
            let s = rescale / (2.0 * n).sqrt();
            ComplexMatrix::from_fn(spec.n, |_, _| {
                let bits = rng.next_u32();
                let re = if bits & 1 == 0 { s } else { -s };
                let im = if bits & 2 == 0 { s } else { -s };
                Complex::new(T::of(re), T::of(im))
            })
        }
        EnsembleKind::ComplexUniformDisk => {
            let s = rescale * (2.0 / n).sqrt();
            ComplexMatrix::from_fn(spec.n, |_, _| {
                let r = rng.random::<f64>().sqrt() * s;
                let theta = 2.0 * PI * rng.random::<f64>();
                Complex::new(T::of(r * theta.cos()), T::of(r * theta.sin()))
            })
        }
        EnsembleKind::RealGaussian => {
            let s = rescale / n.sqrt();
            ComplexMatrix::from_fn(spec.n, |_, _| Complex::new(T::of(sample_standard_normal(rng) * s), T::zero()))
        }
    };
    m.entry_variance = Some(T::of(spec.entry_variance));
    m
}

/// Moduli of Ginibre eigenvalues: `N r_i² ~ Gamma(i)`, `i = 1..N`, independent.
pub fn sample_kostlan_radii<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    assert!(n >= 1);
    (1..=n as u32).map(|k| T::of((sample_gamma(k, rng) / n as f64).sqrt())).collect()
}

/// Moduli of the other `N−1` eigenvalues given an eigenvalue at the origin:
/// `N r_i² ~ Gamma(i)`, `i = 2..N`.
pub fn sample_conditioned_radii_origin<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    assert!(n >= 2, "conditioning needs N >= 2");
    (2..=n as u32).map(|k| T::of((sample_gamma(k, rng) / n as f64).sqrt())).collect()
}

/// Upper-triangular Schur form with the given diagonal and i.i.d. complex
/// Gaussian strict upper part of variance `1/N`.
///
/// Entries are drawn column by column, top to bottom; the Schur chain draws
/// in the same order, so both consume a shared stream identically.
pub fn sample_schur_t<T: Real, R: Rng + ?Sized>(spectrum: &Spectrum<T>, rng: &mut R) -> ComplexMatrix<T> {
    let eig = spectrum.eigenvalues();
    let n = eig.len();
    let s = T::one() / T::of_usize(n).sqrt();
    let mut t = ComplexMatrix::from_diagonal(eig);
    for j in 1..n {
        for i in 0..j {
            t[(i, j)] = sample_standard_complex_gaussian::<T, _>(rng) * s;
        }
    }
    t.entry_variance = Some(s * s);
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 0);
        let mut c = RngStream::new(1, 1);
        let xa: Complex<f64> = sample_standard_complex_gaussian(&mut a);
        let xb: Complex<f64> = sample_standard_complex_gaussian(&mut b);
        let xc: Complex<f64> = sample_standard_complex_gaussian(&mut c);
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(RngStream::new(2, 0).next_u64(), RngStream::new(1, 0).next_u64());
    }

    #[test]
    fn standard_complex_gaussian_moments() {
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let (mut m, mut m2, mut sq) = (Complex::new(0.0, 0.0), 0.0, Complex::new(0.0, 0.0));
        for _ in 0..n {
            let x: Complex<f64> = sample_standard_complex_gaussian(&mut rng);
            m += x;
            m2 += x.norm_sqr();
            sq += x * x;
        }
        let nf = n as f64;
        assert!((m / nf).norm() < 0.005);
        assert!((m2 / nf - 1.0).abs() < 0.01);
        assert!((sq / nf).norm() < 0.005);
    }

    #[test]
    fn gamma_moments() {
        let mut rng = RngStream::new(3, 0);
        for &k in &[1u32, 5, 32, 33, 200] {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_gamma(k, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let kf = k as f64;
            assert!((mean - kf).abs() < 5.0 * (kf / n as f64).sqrt(), "k={k} mean={mean}");
            assert!((var / kf - 1.0).abs() < 0.03, "k={k} var={var}");
        }
    }

    #[test]
    fn gaussian_entry_variance_n1() {
        let mut rng = RngStream::new(5, 0);
        let spec = EnsembleSpec::new(EnsembleKind::ComplexGaussian, 1);
        let n = 100_000;
        let s: f64 = (0..n).map(|_| sample_matrix::<f64, _>(&spec, &mut rng)[(0, 0)].norm_sqr()).sum();
        assert!((s / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn bernoulli_entries_have_fixed_parts() {
        let mut rng = RngStream::new(5, 1);
        let m: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexBernoulli, 2), &mut rng);
        for z in m.iter() {
            assert!((z.re.abs() - 0.5).abs() < 1e-15 && (z.im.abs() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn every_kind_has_variance_one_over_n() {
        let n = 40;
        for kind in [
            EnsembleKind::ComplexGaussian,
            EnsembleKind::ComplexBernoulli,
            EnsembleKind::ComplexUniformDisk,
            EnsembleKind::RealGaussian,
        ] {
            let mut rng = RngStream::new(8, 0);
            let spec = EnsembleSpec::new(kind, n);
            let trials = 50;
            let mut acc = 0.0;
            let mut acc2 = 0.0;
            for _ in 0..trials {
                let m: ComplexMatrix<f64> = sample_matrix(&spec, &mut rng);
                for z in m.iter() {
                    let v = z.norm_sqr() * n as f64;
                    acc += v;
                    acc2 += v * v;
                }
            }
            let cnt = (trials * n * n) as f64;
            let mean = acc / cnt;
            let se = ((acc2 / cnt - mean * mean) / cnt).sqrt();
            assert!((mean - 1.0).abs() < 3.0 * se + 1e-12, "{kind:?}: {mean} ± {se}");
        }
    }

    #[test]
    fn kostlan_radii_n1_mean() {
        let mut rng = RngStream::new(9, 0);
        let n = 100_000;
        let s: f64 = (0..n).map(|_| sample_kostlan_radii::<f64, _>(1, &mut rng)[0].powi(2)).sum();
        assert!((s / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn kostlan_sum_of_means() {
        let mut rng = RngStream::new(9, 1);
        let n = 10;
        let trials = 20_000;
        let s: f64 = (0..trials)
            .map(|_| sample_kostlan_radii::<f64, _>(n, &mut rng).iter().map(|r| n as f64 * r * r).sum::<f64>())
            .sum();
        let expected = (n * (n + 1) / 2) as f64;
        // Var = Σ k = 55 per trial
        assert!((s / trials as f64 - expected).abs() < 5.0 * (55.0 / trials as f64).sqrt());
    }

    #[test]
    fn conditioned_radii() {
        let mut rng = RngStream::new(10, 0);
        let n = 100_000;
        let s: f64 = (0..n).map(|_| 2.0 * sample_conditioned_radii_origin::<f64, _>(2, &mut rng)[0].powi(2)).sum();
        assert!((s / n as f64 - 2.0).abs() < 0.05);

        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let r = sample_conditioned_radii_origin::<f64, _>(3, &mut rng);
            xs.push(r[0] * r[0]);
            ys.push(r[1] * r[1]);
        }
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
        let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.02);
    }

    #[test]
    fn schur_t_structure() {
        let mut rng = RngStream::new(12, 0);
        let one = Spectrum::new(vec![Complex::new(0.3, 0.1)]);
        let t1: ComplexMatrix<f64> = sample_schur_t(&one, &mut rng);
        assert_eq!(t1[(0, 0)], Complex::new(0.3, 0.1));

        let sp = Spectrum::new(vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0), Complex::new(0.0, 1.0)]);
        let t: ComplexMatrix<f64> = sample_schur_t(&sp, &mut rng);
        assert!(t.is_upper_triangular());
        assert_eq!(t.diagonal(), sp.eigenvalues());
    }

    #[test]
    fn schur_t_entry_variance() {
        let mut rng = RngStream::new(12, 1);
        let sp = Spectrum::new((0..10).map(|k| Complex::new(k as f64, 0.0)).collect());
        let n = 100_000;
        let s: f64 = (0..n).map(|_| sample_schur_t::<f64, _>(&sp, &mut rng)[(0, 1)].norm_sqr()).sum();
        assert!((s / n as f64 - 0.1).abs() < 0.002);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [
            EnsembleKind::ComplexGaussian,
            EnsembleKind::ComplexBernoulli,
            EnsembleKind::ComplexUniformDisk,
            EnsembleKind::RealGaussian,
        ] {
            assert_eq!(kind.name().parse::<EnsembleKind>().unwrap(), kind);
        }
        assert!("gue".parse::<EnsembleKind>().is_err());
    }
}
