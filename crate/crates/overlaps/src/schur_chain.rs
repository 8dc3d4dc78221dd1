//! Overlaps of two distinguished eigenvalues straight from the Schur form.
//!
//! With `T` upper triangular, `λ₁ = T₁₁`, `λ₂ = T₂₂` and `α_ij = 1/(λ_i−λ_j)`:
//!
//! ```text
//! b₁ = 1,  b_i = α_{1i} Σ_{k<i} b_k T_{ki}
//! d₁ = 0, d₂ = 1, d_i = α_{2i} Σ_{k<i} d_k T_{ki}   (i ≥ 3)
//! O₁₁ = Σ|b_i|²,  O₁₂ = −b̄₂ Σ_{i≥2} b_i d̄_i,  O₂₂ = (1+|b₂|²) Σ|d_i|²
//! ```
//!
//! Column `n+1` of `T` enters only through `B_nᵗ T_n` and `D_nᵗ T_n`, so the
//! chain keeps `B_n`, `D_n` and draws the column on the fly.

use num_complex::Complex;
use rand::Rng;

use crate::rand_ensembles::sample_standard_complex_gaussian;
use crate::{Error, Real, Result, Spectrum, DELTA_FLOOR, GAP_FLOOR};

/// `δ = N|λ₁−λ₂|²`, `a = δ/2 + √(1+δ²/4)`, `b = −1/a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry<T> {
    pub delta: T,
    pub a: T,
    pub b: T,
}

impl<T: Real> PairGeometry<T> {
    pub fn new(delta: T) -> Self {
        let two = T::of(2.0);
        let a = delta / two + (T::one() + delta * delta / T::of(4.0)).sqrt();
        Self { delta, a, b: -T::one() / a }
    }

    pub fn from_points(n: usize, z1: Complex<T>, z2: Complex<T>) -> Self {
        Self::new(T::of_usize(n) * (z1 - z2).norm_sqr())
    }

    /// `a − 1` without cancellation for small `δ`.
    pub fn a_minus_one(&self) -> T {
        let q = self.delta * self.delta / T::of(4.0);
        self.delta / T::of(2.0) + q / ((T::one() + q).sqrt() + T::one())
    }

    /// `a − 1/a`, which equals `δ`.
    pub fn delta_from_a(&self) -> T {
        self.a_minus_one() * (self.a + T::one()) / self.a
    }
}

/// `(O₁₁, O₁₂, O₂₂)` for one draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOverlaps<T> {
    pub o11: T,
    pub o12: Complex<T>,
    pub o22: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondMoments<T> {
    /// `E|O₁₂|²`.
    pub abs_o12_sq: T,
    /// `E O₁₁O₂₂`.
    pub o11_o22: T,
}

fn gap_scale<T: Real>(eig: &[Complex<T>]) -> T {
    let m = eig.iter().fold(T::one(), |acc, z| acc.max(z.norm()));
    T::of(GAP_FLOOR) * m
}

fn check_gaps<T: Real>(eig: &[Complex<T>], anchors: usize) -> Result<()> {
    let floor = gap_scale(eig);
    for a in 0..anchors.min(eig.len()) {
        for (n, l) in eig.iter().enumerate() {
            if n != a {
                let g = (eig[a] - l).norm();
                if g.is_nan() || g < floor {
                    return Err(Error::GapTooSmall { gap: g.to_f64_lossy(), floor: floor.to_f64_lossy() });
                }
            }
        }
    }
    Ok(())
}

/// Partial state `(B_n, D_n)` of the recurrence.
#[derive(Debug, Clone)]
pub struct ChainState<T> {
    lambda: Vec<Complex<T>>,
    b: Vec<Complex<T>>,
    d: Vec<Complex<T>>,
    sum_b: T,
    sum_d: T,
    sum_bd: Complex<T>,
    entry_scale: T,
}

impl<T: Real> ChainState<T> {
    /// State at `n = 2`, given the entry `T₁₂`.
    pub fn start(spectrum: &Spectrum<T>, t12: Complex<T>) -> Result<Self> {
        let lambda = spectrum.eigenvalues().to_vec();
        if lambda.len() < 2 {
            return Err(Error::InvalidArgument("chain needs N >= 2".into()));
        }
        check_gaps(&lambda, 2)?;
        let one = Complex::new(T::one(), T::zero());
        let zero = Complex::new(T::zero(), T::zero());
        let b2 = t12 / (lambda[0] - lambda[1]);
        let n = lambda.len();
        let mut b = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        b.extend([one, b2]);
        d.extend([zero, one]);
        Ok(Self {
            sum_b: T::one() + b2.norm_sqr(),
            sum_d: T::one(),
            sum_bd: b2,
            lambda,
            b,
            d,
            entry_scale: T::one() / T::of_usize(n).sqrt(),
        })
    }

    /// Draws `T₁₂` from `rng`.
    pub fn start_random<R: Rng + ?Sized>(spectrum: &Spectrum<T>, rng: &mut R) -> Result<Self> {
        let scale = T::one() / T::of_usize(spectrum.len()).sqrt();
        let t12 = sample_standard_complex_gaussian::<T, _>(rng) * scale;
        Self::start(spectrum, t12)
    }

    /// Current size `n`.
    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn is_complete(&self) -> bool {
        self.b.len() == self.lambda.len()
    }

    pub fn b(&self) -> &[Complex<T>] {
        &self.b
    }

    pub fn d(&self) -> &[Complex<T>] {
        &self.d
    }

    /// Appends `b_{n+1}`, `d_{n+1}` given the column `(T_{1,n+1}, …, T_{n,n+1})`.
    pub fn advance_with(&mut self, column: &[Complex<T>]) {
        let n = self.n();
        assert!(n < self.lambda.len(), "chain already complete");
        assert_eq!(column.len(), n, "column length must equal current size");
        let zero = Complex::new(T::zero(), T::zero());
        let (mut bt, mut dt) = (zero, zero);
        for k in 0..n {
            bt += self.b[k] * column[k];
            dt += self.d[k] * column[k];
        }
        let ln = self.lambda[n];
        let bn = bt / (self.lambda[0] - ln);
        let dn = dt / (self.lambda[1] - ln);
        self.sum_b += bn.norm_sqr();
        self.sum_d += dn.norm_sqr();
        self.sum_bd += bn * dn.conj();
        self.b.push(bn);
        self.d.push(dn);
    }

    /// Draws the next column with i.i.d. entries of variance `1/N`.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.n();
        let column: Vec<Complex<T>> =
            (0..n).map(|_| sample_standard_complex_gaussian::<T, _>(rng) * self.entry_scale).collect();
        self.advance_with(&column);
    }

    pub fn o11(&self) -> T {
        self.sum_b
    }

    pub fn o12(&self) -> Complex<T> {
        -self.b[1].conj() * self.sum_bd
    }

    pub fn o22(&self) -> T {
        (T::one() + self.b[1].norm_sqr()) * self.sum_d
    }

    pub fn overlaps(&self) -> PairOverlaps<T> {
        PairOverlaps { o11: self.o11(), o12: self.o12(), o22: self.o22() }
    }
}

/// One joint draw of `(O₁₁, O₁₂, O₂₂)` for the first two eigenvalues of
/// `spectrum`, conditionally on the spectrum. O(N²) time, O(N) memory.
pub fn chain_overlaps<T: Real, R: Rng + ?Sized>(spectrum: &Spectrum<T>, rng: &mut R) -> Result<PairOverlaps<T>> {
    check_gaps(spectrum.eigenvalues(), 2)?;
    let mut st = ChainState::start_random(spectrum, rng)?;
    while !st.is_complete() {
        st.advance(rng);
    }
    Ok(st.overlaps())
}

/// `∏_{n≥2} (1 + |X_n|²/(N|λ₁−λ_n|²))` with standard complex Gaussians `X_n`.
pub fn quenched_diag_sample<T: Real, R: Rng + ?Sized>(spectrum: &Spectrum<T>, rng: &mut R) -> Result<T> {
    let eig = spectrum.eigenvalues();
    check_gaps(eig, 1)?;
    let n = T::of_usize(eig.len());
    let mut log = T::zero();
    for l in &eig[1..] {
        let x = sample_standard_complex_gaussian::<T, _>(rng);
        log += (x.norm_sqr() / (n * (eig[0] - l).norm_sqr())).ln_1p();
    }
    Ok(log.exp())
}

/// `E_T O₁₁ = ∏_{n≥2} (1 + 1/(N|λ₁−λ_n|²))`.
pub fn quenched_diag_expectation<T: Real>(spectrum: &Spectrum<T>) -> Result<T> {
    let eig = spectrum.eigenvalues();
    check_gaps(eig, 1)?;
    let n = T::of_usize(eig.len());
    let log = eig[1..].iter().fold(T::zero(), |acc, l| acc + (T::one() / (n * (eig[0] - l).norm_sqr())).ln_1p());
    Ok(log.exp())
}

/// `E_T O₁₂ = −1/(N|λ₁−λ₂|²) · ∏_{k≥3} (1 + 1/(N(λ₁−λ_k) conj(λ₂−λ_k)))`.
pub fn quenched_offdiag_expectation<T: Real>(spectrum: &Spectrum<T>) -> Result<Complex<T>> {
    let eig = spectrum.eigenvalues();
    if eig.len() < 2 {
        return Err(Error::InvalidArgument("need N >= 2".into()));
    }
    check_gaps(eig, 2)?;
    let n = T::of_usize(eig.len());
    let (mut log_mod, mut phase) = (T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    for l in &eig[2..] {
        let f = one + one / ((eig[0] - l) * (eig[1] - l).conj() * n);
        log_mod += f.norm().ln();
        phase += f.arg();
    }
    let pre = -T::one() / (n * (eig[0] - eig[1]).norm_sqr());
    Ok(Complex::from_polar(log_mod.exp(), phase) * pre)
}

/// Sign and log-modulus of a running real product.
#[derive(Debug, Clone, Copy)]
struct SignedLog<T> {
    negative: bool,
    log: T,
}

impl<T: Real> SignedLog<T> {
    fn one() -> Self {
        Self { negative: false, log: T::zero() }
    }

    fn mul(&mut self, x: T) {
        self.negative ^= x < T::zero();
        self.log += x.abs().ln();
    }

    fn value(self) -> T {
        let v = self.log.exp();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Weights turning `(d₊, d₋)` into `(E|O₁₂|², E O₁₁O₂₂)` once `b₂` is
/// integrated out.
pub fn combine_second_moments<T: Real>(geom: &PairGeometry<T>, d_plus: T, d_minus: T) -> SecondMoments<T> {
    let a = geom.a;
    let am1 = geom.a_minus_one();
    let ap1 = a + T::one();
    let w = T::one() / (T::one() + a * a);
    let a2 = a * a;
    SecondMoments {
        abs_o12_sq: w * (a2 / (ap1 * ap1) * d_plus + a2 / (am1 * am1) * d_minus),
        o11_o22: w * (d_plus / (ap1 * ap1) + a2 * a2 / (am1 * am1) * d_minus),
    }
}

/// Quenched `E|O₁₂|²` and `E O₁₁O₂₂` through the codiagonalized second-moment
/// recursion: `d± = ∏_{n≥3} λ±(n)` with
/// `λ±(n) = (1+|γ₁|²)(1+|γ₂|²) − |γ₁γ₂|²·{a, b}`, `γ_i = 1/(√N(λ_i−λ_n))`.
pub fn quenched_second_moments<T: Real>(spectrum: &Spectrum<T>) -> Result<SecondMoments<T>> {
    let eig = spectrum.eigenvalues();
    if eig.len() < 2 {
        return Err(Error::InvalidArgument("need N >= 2".into()));
    }
    check_gaps(eig, 2)?;
    let n = T::of_usize(eig.len());
    let geom = PairGeometry::from_points(eig.len(), eig[0], eig[1]);
    if geom.delta < T::of(DELTA_FLOOR) {
        return Err(Error::DeltaDegenerate { delta: geom.delta.to_f64_lossy() });
    }
    let (mut dp, mut dm) = (SignedLog::one(), SignedLog::one());
    for l in &eig[2..] {
        let p = T::one() / (n * (eig[0] - l).norm_sqr());
        let q = T::one() / (n * (eig[1] - l).norm_sqr());
        let base = (T::one() + p) * (T::one() + q);
        dp.mul(base - geom.a * p * q);
        dm.mul(base - geom.b * p * q);
    }
    Ok(combine_second_moments(&geom, dp.value(), dm.value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand_ensembles::RngStream;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn two_by_two_chain() {
        let sp = Spectrum::new(vec![c(0., 0.), c(1., 0.)]);
        let t12 = c(0.3, -0.4);
        let st = ChainState::start(&sp, t12).unwrap();
        assert!(st.is_complete());
        assert!((st.o11() - (1.0 + t12.norm_sqr())).abs() < 1e-15);
        assert!((st.o12() - c(-t12.norm_sqr(), 0.)).norm() < 1e-15);
    }

    #[test]
    fn quenched_expectation_examples() {
        let sp = Spectrum::new(vec![c(0., 0.), c(1., 0.)]);
        assert!((quenched_diag_expectation(&sp).unwrap() - 1.5).abs() < 1e-15);
        let n = 2.0f64;
        let omega = 0.7;
        let sp = Spectrum::new(vec![c(0., 0.), c(omega / n.sqrt(), 0.)]);
        assert!((quenched_diag_expectation(&sp).unwrap() - (1.0 + 1.0 / (omega * omega))).abs() < 1e-14);

        let z = c(0.3, 0.2);
        let sp = Spectrum::new(vec![c(0., 0.), z]);
        let e = quenched_offdiag_expectation(&sp).unwrap();
        assert!((e - c(-1.0 / (2.0 * z.norm_sqr()), 0.)).norm() < 1e-14);

        let w = c(-0.1, 0.5);
        let sp = Spectrum::new(vec![c(0., 0.), z, w]);
        let e = quenched_offdiag_expectation(&sp).unwrap();
        let expected = -1.0 / (3.0 * z.norm_sqr()) * (c(1., 0.) + 1.0 / ((-w) * (z - w).conj() * 3.0));
        assert!((e - expected).norm() < 1e-14);
    }

    #[test]
    fn empty_product_and_far_eigenvalues() {
        let mut rng = RngStream::new(1, 0);
        let sp = Spectrum::new(vec![c(0.2, 0.1)]);
        assert_eq!(quenched_diag_sample(&sp, &mut rng).unwrap(), 1.0);
        let sp = Spectrum::new(vec![c(0., 0.), c(1e8, 0.), c(0., 1e8)]);
        assert!((quenched_diag_sample(&sp, &mut rng).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_errors() {
        let mut rng = RngStream::new(1, 0);
        let sp = Spectrum::new(vec![c(0., 0.), c(0., 0.), c(1., 0.)]);
        assert!(matches!(chain_overlaps(&sp, &mut rng), Err(Error::GapTooSmall { .. })));
        assert!(matches!(quenched_diag_expectation(&sp), Err(Error::GapTooSmall { .. })));
    }

    #[test]
    fn n2_second_moments() {
        for &delta in &[0.3, 1.0, 4.0, 25.0] {
            let n = 2usize;
            let sp = Spectrum::new(vec![c(0., 0.), c((delta / n as f64).sqrt(), 0.)]);
            let m = quenched_second_moments(&sp).unwrap();
            assert!((m.abs_o12_sq / (2.0 / (delta * delta)) - 1.0).abs() < 1e-12);
            let e = 1.0 + 2.0 / delta + 2.0 / (delta * delta);
            assert!((m.o11_o22 / e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn b2_moments_by_sampling() {
        // at N = 2, O₁₁ = 1 + |b₂|²
        let mut rng = RngStream::new(3, 0);
        let draws = 200_000;
        for &delta in &[1.0, 4.0] {
            let sp = Spectrum::new(vec![c(0., 0.), c((delta / 2.0f64).sqrt(), 0.)]);
            let (mut m2, mut m4) = (0.0, 0.0);
            for _ in 0..draws {
                let b = chain_overlaps(&sp, &mut rng).unwrap().o11 - 1.0;
                m2 += b;
                m4 += b * b;
            }
            let (m2, m4) = (m2 / draws as f64, m4 / draws as f64);
            assert!((m2 * delta - 1.0).abs() < 0.02, "δ={delta}: {m2}");
            assert!((m4 * delta * delta / 2.0 - 1.0).abs() < 0.05, "δ={delta}: {m4}");
        }
    }

    #[test]
    fn tiny_delta_is_flagged() {
        let sp = Spectrum::new(vec![c(0., 0.), c(1e-6, 0.), c(0.5, 0.)]);
        assert!(matches!(quenched_second_moments(&sp), Err(Error::DeltaDegenerate { .. })));
    }

    #[test]
    fn geometry_identities() {
        for &d in &[1e-6, 1e-3, 1.0, 4.0, 1e3, 1e6] {
            let g = PairGeometry::<f64>::new(d);
            assert!((g.a * -g.b - 1.0).abs() < 1e-12);
            assert!((g.delta_from_a() / d - 1.0).abs() < 1e-12);
            assert!(g.a >= 1.0);
        }
    }
}
