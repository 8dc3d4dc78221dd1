//! Monte Carlo estimators: windowed conditional means, goodness-of-fit
//! distances, pseudospectrum volume and extreme-overlap scans.
//!
//! Every accumulator is a fold with an associative `merge`, so partial
//! results from parallel workers can be combined in any order.

use num_complex::Complex;

use crate::formulas::disk_integral_one_minus_abs2;
use crate::{Error, NeumaierSum, Real, Result};

/// Default window radius in units of `N^{-1/2}`.
pub const DEFAULT_WINDOW_SCALE: f64 = 0.3;

/// Disk `|λ − center| < radius` used to emulate conditioning on `λ₁ = center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskWindow<T> {
    pub center: Complex<T>,
    pub radius: T,
}

impl<T: Real> DiskWindow<T> {
    pub fn new(center: Complex<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidArgument(format!("window radius {radius} must be positive")));
        }
        Ok(Self { center, radius })
    }

    /// Radius `c·N^{-1/2}`.
    pub fn scaled(n: usize, center: Complex<T>, c: T) -> Result<Self> {
        Self::new(center, c / T::of_usize(n).sqrt())
    }

    pub fn default_for(n: usize, center: Complex<T>) -> Self {
        Self::scaled(n, center, T::of(DEFAULT_WINDOW_SCALE)).expect("positive default radius")
    }

    pub fn contains(&self, z: Complex<T>) -> bool {
        (z - self.center).norm_sqr() < self.radius * self.radius
    }

    pub fn area(&self) -> T {
        T::PI() * self.radius * self.radius
    }
}

/// Two disks plus a band `ω_min ≤ √N|λᵢ − λⱼ| ≤ ω_max` on the separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairWindow<T> {
    pub center1: Complex<T>,
    pub center2: Complex<T>,
    pub radius: T,
    pub omega_min: T,
    pub omega_max: T,
}

impl<T: Real> PairWindow<T> {
    pub fn new(center1: Complex<T>, center2: Complex<T>, radius: T, omega_min: T, omega_max: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidArgument(format!("window radius {radius} must be positive")));
        }
        if !(omega_min >= T::zero() && omega_max >= omega_min) {
            return Err(Error::InvalidArgument(format!("bad separation band [{omega_min}, {omega_max}]")));
        }
        Ok(Self { center1, center2, radius, omega_min, omega_max })
    }

    /// Both eigenvalues in one disk around `center`, separation in the band.
    pub fn band(center: Complex<T>, radius: T, omega_min: T, omega_max: T) -> Result<Self> {
        Self::new(center, center, radius, omega_min, omega_max)
    }

    pub fn is_disjoint(&self) -> bool {
        (self.center1 - self.center2).norm() > T::of(2.0) * self.radius
    }

    pub fn contains(&self, n: usize, z1: Complex<T>, z2: Complex<T>) -> bool {
        let r2 = self.radius * self.radius;
        if (z1 - self.center1).norm_sqr() >= r2 || (z2 - self.center2).norm_sqr() >= r2 {
            return false;
        }
        let omega = T::of_usize(n).sqrt() * (z1 - z2).norm();
        omega >= self.omega_min && omega <= self.omega_max
    }
}

/// Sample mean with its standard error `s/√count`; the error is absent for a
/// single sample. Complex means carry component-wise errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCI<V> {
    pub mean: V,
    pub std_error: Option<V>,
    pub count: usize,
}

impl<V> EstimateWithCI<V> {
    pub fn new(mean: V, std_error: Option<V>, count: usize) -> Self {
        Self { mean, std_error, count }
    }
}

pub type RealEstimate<T> = EstimateWithCI<T>;
pub type ComplexEstimate<T> = EstimateWithCI<Complex<T>>;

impl<T: Real> RealEstimate<T> {
    /// `|mean − target| ≤ k·std_error`; false when the error is absent.
    pub fn within_sigmas(&self, target: T, k: T) -> bool {
        self.std_error.is_some_and(|se| (self.mean - target).abs() <= k * se)
    }
}

/// Compensated running count, sum and sum of squares.
#[derive(Debug, Clone, Default)]
pub struct MomentAccumulator<T> {
    count: usize,
    sum: NeumaierSum<T>,
    sum_sq: NeumaierSum<T>,
}

impl<T: Real> MomentAccumulator<T> {
    pub fn new() -> Self {
        Self { count: 0, sum: NeumaierSum::new(), sum_sq: NeumaierSum::new() }
    }

    pub fn push(&mut self, x: T) {
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sum(&self) -> T {
        self.sum.value()
    }

    pub fn mean(&self) -> Option<T> {
        (self.count > 0).then(|| self.sum.value() / T::of_usize(self.count))
    }

    pub fn estimate(&self) -> Result<RealEstimate<T>> {
        let mean = self.mean().ok_or(Error::EmptyWindow)?;
        let se = (self.count > 1).then(|| {
            let n = T::of_usize(self.count);
            let var = ((self.sum_sq.value() - self.sum.value() * mean) / (n - T::one())).max(T::zero());
            (var / n).sqrt()
        });
        Ok(EstimateWithCI::new(mean, se, self.count))
    }
}

/// Component-wise complex moments.
#[derive(Debug, Clone, Default)]
pub struct ComplexAccumulator<T> {
    re: MomentAccumulator<T>,
    im: MomentAccumulator<T>,
}

impl<T: Real> ComplexAccumulator<T> {
    pub fn new() -> Self {
        Self { re: MomentAccumulator::new(), im: MomentAccumulator::new() }
    }

    pub fn push(&mut self, z: Complex<T>) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn merge(&mut self, other: &Self) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn estimate(&self) -> Result<ComplexEstimate<T>> {
        let re = self.re.estimate()?;
        let im = self.im.estimate()?;
        let se = re.std_error.zip(im.std_error).map(|(a, b)| Complex::new(a, b));
        Ok(EstimateWithCI::new(Complex::new(re.mean, im.mean), se, re.count))
    }
}

/// Output of [`conditional_diag_stats`].
#[derive(Debug, Clone)]
pub struct DiagEstimate<T> {
    pub estimate: RealEstimate<T>,
    /// `𝒪ᵢᵢ/(N(1−|λᵢ|²))` for every hit, sorted ascending.
    pub normalized: Vec<T>,
}

/// Fold for windowed diagonal overlaps.
#[derive(Debug, Clone)]
pub struct DiagAccumulator<T> {
    n: usize,
    window: DiskWindow<T>,
    moments: MomentAccumulator<T>,
    normalized: Vec<T>,
}

impl<T: Real> DiagAccumulator<T> {
    pub fn new(n: usize, window: DiskWindow<T>) -> Self {
        Self { n, window, moments: MomentAccumulator::new(), normalized: Vec::new() }
    }

    /// Records `(λ, 𝒪)` if `λ` is in the window; returns whether it was.
    pub fn push(&mut self, lambda: Complex<T>, o: T) -> bool {
        if !self.window.contains(lambda) {
            return false;
        }
        self.moments.push(o);
        self.normalized.push(o / (T::of_usize(self.n) * (T::one() - lambda.norm_sqr())));
        true
    }

    pub fn push_matrix(&mut self, eigenvalues: &[Complex<T>], diag: &[T]) {
        for (&l, &o) in eigenvalues.iter().zip(diag) {
            self.push(l, o);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.moments.merge(&other.moments);
        self.normalized.extend_from_slice(&other.normalized);
    }

    pub fn count(&self) -> usize {
        self.moments.count()
    }

    pub fn finish(mut self) -> Result<DiagEstimate<T>> {
        let estimate = self.moments.estimate()?;
        self.normalized.sort_by(|a, b| a.partial_cmp(b).expect("finite overlaps"));
        Ok(DiagEstimate { estimate, normalized: self.normalized })
    }
}

/// Windowed estimate of `E(𝒪₁₁ | λ₁ ≈ z)` and the normalized sample.
pub fn conditional_diag_stats<T: Real>(
    n: usize,
    samples: impl IntoIterator<Item = (Complex<T>, T)>,
    window: DiskWindow<T>,
) -> Result<DiagEstimate<T>> {
    let mut acc = DiagAccumulator::new(n, window);
    for (l, o) in samples {
        acc.push(l, o);
    }
    acc.finish()
}

/// One ordered pair observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample<T> {
    pub lambda_i: Complex<T>,
    pub lambda_j: Complex<T>,
    pub o_ij: Complex<T>,
    pub o_ii: T,
    pub o_jj: T,
}

/// Output of [`conditional_pair_stats`].
#[derive(Debug, Clone)]
pub struct PairEstimate<T> {
    pub o12: ComplexEstimate<T>,
    pub abs_o12_sq: RealEstimate<T>,
    pub o11_o22: RealEstimate<T>,
    pub o11: RealEstimate<T>,
    pub o22: RealEstimate<T>,
    /// Number of matrices that contributed at least one pair.
    pub matrices: usize,
}

impl<T: Real> PairEstimate<T> {
    /// `E𝒪₁₁𝒪₂₂ / (E𝒪₁₁·E𝒪₂₂)`.
    pub fn correlation_ratio(&self) -> T {
        self.o11_o22.mean / (self.o11.mean * self.o22.mean)
    }
}

/// Fold for windowed pair statistics.
#[derive(Debug, Clone)]
pub struct PairAccumulator<T> {
    n: usize,
    window: PairWindow<T>,
    o12: ComplexAccumulator<T>,
    abs_sq: MomentAccumulator<T>,
    prod: MomentAccumulator<T>,
    o11: MomentAccumulator<T>,
    o22: MomentAccumulator<T>,
    matrices: usize,
}

impl<T: Real> PairAccumulator<T> {
    pub fn new(n: usize, window: PairWindow<T>) -> Self {
        Self {
            n,
            window,
            o12: ComplexAccumulator::new(),
            abs_sq: MomentAccumulator::new(),
            prod: MomentAccumulator::new(),
            o11: MomentAccumulator::new(),
            o22: MomentAccumulator::new(),
            matrices: 0,
        }
    }

    pub fn push(&mut self, s: &PairSample<T>) -> bool {
        if !self.window.contains(self.n, s.lambda_i, s.lambda_j) {
            return false;
        }
        self.o12.push(s.o_ij);
        self.abs_sq.push(s.o_ij.norm_sqr());
        self.prod.push(s.o_ii * s.o_jj);
        self.o11.push(s.o_ii);
        self.o22.push(s.o_jj);
        true
    }

    /// All ordered pairs `i ≠ j` of one matrix; `o(i, j)` returns `𝒪ᵢⱼ`.
    pub fn push_matrix(&mut self, eigenvalues: &[Complex<T>], o: impl Fn(usize, usize) -> Complex<T>) {
        let mut hit = false;
        for i in 0..eigenvalues.len() {
            for j in 0..eigenvalues.len() {
                if i == j {
                    continue;
                }
                let s = PairSample {
                    lambda_i: eigenvalues[i],
                    lambda_j: eigenvalues[j],
                    o_ij: o(i, j),
                    o_ii: o(i, i).re,
                    o_jj: o(j, j).re,
                };
                hit |= self.push(&s);
            }
        }
        self.matrices += hit as usize;
    }

    pub fn merge(&mut self, other: &Self) {
        self.o12.merge(&other.o12);
        self.abs_sq.merge(&other.abs_sq);
        self.prod.merge(&other.prod);
        self.o11.merge(&other.o11);
        self.o22.merge(&other.o22);
        self.matrices += other.matrices;
    }

    pub fn count(&self) -> usize {
        self.abs_sq.count()
    }

    pub fn finish(&self) -> Result<PairEstimate<T>> {
        Ok(PairEstimate {
            o12: self.o12.estimate()?,
            abs_o12_sq: self.abs_sq.estimate()?,
            o11_o22: self.prod.estimate()?,
            o11: self.o11.estimate()?,
            o22: self.o22.estimate()?,
            matrices: self.matrices,
        })
    }
}

/// Windowed estimates of `E𝒪₁₂`, `E|𝒪₁₂|²` and `E𝒪₁₁𝒪₂₂`.
pub fn conditional_pair_stats<T: Real>(
    n: usize,
    samples: impl IntoIterator<Item = PairSample<T>>,
    window: PairWindow<T>,
) -> Result<PairEstimate<T>> {
    let mut acc = PairAccumulator::new(n, window);
    for s in samples {
        acc.push(&s);
    }
    acc.finish()
}

/// `sup_x |F_n(x) − F(x)|` for an ascending sample.
///
/// Ties are grouped. Both one-sided limits are compared at every distinct
/// sample value; the left limit of `cdf` is read one ulp-scale step below the
/// value, so a point mass checked against its own step CDF gives 0.
pub fn ks_distance<T: Real>(sorted: &[T], cdf: impl Fn(T) -> T) -> T {
    assert!(!sorted.is_empty(), "empty sample");
    let n = T::of_usize(sorted.len());
    let mut d = T::zero();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let below = v - (v.abs() * T::epsilon() * T::of(4.0)).max(T::min_positive_value());
        let lower = T::of_usize(i) / n;
        let upper = T::of_usize(j) / n;
        d = d.max((upper - cdf(v)).abs()).max((cdf(below) - lower).abs());
        i = j;
    }
    d.min(T::one())
}

/// Two-sample statistic `sup_x |F_a(x) − F_b(x)|` for ascending samples.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> T {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let (na, nb) = (T::of_usize(a.len()), T::of_usize(b.len()));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((T::of_usize(i) / na - T::of_usize(j) / nb).abs());
    }
    d
}

/// Kolmogorov survival function `P(K > λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic two-sample p-value for distance `d` between samples of sizes
/// `na`, `nb`.
pub fn ks_two_sample_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

/// Asymptotic one-sample critical distance `√(−ln(α/2)/2)/√n`
/// (≈ 1.63/√n at α = 0.01).
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// One line of a goodness-of-fit report.
#[derive(Debug, Clone, PartialEq)]
pub struct KsReport {
    pub test_name: String,
    pub n: usize,
    pub distance: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl KsReport {
    pub fn new(test_name: impl Into<String>, n: usize, distance: f64, threshold: f64) -> Self {
        Self { test_name: test_name.into(), n, distance, threshold, pass: distance < threshold }
    }
}

/// Median of an ascending sample.
pub fn median<T: Real>(sorted: &[T]) -> Option<T> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / T::of(2.0)),
    }
}

/// `(Σ_{λⱼ∈ball} π𝒪ⱼⱼε², ε²N²∫_ball(1−|z|²)dm)`.
pub fn pseudospectrum_volume<T: Real>(eigenvalues: &[Complex<T>], diag: &[T], ball: &DiskWindow<T>, eps: T) -> (T, T) {
    assert_eq!(eigenvalues.len(), diag.len());
    let n = T::of_usize(eigenvalues.len());
    let mut s = NeumaierSum::new();
    for (&l, &o) in eigenvalues.iter().zip(diag) {
        if ball.contains(l) {
            s.add(o);
        }
    }
    let e2 = eps * eps;
    let empirical = T::PI() * s.value() * e2;
    let predicted = e2 * n * n * disk_integral_one_minus_abs2(ball.center, ball.radius);
    (empirical, predicted)
}

/// Union of disks and annuli.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionPiece<T> {
    Disk { center: Complex<T>, radius: T },
    Annulus { center: Complex<T>, inner: T, outer: T },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Region<T> {
    pub pieces: Vec<RegionPiece<T>>,
}

impl<T: Real> Region<T> {
    pub fn disk(center: Complex<T>, radius: T) -> Self {
        Self { pieces: vec![RegionPiece::Disk { center, radius }] }
    }

    /// The bulk `|z| < 1 − N^{−1/2+κ}`.
    pub fn bulk(n: usize, kappa: T) -> Self {
        let r = T::one() - T::of_usize(n).powf(kappa - T::of(0.5));
        Self::disk(Complex::new(T::zero(), T::zero()), r.max(T::zero()))
    }

    pub fn contains(&self, z: Complex<T>) -> bool {
        self.pieces.iter().any(|p| match *p {
            RegionPiece::Disk { center, radius } => (z - center).norm() < radius,
            RegionPiece::Annulus { center, inner, outer } => {
                let r = (z - center).norm();
                r >= inner && r < outer
            }
        })
    }
}

/// Extreme diagonal overlaps in a region, with bound checks
/// `𝒪ᵢᵢ ≥ N^{lower}` and `𝒪ᵢᵢ ≤ N^{upper}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremesReport<T> {
    pub count: usize,
    pub min: Option<T>,
    pub max: Option<T>,
    pub lower_violated: bool,
    pub upper_violated: bool,
}

pub fn extremes_scan<T: Real>(
    eigenvalues: &[Complex<T>],
    diag: &[T],
    region: &Region<T>,
    lower_exponent: Option<T>,
    upper_exponent: Option<T>,
) -> ExtremesReport<T> {
    let n = T::of_usize(eigenvalues.len());
    let mut min: Option<T> = None;
    let mut max: Option<T> = None;
    let mut count = 0;
    for (&l, &o) in eigenvalues.iter().zip(diag) {
        if region.contains(l) {
            count += 1;
            min = Some(min.map_or(o, |m| m.min(o)));
            max = Some(max.map_or(o, |m| m.max(o)));
        }
    }
    let lower_violated = matches!((min, lower_exponent), (Some(m), Some(e)) if m < n.powf(e));
    let upper_violated = matches!((max, upper_exponent), (Some(m), Some(e)) if m > n.powf(e));
    ExtremesReport { count, min, max, lower_violated, upper_violated }
}

/// Fixed-bin histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0);
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Self { edges, counts: vec![0; bins], total: 0 }
    }

    /// Counts `x` in its bin (values outside the range only add to `total`).
    pub fn push(&mut self, x: f64) {
        self.total += 1;
        let bins = self.counts.len();
        let (lo, hi) = (self.edges[0], self.edges[bins]);
        if x >= lo && x < hi {
            let i = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            self.counts[i.min(bins - 1)] += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.edges, other.edges);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    /// `(bin center, count/(total·width))`.
    pub fn density(&self) -> Vec<(f64, f64)> {
        let total = self.total.max(1) as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let w = self.edges[i + 1] - self.edges[i];
                ((self.edges[i] + self.edges[i + 1]) / 2.0, c as f64 / (total * w))
            })
            .collect()
    }
}
