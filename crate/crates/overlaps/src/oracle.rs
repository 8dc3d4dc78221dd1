//! Brute-force verifiers, independent of the closed forms they check.
//!
//! Everything here runs in `f64`: tridiagonal determinant recursions,
//! Andréief moment matrices by quadrature against `μ(dλ) = (N/π)e^{−N|λ|²}dm`,
//! adaptive polar integration over disks with excluded holes, and a suite
//! runner used by the `verify` subcommand.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::formulas::{exp_partial_sum, g_closed_form, g_sequence, ginibre_kernel, recurrence_m1, recurrence_m2, second_moment_exact_origin, u_coefficient, Upper};
use crate::schur_chain::{combine_second_moments, PairGeometry, SecondMoments};
use crate::{ComplexMatrix, Error, Result};

type C = Complex<f64>;

/// Tridiagonal matrix: `diag` has length `k`, `sub[i]` is entry `(i+1, i)`
/// and `sup[i]` is entry `(i, i+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSpec {
    pub diag: Vec<C>,
    pub sub: Vec<C>,
    pub sup: Vec<C>,
}

impl TridiagonalSpec {
    pub fn new(diag: Vec<C>, sub: Vec<C>, sup: Vec<C>) -> Result<Self> {
        let k = diag.len();
        if k == 0 || sub.len() != k - 1 || sup.len() != k - 1 {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal lengths {}, {}, {} are inconsistent",
                k,
                sub.len(),
                sup.len()
            )));
        }
        Ok(Self { diag, sub, sup })
    }

    pub fn to_dense(&self) -> ComplexMatrix<f64> {
        let k = self.diag.len();
        ComplexMatrix::from_fn(k, |i, j| {
            if i == j {
                self.diag[i]
            } else if i == j + 1 {
                self.sub[j]
            } else if j == i + 1 {
                self.sup[i]
            } else {
                C::new(0.0, 0.0)
            }
        })
    }
}

/// Determinant as `mantissa · e^{ln_scale}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledDet {
    pub mantissa: C,
    pub ln_scale: f64,
}

impl ScaledDet {
    pub fn value(&self) -> C {
        self.mantissa * self.ln_scale.exp()
    }

    /// `value · e^{shift}` without forming the intermediate value.
    pub fn shifted(&self, shift: f64) -> C {
        self.mantissa * (self.ln_scale + shift).exp()
    }
}

/// `d_k = f_kk d_{k−1} − f_{k,k−1} f_{k−1,k} d_{k−2}`, renormalizing the
/// last two terms whenever they leave `[1e−100, 1e100]`.
pub fn tridiag_det(spec: &TridiagonalSpec) -> ScaledDet {
    let mut prev = C::new(1.0, 0.0);
    let mut cur = spec.diag[0];
    let mut ln_scale = 0.0;
    for k in 1..spec.diag.len() {
        let next = spec.diag[k] * cur - spec.sub[k - 1] * spec.sup[k - 1] * prev;
        prev = cur;
        cur = next;
        let m = cur.norm().max(prev.norm());
        if m > 0.0 && !(1e-100..=1e100).contains(&m) {
            prev /= m;
            cur /= m;
            ln_scale += m.ln();
        }
    }
    ScaledDet { mantissa: cur, ln_scale }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn dense_det(m: &ComplexMatrix<f64>) -> C {
    let n = m.dim();
    let mut a = m.clone();
    let mut det = C::new(1.0, 0.0);
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[(i, col)].norm().partial_cmp(&a[(j, col)].norm()).unwrap()).unwrap();
        if a[(p, col)].norm() == 0.0 {
            return C::new(0.0, 0.0);
        }
        if p != col {
            for j in 0..n {
                let t = a[(p, j)];
                a[(p, j)] = a[(col, j)];
                a[(col, j)] = t;
            }
            det = -det;
        }
        let piv = a[(col, col)];
        det *= piv;
        for i in col + 1..n {
            let f = a[(i, col)] / piv;
            if f.norm() == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a[(col, j)];
                a[(i, j)] -= f * v;
            }
        }
    }
    det
}

/// The three determinant families whose rescaled values have closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AkFamily {
    /// Normalization with one conditioned eigenvalue: `a_k = e^{(k)}(x)`.
    Conditioned,
    /// Mean diagonal overlap: `a_k = (k+1)e^{(k+1)}(x) − x e^{(k)}(x)`.
    MeanDiag,
    /// Mean off-diagonal overlap at the origin: `a_k = (k+2)x^{−2}e₂^{(k+2)}(x)`.
    MeanOffDiag,
}

impl AkFamily {
    pub const ALL: [AkFamily; 3] = [AkFamily::Conditioned, AkFamily::MeanDiag, AkFamily::MeanOffDiag];

    pub fn name(self) -> &'static str {
        match self {
            AkFamily::Conditioned => "conditioned_normalization",
            AkFamily::MeanDiag => "mean_diag",
            AkFamily::MeanOffDiag => "mean_offdiag",
        }
    }

    /// `f_ii`, `f_{i,i+1}`, `f_{i,i−1}` (1-based `i`) and the exponent `p`
    /// with `a_k = d_k N^p`.
    fn entries(self, n: f64, z: C, k: usize) -> (TridiagonalSpec, f64) {
        let z2 = z.norm_sqr();
        let pw = |e: usize| n.powi(-(e as i32));
        let diag_of = |i: usize| -> f64 {
            let fi = i as f64;
            match self {
                AkFamily::Conditioned => pw(i) + z2 / (fi * n.powi(i as i32 - 1)),
                AkFamily::MeanDiag => pw(i) + (1.0 / n + z2) / (fi * n.powi(i as i32 - 1)),
                AkFamily::MeanOffDiag => pw(i + 1) + z2 / ((fi + 1.0) * n.powi(i as i32)) + 1.0 / ((fi + 1.0) * n.powi(i as i32 + 1)),
            }
        };
        let sup_of = |i: usize| -> C {
            match self {
                AkFamily::Conditioned | AkFamily::MeanDiag => -z.conj() * pw(i),
                AkFamily::MeanOffDiag => -z.conj() * pw(i + 1),
            }
        };
        let sub_of = |i: usize| -> C {
            let fi = i as f64;
            match self {
                AkFamily::Conditioned | AkFamily::MeanDiag => -z / (fi * n.powi(i as i32 - 1)),
                AkFamily::MeanOffDiag => -z / (fi * n.powi(i as i32)),
            }
        };
        let diag = (1..=k).map(|i| C::new(diag_of(i), 0.0)).collect();
        let sup = (1..k).map(sup_of).collect();
        let sub = (2..=k).map(sub_of).collect();
        let kf = k as f64;
        let p = match self {
            AkFamily::Conditioned | AkFamily::MeanDiag => kf * (kf + 1.0) / 2.0,
            AkFamily::MeanOffDiag => kf * (kf + 3.0) / 2.0,
        };
        (TridiagonalSpec { diag, sub, sup }, p)
    }

    fn closed_form(self, x: f64, k: usize) -> f64 {
        let e = |lo: u64, hi: u64| exp_partial_sum(lo, Upper::Finite(hi), x).expect("finite partial sum");
        let k = k as u64;
        match self {
            AkFamily::Conditioned => e(0, k),
            AkFamily::MeanDiag => (k + 1) as f64 * e(0, k + 1) - x * e(0, k),
            AkFamily::MeanOffDiag => (k + 2) as f64 * e(2, k + 2) / (x * x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AkCheck {
    pub family: AkFamily,
    pub k: usize,
    pub x: f64,
    pub determinant: f64,
    pub closed_form: f64,
    pub rel_err: f64,
}

/// Builds each family's tridiagonal matrix from its entries (with `N = k+2`
/// and a non-real `z`, `N|z|² = x`), rescales the determinant and compares it
/// with the closed form.
pub fn verify_ak_closed_forms(x: f64, k: usize) -> Vec<AkCheck> {
    assert!(x > 0.0 && k >= 1);
    let n = (k + 2) as f64;
    let z = C::from_polar((x / n).sqrt(), 0.7);
    AkFamily::ALL
        .iter()
        .map(|&family| {
            let (spec, p) = family.entries(n, z, k);
            let det = tridiag_det(&spec).shifted(p * n.ln());
            let closed = family.closed_form(x, k);
            AkCheck { family, k, x, determinant: det.re, closed_form: closed, rel_err: (det - closed).norm() / closed.abs() }
        })
        .collect()
}

/// `n`-point Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `n`-point Gauss–Laguerre nodes and weights for `∫₀^∞ f(s)e^{−s}ds`.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2])
            }
        };
        let mut p2 = 0.0;
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut q2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = q2;
                q2 = p1;
                p1 = ((2 * j + 1) as f64 - z) * q2 / (j + 1) as f64 - j as f64 * p3 / (j + 1) as f64;
            }
            p2 = q2;
            pp = nf * (p1 - q2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    (x, w)
}

/// Integration domain for [`QuadratureGrid`] and [`disk_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Disk { center: C, radius: f64 },
    Annulus { center: C, inner: f64, outer: f64 },
}

impl Domain {
    pub fn unit_disk() -> Self {
        Domain::Disk { center: C::new(0.0, 0.0), radius: 1.0 }
    }

    fn polar(&self) -> (C, f64, f64) {
        match *self {
            Domain::Disk { center, radius } => (center, 0.0, radius),
            Domain::Annulus { center, inner, outer } => (center, inner, outer),
        }
    }

    pub fn area(&self) -> f64 {
        let (_, a, b) = self.polar();
        PI * (b * b - a * a)
    }
}

/// Fixed tensor rule: Gauss–Legendre in the radius, trapezoid in the angle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub domain: Domain,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub points: Vec<C>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(domain: Domain, radial_nodes: usize, angular_nodes: usize) -> Self {
        let (c, a, b) = domain.polar();
        let (xs, ws) = gauss_legendre(radial_nodes);
        let mut points = Vec::with_capacity(radial_nodes * angular_nodes);
        let mut weights = Vec::with_capacity(radial_nodes * angular_nodes);
        let dtheta = 2.0 * PI / angular_nodes as f64;
        for (x, w) in xs.iter().zip(&ws) {
            let r = a + (b - a) * (x + 1.0) / 2.0;
            let wr = w * (b - a) / 2.0 * r;
            for m in 0..angular_nodes {
                points.push(c + C::from_polar(r, m as f64 * dtheta));
                weights.push(wr * dtheta);
            }
        }
        Self { domain, radial_nodes, angular_nodes, points, weights }
    }

    pub fn integrate(&self, f: impl Fn(C) -> C) -> C {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| f(p) * w).sum()
    }
}

/// Rule for `∫ F dμ` with `μ(dλ) = (N/π)e^{−N|λ|²}dm(λ)`: with
/// `λ = √(s/N)e^{iθ}`, `μ` becomes `e^{−s}ds·dθ/2π`, so Gauss–Laguerre in
/// `s` times the trapezoid rule in `θ`. Exact on polynomials in `λ, λ̄` of
/// low enough degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrid {
    pub n: usize,
    pub points: Vec<C>,
    pub weights: Vec<f64>,
}

impl GaussianGrid {
    pub fn new(n: usize, radial_nodes: usize, angular_nodes: usize) -> Self {
        let (s, ws) = gauss_laguerre(radial_nodes);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (si, wi) in s.iter().zip(&ws) {
            let r = (si / n as f64).sqrt();
            for m in 0..angular_nodes {
                points.push(C::from_polar(r, 2.0 * PI * m as f64 / angular_nodes as f64));
                weights.push(wi / angular_nodes as f64);
            }
        }
        Self { n, points, weights }
    }

    pub fn integrate(&self, f: impl Fn(C) -> C) -> C {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| f(p) * w).sum()
    }
}

fn gl_panel(f: &dyn Fn(f64) -> C, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> C {
    let (h, m) = ((b - a) / 2.0, (b + a) / 2.0);
    rule.0.iter().zip(&rule.1).map(|(x, w)| f(m + h * x) * *w).sum::<C>() * h
}

struct Adaptive {
    lo: (Vec<f64>, Vec<f64>),
    hi: (Vec<f64>, Vec<f64>),
    max_depth: u32,
}

impl Adaptive {
    fn new() -> Self {
        Self { lo: gauss_legendre(8), hi: gauss_legendre(16), max_depth: 40 }
    }

    /// Returns (value, error estimate).
    fn integrate(&self, f: &dyn Fn(f64) -> C, a: f64, b: f64, tol: f64, depth: u32) -> (C, f64) {
        let coarse = gl_panel(f, a, b, &self.lo);
        let fine = gl_panel(f, a, b, &self.hi);
        let err = (fine - coarse).norm();
        if err <= tol || depth >= self.max_depth || (b - a) < 1e-14 {
            return (fine, err);
        }
        let m = (a + b) / 2.0;
        let (l, el) = self.integrate(f, a, m, tol / 2.0, depth + 1);
        let (r, er) = self.integrate(f, m, b, tol / 2.0, depth + 1);
        (l + r, el + er)
    }
}

/// Radial sub-intervals of the ray `center + ρe^{iθ}`, `ρ ∈ [a, b]`, lying
/// outside all excluded disks.
fn ray_intervals(center: C, theta: f64, a: f64, b: f64, holes: &[(C, f64)]) -> Vec<(f64, f64)> {
    let mut out = vec![(a, b)];
    let dir = C::from_polar(1.0, theta);
    for &(c, eps) in holes {
        let d = center - c;
        let p = (d * dir.conj()).re;
        let disc = p * p - (d.norm_sqr() - eps * eps);
        if disc <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let (lo, hi) = (-p - sq, -p + sq);
        out = out
            .into_iter()
            .flat_map(|(s, e)| {
                let mut v = Vec::new();
                if lo > s {
                    v.push((s, lo.min(e)));
                }
                if hi < e {
                    v.push((hi.max(s), e));
                }
                v.into_iter().filter(|(s, e)| e > s)
            })
            .collect();
    }
    out
}

/// `∫_{domain ∖ ∪ holes} f dm` by nested adaptive Gauss–Legendre in polar
/// coordinates about the domain center. Returns the value and an absolute
/// error estimate; fails when the estimate exceeds `tol`.
pub fn disk_integral(f: impl Fn(C) -> C, domain: Domain, holes: &[(C, f64)], tol: f64) -> Result<(C, f64)> {
    let (center, a, b) = domain.polar();
    let ad = Adaptive::new();
    let inner_tol = tol * 1e-2;
    let inner = |theta: f64| -> C {
        let dir = C::from_polar(1.0, theta);
        ray_intervals(center, theta, a, b, holes)
            .into_iter()
            .map(|(s, e)| {
                let g = |rho: f64| f(center + dir * rho) * rho;
                ad.integrate(&g, s, e, inner_tol / (2.0 * PI), 0).0
            })
            .sum()
    };
    // split the angle so each panel sees at most a few features
    let panels = 16;
    let mut total = C::new(0.0, 0.0);
    let mut err = 0.0;
    for p in 0..panels {
        let t0 = 2.0 * PI * p as f64 / panels as f64;
        let t1 = 2.0 * PI * (p + 1) as f64 / panels as f64;
        let (v, e) = ad.integrate(&inner, t0, t1, tol / panels as f64, 0);
        total += v;
        err += e;
    }
    if !(err <= tol) || !total.re.is_finite() || !total.im.is_finite() {
        return Err(Error::ToleranceNotReached { estimate: err });
    }
    Ok((total, err))
}

/// Conditioning of the Andréief moment matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditioning {
    None,
    /// `λ₁ = z`.
    One(C),
    /// `λ₁ = 0`, `λ₂ = z`.
    OriginAnd(C),
}

/// `E ∏ g(λ_k)` over the unconditioned eigenvalues, as a normalized
/// determinant of quadrature moments `f_ij`:
/// - none: `f_ij = ∫λ^{i−1}λ̄^{j−1}g dμ/(j−1)!`, result `N^{N(N−1)/2} det f`;
/// - `λ₁ = z`: `f_ij = ∫λ^{i−1}λ̄^{j−1}|z−λ|²g dμ/j!`, divided by
///   `N^{−N(N−1)/2} e^{(N−1)}(N|z|²)`;
/// - `(0, z)`: `f_ij = ∫λ^{i−1}λ̄^{j−1}|λ|²|z−λ|²g dμ/(i+1)!`, divided by
///   `N^{−(N−2)(N+1)/2} e₁^{(N−1)}(N|z|²)/(N|z|²)`.
///
/// The grid is refined once; the two results must agree within `tol`
/// (relative).
pub fn andreief_moment_matrix(g: impl Fn(C) -> C, n: usize, conditioning: Conditioning, tol: f64) -> Result<C> {
    if !(1..=6).contains(&n) {
        return Err(Error::InvalidArgument(format!("N = {n} outside 1..=6")));
    }
    let coarse = andreief_on_grid(&g, n, conditioning, &GaussianGrid::new(n, 24, 48))?;
    let fine = andreief_on_grid(&g, n, conditioning, &GaussianGrid::new(n, 48, 96))?;
    let err = (fine - coarse).norm() / fine.norm().max(f64::MIN_POSITIVE);
    if !(err <= tol) {
        return Err(Error::ToleranceNotReached { estimate: err });
    }
    Ok(fine)
}

fn ln_fact(m: usize) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

fn andreief_on_grid(g: &dyn Fn(C) -> C, n: usize, conditioning: Conditioning, grid: &GaussianGrid) -> Result<C> {
    let nf = n as f64;
    let (size, weight, row_norm, col_norm): (usize, Box<dyn Fn(C) -> f64>, fn(usize) -> f64, fn(usize) -> f64) = match conditioning {
        Conditioning::None => (n, Box::new(|_| 1.0), |_| 0.0, |j| ln_fact(j - 1)),
        Conditioning::One(z) => {
            if n < 2 {
                return Err(Error::InvalidArgument("conditioning needs N >= 2".into()));
            }
            (n - 1, Box::new(move |l: C| (z - l).norm_sqr()), |_| 0.0, ln_fact)
        }
        Conditioning::OriginAnd(z) => {
            if n < 3 {
                return Err(Error::InvalidArgument("two conditioned points need N >= 3".into()));
            }
            (n - 2, Box::new(move |l: C| l.norm_sqr() * (z - l).norm_sqr()), |i| ln_fact(i + 1), |_| 0.0)
        }
    };
    let m = ComplexMatrix::from_fn(size, |r, c| {
        let (i, j) = (r + 1, c + 1);
        let v = grid.integrate(|l| l.powu((i - 1) as u32) * l.conj().powu((j - 1) as u32) * weight(l) * g(l));
        v * (-(row_norm(i) + col_norm(j))).exp()
    });
    let det = dense_det(&m);
    let ln_norm = match conditioning {
        Conditioning::None => nf * (nf - 1.0) / 2.0 * nf.ln(),
        Conditioning::One(z) => {
            let x = nf * z.norm_sqr();
            nf * (nf - 1.0) / 2.0 * nf.ln() - exp_partial_sum(0, Upper::Finite(n as u64 - 1), x)?.ln()
        }
        Conditioning::OriginAnd(z) => {
            let x = nf * z.norm_sqr();
            (nf - 2.0) * (nf + 1.0) / 2.0 * nf.ln() - (exp_partial_sum(1, Upper::Finite(n as u64 - 1), x)? / x).ln()
        }
    };
    Ok(det * ln_norm.exp())
}

/// `(E|O₁₂|², E O₁₁O₂₂)` given `λ₁ = 0`, `λ₂ = z`, with `E d±` from the
/// Andréief quadrature of the per-step factors
/// `λ±(λ) = (1+p)(1+q) − pq·{a, b}`, `p = 1/(N|λ|²)`, `q = 1/(N|z−λ|²)`.
pub fn small_n_second_moment_oracle(n: usize, z: C) -> Result<SecondMoments<f64>> {
    if !(3..=6).contains(&n) || z.norm() == 0.0 {
        return Err(Error::InvalidArgument(format!("need 3 <= N <= 6 and z != 0, got N = {n}, z = {z}")));
    }
    let geom = PairGeometry::<f64>::from_points(n, C::new(0.0, 0.0), z);
    let nf = n as f64;
    let factor = |x: f64| {
        move |l: C| {
            let p = 1.0 / (nf * l.norm_sqr());
            let q = 1.0 / (nf * (z - l).norm_sqr());
            C::new((1.0 + p) * (1.0 + q) - p * q * x, 0.0)
        }
    };
    let d_plus = andreief_moment_matrix(factor(geom.a), n, Conditioning::OriginAnd(z), 1e-9)?.re;
    let d_minus = andreief_moment_matrix(factor(geom.b), n, Conditioning::OriginAnd(z), 1e-9)?.re;
    Ok(combine_second_moments(&geom, d_plus, d_minus))
}

/// One line of the oracle suite.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn relative(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        let error = ((value - reference) / reference).abs();
        Self { name: name.into(), value, reference, error, tolerance, pass: error < tolerance }
    }

    fn absolute(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        let error = (value - reference).abs();
        Self { name: name.into(), value, reference, error, tolerance, pass: error < tolerance }
    }

    fn failed(name: impl Into<String>, e: Error, tolerance: f64) -> Self {
        Self { name: format!("{} ({e})", name.into()), value: f64::NAN, reference: f64::NAN, error: f64::INFINITY, tolerance, pass: false }
    }
}

/// Worst case of a group of checks, reported as one line.
fn worst(name: &str, checks: impl IntoIterator<Item = OracleCheck>) -> OracleCheck {
    checks
        .into_iter()
        .max_by(|a, b| (a.error / a.tolerance).partial_cmp(&(b.error / b.tolerance)).unwrap_or(std::cmp::Ordering::Greater))
        .map(|mut c| {
            c.name = format!("{name}: worst {}", c.name);
            c
        })
        .expect("nonempty group")
}

/// Runs every oracle check; each group reports its worst member.
pub fn run_oracle_suite() -> Vec<OracleCheck> {
    let mut out = Vec::new();

    let mut ak = Vec::new();
    for &x in &[0.1, 1.0, 5.0, 20.0] {
        for k in 1..=50 {
            for c in verify_ak_closed_forms(x, k) {
                ak.push(OracleCheck::relative(format!("{} k={k} x={x}", c.family.name()), c.determinant, c.closed_form, 1e-10));
            }
        }
    }
    out.push(worst("ak_closed_forms", ak));

    let mut dense = Vec::new();
    for k in 1..=12 {
        let spec = TridiagonalSpec::new(
            (0..k).map(|i| C::new(1.0 + i as f64 * 0.3, 0.2 * i as f64)).collect(),
            (0..k - 1).map(|i| C::new(0.5, -0.1 * i as f64)).collect(),
            (0..k - 1).map(|i| C::new(-0.7 + 0.05 * i as f64, 0.3)).collect(),
        )
        .expect("consistent lengths");
        let t = tridiag_det(&spec).value();
        let d = dense_det(&spec.to_dense());
        dense.push(OracleCheck::relative(format!("tridiag_vs_dense k={k}"), t.re, d.re, 1e-12));
        dense.push(OracleCheck::absolute(format!("tridiag_vs_dense_im k={k}"), t.im / d.norm(), d.im / d.norm(), 1e-12));
    }
    out.push(worst("tridiag_det", dense));

    let mut u_rec = Vec::new();
    let mut g_rec = Vec::new();
    for &a in &[1.05, 1.7, 3.0, 12.5, 50.0] {
        for k in 2..=100u64 {
            let lhs = u_coefficient(k, a);
            let rhs = recurrence_m1(k, a) * u_coefficient(k - 1, a) - recurrence_m2(k, a) * u_coefficient(k - 2, a);
            u_rec.push(OracleCheck::relative(format!("u_k a={a} k={k}"), rhs, lhs, 1e-10));
        }
        let g = g_sequence(60, a);
        for k in 2..=60u64 {
            g_rec.push(OracleCheck::relative(format!("g_k a={a} k={k}"), g_closed_form(k, a), g[k as usize], 1e-8));
        }
    }
    out.push(worst("u_k_recurrence", u_rec));
    out.push(worst("g_k_closed_form", g_rec));

    let area = disk_integral(|_| C::new(1.0 / PI, 0.0), Domain::unit_disk(), &[], 1e-10);
    out.push(match area {
        Ok((v, _)) => OracleCheck::absolute("unit_disk_area_over_pi", v.re, 1.0, 1e-10),
        Err(e) => OracleCheck::failed("unit_disk_area_over_pi", e, 1e-10),
    });

    out.push(log_potential_difference_check(C::new(0.5, 0.0)));
    out.push(cauchy_pair_integral_check(C::new(0.3, 0.0), C::new(0.0, 0.5)));

    let n = 5;
    let grid = QuadratureGrid::new(Domain::Disk { center: C::new(0.0, 0.0), radius: 3.0 }, 80, 16);
    let trace = grid.integrate(|z| ginibre_kernel(n, z, z)).re;
    out.push(OracleCheck::relative("kernel_trace N=5", trace, n as f64, 1e-6));

    for n in 1..=5 {
        let one = andreief_moment_matrix(|_| C::new(1.0, 0.0), n, Conditioning::None, 1e-10);
        out.push(match one {
            Ok(v) => OracleCheck::absolute(format!("andreief_unit N={n}"), v.re, 1.0, 1e-10),
            Err(e) => OracleCheck::failed("andreief_unit", e, 1e-10),
        });
    }
    for cond in [Conditioning::One(C::new(0.0, 0.0)), Conditioning::One(C::new(0.3, -0.2)), Conditioning::OriginAnd(C::new(0.4, 0.1))] {
        let v = andreief_moment_matrix(|_| C::new(1.0, 0.0), 4, cond, 1e-10);
        out.push(match v {
            Ok(v) => {
                let label = match cond {
                    Conditioning::None => "none".to_string(),
                    Conditioning::One(z) => format!("l1={z}"),
                    Conditioning::OriginAnd(z) => format!("l1=0,l2={z}"),
                };
                OracleCheck::absolute(format!("andreief_unit N=4 {label}"), v.re, 1.0, 1e-10)
            },
            Err(e) => OracleCheck::failed("andreief_unit", e, 1e-10),
        });
    }

    let n = 4;
    let c = 0.7;
    let kostlan: f64 = (1..=n).map(|i| 1.0 + c * i as f64 / n as f64).product();
    let v = andreief_moment_matrix(|l: C| C::new(1.0 + c * l.norm_sqr(), 0.0), n, Conditioning::None, 1e-10);
    out.push(match v {
        Ok(v) => OracleCheck::relative("andreief_kostlan N=4", v.re, kostlan, 1e-6),
        Err(e) => OracleCheck::failed("andreief_kostlan", e, 1e-6),
    });

    for &(n, delta) in &[(3usize, 1.0f64), (3, 4.0), (4, 1.0), (4, 4.0)] {
        let z = C::new((delta / n as f64).sqrt(), 0.0);
        let name = format!("second_moments N={n} delta={delta}");
        match (small_n_second_moment_oracle(n, z), second_moment_exact_origin(n, z)) {
            (Ok(o), Ok(e)) => {
                out.push(OracleCheck::relative(format!("{name} |O12|^2"), e.abs_o12_sq, o.abs_o12_sq, 1e-6));
                out.push(OracleCheck::relative(format!("{name} O11O22"), e.o11_o22, o.o11_o22, 1e-6));
            }
            (Err(e), _) | (_, Err(e)) => out.push(OracleCheck::failed(name, e, 1e-6)),
        }
    }
    let z = C::new((1e-3f64 / 3.0).sqrt(), 0.0);
    match (small_n_second_moment_oracle(3, z), second_moment_exact_origin(3, z)) {
        (Ok(o), Ok(e)) => out.push(OracleCheck::relative("second_moments N=3 delta=1e-3 |O12|^2", e.abs_o12_sq, o.abs_o12_sq, 1e-4)),
        (Err(e), _) | (_, Err(e)) => out.push(OracleCheck::failed("second_moments N=3 delta=1e-3", e, 1e-4)),
    }

    out
}

/// `(1/π)∫_{D∖D(z,ε)} |z−λ|^{−2} dm − (1/π)∫_{D∖D(0,ε)} |λ|^{−2} dm`
/// against `log(1−|z|²)`.
pub fn log_potential_difference_check(z: C) -> OracleCheck {
    let eps = 0.1;
    let name = format!("log_potential_difference |z|={}", z.norm());
    let f_z = move |l: C| C::new(1.0 / (PI * (z - l).norm_sqr()), 0.0);
    let f_0 = |l: C| C::new(1.0 / (PI * l.norm_sqr()), 0.0);
    let a = disk_integral(f_z, Domain::unit_disk(), &[(z, eps)], 1e-9);
    let b = disk_integral(f_0, Domain::unit_disk(), &[(C::new(0.0, 0.0), eps)], 1e-9);
    match (a, b) {
        (Ok((a, _)), Ok((b, _))) => OracleCheck::absolute(name, a.re - b.re, (1.0 - z.norm_sqr()).ln(), 1e-6),
        (Err(e), _) | (_, Err(e)) => OracleCheck::failed(name, e, 1e-6),
    }
}

/// `(1/π)∫_D dm(z)/((λ₁−z)(λ₂−z)‾)` against `log((1−λ₁λ̄₂)/|λ₁−λ₂|²)`.
///
/// Small disks around both poles are excluded: the integrand's angular mean
/// about either pole vanishes, so they contribute exactly zero.
pub fn cauchy_pair_integral_check(l1: C, l2: C) -> OracleCheck {
    let eps = 0.25 * (l1 - l2).norm().min(1.0 - l1.norm()).min(1.0 - l2.norm());
    let f = move |z: C| C::new(1.0, 0.0) / ((l1 - z) * (l2 - z).conj() * PI);
    let reference = ((C::new(1.0, 0.0) - l1 * l2.conj()) / (l1 - l2).norm_sqr()).ln();
    let name = "cauchy_pair_integral";
    match disk_integral(f, Domain::unit_disk(), &[(l1, eps), (l2, eps)], 1e-9) {
        Ok((v, _)) => {
            let err = (v - reference).norm();
            OracleCheck { name: name.into(), value: v.re, reference: reference.re, error: err, tolerance: 1e-6, pass: err < 1e-6 }
        }
        Err(e) => OracleCheck::failed(name, e, 1e-6),
    }
}
