//! Closed-form finite-N and asymptotic overlap statistics, limit densities
//! and CDFs.
//!
//! Notation: `e_k^{(ℓ)}(x) = Σ_{i=k}^{ℓ} xⁱ/i!`, `x = N|z|²`,
//! `ω = √N (z₁ − z₂)`, `δ = N|z₁−z₂|²`.

use num_complex::Complex;

use crate::schur_chain::{combine_second_moments, PairGeometry, SecondMoments};
use crate::{Error, NeumaierSum, Real, Result, DELTA_FLOOR};

/// Upper summation index of a partial exponential sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upper {
    Finite(u64),
    Infinite,
}

/// `ln m!`: exact summation up to 20, Stirling series beyond.
pub fn ln_factorial<T: Real>(m: u64) -> T {
    if m <= 20 {
        return (2..=m).fold(T::zero(), |acc, i| acc + T::of(i as f64).ln());
    }
    let x = m as f64;
    let x2 = x * x;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2) - 1.0 / (1680.0 * x * x2 * x2 * x2);
    T::of(x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + series)
}

/// `ln e_k^{(ℓ)}(x)` for finite `ℓ`; `-∞` for an empty or zero sum.
///
/// Terms are summed as ratios to the largest one, so nothing overflows.
pub fn ln_exp_partial_sum<T: Real>(k: u64, l: u64, x: T) -> T {
    if k > l {
        return T::neg_infinity();
    }
    if x == T::zero() {
        return if k == 0 { T::zero() } else { T::neg_infinity() };
    }
    let xf = x.to_f64_lossy();
    let m = (xf.floor().max(0.0) as u64).clamp(k, l);
    let ln_tm = T::of_usize(m as usize) * x.ln() - ln_factorial::<T>(m);
    let eps = T::epsilon() * T::of(1e-3);
    let mut s = NeumaierSum::new();
    s.add(T::one());
    let mut r = T::one();
    for i in m + 1..=l {
        r *= x / T::of(i as f64);
        s.add(r);
        if r < eps * s.value() {
            break;
        }
    }
    r = T::one();
    let mut i = m;
    while i > k {
        r *= T::of(i as f64) / x;
        s.add(r);
        i -= 1;
        if r < eps * s.value() {
            break;
        }
    }
    ln_tm + s.value().ln()
}

/// `e_k^{(ℓ)}(x)`.
pub fn exp_partial_sum<T: Real>(k: u64, upper: Upper, x: T) -> Result<T> {
    if x < T::zero() || x.is_nan() {
        return Err(Error::InvalidArgument(format!("x = {x} must be nonnegative")));
    }
    let max_ln = T::max_value().ln();
    let v = match upper {
        Upper::Finite(l) => {
            let lv = ln_exp_partial_sum(k, l, x);
            if lv > max_ln {
                return Err(Error::ArgumentTooLarge(x.to_f64_lossy()));
            }
            lv.exp()
        }
        Upper::Infinite => {
            if x > max_ln {
                return Err(Error::ArgumentTooLarge(x.to_f64_lossy()));
            }
            if k == 0 {
                x.exp()
            } else if T::of(k as f64) <= x {
                // head is at most about half of eˣ here
                x.exp() - ln_exp_partial_sum(0, k - 1, x).exp()
            } else {
                // terms decrease from i = k on
                let ln_tk = T::of(k as f64) * x.ln() - ln_factorial::<T>(k);
                let mut s = NeumaierSum::new();
                s.add(T::one());
                let mut r = T::one();
                let mut i = k;
                loop {
                    i += 1;
                    r *= x / T::of(i as f64);
                    s.add(r);
                    if r < T::epsilon() * T::of(1e-3) * s.value() {
                        break;
                    }
                }
                (ln_tk + s.value().ln()).exp()
            }
        }
    };
    Ok(v)
}

fn ln_term<T: Real>(i: u64, x: T) -> T {
    if i == 0 {
        T::zero()
    } else {
        T::of(i as f64) * x.ln() - ln_factorial::<T>(i)
    }
}

/// `E(O₁₁ | λ₁ = z) = N e^{(N)}(x)/e^{(N−1)}(x) − x`, via
/// `e^{(N)}/e^{(N−1)} = 1 + (x^N/N!)/e^{(N−1)}`.
pub fn mean_diag_exact<T: Real>(n: usize, z: Complex<T>) -> T {
    assert!(n >= 1);
    let nn = T::of_usize(n);
    let x = nn * z.norm_sqr();
    if x == T::zero() {
        return nn;
    }
    let r = (ln_term(n as u64, x) - ln_exp_partial_sum(0, n as u64 - 1, x)).exp();
    nn - x + nn * r
}

/// `N(1 − |z|²)`.
pub fn mean_diag_asymptotic<T: Real>(n: usize, z: Complex<T>) -> T {
    T::of_usize(n) * (T::one() - z.norm_sqr())
}

/// `E(O₁₂ | λ₁ = 0, λ₂ = z) = −(N/x²) e₂^{(N)}(x)/e₁^{(N)}(x)`.
pub fn mean_offdiag_exact_origin<T: Real>(n: usize, z: Complex<T>) -> T {
    assert!(n >= 2);
    let nn = T::of_usize(n);
    let x = nn * z.norm_sqr();
    if x == T::zero() {
        return T::neg_infinity();
    }
    let ratio = (ln_exp_partial_sum(2, n as u64, x) - ln_exp_partial_sum(1, n as u64, x)).exp();
    -nn / (x * x) * ratio
}

/// `1 − (1+u)e^{−u}`, by its Taylor series near 0.
fn one_minus_one_plus_u_exp<T: Real>(u: T) -> T {
    if u < T::of(0.5) {
        let mut term = u;
        let mut s = T::zero();
        for n in 2..30u32 {
            term = term * u / T::of(n as f64);
            let sign = if n % 2 == 0 { T::one() } else { -T::one() };
            s += sign * T::of((n - 1) as f64) * term;
        }
        s
    } else {
        T::one() - (T::one() + u) * (-u).exp()
    }
}

/// `−N (1−z₁z̄₂)/|ω|⁴ · (1−(1+|ω|²)e^{−|ω|²})/(1−e^{−|ω|²})`.
pub fn mean_offdiag_asymptotic<T: Real>(n: usize, z1: Complex<T>, z2: Complex<T>) -> Complex<T> {
    let nn = T::of_usize(n);
    let u = nn * (z1 - z2).norm_sqr();
    let ratio = one_minus_one_plus_u_exp(u) / (-(-u).exp_m1());
    let one = Complex::new(T::one(), T::zero());
    (one - z1 * z2.conj()) * (-nn * ratio / (u * u))
}

/// `u_k(x) = 1 − (1 − x⁻¹)/(k+3)`.
pub fn u_coefficient<T: Real>(k: u64, x: T) -> T {
    T::one() - (T::one() - T::one() / x) / T::of((k + 3) as f64)
}

/// First coefficient of the three-term recurrence shared by `g_k` and `u_k`.
pub fn recurrence_m1<T: Real>(k: u64, a: T) -> T {
    let delta = a - T::one() / a;
    let kf = T::of(k as f64);
    T::one() + delta / (kf + T::of(3.0)) + (T::one() - T::one() / a) / (kf * (kf + T::of(3.0)))
}

/// Second coefficient of the three-term recurrence shared by `g_k` and `u_k`.
pub fn recurrence_m2<T: Real>(k: u64, a: T) -> T {
    let delta = a - T::one() / a;
    let kf = T::of(k as f64);
    delta * (kf + T::one()) * (kf + T::one()) / (kf * (kf + T::of(2.0)) * (kf + T::of(3.0)))
}

/// `g_0, …, g_kmax` by iterating `g_k = m₁ g_{k−1} − m₂ g_{k−2}` from
/// `g_0 = 1`, `g_1 = 1 + δ/4 + (1 − a⁻¹)/4`.
pub fn g_sequence<T: Real>(kmax: u64, a: T) -> Vec<T> {
    let delta = a - T::one() / a;
    let four = T::of(4.0);
    let mut g = vec![T::one(), T::one() + delta / four + (T::one() - T::one() / a) / four];
    for k in 2..=kmax {
        let next = recurrence_m1(k, a) * g[k as usize - 1] - recurrence_m2(k, a) * g[k as usize - 2];
        g.push(next);
    }
    g.truncate(kmax as usize + 1);
    g
}

/// Closed form of `g_k`; valid for `k ≥ 2` (it disagrees with the recurrence
/// at `k = 1`).
pub fn g_closed_form<T: Real>(k: u64, a: T) -> T {
    assert!(k >= 2, "closed form holds for k >= 2");
    let delta = a - T::one() / a;
    let u = u_coefficient(k, a);
    let kf = T::of(k as f64);
    let ratio = (a + T::one()) / (a - T::one());
    let e3 = ln_exp_partial_sum(3, k, delta).exp();
    let poly = a + kf + T::of(2.0) + (kf + T::one()) * (kf + T::of(3.0)) / a;
    let tail = ((kf - T::one()) * delta.ln() - ln_factorial::<T>(k + 3)).exp();
    T::of(6.0) * u * ratio * e3 / (a * delta * delta) - T::of(3.0) * u / a + T::of(6.0) * ratio * poly * tail
}

/// `E(d_x)` with `d_x = ∏_{n=3}^{N} λ_x(n)` at `λ₁ = 0`, `λ₂ = z`, `k = N−2`,
/// from the holonomic recurrence
/// `a_k = (1 + (2+δ)/(k+1) + (1−x⁻¹)/(k(k+1))) a_{k−1} − δ(k+1)/k² a_{k−2}`,
/// `E(d_x) = δ a_k / e₁^{(k+1)}(δ)`.
pub fn expected_d_by_recurrence<T: Real>(k: u64, x: T, delta: T) -> T {
    if k == 0 {
        return T::one();
    }
    let one = T::one();
    let c = one - one / x;
    let two = T::of(2.0);
    let mut prev = one;
    let mut cur = two + delta / two + c / two;
    for j in 2..=k {
        let jf = T::of(j as f64);
        let next = (one + (two + delta) / (jf + one) + c / (jf * (jf + one))) * cur - delta * (jf + one) / (jf * jf) * prev;
        prev = cur;
        cur = next;
    }
    (delta.ln() + cur.ln() - ln_exp_partial_sum(1, k + 1, delta)).exp()
}

/// `E(d_x)` in closed form,
/// `d_k(x,δ) = (k+2)(k+3)/e₁^{(k+1)}(δ) · [u_k(x)/(x−1)² e₃^{(k)}(δ) − δu_k(x)/(2x)
///             + (x² + (k+2)x + (k+1)(k+3))/(x−1)² · δ^{k+1}/(k+3)!]`.
///
/// The closed form fails at `k = 1`; there the first recurrence step is used.
/// `x_minus_one` is passed separately so that `x → 1` loses no digits.
pub fn expected_d<T: Real>(k: u64, x: T, x_minus_one: T, delta: T) -> T {
    match k {
        0 => T::one(),
        1 => expected_d_by_recurrence(1, x, delta),
        _ => {
            let kf = T::of(k as f64);
            let u = u_coefficient(k, x);
            let ln_e1 = ln_exp_partial_sum(1, k + 1, delta);
            let r3 = (ln_exp_partial_sum(3, k, delta) - ln_e1).exp();
            let inv_e1 = (-ln_e1).exp();
            let xm2 = x_minus_one * x_minus_one;
            let poly = x * x + (kf + T::of(2.0)) * x + (kf + T::one()) * (kf + T::of(3.0));
            let tail = (T::of((k + 1) as f64) * delta.ln() - ln_factorial::<T>(k + 3) - ln_e1).exp();
            let bracket = u / xm2 * r3 - delta * u / (T::of(2.0) * x) * inv_e1 + poly / xm2 * tail;
            (kf + T::of(2.0)) * (kf + T::of(3.0)) * bracket
        }
    }
}

/// `(E|O₁₂|², E O₁₁O₂₂)` given `λ₁ = 0`, `λ₂ = z`.
///
/// Below `δ = DELTA_FLOOR` both moments are replaced by their common leading
/// term `N(N−1)/δ²` (relative error `O(Nδ)`).
pub fn second_moment_exact_origin<T: Real>(n: usize, z: Complex<T>) -> Result<SecondMoments<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("need N >= 2".into()));
    }
    let geom = PairGeometry::<T>::from_points(n, Complex::new(T::zero(), T::zero()), z);
    let delta = geom.delta;
    if delta == T::zero() {
        return Err(Error::DeltaDegenerate { delta: 0.0 });
    }
    if delta < T::of(DELTA_FLOOR) {
        let v = T::of_usize(n) * T::of_usize(n - 1) / (delta * delta);
        return Ok(SecondMoments { abs_o12_sq: v, o11_o22: v });
    }
    let k = n as u64 - 2;
    let d_plus = expected_d(k, geom.a, geom.a_minus_one(), delta);
    let d_minus = expected_d(k, geom.b, geom.b - T::one(), delta);
    Ok(combine_second_moments(&geom, d_plus, d_minus))
}

/// `N²(1−|z₁|²)(1−|z₂|²)/|ω|⁴` and the same times
/// `(1+|ω|⁴−e^{−|ω|²})/(1−e^{−|ω|²})`.
pub fn second_moment_asymptotic<T: Real>(n: usize, z1: Complex<T>, z2: Complex<T>) -> SecondMoments<T> {
    let nn = T::of_usize(n);
    let u = nn * (z1 - z2).norm_sqr();
    let base = nn * nn * (T::one() - z1.norm_sqr()) * (T::one() - z2.norm_sqr()) / (u * u);
    let factor = T::one() + u * u / (-(-u).exp_m1());
    SecondMoments { abs_o12_sq: base, o11_o22: base * factor }
}

/// `e^{−1/t}/t³`.
pub fn inv_gamma2_density<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    (-T::one() / t).exp() / (t * t * t)
}

/// `(1 + 1/t) e^{−1/t}`.
pub fn inv_gamma2_cdf<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    (T::one() + T::one() / t) * (-T::one() / t).exp()
}

/// Density of `O₁₁/N` given `λ₁ = 0`: `(N−1)/N (1 − 1/(Nt))^{N−2}/t³` on `t > 1/N`.
pub fn beta_inv_finite_n_density<T: Real>(n: usize, t: T) -> T {
    assert!(n >= 2);
    let nn = T::of_usize(n);
    if t <= T::one() / nn {
        return T::zero();
    }
    let log = T::of_usize(n - 2) * (-T::one() / (nn * t)).ln_1p();
    (nn - T::one()) / nn * log.exp() / (t * t * t)
}

/// CDF of `O₁₁/N` given `λ₁ = 0`: `(1 − s)^{N−1}(1 + (N−1)s)`, `s = 1/(Nt)`.
pub fn beta_inv_finite_n_cdf<T: Real>(n: usize, t: T) -> T {
    assert!(n >= 2);
    let nn = T::of_usize(n);
    if t <= T::one() / nn {
        return T::zero();
    }
    let s = T::one() / (nn * t);
    let m = T::of_usize(n - 1);
    (m * (-s).ln_1p()).exp() * (T::one() + m * s)
}

/// `(1 − (1+t)e^{−t})/t²` on `t > 0`.
pub fn angle_limit_density<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return if t == T::zero() { T::of(0.5) } else { T::zero() };
    }
    one_minus_one_plus_u_exp(t) / (t * t)
}

/// `1 − (1 − e^{−t})/t`, the CDF of [`angle_limit_density`].
pub fn angle_limit_cdf<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    T::one() + (-t).exp_m1() / t
}

/// CDF of `N·β_{1,U}` with `U` uniform on `{2, …, N}`:
/// the average of `1 − (1 − t/N)^k` over `k`.
pub fn angle_origin_finite_n_cdf<T: Real>(n: usize, t: T) -> T {
    assert!(n >= 2);
    let nn = T::of_usize(n);
    if t <= T::zero() {
        return T::zero();
    }
    if t >= nn {
        return T::one();
    }
    let q = T::one() - t / nn;
    let mut s = T::zero();
    let mut p = q;
    for _ in 2..=n {
        p *= q;
        s += T::one() - p;
    }
    s / T::of_usize(n - 1)
}

/// `e^{−1/(6y²)}`.
pub fn frechet_cdf<T: Real>(y: T) -> T {
    if y <= T::zero() {
        return T::zero();
    }
    (-T::one() / (T::of(6.0) * y * y)).exp()
}

/// `K_N(z,w) = (N/π) e^{−N(|z|²+|w|²)/2} Σ_{k<N} (N z w̄)^k/k!`.
///
/// The sum is accumulated as ratios to its largest term; the absolute error
/// is of order `ε·N/π`.
pub fn ginibre_kernel<T: Real>(n: usize, z: Complex<T>, w: Complex<T>) -> Complex<T> {
    assert!(n >= 1);
    let nn = T::of_usize(n);
    let s = z * w.conj() * nn;
    let shift = nn * (z.norm_sqr() + w.norm_sqr()) / T::of(2.0);
    let pre = nn / T::PI();
    let zero = Complex::new(T::zero(), T::zero());
    let abs_s = s.norm();
    if abs_s == T::zero() {
        return Complex::new(pre * (-shift).exp(), T::zero());
    }
    let m = (abs_s.to_f64_lossy().floor() as usize).min(n - 1);
    let ln_tm = T::of_usize(m) * abs_s.ln() - ln_factorial::<T>(m as u64);
    let unit = s / abs_s;
    // ratios t_k / |t_m| carry the phase of s^k
    let mut acc = zero;
    let mut r = unit.powu(m as u32);
    acc += r;
    for k in m + 1..n {
        r = r * s / T::of_usize(k);
        acc += r;
    }
    r = unit.powu(m as u32);
    for k in (1..=m).rev() {
        r = r * T::of_usize(k) / s;
        acc += r;
    }
    acc * (pre * (ln_tm - shift).exp())
}

/// Closed-form `∫_{|z−c|<r} (1 − |z|²) dm(z) = πr²(1 − |c|² − r²/2)`.
pub fn disk_integral_one_minus_abs2<T: Real>(center: Complex<T>, radius: T) -> T {
    T::PI() * radius * radius * (T::one() - center.norm_sqr() - radius * radius / T::of(2.0))
}
