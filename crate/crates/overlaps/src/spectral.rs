//! Dense eigendecomposition with biorthogonal eigenvectors and overlap matrices.

use std::cmp::Ordering;

use num_complex::Complex;

use crate::{ComplexMatrix, Error, Real, Result, GAP_FLOOR};

/// Dense linear algebra kernels for a concrete scalar type.
pub trait Backend: Sized {
    /// Eigenvalues and, if requested, right eigenvectors as columns (unsorted).
    fn eig(m: &ComplexMatrix<Self>, vectors: bool) -> Result<(Vec<Complex<Self>>, Option<ComplexMatrix<Self>>)>;
    fn inverse(m: &ComplexMatrix<Self>) -> ComplexMatrix<Self>;
    fn matmul(a: &ComplexMatrix<Self>, b: &ComplexMatrix<Self>) -> ComplexMatrix<Self>;
}

macro_rules! faer_backend {
    ($t:ty) => {
        impl Backend for $t {
            fn eig(
                m: &ComplexMatrix<$t>,
                vectors: bool,
            ) -> Result<(Vec<Complex<$t>>, Option<ComplexMatrix<$t>>)> {
                let n = m.dim();
                let a = faer::Mat::<Complex<$t>>::from_fn(n, n, |i, j| m[(i, j)]);
                if vectors {
                    let e = a.eigen().map_err(|_| Error::NonConvergence)?;
                    let s = e.S().column_vector();
                    let vals = (0..n).map(|i| s[i]).collect();
                    let u = e.U();
                    Ok((vals, Some(ComplexMatrix::from_fn(n, |i, j| u[(i, j)]))))
                } else {
                    let vals = a.eigenvalues().map_err(|_| Error::NonConvergence)?;
                    Ok((vals, None))
                }
            }

            fn inverse(m: &ComplexMatrix<$t>) -> ComplexMatrix<$t> {
                use faer::linalg::solvers::DenseSolveCore;
                let n = m.dim();
                let a = faer::Mat::<Complex<$t>>::from_fn(n, n, |i, j| m[(i, j)]);
                let inv = a.partial_piv_lu().inverse();
                ComplexMatrix::from_fn(n, |i, j| inv[(i, j)])
            }

            fn matmul(a: &ComplexMatrix<$t>, b: &ComplexMatrix<$t>) -> ComplexMatrix<$t> {
                let n = a.dim();
                assert_eq!(n, b.dim(), "dimension mismatch");
                let fa = faer::Mat::<Complex<$t>>::from_fn(n, n, |i, j| a[(i, j)]);
                let fb = faer::Mat::<Complex<$t>>::from_fn(n, n, |i, j| b[(i, j)]);
                let p = &fa * &fb;
                ComplexMatrix::from_fn(n, |i, j| p[(i, j)])
            }
        }
    };
}

faer_backend!(f32);
faer_backend!(f64);

/// Eigenvalues in a fixed order together with their minimum pairwise gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    eigenvalues: Vec<Complex<T>>,
    min_gap: T,
}

fn lex_cmp<T: Real>(a: &Complex<T>, b: &Complex<T>) -> Ordering {
    a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal).then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
}

/// Permutation sorting the values lexicographically by (Re, Im).
pub fn lex_order<T: Real>(values: &[Complex<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| lex_cmp(&values[i], &values[j]));
    idx
}

impl<T: Real> Spectrum<T> {
    /// Keeps the given order; the first entries play the role of λ₁, λ₂ in the
    /// Schur-chain routines.
    pub fn new(eigenvalues: Vec<Complex<T>>) -> Self {
        assert!(!eigenvalues.is_empty(), "spectrum must be nonempty");
        let min_gap = min_gap(&eigenvalues);
        Self { eigenvalues, min_gap }
    }

    pub fn sorted(mut eigenvalues: Vec<Complex<T>>) -> Self {
        eigenvalues.sort_by(lex_cmp);
        Self::new(eigenvalues)
    }

    pub fn eigenvalues(&self) -> &[Complex<T>] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `+∞` for a single eigenvalue.
    pub fn min_gap(&self) -> T {
        self.min_gap
    }

    /// Index of the eigenvalue closest to `z`.
    pub fn nearest(&self, z: Complex<T>) -> usize {
        let mut best = 0;
        let mut dist = T::infinity();
        for (i, l) in self.eigenvalues.iter().enumerate() {
            let d = (l - z).norm_sqr();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

/// Sweep in order of real part; a pair can only beat the current gap if
/// their real parts are closer than it.
fn min_gap<T: Real>(eig: &[Complex<T>]) -> T {
    let order = lex_order(eig);
    let mut g = T::infinity();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if eig[j].re - eig[i].re >= g {
                break;
            }
            g = g.min((eig[i] - eig[j]).norm());
        }
    }
    g
}

/// Right eigenvectors as columns of `x`, left eigenvectors as rows of `y = x⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem<T> {
    pub x: ComplexMatrix<T>,
    pub y: ComplexMatrix<T>,
    /// `max_i ‖G R_i − λ_i R_i‖ / (‖R_i‖ ‖G‖)`.
    pub residual_bound: T,
}

impl<T: Real> EigenSystem<T> {
    pub fn right(&self, i: usize) -> &[Complex<T>] {
        self.x.column(i)
    }

    pub fn left(&self, i: usize) -> Vec<Complex<T>> {
        self.y.row(i)
    }

    /// `max |Y X − Id|`.
    pub fn biorthogonality_error(&self) -> T {
        let p = self.y.matmul(&self.x);
        let n = p.dim();
        let mut e = T::zero();
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { T::one() } else { T::zero() };
                e = e.max((p[(i, j)] - Complex::new(target, T::zero())).norm());
            }
        }
        e
    }
}

/// Eigenvalues sorted by (Re, Im), right eigenvectors in matching order and
/// `Y = X⁻¹`. Fails when the relative residual exceeds `tol` or two
/// eigenvalues are closer than `GAP_FLOOR·‖G‖`.
pub fn eigendecompose<T: Real>(g: &ComplexMatrix<T>, tol: T) -> Result<(Spectrum<T>, EigenSystem<T>)> {
    if !g.is_finite() {
        return Err(Error::NonConvergence);
    }
    let norm = g.frobenius_norm();
    let (vals, vecs) = T::eig(g, true)?;
    let order = lex_order(&vals);
    let eig: Vec<Complex<T>> = order.iter().map(|&i| vals[i]).collect();
    let spectrum = Spectrum::new(eig);
    let floor = T::of(GAP_FLOOR) * norm;
    if g.dim() > 1 && spectrum.min_gap() < floor {
        return Err(Error::DegenerateSpectrum { gap: spectrum.min_gap().to_f64_lossy(), floor: floor.to_f64_lossy() });
    }
    let x = vecs.expect("eigenvectors requested").permute_columns(&order);
    let y = T::inverse(&x);
    if !y.is_finite() {
        return Err(Error::NonConvergence);
    }

    let gx = g.matmul(&x);
    let mut residual = T::zero();
    let scale = if norm > T::zero() { norm } else { T::one() };
    for (i, &l) in spectrum.eigenvalues().iter().enumerate() {
        let (gc, xc) = (gx.column(i), x.column(i));
        let r: T = gc.iter().zip(xc).fold(T::zero(), |acc, (a, b)| acc + (a - b * l).norm_sqr()).sqrt();
        let xn: T = xc.iter().fold(T::zero(), |acc, b| acc + b.norm_sqr()).sqrt();
        residual = residual.max(r / (xn * scale));
    }
    if residual > tol || residual.is_nan() {
        return Err(Error::NonConvergence);
    }
    Ok((spectrum, EigenSystem { x, y, residual_bound: residual }))
}

/// Sorted eigenvalues only; no gap check.
pub fn eigenvalues<T: Real>(g: &ComplexMatrix<T>) -> Result<Spectrum<T>> {
    if !g.is_finite() {
        return Err(Error::NonConvergence);
    }
    let (vals, _) = T::eig(g, false)?;
    Ok(Spectrum::sorted(vals))
}

/// `O_ij = (R_j* R_i)(L_j* L_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix<T> {
    o: ComplexMatrix<T>,
}

impl<T: Real> OverlapMatrix<T> {
    pub fn from_matrix(o: ComplexMatrix<T>) -> Self {
        Self { o }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.o[(i, j)]
    }

    pub fn dim(&self) -> usize {
        self.o.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.o
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.o[(i, i)].re).collect()
    }

    pub fn row_sum(&self, i: usize) -> Complex<T> {
        (0..self.dim()).fold(Complex::new(T::zero(), T::zero()), |acc, j| acc + self.o[(i, j)])
    }

    pub fn row_max(&self, i: usize) -> T {
        (0..self.dim()).fold(T::zero(), |acc, j| acc.max(self.o[(i, j)].norm()))
    }
}

/// Overlaps from the Gram matrices: `O_ij = (X*X)_{ji} (YY*)_{ij}`.
///
/// `(X*X)_{ji} = R_j* R_i` and `(YY*)_{ij} = Σ_k Y_ik conj(Y_jk) = L_j* L_i`
/// where `L_i` is row `i` of `Y` read as a column.
pub fn overlaps<T: Real>(x: &ComplexMatrix<T>, y: &ComplexMatrix<T>) -> OverlapMatrix<T> {
    let xx = x.adjoint().matmul(x);
    let yy = y.matmul(&y.adjoint());
    let n = x.dim();
    let mut o = ComplexMatrix::from_fn(n, |i, j| xx[(j, i)] * yy[(i, j)]);
    for i in 0..n {
        o[(i, i)].im = T::zero();
    }
    OverlapMatrix { o }
}

/// `O_ii = ‖R_i‖² ‖L_i‖²` in O(N²).
pub fn diagonal_overlaps<T: Real>(x: &ComplexMatrix<T>, y: &ComplexMatrix<T>) -> Vec<T> {
    let n = x.dim();
    let mut row_norms = vec![T::zero(); n];
    for j in 0..n {
        for (i, z) in y.column(j).iter().enumerate() {
            row_norms[i] += z.norm_sqr();
        }
    }
    (0..n)
        .map(|i| x.column(i).iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()) * row_norms[i])
        .collect()
}

/// `(XᵗX)_{ji} (YYᵗ)_{ij} = (R_jᵗ R_i)(L_jᵗ L_i)`. For a real matrix this is
/// the overlap of `λ_i` with the conjugate of `λ_j`.
pub fn nonconjugate_overlaps<T: Real>(x: &ComplexMatrix<T>, y: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let xx = x.transpose().matmul(x);
    let yy = y.matmul(&y.transpose());
    ComplexMatrix::from_fn(x.dim(), |i, j| xx[(j, i)] * yy[(i, j)])
}

/// `κ_i = √O_ii`.
pub fn condition_numbers<T: Real>(o: &OverlapMatrix<T>) -> Vec<T> {
    o.diagonal().into_iter().map(|d| d.sqrt()).collect()
}
