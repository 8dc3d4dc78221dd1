//! Eigenvalue dynamics under the Ornstein–Uhlenbeck matrix flow
//! `dG = dB/√N − G dt/2`.
//!
//! Eigenvalues are relabelled step to step by nearest-neighbour matching.
//! An ambiguous step is bisected with a bridge sample of the midpoint; if
//! that does not resolve it, the labelled path ends rather than risk a
//! silent swap.
//! Realized covariations of the increments are then compared with the
//! overlap-driven brackets.

use num_complex::Complex;
use rand::Rng;

use crate::formulas::disk_integral_one_minus_abs2;
use crate::rand_ensembles::{sample_standard_complex_gaussian, sample_standard_normal};
use crate::spectral::{diagonal_overlaps, eigendecompose, eigenvalues, nonconjugate_overlaps, overlaps, EigenSystem};
use crate::{ComplexMatrix, Error, NeumaierSum, OverlapMatrix, Real, Result, Spectrum};

/// Default ambiguity ratio: a match is ambiguous when the second-nearest
/// candidate is closer than this multiple of the nearest one.
pub const AMBIGUITY_RATIO: f64 = 1.5;

/// Minimum number of matched steps for [`empirical_brackets`].
pub const MIN_BRACKET_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// `G ← G(1 − dt/2) + ΔB/√N`.
    EulerMaruyama,
    /// `G ← G e^{−dt/2} + √((1 − e^{−dt})/N)·ξ`, exact in law.
    ExactOu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig<T> {
    pub n: usize,
    pub dt: T,
    pub steps: usize,
    /// Real Brownian increments (real Ginibre stationary law).
    pub real: bool,
    pub mode: StepMode,
    /// `false` switches the noise off (deterministic drift only).
    pub noise: bool,
}

impl<T: Real> FlowConfig<T> {
    pub fn new(n: usize, dt: T, steps: usize) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
        }
        if steps == 0 || n == 0 {
            return Err(Error::InvalidArgument("need N >= 1 and steps >= 1".into()));
        }
        Ok(Self { n, dt, steps, real: false, mode: StepMode::EulerMaruyama, noise: true })
    }

    pub fn real(mut self, real: bool) -> Self {
        self.real = real;
        self
    }

    pub fn mode(mut self, mode: StepMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn noise(mut self, noise: bool) -> Self {
        self.noise = noise;
        self
    }
}

/// One step of the flow, in place.
pub fn ou_step<T: Real, R: Rng + ?Sized>(g: &mut ComplexMatrix<T>, cfg: &FlowConfig<T>, rng: &mut R) {
    let nn = T::of_usize(cfg.n);
    let (decay, var) = match cfg.mode {
        StepMode::EulerMaruyama => (T::one() - cfg.dt / T::of(2.0), cfg.dt / nn),
        StepMode::ExactOu => ((-cfg.dt / T::of(2.0)).exp(), -(-cfg.dt).exp_m1() / nn),
    };
    let s = var.sqrt();
    for j in 0..cfg.n {
        for v in g.column_mut(j) {
            *v = *v * decay;
            if cfg.noise {
                let xi = if cfg.real {
                    Complex::new(T::of(sample_standard_normal(rng)), T::zero())
                } else {
                    sample_standard_complex_gaussian::<T, R>(rng)
                };
                *v += xi * s;
            }
        }
    }
}

/// `G(0), G(dt), …, G(steps·dt)`.
pub fn evolve_ou<T: Real, R: Rng + ?Sized>(g0: &ComplexMatrix<T>, cfg: &FlowConfig<T>, rng: &mut R) -> Vec<ComplexMatrix<T>> {
    assert_eq!(g0.dim(), cfg.n);
    let mut out = Vec::with_capacity(cfg.steps + 1);
    let mut g = g0.clone();
    g.entry_variance = None;
    out.push(g.clone());
    for _ in 0..cfg.steps {
        ou_step(&mut g, cfg, rng);
        out.push(g.clone());
    }
    out
}

/// Minimum-cost perfect assignment (`result[row] = column`).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // potentials formulation, 1-based internally
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Assignment of the previous positions to the next spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// `perm[k]` is the index in `next` assigned to `prev[k]`.
    pub perm: Vec<usize>,
    pub ambiguous: bool,
}

/// Greedy nearest-neighbour matching; any ambiguity, or a collision in the
/// greedy choice, falls back to the optimal assignment on squared distances.
pub fn match_spectra<T: Real>(prev: &[Complex<T>], next: &[Complex<T>], ratio: T) -> MatchOutcome {
    assert_eq!(prev.len(), next.len());
    let n = prev.len();
    let mut perm = Vec::with_capacity(n);
    let mut ambiguous = false;
    for &p in prev {
        let (mut d1, mut d2, mut best) = (T::infinity(), T::infinity(), 0);
        for (j, &q) in next.iter().enumerate() {
            let d = (p - q).norm();
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = j;
            } else if d < d2 {
                d2 = d;
            }
        }
        if n > 1 && d2 < ratio * d1 {
            ambiguous = true;
        }
        perm.push(best);
    }
    let mut seen = vec![false; n];
    let bijective = perm.iter().all(|&j| !std::mem::replace(&mut seen[j], true));
    if ambiguous || !bijective {
        let cost: Vec<Vec<f64>> = prev.iter().map(|&p| next.iter().map(|&q| (p - q).norm_sqr().to_f64_lossy()).collect()).collect();
        perm = hungarian(&cost);
        ambiguous = true;
    }
    MatchOutcome { perm, ambiguous }
}

/// Labelled eigenvalue trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPath<T> {
    pub times: Vec<T>,
    /// `positions[k][s]` is eigenvalue `k` at step `s`.
    pub positions: Vec<Vec<Complex<T>>>,
    /// `matched[s]` refers to the transition from step `s` to `s+1`; the path
    /// ends at the first `false`.
    pub matched: Vec<bool>,
    /// `labels[s][k]` is the index of eigenvalue `k` in the sorted spectrum of
    /// step `s`.
    pub labels: Vec<Vec<usize>>,
    /// Steps of the input sequence not covered by the path.
    pub rejected_steps: usize,
    /// `diagonal[s][k]` is `𝒪_kk` of label `k` at step `s`, when eigenvectors
    /// were computed along the way (empty otherwise).
    pub diagonal: Vec<Vec<T>>,
    /// Bisections spent resolving ambiguous steps.
    pub refinements: usize,
}

impl<T: Real> EigenPath<T> {
    fn start(t0: T, spectrum: &Spectrum<T>) -> Self {
        let n = spectrum.len();
        Self {
            times: vec![t0],
            positions: spectrum.eigenvalues().iter().map(|&l| vec![l]).collect(),
            matched: Vec::new(),
            labels: vec![(0..n).collect()],
            rejected_steps: 0,
            diagonal: Vec::new(),
            refinements: 0,
        }
    }

    fn record_diagonal(&mut self, node: &Node<T>) {
        if let Some(sys) = &node.sys {
            let d = diagonal_overlaps(&sys.x, &sys.y);
            self.diagonal.push(node.lab.iter().map(|&j| d[j]).collect());
        }
    }

    /// Appends the next spectrum; returns false (and appends nothing) on an
    /// ambiguous step.
    fn push(&mut self, t: T, spectrum: &Spectrum<T>, ratio: T) -> bool {
        let prev: Vec<Complex<T>> = self.positions.iter().map(|p| *p.last().expect("nonempty path")).collect();
        let m = match_spectra(&prev, spectrum.eigenvalues(), ratio);
        self.matched.push(!m.ambiguous);
        if m.ambiguous {
            return false;
        }
        for (k, &j) in m.perm.iter().enumerate() {
            self.positions[k].push(spectrum.eigenvalues()[j]);
        }
        self.labels.push(m.perm);
        self.times.push(t);
        true
    }

    /// Number of recorded steps (positions per label).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.matched.last() == Some(&false)
    }

    /// `(λ_k(s+1) − λ_k(s))` for every label and recorded transition.
    pub fn increments(&self) -> Vec<Vec<Complex<T>>> {
        self.positions.iter().map(|p| p.windows(2).map(|w| w[1] - w[0]).collect()).collect()
    }
}

/// Labels the spectra of a sequence (time step `dt`).
pub fn track_eigenvalue_paths<T: Real>(spectra: &[Spectrum<T>], dt: T, ratio: T) -> EigenPath<T> {
    assert!(!spectra.is_empty());
    let mut path = EigenPath::start(T::zero(), &spectra[0]);
    for (s, sp) in spectra.iter().enumerate().skip(1) {
        if !path.push(dt * T::of_usize(s), sp, ratio) {
            path.rejected_steps = spectra.len() - s;
            break;
        }
    }
    path
}

/// Decomposes every matrix of a sequence and labels the spectra.
pub fn track_matrices<T: Real>(mats: &[ComplexMatrix<T>], dt: T, ratio: T) -> Result<EigenPath<T>> {
    let spectra = mats
        .iter()
        .enumerate()
        .map(|(step, m)| eigenvalues(m).map_err(|e| Error::DecompositionFailed { step, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(track_eigenvalue_paths(&spectra, dt, ratio))
}

/// Realized and predicted covariations, summed over steps (and over paths
/// after merging).
#[derive(Debug, Clone, PartialEq)]
pub struct BracketEstimate<T> {
    /// `Σ ΔM_i ΔM̄_j`.
    pub realized: ComplexMatrix<T>,
    /// `Σ ΔM_i ΔM_j`.
    pub nonconjugate: ComplexMatrix<T>,
    /// `Σ 𝒪_ij dt/N`.
    pub predicted: ComplexMatrix<T>,
    pub steps: usize,
}

impl<T: Real> BracketEstimate<T> {
    pub fn zeros(n: usize) -> Self {
        Self { realized: ComplexMatrix::zeros(n), nonconjugate: ComplexMatrix::zeros(n), predicted: ComplexMatrix::zeros(n), steps: 0 }
    }

    pub fn merge(&mut self, other: &Self) {
        self.realized = self.realized.add(&other.realized);
        self.nonconjugate = self.nonconjugate.add(&other.nonconjugate);
        self.predicted = self.predicted.add(&other.predicted);
        self.steps += other.steps;
    }

    /// `realized_kk / predicted_kk`.
    pub fn diagonal_ratio(&self, k: usize) -> T {
        self.realized[(k, k)].re / self.predicted[(k, k)].re
    }

    /// `Σ_k realized_kk / Σ_k predicted_kk`.
    pub fn pooled_diagonal_ratio(&self) -> T {
        let n = self.realized.dim();
        let r: NeumaierSum<T> = (0..n).map(|k| self.realized[(k, k)].re).collect();
        let p: NeumaierSum<T> = (0..n).map(|k| self.predicted[(k, k)].re).collect();
        r.value() / p.value()
    }

    /// `max_k |Σ(ΔM_k)²| / Σ|ΔM_k|²`.
    pub fn max_nonconjugate_ratio(&self) -> T {
        let n = self.realized.dim();
        (0..n).map(|k| self.nonconjugate[(k, k)].norm() / self.realized[(k, k)].re).fold(T::zero(), T::max)
    }

    /// `|Σ ΔM_i ΔM_j| / √(Σ|ΔM_i|² Σ|ΔM_j|²)`.
    pub fn nonconjugate_ratio(&self, i: usize, j: usize) -> T {
        self.nonconjugate[(i, j)].norm() / (self.realized[(i, i)].re * self.realized[(j, j)].re).sqrt()
    }
}

/// Covariations along a labelled path. `overlaps[s]` is the overlap matrix
/// of step `s` in sorted order; increments are taken with the Itô
/// convention (overlaps at the start of each step), and the OU drift
/// `−λ dt/2` is removed from each increment.
pub fn empirical_brackets<T: Real>(path: &EigenPath<T>, overlaps: &[OverlapMatrix<T>], dt: T) -> Result<BracketEstimate<T>> {
    let steps = path.len().saturating_sub(1);
    if steps < MIN_BRACKET_STEPS {
        return Err(Error::InsufficientSteps { needed: MIN_BRACKET_STEPS, got: steps });
    }
    let n = path.positions.len();
    let mut est = BracketEstimate::zeros(n);
    let half = dt / T::of(2.0);
    let scale = dt / T::of_usize(n);
    for s in 0..steps {
        let dm: Vec<Complex<T>> = (0..n).map(|k| path.positions[k][s + 1] - path.positions[k][s] + path.positions[k][s] * half).collect();
        let lab = &path.labels[s];
        accumulate(&mut est, &dm, |i, j| overlaps[s].get(lab[i], lab[j]) * scale);
    }
    est.steps = steps;
    Ok(est)
}

fn accumulate<T: Real>(est: &mut BracketEstimate<T>, dm: &[Complex<T>], predicted: impl Fn(usize, usize) -> Complex<T>) {
    let n = dm.len();
    for j in 0..n {
        for i in 0..n {
            est.realized[(i, j)] += dm[i] * dm[j].conj();
            est.nonconjugate[(i, j)] += dm[i] * dm[j];
            est.predicted[(i, j)] += predicted(i, j);
        }
    }
}

/// Deepest bisection of an ambiguous step: sub-steps down to `dt/2^MAX_REFINE`.
pub const MAX_REFINE: u32 = 10;

/// Samples `G(t+h/2)` given `G(t) = a` and `G(t+h) = b` from the
/// Ornstein–Uhlenbeck bridge: entrywise Gaussian with mean `c(a+b)/(1+c²)`,
/// `c = e^{−h/4}`, and variance `(1−e^{−h/2})/(N(1+c²))`. Exact in law for
/// the exact stepping mode.
pub fn ou_bridge_midpoint<T: Real, R: Rng + ?Sized>(
    a: &ComplexMatrix<T>,
    b: &ComplexMatrix<T>,
    h: T,
    cfg: &FlowConfig<T>,
    rng: &mut R,
) -> ComplexMatrix<T> {
    let c = (-h / T::of(4.0)).exp();
    let w = c / (T::one() + c * c);
    let sd = (-(-h / T::of(2.0)).exp_m1() / (T::of_usize(cfg.n) * (T::one() + c * c))).sqrt();
    ComplexMatrix::from_fn(cfg.n, |i, j| {
        let mean = (a[(i, j)] + b[(i, j)]) * w;
        if !cfg.noise {
            return mean;
        }
        let xi = if cfg.real {
            Complex::new(T::of(sample_standard_normal(rng)), T::zero())
        } else {
            sample_standard_complex_gaussian::<T, R>(rng)
        };
        mean + xi * sd
    })
}

/// A matrix on the flow with its labelled eigenvalues.
struct Node<T> {
    g: ComplexMatrix<T>,
    /// Eigenvalue of each label.
    pos: Vec<Complex<T>>,
    /// Sorted-spectrum index of each label.
    lab: Vec<usize>,
    sys: Option<EigenSystem<T>>,
}

struct Tracker<'a, T, R: ?Sized> {
    cfg: &'a FlowConfig<T>,
    rng: &'a mut R,
    vectors: bool,
    refinements: usize,
}

impl<T: Real, R: Rng + ?Sized> Tracker<'_, T, R> {
    fn decompose(&self, g: &ComplexMatrix<T>, step: usize) -> Result<(Spectrum<T>, Option<EigenSystem<T>>)> {
        let wrap = |e| Error::DecompositionFailed { step, source: Box::new(e) };
        if self.vectors {
            let (s, sys) = eigendecompose(g, T::of(1e-6)).map_err(wrap)?;
            Ok((s, Some(sys)))
        } else {
            Ok((eigenvalues(g).map_err(wrap)?, None))
        }
    }

    /// Moves `from` to `g_next` over time `h`. An ambiguous match is bisected
    /// with a bridge midpoint; `visit` sees every accepted sub-step. `None`
    /// when the ambiguity survives [`MAX_REFINE`] bisections.
    fn advance(
        &mut self,
        from: &Node<T>,
        g_next: ComplexMatrix<T>,
        h: T,
        depth: u32,
        step: usize,
        visit: &mut impl FnMut(&Node<T>, &Node<T>, T),
    ) -> Result<Option<Node<T>>> {
        let (spec, sys) = self.decompose(&g_next, step)?;
        let m = match_spectra(&from.pos, spec.eigenvalues(), T::of(AMBIGUITY_RATIO));
        if !m.ambiguous {
            let pos = m.perm.iter().map(|&j| spec.eigenvalues()[j]).collect();
            let next = Node { g: g_next, pos, lab: m.perm, sys };
            visit(from, &next, h);
            return Ok(Some(next));
        }
        if depth == MAX_REFINE {
            return Ok(None);
        }
        self.refinements += 1;
        let mid = ou_bridge_midpoint(&from.g, &g_next, h, self.cfg, self.rng);
        let half = h / T::of(2.0);
        match self.advance(from, mid, half, depth + 1, step, visit)? {
            Some(m) => self.advance(&m, g_next, half, depth + 1, step, visit),
            None => Ok(None),
        }
    }

    /// Full path from `g0`; stops at the first step whose ambiguity cannot be
    /// refined away.
    fn run(&mut self, g0: &ComplexMatrix<T>, mut visit: impl FnMut(&Node<T>, &Node<T>, T)) -> Result<EigenPath<T>> {
        let (spec, sys) = self.decompose(g0, 0)?;
        let mut path = EigenPath::start(T::zero(), &spec);
        let mut node = Node { g: g0.clone(), pos: spec.eigenvalues().to_vec(), lab: (0..spec.len()).collect(), sys };
        path.record_diagonal(&node);
        for step in 1..=self.cfg.steps {
            let mut g = node.g.clone();
            ou_step(&mut g, self.cfg, self.rng);
            match self.advance(&node, g, self.cfg.dt, 0, step, &mut visit)? {
                Some(next) => {
                    path.matched.push(true);
                    for (k, &l) in next.pos.iter().enumerate() {
                        path.positions[k].push(l);
                    }
                    path.labels.push(next.lab.clone());
                    path.times.push(self.cfg.dt * T::of_usize(step));
                    path.record_diagonal(&next);
                    node = next;
                }
                None => {
                    path.matched.push(false);
                    path.rejected_steps = self.cfg.steps + 1 - step;
                    break;
                }
            }
        }
        path.refinements = self.refinements;
        Ok(path)
    }
}

/// Runs one flow path from `g0`, decomposing every step, and returns the
/// bracket estimate together with the labelled path. Ambiguous steps are
/// bisected (see [`ou_bridge_midpoint`]); the path stops where that fails.
/// Fewer than [`MIN_BRACKET_STEPS`] matched steps is an error.
pub fn simulate_brackets<T: Real, R: Rng + ?Sized>(
    g0: &ComplexMatrix<T>,
    cfg: &FlowConfig<T>,
    rng: &mut R,
) -> Result<(BracketEstimate<T>, EigenPath<T>)> {
    let n = cfg.n;
    let nn = T::of_usize(n);
    let mut est = BracketEstimate::zeros(n);
    let mut tracker = Tracker { cfg, rng, vectors: true, refinements: 0 };
    let path = tracker.run(g0, |a, b, h| {
        let sys = a.sys.as_ref().expect("vectors requested");
        let o = overlaps(&sys.x, &sys.y);
        let half = h / T::of(2.0);
        let dm: Vec<Complex<T>> = (0..n).map(|k| b.pos[k] - a.pos[k] + a.pos[k] * half).collect();
        accumulate(&mut est, &dm, |i, j| o.get(a.lab[i], a.lab[j]) * h / nn);
    })?;
    est.steps = path.len() - 1;
    if est.steps < MIN_BRACKET_STEPS {
        return Err(Error::InsufficientSteps { needed: MIN_BRACKET_STEPS, got: est.steps });
    }
    Ok((est, path))
}

/// Mean-square displacement over paths, restricted to eigenvalues starting
/// in a ball.
#[derive(Debug, Clone, Default)]
pub struct MsdAccumulator<T> {
    sum: NeumaierSum<T>,
    paths: usize,
    rejected: usize,
}

impl<T: Real> MsdAccumulator<T> {
    pub fn new() -> Self {
        Self { sum: NeumaierSum::new(), paths: 0, rejected: 0 }
    }

    /// Adds `(1/N) Σ_k |λ_k(t) − λ_k(0)|² 𝟏{λ_k(0) ∈ ball}` for one path.
    pub fn push(&mut self, start: &[Complex<T>], end: &[Complex<T>], center: Complex<T>, radius: T) {
        let n = T::of_usize(start.len());
        let mut s = T::zero();
        for (&a, &b) in start.iter().zip(end) {
            if (a - center).norm() < radius {
                s += (b - a).norm_sqr();
            }
        }
        self.sum.add(s / n);
        self.paths += 1;
    }

    pub fn reject(&mut self) {
        self.rejected += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum.merge(&other.sum);
        self.paths += other.paths;
        self.rejected += other.rejected;
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn mean(&self) -> Option<T> {
        (self.paths > 0).then(|| self.sum.value() / T::of_usize(self.paths))
    }
}

/// `t·∫_ball(1−|z|²)dm/π`.
pub fn msd_prediction<T: Real>(center: Complex<T>, radius: T, t: T) -> T {
    t * disk_integral_one_minus_abs2(center, radius) / T::PI()
}

/// `(empirical, predicted)` mean-square displacement.
pub fn diffusive_msd<T: Real>(acc: &MsdAccumulator<T>, center: Complex<T>, radius: T, t: T) -> Result<(T, T)> {
    let m = acc.mean().ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    Ok((m, msd_prediction(center, radius, t)))
}

/// Runs `cfg.steps` steps from `g0` tracking eigenvalues only (ambiguous
/// steps bisected as in [`simulate_brackets`]); returns the labelled start
/// and end positions, or `None` when an unresolved ambiguity cut the path
/// short.
pub fn simulate_displacement<T: Real, R: Rng + ?Sized>(
    g0: &ComplexMatrix<T>,
    cfg: &FlowConfig<T>,
    rng: &mut R,
) -> Result<Option<(Vec<Complex<T>>, Vec<Complex<T>>)>> {
    let path = Tracker { cfg, rng, vectors: false, refinements: 0 }.run(g0, |_, _, _| {})?;
    if path.is_truncated() {
        return Ok(None);
    }
    let start = path.positions.iter().map(|p| p[0]).collect();
    let end = path.positions.iter().map(|p| *p.last().expect("nonempty")).collect();
    Ok(Some((start, end)))
}

/// Residual statistics of the real flow against its predicted drift and
/// brackets, up to the first collision.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDriftReport<T> {
    /// Steps used (before any collision or ambiguous match).
    pub steps: usize,
    /// Step at which a conjugate pair came within the collision distance of
    /// the real axis, or two real eigenvalues within that of each other.
    pub collision_step: Option<usize>,
    /// `max_k |Σ r_k| / √(Σ 𝒪_kk dt/N)` with `r_k = Δλ_k − drift_k dt`.
    pub max_mean_z: T,
    /// `Σ_k Σ|r_k|² / Σ_k Σ 𝒪_kk dt/N`.
    pub conjugate_ratio: T,
    /// The denominator `Σ_k Σ 𝒪_kk dt/N`, for pooling paths.
    pub predicted_total: T,
    /// `|Σ_k Σ r_k² − Σ_k Σ 𝒪_{k k̄} dt/N| / Σ_k Σ 𝒪_kk dt/N`.
    pub nonconjugate_error: T,
    /// Largest `|Im Δλ|` of an eigenvalue that is real before and after.
    pub max_real_imag_increment: T,
    /// Changes of the real-eigenvalue count not attributable to a flagged
    /// collision.
    pub unflagged_count_changes: usize,
}

fn is_real_eigenvalue<T: Real>(l: Complex<T>, scale: T) -> bool {
    l.im.abs() <= T::of(1e-9) * scale
}

/// `Σ_{l≠k} 𝒪_{k l̄}/(λ_k−λ_l) − λ_k/2` for every `k` (sorted order).
pub fn real_flow_drift<T: Real>(spectrum: &Spectrum<T>, nonconj: &ComplexMatrix<T>) -> Vec<Complex<T>> {
    let eig = spectrum.eigenvalues();
    let n = eig.len();
    (0..n)
        .map(|k| {
            let mut s = Complex::new(T::zero(), T::zero());
            for l in 0..n {
                if l != k {
                    s += nonconj[(k, l)] / (eig[k] - eig[l]);
                }
            }
            s - eig[k] / T::of(2.0)
        })
        .collect()
}

/// Runs the real flow from a real `g0` and compares increments with the
/// predicted drift and brackets until the first collision.
pub fn real_flow_drift_check<T: Real, R: Rng + ?Sized>(
    g0: &ComplexMatrix<T>,
    cfg: &FlowConfig<T>,
    rng: &mut R,
) -> Result<RealDriftReport<T>> {
    if !cfg.real || g0.iter().any(|z| z.im != T::zero()) {
        return Err(Error::InvalidArgument("real flow needs a real start and real noise".into()));
    }
    let n = cfg.n;
    let nn = T::of_usize(n);
    let tol = T::of(1e-6);
    let ratio = T::of(AMBIGUITY_RATIO);
    let decompose = |g: &ComplexMatrix<T>, step: usize| {
        eigendecompose(g, tol).map_err(|e| Error::DecompositionFailed { step, source: Box::new(e) })
    };
    let mut g = g0.clone();
    let (mut spec, mut sys) = decompose(&g, 0)?;
    let scale = g.frobenius_norm().max(T::one());
    let mut sum_r = vec![Complex::new(T::zero(), T::zero()); n];
    let mut sum_pred_kk = vec![T::zero(); n];
    let mut sum_abs = NeumaierSum::new();
    let mut sum_sq_re = NeumaierSum::new();
    let mut sum_sq_im = NeumaierSum::new();
    let mut pred_nc_re = NeumaierSum::new();
    let mut pred_nc_im = NeumaierSum::new();
    let mut pred_total = NeumaierSum::new();
    let mut max_real_imag = T::zero();
    let mut unflagged = 0;
    let mut collision_step = None;
    let mut steps = 0;
    for step in 1..=cfg.steps {
        let o = overlaps(&sys.x, &sys.y);
        let nc = nonconjugate_overlaps(&sys.x, &sys.y);
        let drift = real_flow_drift(&spec, &nc);
        let eig = spec.eigenvalues().to_vec();
        // A conjugate pair about to land on the real axis, or two real
        // eigenvalues about to leave it, ends the comparison.
        for (k, &l) in eig.iter().enumerate() {
            let reach = |j: usize| T::of(10.0) * (cfg.dt * o.get(j, j).re / nn).sqrt();
            if !is_real_eigenvalue(l, scale) {
                if l.im.abs() < reach(k) {
                    collision_step = Some(step - 1);
                }
            } else if eig
                .iter()
                .enumerate()
                .any(|(j, &m)| j != k && is_real_eigenvalue(m, scale) && (l - m).norm() < reach(k) + reach(j))
            {
                collision_step = Some(step - 1);
            }
        }
        if collision_step.is_some() {
            break;
        }
        ou_step(&mut g, cfg, rng);
        let (next_spec, next_sys) = decompose(&g, step)?;
        let m = match_spectra(&eig, next_spec.eigenvalues(), ratio);
        if m.ambiguous {
            break;
        }
        let before = eig.iter().filter(|&&l| is_real_eigenvalue(l, scale)).count();
        let after = next_spec.eigenvalues().iter().filter(|&&l| is_real_eigenvalue(l, scale)).count();
        if before != after {
            unflagged += 1;
        }
        for k in 0..n {
            let next = next_spec.eigenvalues()[m.perm[k]];
            let r = next - eig[k] - drift[k] * cfg.dt;
            sum_r[k] += r;
            let p = o.get(k, k).re * cfg.dt / nn;
            sum_pred_kk[k] += p;
            pred_total.add(p);
            sum_abs.add(r.norm_sqr());
            let r2 = r * r;
            sum_sq_re.add(r2.re);
            sum_sq_im.add(r2.im);
            let pnc = nc[(k, k)] * cfg.dt / nn;
            pred_nc_re.add(pnc.re);
            pred_nc_im.add(pnc.im);
            if is_real_eigenvalue(eig[k], scale) && is_real_eigenvalue(next, scale) {
                max_real_imag = max_real_imag.max((next - eig[k]).im.abs());
            }
        }
        steps += 1;
        spec = next_spec;
        sys = next_sys;
    }
    if steps == 0 {
        return Err(Error::CollisionDetected { step: collision_step.unwrap_or(0) });
    }
    let max_mean_z = (0..n).map(|k| sum_r[k].norm() / sum_pred_kk[k].sqrt()).fold(T::zero(), T::max);
    let total = pred_total.value();
    let nc_err = Complex::new(sum_sq_re.value() - pred_nc_re.value(), sum_sq_im.value() - pred_nc_im.value()).norm() / total;
    Ok(RealDriftReport {
        steps,
        collision_step,
        max_mean_z,
        conjugate_ratio: sum_abs.value() / total,
        predicted_total: total,
        nonconjugate_error: nc_err,
        max_real_imag_increment: max_real_imag,
        unflagged_count_changes: unflagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand_ensembles::{sample_matrix, EnsembleKind, EnsembleSpec};
    use crate::RngStream;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig::new(5, 0.0f64, 10).is_err());
        assert!(FlowConfig::new(5, 0.1f64, 0).is_err());
    }

    #[test]
    fn zero_noise_is_exponential_decay() {
        let mut rng = RngStream::new(1, 0);
        let g0: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexGaussian, 6), &mut rng);
        let dt = 1e-3;
        let cfg = FlowConfig::new(6, dt, 1000).unwrap().noise(false);
        let seq = evolve_ou(&g0, &cfg, &mut rng);
        let t = 1.0f64;
        let expected = g0.scale((-t / 2.0).exp());
        let err = seq.last().unwrap().sub(&expected).max_abs() / g0.max_abs();
        assert!(err < 1e-3, "{err}");
        let exact = evolve_ou(&g0, &cfg.mode(StepMode::ExactOu), &mut rng);
        assert!(exact.last().unwrap().sub(&expected).max_abs() < 1e-12);
    }

    #[test]
    fn one_step_from_zero_has_variance_dt_over_n() {
        let n = 40;
        let dt = 0.01;
        let mut rng = RngStream::new(2, 0);
        let mut g = ComplexMatrix::<f64>::zeros(n);
        ou_step(&mut g, &FlowConfig::new(n, dt, 1).unwrap(), &mut rng);
        let v = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / (n * n) as f64;
        assert!((v / (dt / n as f64) - 1.0).abs() < 0.05);
    }

    #[test]
    fn stationarity_of_exact_stepping() {
        let n = 30;
        let mut rng = RngStream::new(3, 0);
        let g0: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexGaussian, n), &mut rng);
        let cfg = FlowConfig::new(n, 0.1, 10).unwrap().mode(StepMode::ExactOu);
        let seq = evolve_ou(&g0, &cfg, &mut rng);
        for g in seq.iter().step_by(5) {
            let vals: Vec<f64> = g.iter().map(|z| z.norm_sqr() * n as f64).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64 / vals.len() as f64).sqrt();
            assert!((mean - 1.0).abs() < 3.0 * se + 1e-12, "{mean} ± {se}");
        }
    }

    #[test]
    fn hungarian_finds_optimum() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let p = hungarian(&cost);
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn constant_sequence_tracks_identically() {
        let s = Spectrum::sorted(vec![c(0.1, 0.), c(0.5, 0.2), c(-0.3, 0.4)]);
        let path = track_eigenvalue_paths(&[s.clone(), s.clone(), s], 0.1, 1.5);
        assert!(path.matched.iter().all(|&m| m));
        assert!(path.increments().iter().flatten().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn swapped_eigenvalues_flagged() {
        let a = Spectrum::new(vec![c(0., 0.), c(0.1, 0.)]);
        let b = Spectrum::new(vec![c(0.06, 0.), c(0.04, 0.)]);
        let path = track_eigenvalue_paths(&[a, b], 1.0, 1.5);
        assert!(path.is_truncated());
        assert_eq!(path.len(), 1);
        assert_eq!(path.rejected_steps, 1);
    }

    #[test]
    fn bridge_midpoint_mean_and_variance() {
        let n = 4;
        let h = 0.3f64;
        let mut rng = RngStream::new(5, 0);
        let a: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexGaussian, n), &mut rng);
        let b: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexGaussian, n), &mut rng);
        let cfg = FlowConfig::new(n, h, 1).unwrap();
        let k = (-h / 4.0).exp();
        let mean = a.add(&b).scale(k / (1.0 + k * k));
        let quiet = ou_bridge_midpoint(&a, &b, h, &cfg.clone().noise(false), &mut rng);
        assert!(quiet.sub(&mean).max_abs() < 1e-14);
        let var = (1.0 - (-h / 2.0).exp()) / (n as f64 * (1.0 + k * k));
        let draws = 4000;
        let mut second = 0.0;
        for _ in 0..draws {
            let m = ou_bridge_midpoint(&a, &b, h, &cfg, &mut rng).sub(&mean);
            second += m[(1, 2)].norm_sqr();
        }
        let rel = second / draws as f64 / var - 1.0;
        assert!(rel.abs() < 0.1, "{rel}");
    }

    #[test]
    fn bisection_resolves_a_crowded_step() {
        let cfg = FlowConfig::new(2, 1e-3f64, 1).unwrap().noise(false);
        let diag = |x: f64, y: f64| ComplexMatrix::from_fn(2, |i, j| if i != j { c(0.0, 0.0) } else if i == 0 { c(x, 0.0) } else { c(y, 0.0) });
        let mut rng = RngStream::new(6, 0);
        let mut tracker = Tracker { cfg: &cfg, rng: &mut rng, vectors: false, refinements: 0 };
        let start = Node { g: diag(0.0, 1.0), pos: vec![c(0.0, 0.0), c(1.0, 0.0)], lab: vec![0, 1], sys: None };
        let mut visits = 0;
        let end = tracker.advance(&start, diag(0.45, 0.55), cfg.dt, 0, 1, &mut |_, _, _| visits += 1).unwrap().unwrap();
        assert!(tracker.refinements > 0);
        assert_eq!(visits, tracker.refinements + 1);
        assert!((end.pos[0].re - 0.45).abs() < 1e-12 && (end.pos[1].re - 0.55).abs() < 1e-12);
        let none = tracker.advance(&start, diag(0.48, 0.52), cfg.dt, MAX_REFINE, 1, &mut |_, _, _| {}).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn deterministic_flow_has_no_covariation() {
        let n = 8;
        let mut rng = RngStream::new(4, 0);
        let g0: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexGaussian, n), &mut rng);
        let cfg = FlowConfig::new(n, 1e-4, 150).unwrap().noise(false).mode(StepMode::ExactOu);
        let (est, _) = simulate_brackets(&g0, &cfg, &mut rng).unwrap();
        for k in 0..n {
            assert!(est.realized[(k, k)].re < 1e-6 * est.predicted[(k, k)].re);
        }
    }

    #[test]
    fn brackets_are_hermitian_and_too_short_paths_fail() {
        let n = 6;
        let mut rng = RngStream::new(5, 0);
        let g0: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::ComplexGaussian, n), &mut rng);
        let cfg = FlowConfig::new(n, 1e-5, 120).unwrap();
        let (est, path) = simulate_brackets(&g0, &cfg, &mut rng).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(est.realized[(i, j)], est.realized[(j, i)].conj());
            }
        }
        let seq = evolve_ou(&g0, &FlowConfig::new(n, 1e-5, 50).unwrap(), &mut rng);
        let short = track_matrices(&seq, 1e-5, 1.5).unwrap();
        assert!(matches!(empirical_brackets(&short, &[], 1e-5), Err(Error::InsufficientSteps { .. })));
        assert_eq!(path.len(), 121);
    }

    #[test]
    fn edge_ball_diffuses_slower_than_center() {
        assert!(msd_prediction(c(0.8, 0.), 0.1, 0.01) < msd_prediction(c(0., 0.), 0.1, 0.01));
        let p1 = msd_prediction(c(0., 0.), 0.5f64, 0.01);
        let p2 = msd_prediction(c(0., 0.), 0.5f64, 0.02);
        assert!((p2 / p1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn real_drift_points_toward_axis() {
        // conjugate pair: the interaction with the partner is O_kk/(λ−λ̄)
        let mut rng = RngStream::new(6, 0);
        let n = 10;
        let spec = EnsembleSpec::new(EnsembleKind::RealGaussian, n);
        for _ in 0..20 {
            let g: ComplexMatrix<f64> = sample_matrix(&spec, &mut rng);
            let (s, sys) = eigendecompose(&g, 1e-8).unwrap();
            let nc = nonconjugate_overlaps(&sys.x, &sys.y);
            let o = overlaps(&sys.x, &sys.y);
            let eig = s.eigenvalues();
            for k in 0..n {
                if eig[k].im > 1e-6 {
                    let partner = (0..n).find(|&l| (eig[l] - eig[k].conj()).norm() < 1e-8).unwrap();
                    let term = nc[(k, partner)] / (eig[k] - eig[partner]);
                    assert!((nc[(k, partner)].re - o.get(k, k).re).abs() < 1e-8 * o.get(k, k).re);
                    assert!(term.im < 0.0);
                }
                if eig[k].im.abs() < 1e-12 {
                    let d = real_flow_drift(&s, &nc)[k];
                    assert!(d.im.abs() < 1e-8 * (1.0 + d.re.abs()));
                }
            }
        }
    }

    #[test]
    fn real_flow_residuals() {
        let n = 10;
        let mut rng = RngStream::new(7, 0);
        let g0: ComplexMatrix<f64> = sample_matrix(&EnsembleSpec::new(EnsembleKind::RealGaussian, n), &mut rng);
        let cfg = FlowConfig::new(n, 1e-5, 300).unwrap().real(true);
        let r = real_flow_drift_check(&g0, &cfg, &mut rng).unwrap();
        assert!(r.steps >= 100, "{r:?}");
        assert!(r.max_real_imag_increment < 1e-8, "{r:?}");
        assert!((r.conjugate_ratio - 1.0).abs() < 0.2, "{r:?}");
        assert!(r.nonconjugate_error < 0.2, "{r:?}");
        assert_eq!(r.unflagged_count_changes, 0);
    }
}
