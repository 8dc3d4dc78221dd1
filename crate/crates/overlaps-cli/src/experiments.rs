//! The experiments behind `overlaps run`.
//!
//! Trials are split into `workers` contiguous index ranges; trial `i` always
//! uses `RngStream::new(seed, i)` and results are folded in trial order, so
//! outputs do not depend on the worker count.

use std::f64::consts::TAU;

use num_complex::Complex;
use overlaps::angles::{angle_distribution_test, collect_angle_samples, eigenvector_angle, AngleMode, AngleSample};
use overlaps::dynamics::{msd_prediction, real_flow_drift_check, simulate_brackets, BracketEstimate, EigenPath, FlowConfig, MsdAccumulator, RealDriftReport};
use overlaps::estimators::{
    extremes_scan, ks_distance, pseudospectrum_volume, ComplexAccumulator, DiagAccumulator, DiskWindow, Histogram, KsReport,
    MomentAccumulator, PairAccumulator, PairWindow, Region,
};
use overlaps::formulas::{self, Upper};
use overlaps::oracle::{run_oracle_suite, small_n_second_moment_oracle};
use overlaps::rand_ensembles::{sample_gamma, sample_matrix, sample_standard_complex_gaussian};
use overlaps::spectral::{diagonal_overlaps, eigendecompose, overlaps};
use overlaps::{ComplexMatrix, EigenSystem, Error, RngStream, Spectrum};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{num, PlotData, Report, Table};

type C = Complex<f64>;

/// Residual tolerance handed to the eigensolver.
const EIG_TOL: f64 = 1e-8;

/// Function names accepted by the `formulas` experiment.
pub const FORMULAS: &[&str] = &[
    "exp_partial_sum",
    "mean_diag_exact",
    "mean_diag_asymptotic",
    "mean_offdiag_exact_origin",
    "mean_offdiag_asymptotic",
    "second_moment_abs_o12_sq",
    "second_moment_o11_o22",
    "inv_gamma2_density",
    "inv_gamma2_cdf",
    "beta_inv_finite_n_density",
    "beta_inv_finite_n_cdf",
    "angle_limit_density",
    "angle_limit_cdf",
    "angle_origin_finite_n_cdf",
    "frechet_cdf",
];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("backend failure in trial {trial}: {source}")]
    Backend { trial: u64, source: Error },
    #[error("{0}")]
    Numeric(Error),
}

/// Trial indices handled by one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WorkerRange {
    pub worker: usize,
    pub start: u64,
    pub end: u64,
}

pub fn worker_ranges(trials: usize, workers: usize) -> Vec<WorkerRange> {
    let workers = workers.clamp(1, trials.max(1));
    let (q, r) = (trials / workers, trials % workers);
    let mut start = 0u64;
    (0..workers)
        .map(|w| {
            let len = (q + usize::from(w < r)) as u64;
            let range = WorkerRange { worker: w, start, end: start + len };
            start += len;
            range
        })
        .collect()
}

/// Runs `f` on every trial and returns the outputs in trial order.
fn run_trials<T: Send>(
    seed: u64,
    ranges: &[WorkerRange],
    f: impl Fn(u64, &mut RngStream) -> Result<T, Error> + Sync,
) -> Result<Vec<T>, RunError> {
    let chunks: Vec<Result<Vec<T>, RunError>> = ranges
        .par_iter()
        .map(|r| {
            (r.start..r.end)
                .map(|i| f(i, &mut RngStream::new(seed, i)).map_err(|source| RunError::Backend { trial: i, source }))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Eigendecomposition; a near-degenerate spectrum is a rejection, anything
/// else a backend failure.
fn decompose(g: &ComplexMatrix<f64>) -> Result<Option<(Spectrum<f64>, EigenSystem<f64>)>, Error> {
    match eigendecompose(g, EIG_TOL) {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateSpectrum { .. } | Error::GapTooSmall { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Eigenvalues and diagonal overlaps of one sampled matrix.
fn sample_diag(cfg: &ExperimentConfig, rng: &mut RngStream) -> Result<Option<(Vec<C>, Vec<f64>)>, Error> {
    let g: ComplexMatrix<f64> = sample_matrix(&cfg.ensemble, rng);
    Ok(decompose(&g)?.map(|(s, sys)| (s.eigenvalues().to_vec(), diagonal_overlaps(&sys.x, &sys.y))))
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    v
}

fn ks_table(reports: &[KsReport]) -> Table {
    let mut t = Table::new("ks_report", &["test_name", "n", "distance", "threshold", "pass"]);
    for r in reports {
        t.push(vec![r.test_name.clone(), r.n.to_string(), num(r.distance), num(r.threshold), r.pass.to_string()]);
    }
    t
}

fn histogram_plot(name: &str, title: &str, sample: &[f64], hi: f64, bins: usize, density: impl Fn(f64) -> f64) -> PlotData {
    let mut h = Histogram::uniform(0.0, hi, bins);
    sample.iter().for_each(|&x| h.push(x));
    let mut p = PlotData::new(name, title, &["x", "empirical_density", "reference_density"]);
    for (x, d) in h.density() {
        p.push(vec![x, d, density(x)]);
    }
    p
}

fn grid(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.points == 1 {
        return vec![cfg.x_min];
    }
    (0..cfg.points).map(|i| cfg.x_min + (cfg.x_max - cfg.x_min) * i as f64 / (cfg.points - 1) as f64).collect()
}

pub fn run(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    match cfg.experiment {
        Experiment::DiagDistribution => diag_distribution(cfg, seed, ranges),
        Experiment::OffdiagMean => offdiag_mean(cfg, seed, ranges),
        Experiment::SecondMoments => second_moments(cfg),
        Experiment::Pseudospectrum => pseudospectrum(cfg, seed, ranges),
        Experiment::Dynamics => dynamics(cfg, seed, ranges),
        Experiment::Angles => angles(cfg, seed, ranges),
        Experiment::Extremes => extremes(cfg, seed, ranges),
        Experiment::Formulas => formulas_table(cfg),
        Experiment::Verify => Ok(verify()),
        Experiment::Universality => universality(cfg, seed, ranges),
    }
}

fn diag_distribution(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let n = cfg.n;
    let samples = run_trials(seed, ranges, |_, rng| sample_diag(cfg, rng))?;
    let mut r = Report::default();
    r.reject("degenerate_spectrum", samples.iter().filter(|s| s.is_none()).count());
    let scales: Vec<f64> = [0.5, 1.0, 2.0, 4.0].iter().map(|m| m * cfg.window_scale).collect();
    let mut sweep = Table::new("radius_sweep", &["window_scale", "radius", "n", "mean", "stderr"]);
    let mut main = None;
    for &c in &scales {
        let window = DiskWindow::scaled(n, cfg.center, c).map_err(RunError::Numeric)?;
        let mut acc = DiagAccumulator::new(n, window);
        for (eig, diag) in samples.iter().flatten() {
            acc.push_matrix(eig, diag);
        }
        let row = match acc.clone().finish() {
            Ok(e) => vec![num(c), num(window.radius), e.estimate.count.to_string(), num(e.estimate.mean), num(e.estimate.std_error.unwrap_or(f64::NAN))],
            Err(_) => vec![num(c), num(window.radius), "0".into(), String::new(), String::new()],
        };
        sweep.push(row);
        if c == cfg.window_scale {
            main = Some(acc);
        }
    }
    let exact = formulas::mean_diag_exact(n, cfg.center);
    let est = main.expect("configured scale is in the sweep").finish();
    let mut stats = Table::new("diag_stats", &["z_re", "z_im", "n", "mean", "stderr"]);
    match est {
        Ok(e) => {
            let m = e.estimate;
            let se = m.std_error.unwrap_or(f64::NAN);
            stats.push(vec![num(cfg.center.re), num(cfg.center.im), m.count.to_string(), num(m.mean), num(se)]);
            let dev = (m.mean - exact).abs();
            r.assert(
                "mean_vs_exact",
                dev <= cfg.rel_tol * exact + 3.0 * se,
                format!("windowed mean {:.4} ± {se:.4} over {} hits, exact {exact:.4}, allowed rel_tol·exact + 3·stderr", m.mean, m.count),
            );
            let ks = KsReport::new("normalized_vs_inverse_gamma2", e.normalized.len(), ks_distance(&e.normalized, formulas::inv_gamma2_cdf), cfg.ks_threshold);
            r.value("ks_normalized_vs_inverse_gamma2", ks.distance);
            r.tables.push(ks_table(&[ks]));
            r.plots.push(histogram_plot(
                "diag_histogram",
                "O_ii/(N(1-|z|^2)) in the window against the inverse-Gamma(2) density",
                &e.normalized,
                5.0,
                cfg.bins,
                formulas::inv_gamma2_density,
            ));
            r.value("mean", m.mean);
            r.value("stderr", m.std_error);
            r.value("hits", m.count);
        }
        Err(Error::EmptyWindow) => r.assert("mean_vs_exact", false, "no eigenvalue fell in the window"),
        Err(e) => return Err(RunError::Numeric(e)),
    }
    r.value("exact_mean", exact);
    r.value("asymptotic_mean", formulas::mean_diag_asymptotic(n, cfg.center));
    r.tables.push(stats);
    r.tables.push(sweep);
    Ok(r)
}

fn offdiag_mean(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let n = cfg.n;
    let sqrt_n = (n as f64).sqrt();
    let edges: Vec<f64> = (0..=cfg.bands).map(|b| cfg.omega_min + (cfg.omega_max - cfg.omega_min) * b as f64 / cfg.bands as f64).collect();
    let windows: Vec<PairWindow<f64>> = edges
        .windows(2)
        .map(|w| PairWindow::band(cfg.center, cfg.radius, w[0], w[1]))
        .collect::<Result<_, _>>()
        .map_err(RunError::Numeric)?;
    let per_trial = run_trials(seed, ranges, |_, rng| {
        let g: ComplexMatrix<f64> = sample_matrix(&cfg.ensemble, rng);
        let Some((s, sys)) = decompose(&g)? else { return Ok(None) };
        let o = overlaps(&sys.x, &sys.y);
        let eig = s.eigenvalues();
        let mut accs: Vec<(PairAccumulator<f64>, ComplexAccumulator<f64>)> =
            windows.iter().map(|w| (PairAccumulator::new(n, *w), ComplexAccumulator::new())).collect();
        for (w, (acc, pred)) in windows.iter().zip(accs.iter_mut()) {
            acc.push_matrix(eig, |i, j| o.get(i, j));
            for i in 0..eig.len() {
                for j in 0..eig.len() {
                    if i != j && w.contains(n, eig[i], eig[j]) {
                        pred.push(formulas::mean_offdiag_asymptotic(n, eig[i], eig[j]));
                    }
                }
            }
        }
        Ok(Some(accs))
    })?;
    let mut r = Report::default();
    r.reject("degenerate_spectrum", per_trial.iter().filter(|s| s.is_none()).count());
    let mut totals: Vec<(PairAccumulator<f64>, ComplexAccumulator<f64>)> =
        windows.iter().map(|w| (PairAccumulator::new(n, *w), ComplexAccumulator::new())).collect();
    for accs in per_trial.iter().flatten() {
        for (t, a) in totals.iter_mut().zip(accs) {
            t.0.merge(&a.0);
            t.1.merge(&a.1);
        }
    }
    let mut stats = Table::new("pair_stats", &["omega_lo", "omega_hi", "n", "reO12", "imO12", "absO12sq", "O11O22"]);
    let mut pred_table = Table::new("pair_prediction", &["omega_lo", "omega_hi", "n", "pred_reO12", "pred_imO12", "stderr_reO12", "stderr_imO12"]);
    let mut plot = PlotData::new("offdiag_mean", "-Re E(O_12) against the band midpoint", &["omega", "empirical", "predicted"]);
    for (b, (acc, pred)) in totals.iter().enumerate() {
        let (lo, hi) = (edges[b], edges[b + 1]);
        match (acc.finish(), pred.estimate()) {
            (Ok(e), Ok(p)) => {
                let se = e.o12.std_error.unwrap_or(C::new(f64::NAN, f64::NAN));
                stats.push(vec![num(lo), num(hi), e.o12.count.to_string(), num(e.o12.mean.re), num(e.o12.mean.im), num(e.abs_o12_sq.mean), num(e.o11_o22.mean)]);
                pred_table.push(vec![num(lo), num(hi), p.count.to_string(), num(p.mean.re), num(p.mean.im), num(se.re), num(se.im)]);
                plot.push(vec![(lo + hi) / 2.0, -e.o12.mean.re, -p.mean.re]);
                let dev = (e.o12.mean - p.mean).norm();
                r.assert(
                    format!("o12_band_{b}"),
                    dev <= cfg.rel_tol * p.mean.norm() + 3.0 * se.norm(),
                    format!("ω ∈ [{lo:.3}, {hi:.3}]: {:.4} vs {:.4}, stderr {:.4}, {} pairs from {} matrices", e.o12.mean, p.mean, se.norm(), e.o12.count, e.matrices),
                );
            }
            _ => {
                stats.push(vec![num(lo), num(hi), "0".into(), String::new(), String::new(), String::new(), String::new()]);
                r.assert(format!("o12_band_{b}"), false, format!("no pair with ω ∈ [{lo:.3}, {hi:.3}] within radius {} of the center", cfg.radius));
            }
        }
    }
    r.value("window_radius", cfg.radius);
    r.value("microscopic_unit", 1.0 / sqrt_n);
    r.tables.push(stats);
    r.tables.push(pred_table);
    r.plots.push(plot);
    Ok(r)
}

fn second_moments(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let n = cfg.n;
    let sqrt_n = (n as f64).sqrt();
    let mut r = Report::default();
    let mut t = Table::new(
        "second_moments",
        &["omega", "delta", "exact_absO12sq", "exact_O11O22", "asymptotic_absO12sq", "asymptotic_O11O22"],
    );
    let mut plot = PlotData::new("second_moment_ratios", "exact/asymptotic second moments at the origin", &["omega", "absO12sq_ratio", "O11O22_ratio"]);
    let steps = cfg.points.max(2);
    for i in 0..steps {
        let omega = cfg.omega_min + (cfg.omega_max - cfg.omega_min) * i as f64 / (steps - 1) as f64;
        if omega <= 0.0 {
            continue;
        }
        let z = C::new(omega / sqrt_n, 0.0);
        let e = formulas::second_moment_exact_origin(n, z).map_err(RunError::Numeric)?;
        let a = formulas::second_moment_asymptotic(n, C::new(0.0, 0.0), z);
        t.push(vec![num(omega), num(omega * omega), num(e.abs_o12_sq), num(e.o11_o22), num(a.abs_o12_sq), num(a.o11_o22)]);
        plot.push(vec![omega, e.abs_o12_sq / a.abs_o12_sq, e.o11_o22 / a.o11_o22]);
    }
    for delta in [1.0, 4.0] {
        let z = C::new((delta / 3.0f64).sqrt(), 0.0);
        let e = formulas::second_moment_exact_origin(3, z).map_err(RunError::Numeric)?;
        let o = small_n_second_moment_oracle(3, z).map_err(RunError::Numeric)?;
        let err = (e.abs_o12_sq / o.abs_o12_sq - 1.0).abs().max((e.o11_o22 / o.o11_o22 - 1.0).abs());
        r.assert(format!("closed_form_vs_quadrature_N3_delta{delta}"), err < 1e-6, format!("worst relative difference {err:.2e}"));
    }
    r.tables.push(t);
    r.plots.push(plot);
    Ok(r)
}

fn pseudospectrum(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let ball = DiskWindow::new(cfg.center, cfg.radius).map_err(RunError::Numeric)?;
    let per_trial = run_trials(seed, ranges, |_, rng| {
        Ok(sample_diag(cfg, rng)?.map(|(eig, diag)| {
            let hits = eig.iter().filter(|&&l| ball.contains(l)).count();
            let (emp, pred) = pseudospectrum_volume(&eig, &diag, &ball, cfg.eps);
            (hits, emp, pred)
        }))
    })?;
    let mut r = Report::default();
    r.reject("degenerate_spectrum", per_trial.iter().filter(|s| s.is_none()).count());
    let mut t = Table::new("pseudospectrum", &["trial", "eigenvalues_in_ball", "empirical", "predicted", "ratio"]);
    let mut plot = PlotData::new("pseudospectrum_ratio", "empirical/predicted pseudospectrum volume per trial", &["trial", "ratio"]);
    let mut ratios = MomentAccumulator::new();
    for (i, v) in per_trial.iter().enumerate() {
        if let Some((hits, emp, pred)) = v {
            t.push(vec![i.to_string(), hits.to_string(), num(*emp), num(*pred), num(emp / pred)]);
            plot.push(vec![i as f64, emp / pred]);
            ratios.push(emp / pred);
        }
    }
    match ratios.estimate() {
        Ok(m) => {
            r.assert(
                "volume_ratio",
                (m.mean - 1.0).abs() <= cfg.rel_tol,
                format!("mean ratio {:.4} ± {:.4} over {} matrices, allowed |ratio − 1| ≤ {}", m.mean, m.std_error.unwrap_or(f64::NAN), m.count, cfg.rel_tol),
            );
            r.value("mean_ratio", m.mean);
            r.value("stderr", m.std_error);
        }
        Err(_) => r.assert("volume_ratio", false, "no usable trial"),
    }
    r.tables.push(t);
    r.plots.push(plot);
    Ok(r)
}

fn dynamics(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let flow = FlowConfig::new(cfg.n, cfg.dt, cfg.steps).map_err(RunError::Numeric)?.mode(cfg.step_mode).real(cfg.real);
    if cfg.real {
        real_dynamics(cfg, &flow, seed, ranges)
    } else {
        complex_dynamics(cfg, &flow, seed, ranges)
    }
}

fn complex_dynamics(cfg: &ExperimentConfig, flow: &FlowConfig<f64>, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let n = cfg.n;
    let per_trial = run_trials(seed, ranges, |i, rng| {
        let g0: ComplexMatrix<f64> = sample_matrix(&cfg.ensemble, rng);
        match simulate_brackets(&g0, flow, rng) {
            Ok((est, path)) => {
                let dump = (i == 0).then(|| path_dump(&path));
                let ends = path.positions.iter().map(|p| (p[0], *p.last().expect("nonempty"))).collect::<Vec<_>>();
                Ok(Some((est, ends, path.rejected_steps, path.is_truncated(), path.refinements, dump)))
            }
            Err(Error::InsufficientSteps { .. } | Error::DegenerateSpectrum { .. } | Error::GapTooSmall { .. }) => Ok(None),
            Err(Error::DecompositionFailed { source, .. }) if matches!(*source, Error::DegenerateSpectrum { .. } | Error::GapTooSmall { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let mut r = Report::default();
    r.reject("path_too_short_or_degenerate", per_trial.iter().filter(|p| p.is_none()).count());
    let mut total = BracketEstimate::zeros(n);
    let mut msd = MsdAccumulator::new();
    let mut rejected_steps = 0;
    let mut truncated = 0;
    let mut used = 0;
    let mut refinements = 0;
    let mut t_end = Vec::new();
    for (est, ends, rej, trunc, refined, dump) in per_trial.into_iter().flatten() {
        total.merge(&est);
        refinements += refined;
        used += 1;
        rejected_steps += rej;
        truncated += usize::from(trunc);
        t_end.push(est.steps as f64 * cfg.dt);
        let start: Vec<C> = ends.iter().map(|e| e.0).collect();
        let end: Vec<C> = ends.iter().map(|e| e.1).collect();
        if trunc {
            msd.reject();
        } else {
            msd.push(&start, &end, cfg.center, cfg.radius);
        }
        if let Some(d) = dump {
            r.tables.push(d);
        }
    }
    r.reject("truncated_paths", truncated);
    r.reject("unmatched_steps", rejected_steps);
    r.value("refinements", refinements);
    if used == 0 {
        r.assert("brackets", false, "no usable path");
        return Ok(r);
    }
    let mut t = Table::new("brackets", &["k", "realized", "predicted", "ratio", "nonconjugate_abs"]);
    let mut plot = PlotData::new("bracket_ratio", "realized/predicted diagonal covariation per label", &["k", "ratio"]);
    for k in 0..n {
        let (re, pr) = (total.realized[(k, k)].re, total.predicted[(k, k)].re);
        t.push(vec![k.to_string(), num(re), num(pr), num(re / pr), num(total.nonconjugate[(k, k)].norm())]);
        plot.push(vec![k as f64, re / pr]);
    }
    let ratio = total.pooled_diagonal_ratio();
    let nonconj = total.max_nonconjugate_ratio();
    r.assert("diagonal_bracket", (ratio - 1.0).abs() <= cfg.rel_tol, format!("pooled realized/predicted {ratio:.4}, allowed |ratio − 1| ≤ {}", cfg.rel_tol));
    r.assert("nonconjugate_bracket", nonconj < 0.1, format!("max |Σ(ΔM_k)²| / Σ|ΔM_k|² = {nonconj:.4} (< 0.1)"));
    let t_total = cfg.steps as f64 * cfg.dt;
    if let Some(m) = msd.mean() {
        let pred = msd_prediction(cfg.center, cfg.radius, t_total);
        r.value("msd_empirical", m);
        r.value("msd_predicted", pred);
        r.value("msd_paths", msd.paths());
    }
    r.value("pooled_diagonal_ratio", ratio);
    r.value("max_nonconjugate_ratio", nonconj);
    r.value("paths", used);
    r.value("path_end_times", t_end);
    r.tables.push(t);
    r.plots.push(plot);
    Ok(r)
}

/// `(t, k, re, im, O_kk)` along a labelled path; `rng` must be the stream
/// state the path was simulated from, so the matrices are replayed exactly.
fn path_dump(path: &EigenPath<f64>) -> Table {
    let mut t = Table::new("paths", &["t", "k", "re", "im", "O_kk"]);
    for s in 0..path.len() {
        for (k, p) in path.positions.iter().enumerate() {
            t.push(vec![num(path.times[s]), k.to_string(), num(p[s].re), num(p[s].im), num(path.diagonal[s][k])]);
        }
    }
    t
}

fn real_dynamics(cfg: &ExperimentConfig, flow: &FlowConfig<f64>, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let per_trial = run_trials(seed, ranges, |_, rng| {
        let g0: ComplexMatrix<f64> = sample_matrix(&cfg.ensemble, rng);
        match real_flow_drift_check(&g0, flow, rng) {
            Ok(rep) => Ok(Some(rep)),
            Err(Error::CollisionDetected { .. } | Error::DegenerateSpectrum { .. } | Error::GapTooSmall { .. }) => Ok(None),
            Err(Error::DecompositionFailed { source, .. }) if matches!(*source, Error::DegenerateSpectrum { .. } | Error::GapTooSmall { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let mut r = Report::default();
    r.reject("immediate_collision_or_degenerate", per_trial.iter().filter(|p| p.is_none()).count());
    let mut t = Table::new(
        "real_flow",
        &["trial", "steps", "collision_step", "max_mean_z", "conjugate_ratio", "nonconjugate_error", "max_real_imag_increment", "unflagged_count_changes"],
    );
    let reports: Vec<(usize, RealDriftReport<f64>)> = per_trial.into_iter().enumerate().filter_map(|(i, p)| p.map(|p| (i, p))).collect();
    let mut collisions = Vec::new();
    let (mut realized, mut predicted) = (0.0, 0.0);
    for (i, rep) in &reports {
        t.push(vec![
            i.to_string(),
            rep.steps.to_string(),
            rep.collision_step.map(|s| s.to_string()).unwrap_or_default(),
            num(rep.max_mean_z),
            num(rep.conjugate_ratio),
            num(rep.nonconjugate_error),
            num(rep.max_real_imag_increment),
            rep.unflagged_count_changes.to_string(),
        ]);
        if let Some(s) = rep.collision_step {
            collisions.push(serde_json::json!({"trial": i, "step": s, "time": s as f64 * cfg.dt}));
        }
        realized += rep.conjugate_ratio * rep.predicted_total;
        predicted += rep.predicted_total;
    }
    let unflagged: usize = reports.iter().map(|(_, p)| p.unflagged_count_changes).sum();
    let imag = reports.iter().map(|(_, p)| p.max_real_imag_increment).fold(0.0, f64::max);
    r.assert("real_count_changes_flagged", unflagged == 0, format!("{unflagged} unflagged changes of the real-eigenvalue count"));
    r.assert("real_eigenvalues_stay_real", imag < 1e-8, format!("largest imaginary increment of a real eigenvalue {imag:.2e}"));
    if predicted > 0.0 {
        let ratio = realized / predicted;
        r.assert(
            "conjugate_bracket",
            (ratio - 1.0).abs() <= cfg.rel_tol,
            format!("pooled realized/predicted {ratio:.4} over {} paths, allowed |ratio − 1| ≤ {}", reports.len(), cfg.rel_tol),
        );
        r.value("pooled_conjugate_ratio", ratio);
    } else {
        r.assert("conjugate_bracket", false, "no usable path");
    }
    r.value("collisions", collisions);
    r.tables.push(t);
    Ok(r)
}

fn angles(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let n = cfg.n;
    let mut r = Report::default();
    let mut table = Table::new("angles", &["omega", "n", "ks", "pass"]);
    let (samples, mode, cdf): (Vec<AngleSample<f64>>, AngleMode, Box<dyn Fn(f64) -> f64>) = if cfg.at_origin {
        let s = run_trials(seed, ranges, |_, rng| {
            let k = rng.random_range(2..=n as u32);
            let l2 = C::from_polar((sample_gamma(k, rng) / n as f64).sqrt(), TAU * rng.random::<f64>());
            let t12 = sample_standard_complex_gaussian::<f64, _>(rng) / (n as f64).sqrt();
            let t = ComplexMatrix::from_rows(&[vec![C::new(0.0, 0.0), t12], vec![C::new(0.0, 0.0), l2]]);
            Ok(decompose(&t)?.map(|(s, sys)| {
                let (a, b) = (s.nearest(C::new(0.0, 0.0)), s.nearest(l2));
                AngleSample { i: a, j: b, value: eigenvector_angle(&sys.x, a, b), omega: 0.0 }
            }))
        })?;
        r.reject("degenerate_spectrum", s.iter().filter(|x| x.is_none()).count());
        (s.into_iter().flatten().collect(), AngleMode::AtOrigin { n, finite_n: true }, Box::new(move |t| formulas::angle_origin_finite_n_cdf(n, t)))
    } else {
        let s = run_trials(seed, ranges, |_, rng| {
            let g: ComplexMatrix<f64> = sample_matrix(&cfg.ensemble, rng);
            Ok(decompose(&g)?.map(|(s, sys)| collect_angle_samples(s.eigenvalues(), &sys.x, cfg.omega_min, cfg.omega_max)))
        })?;
        r.reject("degenerate_spectrum", s.iter().filter(|x| x.is_none()).count());
        (s.into_iter().flatten().flatten().collect(), AngleMode::Separation, Box::new(|t: f64| -(-t.max(0.0)).exp_m1()))
    };
    r.value("samples", samples.len());
    let overall = angle_distribution_test(&samples, mode, cfg.ks_threshold);
    match &overall {
        Ok(rep) => {
            let label = if cfg.at_origin { 0.0 } else { (cfg.omega_min + cfg.omega_max) / 2.0 };
            table.push(vec![num(label), rep.n.to_string(), num(rep.distance), rep.pass.to_string()]);
            r.assert("angle_law", rep.pass, format!("{}: KS {:.4} over {} samples (< {})", rep.test_name, rep.distance, rep.n, rep.threshold));
        }
        Err(e) => r.assert("angle_law", false, e.to_string()),
    }
    if !cfg.at_origin && cfg.bands > 1 {
        let w = (cfg.omega_max - cfg.omega_min) / cfg.bands as f64;
        for b in 0..cfg.bands {
            let (lo, hi) = (cfg.omega_min + w * b as f64, cfg.omega_min + w * (b + 1) as f64);
            let band: Vec<AngleSample<f64>> = samples.iter().filter(|s| s.omega >= lo && s.omega < hi).cloned().collect();
            match angle_distribution_test(&band, AngleMode::Separation, cfg.ks_threshold) {
                Ok(rep) => table.push(vec![num((lo + hi) / 2.0), rep.n.to_string(), num(rep.distance), rep.pass.to_string()]),
                Err(_) => table.push(vec![num((lo + hi) / 2.0), band.len().to_string(), String::new(), "false".into()]),
            }
        }
    }
    let transformed = sorted(
        samples
            .iter()
            .map(|s| match mode {
                AngleMode::Separation => s.omega * s.omega * overlaps::angles::phi_inverse(s.value).norm_sqr(),
                AngleMode::AtOrigin { .. } => n as f64 * s.value.norm_sqr(),
            })
            .collect(),
    );
    let mut plot = PlotData::new("angle_cdf", "empirical CDF of the transformed angle against the reference CDF", &["t", "empirical_cdf", "reference_cdf"]);
    let stride = (transformed.len() / 200).max(1);
    for (i, &t) in transformed.iter().enumerate().step_by(stride) {
        plot.push(vec![t, (i + 1) as f64 / transformed.len() as f64, cdf(t)]);
    }
    r.tables.push(table);
    r.plots.push(plot);
    Ok(r)
}

fn extremes(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let n = cfg.n;
    let region = Region::bulk(n, cfg.kappa);
    let lower = 0.5 + cfg.kappa - cfg.epsilon;
    let upper = 1.5 + cfg.epsilon;
    let per_trial = run_trials(seed, ranges, |_, rng| {
        Ok(sample_diag(cfg, rng)?.map(|(eig, diag)| {
            let rep = extremes_scan(&eig, &diag, &region, Some(lower), Some(upper));
            let max_all = diag.iter().cloned().fold(0.0, f64::max);
            (rep, max_all)
        }))
    })?;
    let mut r = Report::default();
    r.reject("degenerate_spectrum", per_trial.iter().filter(|p| p.is_none()).count());
    let mut t = Table::new("extremes", &["trial", "count", "min", "max", "lower_violated", "upper_violated"]);
    let (mut lo_v, mut up_v) = (0, 0);
    let mut maxima = Vec::new();
    for (i, p) in per_trial.iter().enumerate() {
        if let Some((rep, max_all)) = p {
            t.push(vec![
                i.to_string(),
                rep.count.to_string(),
                rep.min.map(num).unwrap_or_default(),
                rep.max.map(num).unwrap_or_default(),
                rep.lower_violated.to_string(),
                rep.upper_violated.to_string(),
            ]);
            lo_v += usize::from(rep.lower_violated);
            up_v += usize::from(rep.upper_violated);
            maxima.push(max_all / (n as f64).powf(1.5));
        }
    }
    let nn = n as f64;
    r.assert("lower_bound", lo_v <= cfg.max_violations, format!("min O_ii < N^{lower:.3} = {:.2} in {lo_v} trials (≤ {} allowed)", nn.powf(lower), cfg.max_violations));
    r.assert("upper_bound", up_v <= cfg.max_violations, format!("max O_ii > N^{upper:.3} = {:.2} in {up_v} trials (≤ {} allowed)", nn.powf(upper), cfg.max_violations));
    let maxima = sorted(maxima);
    let mut plot = PlotData::new("frechet_maximum", "max O_ii / N^(3/2): empirical CDF against the Frechet heuristic", &["y", "empirical_cdf", "frechet_cdf"]);
    for (i, &y) in maxima.iter().enumerate() {
        plot.push(vec![y, (i + 1) as f64 / maxima.len() as f64, formulas::frechet_cdf(y)]);
    }
    r.value("frechet_ks_exploratory", ks_distance(&maxima, formulas::frechet_cdf));
    r.value("region_radius", 1.0 - nn.powf(cfg.kappa - 0.5));
    r.tables.push(t);
    r.plots.push(plot);
    Ok(r)
}

fn formula_value(cfg: &ExperimentConfig, x: f64) -> Result<f64, Error> {
    let n = cfg.n;
    let sqrt_n = (n as f64).sqrt();
    let origin = C::new(0.0, 0.0);
    Ok(match cfg.formula.as_str() {
        "exp_partial_sum" => {
            let upper = if cfg.l == "inf" { Upper::Infinite } else { Upper::Finite(cfg.l.parse().expect("validated")) };
            formulas::exp_partial_sum(cfg.k, upper, x)?
        }
        "mean_diag_exact" => formulas::mean_diag_exact(n, C::new(x, 0.0)),
        "mean_diag_asymptotic" => formulas::mean_diag_asymptotic(n, C::new(x, 0.0)),
        "mean_offdiag_exact_origin" => formulas::mean_offdiag_exact_origin(n, C::new(x / sqrt_n, 0.0)),
        "mean_offdiag_asymptotic" => formulas::mean_offdiag_asymptotic(n, origin, C::new(x / sqrt_n, 0.0)).re,
        "second_moment_abs_o12_sq" => formulas::second_moment_exact_origin(n, C::new(x / sqrt_n, 0.0))?.abs_o12_sq,
        "second_moment_o11_o22" => formulas::second_moment_exact_origin(n, C::new(x / sqrt_n, 0.0))?.o11_o22,
        "inv_gamma2_density" => formulas::inv_gamma2_density(x),
        "inv_gamma2_cdf" => formulas::inv_gamma2_cdf(x),
        "beta_inv_finite_n_density" => formulas::beta_inv_finite_n_density(n, x),
        "beta_inv_finite_n_cdf" => formulas::beta_inv_finite_n_cdf(n, x),
        "angle_limit_density" => formulas::angle_limit_density(x),
        "angle_limit_cdf" => formulas::angle_limit_cdf(x),
        "angle_origin_finite_n_cdf" => formulas::angle_origin_finite_n_cdf(n, x),
        "frechet_cdf" => formulas::frechet_cdf(x),
        other => return Err(Error::InvalidArgument(format!("unknown formula `{other}`"))),
    })
}

/// Inputs of a formula besides the grid variable, and the grid variable's name.
fn formula_inputs(cfg: &ExperimentConfig) -> (Vec<(&'static str, String)>, &'static str) {
    match cfg.formula.as_str() {
        "exp_partial_sum" => (vec![("k", cfg.k.to_string()), ("l", cfg.l.clone())], "x"),
        "mean_diag_exact" | "mean_diag_asymptotic" => (vec![("n", cfg.n.to_string())], "abs_z"),
        "mean_offdiag_exact_origin" | "mean_offdiag_asymptotic" | "second_moment_abs_o12_sq" | "second_moment_o11_o22" => {
            (vec![("n", cfg.n.to_string())], "omega")
        }
        "beta_inv_finite_n_density" | "beta_inv_finite_n_cdf" | "angle_origin_finite_n_cdf" => (vec![("n", cfg.n.to_string())], "t"),
        _ => (vec![], "t"),
    }
}

pub fn formulas_table(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let (inputs, var) = formula_inputs(cfg);
    let mut header: Vec<&str> = inputs.iter().map(|(k, _)| *k).collect();
    header.push(var);
    header.push("value");
    let mut t = Table::new("formulas", &header);
    let mut plot = PlotData::new(&cfg.formula, &format!("{} against {var}", cfg.formula), &[var, "value"]);
    for x in grid(cfg) {
        let v = formula_value(cfg, x).map_err(RunError::Numeric)?;
        let mut row: Vec<String> = inputs.iter().map(|(_, v)| v.clone()).collect();
        row.push(num(x));
        row.push(num(v));
        t.push(row);
        plot.push(vec![x, v]);
    }
    let mut r = Report::default();
    r.value("formula", &cfg.formula);
    r.tables.push(t);
    r.plots.push(plot);
    Ok(r)
}

pub fn verify() -> Report {
    let checks = run_oracle_suite();
    let mut r = Report::default();
    let mut t = Table::new("verify", &["name", "value", "reference", "error", "tolerance", "pass"]);
    let mut json = Vec::new();
    for c in &checks {
        t.push(vec![c.name.clone(), num(c.value), num(c.reference), num(c.error), num(c.tolerance), c.pass.to_string()]);
        r.assert(&c.name, c.pass, format!("error {:.3e} (tolerance {:.0e})", c.error, c.tolerance));
        json.push(serde_json::json!({
            "name": c.name, "value": c.value, "reference": c.reference,
            "error": c.error, "tolerance": c.tolerance, "pass": c.pass,
        }));
    }
    r.value("checks", json);
    r.tables.push(t);
    r
}

fn universality(cfg: &ExperimentConfig, seed: u64, ranges: &[WorkerRange]) -> Result<Report, RunError> {
    let n = cfg.n;
    let per_trial = run_trials(seed, ranges, |_, rng| {
        Ok(sample_diag(cfg, rng)?.map(|(eig, diag)| {
            eig.iter()
                .zip(diag)
                .filter(|(l, _)| l.norm() < cfg.bulk_radius)
                .map(|(l, o)| o / (n as f64 * (1.0 - l.norm_sqr())))
                .collect::<Vec<f64>>()
        }))
    })?;
    let mut r = Report::default();
    r.reject("degenerate_spectrum", per_trial.iter().filter(|p| p.is_none()).count());
    let sample = sorted(per_trial.into_iter().flatten().flatten().collect());
    if sample.is_empty() {
        r.assert("inverse_gamma2_ks", false, "no bulk eigenvalue");
        return Ok(r);
    }
    let ks = KsReport::new(
        format!("{}_vs_inverse_gamma2", cfg.ensemble.kind.name()),
        sample.len(),
        ks_distance(&sample, formulas::inv_gamma2_cdf),
        cfg.ks_threshold,
    );
    r.assert("inverse_gamma2_ks", ks.pass, format!("KS {:.4} over {} bulk eigenvalues (< {})", ks.distance, ks.n, ks.threshold));
    r.value("ks", ks.distance);
    r.value("bulk_eigenvalues", sample.len());
    r.value("mean_normalized", sample.iter().sum::<f64>() / sample.len() as f64);
    r.plots.push(histogram_plot(
        "universality_histogram",
        "O_ii/(N(1-|lambda_i|^2)) over bulk eigenvalues against the inverse-Gamma(2) density",
        &sample,
        5.0,
        cfg.bins,
        formulas::inv_gamma2_density,
    ));
    r.tables.push(ks_table(&[ks]));
    Ok(r)
}
