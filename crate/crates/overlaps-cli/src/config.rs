//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys and repeated
//! keys are rejected. Command-line flags are applied after the file and win.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex;
use overlaps::dynamics::StepMode;
use overlaps::estimators::DEFAULT_WINDOW_SCALE;
use overlaps::{EnsembleKind, EnsembleSpec};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{key}`{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownKey { key: String, line: Option<usize> },
    #[error("key `{key}` given twice (line {line})")]
    Duplicate { key: String, line: usize },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DiagDistribution,
    OffdiagMean,
    SecondMoments,
    Pseudospectrum,
    Dynamics,
    Angles,
    Extremes,
    Formulas,
    Verify,
    Universality,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Self::DiagDistribution,
        Self::OffdiagMean,
        Self::SecondMoments,
        Self::Pseudospectrum,
        Self::Dynamics,
        Self::Angles,
        Self::Extremes,
        Self::Formulas,
        Self::Verify,
        Self::Universality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DiagDistribution => "diag-distribution",
            Self::OffdiagMean => "offdiag-mean",
            Self::SecondMoments => "second-moments",
            Self::Pseudospectrum => "pseudospectrum",
            Self::Dynamics => "dynamics",
            Self::Angles => "angles",
            Self::Extremes => "extremes",
            Self::Formulas => "formulas",
            Self::Verify => "verify",
            Self::Universality => "universality",
        }
    }

    /// Experiments that draw random matrices and therefore need `trials`.
    pub fn is_randomized(self) -> bool {
        !matches!(self, Self::SecondMoments | Self::Formulas | Self::Verify)
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (expected one of {})", Self::ALL.map(|e| e.name()).join(", ")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", "one of the experiment names"),
    ("ensemble", "complex_gaussian | complex_bernoulli | complex_uniform_disk | real_gaussian"),
    ("n", "matrix size N"),
    ("trials", "number of independent trials (matrices, paths or samples)"),
    ("seed", "root seed; drawn from entropy and recorded when absent"),
    ("workers", "worker threads (default: available parallelism)"),
    ("out", "output directory"),
    ("variance", "entry variance E|G_ij|^2 (default 1/N)"),
    ("center", "complex point `re,im` for windows and balls"),
    ("window_scale", "window radius in units of N^(-1/2)"),
    ("radius", "ball radius (pseudospectrum, dynamics MSD)"),
    ("omega_min", "lower microscopic separation"),
    ("omega_max", "upper microscopic separation"),
    ("bands", "number of separation bands"),
    ("dt", "time step"),
    ("steps", "number of time steps"),
    ("step_mode", "euler | exact"),
    ("real", "real flow (true/false)"),
    ("eps", "pseudospectrum level epsilon"),
    ("bulk_radius", "bulk cut |lambda| < bulk_radius"),
    ("kappa", "bulk exponent for extremes"),
    ("epsilon", "exponent slack for extremes"),
    ("max_violations", "allowed trials with a violated bound"),
    ("at_origin", "angles at the origin instead of full-matrix pairs"),
    ("ks_threshold", "KS distance threshold"),
    ("rel_tol", "relative tolerance for mean comparisons"),
    ("formula", "function tabulated by the formulas experiment"),
    ("x_min", "grid start"),
    ("x_max", "grid end"),
    ("points", "grid points"),
    ("k", "lower index for partial exponential sums"),
    ("l", "upper index for partial exponential sums (`inf` allowed)"),
    ("bins", "histogram bins"),
];

/// Parsed but unvalidated `key -> (value, line)` pairs.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Option<usize>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, message: format!("expected `key = value`, got `{content}`") })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: line_no, message: "empty key".into() });
            }
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(ConfigError::UnknownKey { key: k.into(), line: Some(line_no) });
            }
            if raw.entries.insert(k.into(), (v.into(), Some(line_no))).is_some() {
                return Err(ConfigError::Duplicate { key: k.into(), line: line_no });
            }
        }
        Ok(raw)
    }

    /// Sets (or overrides) a key from the command line.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(ConfigError::UnknownKey { key: key.into(), line: None });
        }
        self.entries.insert(key.into(), (value.into(), None));
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| ConfigError::Invalid {
                key: key.into(),
                message: match line {
                    Some(l) => format!("line {l}: cannot parse `{v}`: {e}"),
                    None => format!("cannot parse `{v}`: {e}"),
                },
            }),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn into_config(self) -> Result<ExperimentConfig, ConfigError> {
        let experiment: Experiment = self.get("experiment")?.ok_or_else(|| ConfigError::Missing("experiment".into()))?;
        let kind: EnsembleKind = match self.entries.get("ensemble") {
            None => EnsembleKind::ComplexGaussian,
            Some((v, _)) => v.parse().map_err(|e: overlaps::Error| ConfigError::Invalid { key: "ensemble".into(), message: e.to_string() })?,
        };
        let n: usize = self.get_or("n", default_n(experiment))?;
        let trials: usize = self.get_or("trials", default_trials(experiment))?;
        let center = match self.entries.get("center") {
            None => Complex::new(0.0, 0.0),
            Some((v, _)) => parse_complex(v).map_err(|m| ConfigError::Invalid { key: "center".into(), message: m })?,
        };
        let step_mode = match self.get_or("step_mode", "euler".to_string())?.as_str() {
            "euler" => StepMode::EulerMaruyama,
            "exact" => StepMode::ExactOu,
            other => return Err(ConfigError::Invalid { key: "step_mode".into(), message: format!("`{other}` is not euler or exact") }),
        };
        let variance: Option<f64> = self.get("variance")?;
        let mut ensemble = EnsembleSpec::new(kind, n);
        if let Some(v) = variance {
            ensemble = ensemble.with_variance(v);
        }
        let cfg = ExperimentConfig {
            experiment,
            ensemble,
            n,
            trials,
            seed: self.get("seed")?,
            workers: self.get_or("workers", std::thread::available_parallelism().map_or(1, |p| p.get()))?,
            out: PathBuf::from(self.get_or("out", format!("out/{}", experiment.name()))?),
            center,
            window_scale: self.get_or("window_scale", DEFAULT_WINDOW_SCALE)?,
            radius: self.get_or("radius", 0.5)?,
            omega_min: self.get_or("omega_min", 1.0)?,
            omega_max: self.get_or("omega_max", 2.0)?,
            bands: self.get_or("bands", 4)?,
            dt: self.get_or("dt", 1e-5)?,
            steps: self.get_or("steps", 2000)?,
            step_mode,
            real: self.get_or("real", false)?,
            eps: self.get_or("eps", 1e-6)?,
            bulk_radius: self.get_or("bulk_radius", 0.8)?,
            kappa: self.get_or("kappa", 0.2)?,
            epsilon: self.get_or("epsilon", 0.2)?,
            max_violations: self.get_or("max_violations", 1)?,
            at_origin: self.get_or("at_origin", false)?,
            ks_threshold: self.get_or("ks_threshold", 0.05)?,
            rel_tol: self.get_or("rel_tol", 0.1)?,
            formula: self.get_or("formula", "mean_diag_exact".to_string())?,
            x_min: self.get_or("x_min", 0.0)?,
            x_max: self.get_or("x_max", 1.0)?,
            points: self.get_or("points", 21)?,
            k: self.get_or("k", 0)?,
            l: self.get_or("l", "inf".to_string())?,
            bins: self.get_or("bins", 60)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_n(e: Experiment) -> usize {
    match e {
        Experiment::Dynamics => 20,
        Experiment::Angles => 100,
        Experiment::Pseudospectrum | Experiment::Extremes => 500,
        Experiment::SecondMoments => 10_000,
        _ => 200,
    }
}

fn default_trials(e: Experiment) -> usize {
    match e {
        Experiment::Dynamics => 20,
        Experiment::Extremes => 100,
        _ => 50,
    }
}

fn parse_complex(s: &str) -> Result<Complex<f64>, String> {
    let (re, im) = s.split_once(',').unwrap_or((s, "0"));
    let re: f64 = re.trim().parse().map_err(|e| format!("bad real part `{re}`: {e}"))?;
    let im: f64 = im.trim().parse().map_err(|e| format!("bad imaginary part `{im}`: {e}"))?;
    Ok(Complex::new(re, im))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(serialize_with = "ser_ensemble")]
    pub ensemble: EnsembleSpec,
    pub n: usize,
    pub trials: usize,
    pub seed: Option<u64>,
    pub workers: usize,
    pub out: PathBuf,
    #[serde(serialize_with = "ser_complex")]
    pub center: Complex<f64>,
    pub window_scale: f64,
    pub radius: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub bands: usize,
    pub dt: f64,
    pub steps: usize,
    #[serde(serialize_with = "ser_step_mode")]
    pub step_mode: StepMode,
    pub real: bool,
    pub eps: f64,
    pub bulk_radius: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub max_violations: usize,
    pub at_origin: bool,
    pub ks_threshold: f64,
    pub rel_tol: f64,
    pub formula: String,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub k: u64,
    pub l: String,
    pub bins: usize,
}

fn ser_ensemble<S: serde::Serializer>(e: &EnsembleSpec, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("ensemble", 3)?;
    st.serialize_field("kind", e.kind.name())?;
    st.serialize_field("n", &e.n)?;
    st.serialize_field("entry_variance", &e.entry_variance)?;
    st.end()
}

fn ser_complex<S: serde::Serializer>(z: &Complex<f64>, s: S) -> Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

fn ser_step_mode<S: serde::Serializer>(m: &StepMode, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match m {
        StepMode::EulerMaruyama => "euler",
        StepMode::ExactOu => "exact",
    })
}

impl ExperimentConfig {
    fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { key: key.into(), message: message.into() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiment.is_randomized() && self.trials == 0 {
            return Err(Self::invalid("trials", "must be at least 1"));
        }
        if self.n < 2 && !matches!(self.experiment, Experiment::Formulas | Experiment::Verify) {
            return Err(Self::invalid("n", "must be at least 2"));
        }
        if self.workers == 0 {
            return Err(Self::invalid("workers", "must be at least 1"));
        }
        if !(self.ensemble.entry_variance > 0.0) {
            return Err(Self::invalid("variance", "must be positive"));
        }
        for (key, v) in [("window_scale", self.window_scale), ("radius", self.radius), ("dt", self.dt), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Self::invalid(key, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.omega_min >= 0.0 && self.omega_max > self.omega_min) {
            return Err(Self::invalid("omega_max", "need 0 <= omega_min < omega_max"));
        }
        if self.bands == 0 || self.bins == 0 || self.points == 0 {
            return Err(Self::invalid("bands", "bands, bins and points must be at least 1"));
        }
        if self.experiment == Experiment::Dynamics && self.steps == 0 {
            return Err(Self::invalid("steps", "must be at least 1"));
        }
        if self.experiment == Experiment::Dynamics && self.real != self.ensemble.kind.is_real() {
            return Err(Self::invalid("real", "the real flow needs ensemble = real_gaussian and vice versa"));
        }
        if !(0.0..1.0).contains(&self.bulk_radius) {
            return Err(Self::invalid("bulk_radius", "must lie in [0, 1)"));
        }
        if !(self.x_max >= self.x_min) {
            return Err(Self::invalid("x_max", "must be >= x_min"));
        }
        if self.l != "inf" && self.l.parse::<u64>().is_err() {
            return Err(Self::invalid("l", "must be a nonnegative integer or `inf`"));
        }
        if self.experiment == Experiment::Formulas && !crate::experiments::FORMULAS.contains(&self.formula.as_str()) {
            return Err(Self::invalid("formula", format!("unknown formula, expected one of {}", crate::experiments::FORMULAS.join(", "))));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = RawConfig::parse("experiment = universality\nn = 30\ntrials = 4\nseed = 9\n").unwrap().into_config().unwrap();
        assert_eq!(cfg.n, 30);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.ensemble.kind, EnsembleKind::ComplexGaussian);
        assert_eq!(cfg.window_scale, DEFAULT_WINDOW_SCALE);
        assert!((cfg.ensemble.entry_variance - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RawConfig::parse("experiment = verify\nfoo = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { key: "foo".into(), line: Some(2) });
        assert!(err.to_string().contains("foo"));
    }

    #[test]
    fn flags_override_file() {
        let mut raw = RawConfig::parse("experiment = dynamics\nseed = 3\n").unwrap();
        raw.set("seed", "7").unwrap();
        assert_eq!(raw.into_config().unwrap().seed, Some(7));
    }

    #[test]
    fn zero_trials_rejected() {
        let err = RawConfig::parse("experiment = universality\ntrials = 0").unwrap().into_config().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "trials"));
    }

    #[test]
    fn bad_values_have_diagnostics() {
        assert!(matches!(RawConfig::parse("experiment verify"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RawConfig::parse("n = 1\nn = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
        let err = RawConfig::parse("experiment = angles\nn = ten").unwrap().into_config().unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(matches!(RawConfig::parse("n = 3").unwrap().into_config(), Err(ConfigError::Missing(_))));
        let err = RawConfig::parse("experiment = dynamics\nreal = true").unwrap().into_config().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "real"));
    }

    #[test]
    fn complex_values() {
        assert_eq!(parse_complex("0.5, -0.25").unwrap(), Complex::new(0.5, -0.25));
        assert_eq!(parse_complex("0.3").unwrap(), Complex::new(0.3, 0.0));
        assert!(parse_complex("x").is_err());
    }
}
