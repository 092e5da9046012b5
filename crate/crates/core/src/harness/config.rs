//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adaptive::{RunConfig, Schedule};
use crate::backend::DEFAULT_NOISE;
use crate::bloch::BlochVector;
use crate::error::{QstError, Result};
use crate::resample::ResampleParams;
use crate::sgqt::SgqtConfig;

/// Every key understood by [`ExperimentSpec::from_pairs`].
pub const KEYS: &[&str] = &[
    "method",
    "ensemble",
    "trials",
    "seed",
    "particles",
    "shots_per_axis",
    "iterations",
    "resample_a",
    "ess_threshold",
    "schedule",
    "epsilon",
    "credible_s",
    "backend",
    "noise",
    "record",
    "out",
    "sgqt_a0",
    "sgqt_big_a",
    "sgqt_alpha",
    "sgqt_c0",
    "sgqt_gamma",
    "sgqt_shots",
    "sgqt_iterations",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Adaptive,
    Static,
    Sgqt,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Adaptive => "adaptive",
            Method::Static => "static",
            Method::Sgqt => "sgqt",
        })
    }
}

impl FromStr for Method {
    type Err = QstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Method::Adaptive),
            "static" => Ok(Method::Static),
            "sgqt" => Ok(Method::Sgqt),
            other => Err(QstError::InvalidArgument(format!(
                "unknown method {other:?}"
            ))),
        }
    }
}

/// Where the true states come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ensemble {
    Pure,
    Mixed,
    Fixed(BlochVector),
}

impl Ensemble {
    /// Short label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            Ensemble::Pure => "pure",
            Ensemble::Mixed => "mixed",
            Ensemble::Fixed(_) => "fixed",
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ensemble::Fixed(r) => write!(f, "fixed:{},{},{}", r.x(), r.y(), r.z()),
            other => f.write_str(other.label()),
        }
    }
}

/// `pure`, `mixed` or `fixed:x,y,z`.
impl FromStr for Ensemble {
    type Err = QstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure" => return Ok(Ensemble::Pure),
            "mixed" => return Ok(Ensemble::Mixed),
            _ => {}
        }
        let bad = || QstError::InvalidArgument(format!("unknown ensemble {s:?}"));
        let coords = s.strip_prefix("fixed:").ok_or_else(bad)?;
        let v: Vec<f64> = coords
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(bad());
        }
        Ok(Ensemble::Fixed(BlochVector::new(v[0], v[1], v[2])?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Ideal,
    Depolarizing(f64),
    Replay(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub method: Method,
    pub ensemble: Ensemble,
    pub trials: usize,
    /// Estimator settings; `run.seed` is the master seed of the experiment.
    pub run: RunConfig,
    /// Used when `method` is [`Method::Sgqt`]; its seed is overwritten per trial.
    pub sgqt: SgqtConfig,
    pub backend: BackendSpec,
    /// Aggregate CSV destination.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            method: Method::Adaptive,
            ensemble: Ensemble::Pure,
            trials: 100,
            run: RunConfig::default(),
            sgqt: SgqtConfig::default(),
            backend: BackendSpec::Ideal,
            out: None,
        }
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// later duplicates win.
pub fn parse_pairs(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| QstError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(QstError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("unknown key {key:?}"),
            });
        }
        pairs.insert(key.to_string(), value.trim().to_string());
    }
    Ok(pairs)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    parse_pairs(&std::fs::read_to_string(path)?, path)
}

fn parsed<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| QstError::InvalidArgument(format!("bad value {value:?} for {key}")))
}

impl ExperimentSpec {
    /// Builds a spec from defaults overridden by `pairs`.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        let mut backend_kind = "ideal".to_string();
        let mut noise = DEFAULT_NOISE;
        let mut record = None;
        for (key, value) in pairs {
            let v = value.as_str();
            let k = key.as_str();
            match k {
                "method" => spec.method = v.parse()?,
                "ensemble" => spec.ensemble = v.parse()?,
                "trials" => spec.trials = parsed(k, v)?,
                "seed" => spec.run.seed = parsed(k, v)?,
                "particles" => spec.run.particles = parsed(k, v)?,
                "shots_per_axis" => spec.run.shots_per_axis = parsed(k, v)?,
                "iterations" => spec.run.iterations = parsed(k, v)?,
                "resample_a" => spec.run.resample = ResampleParams::new(parsed(k, v)?)?,
                "ess_threshold" => spec.run.ess_threshold = parsed(k, v)?,
                "schedule" => spec.run.schedule = v.parse::<Schedule>()?,
                "epsilon" => spec.run.epsilon = parsed(k, v)?,
                "credible_s" => spec.run.credible_s = parsed(k, v)?,
                "backend" => backend_kind = v.to_string(),
                "noise" => noise = parsed(k, v)?,
                "record" => record = Some(PathBuf::from(v)),
                "out" => spec.out = Some(PathBuf::from(v)),
                "sgqt_a0" => spec.sgqt.gains.a0 = parsed(k, v)?,
                "sgqt_big_a" => spec.sgqt.gains.big_a = parsed(k, v)?,
                "sgqt_alpha" => spec.sgqt.gains.alpha = parsed(k, v)?,
                "sgqt_c0" => spec.sgqt.gains.c0 = parsed(k, v)?,
                "sgqt_gamma" => spec.sgqt.gains.gamma = parsed(k, v)?,
                "sgqt_shots" => spec.sgqt.shots_per_iteration = parsed(k, v)?,
                "sgqt_iterations" => spec.sgqt.iterations = parsed(k, v)?,
                other => return Err(QstError::InvalidArgument(format!("unknown key {other:?}"))),
            }
        }
        spec.backend = match backend_kind.as_str() {
            "ideal" => BackendSpec::Ideal,
            "depolarizing" => BackendSpec::Depolarizing(noise),
            "replay" => BackendSpec::Replay(record.ok_or_else(|| {
                QstError::InvalidArgument("replay backend needs a record path".into())
            })?),
            other => {
                return Err(QstError::InvalidArgument(format!(
                    "unknown backend {other:?}"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(QstError::InvalidArgument("need at least 1 trial".into()));
        }
        if let BackendSpec::Depolarizing(l) = self.backend {
            if !(0.0..=1.0).contains(&l) {
                return Err(QstError::InvalidArgument(format!(
                    "noise {l} outside [0, 1]"
                )));
            }
        }
        match self.method {
            Method::Sgqt => {
                if self.sgqt.shots_per_iteration < 2 || self.sgqt.iterations < 1 {
                    return Err(QstError::InvalidArgument(
                        "SGQT needs at least 2 shots per iteration and 1 iteration".into(),
                    ));
                }
                self.sgqt.gains.validate()
            }
            _ => self.run.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> Result<BTreeMap<String, String>> {
        parse_pairs(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(
            ExperimentSpec::from_pairs(&pairs("").unwrap()).unwrap(),
            ExperimentSpec::default()
        );
    }

    #[test]
    fn comments_and_overrides() {
        let p = pairs("# header\nmethod = static  # trailing\n\ntrials=7\ntrials = 9\n").unwrap();
        let spec = ExperimentSpec::from_pairs(&p).unwrap();
        assert_eq!(spec.method, Method::Static);
        assert_eq!(spec.trials, 9);
    }

    #[test]
    fn every_key_is_accepted() {
        let text = "method = sgqt\nensemble = fixed:0,0,1\ntrials = 3\nseed = 4\nparticles = 50\n\
            shots_per_axis = 20\niterations = 5\nresample_a = 0.2\ness_threshold = 0.3\n\
            schedule = diagonal-only\nepsilon = 0.001\ncredible_s = 7.8\nbackend = depolarizing\n\
            noise = 0.1\nrecord = r.txt\nout = o.csv\nsgqt_a0 = 2\nsgqt_big_a = 1\n\
            sgqt_alpha = 0.7\nsgqt_c0 = 0.3\nsgqt_gamma = 0.2\nsgqt_shots = 10\nsgqt_iterations = 11\n";
        let p = pairs(text).unwrap();
        assert_eq!(p.len(), KEYS.len());
        let spec = ExperimentSpec::from_pairs(&p).unwrap();
        assert_eq!(
            spec.ensemble,
            Ensemble::Fixed(BlochVector::new(0.0, 0.0, 1.0).unwrap())
        );
        assert_eq!(spec.run.schedule, Schedule::DiagonalOnly);
        assert_eq!(spec.backend, BackendSpec::Depolarizing(0.1));
        assert_eq!(spec.sgqt.iterations, 11);
        assert_eq!(spec.run.resample.a(), 0.2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            pairs("nonsense\n"),
            Err(QstError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            pairs("x\n\ncolour = red\n"),
            Err(QstError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            pairs("trials=1\ncolour = red\n"),
            Err(QstError::Parse { line: 2, .. })
        ));
        for bad in [
            "trials = 0",
            "method = bogus",
            "backend = replay",
            "noise = 2\nbackend = depolarizing",
            "ensemble = fixed:1,1,1",
            "particles = many",
        ] {
            assert!(
                ExperimentSpec::from_pairs(&pairs(bad).unwrap()).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn ensemble_round_trip() {
        for e in [
            Ensemble::Pure,
            Ensemble::Mixed,
            Ensemble::Fixed(BlochVector::new(0.1, -0.2, 0.3).unwrap()),
        ] {
            assert_eq!(e.to_string().parse::<Ensemble>().unwrap(), e);
        }
    }
}
