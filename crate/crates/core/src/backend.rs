//! Sources of measurement counts.
//!
//! A backend answers "measure this axis `shots` times" with the number of
//! `+` outcomes. Simulated backends draw binomial counts from the Born rule
//! (optionally through a depolarizing channel); the replay backend serves
//! recorded counts in order, e.g. from a hardware run.
//!
//! Record files are UTF-8, one record per line: `nx ny nz shots n_plus`,
//! whitespace separated. Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::bloch::{plus_probability, unit_axis, BlochVector};
use crate::error::{QstError, Result};

/// Axis tolerance used when matching replayed records and validating loaded axes.
pub const AXIS_MATCH_TOL: f64 = 1e-6;

/// Default depolarizing strength.
pub const DEFAULT_NOISE: f64 = 0.02;

const RECORD_HEADER: &str = "# nx ny nz shots n_plus";

/// Outcome tally of `shots` measurements along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeCounts {
    axis: Vector3<f64>,
    shots: u64,
    n_plus: u64,
}

impl OutcomeCounts {
    pub fn new(axis: Vector3<f64>, shots: u64, n_plus: u64) -> Result<Self> {
        if shots == 0 {
            return Err(QstError::InvalidArgument("shots must be at least 1".into()));
        }
        if n_plus > shots {
            return Err(QstError::InvalidArgument(format!(
                "n_plus {n_plus} exceeds shots {shots}"
            )));
        }
        if ((axis.norm() - 1.0).abs()) > AXIS_MATCH_TOL {
            return Err(QstError::InvalidArgument(format!(
                "axis norm {} is not 1",
                axis.norm()
            )));
        }
        Ok(OutcomeCounts {
            axis,
            shots,
            n_plus,
        })
    }

    pub fn axis(&self) -> &Vector3<f64> {
        &self.axis
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn n_plus(&self) -> u64 {
        self.n_plus
    }

    pub fn n_minus(&self) -> u64 {
        self.shots - self.n_plus
    }

    /// Relative frequency of the `+` outcome.
    pub fn frequency(&self) -> f64 {
        self.n_plus as f64 / self.shots as f64
    }

    /// Splits the tally into two consecutive batches with `first_shots`
    /// shots and `first_plus` plus-outcomes in the first.
    pub fn split(&self, first_shots: u64, first_plus: u64) -> Result<(Self, Self)> {
        if first_shots == 0 || first_shots >= self.shots {
            return Err(QstError::InvalidArgument(
                "split must leave both batches nonempty".into(),
            ));
        }
        let a = OutcomeCounts::new(self.axis, first_shots, first_plus)?;
        let b = OutcomeCounts::new(
            self.axis,
            self.shots - first_shots,
            self.n_plus.checked_sub(first_plus).ok_or_else(|| {
                QstError::InvalidArgument("first batch has more + outcomes than total".into())
            })?,
        )?;
        Ok((a, b))
    }
}

/// Anything that can answer a measurement request.
pub trait MeasurementBackend: Send {
    fn measure(&mut self, axis: &Vector3<f64>, shots: u64) -> Result<OutcomeCounts>;

    /// Every count returned so far, in order.
    fn log(&self) -> &[OutcomeCounts];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Ideal,
    /// `r → (1 − λ) r` before the Born rule.
    Depolarizing(f64),
}

/// Binomial sampler around a known true state.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    state: BlochVector,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    log: Vec<OutcomeCounts>,
}

impl SimulatedBackend {
    pub fn new(state: BlochVector, noise: NoiseModel, rng: ChaCha8Rng) -> Result<Self> {
        if let NoiseModel::Depolarizing(lambda) = noise {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(QstError::InvalidArgument(format!(
                    "depolarizing strength {lambda} outside [0, 1]"
                )));
            }
        }
        Ok(SimulatedBackend {
            state,
            noise,
            rng,
            log: Vec::new(),
        })
    }

    pub fn ideal(state: BlochVector, seed: u64) -> Self {
        Self::new(state, NoiseModel::Ideal, ChaCha8Rng::seed_from_u64(seed))
            .expect("ideal backend is always valid")
    }

    pub fn true_state(&self) -> &BlochVector {
        &self.state
    }

    /// State actually seen by the Born rule after the noise channel.
    pub fn effective_state(&self) -> BlochVector {
        match self.noise {
            NoiseModel::Ideal => self.state,
            NoiseModel::Depolarizing(lambda) => {
                BlochVector::new_unchecked(self.state.vector() * (1.0 - lambda))
            }
        }
    }
}

impl MeasurementBackend for SimulatedBackend {
    fn measure(&mut self, axis: &Vector3<f64>, shots: u64) -> Result<OutcomeCounts> {
        if shots == 0 {
            return Err(QstError::InvalidArgument("shots must be at least 1".into()));
        }
        let n = unit_axis(*axis)?;
        let p = plus_probability(&self.effective_state(), &n);
        let binomial = Binomial::new(shots, p)
            .map_err(|e| QstError::InvalidArgument(format!("binomial({shots}, {p}): {e}")))?;
        let n_plus = binomial.sample(&mut self.rng);
        let counts = OutcomeCounts::new(n, shots, n_plus)?;
        self.log.push(counts);
        Ok(counts)
    }

    fn log(&self) -> &[OutcomeCounts] {
        &self.log
    }
}

/// Serves stored counts in file order.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    records: Vec<OutcomeCounts>,
    cursor: usize,
    log: Vec<OutcomeCounts>,
}

impl ReplayBackend {
    pub fn new(records: Vec<OutcomeCounts>) -> Self {
        ReplayBackend {
            records,
            cursor: 0,
            log: Vec::new(),
        }
    }

    pub fn records(&self) -> &[OutcomeCounts] {
        &self.records
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.cursor
    }
}

impl MeasurementBackend for ReplayBackend {
    fn measure(&mut self, axis: &Vector3<f64>, shots: u64) -> Result<OutcomeCounts> {
        if shots == 0 {
            return Err(QstError::InvalidArgument("shots must be at least 1".into()));
        }
        let requested = unit_axis(*axis)?;
        let Some(record) = self.records.get(self.cursor).copied() else {
            return Err(QstError::ReplayMiss(format!(
                "record stream exhausted after {} records",
                self.cursor
            )));
        };
        let gap = (record.axis - requested).amax();
        if gap > AXIS_MATCH_TOL {
            return Err(QstError::ReplayMiss(format!(
                "record {} has axis ({}, {}, {}), requested ({}, {}, {})",
                self.cursor + 1,
                record.axis.x,
                record.axis.y,
                record.axis.z,
                requested.x,
                requested.y,
                requested.z
            )));
        }
        if record.shots != shots {
            return Err(QstError::ReplayMiss(format!(
                "record {} has {} shots, requested {}",
                self.cursor + 1,
                record.shots,
                shots
            )));
        }
        self.cursor += 1;
        self.log.push(record);
        Ok(record)
    }

    fn log(&self) -> &[OutcomeCounts] {
        &self.log
    }
}

/// Renders records in the line-delimited counts format.
pub fn format_records(records: &[OutcomeCounts]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{} {} {} {} {}",
            r.axis.x, r.axis.y, r.axis.z, r.shots, r.n_plus
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_records(text: &str, path: &Path) -> Result<Vec<OutcomeCounts>> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| QstError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let mut axis = [0.0; 3];
        for (slot, field) in axis.iter_mut().zip(&fields[..3]) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| err(format!("bad axis component {field:?}: {e}")))?;
        }
        let shots = fields[3]
            .parse::<u64>()
            .map_err(|e| err(format!("bad shots {:?}: {e}", fields[3])))?;
        let n_plus = fields[4]
            .parse::<u64>()
            .map_err(|e| err(format!("bad n_plus {:?}: {e}", fields[4])))?;
        let counts = OutcomeCounts::new(Vector3::from(axis), shots, n_plus)
            .map_err(|e| err(e.to_string()))?;
        records.push(counts);
    }
    Ok(records)
}

pub fn save_record(records: &[OutcomeCounts], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_records(records))?;
    Ok(())
}

pub fn load_record(path: impl AsRef<Path>) -> Result<ReplayBackend> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    Ok(ReplayBackend::new(parse_records(&text, path)?))
}
