//! Aggregation and CSV I/O.
//!
//! Every float that reaches a table is rounded to 10 significant digits
//! first, so writing a table and reading it back gives identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{QstError, Result};

pub const AGGREGATE_HEADER: &str = "shots,median_infidelity,q16,q84,median_volume,method,ensemble";
pub const TRIAL_HEADER: &str =
    "trial,iteration,shots,infidelity,credible_volume,ess,resampled,rx,ry,rz,method,ensemble";

/// Rounds to the value printed by [`fmt_float`].
pub fn round_sig10(x: f64) -> f64 {
    fmt_float(x).parse().expect("formatted float parses")
}

/// Scientific notation with 10 significant digits; `NaN` stays `NaN`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.9e}")
}

/// Nearest-rank quantile: the element of rank `⌈q·n⌉` (1-based, at least 1)
/// of the sorted values.
pub fn nearest_rank(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(QstError::InvalidArgument("quantile of an empty set".into()));
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// One estimator state in one trial, the unit of the per-trial CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub iteration: usize,
    pub shots: u64,
    /// `NaN` when the true state is unknown.
    pub infidelity: f64,
    pub credible_volume: f64,
    pub ess: f64,
    pub resampled: bool,
    pub estimate: [f64; 3],
    pub method: String,
    pub ensemble: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub shots: u64,
    pub median_infidelity: f64,
    pub q16: f64,
    pub q84: f64,
    pub median_volume: f64,
    pub method: String,
    pub ensemble: String,
}

fn sorted_finite(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Per-shot medians and 16/84% quantiles, ordered by cumulative shots.
/// Grid points where no trial has a value report `NaN`.
pub fn summarize(rows: &[TrialRow]) -> Result<Vec<AggregateRow>> {
    if rows.is_empty() {
        return Err(QstError::InvalidArgument("nothing to summarize".into()));
    }
    let mut by_shots: BTreeMap<(u64, &str, &str), Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        by_shots
            .entry((r.shots, r.method.as_str(), r.ensemble.as_str()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(by_shots.len());
    for ((shots, method, ensemble), group) in by_shots {
        let infid = sorted_finite(group.iter().map(|r| r.infidelity));
        let vol = sorted_finite(group.iter().map(|r| r.credible_volume));
        let q = |v: &[f64], p| nearest_rank(v, p).map(round_sig10).unwrap_or(f64::NAN);
        out.push(AggregateRow {
            shots,
            median_infidelity: q(&infid, 0.5),
            q16: q(&infid, 0.16),
            q84: q(&infid, 0.84),
            median_volume: q(&vol, 0.5),
            method: method.to_string(),
            ensemble: ensemble.to_string(),
        });
    }
    Ok(out)
}

pub fn format_aggregate(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{AGGREGATE_HEADER}").unwrap();
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.shots,
            fmt_float(r.median_infidelity),
            fmt_float(r.q16),
            fmt_float(r.q84),
            fmt_float(r.median_volume),
            r.method,
            r.ensemble
        )
        .unwrap();
    }
    s
}

pub fn format_trials(rows: &[TrialRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{TRIAL_HEADER}").unwrap();
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.iteration,
            r.shots,
            fmt_float(r.infidelity),
            fmt_float(r.credible_volume),
            fmt_float(r.ess),
            u8::from(r.resampled),
            fmt_float(r.estimate[0]),
            fmt_float(r.estimate[1]),
            fmt_float(r.estimate[2]),
            r.method,
            r.ensemble
        )
        .unwrap();
    }
    s
}

/// Splits a CSV body into data lines, checking the header.
fn data_lines<'a>(
    text: &'a str,
    path: &'a Path,
    header: &str,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => {
            return Err(QstError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header {header:?}"),
            })
        }
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, path: &Path, line: usize) -> Result<T> {
    fields
        .get(i)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| QstError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad or missing column {}", i + 1),
        })
}

pub fn parse_aggregate(text: &str, path: &Path) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    for (line, f) in data_lines(text, path, AGGREGATE_HEADER)? {
        let col = |i| field::<f64>(&f, i, path, line);
        rows.push(AggregateRow {
            shots: field(&f, 0, path, line)?,
            median_infidelity: col(1)?,
            q16: col(2)?,
            q84: col(3)?,
            median_volume: col(4)?,
            method: field(&f, 5, path, line)?,
            ensemble: field(&f, 6, path, line)?,
        });
    }
    Ok(rows)
}

pub fn parse_trials(text: &str, path: &Path) -> Result<Vec<TrialRow>> {
    let mut rows = Vec::new();
    for (line, f) in data_lines(text, path, TRIAL_HEADER)? {
        let col = |i| field::<f64>(&f, i, path, line);
        rows.push(TrialRow {
            trial: field(&f, 0, path, line)?,
            iteration: field(&f, 1, path, line)?,
            shots: field(&f, 2, path, line)?,
            infidelity: col(3)?,
            credible_volume: col(4)?,
            ess: col(5)?,
            resampled: field::<u8>(&f, 6, path, line)? != 0,
            estimate: [col(7)?, col(8)?, col(9)?],
            method: field(&f, 10, path, line)?,
            ensemble: field(&f, 11, path, line)?,
        });
    }
    Ok(rows)
}

pub fn read_aggregate(path: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    let path = path.as_ref();
    parse_aggregate(&std::fs::read_to_string(path)?, path)
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRow>> {
    let path = path.as_ref();
    parse_trials(&std::fs::read_to_string(path)?, path)
}

/// Aggregate tables joined on cumulative shots.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `method:ensemble` of each input table.
    pub labels: Vec<String>,
    pub shots: Vec<u64>,
    /// `columns[j][i]` is row `i` of table `j`.
    pub columns: Vec<Vec<AggregateRow>>,
}

/// Joins tables that share one shot grid. Each table must describe a single
/// method/ensemble pair.
pub fn compare(tables: &[Vec<AggregateRow>]) -> Result<Comparison> {
    let first = tables
        .first()
        .ok_or_else(|| QstError::InvalidArgument("nothing to compare".into()))?;
    let grid: Vec<u64> = first.iter().map(|r| r.shots).collect();
    if grid.is_empty() {
        return Err(QstError::InvalidArgument("empty table".into()));
    }
    let mut labels = Vec::with_capacity(tables.len());
    for (j, t) in tables.iter().enumerate() {
        let g: Vec<u64> = t.iter().map(|r| r.shots).collect();
        if g != grid {
            return Err(QstError::MisalignedGrid(format!(
                "table {} has {} grid points from {:?} to {:?}, table 1 has {} from {} to {}",
                j + 1,
                g.len(),
                g.first(),
                g.last(),
                grid.len(),
                grid[0],
                grid[grid.len() - 1]
            )));
        }
        let label = format!("{}:{}", t[0].method, t[0].ensemble);
        if t.iter()
            .any(|r| format!("{}:{}", r.method, r.ensemble) != label)
        {
            return Err(QstError::InvalidArgument(format!(
                "table {} mixes several methods or ensembles",
                j + 1
            )));
        }
        labels.push(label);
    }
    Ok(Comparison {
        labels,
        shots: grid,
        columns: tables.to_vec(),
    })
}

pub fn format_comparison(c: &Comparison) -> String {
    let mut s = String::from("shots");
    for l in &c.labels {
        write!(s, ",{l}:median,{l}:q16,{l}:q84,{l}:volume").unwrap();
    }
    s.push('\n');
    for (i, shots) in c.shots.iter().enumerate() {
        write!(s, "{shots}").unwrap();
        for col in &c.columns {
            let r = &col[i];
            write!(
                s,
                ",{},{},{},{}",
                fmt_float(r.median_infidelity),
                fmt_float(r.q16),
                fmt_float(r.q84),
                fmt_float(r.median_volume)
            )
            .unwrap();
        }
        s.push('\n');
    }
    s
}

/// Companion gnuplot script for an aggregate CSV: median with the 16–84%
/// band on log–log axes.
pub fn gnuplot_script(csv: &Path, title: &str) -> String {
    let name = csv
        .file_name()
        .map(|n| n.to_string_lossy())
        .unwrap_or_default();
    format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set xlabel 'cumulative shots'\n\
         set ylabel 'infidelity'\n\
         set key top right\n\
         plot '{name}' every ::1 using 1:2:3:4 with yerrorlines title '{title}'\n"
    )
}
