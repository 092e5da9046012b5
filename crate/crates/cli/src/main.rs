use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use adaptive_qst::backend::save_record;
use adaptive_qst::harness::config::{load_pairs, ExperimentSpec};
use adaptive_qst::harness::table::{
    format_aggregate, format_comparison, gnuplot_script, read_aggregate, read_trials,
};
use adaptive_qst::harness::{compare, run_experiment, summarize, write_outputs};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

/// Adaptive particle-filter tomography of single qubits.
#[derive(Parser)]
#[command(name = "aqst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of simulated trials and write the aggregate CSV.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long, requires = "out")]
        gnuplot: bool,
        /// Save each trial's measurement counts into this directory.
        #[arg(long, value_name = "DIR")]
        save_records: Option<PathBuf>,
    },
    /// Estimate from a recorded counts file.
    Replay {
        /// Counts file, one `nx ny nz shots n_plus` line per measurement.
        #[arg(long)]
        record: PathBuf,
        /// True Bloch vector `x,y,z`, if known, to score infidelity.
        #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true)]
        truth: Option<String>,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Aggregate a per-trial CSV into medians and quantiles.
    Summarize {
        trials: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Join aggregate CSVs that share a shot grid.
    Compare {
        #[arg(required = true, num_args = 1..)]
        tables: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags override values from `--config`.
#[derive(Args)]
struct ExperimentArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// adaptive, static or sgqt.
    #[arg(long)]
    method: Option<String>,
    /// pure, mixed or fixed:x,y,z.
    #[arg(long, allow_hyphen_values = true)]
    ensemble: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    shots_per_axis: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    resample_a: Option<f64>,
    /// all-three or diagonal-only.
    #[arg(long)]
    schedule: Option<String>,
    /// ideal, depolarizing or replay.
    #[arg(long)]
    backend: Option<String>,
    /// Depolarizing strength λ.
    #[arg(long)]
    noise: Option<f64>,
    /// Aggregate CSV path; per-trial rows go to `<stem>.trials.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn pairs(&self) -> Result<BTreeMap<String, String>> {
        let mut pairs = match &self.config {
            Some(path) => load_pairs(path)?,
            None => BTreeMap::new(),
        };
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v);
            }
        };
        set("seed", self.seed.map(|v| v.to_string()));
        set("method", self.method.clone());
        set("ensemble", self.ensemble.clone());
        set("trials", self.trials.map(|v| v.to_string()));
        set("shots_per_axis", self.shots_per_axis.map(|v| v.to_string()));
        set("iterations", self.iterations.map(|v| v.to_string()));
        set("particles", self.particles.map(|v| v.to_string()));
        set("resample_a", self.resample_a.map(|v| v.to_string()));
        set("schedule", self.schedule.clone());
        set("backend", self.backend.clone());
        set("noise", self.noise.map(|v| v.to_string()));
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        Ok(pairs)
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(spec: &ExperimentSpec, gnuplot: bool, save_records: Option<&Path>) -> Result<()> {
    let result = run_experiment(spec)?;
    if !result.failures.is_empty() {
        log::warn!(
            "{} of {} trials failed and were excluded",
            result.failures.len(),
            spec.trials
        );
    }
    match &spec.out {
        Some(out) => {
            write_outputs(&result, spec, out)?;
            if gnuplot {
                let title = format!("{} {}", spec.method, spec.ensemble.label());
                std::fs::write(out.with_extension("gp"), gnuplot_script(out, &title))?;
            }
        }
        None => emit(&format_aggregate(&result.aggregate), None)?,
    }
    if let Some(dir) = save_records {
        std::fs::create_dir_all(dir)?;
        for t in &result.trials {
            save_record(&t.log, dir.join(format!("trial_{:04}.txt", t.trial)))?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            exp,
            gnuplot,
            save_records,
        } => {
            let spec = ExperimentSpec::from_pairs(&exp.pairs()?)?;
            run(&spec, gnuplot, save_records.as_deref())
        }
        Command::Replay { record, truth, exp } => {
            let mut pairs = exp.pairs()?;
            if let Some(b) = pairs.get("backend") {
                if b != "replay" {
                    bail!("replay cannot use backend {b:?}");
                }
            }
            pairs.insert("backend".into(), "replay".into());
            pairs.insert("record".into(), record.display().to_string());
            pairs.entry("trials".into()).or_insert_with(|| "1".into());
            if let Some(t) = truth {
                pairs.insert("ensemble".into(), format!("fixed:{t}"));
            }
            let spec = ExperimentSpec::from_pairs(&pairs)?;
            run(&spec, false, None)
        }
        Command::Summarize { trials, out } => {
            let rows = read_trials(&trials)?;
            emit(&format_aggregate(&summarize(&rows)?), out.as_deref())
        }
        Command::Compare { tables, out } => {
            let tables = tables
                .iter()
                .map(read_aggregate)
                .collect::<Result<Vec<_>, _>>()?;
            emit(&format_comparison(&compare(&tables)?), out.as_deref())
        }
    }
}
