//! `adma` command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::estimation::{self, Arithmetic, PipelineOptions, TrialInputs};
use crate::fixedpoint::magnitude_stats;
use crate::grouping::GroupingMode;
use crate::harness::cost::{cost_csv, extraction_latency, Variant};
use crate::harness::sweep::{run_sweep, sweep_csv, SweepSpec};
use crate::model::{self, SystemConfig};
use crate::rng::derive_seed;
use crate::signature::{phi_grid, SearchConfig, SearchMethod};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "adma", version, about = "ADMA massive-MIMO channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full pipeline on one scenario and write per-user MSE rows.
    Simulate(SimulateArgs),
    /// Monte-Carlo MSE sweep over SNR, method, arithmetic and phase grid.
    Sweep(SweepArgs),
    /// Latency and resource reports.
    Cost(CostArgs),
    /// Peak magnitude statistics of channels and rotated spectra.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (`key = value` lines). Defaults to the simulation scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// `float` or `fixed:1,p,q`.
    #[arg(long, default_value = "float")]
    mode: String,
    #[arg(long, default_value = "exact")]
    method: String,
    #[arg(long, default_value_t = 3)]
    n_grid: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Uplink frames per preamble.
    #[arg(long, default_value_t = 1)]
    ul_frames: usize,
    /// Also write the uplink group assignment of the first trial.
    #[arg(long)]
    groups_out: Option<PathBuf>,
    /// Compare only against the latest member of each group.
    #[arg(long)]
    hw_grouping: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Repeatable: `float` or `fixed:1,p,q`.
    #[arg(long = "mode")]
    modes: Vec<String>,
    /// Repeatable or comma separated.
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_list: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, value_delimiter = ',')]
    n_grid: Vec<usize>,
    #[arg(long)]
    hw_grouping: bool,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `rot` or `norot`; both when absent.
    #[arg(long)]
    variant: Option<String>,
    /// Also report per-user extraction latency from a preamble run.
    #[arg(long)]
    per_user: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 3)]
    n_grid: usize,
    #[arg(long, default_value_t = 1.0)]
    bucket: f64,
}

fn load_config(path: Option<&Path>) -> Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::from_file(p),
        None => Ok(SystemConfig::simulation()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn grouping_mode(hw: bool) -> GroupingMode {
    if hw {
        GroupingMode::LatestMember
    } else {
        GroupingMode::Full
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(args.common.config.as_deref())?;
    let method: SearchMethod = args.method.parse()?;
    let arith: Arithmetic = args.mode.parse()?;
    if args.trials == 0 || args.ul_frames == 0 {
        return Err(Error::Config("trials and ul-frames must be at least 1".into()));
    }
    let opts = PipelineOptions {
        search: SearchConfig::new(args.n_grid, method)?,
        arithmetic: arith,
        grouping: grouping_mode(args.hw_grouping),
        ul_frames: args.ul_frames,
        downlink: true,
    };
    let mut csv = String::from("trial,user,stage,snr_db,method,arithmetic_mode,mse\n");
    for trial in 0..args.trials {
        let inputs = TrialInputs::generate(&cfg, derive_seed(args.common.seed, &[trial as u64]))?;
        let out = estimation::run_pipeline(&cfg, &inputs, &opts)?;
        if trial == 0 {
            if let Some(p) = &args.groups_out {
                std::fs::write(p, out.preamble.assignment.to_csv(&out.preamble.signatures))?;
            }
        }
        let ch = estimation::views(&inputs.channels);
        let mut results = vec![out.preamble.result(&ch)?];
        results.extend(out.ul);
        results.extend(out.dl.map(|(r, _)| r));
        for r in &results {
            for u in &r.users {
                let _ = writeln!(
                    csv,
                    "{trial},{},{},{},{},\"{}\",{:.9e}",
                    u.user,
                    r.stage,
                    cfg.snr_db,
                    method,
                    arith,
                    u.mse()
                );
            }
        }
    }
    emit(args.common.out.as_deref(), &csv)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_config(args.common.config.as_deref())?;
    let mut spec = SweepSpec {
        trials: args.trials,
        seed: args.common.seed,
        grouping: grouping_mode(args.hw_grouping),
        ..SweepSpec::default()
    };
    if !args.modes.is_empty() {
        spec.modes = args.modes.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }
    if !args.methods.is_empty() {
        spec.methods = args.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }
    if !args.snr_list.is_empty() {
        spec.snr_list = args.snr_list;
    }
    if !args.n_grid.is_empty() {
        spec.n_grids = args.n_grid;
    }
    let rows = run_sweep(&cfg, &spec)?;
    emit(args.common.out.as_deref(), &sweep_csv(&rows))
}

fn cost(args: CostArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let variants = match &args.variant {
        Some(v) => vec![v.parse::<Variant>()?],
        None => Variant::BOTH.to_vec(),
    };
    let (mut csv, warnings) = cost_csv(&cfg, &variants)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if args.per_user {
        let inputs = TrialInputs::generate(&cfg, args.seed)?;
        let ch = estimation::views(&inputs.channels);
        let pre = estimation::run_preamble(
            &cfg,
            &ch,
            &SearchConfig::default(),
            Arithmetic::Float,
            GroupingMode::Full,
            args.seed,
        )?;
        for &v in &variants {
            for (u, sig) in pre.signatures.iter().enumerate() {
                let _ = writeln!(csv, "{v},Extraction[user {u}],latency,{}", extraction_latency(sig));
            }
        }
    }
    emit(args.out.as_deref(), &csv)
}

fn stats(args: StatsArgs) -> Result<()> {
    let cfg = load_config(args.common.config.as_deref())?;
    if args.trials == 0 || !(args.bucket > 0.0) {
        return Err(Error::Config("stats needs trials >= 1 and a positive bucket width".into()));
    }
    let channels = (0..args.trials)
        .map(|t| {
            let seed = derive_seed(args.common.seed, &[t as u64]);
            Ok(model::gen_channel(&cfg, cfg.user_angle(t), seed)?.h)
        })
        .collect::<Result<Vec<_>>>()?;
    let s = magnitude_stats(&channels, &phi_grid(args.n_grid, cfg.m), args.bucket)?;
    let mut csv = String::from("series,bucket_lower,count\n");
    for (name, hist) in [("h", &s.hist_h), ("h_ro", &s.hist_spectrum)] {
        for (lo, count) in &hist.buckets {
            let _ = writeln!(csv, "{name},{lo},{count}");
        }
    }
    eprintln!(
        "max |h| = {:.4}, max |h_ro| = {:.4}, overall max = {:.4}",
        s.max_h.iter().copied().fold(0.0, f64::max),
        s.max_spectrum.iter().copied().fold(0.0, f64::max),
        s.overall_max()
    );
    emit(args.common.out.as_deref(), &csv)
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Cost(a) => cost(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                1
            } else {
                2
            }
        }
    }
}
