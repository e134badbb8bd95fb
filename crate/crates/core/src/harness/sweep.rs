//! Monte-Carlo MSE sweeps over SNR, search method, arithmetic and phase grid.
//!
//! Each trial draws one channel set; every `(snr, mode, n_grid, method)` point
//! of that trial sees the same channels and the same noise realisations, so
//! curves differ only by algorithm. Trials run in parallel and are reduced in
//! trial order, so the output does not depend on the thread count.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::estimation::{self, Arithmetic, MseAccumulator};
use crate::grouping::GroupingMode;
use crate::model::SystemConfig;
use crate::rng::{derive_seed, stream};
use crate::signature::{self, phi_grid, SearchMethod};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub snr_list: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<SearchMethod>,
    pub modes: Vec<Arithmetic>,
    pub n_grids: Vec<usize>,
    pub seed: u64,
    pub grouping: GroupingMode,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            snr_list: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 10_000,
            methods: SearchMethod::ALL.to_vec(),
            modes: vec![Arithmetic::Float],
            n_grids: vec![3],
            seed: 0,
            grouping: GroupingMode::Full,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("SNR list", self.snr_list.is_empty()),
            ("method list", self.methods.is_empty()),
            ("mode list", self.modes.is_empty()),
            ("n_grid list", self.n_grids.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep {name} is empty")));
        }
        if self.trials == 0 {
            return Err(Error::Config("sweep needs at least one trial".into()));
        }
        if let Some(n) = self.n_grids.iter().find(|&&n| n == 0 || n % 2 == 0) {
            return Err(Error::Config(format!("n_grid = {n} must be odd and positive")));
        }
        if self.snr_list.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SNR list contains NaN".into()));
        }
        Ok(())
    }

    fn points(&self) -> usize {
        self.snr_list.len() * self.methods.len() * self.modes.len() * self.n_grids.len()
    }

    fn index(&self, snr: usize, method: usize, mode: usize, grid: usize) -> usize {
        ((snr * self.methods.len() + method) * self.modes.len() + mode) * self.n_grids.len() + grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub method: SearchMethod,
    pub mode: Arithmetic,
    pub n_grid: usize,
    pub acc: MseAccumulator,
    pub trials: usize,
}

impl SweepRow {
    pub fn ensemble_mse(&self) -> f64 {
        self.acc.ensemble().unwrap_or(f64::NAN)
    }
}

/// Uplink MSE of one trial at every sweep point, in [`SweepSpec::index`] order.
fn run_trial(config: &SystemConfig, spec: &SweepSpec, trial: usize) -> Result<Vec<MseAccumulator>> {
    let seed = derive_seed(spec.seed, &[trial as u64]);
    let channels = estimation::draw_channels(config, seed)?;
    let ch = estimation::views(&channels);
    let ul_seed = derive_seed(seed, &[stream::UL_NOISE, 0]);
    let mut out = vec![MseAccumulator::default(); spec.points()];
    for (si, &snr) in spec.snr_list.iter().enumerate() {
        let cfg = SystemConfig { snr_db: snr, ..config.clone() };
        for (ai, &arith) in spec.modes.iter().enumerate() {
            let estimates = estimation::preamble_estimates(&cfg, &ch, arith, seed)?;
            for (gi, &n_grid) in spec.n_grids.iter().enumerate() {
                let phis = phi_grid(n_grid, cfg.m);
                let grids = estimates
                    .iter()
                    .map(|h| estimation::power_grid(h, &phis, arith))
                    .collect::<Result<Vec<_>>>()?;
                for (mi, &method) in spec.methods.iter().enumerate() {
                    let sigs = grids
                        .iter()
                        .map(|g| signature::select(g, cfg.tau, method))
                        .collect::<Result<Vec<_>>>()?;
                    let (assignment, _) = estimation::group_signatures(&sigs, &cfg, spec.grouping)?;
                    let r = estimation::run_ul_training(&cfg, &ch, &sigs, &assignment, arith, ul_seed)?;
                    out[spec.index(si, mi, ai, gi)] = r.accumulator();
                }
            }
        }
    }
    Ok(out)
}

/// Runs the sweep. Rows are ordered by SNR, then method, mode and `n_grid`,
/// each in the order given in `spec`.
pub fn run_sweep(config: &SystemConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    config.validate()?;
    spec.validate()?;
    let per_trial = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(config, spec, t))
        .collect::<Result<Vec<_>>>()?;
    let mut totals = vec![MseAccumulator::default(); spec.points()];
    for trial in &per_trial {
        for (t, a) in totals.iter_mut().zip(trial) {
            t.merge(a);
        }
    }
    let mut rows = Vec::with_capacity(spec.points());
    for (si, &snr_db) in spec.snr_list.iter().enumerate() {
        for (mi, &method) in spec.methods.iter().enumerate() {
            for (ai, &mode) in spec.modes.iter().enumerate() {
                for (gi, &n_grid) in spec.n_grids.iter().enumerate() {
                    let acc = totals[spec.index(si, mi, ai, gi)];
                    rows.push(SweepRow { snr_db, method, mode, n_grid, acc, trials: spec.trials });
                }
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "snr_db,method,mode,n_grid,ensemble_mse,mean_ratio_mse,trials\n";

/// Modes contain commas, so they are quoted.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},\"{}\",{},{:.9e},{:.9e},{}",
            r.snr_db,
            r.method,
            r.mode,
            r.n_grid,
            r.ensemble_mse(),
            r.acc.mean_ratio(),
            r.trials
        );
    }
    out
}

/// Lookup helper: the row for `(snr, method, mode, n_grid)`.
pub fn find_row(
    rows: &[SweepRow],
    snr_db: f64,
    method: SearchMethod,
    mode: Arithmetic,
    n_grid: usize,
) -> Option<&SweepRow> {
    rows.iter()
        .find(|r| r.snr_db == snr_db && r.method == method && r.mode == mode && r.n_grid == n_grid)
}
