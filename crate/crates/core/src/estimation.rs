//! The three training stages and MSE scoring.
//!
//! Every numeric step goes through [`Arithmetic`], so the same pipeline runs in
//! floating point or in `fixed[1,p,q]`.

use std::fmt;
use std::str::FromStr;

use crate::fixedpoint::{self, FixedFormat};
use crate::grouping::{self, GroupAssignment, GroupItem, GroupingMode, SortTrace};
use crate::model::{self, CMat, SystemConfig, TrainingMatrix, UserChannel};
use crate::rng::{derive_seed, stream};
use crate::signature::{self, phi_grid, PowerGrid, SearchConfig, SearchMethod, SpatialSignature};
use crate::spectral::{dft, idft_sparse, rotate, Window};
use crate::{Error, Result, C64};

/// Numeric datapath used by every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Arithmetic {
    #[default]
    Float,
    Fixed(FixedFormat),
}

impl fmt::Display for Arithmetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arithmetic::Float => f.write_str("float"),
            Arithmetic::Fixed(fmt) => write!(f, "fixed:{fmt}"),
        }
    }
}

impl FromStr for Arithmetic {
    type Err = Error;

    /// `float` or `fixed:1,p,q`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "float" => Ok(Arithmetic::Float),
            other => match other.strip_prefix("fixed:") {
                Some(fmt) => Ok(Arithmetic::Fixed(fmt.parse()?)),
                None => Err(Error::Config(format!("unknown arithmetic mode {s:?}"))),
            },
        }
    }
}

impl Arithmetic {
    /// Receiver front end: quantizes the received matrix in fixed mode.
    pub fn ingest(&self, y: CMat) -> Result<CMat> {
        match self {
            Arithmetic::Float => Ok(y),
            Arithmetic::Fixed(fmt) => fixedpoint::quantize_cmat(&y, *fmt),
        }
    }

    /// `scale * Y s`.
    pub fn ls(&self, y: &CMat, pilot: &[C64], scale: f64) -> Result<Vec<C64>> {
        match self {
            Arithmetic::Float => {
                if pilot.len() != y.cols() {
                    return Err(Error::Shape(format!("pilot of length {} for {} columns", pilot.len(), y.cols())));
                }
                Ok(y.mul_vec(pilot).into_iter().map(|z| z * scale).collect())
            }
            Arithmetic::Fixed(fmt) => fixedpoint::fx_ls(y, pilot, scale, *fmt),
        }
    }

    /// `scale * F Phi(phi) h`.
    pub fn spectrum(&self, h: &[C64], phi: f64, scale: f64) -> Result<Vec<C64>> {
        match self {
            Arithmetic::Float => {
                let mut x = dft(&rotate(h, phi));
                if scale != 1.0 {
                    x.iter_mut().for_each(|z| *z *= scale);
                }
                Ok(x)
            }
            Arithmetic::Fixed(fmt) => fixedpoint::fx_rotated_spectrum(h, phi, scale, *fmt),
        }
    }

    pub fn powers(&self, spectrum: &[C64]) -> Result<Vec<f64>> {
        match self {
            Arithmetic::Float => Ok(spectrum.iter().map(|z| z.norm_sqr()).collect()),
            Arithmetic::Fixed(fmt) => fixedpoint::fx_powers(spectrum, *fmt),
        }
    }

    pub fn recover(&self, values: &[C64], window: &Window, phi: f64) -> Result<Vec<C64>> {
        match self {
            Arithmetic::Float => {
                let bins: Vec<usize> = window.indices().collect();
                idft_sparse(values, &bins, phi, window.m)
            }
            Arithmetic::Fixed(fmt) => fixedpoint::fx_recover(values, window, phi, *fmt),
        }
    }
}

/// LS estimate `Y s_k / (sqrt(d_k) L sigma_p2)`.
pub fn preamble_ls(y: &CMat, s_k: &[C64], d_k: f64, l: usize, sigma_p2: f64) -> Result<Vec<C64>> {
    if !(d_k > 0.0) {
        return Err(Error::Domain(format!("power scalar d = {d_k} must be positive")));
    }
    Arithmetic::Float.ls(y, s_k, 1.0 / (d_k.sqrt() * l as f64 * sigma_p2))
}

/// Group observation `Y s_g / (L sigma_p2)`.
pub fn group_extract(y: &CMat, s_g: &[C64], l: usize, sigma_p2: f64) -> Result<Vec<C64>> {
    Arithmetic::Float.ls(y, s_g, 1.0 / (l as f64 * sigma_p2))
}

/// Window bins of `(1/sqrt(d_k)) F Phi(phi) y_g`.
pub fn ul_extract(y_g: &[C64], phi: f64, window: &Window, d_k: f64) -> Result<Vec<C64>> {
    extract(Arithmetic::Float, y_g, phi, window, d_k)
}

pub fn ul_recover(values: &[C64], window: &Window, phi: f64) -> Result<Vec<C64>> {
    Arithmetic::Float.recover(values, window, phi)
}

fn extract(arith: Arithmetic, y_g: &[C64], phi: f64, window: &Window, d_k: f64) -> Result<Vec<C64>> {
    if !(d_k > 0.0) {
        return Err(Error::Domain(format!("power scalar d = {d_k} must be positive")));
    }
    let spec = arith.spectrum(y_g, phi, 1.0 / d_k.sqrt())?;
    Ok(window.indices().map(|b| spec[b]).collect())
}

/// `||h - h_est||^2 / ||h||^2`.
pub fn mse(h: &[C64], h_est: &[C64]) -> Result<f64> {
    let (err, energy) = error_terms(h, h_est)?;
    Ok(err / energy)
}

fn error_terms(h: &[C64], h_est: &[C64]) -> Result<(f64, f64)> {
    if h.len() != h_est.len() {
        return Err(Error::Shape(format!("channel of length {} vs estimate of length {}", h.len(), h_est.len())));
    }
    let energy: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::Degenerate("true channel has zero norm".into()));
    }
    let err = h.iter().zip(h_est).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((err, energy))
}

/// `sum ||h - h_est||^2 / sum ||h||^2` over `(h, h_est)` pairs.
pub fn ensemble_mse(pairs: &[(&[C64], &[C64])]) -> Result<f64> {
    let mut acc = MseAccumulator::default();
    for (h, e) in pairs {
        acc.add(h, e)?;
    }
    acc.ensemble()
}

/// Running sums for the ensemble and mean-of-ratios MSE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MseAccumulator {
    pub err: f64,
    pub energy: f64,
    pub ratio_sum: f64,
    pub count: usize,
}

impl MseAccumulator {
    pub fn add(&mut self, h: &[C64], h_est: &[C64]) -> Result<()> {
        let (err, energy) = error_terms(h, h_est)?;
        self.push(err, energy);
        Ok(())
    }

    pub fn push(&mut self, err: f64, energy: f64) {
        self.err += err;
        self.energy += energy;
        self.ratio_sum += err / energy;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.err += other.err;
        self.energy += other.energy;
        self.ratio_sum += other.ratio_sum;
        self.count += other.count;
    }

    pub fn ensemble(&self) -> Result<f64> {
        if !(self.energy > 0.0) {
            return Err(Error::Degenerate("no channel energy accumulated".into()));
        }
        Ok(self.err / self.energy)
    }

    pub fn mean_ratio(&self) -> f64 {
        self.ratio_sum / self.count.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Preamble,
    Ul,
    Dl,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Preamble => "preamble",
            Stage::Ul => "UL",
            Stage::Dl => "DL",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEstimate {
    pub user: usize,
    pub h_est: Vec<C64>,
    pub signature: SpatialSignature,
    pub err: f64,
    pub energy: f64,
}

impl UserEstimate {
    pub fn mse(&self) -> f64 {
        self.err / self.energy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub stage: Stage,
    pub users: Vec<UserEstimate>,
    pub assignment: GroupAssignment,
}

impl EstimationResult {
    pub fn accumulator(&self) -> MseAccumulator {
        let mut acc = MseAccumulator::default();
        for u in &self.users {
            acc.push(u.err, u.energy);
        }
        acc
    }
}

/// Channel draws of one trial plus the seed its noise streams derive from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialInputs {
    pub channels: Vec<UserChannel>,
    /// Downlink channels, same ray directions with fresh gains.
    pub channels_dl: Vec<UserChannel>,
    pub seed: u64,
}

impl TrialInputs {
    /// User `k` is drawn around `config.user_angle(k)`.
    pub fn generate(config: &SystemConfig, seed: u64) -> Result<Self> {
        let channels = draw_channels(config, seed)?;
        let channels_dl = channels
            .iter()
            .enumerate()
            .map(|(k, ul)| model::gen_channel_dl(config, ul, derive_seed(seed, &[stream::DL_GAINS, k as u64])))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels, channels_dl, seed })
    }

    pub fn from_channels(channels: Vec<UserChannel>, seed: u64) -> Self {
        Self { channels_dl: channels.clone(), channels, seed }
    }
}

/// Uplink channels of one trial, user `k` around `config.user_angle(k)`.
pub fn draw_channels(config: &SystemConfig, seed: u64) -> Result<Vec<UserChannel>> {
    (0..config.k)
        .map(|k| model::gen_channel(config, config.user_angle(k), derive_seed(seed, &[stream::CHANNEL, k as u64])))
        .collect()
}

pub fn views(channels: &[UserChannel]) -> Vec<&[C64]> {
    channels.iter().map(|c| c.h.as_slice()).collect()
}

/// Preamble LS estimates for every user. Users train in blocks of `tau` in id
/// order; the last block may be short.
pub fn preamble_estimates(
    config: &SystemConfig,
    channels: &[&[C64]],
    arith: Arithmetic,
    seed: u64,
) -> Result<Vec<Vec<C64>>> {
    let d = config.power_scaling().d;
    let s = model::gen_training_matrix(config.l, config.tau, config.sigma_p2)?;
    let mut out = Vec::with_capacity(channels.len());
    for (b, block) in channels.chunks(config.tau).enumerate() {
        let first = b * config.tau;
        let db = &d[first..first + block.len()];
        let noise_seed = derive_seed(seed, &[stream::PREAMBLE_NOISE, b as u64]);
        let y = arith.ingest(model::received_preamble(block, &s, db, config.noise_var(), noise_seed)?)?;
        for (i, &dk) in db.iter().enumerate() {
            let scale = 1.0 / (dk.sqrt() * config.l as f64 * config.sigma_p2);
            out.push(arith.ls(&y, s.pilot(i), scale)?);
        }
    }
    Ok(out)
}

/// Bin powers of `h` for every phase in the grid, computed in `arith`.
pub fn power_grid(h: &[C64], phis: &[f64], arith: Arithmetic) -> Result<PowerGrid> {
    match arith {
        Arithmetic::Float => Ok(PowerGrid::from_channel(h, phis)),
        _ => {
            let powers = phis
                .iter()
                .map(|&phi| arith.powers(&arith.spectrum(h, phi, 1.0)?))
                .collect::<Result<Vec<_>>>()?;
            PowerGrid::from_powers(phis.to_vec(), powers)
        }
    }
}

/// Sorts users by signature centre and groups them.
pub fn group_signatures(
    signatures: &[SpatialSignature],
    config: &SystemConfig,
    mode: GroupingMode,
) -> Result<(GroupAssignment, SortTrace<(usize, usize)>)> {
    grouping::sort_and_group(signatures, config.omega, config.tau, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreambleOutput {
    pub estimates: Vec<Vec<C64>>,
    pub signatures: Vec<SpatialSignature>,
    pub assignment: GroupAssignment,
    pub sort: SortTrace<(usize, usize)>,
}

impl PreambleOutput {
    pub fn result(&self, channels: &[&[C64]]) -> Result<EstimationResult> {
        let users = channels
            .iter()
            .zip(&self.estimates)
            .zip(&self.signatures)
            .enumerate()
            .map(|(user, ((h, e), sig))| {
                let (err, energy) = error_terms(h, e)?;
                Ok(UserEstimate { user, h_est: e.clone(), signature: *sig, err, energy })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EstimationResult { stage: Stage::Preamble, users, assignment: self.assignment.clone() })
    }
}

/// Preamble stage: LS estimates, signature search, sorting and grouping.
pub fn run_preamble(
    config: &SystemConfig,
    channels: &[&[C64]],
    search: &SearchConfig,
    arith: Arithmetic,
    mode: GroupingMode,
    seed: u64,
) -> Result<PreambleOutput> {
    config.validate()?;
    if channels.len() != config.k {
        return Err(Error::Shape(format!("{} channels for K = {}", channels.len(), config.k)));
    }
    let estimates = preamble_estimates(config, channels, arith, seed)?;
    let phis = phi_grid(search.n_grid, config.m);
    let signatures = estimates
        .iter()
        .map(|h| signature::select(&power_grid(h, &phis, arith)?, config.tau, search.method))
        .collect::<Result<Vec<_>>>()?;
    let (assignment, sort) = group_signatures(&signatures, config, mode)?;
    Ok(PreambleOutput { estimates, signatures, assignment, sort })
}

/// Per-user observations after pilot despreading: each user sees its group's
/// observation, minus the contributions listed in `exclude[k]`.
fn estimate_groups(
    config: &SystemConfig,
    stage: Stage,
    channels: &[&[C64]],
    signatures: &[SpatialSignature],
    assignment: &GroupAssignment,
    exclude: &[Vec<usize>],
    arith: Arithmetic,
    noise_seed: u64,
) -> Result<EstimationResult> {
    let k = channels.len();
    if k != config.k {
        return Err(Error::Shape(format!("{k} channels for K = {}", config.k)));
    }
    if signatures.len() != k {
        return Err(Error::Shape(format!("{} signatures for {k} users", signatures.len())));
    }
    assignment.check_covers(k)?;
    let d = config.power_scaling().d;
    let s: TrainingMatrix = model::gen_training_matrix(config.l, assignment.g_count(), config.sigma_p2)?;
    let y = arith.ingest(model::received_ul(assignment, channels, &s, &d, config.noise_var(), noise_seed)?)?;
    let scale = 1.0 / (config.l as f64 * config.sigma_p2);
    let mut users: Vec<Option<UserEstimate>> = vec![None; k];
    for (g, members) in assignment.groups.iter().enumerate() {
        let y_g = arith.ls(&y, s.pilot(g), scale)?;
        for &u in members {
            let sig = signatures[u];
            let view;
            let obs = if exclude[u].is_empty() {
                &y_g
            } else {
                let mut v = y_g.clone();
                for &j in &exclude[u] {
                    let a = d[j].sqrt();
                    v.iter_mut().zip(channels[j]).for_each(|(x, h)| *x -= h * a);
                }
                view = v;
                &view
            };
            let values = extract(arith, obs, sig.phi, &sig.window, d[u])?;
            let h_est = arith.recover(&values, &sig.window, sig.phi)?;
            let (err, energy) = error_terms(channels[u], &h_est)?;
            users[u] = Some(UserEstimate { user: u, h_est, signature: sig, err, energy });
        }
    }
    Ok(EstimationResult { stage, users: users.into_iter().flatten().collect(), assignment: assignment.clone() })
}

/// Uplink training: every group sends one pilot, each user is recovered from
/// its signature window.
pub fn run_ul_training(
    config: &SystemConfig,
    channels: &[&[C64]],
    signatures: &[SpatialSignature],
    assignment: &GroupAssignment,
    arith: Arithmetic,
    noise_seed: u64,
) -> Result<EstimationResult> {
    let exclude = vec![Vec::new(); channels.len()];
    estimate_groups(config, Stage::Ul, channels, signatures, assignment, &exclude, arith, noise_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlPlan {
    pub signatures: Vec<SpatialSignature>,
    pub clusters: Vec<Vec<usize>>,
    /// Groups of cluster indices.
    pub cluster_groups: GroupAssignment,
    /// The same groups expanded to users.
    pub assignment: GroupAssignment,
}

/// Maps uplink signatures to the downlink, clusters identical ones and groups
/// the clusters.
pub fn plan_dl(
    config: &SystemConfig,
    signatures_ul: &[SpatialSignature],
    lambda_ratio: f64,
    mode: GroupingMode,
) -> Result<DlPlan> {
    let signatures = signatures_ul
        .iter()
        .map(|s| signature::reciprocity_map(s, lambda_ratio))
        .collect::<Result<Vec<_>>>()?;
    let clusters = grouping::cluster_identical(&signatures);
    let keys: Vec<(usize, usize)> = clusters.iter().enumerate().map(|(c, m)| (signatures[m[0]].b_center, c)).collect();
    let items: Vec<GroupItem> = grouping::bitonic_sort(&keys)
        .sorted
        .iter()
        .map(|&(_, c)| GroupItem { id: c, window: signatures[clusters[c][0]].window })
        .collect();
    let cluster_groups = grouping::group_users(&items, config.omega, config.tau, mode)?;
    let groups = cluster_groups
        .groups
        .iter()
        .map(|cs| cs.iter().flat_map(|&c| clusters[c].iter().copied()).collect())
        .collect();
    let assignment = GroupAssignment::from_groups(groups, signatures.len())?;
    Ok(DlPlan { signatures, clusters, cluster_groups, assignment })
}

/// Downlink training on downlink-wavelength channels. Users of one cluster
/// share a pilot but are separate receivers, so none of them sees the others.
pub fn run_dl_training(
    config: &SystemConfig,
    channels_dl: &[&[C64]],
    signatures_ul: &[SpatialSignature],
    lambda_ratio: f64,
    arith: Arithmetic,
    mode: GroupingMode,
    noise_seed: u64,
) -> Result<(EstimationResult, DlPlan)> {
    let plan = plan_dl(config, signatures_ul, lambda_ratio, mode)?;
    let mut exclude = vec![Vec::new(); channels_dl.len()];
    for c in &plan.clusters {
        for &u in c {
            exclude[u] = c.iter().copied().filter(|&j| j != u).collect();
        }
    }
    let result = estimate_groups(
        config,
        Stage::Dl,
        channels_dl,
        &plan.signatures,
        &plan.assignment,
        &exclude,
        arith,
        noise_seed,
    )?;
    Ok((result, plan))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub search: SearchConfig,
    pub arithmetic: Arithmetic,
    pub grouping: GroupingMode,
    /// Uplink frames following one preamble.
    pub ul_frames: usize,
    pub downlink: bool,
}

impl PipelineOptions {
    pub fn new(search: SearchConfig, arithmetic: Arithmetic) -> Self {
        Self { search, arithmetic, grouping: GroupingMode::Full, ul_frames: 1, downlink: true }
    }
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self::new(SearchConfig::default(), Arithmetic::Float)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub preamble: PreambleOutput,
    pub ul: Vec<EstimationResult>,
    pub dl: Option<(EstimationResult, DlPlan)>,
}

/// Preamble, `ul_frames` uplink frames and optionally one downlink frame.
pub fn run_pipeline(config: &SystemConfig, inputs: &TrialInputs, opts: &PipelineOptions) -> Result<PipelineOutput> {
    let ch = views(&inputs.channels);
    let preamble = run_preamble(config, &ch, &opts.search, opts.arithmetic, opts.grouping, inputs.seed)?;
    let ul = (0..opts.ul_frames)
        .map(|f| {
            let seed = derive_seed(inputs.seed, &[stream::UL_NOISE, f as u64]);
            run_ul_training(config, &ch, &preamble.signatures, &preamble.assignment, opts.arithmetic, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let dl = if opts.downlink {
        let ch_dl = views(&inputs.channels_dl);
        let seed = derive_seed(inputs.seed, &[stream::DL_NOISE, 0]);
        Some(run_dl_training(
            config,
            &ch_dl,
            &preamble.signatures,
            config.lambda_ratio,
            opts.arithmetic,
            opts.grouping,
            seed,
        )?)
    } else {
        None
    };
    Ok(PipelineOutput { preamble, ul, dl })
}

/// Convenience: default options with the given method.
pub fn options_for(method: SearchMethod, n_grid: usize, arithmetic: Arithmetic) -> Result<PipelineOptions> {
    Ok(PipelineOptions::new(SearchConfig::new(n_grid, method)?, arithmetic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::validate_grouping;
    use crate::model::gen_training_matrix;
    use crate::signature::energy_ratio;
    use crate::spectral::rotated_spectrum;

    fn noiseless(mut cfg: SystemConfig) -> SystemConfig {
        cfg.snr_db = f64::INFINITY;
        cfg
    }

    fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn arithmetic_modes_parse() {
        assert_eq!("float".parse::<Arithmetic>().unwrap(), Arithmetic::Float);
        let fx: Arithmetic = "fixed:1,8,6".parse().unwrap();
        assert_eq!(fx, Arithmetic::Fixed(FixedFormat::new(8, 6).unwrap()));
        assert_eq!(fx.to_string(), "fixed:1,8,6");
        assert!("double".parse::<Arithmetic>().unwrap_err().is_config());
        assert!("fixed:2,8,6".parse::<Arithmetic>().unwrap_err().is_config());
    }

    #[test]
    fn mse_examples() {
        let h = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0)];
        assert_eq!(mse(&h, &h).unwrap(), 0.0);
        assert_eq!(mse(&h, &[C64::default(); 2]).unwrap(), 1.0);
        let h2: Vec<C64> = h.iter().map(|z| z * 2.0).collect();
        assert!((mse(&h, &h2).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(mse(&[C64::default()], &[C64::default()]), Err(Error::Degenerate(_))));
        // ratio of sums, not mean of ratios
        let a = vec![C64::new(1.0, 0.0)];
        let b = vec![C64::new(3.0, 0.0)];
        let e = ensemble_mse(&[(&a, &[C64::default()]), (&b, &b)]).unwrap();
        assert!((e - 0.1).abs() < 1e-15);
    }

    #[test]
    fn noiseless_single_user_ls_is_exact() {
        let cfg = noiseless(SystemConfig::simulation());
        let ch = model::gen_channel(&cfg, 14.48, 3).unwrap();
        let s = gen_training_matrix(cfg.l, cfg.tau, 1.0).unwrap();
        let y = model::received_preamble(&[&ch.h], &s, &[2.0], 0.0, 0).unwrap();
        let est = preamble_ls(&y, s.pilot(0), 2.0, cfg.l, 1.0).unwrap();
        assert!(close(&est, &ch.h, 1e-9));
        assert!(matches!(preamble_ls(&y, s.pilot(0), 0.0, cfg.l, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ls_noise_variance_matches_theory() {
        // var = noise_var / (d L sigma_p2)
        let (m, l) = (16, 8);
        let s = gen_training_matrix(l, 2, 1.0).unwrap();
        for d in [1.0, 2.0] {
            let mut sum = 0.0;
            let n = 2000;
            for t in 0..n {
                let y = model::awgn(m, l, 0.5, t);
                let e = preamble_ls(&y, s.pilot(1), d, l, 1.0).unwrap();
                sum += e.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            let var = sum / (n * m as u64) as f64;
            let want = 0.5 / (d * l as f64);
            assert!((var - want).abs() < 0.05 * want, "d={d}: {var} vs {want}");
        }
    }

    #[test]
    fn extraction_of_a_lone_user_is_its_window() {
        let cfg = SystemConfig::simulation();
        let ch = model::gen_channel(&cfg, -14.48, 11).unwrap();
        let w = Window::new(100, 16, 128).unwrap();
        let phi = -std::f64::consts::PI / 128.0;
        let y_g: Vec<C64> = ch.h.iter().map(|z| z * 2f64.sqrt()).collect();
        let got = ul_extract(&y_g, phi, &w, 2.0).unwrap();
        let spec = rotated_spectrum(&ch.h, phi).values;
        let want: Vec<C64> = w.indices().map(|b| spec[b]).collect();
        assert!(close(&got, &want, 1e-9));
        let zero = ul_extract(&vec![C64::default(); 128], phi, &w, 1.0).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn group_extract_recovers_the_group_sum() {
        let cfg = noiseless(SystemConfig::simulation());
        let a = model::gen_channel(&cfg, 14.48, 1).unwrap();
        let b = model::gen_channel(&cfg, 48.59, 2).unwrap();
        let c = model::gen_channel(&cfg, -48.59, 3).unwrap();
        let asg = GroupAssignment::from_groups(vec![vec![0, 1], vec![2]], 3).unwrap();
        let s = gen_training_matrix(cfg.l, 2, 1.0).unwrap();
        let d = [1.0, 4.0, 1.0];
        let y = model::received_ul(&asg, &[&a.h, &b.h, &c.h], &s, &d, 0.0, 0).unwrap();
        let y0 = group_extract(&y, s.pilot(0), cfg.l, 1.0).unwrap();
        let want: Vec<C64> = a.h.iter().zip(&b.h).map(|(x, z)| x + z * 2.0).collect();
        assert!(close(&y0, &want, 1e-9));
        assert_eq!(y0.len(), 128);
    }

    #[test]
    fn noiseless_closed_loop_matches_out_of_window_energy() {
        let cfg = noiseless(SystemConfig::simulation());
        let inputs = TrialInputs::generate(&cfg, 77).unwrap();
        let ch = views(&inputs.channels);
        let sigs: Vec<SpatialSignature> = ch
            .iter()
            .map(|h| signature::signature(h, cfg.tau, &SearchConfig::default()).unwrap())
            .collect();
        let asg = GroupAssignment::singletons(cfg.k);
        let r = run_ul_training(&cfg, &ch, &sigs, &asg, Arithmetic::Float, 5).unwrap();
        for u in &r.users {
            let rho = energy_ratio(&rotated_spectrum(ch[u.user], u.signature.phi).values, &u.signature.window).unwrap();
            assert!((u.mse() - (1.0 - rho)).abs() < 1e-6);
        }
    }

    #[test]
    fn full_window_recovers_exactly() {
        let mut cfg = noiseless(SystemConfig::simulation());
        cfg.m = 32;
        cfg.tau = 32;
        cfg.k = 2;
        let inputs = TrialInputs::generate(&cfg, 4).unwrap();
        let out = run_pipeline(&cfg, &inputs, &PipelineOptions::default()).unwrap();
        for u in &out.ul[0].users {
            assert!(u.mse() < 1e-20);
        }
    }

    #[test]
    fn other_group_pilot_does_not_disturb() {
        let mut cfg = noiseless(SystemConfig::simulation());
        cfg.k = 1;
        let a = model::gen_channel(&cfg, 14.48, 1).unwrap();
        let b = model::gen_channel(&cfg, -14.48, 2).unwrap();
        let sig = signature::signature(&a.h, cfg.tau, &SearchConfig::default()).unwrap();
        let sig_b = signature::signature(&b.h, cfg.tau, &SearchConfig::default()).unwrap();
        let alone = run_ul_training(&cfg, &[&a.h], &[sig], &GroupAssignment::singletons(1), Arithmetic::Float, 0).unwrap();
        cfg.k = 2;
        let both = run_ul_training(
            &cfg,
            &[&a.h, &b.h],
            &[sig, sig_b],
            &GroupAssignment::singletons(2),
            Arithmetic::Float,
            0,
        )
        .unwrap();
        assert!(close(&alone.users[0].h_est, &both.users[0].h_est, 1e-9));
    }

    #[test]
    fn preamble_finds_predicted_peaks() {
        // single on-grid ray per user, noiseless
        let mut cfg = noiseless(SystemConfig::simulation());
        cfg.k = 4;
        cfg.tau = 4;
        cfg.l = 4;
        let angles = [-48.59f64, -14.4775, 14.4775, 48.59];
        let channels: Vec<UserChannel> = angles
            .iter()
            .map(|&t| {
                let theta = (((t.to_radians().sin() * 64.0).round()) / 64.0).asin().to_degrees();
                UserChannel::from_rays(t, vec![theta], vec![C64::new(1.0, 0.0)], cfg.m, 0.5).unwrap()
            })
            .collect();
        let ch = views(&channels);
        for method in SearchMethod::ALL {
            let search = SearchConfig::new(3, method).unwrap();
            let out = run_preamble(&cfg, &ch, &search, Arithmetic::Float, GroupingMode::Full, 1).unwrap();
            assert_eq!(out.assignment.g_count(), 1);
            for (sig, c) in out.signatures.iter().zip(&channels) {
                let b0 = crate::spectral::predicted_peak(c.ray_angles[0], cfg.m, 0.5).unwrap();
                assert!(sig.window.contains(b0), "{method}");
                assert_eq!(sig.phi, 0.0);
                if method != SearchMethod::Exact {
                    assert_eq!(sig.b_center, b0, "{method}");
                }
            }
        }
    }

    #[test]
    fn pipeline_is_deterministic_and_composable() {
        let cfg = SystemConfig::simulation();
        for seed in [1u64, 2, 3] {
            let inputs = TrialInputs::generate(&cfg, seed).unwrap();
            let a = run_pipeline(&cfg, &inputs, &PipelineOptions::default()).unwrap();
            let b = run_pipeline(&cfg, &inputs, &PipelineOptions::default()).unwrap();
            assert_eq!(a, b);
            let windows: Vec<Window> = a.preamble.signatures.iter().map(|s| s.window).collect();
            assert!(validate_grouping(&a.preamble.assignment, &windows, cfg.omega).is_ok());
            let (_, plan) = a.dl.as_ref().unwrap();
            let reps: Vec<Window> = plan.clusters.iter().map(|c| plan.signatures[c[0]].window).collect();
            assert!(validate_grouping(&plan.cluster_groups, &reps, cfg.omega).is_ok());
            assert!(plan.cluster_groups.g_count() <= a.preamble.assignment.g_count());
        }
    }

    #[test]
    fn unit_ratio_dl_reduces_to_ul() {
        let mut cfg = SystemConfig::simulation();
        cfg.k = 4;
        cfg.angles_deg = vec![-48.59, -14.48, 14.48, 48.59];
        let inputs = TrialInputs::from_channels(TrialInputs::generate(&cfg, 9).unwrap().channels, 9);
        let ch = views(&inputs.channels);
        let pre = run_preamble(&cfg, &ch, &SearchConfig::default(), Arithmetic::Float, GroupingMode::Full, 9).unwrap();
        let ul = run_ul_training(&cfg, &ch, &pre.signatures, &pre.assignment, Arithmetic::Float, 42).unwrap();
        let (dl, plan) =
            run_dl_training(&cfg, &ch, &pre.signatures, 1.0, Arithmetic::Float, GroupingMode::Full, 42).unwrap();
        assert_eq!(plan.assignment, pre.assignment);
        assert_eq!(dl.users.len(), ul.users.len());
        for (a, b) in dl.users.iter().zip(&ul.users) {
            assert!(close(&a.h_est, &b.h_est, 1e-12));
        }
    }

    #[test]
    fn identical_signatures_share_one_pilot_downlink() {
        let mut cfg = noiseless(SystemConfig::simulation());
        cfg.k = 3;
        cfg.angles_deg = vec![14.48];
        let one = model::gen_channel(&cfg, 14.48, 1).unwrap();
        let channels = vec![one.clone(), one.clone(), one];
        let ch = views(&channels);
        let sig = signature::signature(ch[0], cfg.tau, &SearchConfig::default()).unwrap();
        let (dl, plan) =
            run_dl_training(&cfg, &ch, &[sig; 3], 1.0, Arithmetic::Float, GroupingMode::Full, 0).unwrap();
        assert_eq!(plan.clusters, vec![vec![0, 1, 2]]);
        assert_eq!(plan.assignment.g_count(), 1);
        // no intra-cluster interference: each user sees only itself
        let rho = energy_ratio(&rotated_spectrum(ch[0], sig.phi).values, &sig.window).unwrap();
        for u in &dl.users {
            assert!((u.mse() - (1.0 - rho)).abs() < 1e-6);
        }
    }

    #[test]
    fn mse_falls_with_snr() {
        let mut last = f64::INFINITY;
        for snr in [0.0, 10.0, 20.0] {
            let mut cfg = SystemConfig::simulation();
            cfg.snr_db = snr;
            let mut acc = MseAccumulator::default();
            for seed in 0..60 {
                let inputs = TrialInputs::generate(&cfg, seed).unwrap();
                let mut opts = PipelineOptions::default();
                opts.downlink = false;
                let out = run_pipeline(&cfg, &inputs, &opts).unwrap();
                acc.merge(&out.ul[0].accumulator());
            }
            let e = acc.ensemble().unwrap();
            assert!(e < last, "{snr} dB: {e} vs {last}");
            last = e;
        }
    }

    #[test]
    fn fine_fixed_point_matches_float() {
        let cfg = SystemConfig::simulation();
        let inputs = TrialInputs::generate(&cfg, 5).unwrap();
        let mut opts = PipelineOptions::default();
        let float = run_pipeline(&cfg, &inputs, &opts).unwrap();
        opts.arithmetic = "fixed:1,8,30".parse().unwrap();
        let fixed = run_pipeline(&cfg, &inputs, &opts).unwrap();
        // rotations by -pi/M and +pi/M are the same spectrum one bin apart,
        // so rounding may pick the other twin; captured energy must agree
        for (f, x) in float.preamble.signatures.iter().zip(&fixed.preamble.signatures) {
            assert!((f.score - x.score).abs() < 1e-6, "{f:?} vs {x:?}");
            let twin = (f.phi - x.phi).abs() > 1e-12;
            assert!(!twin || (f.phi + x.phi).abs() < 1e-12, "{f:?} vs {x:?}");
            assert!(twin || f.window == x.window, "{f:?} vs {x:?}");
        }
        let ch = views(&inputs.channels);
        let (sigs, groups) = (&float.preamble.signatures, &float.preamble.assignment);
        let ul = |arith| run_ul_training(&cfg, &ch, sigs, groups, arith, 9).unwrap().accumulator().ensemble().unwrap();
        let (a, b) = (ul(Arithmetic::Float), ul(opts.arithmetic));
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}
