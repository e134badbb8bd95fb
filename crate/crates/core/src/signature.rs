//! Spatial-signature search.
//!
//! A signature is a rotation phase `phi` from a finite grid in `[-pi/M, pi/M]`
//! plus a window of `tau` cyclically contiguous DFT bins. [`select_exact`]
//! maximises the in-window energy ratio over every (phi, window) pair; the
//! three approximations trade accuracy for comparator-only hardware:
//!
//! * `max1` keeps the phase with the largest single bin and centres on it;
//! * `max2` scores the two largest bins and centres between them;
//! * `max3` centres on the largest bin and scores the whole window energy.
//!
//! Ties are resolved by the smallest phase-grid index, then the smallest
//! window start (or bin index). Scores within a relative `1e-12` of the
//! maximum count as ties.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::spectral::{rotated_spectrum, Window};
use crate::{Error, Result, C64};

/// Relative slack under which two scores count as tied.
pub const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SearchMethod {
    Exact,
    Max1,
    Max2,
    Max3,
}

impl SearchMethod {
    pub const ALL: [SearchMethod; 4] = [Self::Exact, Self::Max1, Self::Max2, Self::Max3];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Max1 => "max1",
            Self::Max2 => "max2",
            Self::Max3 => "max3",
        }
    }
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Self::Exact),
            "max1" => Ok(Self::Max1),
            "max2" => Ok(Self::Max2),
            "max3" => Ok(Self::Max3),
            other => Err(Error::Config(format!("unknown method `{other}` (exact|max1|max2|max3)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub n_grid: usize,
    pub method: SearchMethod,
}

impl SearchConfig {
    pub fn new(n_grid: usize, method: SearchMethod) -> Result<Self> {
        if n_grid == 0 || n_grid % 2 == 0 {
            return Err(Error::Config(format!("n_grid = {n_grid} must be odd and positive")));
        }
        Ok(Self { n_grid, method })
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { n_grid: 3, method: SearchMethod::Exact }
    }
}

/// `n_grid` equally spaced phases spanning `[-pi/M, pi/M]`; `{0}` for one point.
pub fn phi_grid(n_grid: usize, m: usize) -> Vec<f64> {
    if n_grid <= 1 {
        return vec![0.0; n_grid];
    }
    let step = PI / m as f64 / (n_grid - 1) as f64;
    // integer numerator keeps the grid exactly symmetric
    (0..n_grid)
        .map(|i| (2 * i as i64 - (n_grid as i64 - 1)) as f64 * step)
        .collect()
}

/// Bin powers `|h_ro[b]|^2` of a channel for every phase on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    pub m: usize,
    pub phis: Vec<f64>,
    pub powers: Vec<Vec<f64>>,
}

impl PowerGrid {
    pub fn from_channel(h: &[C64], phis: &[f64]) -> Self {
        let powers = phis.iter().map(|&phi| rotated_spectrum(h, phi).powers()).collect();
        Self { m: h.len(), phis: phis.to_vec(), powers }
    }

    pub fn from_powers(phis: Vec<f64>, powers: Vec<Vec<f64>>) -> Result<Self> {
        let m = powers.first().map_or(0, |p| p.len());
        if phis.is_empty() || phis.len() != powers.len() || powers.iter().any(|p| p.len() != m) || m == 0 {
            return Err(Error::Shape("power grid rows disagree with the phase grid".into()));
        }
        Ok(Self { m, phis, powers })
    }

    fn totals(&self) -> Result<Vec<f64>> {
        let totals: Vec<f64> = self.powers.iter().map(|p| p.iter().sum()).collect();
        if totals.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Degenerate("channel spectrum has zero energy".into()));
        }
        Ok(totals)
    }

    fn check_tau(&self, tau: usize) -> Result<()> {
        if tau == 0 || tau > self.m {
            return Err(Error::Domain(format!("tau = {tau} must lie in [1, M = {}]", self.m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialSignature {
    pub phi: f64,
    pub phi_index: usize,
    pub window: Window,
    pub b_center: usize,
    /// Objective value of the selecting method: energy ratio (exact), top
    /// power (max1), top-two power (max2) or window energy (max3).
    pub score: f64,
}

impl SpatialSignature {
    fn new(phi: f64, phi_index: usize, window: Window, score: f64) -> Self {
        Self { phi, phi_index, window, b_center: window.center(), score }
    }
}

/// Index of the first entry within the tie slack of the maximum.
fn first_max(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = max - TIE_RTOL * max.abs();
    values.iter().position(|&v| v >= floor).unwrap_or(0)
}

/// Index of the largest entry other than `skip`, ties to the lowest index.
fn first_max_except(values: &[f64], skip: usize) -> usize {
    let max = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = max - TIE_RTOL * max.abs();
    values
        .iter()
        .enumerate()
        .position(|(i, &v)| i != skip && v >= floor)
        .unwrap_or(0)
}

/// Exhaustive sliding-window search maximising the in-window energy ratio.
///
/// Window sums are screened with an `O(M)` running sum per phase; the
/// near-maximal candidates are then re-summed in window order so the final
/// choice does not depend on running-sum rounding.
pub fn select_exact(grid: &PowerGrid, tau: usize) -> Result<SpatialSignature> {
    grid.check_tau(tau)?;
    let totals = grid.totals()?;
    let m = grid.m;
    let mut approx = Vec::with_capacity(grid.phis.len() * m);
    for (p, total) in grid.powers.iter().zip(&totals) {
        let mut sum: f64 = p[..tau].iter().sum();
        for start in 0..m {
            approx.push(sum / total);
            sum += p[(start + tau) % m] - p[start];
        }
    }
    let amax = approx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let screen = amax - 1e-9 * amax.abs();
    let candidates: Vec<(usize, usize, f64)> = approx
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a >= screen)
        .map(|(i, _)| {
            let (pi, start) = (i / m, i % m);
            let w = Window { start, len: tau, m };
            (pi, start, w.energy(&grid.powers[pi]) / totals[pi])
        })
        .collect();
    let scores: Vec<f64> = candidates.iter().map(|c| c.2).collect();
    let (pi, start, score) = candidates[first_max(&scores)];
    Ok(SpatialSignature::new(grid.phis[pi], pi, Window::new(start, tau, m)?, score))
}

pub fn select_max1(grid: &PowerGrid, tau: usize) -> Result<SpatialSignature> {
    grid.check_tau(tau)?;
    grid.totals()?;
    let peaks: Vec<usize> = grid.powers.iter().map(|p| first_max(p)).collect();
    let scores: Vec<f64> = peaks.iter().zip(&grid.powers).map(|(&b, p)| p[b]).collect();
    let pi = first_max(&scores);
    let w = Window::centered(peaks[pi], tau, grid.m)?;
    Ok(SpatialSignature::new(grid.phis[pi], pi, w, scores[pi]))
}

/// Rounded-down midpoint of two bins along the shorter arc between them.
/// Antipodal pairs take the arc starting at the lower index.
pub fn cyclic_midpoint(a: usize, b: usize, m: usize) -> usize {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let d = hi - lo;
    if 2 * d <= m {
        lo + d / 2
    } else {
        (hi + (m - d) / 2) % m
    }
}

pub fn select_max2(grid: &PowerGrid, tau: usize) -> Result<SpatialSignature> {
    grid.check_tau(tau)?;
    grid.totals()?;
    let mut centers = Vec::with_capacity(grid.phis.len());
    let mut scores = Vec::with_capacity(grid.phis.len());
    for p in &grid.powers {
        let top1 = first_max(p);
        if grid.m == 1 {
            centers.push(top1);
            scores.push(p[top1]);
            continue;
        }
        let top2 = first_max_except(p, top1);
        // a lone nonzero bin has no second peak to average with
        let center = if p[top2] > TIE_RTOL * p[top1] { cyclic_midpoint(top1, top2, grid.m) } else { top1 };
        centers.push(center);
        scores.push(p[top1] + p[top2]);
    }
    let pi = first_max(&scores);
    let w = Window::centered(centers[pi], tau, grid.m)?;
    Ok(SpatialSignature::new(grid.phis[pi], pi, w, scores[pi]))
}

pub fn select_max3(grid: &PowerGrid, tau: usize) -> Result<SpatialSignature> {
    grid.check_tau(tau)?;
    grid.totals()?;
    let windows = grid
        .powers
        .iter()
        .map(|p| Window::centered(first_max(p), tau, grid.m))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = windows.iter().zip(&grid.powers).map(|(w, p)| w.energy(p)).collect();
    let pi = first_max(&scores);
    Ok(SpatialSignature::new(grid.phis[pi], pi, windows[pi], scores[pi]))
}

pub fn select(grid: &PowerGrid, tau: usize, method: SearchMethod) -> Result<SpatialSignature> {
    match method {
        SearchMethod::Exact => select_exact(grid, tau),
        SearchMethod::Max1 => select_max1(grid, tau),
        SearchMethod::Max2 => select_max2(grid, tau),
        SearchMethod::Max3 => select_max3(grid, tau),
    }
}

/// Signature of `h` under `search`, computing the rotated spectra in floating point.
pub fn signature(h: &[C64], tau: usize, search: &SearchConfig) -> Result<SpatialSignature> {
    let grid = PowerGrid::from_channel(h, &phi_grid(search.n_grid, h.len()));
    select(&grid, tau, search.method)
}

pub fn signature_exact(h: &[C64], tau: usize, search: &SearchConfig) -> Result<SpatialSignature> {
    signature(h, tau, &SearchConfig { method: SearchMethod::Exact, ..*search })
}

pub fn signature_max1(h: &[C64], tau: usize, search: &SearchConfig) -> Result<SpatialSignature> {
    signature(h, tau, &SearchConfig { method: SearchMethod::Max1, ..*search })
}

pub fn signature_max2(h: &[C64], tau: usize, search: &SearchConfig) -> Result<SpatialSignature> {
    signature(h, tau, &SearchConfig { method: SearchMethod::Max2, ..*search })
}

pub fn signature_max3(h: &[C64], tau: usize, search: &SearchConfig) -> Result<SpatialSignature> {
    signature(h, tau, &SearchConfig { method: SearchMethod::Max3, ..*search })
}

/// Fraction of spectral energy inside `window`.
pub fn energy_ratio(spectrum: &[C64], window: &Window) -> Result<f64> {
    let powers: Vec<f64> = spectrum.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = powers.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("spectrum has zero energy".into()));
    }
    Ok(window.energy(&powers) / total)
}

/// Downlink bin span `[floor(r q_min), ceil(r q_max)]` of an uplink window,
/// with `r = lambda_ul / lambda_dl`. Bins at or above `M/2` are read as
/// negative spatial frequencies.
pub fn reciprocity_span(window: &Window, lambda_ratio: f64) -> (i64, i64) {
    let m = window.m as i64;
    let mut q_min = window.start as i64;
    if 2 * q_min >= m {
        q_min -= m;
    }
    let q_max = q_min + window.len as i64 - 1;
    (
        (lambda_ratio * q_min as f64).floor() as i64,
        (lambda_ratio * q_max as f64).ceil() as i64,
    )
}

/// Maps an uplink signature to the downlink wavelength. The downlink span is
/// re-centred to `tau` bins and the phase scaled by the same ratio.
pub fn reciprocity_map(sig: &SpatialSignature, lambda_ratio: f64) -> Result<SpatialSignature> {
    let w = sig.window;
    let (lo, hi) = reciprocity_span(&w, lambda_ratio);
    let center = (lo + hi + 1).div_euclid(2);
    let start = (center - (w.len / 2) as i64).rem_euclid(w.m as i64) as usize;
    let window = Window::new(start, w.len, w.m)?;
    let limit = PI / w.m as f64;
    let phi = (lambda_ratio * sig.phi).clamp(-limit, limit);
    Ok(SpatialSignature { phi, phi_index: sig.phi_index, window, b_center: window.center(), score: sig.score })
}
