//! Scenario configuration, finite-scattering channel generation, orthogonal
//! training sequences and received-signal synthesis.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grouping::GroupAssignment;
use crate::rng::rng_from_seed;
use crate::{Error, Result, C64};

/// Scenario parameters shared by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of base-station antennas `M` (power of two).
    pub m: usize,
    /// Number of users `K`.
    pub k: usize,
    /// Training sequence length `L`.
    pub l: usize,
    /// Signature size and number of orthogonal pilots the base station handles.
    pub tau: usize,
    /// Element spacing in uplink wavelengths.
    pub d_over_lambda_ul: f64,
    /// Uplink over downlink wavelength.
    pub lambda_ratio: f64,
    /// Pilot symbol power.
    pub sigma_p2: f64,
    /// Training SNR, `10 log10(sigma_p2 / noise_var)`. `inf` disables noise.
    pub snr_db: f64,
    /// Guard interval in DFT bins.
    pub omega: usize,
    /// Rays per user.
    pub p_rays: usize,
    /// Half angular spread in degrees; rays fall in `theta +- delta`.
    pub delta_theta_deg: f64,
    /// Per-user uplink training energy. `None` means `d_k = 1` for every user.
    pub ut_power: Option<Vec<f64>>,
    /// Nominal user directions in degrees; user `k` uses `angles_deg[k % len]`.
    pub angles_deg: Vec<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::simulation()
    }
}

impl SystemConfig {
    /// The simulation scenario: 128 antennas, 32 users, 16-bin signatures.
    pub fn simulation() -> Self {
        Self {
            m: 128,
            k: 32,
            l: 64,
            tau: 16,
            d_over_lambda_ul: 0.5,
            lambda_ratio: 1.0,
            sigma_p2: 1.0,
            snr_db: 10.0,
            omega: 2,
            p_rays: 100,
            delta_theta_deg: 2.0,
            ut_power: None,
            angles_deg: vec![-48.59, -14.48, 14.48, 48.59],
        }
    }

    /// The hardware prototype scenario: 128 antennas, 16 users, 4 pilots.
    pub fn fpga() -> Self {
        Self {
            k: 16,
            l: 4,
            tau: 4,
            ..Self::simulation()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.m == 0 || !self.m.is_power_of_two() {
            return err(format!("M = {} must be a positive power of two", self.m));
        }
        if self.tau == 0 || self.tau > self.m {
            return err(format!("tau = {} must satisfy 1 <= tau <= M = {}", self.tau, self.m));
        }
        if self.l < self.tau {
            return err(format!("L = {} must be at least tau = {}", self.l, self.tau));
        }
        if self.k == 0 {
            return err("K must be at least 1".into());
        }
        if !(self.d_over_lambda_ul > 0.0 && self.d_over_lambda_ul <= 0.5) {
            return err(format!("d_over_lambda_ul = {} must lie in (0, 0.5]", self.d_over_lambda_ul));
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio.is_finite()) {
            return err(format!("lambda_ratio = {} must be positive", self.lambda_ratio));
        }
        if !(self.sigma_p2 > 0.0 && self.sigma_p2.is_finite()) {
            return err(format!("sigma_p2 = {} must be positive", self.sigma_p2));
        }
        if self.snr_db.is_nan() {
            return err("snr_db is NaN".into());
        }
        if self.p_rays == 0 {
            return err("P_rays must be at least 1".into());
        }
        if !(self.delta_theta_deg >= 0.0 && self.delta_theta_deg.is_finite()) {
            return err(format!("delta_theta_deg = {} must be nonnegative", self.delta_theta_deg));
        }
        if self.angles_deg.is_empty() {
            return err("angles_deg must list at least one direction".into());
        }
        for &a in &self.angles_deg {
            if !((a - self.delta_theta_deg) > -90.0 && (a + self.delta_theta_deg) < 90.0) {
                return err(format!(
                    "angle {a} +- {} leaves (-90, 90) degrees",
                    self.delta_theta_deg
                ));
            }
        }
        if let Some(p) = &self.ut_power {
            if p.len() != 1 && p.len() != self.k {
                return err(format!("ut_power lists {} values, expected 1 or K = {}", p.len(), self.k));
            }
            if p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return err("ut_power values must be positive".into());
            }
        }
        Ok(())
    }

    /// Per-element noise variance implied by `snr_db` and `sigma_p2`.
    pub fn noise_var(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            self.sigma_p2 / 10f64.powf(self.snr_db / 10.0)
        }
    }

    /// Nominal direction of user `k` in degrees.
    pub fn user_angle(&self, k: usize) -> f64 {
        self.angles_deg[k % self.angles_deg.len()]
    }

    /// Element spacing in downlink wavelengths.
    pub fn d_over_lambda_dl(&self) -> f64 {
        self.d_over_lambda_ul * self.lambda_ratio
    }

    pub fn power_scaling(&self) -> PowerScaling {
        let d = match &self.ut_power {
            None => vec![1.0; self.k],
            Some(p) => (0..self.k)
                .map(|k| p[if p.len() == 1 { 0 } else { k }] / (self.l as f64 * self.sigma_p2))
                .collect(),
        };
        PowerScaling { d }
    }

    /// Parses the plain-text `key = value` format. `#` starts a comment;
    /// unknown and repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::simulation();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), lineno).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
        }
        fn list(key: &str, v: &str) -> std::result::Result<Vec<f64>, String> {
            v.split(',').map(|s| num::<f64>(key, s.trim())).collect()
        }
        match key {
            "M" => self.m = num(key, value)?,
            "K" => self.k = num(key, value)?,
            "L" => self.l = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "d_over_lambda_ul" => self.d_over_lambda_ul = num(key, value)?,
            "lambda_ratio" => self.lambda_ratio = num(key, value)?,
            "sigma_p2" => self.sigma_p2 = num(key, value)?,
            "snr_db" => self.snr_db = num(key, value)?,
            "omega" => self.omega = num(key, value)?,
            "P_rays" => self.p_rays = num(key, value)?,
            "delta_theta_deg" => self.delta_theta_deg = num(key, value)?,
            "ut_power" => self.ut_power = Some(list(key, value)?),
            "angles_deg" => self.angles_deg = list(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

impl fmt::Display for SystemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        writeln!(f, "M = {}", self.m)?;
        writeln!(f, "K = {}", self.k)?;
        writeln!(f, "L = {}", self.l)?;
        writeln!(f, "tau = {}", self.tau)?;
        writeln!(f, "d_over_lambda_ul = {}", self.d_over_lambda_ul)?;
        writeln!(f, "lambda_ratio = {}", self.lambda_ratio)?;
        writeln!(f, "sigma_p2 = {}", self.sigma_p2)?;
        writeln!(f, "snr_db = {}", self.snr_db)?;
        writeln!(f, "omega = {}", self.omega)?;
        writeln!(f, "P_rays = {}", self.p_rays)?;
        writeln!(f, "delta_theta_deg = {}", self.delta_theta_deg)?;
        if let Some(p) = &self.ut_power {
            writeln!(f, "ut_power = {}", join(p))?;
        }
        writeln!(f, "angles_deg = {}", join(&self.angles_deg))
    }
}

/// Per-user amplitude scalars `d_k = P_k / (L sigma_p2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerScaling {
    pub d: Vec<f64>,
}

/// Dense complex matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.rows + i]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Adds the rank-one term `u v^H`.
    pub fn add_outer_conj(&mut self, u: &[C64], v: &[C64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (j, vj) in v.iter().enumerate() {
            let c = vj.conj();
            for (y, x) in self.col_mut(j).iter_mut().zip(u) {
                *y += x * c;
            }
        }
    }

    /// Matrix-vector product `self * v`.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for (j, vj) in v.iter().enumerate() {
            for (o, y) in out.iter_mut().zip(self.col(j)) {
                *o += y * vj;
            }
        }
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn add_assign(&mut self, other: &CMat) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}

/// Uniform-linear-array response `a(theta)` with element spacing `d_over_lambda`.
pub fn array_manifold(theta_deg: f64, m: usize, d_over_lambda: f64) -> Result<Vec<C64>> {
    if !(theta_deg.abs() < 90.0) {
        return Err(Error::Domain(format!("theta = {theta_deg} outside (-90, 90) degrees")));
    }
    let phase = 2.0 * PI * d_over_lambda * theta_deg.to_radians().sin();
    Ok((0..m).map(|i| C64::from_polar(1.0, phase * i as f64)).collect())
}

/// One user's ray set and the resulting channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub theta_center: f64,
    pub ray_angles: Vec<f64>,
    pub ray_gains: Vec<C64>,
    pub d_over_lambda: f64,
    pub h: Vec<C64>,
}

impl UserChannel {
    /// Builds `h = (1/sqrt(P)) sum_p alpha_p a(theta_p)` from a ray set.
    pub fn from_rays(
        theta_center: f64,
        ray_angles: Vec<f64>,
        ray_gains: Vec<C64>,
        m: usize,
        d_over_lambda: f64,
    ) -> Result<Self> {
        if ray_angles.len() != ray_gains.len() || ray_angles.is_empty() {
            return Err(Error::Shape(format!(
                "{} ray angles vs {} gains",
                ray_angles.len(),
                ray_gains.len()
            )));
        }
        let norm = 1.0 / (ray_angles.len() as f64).sqrt();
        let mut h = vec![C64::new(0.0, 0.0); m];
        for (&theta, &g) in ray_angles.iter().zip(&ray_gains) {
            if !(theta.abs() < 90.0) {
                return Err(Error::Domain(format!("ray angle {theta} outside (-90, 90)")));
            }
            // phasor recurrence; stays within ~1e-14 of the direct manifold for M <= 1024
            let step = C64::from_polar(1.0, 2.0 * PI * d_over_lambda * theta.to_radians().sin());
            let mut cur = g * norm;
            for x in h.iter_mut() {
                *x += cur;
                cur *= step;
            }
        }
        Ok(Self { theta_center, ray_angles, ray_gains, d_over_lambda, h })
    }

    /// Recomputes `h` from the stored rays through [`array_manifold`].
    pub fn rebuild(&self) -> Result<Vec<C64>> {
        let m = self.h.len();
        let norm = 1.0 / (self.ray_angles.len() as f64).sqrt();
        let mut h = vec![C64::new(0.0, 0.0); m];
        for (&theta, &g) in self.ray_angles.iter().zip(&self.ray_gains) {
            let a = array_manifold(theta, m, self.d_over_lambda)?;
            for (x, ai) in h.iter_mut().zip(a) {
                *x += g * norm * ai;
            }
        }
        Ok(h)
    }

    pub fn energy(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Draws a circular complex Gaussian sample with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Draws a user channel: `P` rays uniform in `theta_center +- delta_theta`,
/// i.i.d. CN(0, 1) gains.
pub fn gen_channel(config: &SystemConfig, theta_center: f64, seed: u64) -> Result<UserChannel> {
    let delta = config.delta_theta_deg;
    if !((theta_center - delta) > -90.0 && (theta_center + delta) < 90.0) {
        return Err(Error::Domain(format!(
            "theta_center {theta_center} +- {delta} leaves (-90, 90) degrees"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut angles = Vec::with_capacity(config.p_rays);
    let mut gains = Vec::with_capacity(config.p_rays);
    for _ in 0..config.p_rays {
        let u: f64 = rng.random();
        angles.push(theta_center - delta + 2.0 * delta * u);
        gains.push(complex_gaussian(&mut rng, 1.0));
    }
    UserChannel::from_rays(theta_center, angles, gains, config.m, config.d_over_lambda_ul)
}

/// Downlink counterpart of an uplink channel: the same ray directions seen at
/// the downlink wavelength, with fresh CN(0, 1) gains.
pub fn gen_channel_dl(config: &SystemConfig, ul: &UserChannel, seed: u64) -> Result<UserChannel> {
    let mut rng = rng_from_seed(seed);
    let gains = (0..ul.ray_angles.len()).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    UserChannel::from_rays(
        ul.theta_center,
        ul.ray_angles.clone(),
        gains,
        ul.h.len(),
        config.d_over_lambda_dl(),
    )
}

/// `tau` orthogonal pilot columns of length `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    l: usize,
    sigma_p2: f64,
    columns: Vec<Vec<C64>>,
}

impl TrainingMatrix {
    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    pub fn count(&self) -> usize {
        self.columns.len()
    }

    pub fn sigma_p2(&self) -> f64 {
        self.sigma_p2
    }

    pub fn pilot(&self, i: usize) -> &[C64] {
        &self.columns[i]
    }

    /// `s_i^H s_j`.
    pub fn inner(&self, i: usize, j: usize) -> C64 {
        self.columns[i].iter().zip(&self.columns[j]).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Takes the first `tau` columns of the `L x L` DFT matrix, scaled so that
/// every pilot carries energy `L sigma_p2`.
pub fn gen_training_matrix(l: usize, tau: usize, sigma_p2: f64) -> Result<TrainingMatrix> {
    if tau > l {
        return Err(Error::Config(format!("{tau} orthogonal pilots need L >= {tau}, got L = {l}")));
    }
    if !(sigma_p2 > 0.0) {
        return Err(Error::Config(format!("sigma_p2 = {sigma_p2} must be positive")));
    }
    let amp = sigma_p2.sqrt();
    let columns = (0..tau)
        .map(|i| {
            (0..l)
                .map(|n| C64::from_polar(amp, 2.0 * PI * ((n * i) % l) as f64 / l as f64))
                .collect()
        })
        .collect();
    Ok(TrainingMatrix { l, sigma_p2, columns })
}

/// An `rows x cols` matrix of i.i.d. CN(0, noise_var) samples.
pub fn awgn(rows: usize, cols: usize, noise_var: f64, seed: u64) -> CMat {
    let mut out = CMat::zeros(rows, cols);
    if noise_var > 0.0 {
        let mut rng = rng_from_seed(seed);
        for z in out.as_mut_slice() {
            *z = complex_gaussian(&mut rng, noise_var);
        }
    }
    out
}

/// Preamble receive for one block: channel `i` transmits pilot `i`.
///
/// `Y = sum_i sqrt(d_i) h_i s_i^H + N`.
pub fn received_preamble(
    channels: &[&[C64]],
    s: &TrainingMatrix,
    d: &[f64],
    noise_var: f64,
    seed: u64,
) -> Result<CMat> {
    if channels.is_empty() || channels.len() > s.count() {
        return Err(Error::Shape(format!(
            "{} channels for {} pilots",
            channels.len(),
            s.count()
        )));
    }
    if d.len() != channels.len() {
        return Err(Error::Shape(format!("{} scalars for {} channels", d.len(), channels.len())));
    }
    let m = channels[0].len();
    if channels.iter().any(|h| h.len() != m) {
        return Err(Error::Shape("channel vectors differ in length".into()));
    }
    let mut y = awgn(m, s.len(), noise_var, seed);
    for (i, (h, &di)) in channels.iter().zip(d).enumerate() {
        let u: Vec<C64> = h.iter().map(|x| x * di.sqrt()).collect();
        y.add_outer_conj(&u, s.pilot(i));
    }
    Ok(y)
}

/// Uplink training receive: every member of group `g` transmits pilot `g`.
///
/// `Y = sum_g sum_{k in U_g} sqrt(d_k) h_k s_g^H + N`.
pub fn received_ul(
    assignment: &GroupAssignment,
    channels: &[&[C64]],
    s: &TrainingMatrix,
    d: &[f64],
    noise_var: f64,
    seed: u64,
) -> Result<CMat> {
    assignment.check_covers(channels.len())?;
    if d.len() != channels.len() {
        return Err(Error::Shape(format!("{} scalars for {} channels", d.len(), channels.len())));
    }
    if assignment.g_count() > s.count() {
        return Err(Error::Shape(format!(
            "{} groups but only {} orthogonal pilots",
            assignment.g_count(),
            s.count()
        )));
    }
    let m = channels.first().map_or(0, |h| h.len());
    if channels.iter().any(|h| h.len() != m) {
        return Err(Error::Shape("channel vectors differ in length".into()));
    }
    let mut y = awgn(m, s.len(), noise_var, seed);
    for (g, members) in assignment.groups.iter().enumerate() {
        let mut u = vec![C64::new(0.0, 0.0); m];
        for &k in members {
            let a = d[k].sqrt();
            for (ui, hi) in u.iter_mut().zip(channels[k]) {
                *ui += hi * a;
            }
        }
        y.add_outer_conj(&u, s.pilot(g));
    }
    Ok(y)
}
