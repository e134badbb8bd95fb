//! Bit-accurate `fixed[1,p,q]` arithmetic and the quantized datapath.
//!
//! A value is a signed integer `raw` scaled by `2^-q`, saturated to
//! `|raw| <= 2^(p+q) - 1`. Rounding is to nearest, ties to even. Products are
//! formed at full precision in `i128` and rounded once.
//!
//! The datapath helpers take and return `C64` so the estimation pipeline can
//! dispatch on arithmetic mode; every returned value is exactly representable
//! in the format.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use crate::estimation::{self, Arithmetic, PipelineOptions, PipelineOutput, TrialInputs};
use crate::model::{CMat, SystemConfig};
use crate::spectral::Window;
use crate::{Error, Result, C64};

/// Widest supported word, sign bit included. Keeps every accumulated product
/// and constant multiply inside `i128`.
pub const MAX_WORD_BITS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedFormat {
    pub p: u32,
    pub q: u32,
}

impl FixedFormat {
    pub fn new(p: u32, q: u32) -> Result<Self> {
        if p + q + 1 > MAX_WORD_BITS {
            return Err(Error::Config(format!(
                "fixed[1,{p},{q}] is {} bits wide, at most {MAX_WORD_BITS} supported",
                p + q + 1
            )));
        }
        Ok(Self { p, q })
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.p + self.q)) - 1
    }

    /// Largest representable value, `2^p - 2^-q`.
    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    pub fn lsb(&self) -> f64 {
        1.0 / self.scale()
    }

    fn scale(&self) -> f64 {
        (1u64 << self.q) as f64
    }

    pub fn saturate(&self, v: i128) -> i64 {
        let m = self.max_raw() as i128;
        v.clamp(-m, m) as i64
    }

    /// Raw integer nearest to `x` (ties to even), saturated.
    pub fn quantize(&self, x: f64) -> Result<i64> {
        if x.is_nan() {
            return Err(Error::Domain("cannot quantize NaN".into()));
        }
        let m = self.max_raw() as f64;
        Ok(rint((x * self.scale()).clamp(-m, m)) as i64)
    }

    pub fn to_f64(&self, raw: i64) -> f64 {
        raw as f64 * self.lsb()
    }

    /// `to_f64(quantize(x))`.
    pub fn round_value(&self, x: f64) -> Result<f64> {
        Ok(self.to_f64(self.quantize(x)?))
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1,{},{}", self.p, self.q)
    }
}

impl FromStr for FixedFormat {
    type Err = Error;

    /// Parses `"1,p,q"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("fixed-point format must look like 1,p,q, got {s:?}"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 || parts[0] != "1" {
            return Err(bad());
        }
        let p = parts[1].parse().map_err(|_| bad())?;
        let q = parts[2].parse().map_err(|_| bad())?;
        Self::new(p, q)
    }
}

/// Nearest integer, ties to even, for `|v| <= 2^51` under the default
/// rounding mode.
fn rint(v: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    (v + MAGIC) - MAGIC
}

/// `v / 2^shift` rounded to nearest, ties to even.
pub fn round_shift(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FixedComplex {
    pub re: i64,
    pub im: i64,
}

impl FixedComplex {
    pub const ZERO: Self = Self { re: 0, im: 0 };

    pub fn from_c64(z: C64, fmt: FixedFormat) -> Result<Self> {
        Ok(Self { re: fmt.quantize(z.re)?, im: fmt.quantize(z.im)? })
    }

    pub fn to_c64(self, fmt: FixedFormat) -> C64 {
        C64::new(fmt.to_f64(self.re), fmt.to_f64(self.im))
    }
}

pub fn fx_add(a: i64, b: i64, fmt: FixedFormat) -> i64 {
    fmt.saturate(a as i128 + b as i128)
}

pub fn fx_sub(a: i64, b: i64, fmt: FixedFormat) -> i64 {
    fmt.saturate(a as i128 - b as i128)
}

pub fn fx_mul(a: i64, b: i64, fmt: FixedFormat) -> i64 {
    fmt.saturate(round_shift(a as i128 * b as i128, fmt.q))
}

pub fn fx_cadd(a: FixedComplex, b: FixedComplex, fmt: FixedFormat) -> FixedComplex {
    FixedComplex { re: fx_add(a.re, b.re, fmt), im: fx_add(a.im, b.im, fmt) }
}

pub fn fx_csub(a: FixedComplex, b: FixedComplex, fmt: FixedFormat) -> FixedComplex {
    FixedComplex { re: fx_sub(a.re, b.re, fmt), im: fx_sub(a.im, b.im, fmt) }
}

/// Full-precision real and imaginary parts of `a * b`, at `2q` fractional bits.
fn cmul_wide(a: FixedComplex, b: FixedComplex) -> (i128, i128) {
    let (ar, ai, br, bi) = (a.re as i128, a.im as i128, b.re as i128, b.im as i128);
    (ar * br - ai * bi, ar * bi + ai * br)
}

/// Four real products, two additions, one rounding per component.
pub fn fx_cmul(a: FixedComplex, b: FixedComplex, fmt: FixedFormat) -> FixedComplex {
    let (re, im) = cmul_wide(a, b);
    FixedComplex { re: fmt.saturate(round_shift(re, fmt.q)), im: fmt.saturate(round_shift(im, fmt.q)) }
}

/// A positive real constant held as `mant * 2^-exp` with a 32-bit mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    mant: i128,
    exp: i32,
}

impl Scale {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("scale constant {c} must be positive and finite")));
        }
        let exp = 31 - c.log2().floor() as i32;
        let mant = (c * (exp as f64).exp2()).round() as i128;
        Ok(Self { mant, exp })
    }

    /// `v * c` where `v` carries `frac` fractional bits, rounded to the format.
    pub fn apply(&self, v: i128, frac: u32, fmt: FixedFormat) -> i64 {
        let prod = v.saturating_mul(self.mant);
        let shift = frac as i64 + self.exp as i64 - fmt.q as i64;
        let out = if shift >= 0 {
            round_shift(prod, shift as u32)
        } else {
            prod.saturating_mul(1i128 << (-shift) as u32)
        };
        fmt.saturate(out)
    }

    fn apply_c(&self, v: (i128, i128), frac: u32, fmt: FixedFormat) -> FixedComplex {
        FixedComplex { re: self.apply(v.0, frac, fmt), im: self.apply(v.1, frac, fmt) }
    }
}

pub fn quantize_vec(x: &[C64], fmt: FixedFormat) -> Result<Vec<FixedComplex>> {
    x.iter().map(|&z| FixedComplex::from_c64(z, fmt)).collect()
}

pub fn dequantize_vec(x: &[FixedComplex], fmt: FixedFormat) -> Vec<C64> {
    x.iter().map(|z| z.to_c64(fmt)).collect()
}

/// Quantizes every entry, modelling the receiver ADC.
pub fn quantize_cmat(y: &CMat, fmt: FixedFormat) -> Result<CMat> {
    let mut out = y.clone();
    for z in out.as_mut_slice() {
        *z = FixedComplex::from_c64(*z, fmt)?.to_c64(fmt);
    }
    Ok(out)
}

/// `scale * Y s` as a systolic accumulation: the `L` products are summed at
/// full precision and rounded once after scaling.
pub fn fx_ls(y: &CMat, pilot: &[C64], scale: f64, fmt: FixedFormat) -> Result<Vec<C64>> {
    if pilot.len() != y.cols() {
        return Err(Error::Shape(format!("pilot of length {} for {} columns", pilot.len(), y.cols())));
    }
    let s = quantize_vec(pilot, fmt)?;
    let k = Scale::new(scale)?;
    let mut acc = vec![(0i128, 0i128); y.rows()];
    for (j, sj) in s.iter().enumerate() {
        for (a, &z) in acc.iter_mut().zip(y.col(j)) {
            let (re, im) = cmul_wide(FixedComplex::from_c64(z, fmt)?, *sj);
            *a = (a.0 + re, a.1 + im);
        }
    }
    Ok(acc.into_iter().map(|a| k.apply_c(a, 2 * fmt.q, fmt).to_c64(fmt)).collect())
}

/// Quantized `exp(j phase * i)` for `i` in `0..n`, cached per thread.
fn unit_table(n: usize, phase: f64, fmt: FixedFormat) -> Rc<Vec<FixedComplex>> {
    thread_local! {
        static CACHE: RefCell<HashMap<(usize, u64, u32, u32), Rc<Vec<FixedComplex>>>> = RefCell::new(HashMap::new());
    }
    CACHE.with(|c| {
        let key = (n, phase.to_bits(), fmt.p, fmt.q);
        c.borrow_mut()
            .entry(key)
            .or_insert_with(|| {
                let t = (0..n)
                    .map(|i| {
                        let z = C64::from_polar(1.0, phase * i as f64);
                        FixedComplex::from_c64(z, fmt).unwrap_or_default()
                    })
                    .collect();
                Rc::new(t)
            })
            .clone()
    })
}

fn phasors(m: usize, phi: f64, fmt: FixedFormat) -> Result<Rc<Vec<FixedComplex>>> {
    if !phi.is_finite() {
        return Err(Error::Domain(format!("rotation phase {phi} is not finite")));
    }
    Ok(unit_table(m, phi, fmt))
}

/// Element-wise `exp(j m phi) x_m` with quantized phasors.
pub fn fx_rotate(x: &[FixedComplex], phi: f64, fmt: FixedFormat) -> Result<Vec<FixedComplex>> {
    if phi == 0.0 {
        return Ok(x.to_vec());
    }
    let w = phasors(x.len(), phi, fmt)?;
    Ok(x.iter().zip(w.iter()).map(|(&a, &b)| fx_cmul(a, b, fmt)).collect())
}

/// In-place unitary radix-2 FFT. Twiddles are quantized in the data format
/// and every butterfly output is scaled by `1/sqrt(2)`.
pub fn fx_fft(x: &mut [FixedComplex], fmt: FixedFormat) -> Result<()> {
    let m = x.len();
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::Shape(format!("fixed-point FFT needs a power-of-two length, got {m}")));
    }
    let bits = m.trailing_zeros();
    for i in 0..m {
        let j = if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) };
        if i < j {
            x.swap(i, j);
        }
    }
    let twiddles = unit_table(m / 2, -2.0 * PI / m as f64, fmt);
    let half_root = Scale::new(std::f64::consts::FRAC_1_SQRT_2)?;
    let mut len = 2;
    while len <= m {
        let step = m / len;
        for block in (0..m).step_by(len) {
            for k in 0..len / 2 {
                let a = x[block + k];
                let t = fx_cmul(twiddles[k * step], x[block + k + len / 2], fmt);
                let sum = (a.re as i128 + t.re as i128, a.im as i128 + t.im as i128);
                let diff = (a.re as i128 - t.re as i128, a.im as i128 - t.im as i128);
                x[block + k] = half_root.apply_c(sum, fmt.q, fmt);
                x[block + k + len / 2] = half_root.apply_c(diff, fmt.q, fmt);
            }
        }
        len *= 2;
    }
    Ok(())
}

/// `scale * F Phi(phi) h` in fixed point.
pub fn fx_rotated_spectrum(h: &[C64], phi: f64, scale: f64, fmt: FixedFormat) -> Result<Vec<C64>> {
    let mut x = fx_rotate(&quantize_vec(h, fmt)?, phi, fmt)?;
    fx_fft(&mut x, fmt)?;
    if scale != 1.0 {
        let k = Scale::new(scale)?;
        for z in &mut x {
            *z = k.apply_c((z.re as i128, z.im as i128), fmt.q, fmt);
        }
    }
    Ok(dequantize_vec(&x, fmt))
}

/// `re^2 + im^2` rounded to `q` fractional bits. The result is kept in a
/// widened register and never saturates.
pub fn fx_power(z: FixedComplex, fmt: FixedFormat) -> i128 {
    let (re, im) = (z.re as i128, z.im as i128);
    round_shift(re * re + im * im, fmt.q)
}

pub fn fx_powers(spectrum: &[C64], fmt: FixedFormat) -> Result<Vec<f64>> {
    spectrum
        .iter()
        .map(|&z| Ok(fx_power(FixedComplex::from_c64(z, fmt)?, fmt) as f64 * fmt.lsb()))
        .collect()
}

/// Sparse inverse `Phi(phi)^H [F^H]_{:,B} w`: per output element the `tau`
/// products with quantized unit roots are accumulated exactly, scaled by
/// `1/sqrt(M)` and rounded once, then de-rotated.
pub fn fx_recover(values: &[C64], window: &Window, phi: f64, fmt: FixedFormat) -> Result<Vec<C64>> {
    if values.len() != window.len {
        return Err(Error::Shape(format!("{} values for a {}-bin window", values.len(), window.len)));
    }
    let m = window.m;
    let w = quantize_vec(values, fmt)?;
    let roots = unit_table(m, 2.0 * PI / m as f64, fmt);
    let norm = Scale::new(1.0 / (m as f64).sqrt())?;
    let bins: Vec<usize> = window.indices().collect();
    let spatial: Vec<FixedComplex> = (0..m)
        .map(|i| {
            let mut acc = (0i128, 0i128);
            for (&b, &wb) in bins.iter().zip(&w) {
                let (re, im) = cmul_wide(roots[(i * b) % m], wb);
                acc = (acc.0 + re, acc.1 + im);
            }
            norm.apply_c(acc, 2 * fmt.q, fmt)
        })
        .collect();
    Ok(dequantize_vec(&fx_rotate(&spatial, -phi, fmt)?, fmt))
}

/// Equal-width histogram anchored at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub width: f64,
    /// `(bucket lower edge, count)` for every non-empty bucket, ascending.
    pub buckets: Vec<(f64, usize)>,
}

impl Histogram {
    pub fn from_values(values: &[f64], width: f64) -> Self {
        let mut counts = std::collections::BTreeMap::new();
        for &v in values {
            *counts.entry((v / width).floor() as i64).or_insert(0usize) += 1;
        }
        Self { width, buckets: counts.into_iter().map(|(b, c)| (b as f64 * width, c)).collect() }
    }
}

/// Per-draw maxima of `|h_m|` and of `|h_ro[b]|` over all phases.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeStats {
    pub max_h: Vec<f64>,
    pub max_spectrum: Vec<f64>,
    pub hist_h: Histogram,
    pub hist_spectrum: Histogram,
}

impl MagnitudeStats {
    /// Largest magnitude seen anywhere.
    pub fn overall_max(&self) -> f64 {
        self.max_h.iter().chain(&self.max_spectrum).copied().fold(0.0, f64::max)
    }
}

pub fn magnitude_stats(channels: &[Vec<C64>], phis: &[f64], bucket_width: f64) -> Result<MagnitudeStats> {
    if channels.is_empty() {
        return Err(Error::Config("magnitude statistics need at least one sample".into()));
    }
    let peak = |x: &[C64]| x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_h: Vec<f64> = channels.iter().map(|h| peak(h)).collect();
    let max_spectrum: Vec<f64> = channels
        .iter()
        .map(|h| {
            phis.iter()
                .map(|&phi| peak(&crate::spectral::rotated_spectrum(h, phi).values))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(MagnitudeStats {
        hist_h: Histogram::from_values(&max_h, bucket_width),
        hist_spectrum: Histogram::from_values(&max_spectrum, bucket_width),
        max_h,
        max_spectrum,
    })
}

/// Runs the whole pipeline with every stored signal in `fmt`.
pub fn run_quantized(
    config: &SystemConfig,
    inputs: &TrialInputs,
    opts: &PipelineOptions,
    fmt: FixedFormat,
) -> Result<PipelineOutput> {
    let opts = PipelineOptions { arithmetic: Arithmetic::Fixed(fmt), ..opts.clone() };
    estimation::run_pipeline(config, inputs, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dft, rotated_spectrum};
    use proptest::prelude::*;

    fn f(p: u32, q: u32) -> FixedFormat {
        FixedFormat::new(p, q).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let fmt = f(8, 6);
        assert_eq!(fmt.round_value(1.5).unwrap(), 1.5);
        assert_eq!(fmt.quantize(1.5).unwrap(), 96);
        assert_eq!(fmt.round_value(1.0 / 3.0).unwrap(), 21.0 / 64.0);
        assert_eq!(fmt.round_value(300.0).unwrap(), 255.984375);
        assert_eq!(fmt.round_value(-300.0).unwrap(), -255.984375);
        assert_eq!(fmt.round_value(f64::INFINITY).unwrap(), 255.984375);
        assert!(matches!(fmt.quantize(f64::NAN), Err(Error::Domain(_))));
        // ties to even
        assert_eq!(fmt.quantize(0.5 / 64.0).unwrap(), 0);
        assert_eq!(fmt.quantize(1.5 / 64.0).unwrap(), 2);
        assert_eq!(fmt.quantize(-0.5 / 64.0).unwrap(), 0);
        assert_eq!(fmt.quantize(-1.5 / 64.0).unwrap(), -2);
    }

    #[test]
    fn half_lsb_product_rounds_to_zero() {
        let fmt = f(8, 6);
        let half = fmt.quantize(0.5).unwrap();
        let lsb = fmt.quantize(0.015625).unwrap();
        assert_eq!(fx_mul(half, lsb, fmt), 0);
        let three_halves = fmt.quantize(1.5).unwrap();
        assert_eq!(fx_mul(three_halves, lsb, fmt), 2);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("1,8,6".parse::<FixedFormat>().unwrap(), f(8, 6));
        assert_eq!(" 1, 8 ,30".parse::<FixedFormat>().unwrap(), f(8, 30));
        assert_eq!(f(8, 5).to_string(), "1,8,5");
        for bad in ["2,8,6", "1,8", "1,x,6", "1,20,30", ""] {
            assert!(bad.parse::<FixedFormat>().unwrap_err().is_config(), "{bad}");
        }
    }

    #[test]
    fn round_shift_matches_float_rounding() {
        for v in -300i128..300 {
            for s in 0..5u32 {
                let want = (v as f64 / (1u32 << s) as f64).round_ties_even() as i128;
                assert_eq!(round_shift(v, s), want, "{v} >> {s}");
            }
        }
    }

    #[test]
    fn scale_constants_round_once() {
        let fmt = f(8, 6);
        let k = Scale::new(0.5).unwrap();
        assert_eq!(k.apply(3, 6, fmt), 2);
        assert_eq!(k.apply(5, 6, fmt), 2);
        assert_eq!(k.apply(100, 12, fmt), 1);
        let big = Scale::new(1000.0).unwrap();
        assert_eq!(big.apply(64, 6, fmt), fmt.max_raw());
        assert!(Scale::new(0.0).is_err());
    }

    proptest! {
        #[test]
        fn add_and_mul_identities(a in -16383i64..=16383, b in -16383i64..=16383) {
            let fmt = f(8, 6);
            let one = fmt.quantize(1.0).unwrap();
            prop_assert_eq!(fx_add(a, 0, fmt), a);
            prop_assert_eq!(fx_mul(a, one, fmt), a);
            prop_assert_eq!(fx_add(a, b, fmt), fx_add(b, a, fmt));
            prop_assert_eq!(fx_mul(a, b, fmt), fx_mul(b, a, fmt));
            let x = FixedComplex { re: a, im: b };
            let y = FixedComplex { re: b, im: -a / 3 };
            prop_assert_eq!(fx_cmul(x, y, fmt), fx_cmul(y, x, fmt));
            prop_assert_eq!(fx_cmul(x, FixedComplex { re: one, im: 0 }, fmt), x);
            prop_assert!(fx_mul(a, b, fmt).abs() <= fmt.max_raw());
        }

        #[test]
        fn cmul_rounds_once(ar in -500i64..500, ai in -500i64..500, br in -500i64..500, bi in -500i64..500) {
            let fmt = f(8, 6);
            let z = fx_cmul(FixedComplex { re: ar, im: ai }, FixedComplex { re: br, im: bi }, fmt);
            let exact_re = (ar * br - ai * bi) as f64 / 64.0;
            let exact_im = (ar * bi + ai * br) as f64 / 64.0;
            prop_assert_eq!(z.re, fmt.saturate(exact_re.round_ties_even() as i128));
            prop_assert_eq!(z.im, fmt.saturate(exact_im.round_ties_even() as i128));
        }
    }

    fn sample(m: usize, seed: u64) -> Vec<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect()
    }

    #[test]
    fn fixed_fft_tracks_float() {
        for (q, tol) in [(6u32, 0.2), (12, 4e-3), (30, 1e-7)] {
            let fmt = f(8, q);
            let h = sample(128, 7);
            let hq: Vec<C64> = h.iter().map(|z| FixedComplex::from_c64(*z, fmt).unwrap().to_c64(fmt)).collect();
            let got = fx_rotated_spectrum(&hq, 0.0, 1.0, fmt).unwrap();
            let want = dft(&hq);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < tol, "q={q}: {err}");
            let e_in: f64 = hq.iter().map(|z| z.norm_sqr()).sum();
            let e_out: f64 = got.iter().map(|z| z.norm_sqr()).sum();
            assert!((e_out - e_in).abs() / e_in < 128.0 * fmt.lsb(), "q={q}");
        }
    }

    #[test]
    fn fixed_rotation_and_scale_track_float() {
        let fmt = f(8, 30);
        let h = sample(64, 3);
        let phi = PI / 64.0;
        let got = fx_rotated_spectrum(&h, phi, 0.5, fmt).unwrap();
        let want: Vec<C64> = rotated_spectrum(&h, phi).values.iter().map(|z| z * 0.5).collect();
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-7));
    }

    #[test]
    fn fixed_recover_tracks_float() {
        let fmt = f(8, 30);
        let w = Window::new(120, 16, 128).unwrap();
        let vals = sample(16, 5);
        let idx: Vec<usize> = w.indices().collect();
        let want = crate::spectral::idft_sparse(&vals, &idx, 0.02, 128).unwrap();
        let got = fx_recover(&vals, &w, 0.02, fmt).unwrap();
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-7));
    }

    #[test]
    fn fixed_ls_tracks_float() {
        let fmt = f(8, 30);
        let s = crate::model::gen_training_matrix(8, 4, 1.0).unwrap();
        let h = sample(16, 9);
        let mut y = crate::model::awgn(16, 8, 0.1, 4);
        y.add_outer_conj(&h, s.pilot(2));
        let got = fx_ls(&y, s.pilot(2), 1.0 / 8.0, fmt).unwrap();
        let want: Vec<C64> = y.mul_vec(s.pilot(2)).iter().map(|z| z / 8.0).collect();
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-7));
    }

    #[test]
    fn powers_do_not_saturate() {
        let fmt = f(8, 6);
        let p = fx_powers(&[C64::new(200.0, 200.0), C64::new(0.5, 0.0)], fmt).unwrap();
        assert_eq!(p, vec![80000.0, 0.25]);
    }

    #[test]
    fn constant_samples_fill_one_bucket() {
        let h = vec![vec![C64::new(1.0, 0.0); 8]; 5];
        let s = magnitude_stats(&h, &[0.0], 1.0).unwrap();
        assert_eq!(s.hist_h.buckets, vec![(1.0, 5)]);
        assert_eq!(s.hist_spectrum.buckets.len(), 1);
        assert!((s.overall_max() - 8f64.sqrt()).abs() < 1e-12);
        assert!(magnitude_stats(&[], &[0.0], 1.0).is_err());
    }
}
