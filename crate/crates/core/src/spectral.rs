//! Unitary DFT/IDFT, phase rotation, peak prediction and windowed sparse
//! reconstruction.
//!
//! All transforms use the unitary convention
//! `X[q] = (1/sqrt(M)) sum_p x[p] exp(-j 2 pi p q / M)`. Power-of-two lengths go
//! through an iterative radix-2 FFT; other lengths, and the test oracle, use the
//! direct `O(M^2)` sum.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use crate::{Error, Result, C64};

/// Twiddles and bit-reversal table for one radix-2 length.
#[derive(Debug)]
pub struct FftPlan {
    m: usize,
    twiddles: Vec<C64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || !m.is_power_of_two() {
            return Err(Error::Shape(format!("radix-2 FFT needs a power-of-two length, got {m}")));
        }
        let bits = m.trailing_zeros();
        let bitrev = (0..m)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..m / 2).map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / m as f64)).collect();
        Ok(Self { m, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// In-place unnormalised forward transform.
    pub fn forward_in_place(&self, x: &mut [C64]) {
        self.run(x, false);
    }

    /// In-place unnormalised inverse transform (positive exponent).
    pub fn inverse_in_place(&self, x: &mut [C64]) {
        self.run(x, true);
    }

    fn run(&self, x: &mut [C64], inverse: bool) {
        assert_eq!(x.len(), self.m);
        for i in 0..self.m {
            let j = self.bitrev[i];
            if i < j {
                x.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.m {
            let half = size / 2;
            let stride = self.m / size;
            for start in (0..self.m).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = if inverse { w.conj() } else { w };
                    let t = x[start + k + half] * w;
                    let u = x[start + k];
                    x[start + k] = u + t;
                    x[start + k + half] = u - t;
                }
            }
            size *= 2;
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

fn plan(m: usize) -> Rc<FftPlan> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry(m)
            .or_insert_with(|| Rc::new(FftPlan::new(m).expect("power-of-two length")))
            .clone()
    })
}

fn scale(x: &mut [C64]) {
    let s = 1.0 / (x.len() as f64).sqrt();
    for z in x.iter_mut() {
        *z *= s;
    }
}

/// Unitary forward DFT.
pub fn dft(h: &[C64]) -> Vec<C64> {
    let m = h.len();
    if m == 0 || !m.is_power_of_two() {
        return dft_direct(h);
    }
    let mut out = h.to_vec();
    plan(m).forward_in_place(&mut out);
    scale(&mut out);
    out
}

/// Unitary inverse DFT.
pub fn idft(x: &[C64]) -> Vec<C64> {
    let m = x.len();
    if m == 0 || !m.is_power_of_two() {
        return idft_direct(x);
    }
    let mut out = x.to_vec();
    plan(m).inverse_in_place(&mut out);
    scale(&mut out);
    out
}

fn direct(h: &[C64], sign: f64) -> Vec<C64> {
    let m = h.len();
    let norm = 1.0 / (m as f64).sqrt();
    (0..m)
        .map(|q| {
            h.iter()
                .enumerate()
                .map(|(p, x)| x * C64::from_polar(1.0, sign * 2.0 * PI * ((p * q) % m) as f64 / m as f64))
                .sum::<C64>()
                * norm
        })
        .collect()
}

/// Direct `O(M^2)` unitary DFT; valid for any length.
pub fn dft_direct(h: &[C64]) -> Vec<C64> {
    direct(h, -1.0)
}

/// Direct `O(M^2)` unitary inverse DFT.
pub fn idft_direct(x: &[C64]) -> Vec<C64> {
    direct(x, 1.0)
}

/// Multiplies element `m` by `exp(j m phi)`.
pub fn rotate(h: &[C64], phi: f64) -> Vec<C64> {
    if phi == 0.0 {
        return h.to_vec();
    }
    h.iter()
        .enumerate()
        .map(|(m, x)| x * C64::from_polar(1.0, phi * m as f64))
        .collect()
}

/// A DFT-domain channel representation together with the rotation that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<C64>,
    pub phi: f64,
}

impl Spectrum {
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// `dft(rotate(h, phi))`.
pub fn rotated_spectrum(h: &[C64], phi: f64) -> Spectrum {
    Spectrum { values: dft(&rotate(h, phi)), phi }
}

/// DFT bin a single ray at `theta_deg` falls on, wrapped into `[0, M)`.
pub fn predicted_peak(theta_deg: f64, m: usize, d_over_lambda: f64) -> Result<usize> {
    if !(theta_deg.abs() < 90.0) {
        return Err(Error::Domain(format!("theta = {theta_deg} outside (-90, 90) degrees")));
    }
    let b = (m as f64 * d_over_lambda * theta_deg.to_radians().sin()).round() as i64;
    Ok(b.rem_euclid(m as i64) as usize)
}

/// A set of `len` cyclically contiguous DFT bins starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Window {
    pub start: usize,
    pub len: usize,
    pub m: usize,
}

impl Window {
    pub fn new(start: usize, len: usize, m: usize) -> Result<Self> {
        if m == 0 || len == 0 || len > m {
            return Err(Error::Domain(format!("window of {len} bins in a {m}-bin spectrum")));
        }
        Ok(Self { start: start % m, len, m })
    }

    /// The window `{c - floor(len/2), ..., c + ceil(len/2) - 1}` (mod `m`).
    pub fn centered(center: usize, len: usize, m: usize) -> Result<Self> {
        let start = (center % m.max(1) + m - (len / 2) % m.max(1)) % m.max(1);
        Self::new(start, len, m)
    }

    /// Index `start + floor(len/2)` (mod `m`), the inverse of [`Window::centered`].
    pub fn center(&self) -> usize {
        (self.start + self.len / 2) % self.m
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).map(move |i| (self.start + i) % self.m)
    }

    pub fn contains(&self, b: usize) -> bool {
        (b % self.m + self.m - self.start) % self.m < self.len
    }

    /// Energy of `values` inside the window, summed in window order.
    pub fn energy(&self, powers: &[f64]) -> f64 {
        self.indices().map(|b| powers[b]).sum()
    }
}

/// Sparse inverse: `Phi(phi)^H [F^H]_{:,B} w`.
///
/// Equivalent to placing `window_values` on the bins `indices`, zeroing every
/// other bin, inverting the DFT and de-rotating.
pub fn idft_sparse(window_values: &[C64], indices: &[usize], phi: f64, m: usize) -> Result<Vec<C64>> {
    if window_values.len() != indices.len() {
        return Err(Error::Shape(format!(
            "{} window values for {} indices",
            window_values.len(),
            indices.len()
        )));
    }
    let mut seen = vec![false; m];
    for &b in indices {
        if b >= m {
            return Err(Error::Domain(format!("bin {b} outside [0, {m})")));
        }
        if std::mem::replace(&mut seen[b], true) {
            return Err(Error::Domain(format!("duplicate bin {b}")));
        }
    }
    let roots: Vec<C64> = (0..m).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64)).collect();
    let norm = 1.0 / (m as f64).sqrt();
    let out = (0..m)
        .map(|i| {
            let acc: C64 = indices
                .iter()
                .zip(window_values)
                .map(|(&b, w)| roots[(i * b) % m] * w)
                .sum();
            acc * norm * C64::from_polar(1.0, -phi * i as f64)
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn energy(x: &[C64]) -> f64 {
        x.iter().map(|z| z.norm_sqr()).sum()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn vec_strategy(m: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b)| C64::new(a, b)), m)
    }

    #[test]
    fn impulse_transforms_to_flat() {
        let mut h = vec![C64::new(0.0, 0.0); 16];
        h[0] = C64::new(1.0, 0.0);
        for z in dft(&h) {
            assert!((z - C64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn dft_matrix_is_unitary_for_small_sizes() {
        for m in [1usize, 2, 3, 5, 8, 12, 16, 32] {
            let cols: Vec<Vec<C64>> = (0..m)
                .map(|p| {
                    let mut e = vec![C64::new(0.0, 0.0); m];
                    e[p] = C64::new(1.0, 0.0);
                    dft_direct(&e)
                })
                .collect();
            for i in 0..m {
                for j in 0..m {
                    let g: C64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).norm() < 1e-12, "M={m} ({i},{j}) -> {g}");
                }
            }
        }
    }

    #[test]
    fn fft_matches_direct_for_all_radix2_sizes() {
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for m in [8usize, 16, 32, 64, 128, 256, 512, 1024] {
            let h: Vec<C64> = (0..m).map(|_| C64::new(next(), next())).collect();
            assert!(max_diff(&dft(&h), &dft_direct(&h)) < 1e-9, "M={m}");
            assert!(max_diff(&idft(&h), &idft_direct(&h)) < 1e-9, "M={m}");
        }
    }

    #[test]
    fn non_power_of_two_uses_direct_path() {
        let h: Vec<C64> = (0..6).map(|i| C64::new(i as f64, 1.0)).collect();
        assert_eq!(dft(&h), dft_direct(&h));
        assert!(FftPlan::new(6).is_err());
    }

    proptest! {
        #[test]
        fn parseval_and_round_trip(h in vec_strategy(64)) {
            let x = dft(&h);
            prop_assert!((energy(&x) - energy(&h)).abs() < 1e-9 * energy(&h).max(1.0));
            prop_assert!(max_diff(&idft(&x), &h) < 1e-9);
        }

        #[test]
        fn rotation_composes_and_preserves_modulus(h in vec_strategy(32), a in -1.0..1.0f64, b in -1.0..1.0f64) {
            let twice = rotate(&rotate(&h, a), b);
            prop_assert!(max_diff(&twice, &rotate(&h, a + b)) < 1e-12);
            for (x, y) in rotate(&h, a).iter().zip(&h) {
                prop_assert!((x.norm() - y.norm()).abs() < 1e-12);
            }
        }

        #[test]
        fn rotated_spectrum_keeps_energy(h in vec_strategy(32), phi in -0.2..0.2f64) {
            let s = rotated_spectrum(&h, phi);
            prop_assert!((s.energy() - energy(&h)).abs() < 1e-9 * energy(&h).max(1.0));
        }

        #[test]
        fn sparse_inverse_residual_is_out_of_window_energy(
            h in vec_strategy(64), start in 0usize..64, len in 1usize..64, phi in -0.05..0.05f64
        ) {
            let spec = rotated_spectrum(&h, phi);
            let w = Window::new(start, len, 64).unwrap();
            let idx: Vec<usize> = w.indices().collect();
            let vals: Vec<C64> = idx.iter().map(|&b| spec.values[b]).collect();
            let rec = idft_sparse(&vals, &idx, phi, 64).unwrap();
            let residual: f64 = h.iter().zip(&rec).map(|(a, b)| (a - b).norm_sqr()).sum();
            // oracle: energy of the bins the window leaves out, summed directly
            let outside: f64 = (0..64).filter(|b| !idx.contains(b)).map(|b| spec.values[b].norm_sqr()).sum();
            prop_assert!((residual - outside).abs() < 1e-9 * energy(&h).max(1.0));
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        let h: Vec<C64> = (0..8).map(|i| C64::new(i as f64, -(i as f64))).collect();
        assert_eq!(rotate(&h, 0.0), h);
        assert_eq!(rotated_spectrum(&h, 0.0).values, dft(&h));
    }

    #[test]
    fn on_grid_ray_occupies_one_bin() {
        // sin(theta) = 2 * 16 / 128 puts the ray exactly on bin 16
        let theta = (0.25f64).asin().to_degrees();
        let a = crate::model::array_manifold(theta, 128, 0.5).unwrap();
        let p = rotated_spectrum(&a, 0.0).powers();
        let total: f64 = p.iter().sum();
        assert!(p[16] / total > 0.999);
        assert_eq!(predicted_peak(theta, 128, 0.5).unwrap(), 16);
    }

    #[test]
    fn predicted_peak_wraps_negative_angles() {
        assert_eq!(predicted_peak(0.0, 64, 0.5).unwrap(), 0);
        assert_eq!(predicted_peak(14.4775, 128, 0.5).unwrap(), 16);
        assert_eq!(predicted_peak(-14.4775, 128, 0.5).unwrap(), 112);
        assert!(predicted_peak(90.0, 128, 0.5).is_err());
    }

    #[test]
    fn full_window_inverse_recovers_channel() {
        let h: Vec<C64> = (0..32).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let phi = PI / 32.0 * 0.4;
        let spec = rotated_spectrum(&h, phi);
        let idx: Vec<usize> = (0..32).collect();
        let rec = idft_sparse(&spec.values, &idx, phi, 32).unwrap();
        assert!(max_diff(&rec, &h) < 1e-9);
        let zero = idft_sparse(&[C64::new(0.0, 0.0); 4], &[0, 1, 2, 3], phi, 32).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn sparse_inverse_rejects_duplicates() {
        let v = [C64::new(1.0, 0.0); 3];
        assert!(matches!(idft_sparse(&v, &[1, 2, 1], 0.0, 8), Err(Error::Domain(_))));
        assert!(matches!(idft_sparse(&v, &[1, 2, 9], 0.0, 8), Err(Error::Domain(_))));
        assert!(matches!(idft_sparse(&v[..2], &[1, 2, 3], 0.0, 8), Err(Error::Shape(_))));
    }

    #[test]
    fn windows_wrap_cyclically() {
        let w = Window::centered(1, 4, 16).unwrap();
        assert_eq!(w.indices().collect::<Vec<_>>(), vec![15, 0, 1, 2]);
        assert_eq!(w.center(), 1);
        assert!(w.contains(15) && w.contains(2) && !w.contains(3));
        let odd = Window::centered(5, 3, 16).unwrap();
        assert_eq!(odd.indices().collect::<Vec<_>>(), vec![4, 5, 6]);
        assert!(Window::new(0, 17, 16).is_err());
    }
}
