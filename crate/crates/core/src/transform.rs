//! Unitary DFT and partial FFT demodulation.
//!
//! A received block `r` of length `K` is split into `M` disjoint rectangular
//! windows of `J = K / M` samples. Row `m` of the [`PartialDemodMatrix`] holds
//! `F_K C_m r`, the unitary K-point transform of the block with every sample
//! outside window `m` zeroed. Summing the rows recovers the conventional
//! single-FFT output because the windows partition the block.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};

/// Unitary K-point DFT (`1/sqrt(K)` on both directions) for power-of-two `K`.
#[derive(Clone)]
pub struct UnitaryDft {
    len: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitaryDft").field("len", &self.len).finish()
    }
}

impl UnitaryDft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return invalid(format!("transform length must be a power of two, got {len}"));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            scale: 1.0 / (len as f64).sqrt(),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = self.checked_copy(v)?;
        self.forward_in_place(&mut out);
        Ok(out)
    }

    pub fn inverse(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = self.checked_copy(v)?;
        self.inverse_in_place(&mut out);
        Ok(out)
    }

    /// Panics if `buf.len() != self.len()`.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|x| *x *= self.scale);
    }

    /// Panics if `buf.len() != self.len()`.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|x| *x *= self.scale);
    }

    fn checked_copy(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.len {
            return invalid(format!("expected {} samples, got {}", self.len, v.len()));
        }
        Ok(v.to_vec())
    }
}

pub fn dft_unitary(v: &[Complex64]) -> Result<Vec<Complex64>> {
    UnitaryDft::new(v.len())?.forward(v)
}

pub fn idft_unitary(v: &[Complex64]) -> Result<Vec<Complex64>> {
    UnitaryDft::new(v.len())?.inverse(v)
}

/// `M x K` partial FFT outputs, stored row-major by subblock.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDemodMatrix {
    subblocks: usize,
    subcarriers: usize,
    values: Vec<Complex64>,
}

impl PartialDemodMatrix {
    pub fn from_rows(subblocks: usize, subcarriers: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != subblocks * subcarriers {
            return invalid(format!(
                "{} values do not form a {subblocks}x{subcarriers} matrix",
                values.len()
            ));
        }
        Ok(Self {
            subblocks,
            subcarriers,
            values,
        })
    }

    pub fn subblocks(&self) -> usize {
        self.subblocks
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn get(&self, m: usize, k: usize) -> Complex64 {
        self.values[m * self.subcarriers + k]
    }

    pub fn row(&self, m: usize) -> &[Complex64] {
        &self.values[m * self.subcarriers..(m + 1) * self.subcarriers]
    }

    /// `ȳ_k = [y_{0,k}, ..., y_{M-1,k}]`.
    pub fn column(&self, k: usize) -> Vec<Complex64> {
        (0..self.subblocks).map(|m| self.get(m, k)).collect()
    }

    /// Per-subcarrier sum over subblocks, i.e. the single-FFT output.
    pub fn column_sums(&self) -> Vec<Complex64> {
        let mut sums = vec![Complex64::new(0.0, 0.0); self.subcarriers];
        for m in 0..self.subblocks {
            for (acc, y) in sums.iter_mut().zip(self.row(m)) {
                *acc += y;
            }
        }
        sums
    }
}

/// Computes `y_m = F_K C_m r` for `m = 0..M`.
pub fn partial_fft_demodulate(
    received: &[Complex64],
    subblocks: usize,
    dft: &UnitaryDft,
) -> Result<PartialDemodMatrix> {
    let len = dft.len();
    if received.len() != len {
        return invalid(format!("expected {len} received samples, got {}", received.len()));
    }
    if subblocks == 0 || !len.is_multiple_of(subblocks) {
        return invalid(format!("{subblocks} subblocks do not divide {len} samples"));
    }
    let width = len / subblocks;
    let mut values = vec![Complex64::new(0.0, 0.0); subblocks * len];
    for (m, row) in values.chunks_mut(len).enumerate() {
        let window = m * width..(m + 1) * width;
        row[window.clone()].copy_from_slice(&received[window]);
        dft.forward_in_place(row);
    }
    PartialDemodMatrix::from_rows(subblocks, len, values)
}

/// Combined output `x_k = w^H ȳ_k`.
pub fn combine(demod: &PartialDemodMatrix, weights: &[Complex64], k: usize) -> Result<Complex64> {
    if k >= demod.subcarriers() {
        return invalid(format!("subcarrier {k} out of range 0..{}", demod.subcarriers()));
    }
    if weights.len() != demod.subblocks() {
        return invalid(format!(
            "weight vector of length {} for {} subblocks",
            weights.len(),
            demod.subblocks()
        ));
    }
    Ok(combine_unchecked(demod, weights, k))
}

pub(crate) fn combine_unchecked(demod: &PartialDemodMatrix, weights: &[Complex64], k: usize) -> Complex64 {
    weights
        .iter()
        .enumerate()
        .map(|(m, w)| w.conj() * demod.get(m, k))
        .sum()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn naive_dft(v: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = v.len();
        (0..n)
            .map(|k| {
                v.iter()
                    .enumerate()
                    .map(|(i, x)| x * Complex64::from_polar(1.0, sign * 2.0 * PI * ((i * k) % n) as f64 / n as f64))
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn impulse_transforms_to_constant() {
        let mut v = vec![Complex64::new(0.0, 0.0); 8];
        v[0] = Complex64::new(1.0, 0.0);
        let expected = 1.0 / 8f64.sqrt();
        for out in [dft_unitary(&v).unwrap(), idft_unitary(&v).unwrap()] {
            assert!(out.iter().all(|x| (x - Complex64::new(expected, 0.0)).norm() < 1e-15));
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(dft_unitary(&[Complex64::new(1.0, 0.0); 12]).is_err());
        assert!(UnitaryDft::new(0).is_err());
    }

    #[test]
    fn matches_naive_matrix_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_vec(&mut rng, 16);
        assert!(max_diff(&dft_unitary(&v).unwrap(), &naive_dft(&v, -1.0)) < 1e-10);
        assert!(max_diff(&idft_unitary(&v).unwrap(), &naive_dft(&v, 1.0)) < 1e-10);
    }

    #[test]
    fn energy_preserved_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_vec(&mut rng, 256);
        let f = dft_unitary(&v).unwrap();
        let norm = |x: &[Complex64]| x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm(&f) - norm(&v)).abs() < 1e-10);
        assert!(max_diff(&idft_unitary(&f).unwrap(), &v) < 1e-10);
    }

    #[test]
    fn single_subblock_equals_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dft = UnitaryDft::new(64).unwrap();
        let r = random_vec(&mut rng, 64);
        let demod = partial_fft_demodulate(&r, 1, &dft).unwrap();
        assert_eq!(demod.row(0), dft.forward(&r).unwrap().as_slice());
    }

    #[test]
    fn entries_match_masked_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (k_len, m_len) = (32, 4);
        let dft = UnitaryDft::new(k_len).unwrap();
        let r = random_vec(&mut rng, k_len);
        let demod = partial_fft_demodulate(&r, m_len, &dft).unwrap();
        let j = k_len / m_len;
        for m in 0..m_len {
            let masked: Vec<Complex64> = r
                .iter()
                .enumerate()
                .map(|(n, &x)| if n / j == m { x } else { Complex64::new(0.0, 0.0) })
                .collect();
            let expected = naive_dft(&masked, -1.0);
            for k in 0..k_len {
                assert!((demod.get(m, k) - expected[k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn column_sums_equal_single_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dft = UnitaryDft::new(64).unwrap();
        let r = random_vec(&mut rng, 64);
        let demod = partial_fft_demodulate(&r, 4, &dft).unwrap();
        assert!(max_diff(&demod.column_sums(), &dft.forward(&r).unwrap()) < 1e-9);
    }

    #[test]
    fn rejects_non_dividing_subblocks() {
        let dft = UnitaryDft::new(64).unwrap();
        let r = vec![Complex64::new(1.0, 0.0); 64];
        assert!(partial_fft_demodulate(&r, 3, &dft).is_err());
        assert!(partial_fft_demodulate(&r, 0, &dft).is_err());
    }

    #[test]
    fn combine_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dft = UnitaryDft::new(64).unwrap();
        let r = random_vec(&mut rng, 64);
        let demod = partial_fft_demodulate(&r, 4, &dft).unwrap();
        let single = dft.forward(&r).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); 4];
        let mut selector = vec![Complex64::new(0.0, 0.0); 4];
        selector[0] = Complex64::new(2.0, 0.0);
        let w = random_vec(&mut rng, 4);
        for k in 0..64 {
            assert!((combine(&demod, &ones, k).unwrap() - single[k]).norm() < 1e-9);
            assert!((combine(&demod, &selector, k).unwrap() - 2.0 * demod.get(0, k)).norm() < 1e-12);
            let mut expected = Complex64::new(0.0, 0.0);
            for m in 0..4 {
                expected += w[m].conj() * demod.get(m, k);
            }
            assert!((combine(&demod, &w, k).unwrap() - expected).norm() < 1e-12);
        }
        assert!(combine(&demod, &ones, 64).is_err());
        assert!(combine(&demod, &ones[..3], 0).is_err());
    }
}
