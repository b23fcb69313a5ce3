//! Complex FFT on square grids.
//!
//! Radix-2 for power-of-two sizes, a direct DFT otherwise. Twiddles are
//! evaluated directly (not by recurrence) so round-off stays at a few ulps.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub(crate) struct Fft {
    n: usize,
    /// `e^{-2πi j/n}` for `j in 0..n` (direct DFT of non-power-of-two sizes).
    twiddles: Vec<Complex64>,
    /// Per-stage radix-2 twiddles, stage of half-length `h` at offset `h − 1`.
    stage_fwd: Vec<Complex64>,
    stage_inv: Vec<Complex64>,
    /// Bit-reversal permutation; empty when `n` is not a power of two.
    rev: Vec<usize>,
}

impl Fft {
    pub(crate) fn new(n: usize) -> Self {
        let twiddles = (0..n)
            .map(|j| {
                let t = -2.0 * PI * j as f64 / n as f64;
                Complex64::new(libm::cos(t), libm::sin(t))
            })
            .collect();
        let (mut stage_fwd, mut stage_inv, mut rev) = (Vec::new(), Vec::new(), Vec::new());
        if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            rev = (0..n).map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) }).collect();
            let mut half = 1;
            while half < n {
                for j in 0..half {
                    let t = -PI * j as f64 / half as f64;
                    let w = Complex64::new(libm::cos(t), libm::sin(t));
                    stage_fwd.push(w);
                    stage_inv.push(w.conj());
                }
                half <<= 1;
            }
        }
        Fft { n, twiddles, stage_fwd, stage_inv, rev }
    }

    fn stages(&self, inverse: bool) -> &[Complex64] {
        if inverse {
            &self.stage_inv
        } else {
            &self.stage_fwd
        }
    }

    /// Unnormalized transform of a contiguous line; `inverse` flips the sign
    /// of the exponent.
    fn line(&self, x: &mut [Complex64], inverse: bool, tmp: &mut [Complex64]) {
        let n = self.n;
        if self.rev.is_empty() {
            for (k, out) in tmp.iter_mut().enumerate().take(n) {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in x.iter().enumerate() {
                    let w = self.twiddles[(j * k) % n];
                    acc += v * if inverse { w.conj() } else { w };
                }
                *out = acc;
            }
            x.copy_from_slice(&tmp[..n]);
            return;
        }
        for i in 0..n {
            let r = self.rev[i];
            if i < r {
                x.swap(i, r);
            }
        }
        let tw = self.stages(inverse);
        let mut half = 1;
        while half < n {
            let w = &tw[half - 1..2 * half - 1];
            for chunk in x.chunks_exact_mut(2 * half) {
                let (lo, hi) = chunk.split_at_mut(half);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(w) {
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            half <<= 1;
        }
    }

    /// Transforms every column of a row-major `n × n` array at once,
    /// operating on whole rows so the inner loops are contiguous.
    fn columns(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let r = self.rev[i];
            if i < r {
                let (lo, hi) = data.split_at_mut(r * n);
                lo[i * n..(i + 1) * n].swap_with_slice(&mut hi[..n]);
            }
        }
        let tw = self.stages(inverse);
        let mut half = 1;
        while half < n {
            let w = &tw[half - 1..2 * half - 1];
            for block in data.chunks_exact_mut(2 * half * n) {
                let (lo, hi) = block.split_at_mut(half * n);
                for (j, w) in w.iter().enumerate() {
                    let a = &mut lo[j * n..(j + 1) * n];
                    let b = &mut hi[j * n..(j + 1) * n];
                    for (a, b) in a.iter_mut().zip(b.iter_mut()) {
                        let t = *b * w;
                        *b = *a - t;
                        *a += t;
                    }
                }
            }
            half <<= 1;
        }
    }

    /// Unnormalized 2D transform of a row-major `n × n` array in place.
    pub(crate) fn transform2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        let mut tmp = vec![Complex64::new(0.0, 0.0); n];
        for row in data.chunks_exact_mut(n) {
            // Dealiased spectra leave a third of the rows empty.
            if row.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                continue;
            }
            self.line(row, inverse, &mut tmp);
        }
        if !self.rev.is_empty() {
            self.columns(data, inverse);
            return;
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = data[r * n + c];
            }
            self.line(&mut col, inverse, &mut tmp);
            for r in 0..n {
                data[r * n + c] = col[r];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeqRng;

    fn naive(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let s = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let t = s * 2.0 * PI * (j * k) as f64 / n as f64;
                        v * Complex64::new(libm::cos(t), libm::sin(t))
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn two_dimensional_matches_naive() {
        let mut r = SeqRng::new(6);
        for n in [8usize, 12, 16] {
            let fft = Fft::new(n);
            let x: Vec<Complex64> = (0..n * n).map(|_| Complex64::new(r.normal(), r.normal())).collect();
            let mut y = x.clone();
            fft.transform2(&mut y, false);
            // Rows then columns of the naive 1D transform.
            let mut z = x.clone();
            for row in z.chunks_exact_mut(n) {
                let t = naive(row, false);
                row.copy_from_slice(&t);
            }
            for c in 0..n {
                let col: Vec<Complex64> = (0..n).map(|i| z[i * n + c]).collect();
                let t = naive(&col, false);
                for i in 0..n {
                    z[i * n + c] = t[i];
                }
            }
            for (a, b) in y.iter().zip(&z) {
                assert!((a - b).norm() < 1e-11, "n = {n}");
            }
        }
    }

    #[test]
    fn radix2_and_direct_match_naive() {
        let mut r = SeqRng::new(5);
        for n in [8usize, 12, 16, 32] {
            let fft = Fft::new(n);
            let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(r.normal(), r.normal())).collect();
            for inverse in [false, true] {
                let mut y = x.clone();
                let mut tmp = vec![Complex64::new(0.0, 0.0); n];
                fft.line(&mut y, inverse, &mut tmp);
                let z = naive(&x, inverse);
                for (a, b) in y.iter().zip(&z) {
                    assert!((a - b).norm() < 1e-12, "n = {n}");
                }
            }
        }
    }
}
