//! Fourier representation of real, zero-mean fields on a periodic square.
//!
//! Coefficients are normalized so that Parseval reads
//! `mean(f·g) = Σ_k Re(conj(f̂_k)·ĝ_k)`, and the coefficient of wavevector
//! `(m, n)` is stored at `(m mod K)·K + (n mod K)`, `m` being the
//! x-wavenumber. All quadratic terms are evaluated pseudo-spectrally and
//! truncated to the square `|m|, |n| ≤ cut`.

mod fft;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

pub(crate) use fft::Fft;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A periodic `K × K` collocation grid on `[0, L)²`.
#[derive(Clone)]
pub struct Grid {
    l: f64,
    k: usize,
    cut: usize,
    kx: Vec<f64>,
    ky: Vec<f64>,
    lambda: Vec<f64>,
    mirror: Vec<usize>,
    retained: Vec<bool>,
    canonical: Vec<usize>,
    fft: Fft,
}

impl core::fmt::Debug for Grid {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Grid").field("L", &self.l).field("K", &self.k).field("cut", &self.cut).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.l == other.l && self.k == other.k
    }
}

impl Grid {
    /// Builds a grid with `K` points per side; `K` must be even and at least 8.
    ///
    /// The retained square is `|m|, |n| ≤ ⌊(K−1)/3⌋`, the largest cut for
    /// which every quadratic interaction aliases only onto discarded modes.
    pub fn new(l: f64, k: usize) -> Result<Arc<Self>> {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidGrid(alloc::format!("box side {l} must be positive")));
        }
        if k < 8 || !k.is_multiple_of(2) {
            return Err(Error::InvalidGrid(alloc::format!("K = {k} must be even and at least 8")));
        }
        let cut = (k - 1) / 3;
        let wave = 2.0 * PI / l;
        let len = k * k;
        let mut kx = vec![0.0; len];
        let mut ky = vec![0.0; len];
        let mut lambda = vec![0.0; len];
        let mut mirror = vec![0; len];
        let mut retained = vec![false; len];
        let mut canonical = Vec::new();
        for i in 0..len {
            let (m, n) = signed_pair(i, k);
            kx[i] = wave * m as f64;
            ky[i] = wave * n as f64;
            lambda[i] = kx[i] * kx[i] + ky[i] * ky[i];
            mirror[i] = wrap(-m, k) * k + wrap(-n, k);
            let keep = (m, n) != (0, 0) && m.unsigned_abs() as usize <= cut && n.unsigned_abs() as usize <= cut;
            retained[i] = keep;
            if keep && (n > 0 || (n == 0 && m > 0)) {
                canonical.push(i);
            }
        }
        canonical
            .sort_by(|&a, &b| lambda[a].total_cmp(&lambda[b]).then_with(|| signed_pair(a, k).cmp(&signed_pair(b, k))));
        Ok(Arc::new(Grid { l, k, cut, kx, ky, lambda, mirror, retained, canonical, fft: Fft::new(k) }))
    }

    pub fn side(&self) -> f64 {
        self.l
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn dealias_cut(&self) -> usize {
        self.cut
    }

    /// Number of stored coefficients, `K²`.
    pub fn len(&self) -> usize {
        self.k * self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage index of wavevector `(m, n)`, if it lies in the retained square.
    pub fn index(&self, m: i64, n: i64) -> Result<usize> {
        let c = self.cut as i64;
        if m.abs() > c || n.abs() > c {
            return Err(Error::ModeOutOfRange { m, n });
        }
        Ok(wrap(m, self.k) * self.k + wrap(n, self.k))
    }

    /// Signed wavevector of a storage index.
    pub fn wavevector(&self, i: usize) -> (i64, i64) {
        signed_pair(i, self.k)
    }

    /// `(2π/L)(m, n)` for storage index `i`.
    pub fn wavenumber(&self, i: usize) -> (f64, f64) {
        (self.kx[i], self.ky[i])
    }

    /// Eigenvalue `λ_k = (2π/L)²|k|²` of `−Δ`.
    pub fn lambda(&self, i: usize) -> f64 {
        self.lambda[i]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    /// Smallest nonzero eigenvalue `λ₁`.
    pub fn lambda1(&self) -> f64 {
        self.lambda[self.canonical[0]]
    }

    /// Index of `−k`.
    pub fn mirror(&self, i: usize) -> usize {
        self.mirror[i]
    }

    /// Whether mode `i` is nonzero and inside the dealiasing square.
    pub fn is_retained(&self, i: usize) -> bool {
        self.retained[i]
    }

    /// Retained modes with `n > 0`, or `n = 0, m > 0`: one representative of
    /// every conjugate pair, ordered by `(λ, m, n)`.
    pub fn canonical(&self) -> &[usize] {
        &self.canonical
    }

    /// Dimension of the real space of retained fields.
    pub fn real_dimension(&self) -> usize {
        2 * self.canonical.len()
    }

    /// Eigenvalue of the `j`-th real basis function (`j` counted from 1), the
    /// `λ_n` attached to the projection `Π_n`.
    pub fn basis_lambda(&self, j: usize) -> f64 {
        match j {
            0 => 0.0,
            _ => self.lambda[self.canonical[((j - 1) / 2).min(self.canonical.len() - 1)]],
        }
    }

    /// Largest retained eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        self.canonical.iter().map(|&i| self.lambda[i]).fold(0.0, f64::max)
    }

    /// Grid point spacing `L/K`.
    pub fn spacing(&self) -> f64 {
        self.l / self.k as f64
    }

    /// Physical values from coefficients: `out(x) = Σ_k ĉ_k e^{ik·x}`.
    pub fn to_physical(&self, spec: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(spec);
        self.fft.transform2(out, true);
    }

    /// Coefficients from physical values, normalized by `1/K²`.
    pub fn to_spectral(&self, phys: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(phys);
        self.fft.transform2(out, false);
        let s = 1.0 / (self.k * self.k) as f64;
        for c in out.iter_mut() {
            *c *= s;
        }
    }

    /// Splits the transform of `f + i·g` (both real) into the truncated,
    /// exactly Hermitian, zero-mean spectra of `f` and `g`.
    pub(crate) fn unpack_pair(&self, z: &[Complex64], f: &mut [Complex64], g: &mut [Complex64]) {
        for i in 0..self.len() {
            if !self.retained[i] {
                f[i] = ZERO;
                g[i] = ZERO;
                continue;
            }
            let a = z[i];
            let b = z[self.mirror[i]].conj();
            f[i] = (a + b) * 0.5;
            g[i] = Complex64::new(0.0, -0.5) * (a - b);
        }
    }
}

fn signed(i: usize, k: usize) -> i64 {
    if i < k / 2 {
        i as i64
    } else {
        i as i64 - k as i64
    }
}

fn signed_pair(i: usize, k: usize) -> (i64, i64) {
    (signed(i / k, k), signed(i % k, k))
}

fn wrap(m: i64, k: usize) -> usize {
    m.rem_euclid(k as i64) as usize
}

/// A real, zero-mean field held by its Fourier coefficients.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        SpectralField { grid: grid.clone(), coeffs: vec![ZERO; grid.len()] }
    }

    /// Field with the given `(m, n, ĉ)` coefficients; each conjugate partner
    /// is filled in, so listing both `k` and `−k` is unnecessary.
    pub fn from_modes(grid: &Arc<Grid>, modes: &[(i64, i64, Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(grid);
        for &(m, n, c) in modes {
            f.set(m, n, c)?;
        }
        Ok(f)
    }

    /// Adopts a raw coefficient array after checking every invariant.
    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SizeMismatch { left: coeffs.len(), right: grid.len() });
        }
        let f = SpectralField { grid: grid.clone(), coeffs };
        f.validate()?;
        Ok(f)
    }

    /// Builds a field from real samples on the collocation grid, keeping the
    /// retained modes only.
    pub fn from_physical(grid: &Arc<Grid>, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch { left: values.len(), right: grid.len() });
        }
        let z: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut t = vec![ZERO; grid.len()];
        grid.to_spectral(&z, &mut t);
        let mut f = Self::zeros(grid);
        let mut g = vec![ZERO; grid.len()];
        grid.unpack_pair(&t, &mut f.coeffs, &mut g);
        Ok(f)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Raw coefficient access; callers must keep the field Hermitian,
    /// zero-mean and truncated.
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, m: i64, n: i64) -> Result<Complex64> {
        Ok(self.coeffs[self.grid.index(m, n)?])
    }

    /// Sets `ĉ_(m,n) = c` and `ĉ_(−m,−n) = conj(c)`. Self-conjugate modes
    /// (`(0,0)` and Nyquist) are outside the retained square, so the pair is
    /// always distinct.
    pub fn set(&mut self, m: i64, n: i64, c: Complex64) -> Result<()> {
        if (m, n) == (0, 0) {
            return Err(Error::InvalidArgument("the mean mode is fixed at zero".into()));
        }
        let i = self.grid.index(m, n)?;
        self.coeffs[i] = c;
        self.coeffs[self.grid.mirror(i)] = c.conj();
        Ok(())
    }

    pub fn same_grid(&self, other: &SpectralField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Checks finiteness, zero mean, Hermitian symmetry and truncation.
    pub fn validate(&self) -> Result<()> {
        let g = &*self.grid;
        for (i, c) in self.coeffs.iter().enumerate() {
            if !(c.re.is_finite() && c.im.is_finite()) {
                let (m, n) = g.wavevector(i);
                return Err(Error::NonFinite(alloc::format!("coefficient ({m}, {n})")));
            }
            if !g.is_retained(i) && *c != ZERO {
                let (m, n) = g.wavevector(i);
                return Err(Error::InvalidArgument(alloc::format!(
                    "coefficient ({m}, {n}) outside the retained modes is nonzero"
                )));
            }
            let partner = self.coeffs[g.mirror(i)].conj();
            if (c - partner).norm() > 1e-12 * (1.0 + c.norm()) {
                let (m, n) = g.wavevector(i);
                return Err(Error::InvalidArgument(alloc::format!("coefficient ({m}, {n}) breaks Hermitian symmetry")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `Σ_k λ_k^s Re(conj(f̂_k)·ĝ_k)`; `s = 0` is the mean of `f·g` over the box.
    pub fn inner(&self, other: &SpectralField, s: f64) -> f64 {
        debug_assert!(self.grid == other.grid);
        weighted_inner(&self.grid, &self.coeffs, &other.coeffs, s)
    }

    /// `(Σ_{k≠0} λ_k^s |f̂_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        if !self.is_finite() {
            return Err(Error::NonFinite("field passed to a Sobolev norm".into()));
        }
        Ok(libm::sqrt(self.inner(self, s)))
    }

    /// Squared Sobolev norm without the finiteness check.
    pub fn norm_sq(&self, s: f64) -> f64 {
        self.inner(self, s)
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.coeffs {
            *v *= c;
        }
    }

    /// `self += c·other`.
    pub fn add_scaled(&mut self, c: f64, other: &SpectralField) {
        debug_assert!(self.grid == other.grid);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * c;
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut d = self.clone();
        d.add_scaled(-1.0, other);
        d
    }

    /// Multiplies every coefficient by `λ_k^s` (so `s = 1` is `−Δ`).
    pub fn apply_power(&mut self, s: f64) {
        let g = self.grid.clone();
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            if g.is_retained(i) {
                *c *= lambda_pow(g.lambda(i), s);
            }
        }
    }

    /// Orthogonal projection onto the first `n` real basis functions.
    ///
    /// The basis runs through conjugate pairs in order of `(λ, m, n)`, taking
    /// `cos(k·x)` before `sin(k·x)`; keeping only the cosine of a pair keeps the
    /// real part of its coefficient.
    pub fn project_low_modes(&self, n: usize) -> Result<SpectralField> {
        let g = &*self.grid;
        if n > g.real_dimension() {
            return Err(Error::InvalidArgument(alloc::format!(
                "projection onto {n} modes exceeds the {} retained",
                g.real_dimension()
            )));
        }
        let mut out = SpectralField::zeros(&self.grid);
        for (j, &i) in g.canonical().iter().enumerate() {
            let c = self.coeffs[i];
            let kept = match n.saturating_sub(2 * j) {
                0 => break,
                1 => Complex64::new(c.re, 0.0),
                _ => c,
            };
            out.coeffs[i] = kept;
            out.coeffs[g.mirror(i)] = kept.conj();
        }
        Ok(out)
    }

    /// Real samples on the collocation grid, row-major with `x` as the slow index.
    pub fn to_physical(&self) -> Vec<f64> {
        let mut z = vec![ZERO; self.grid.len()];
        self.grid.to_physical(&self.coeffs, &mut z);
        z.into_iter().map(|c| c.re).collect()
    }

    /// Pseudo-spectral product with the mean removed and modes beyond the
    /// dealiasing cut discarded.
    pub fn dealiased_product(&self, other: &SpectralField) -> Result<SpectralField> {
        self.same_grid(other)?;
        let g = &*self.grid;
        let mut z = vec![ZERO; g.len()];
        for (k, c) in z.iter_mut().enumerate() {
            *c = self.coeffs[k] + Complex64::i() * other.coeffs[k];
        }
        let mut phys = vec![ZERO; g.len()];
        g.to_physical(&z, &mut phys);
        for c in phys.iter_mut() {
            *c = Complex64::new(c.re * c.im, 0.0);
        }
        g.to_spectral(&phys, &mut z);
        let mut out = SpectralField::zeros(&self.grid);
        let mut spare = vec![ZERO; g.len()];
        g.unpack_pair(&z, &mut out.coeffs, &mut spare);
        Ok(out)
    }
}

/// Reusable buffers for pseudo-spectral Jacobians.
#[derive(Debug, Clone)]
pub struct JacobianScratch {
    za: Vec<Complex64>,
    zb: Vec<Complex64>,
    zc: Vec<Complex64>,
    zd: Vec<Complex64>,
    spare: Vec<Complex64>,
}

impl JacobianScratch {
    pub fn new(grid: &Grid) -> Self {
        let z = vec![ZERO; grid.len()];
        JacobianScratch { za: z.clone(), zb: z.clone(), zc: z.clone(), zd: z.clone(), spare: z }
    }
}

/// Spectrum of `∂ₓa + i∂ᵧa` for real `a`.
fn gradient_packed(g: &Grid, a: &[Complex64], out: &mut [Complex64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let (kx, ky) = g.wavenumber(i);
        // i·kx·a + i·(i·ky·a)
        *o = a[i] * Complex64::new(-ky, kx);
    }
}

impl Grid {
    /// Dealiased Jacobian `J(a, b) = ∂ₓa·∂ᵧb − ∂ᵧa·∂ₓb` written into `out`.
    /// Returns `max |∇a|` over the collocation points.
    pub fn jacobian(&self, a: &[Complex64], b: &[Complex64], out: &mut [Complex64], s: &mut JacobianScratch) -> f64 {
        gradient_packed(self, a, &mut s.za);
        gradient_packed(self, b, &mut s.zb);
        self.fft.transform2(&mut s.za, true);
        self.fft.transform2(&mut s.zb, true);
        let mut vmax: f64 = 0.0;
        for (x, y) in s.za.iter_mut().zip(&s.zb) {
            vmax = vmax.max(x.norm_sqr());
            *x = Complex64::new(x.re * y.im - x.im * y.re, 0.0);
        }
        self.to_spectral(&s.za, &mut s.zc);
        self.unpack_pair(&s.zc, out, &mut s.spare);
        libm::sqrt(vmax)
    }

    /// Two independent Jacobians `J(a₁, b₁)`, `J(a₂, b₂)` sharing one forward
    /// transform. Returns the larger of `max |∇a₁|`, `max |∇a₂|`.
    #[allow(clippy::too_many_arguments)]
    pub fn jacobian_pair(
        &self,
        a1: &[Complex64],
        b1: &[Complex64],
        a2: &[Complex64],
        b2: &[Complex64],
        out1: &mut [Complex64],
        out2: &mut [Complex64],
        s: &mut JacobianScratch,
    ) -> f64 {
        gradient_packed(self, a1, &mut s.za);
        gradient_packed(self, b1, &mut s.zb);
        gradient_packed(self, a2, &mut s.zc);
        gradient_packed(self, b2, &mut s.zd);
        for z in [&mut s.za, &mut s.zb, &mut s.zc, &mut s.zd] {
            self.fft.transform2(z, true);
        }
        let mut vmax: f64 = 0.0;
        for i in 0..self.len() {
            let (x1, y1, x2, y2) = (s.za[i], s.zb[i], s.zc[i], s.zd[i]);
            vmax = vmax.max(x1.norm_sqr()).max(x2.norm_sqr());
            let j1 = x1.re * y1.im - x1.im * y1.re;
            let j2 = x2.re * y2.im - x2.im * y2.re;
            s.za[i] = Complex64::new(j1, j2);
        }
        self.to_spectral(&s.za, &mut s.zb);
        self.unpack_pair(&s.zb, out1, out2);
        libm::sqrt(vmax)
    }
}

pub(crate) fn lambda_pow(lambda: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s == 1.0 {
        lambda
    } else if s == -1.0 {
        1.0 / lambda
    } else if s == 2.0 {
        lambda * lambda
    } else if s == -2.0 {
        1.0 / (lambda * lambda)
    } else {
        libm::pow(lambda, s)
    }
}

/// `Σ_{retained k} λ_k^s Re(conj(a_k)·b_k)` over raw coefficient arrays.
pub(crate) fn weighted_inner(g: &Grid, a: &[Complex64], b: &[Complex64], s: f64) -> f64 {
    let mut acc = 0.0;
    for &i in g.canonical() {
        let w = lambda_pow(g.lambda(i), s);
        acc += w * (a[i].re * b[i].re + a[i].im * b[i].im);
    }
    2.0 * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeqRng;
    use proptest::prelude::*;

    pub(crate) fn random_field(grid: &Arc<Grid>, rng: &mut SeqRng) -> SpectralField {
        let mut f = SpectralField::zeros(grid);
        for &i in grid.canonical() {
            let (m, n) = grid.wavevector(i);
            f.set(m, n, Complex64::new(rng.normal(), rng.normal())).unwrap();
        }
        f
    }

    fn grid(k: usize) -> Arc<Grid> {
        Grid::new(2.0 * PI, k).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(1.0, 6).is_err());
        assert!(Grid::new(1.0, 9).is_err());
        assert!(Grid::new(0.0, 16).is_err());
        let g = grid(32);
        assert_eq!(g.dealias_cut(), 10);
        assert_eq!(grid(12).dealias_cut(), 3);
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = grid(16);
        assert_eq!(SpectralField::zeros(&g).sobolev_norm(-2.0).unwrap(), 0.0);
        // |f|² = 2|ĉ|² over the pair, so |f| = 1 needs |ĉ| = 1/√2.
        let c = core::f64::consts::FRAC_1_SQRT_2;
        let f = SpectralField::from_modes(&g, &[(0, 1, Complex64::new(c, 0.0))]).unwrap();
        assert!((f.sobolev_norm(1.0).unwrap() - 1.0).abs() < 1e-15);
        // |f| = 2 on mode (1, 0): |ĉ| = √2, and λ = 1 so every s gives 2.
        let f = SpectralField::from_modes(&g, &[(1, 0, Complex64::new(0.0, libm::sqrt(2.0)))]).unwrap();
        assert!((f.sobolev_norm(2.0).unwrap() - 2.0).abs() < 1e-15);
        let mut bad = f.clone();
        bad.coeffs_mut()[17] = Complex64::new(f64::NAN, 0.0);
        assert!(bad.sobolev_norm(0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let g = grid(32);
        let one = Complex64::new(0.3, -0.7);
        let f = SpectralField::from_modes(&g, &[(1, 0, one), (5, 5, one)]).unwrap();
        // |k|² ≤ 1 holds for (±1, 0) and (0, ±1): two pairs, four real functions.
        let p = f.project_low_modes(4).unwrap();
        let want = SpectralField::from_modes(&g, &[(1, 0, one)]).unwrap();
        assert_eq!(p, want);
        assert_eq!(f.project_low_modes(g.real_dimension()).unwrap(), f);
        assert_eq!(f.project_low_modes(0).unwrap(), SpectralField::zeros(&g));
        assert!(f.project_low_modes(g.real_dimension() + 1).is_err());
    }

    #[test]
    fn product_of_cosines() {
        let g = grid(16);
        // cos x has ĉ_(±1,0) = 1/2; cos² x − mean = cos(2x)/2 has ĉ_(±2,0) = 1/4.
        let f = SpectralField::from_modes(&g, &[(1, 0, Complex64::new(0.5, 0.0))]).unwrap();
        let p = f.dealiased_product(&f).unwrap();
        let want = SpectralField::from_modes(&g, &[(2, 0, Complex64::new(0.25, 0.0))]).unwrap();
        for (a, b) in p.coeffs().iter().zip(want.coeffs()) {
            assert!((a - b).norm() < 1e-15);
        }
        // Same answer from direct quadrature.
        let x = f.to_physical();
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let q = SpectralField::from_physical(&g, &sq).unwrap();
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            assert!((a - b).norm() < 1e-15);
        }
        let z = SpectralField::zeros(&g).dealiased_product(&f).unwrap();
        assert!(z.norm_sq(0.0) < 1e-30);
    }

    #[test]
    fn product_beyond_cut_vanishes() {
        let g = grid(32);
        let c = Complex64::new(0.4, 0.1);
        // (6,0)·(6,0) feeds (12,0) and the mean only; both are discarded.
        let f = SpectralField::from_modes(&g, &[(6, 0, c)]).unwrap();
        let p = f.dealiased_product(&f).unwrap();
        assert!(p.coeffs().iter().all(|v| v.norm() <= 1e-15));
        p.validate().unwrap();
    }

    #[test]
    fn product_mismatched_grids() {
        let a = SpectralField::zeros(&grid(16));
        let b = SpectralField::zeros(&grid(32));
        assert!(matches!(a.dealiased_product(&b), Err(Error::GridMismatch)));
    }

    #[test]
    fn non_power_of_two_grid() {
        let g = Grid::new(3.0, 24).unwrap();
        let mut r = SeqRng::new(8);
        let f = random_field(&g, &mut r);
        let back = SpectralField::from_physical(&g, &f.to_physical()).unwrap();
        for (a, b) in f.coeffs().iter().zip(back.coeffs()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_quadrature() {
        let g = grid(16);
        let mut r = SeqRng::new(21);
        let a = random_field(&g, &mut r).project_low_modes(40).unwrap();
        let b = random_field(&g, &mut r).project_low_modes(40).unwrap();
        let mut s = JacobianScratch::new(&g);
        let mut j = SpectralField::zeros(&g);
        g.jacobian(a.coeffs(), b.coeffs(), j.coeffs_mut(), &mut s);
        let d = |f: &SpectralField, x: bool| {
            let mut h = f.clone();
            for (i, c) in h.coeffs_mut().iter_mut().enumerate() {
                let (kx, ky) = g.wavenumber(i);
                *c *= Complex64::new(0.0, if x { kx } else { ky });
            }
            h.to_physical()
        };
        let (ax, ay, bx, by) = (d(&a, true), d(&a, false), d(&b, true), d(&b, false));
        let phys: Vec<f64> = (0..g.len()).map(|i| ax[i] * by[i] - ay[i] * bx[i]).collect();
        let want = SpectralField::from_physical(&g, &phys).unwrap();
        assert!(libm::sqrt(j.sub(&want).norm_sq(0.0)) < 1e-12 * libm::sqrt(want.norm_sq(0.0)));
        let mut j1 = SpectralField::zeros(&g);
        let mut j2 = SpectralField::zeros(&g);
        g.jacobian_pair(a.coeffs(), b.coeffs(), b.coeffs(), a.coeffs(), j1.coeffs_mut(), j2.coeffs_mut(), &mut s);
        assert!(libm::sqrt(j1.sub(&j).norm_sq(0.0)) < 1e-12 * libm::sqrt(want.norm_sq(0.0)));
        let mut sum = j1.clone();
        sum.add_scaled(1.0, &j2);
        assert!(libm::sqrt(sum.norm_sq(0.0)) < 1e-12 * libm::sqrt(want.norm_sq(0.0)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn parseval_and_round_trip(seed in any::<u64>(), k in prop::sample::select(vec![8usize, 16, 32]), l in 0.5..10.0f64) {
            let g = Grid::new(l, k).unwrap();
            let mut r = SeqRng::new(seed);
            let f = random_field(&g, &mut r);
            let h = random_field(&g, &mut r);
            let (xf, xh) = (f.to_physical(), h.to_physical());
            let quad = xf.iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>() / g.len() as f64;
            let spec = f.inner(&h, 0.0);
            prop_assert!((quad - spec).abs() <= 1e-12 * f.norm_sq(0.0).max(h.norm_sq(0.0)));
            let back = SpectralField::from_physical(&g, &xf).unwrap();
            let err = back.sub(&f).norm_sq(0.0);
            prop_assert!(libm::sqrt(err) <= 1e-12 * libm::sqrt(f.norm_sq(0.0)));
        }

        #[test]
        fn projection_is_orthogonal_and_idempotent(seed in any::<u64>(), n in 0usize..200) {
            let g = grid(16);
            let mut r = SeqRng::new(seed);
            let f = random_field(&g, &mut r);
            let h = random_field(&g, &mut r);
            let n = n.min(g.real_dimension());
            let pf = f.project_low_modes(n).unwrap();
            let ph = h.project_low_modes(n).unwrap();
            prop_assert!((pf.inner(&h, 0.0) - f.inner(&ph, 0.0)).abs() < 1e-12 * (1.0 + f.norm_sq(0.0)));
            prop_assert_eq!(pf.project_low_modes(n).unwrap(), pf);
        }

        #[test]
        fn products_are_valid_fields(seed in any::<u64>()) {
            let g = grid(16);
            let mut r = SeqRng::new(seed);
            let p = random_field(&g, &mut r).dealiased_product(&random_field(&g, &mut r)).unwrap();
            prop_assert!(p.validate().is_ok());
            for (i, c) in p.coeffs().iter().enumerate() {
                prop_assert!(*c == p.coeffs()[g.mirror(i)].conj());
            }
        }
    }
}
