//! Additive Q-Wiener noise diagonal in the Fourier basis, parametric
//! forcing families, and the Girsanov weights built from them.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::rng::StepRng;
use crate::spectral::{lambda_pow, Grid, SpectralField};
use crate::{Error, Result};

/// Per-mode variances `q_k` of a Wiener process diagonal in the Fourier basis.
///
/// `q` is stored for every storage index and is symmetric under `k ↦ −k`;
/// `Tr Q = Σ_k q_k` runs over the whole lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    grid: Arc<Grid>,
    q: Vec<f64>,
}

impl NoiseSpec {
    pub fn zero(grid: &Arc<Grid>) -> Self {
        NoiseSpec { grid: grid.clone(), q: vec![0.0; grid.len()] }
    }

    /// `q_k = c·|k|^{−s}` for retained `0 < |k| ≤ k_max`, with `|k|` the
    /// integer wavevector length.
    pub fn power_law(grid: &Arc<Grid>, c: f64, s: f64, k_max: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite() && s.is_finite() && k_max >= 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("noise spectrum c = {c}, s = {s}, k_max = {k_max}")));
        }
        let mut spec = Self::zero(grid);
        for i in 0..grid.len() {
            if !grid.is_retained(i) {
                continue;
            }
            let (m, n) = grid.wavevector(i);
            let r = libm::sqrt((m * m + n * n) as f64);
            if r <= k_max {
                spec.q[i] = c * libm::pow(r, -s);
            }
        }
        Ok(spec)
    }

    /// Replaces the variance of the pair `±(m, n)`.
    pub fn with_override(mut self, m: i64, n: i64, q: f64) -> Result<Self> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("noise variance {q} at ({m}, {n})")));
        }
        let i = self.grid.index(m, n)?;
        if (m, n) == (0, 0) {
            return Err(Error::InvalidArgument("the mean mode carries no noise".into()));
        }
        self.q[i] = q;
        let j = self.grid.mirror(i);
        self.q[j] = q;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q[i]
    }

    pub fn variances(&self) -> &[f64] {
        &self.q
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.q[i] > 0.0
    }

    pub fn trace(&self) -> f64 {
        self.q.iter().sum()
    }

    /// `Σ_k λ_k^s q_k`; `s = −1` is the trace of the induced velocity noise
    /// when `Q` acts on vorticity.
    pub fn weighted_trace(&self, s: f64) -> f64 {
        self.q.iter().enumerate().filter(|(_, &q)| q > 0.0).map(|(i, &q)| q * lambda_pow(self.grid.lambda(i), s)).sum()
    }

    /// Whether the untruncated spectrum `c|k|^{−s}` has infinite trace in 2D.
    pub fn continuum_trace_diverges(s: f64) -> bool {
        s <= 2.0
    }

    /// Draws `ΔW` with `E|ΔŴ_k|² = q_k·dt` into a coefficient array.
    ///
    /// Independent complex Gaussians are drawn on the canonical half-lattice,
    /// in its fixed order, and mirrored as conjugates.
    pub fn sample_into(&self, dt: f64, rng: &mut StepRng, out: &mut [Complex64]) {
        for c in out.iter_mut() {
            *c = Complex64::new(0.0, 0.0);
        }
        for &i in self.grid.canonical() {
            let q = self.q[i];
            if q > 0.0 {
                let s = libm::sqrt(q * dt / 2.0);
                let z = Complex64::new(s * rng.normal(), s * rng.normal());
                out[i] = z;
                out[self.grid.mirror(i)] = z.conj();
            }
        }
    }

    pub fn sample(&self, dt: f64, rng: &mut StepRng) -> SpectralField {
        let mut f = SpectralField::zeros(&self.grid);
        self.sample_into(dt, rng, f.coeffs_mut());
        f
    }

    /// First mode of `field` lying outside the active set, if any.
    pub fn range_violation(&self, field: &SpectralField) -> Option<(i64, i64)> {
        field
            .coeffs()
            .iter()
            .enumerate()
            .find(|(i, c)| c.norm_sqr() > 0.0 && self.q[*i] <= 0.0)
            .map(|(i, _)| self.grid.wavevector(i))
    }

    /// `|Q^{−1/2} d|² = Σ_k |d̂_k|²/q_k` (optionally with per-mode gains),
    /// infinite if `d` leaves the active set.
    pub fn cameron_martin_sq(&self, d: &[Complex64], gain: Option<&[f64]>) -> f64 {
        let mut acc = 0.0;
        for &i in self.grid.canonical() {
            let n = d[i].norm_sqr();
            if n == 0.0 {
                continue;
            }
            if self.q[i] <= 0.0 {
                return f64::INFINITY;
            }
            let g = gain.map_or(1.0, |g| g[i]);
            acc += g * g * n / self.q[i];
        }
        2.0 * acc
    }

    /// `(Q^{−1} G d, ΔW) = Σ_k Re(conj(d̂_k)·g_k·ΔŴ_k)/q_k` summed over the
    /// whole lattice. Modes with `d̂_k = 0` contribute nothing.
    pub fn pair(&self, d: &[Complex64], dw: &[Complex64], gain: Option<&[f64]>) -> f64 {
        let mut acc = 0.0;
        for &i in self.grid.canonical() {
            let di = d[i];
            if di.re == 0.0 && di.im == 0.0 {
                continue;
            }
            let g = gain.map_or(1.0, |g| g[i]);
            acc += g * (di.re * dw[i].re + di.im * dw[i].im) / self.q[i];
        }
        2.0 * acc
    }
}

/// How the forcing amplitude depends on the parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingMode {
    /// `f(a) = f_base + a·f_dir`.
    Linear,
    /// `f(a) = f_base + sign(a − a₀)|a − a₀|^β·f_dir`.
    Holder { beta: f64, anchor: f64 },
}

/// The parametric forcing `a ↦ f(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingFamily {
    base: SpectralField,
    dir: SpectralField,
    mode: ForcingMode,
}

impl ForcingFamily {
    pub fn new(base: SpectralField, dir: SpectralField, mode: ForcingMode) -> Result<Self> {
        base.same_grid(&dir)?;
        base.validate()?;
        dir.validate()?;
        if let ForcingMode::Holder { beta, anchor } = mode {
            if !(beta > 0.0 && beta <= 1.0) || !anchor.is_finite() {
                return Err(Error::InvalidArgument(alloc::format!("Hölder exponent {beta} must lie in (0, 1]")));
            }
        }
        Ok(ForcingFamily { base, dir, mode })
    }

    pub fn linear(base: SpectralField, dir: SpectralField) -> Result<Self> {
        Self::new(base, dir, ForcingMode::Linear)
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        let z = SpectralField::zeros(grid);
        ForcingFamily { base: z.clone(), dir: z, mode: ForcingMode::Linear }
    }

    pub fn base(&self) -> &SpectralField {
        &self.base
    }

    pub fn direction(&self) -> &SpectralField {
        &self.dir
    }

    pub fn mode(&self) -> ForcingMode {
        self.mode
    }

    pub fn amplitude(&self, a: f64) -> f64 {
        match self.mode {
            ForcingMode::Linear => a,
            ForcingMode::Holder { beta, anchor } => {
                let d = a - anchor;
                if d == 0.0 {
                    0.0
                } else {
                    d.signum() * libm::pow(d.abs(), beta)
                }
            }
        }
    }

    /// `d amplitude / da`, defined everywhere only for exponent one.
    pub fn amplitude_derivative(&self) -> Result<f64> {
        match self.mode {
            ForcingMode::Linear => Ok(1.0),
            ForcingMode::Holder { beta: 1.0, .. } => Ok(1.0),
            ForcingMode::Holder { .. } => Err(Error::NotDifferentiable),
        }
    }

    /// `f(a)`.
    pub fn at(&self, a: f64) -> SpectralField {
        let mut f = self.base.clone();
        let s = self.amplitude(a);
        if s != 0.0 {
            f.add_scaled(s, &self.dir);
        }
        f
    }

    /// `f(a)` written into a coefficient array.
    pub fn write_at(&self, a: f64, out: &mut [Complex64]) {
        let s = self.amplitude(a);
        for ((o, b), d) in out.iter_mut().zip(self.base.coeffs()).zip(self.dir.coeffs()) {
            *o = b + d * s;
        }
    }

    /// Whether `D_a f` is supported on the noise-active modes.
    pub fn in_range(&self, noise: &NoiseSpec) -> bool {
        noise.range_violation(&self.dir).is_none()
    }

    /// Errors with the first mode of `f_dir` outside the range of `Q`.
    pub fn check_range(&self, noise: &NoiseSpec) -> Result<()> {
        match noise.range_violation(&self.dir) {
            Some((m, n)) => Err(Error::RangeViolation { m, n }),
            None => Ok(()),
        }
    }
}

/// Running Girsanov quantities along one trajectory.
///
/// `m` is the score `(Q⁻¹D_a f, W)`, `martingale` is
/// `M^a = (Q⁻¹(f(a) − f(a₀)), W)`, `quad` its quadratic variation and
/// `log_density = M^a − ½⟨M^a⟩`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GirsanovLedger {
    pub m: f64,
    pub martingale: f64,
    pub quad: f64,
    pub log_density: f64,
}

impl GirsanovLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the contribution of one increment `dW` over a step `dt` for the
    /// law at `a` relative to the reference `a₀`.
    ///
    /// `gain` carries per-mode factors by which a time discretization maps a
    /// forcing perturbation into the noise channel (all ones for schemes
    /// that treat both identically).
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate(
        &mut self,
        noise: &NoiseSpec,
        family: &ForcingFamily,
        a: f64,
        a0: f64,
        dw: &[Complex64],
        dt: f64,
        gain: Option<&[f64]>,
    ) -> Result<()> {
        family.check_range(noise)?;
        let dir = family.direction().coeffs();
        if let Ok(d) = family.amplitude_derivative() {
            self.m += d * noise.pair(dir, dw, gain);
        }
        let s = family.amplitude(a) - family.amplitude(a0);
        if s != 0.0 {
            let dm = s * noise.pair(dir, dw, gain);
            let dq = s * s * noise.cameron_martin_sq(dir, gain) * dt;
            self.martingale += dm;
            self.quad += dq;
            self.log_density += dm - 0.5 * dq;
        }
        Ok(())
    }

    pub fn density(&self) -> f64 {
        libm::exp(self.log_density)
    }
}
