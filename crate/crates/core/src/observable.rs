//! Bounded observables.
//!
//! Every observable passes its raw value through the soft clip
//! `c·tanh(x/c)`, which is the identity to first order on the bulk of the
//! invariant measure but keeps the function bounded and globally Lipschitz.

use alloc::vec::Vec;

use crate::spectral::{lambda_pow, SpectralField};
use crate::{Error, Result};

/// States made of one or more spectral layers.
pub trait SpectralState {
    fn layer(&self, i: usize) -> Option<&SpectralField>;
}

/// `c·tanh(x/c)`; an infinite scale disables clipping.
pub fn soft_clip(x: f64, scale: f64) -> f64 {
    if scale.is_infinite() {
        x
    } else {
        scale * libm::tanh(x / scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

/// Observables of spectral states.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralObservable {
    /// `clip(Re ω̂_(m,n))` or its imaginary part, on one layer.
    Mode { layer: usize, m: i64, n: i64, part: Part, clip: f64 },
    /// `clip(Σ λ_k^s |ω̂_k|²)` over integer shells `k_min ≤ |k| ≤ k_max`.
    BandEnergy { layer: usize, k_min: f64, k_max: f64, sobolev: f64, clip: f64 },
    /// `clip(Σ w_i φ_i)`.
    Composite { terms: Vec<(f64, SpectralObservable)>, clip: f64 },
}

impl SpectralObservable {
    /// Rejects clip scales that are not positive.
    pub fn validate(&self) -> Result<()> {
        let clip = match self {
            SpectralObservable::Mode { clip, .. } => *clip,
            SpectralObservable::BandEnergy { clip, k_min, k_max, .. } => {
                if k_min > k_max {
                    return Err(Error::InvalidArgument("empty band".into()));
                }
                *clip
            }
            SpectralObservable::Composite { terms, clip } => {
                for (_, t) in terms {
                    t.validate()?;
                }
                *clip
            }
        };
        if clip > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(alloc::format!("clip scale {clip} must be positive")))
        }
    }

    pub fn evaluate<S: SpectralState>(&self, x: &S) -> f64 {
        match self {
            SpectralObservable::Mode { layer, m, n, part, clip } => {
                let v = x.layer(*layer).and_then(|f| f.get(*m, *n).ok()).map_or(0.0, |c| {
                    if *part == Part::Re {
                        c.re
                    } else {
                        c.im
                    }
                });
                soft_clip(v, *clip)
            }
            SpectralObservable::BandEnergy { layer, k_min, k_max, sobolev, clip } => {
                let Some(f) = x.layer(*layer) else { return 0.0 };
                let g = f.grid();
                let mut acc = 0.0;
                for &i in g.canonical() {
                    let (m, n) = g.wavevector(i);
                    let r = libm::sqrt((m * m + n * n) as f64);
                    if r >= *k_min && r <= *k_max {
                        acc += lambda_pow(g.lambda(i), *sobolev) * f.coeffs()[i].norm_sqr();
                    }
                }
                soft_clip(2.0 * acc, *clip)
            }
            SpectralObservable::Composite { terms, clip } => {
                soft_clip(terms.iter().map(|(w, t)| w * t.evaluate(x)).sum(), *clip)
            }
        }
    }
}

/// Observables of finite-dimensional vector states.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorObservable {
    /// `clip(c·x)`.
    Linear { c: Vec<f64>, clip: f64 },
    /// `clip(xᵀHx)`, `H` row-major.
    Quadratic { h: Vec<f64>, clip: f64 },
}

impl VectorObservable {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            VectorObservable::Linear { c, clip } => soft_clip(c.iter().zip(x).map(|(a, b)| a * b).sum(), *clip),
            VectorObservable::Quadratic { h, clip } => {
                let d = x.len();
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        acc += x[i] * h[i * d + j] * x[j];
                    }
                }
                soft_clip(acc, *clip)
            }
        }
    }
}

impl crate::dynamics::Observable<Vec<f64>> for VectorObservable {
    fn eval(&self, x: &Vec<f64>) -> f64 {
        self.evaluate(x)
    }
}

/// A function on the states of a finite chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainObservable(pub Vec<f64>);

impl crate::dynamics::Observable<usize> for ChainObservable {
    fn eval(&self, x: &usize) -> f64 {
        self.0[*x]
    }
}

/// The constant observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl<S> crate::dynamics::Observable<S> for Constant {
    fn eval(&self, _: &S) -> f64 {
        self.0
    }
}

macro_rules! spectral_observable_for {
    ($($t:ty),*) => {$(
        impl crate::dynamics::Observable<$t> for SpectralObservable {
            fn eval(&self, x: &$t) -> f64 {
                self.evaluate(x)
            }
        }
    )*};
}

spectral_observable_for!(crate::ns::NsState, crate::qg::QgState);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ns::NsState;
    use crate::spectral::Grid;
    use core::f64::consts::PI;
    use num_complex::Complex64;

    #[test]
    fn clip_is_bounded_and_tangent_to_identity() {
        assert_eq!(soft_clip(0.3, f64::INFINITY), 0.3);
        assert!((soft_clip(1e-4, 1.0) - 1e-4).abs() < 1e-12);
        assert!(soft_clip(1e9, 2.0) <= 2.0);
    }

    #[test]
    fn spectral_observables() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let w = SpectralField::from_modes(&g, &[(1, 0, Complex64::new(0.5, -0.25)), (2, 2, Complex64::new(0.0, 1.0))])
            .unwrap();
        let x = NsState::new(w);
        let re = SpectralObservable::Mode { layer: 0, m: 1, n: 0, part: Part::Re, clip: f64::INFINITY };
        let im = SpectralObservable::Mode { layer: 0, m: -1, n: 0, part: Part::Im, clip: f64::INFINITY };
        assert_eq!(re.evaluate(&x), 0.5);
        assert_eq!(im.evaluate(&x), 0.25);
        let band =
            SpectralObservable::BandEnergy { layer: 0, k_min: 0.0, k_max: 1.5, sobolev: 0.0, clip: f64::INFINITY };
        assert!((band.evaluate(&x) - 2.0 * 0.3125).abs() < 1e-15);
        let comp = SpectralObservable::Composite { terms: alloc::vec![(2.0, re), (-1.0, band)], clip: 10.0 };
        assert!((comp.evaluate(&x) - soft_clip(1.0 - 0.625, 10.0)).abs() < 1e-15);
        let off = SpectralObservable::Mode { layer: 1, m: 1, n: 0, part: Part::Re, clip: 1.0 };
        assert_eq!(off.evaluate(&x), 0.0);
    }

    #[test]
    fn vector_observables() {
        let q = VectorObservable::Quadratic { h: alloc::vec![1.0, 0.5, 0.5, 2.0], clip: f64::INFINITY };
        assert_eq!(q.evaluate(&[1.0, 2.0]), 1.0 + 2.0 + 8.0);
        let l = VectorObservable::Linear { c: alloc::vec![1.0, -1.0], clip: f64::INFINITY };
        assert_eq!(l.evaluate(&[3.0, 1.0]), 2.0);
    }
}
