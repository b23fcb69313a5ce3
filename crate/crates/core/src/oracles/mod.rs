//! Finite-dimensional systems with exactly computable invariant measures
//! and responses: finite Markov chains and Ornstein–Uhlenbeck processes.

pub mod chain;
pub mod ou;

pub use chain::{AffineChain, ChainSampler, ResolventReport};
pub use ou::{OuModel, OuWorkspace};

use crate::{Error, Result};

/// Scalar profile `s(a)` multiplying the direction of a parametric family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    /// `s(a) = a`.
    Linear,
    /// `s(a) = sign(a − anchor)·|a − anchor|^β`.
    Holder { beta: f64, anchor: f64 },
    /// `s(a) = sin a`.
    Sine,
}

impl Amplitude {
    pub fn at(&self, a: f64) -> f64 {
        match *self {
            Amplitude::Linear => a,
            Amplitude::Holder { beta, anchor } => {
                let h = a - anchor;
                libm::copysign(libm::pow(libm::fabs(h), beta), h)
            }
            Amplitude::Sine => libm::sin(a),
        }
    }

    /// `s'(a)`; fails where the profile is not differentiable.
    pub fn derivative(&self, a: f64) -> Result<f64> {
        match *self {
            Amplitude::Linear => Ok(1.0),
            Amplitude::Holder { beta, anchor } => {
                if beta == 1.0 {
                    Ok(1.0)
                } else if beta > 1.0 || a != anchor {
                    let h = libm::fabs(a - anchor);
                    Ok(beta * libm::pow(h, beta - 1.0))
                } else {
                    Err(Error::NotDifferentiable)
                }
            }
            Amplitude::Sine => Ok(libm::cos(a)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Amplitude::Holder { beta, anchor } = *self {
            if !(beta > 0.0 && beta <= 1.0 && anchor.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!("Hölder exponent {beta} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let h = Amplitude::Holder { beta: 0.5, anchor: 1.0 };
        assert_eq!(h.at(1.25), 0.5);
        assert_eq!(h.at(0.75), -0.5);
        assert_eq!(h.derivative(1.0), Err(Error::NotDifferentiable));
        assert!((h.derivative(1.25).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(Amplitude::Linear.derivative(3.0), Ok(1.0));
        assert!(Amplitude::Holder { beta: 0.0, anchor: 0.0 }.validate().is_err());
    }
}
