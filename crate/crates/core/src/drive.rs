//! Time-dependent Hamiltonian coefficients a_i(t) as finite sums of constant,
//! cosine, and sine terms over a fundamental angular frequency omega.

use nalgebra::DVector;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriveError {
    #[error("fundamental frequency must be positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("harmonic index must be at least 1")]
    ZeroHarmonic,
    #[error("drive amplitude is not finite")]
    NonFiniteAmplitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveTerm {
    Const { amplitude: f64 },
    Cos { harmonic: u32, amplitude: f64 },
    Sin { harmonic: u32, amplitude: f64 },
}

/// Coefficient functions of the driven Hamiltonian H(t) = sum_i a_i(t) h_i,
/// one term list per generator. Evaluation is exact trigonometry, never
/// sampled.
#[derive(Debug, Clone)]
pub struct DriveSpec {
    omega: f64,
    terms: Vec<Vec<DriveTerm>>,
}

impl DriveSpec {
    pub fn new(omega: f64, terms: Vec<Vec<DriveTerm>>) -> Result<Self, DriveError> {
        if !omega.is_finite() || omega <= 0.0 {
            return Err(DriveError::NonPositiveOmega(omega));
        }
        for list in &terms {
            for term in list {
                match term {
                    DriveTerm::Const { amplitude } => {
                        if !amplitude.is_finite() {
                            return Err(DriveError::NonFiniteAmplitude);
                        }
                    }
                    DriveTerm::Cos {
                        harmonic,
                        amplitude,
                    }
                    | DriveTerm::Sin {
                        harmonic,
                        amplitude,
                    } => {
                        if *harmonic == 0 {
                            return Err(DriveError::ZeroHarmonic);
                        }
                        if !amplitude.is_finite() {
                            return Err(DriveError::NonFiniteAmplitude);
                        }
                    }
                }
            }
        }
        Ok(Self { omega, terms })
    }

    pub fn dimension(&self) -> usize {
        self.terms.len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Fundamental period T = 2 pi / omega.
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn terms(&self) -> &[Vec<DriveTerm>] {
        &self.terms
    }

    /// Instantaneous coefficient vector a(t).
    pub fn coefficients_at(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|list| {
                list.iter()
                    .map(|term| match *term {
                        DriveTerm::Const { amplitude } => amplitude,
                        DriveTerm::Cos {
                            harmonic,
                            amplitude,
                        } => amplitude * (harmonic as f64 * self.omega * t).cos(),
                        DriveTerm::Sin {
                            harmonic,
                            amplitude,
                        } => amplitude * (harmonic as f64 * self.omega * t).sin(),
                    })
                    .sum()
            }),
        )
    }

    /// Closed-form antiderivative of a(t) from 0 to t, component-wise; the
    /// exact alpha for abelian algebras.
    pub fn integral_to(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|list| {
                list.iter()
                    .map(|term| match *term {
                        DriveTerm::Const { amplitude } => amplitude * t,
                        DriveTerm::Cos {
                            harmonic,
                            amplitude,
                        } => {
                            let w = harmonic as f64 * self.omega;
                            amplitude * (w * t).sin() / w
                        }
                        DriveTerm::Sin {
                            harmonic,
                            amplitude,
                        } => {
                            let w = harmonic as f64 * self.omega;
                            amplitude * (1.0 - (w * t).cos()) / w
                        }
                    })
                    .sum()
            }),
        )
    }

    /// Upper bound on max_t |a_i(t)| per component (sum of amplitudes).
    pub fn amplitude_bound(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|list| {
                list.iter()
                    .map(|term| match *term {
                        DriveTerm::Const { amplitude }
                        | DriveTerm::Cos { amplitude, .. }
                        | DriveTerm::Sin { amplitude, .. } => amplitude.abs(),
                    })
                    .sum()
            }),
        )
    }
}
