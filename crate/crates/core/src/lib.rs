//! Exact effective Hamiltonians of periodically driven systems whose
//! Hamiltonian closes in a finite Lie algebra.
//!
//! The pipeline: [`algebra`] turns structure constants into the adjoint
//! transformation machinery; [`factorization`] integrates the alpha-flow for
//! the product-form (Wei-Norman) parameters of the evolution operator;
//! [`recombination`] inverts the lambda-flow to the single-exponential
//! parameters beta and hence H_e = beta(T)/T; [`oracle`] verifies everything
//! against brute-force time-ordered products in a matrix representation; and
//! [`models`] ships the driven-trap, modulated-lattice, and driven-oscillator
//! presets with their independent references (Mathieu monodromy, Bessel
//! series).
//!
//! hbar = 1 throughout; all indices are 0-based.

pub mod algebra;
pub mod drive;
pub mod factorization;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod oracle;
pub mod recombination;
pub mod testing;
