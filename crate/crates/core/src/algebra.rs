//! Finite Lie algebras given by structure constants, and the adjoint-action
//! machinery built from them: the generators Q_k, the transformation matrices
//! M_k = exp(-Q_k alpha_k), their ordered product M_a, and the nu matrix that
//! drives both flow equations.
//!
//! Conventions. The basis operators h_0..h_{n-1} satisfy
//! [h_i, h_j] = i hbar sum_k c_{i,j,k} h_k with hbar = 1. Conjugation by
//! U_k(theta) = exp(i theta h_k) transforms the basis column vector as
//! U_k h U_k^dag = M_k(theta) h with M_k = exp(-Q_k theta) and
//! (Q_k)_{i,j} = c_{k,i,j}: differentiating gives
//! d/dtheta (U_k h_i U_k^dag) = i U_k [h_k, h_i] U_k^dag
//!                            = -sum_j c_{k,i,j} (M_k h)_j,
//! which pins the index placement. Structure constants are entered sparsely
//! and completed antisymmetrically: an entry (i, j, k, c) implies
//! (j, i, k, -c).
//!
//! All indices in this API are 0-based.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, CMatrix, Complex64};

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("algebra dimension must be at least 1")]
    EmptyAlgebra,
    #[error("structure constant index ({i}, {j}, {k}) out of range for dimension {n}")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        k: usize,
        n: usize,
    },
    #[error("generator index {k} out of range for dimension {n}")]
    GeneratorOutOfRange { k: usize, n: usize },
    #[error("coefficient vector has length {got}, algebra dimension is {n}")]
    DimensionMismatch { got: usize, n: usize },
    #[error("matrix exponential overflowed for generator {k} at parameter {alpha}")]
    Overflow { k: usize, alpha: f64 },
    #[error("algebra failed validation: {0}")]
    Invalid(String),
}

/// One sparse structure-constant entry c_{i,j,k} (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

impl ConstantEntry {
    pub fn new(i: usize, j: usize, k: usize, value: f64) -> Self {
        Self { i, j, k, value }
    }
}

/// A finite Lie algebra: dimension, sparse structure constants with automatic
/// antisymmetric completion, basis labels, and an optional faithful matrix
/// representation used by the oracle layer.
#[derive(Debug, Clone)]
pub struct LieAlgebraSpec {
    n: usize,
    labels: Vec<String>,
    /// Entries exactly as provided, kept for validation reporting.
    raw: Vec<ConstantEntry>,
    /// Canonical resolution keyed on i < j; first entry wins on conflicts,
    /// which validation reports separately.
    resolved: BTreeMap<(usize, usize, usize), f64>,
    /// Adjoint-action generators (Q_k)_{i,j} = c_{k,i,j}, assembled eagerly.
    q_mats: Vec<DMatrix<f64>>,
    rep: Option<Vec<CMatrix>>,
}

impl LieAlgebraSpec {
    pub fn new(n: usize, entries: &[ConstantEntry]) -> Result<Self, AlgebraError> {
        if n == 0 {
            return Err(AlgebraError::EmptyAlgebra);
        }
        for e in entries {
            if e.i >= n || e.j >= n || e.k >= n {
                return Err(AlgebraError::IndexOutOfRange {
                    i: e.i,
                    j: e.j,
                    k: e.k,
                    n,
                });
            }
        }
        let mut resolved = BTreeMap::new();
        for e in entries {
            let (key, value) = if e.i <= e.j {
                ((e.i, e.j, e.k), e.value)
            } else {
                ((e.j, e.i, e.k), -e.value)
            };
            resolved.entry(key).or_insert(value);
        }
        // [h_i, h_i] = 0: a diagonal entry can never contribute.
        resolved.retain(|&(i, j, _), _| i != j);

        let mut spec = Self {
            n,
            labels: (0..n).map(|k| format!("h{}", k + 1)).collect(),
            raw: entries.to_vec(),
            resolved,
            q_mats: Vec::new(),
            rep: None,
        };
        spec.q_mats = (0..n).map(|k| spec.assemble_q(k)).collect();
        Ok(spec)
    }

    /// The n-dimensional algebra with all commutators zero.
    pub fn abelian(n: usize) -> Self {
        Self::new(n, &[]).expect("abelian algebra of positive dimension")
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: Vec<S>) -> Self {
        assert_eq!(labels.len(), self.n, "one label per basis element");
        self.labels = labels.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_rep(mut self, rep: Vec<CMatrix>) -> Self {
        self.rep = Some(rep);
        self
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rep(&self) -> Option<&[CMatrix]> {
        self.rep.as_deref()
    }

    /// The resolved constant c_{i,j,k}, with antisymmetric completion.
    pub fn constant(&self, i: usize, j: usize, k: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        if i < j {
            *self.resolved.get(&(i, j, k)).unwrap_or(&0.0)
        } else {
            -*self.resolved.get(&(j, i, k)).unwrap_or(&0.0)
        }
    }

    /// Largest constant magnitude, used to scale validation tolerances.
    pub fn max_constant(&self) -> f64 {
        self.resolved
            .values()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }

    pub fn entries(&self) -> &[ConstantEntry] {
        &self.raw
    }

    fn assemble_q(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.constant(k, i, j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Adjoint generator Q_k.
    Q,
    /// Single-generator transformation M_k = exp(-Q_k alpha_k).
    M,
    /// Ordered product M_a = M_1 M_2 ... M_n.
    MProduct,
    /// The nu matrix I_1 M_2..M_n + I_2 M_3..M_n + ... + I_n.
    Nu,
}

/// An n x n adjoint-action matrix tagged with its role.
#[derive(Debug, Clone)]
pub struct TransformMatrix {
    pub kind: TransformKind,
    pub entries: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFiniteConstant {
        i: usize,
        j: usize,
        k: usize,
    },
    /// Two provided entries map to the same canonical slot with inconsistent
    /// values (covers both duplicates and broken antisymmetric pairs).
    Antisymmetry {
        i: usize,
        j: usize,
        k: usize,
        expected: f64,
        got: f64,
    },
    /// A diagonal entry c_{i,i,k} != 0 contradicts [h_i, h_i] = 0.
    DiagonalEntry {
        i: usize,
        k: usize,
        value: f64,
    },
    Jacobi {
        i: usize,
        j: usize,
        k: usize,
        l: usize,
        residual: f64,
    },
    RepShape {
        detail: String,
    },
    RepCommutator {
        i: usize,
        j: usize,
        residual: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonFiniteConstant { i, j, k } => {
                write!(f, "non-finite constant at ({i}, {j}, {k})")
            }
            Violation::Antisymmetry {
                i,
                j,
                k,
                expected,
                got,
            } => write!(
                f,
                "antisymmetry violated at ({i}, {j}, {k}): stored {expected}, conflicting {got}"
            ),
            Violation::DiagonalEntry { i, k, value } => {
                write!(f, "nonzero diagonal constant c_({i},{i},{k}) = {value}")
            }
            Violation::Jacobi { i, j, k, l, residual } => write!(
                f,
                "Jacobi identity violated for ({i}, {j}, {k}) on component {l}: residual {residual:e}"
            ),
            Violation::RepShape { detail } => write!(f, "representation shape: {detail}"),
            Violation::RepCommutator { i, j, residual } => write!(
                f,
                "representation commutator [rho_{i}, rho_{j}] off by {residual:e}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the algebra axioms: antisymmetry of the stored and implied entries,
/// the Jacobi identity on every index triple, and, when a representation is
/// attached, its commutator relations.
pub fn validate_algebra(spec: &LieAlgebraSpec) -> ValidationReport {
    let n = spec.dimension();
    let mut report = ValidationReport::default();

    for e in spec.entries() {
        if !e.value.is_finite() {
            report.violations.push(Violation::NonFiniteConstant {
                i: e.i,
                j: e.j,
                k: e.k,
            });
        }
        if e.i == e.j && e.value != 0.0 {
            report.violations.push(Violation::DiagonalEntry {
                i: e.i,
                k: e.k,
                value: e.value,
            });
        }
    }

    // Re-derive the canonical slots from scratch and flag every provided entry
    // that disagrees with the first-write resolution.
    let mut seen: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for e in spec.entries() {
        if e.i == e.j {
            continue;
        }
        let (key, value) = if e.i < e.j {
            ((e.i, e.j, e.k), e.value)
        } else {
            ((e.j, e.i, e.k), -e.value)
        };
        match seen.get(&key) {
            None => {
                seen.insert(key, value);
            }
            Some(&stored) if (stored - value).abs() > 1e-14 * stored.abs().max(1.0) => {
                report.violations.push(Violation::Antisymmetry {
                    i: key.0,
                    j: key.1,
                    k: key.2,
                    expected: stored,
                    got: value,
                });
            }
            Some(_) => {}
        }
    }

    let tol = 1e-12 * spec.max_constant().powi(2).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                for l in 0..n {
                    let mut residual = 0.0;
                    for m in 0..n {
                        residual += spec.constant(i, j, m) * spec.constant(m, k, l)
                            + spec.constant(j, k, m) * spec.constant(m, i, l)
                            + spec.constant(k, i, m) * spec.constant(m, j, l);
                    }
                    if residual.abs() > tol {
                        report.violations.push(Violation::Jacobi {
                            i,
                            j,
                            k,
                            l,
                            residual,
                        });
                    }
                }
            }
        }
    }

    if let Some(rep) = spec.rep() {
        check_rep(spec, rep, &mut report);
    }
    report
}

/// Commutator check for an arbitrary candidate representation, shared between
/// user-supplied reps and the built-in adjoint construction.
pub fn check_rep(spec: &LieAlgebraSpec, rep: &[CMatrix], report: &mut ValidationReport) {
    let n = spec.dimension();
    if rep.len() != n {
        report.violations.push(Violation::RepShape {
            detail: format!("expected {n} matrices, got {}", rep.len()),
        });
        return;
    }
    let d = rep[0].nrows();
    for (k, m) in rep.iter().enumerate() {
        if m.nrows() != d || m.ncols() != d {
            report.violations.push(Violation::RepShape {
                detail: format!(
                    "matrix {k} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                ),
            });
            return;
        }
    }
    let scale: f64 = rep
        .iter()
        .map(linalg::inf_norm)
        .fold(0.0, f64::max)
        .powi(2)
        .max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut rhs = CMatrix::zeros(d, d);
            for (k, rho) in rep.iter().enumerate() {
                let c = spec.constant(i, j, k);
                if c != 0.0 {
                    rhs += rho.map(|z| z * Complex64::new(0.0, c));
                }
            }
            let comm = &rep[i] * &rep[j] - &rep[j] * &rep[i];
            let residual = (comm - rhs).iter().map(|z| z.norm()).fold(0.0f64, f64::max);
            if residual > 1e-10 * scale {
                report
                    .violations
                    .push(Violation::RepCommutator { i, j, residual });
            }
        }
    }
}

/// The adjoint-action generator (Q_k)_{i,j} = c_{k,i,j}.
pub fn q_matrix(spec: &LieAlgebraSpec, k: usize) -> Result<TransformMatrix, AlgebraError> {
    if k >= spec.dimension() {
        return Err(AlgebraError::GeneratorOutOfRange {
            k,
            n: spec.dimension(),
        });
    }
    Ok(TransformMatrix {
        kind: TransformKind::Q,
        entries: spec.q_mats[k].clone(),
    })
}

/// M_k(alpha_k) = exp(-Q_k alpha_k), the adjoint action of exp(i alpha_k h_k).
pub fn m_matrix(
    spec: &LieAlgebraSpec,
    k: usize,
    alpha_k: f64,
) -> Result<TransformMatrix, AlgebraError> {
    if k >= spec.dimension() {
        return Err(AlgebraError::GeneratorOutOfRange {
            k,
            n: spec.dimension(),
        });
    }
    let m = linalg::expm(&(&spec.q_mats[k] * (-alpha_k)));
    if m.iter().any(|x| !x.is_finite()) {
        return Err(AlgebraError::Overflow { k, alpha: alpha_k });
    }
    Ok(TransformMatrix {
        kind: TransformKind::M,
        entries: m,
    })
}

/// Ordered product M_a = M_1 M_2 ... M_n evaluated at the given parameters.
pub fn m_a(spec: &LieAlgebraSpec, alpha: &DVector<f64>) -> Result<TransformMatrix, AlgebraError> {
    let (product, _) = product_and_nu(spec, alpha)?;
    Ok(TransformMatrix {
        kind: TransformKind::MProduct,
        entries: product,
    })
}

/// The nu matrix of the flow equations, assembled row by row:
/// row k of nu equals row k of the suffix product M_{k+1} ... M_n.
pub fn nu_matrix(
    spec: &LieAlgebraSpec,
    alpha: &DVector<f64>,
) -> Result<TransformMatrix, AlgebraError> {
    let (_, nu) = product_and_nu(spec, alpha)?;
    Ok(TransformMatrix {
        kind: TransformKind::Nu,
        entries: nu,
    })
}

/// One-pass assembly of both M_a = M_1..M_n and nu from the suffix products;
/// the flow right-hand sides call this on every evaluation.
pub fn product_and_nu(
    spec: &LieAlgebraSpec,
    alpha: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), AlgebraError> {
    let n = spec.dimension();
    if alpha.len() != n {
        return Err(AlgebraError::DimensionMismatch {
            got: alpha.len(),
            n,
        });
    }
    // suffix = M_{k+1} ... M_n while scanning k downwards
    let mut suffix = DMatrix::<f64>::identity(n, n);
    let mut nu = DMatrix::<f64>::zeros(n, n);
    for k in (0..n).rev() {
        nu.row_mut(k).copy_from(&suffix.row(k));
        let mk = m_matrix(spec, k, alpha[k])?;
        suffix = &mk.entries * &suffix;
    }
    Ok((suffix, nu))
}

/// Result of the canonical adjoint-representation construction
/// rho(h_k) = i Q_k^T.
#[derive(Debug, Clone)]
pub struct AdjointRep {
    pub matrices: Vec<CMatrix>,
    /// Orthonormal basis of the center: directions v with sum_k v_k Q_k = 0,
    /// invisible to the adjoint action.
    pub central_directions: Vec<DVector<f64>>,
    pub faithful: bool,
}

/// Builds the adjoint representation rho(h_k) = i Q_k^T, which satisfies
/// [rho_i, rho_j] = i sum_k c_{i,j,k} rho_k whenever the Jacobi identity
/// holds. Faithfulness is decided by the nullspace of the stacked Q matrices.
pub fn adjoint_rep(spec: &LieAlgebraSpec) -> AdjointRep {
    let n = spec.dimension();
    let matrices: Vec<CMatrix> = (0..n)
        .map(|k| spec.q_mats[k].transpose().map(|x| Complex64::new(0.0, x)))
        .collect();

    // columns of the n^2 x n map v -> vec(sum_k v_k Q_k)
    let mut stacked = DMatrix::<f64>::zeros(n * n, n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                stacked[(i * n + j, k)] = spec.q_mats[k][(i, j)];
            }
        }
    }
    let central_directions = linalg::nullspace(&stacked, 1e-12);
    let faithful = central_directions.is_empty();
    AdjointRep {
        matrices,
        central_directions,
        faithful,
    }
}

/// Coefficients of the conjugated operator: for O = beta^T h,
/// U_k(alpha_k) O U_k(alpha_k)^dag = (M_k^T beta)^T h.
pub fn transform_coefficients(
    spec: &LieAlgebraSpec,
    beta: &DVector<f64>,
    k: usize,
    alpha_k: f64,
) -> Result<DVector<f64>, AlgebraError> {
    if beta.len() != spec.dimension() {
        return Err(AlgebraError::DimensionMismatch {
            got: beta.len(),
            n: spec.dimension(),
        });
    }
    let m = m_matrix(spec, k, alpha_k)?;
    Ok(m.entries.transpose() * beta)
}
