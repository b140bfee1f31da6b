//! The built-in driven models: the Paul trap, the modulated optical lattice,
//! and the Kapitza (driven oscillator) preset, each shipping its algebra,
//! drive, a designated oracle representation, the quadratic-reduction recipe,
//! and closed-form reference quantities. Also hosts the Mathieu reference
//! integrator and the Bessel J_0 series the lattice results are checked
//! against.
//!
//! Unit conventions: hbar = 1 throughout; masses and frequencies are entered
//! in hbar = 1 units.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::algebra::{adjoint_rep, ConstantEntry, LieAlgebraSpec};
use crate::drive::{DriveError, DriveSpec, DriveTerm};
use crate::linalg::{CMatrix, Complex64};
use crate::ode::{integrate, DenseSolution, IvpProblem, OdeError};
use crate::recombination::{BetaResult, ReductionStep};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter {name} = {value} rejected: {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    PaulTrap {
        m: f64,
        omega0: f64,
        omega1: f64,
        omega: f64,
    },
    OpticalLattice {
        hopping: f64,
        kappa: f64,
        omega: f64,
    },
    Kapitza {
        m: f64,
        omega0: f64,
        omega: f64,
        force: f64,
    },
    Custom,
}

/// A ready-to-run model: validated algebra (with its oracle representation
/// attached), drive, reduction recipe, and parameter echo.
#[derive(Debug, Clone)]
pub struct ModelPreset {
    pub name: &'static str,
    pub kind: ModelKind,
    pub algebra: LieAlgebraSpec,
    pub drive: DriveSpec,
    /// Note attached when the designated representation cannot see part of
    /// the algebra (a nontrivial center).
    pub central_note: Option<String>,
    /// Basis directions invisible to the representation (0-based indices).
    pub central_components: Vec<usize>,
    pub reduction: Option<Vec<ReductionStep>>,
    pub params: Vec<(&'static str, f64)>,
    pub warnings: Vec<String>,
}

impl ModelPreset {
    /// The designated oracle representation.
    pub fn rep(&self) -> &[CMatrix] {
        self.algebra.rep().expect("presets always attach a rep")
    }

    pub fn period(&self) -> f64 {
        self.drive.period()
    }
}

fn require(
    name: &'static str,
    value: f64,
    requirement: &'static str,
    ok: bool,
) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            requirement,
        })
    }
}

/// Particle of mass m in the modulated harmonic potential
/// (omega_1^2 + omega_0^2 cos(omega t)) m x^2 / 2 + p^2 / 2m on the algebra
/// (x^2, p^2, xp+px). The attached 2x2 representation is the phase-space
/// action on (x, p) generated from the structure constants.
pub fn paul_trap(m: f64, omega0: f64, omega1: f64, omega: f64) -> Result<ModelPreset, ModelError> {
    require("m", m, "must be positive", m > 0.0)?;
    require("omega0", omega0, "must be non-negative", omega0 >= 0.0)?;
    require("omega1", omega1, "must be non-negative", omega1 >= 0.0)?;
    require("omega", omega, "must be positive", omega > 0.0)?;

    // 2x2 phase-space generators: rho_k = i G_k with
    // d/dtheta U_k (x,p)^T U_k^dag = G_k (x,p)^T.
    let g = [
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -2.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]),
    ];
    let rep: Vec<CMatrix> = g
        .iter()
        .map(|gk| gk.map(|x| Complex64::new(0.0, x)))
        .collect();

    let algebra = LieAlgebraSpec::new(
        3,
        &[
            ConstantEntry::new(0, 1, 2, 2.0),
            ConstantEntry::new(0, 2, 0, 4.0),
            ConstantEntry::new(1, 2, 1, -4.0),
        ],
    )
    .expect("paul-trap constants")
    .with_labels(vec!["x^2", "p^2", "xp+px"])
    .with_rep(rep);

    let drive = DriveSpec::new(
        omega,
        vec![
            vec![
                DriveTerm::Const {
                    amplitude: m * omega1 * omega1 / 2.0,
                },
                DriveTerm::Cos {
                    harmonic: 1,
                    amplitude: m * omega0 * omega0 / 2.0,
                },
            ],
            vec![DriveTerm::Const {
                amplitude: 1.0 / (2.0 * m),
            }],
            vec![],
        ],
    )?;

    Ok(ModelPreset {
        name: "paul-trap",
        kind: ModelKind::PaulTrap {
            m,
            omega0,
            omega1,
            omega,
        },
        algebra,
        drive,
        central_note: None,
        central_components: Vec::new(),
        // conjugation by exp(i theta x^2) with theta = he_cross / (2 he_p2)
        // removes the xp+px term
        reduction: Some(vec![ReductionStep {
            generator: 0,
            numerator: 2,
            denominator: 1,
            scale: 0.5,
        }]),
        params: vec![
            ("m", m),
            ("omega0", omega0),
            ("omega1", omega1),
            ("omega", omega),
        ],
        warnings: Vec::new(),
    })
}

/// Mathieu parameters of the Paul-trap preset: a = 4 w1^2 / w^2,
/// q = -2 w0^2 / w^2 for y'' + (a - 2q cos 2v) y = 0 with v = w t / 2.
pub fn paul_trap_mathieu_parameters(preset: &ModelPreset) -> Option<(f64, f64)> {
    match preset.kind {
        ModelKind::PaulTrap {
            omega0,
            omega1,
            omega,
            ..
        } => Some((
            4.0 * omega1 * omega1 / (omega * omega),
            -2.0 * omega0 * omega0 / (omega * omega),
        )),
        _ => None,
    }
}

/// Modulated tight-binding lattice in the single-particle shift-operator
/// picture: h_1 = V (lattice potential), h_2 = the current-like closure
/// generator, h_3 = the hopping term with J absorbed. The drive is
/// H = h_3 + omega kappa cos(omega t) h_1; the faithful 3x3 adjoint
/// representation is attached.
pub fn optical_lattice(hopping: f64, kappa: f64, omega: f64) -> Result<ModelPreset, ModelError> {
    require("J", hopping, "must be positive", hopping > 0.0)?;
    require("kappa", kappa, "must be finite", kappa.is_finite())?;
    require("omega", omega, "must be positive", omega > 0.0)?;

    let bare = LieAlgebraSpec::new(
        3,
        &[
            ConstantEntry::new(0, 1, 2, 1.0),
            ConstantEntry::new(0, 2, 1, -1.0),
        ],
    )
    .expect("lattice constants");
    let adj = adjoint_rep(&bare);
    let algebra = bare
        .with_labels(vec!["V", "current", "hopping"])
        .with_rep(adj.matrices);

    let drive = DriveSpec::new(
        omega,
        vec![
            vec![DriveTerm::Cos {
                harmonic: 1,
                amplitude: omega * kappa,
            }],
            vec![],
            vec![DriveTerm::Const { amplitude: 1.0 }],
        ],
    )?;

    Ok(ModelPreset {
        name: "optical-lattice",
        kind: ModelKind::OpticalLattice {
            hopping,
            kappa,
            omega,
        },
        algebra,
        drive,
        central_note: None,
        central_components: Vec::new(),
        reduction: None,
        params: vec![("J", hopping), ("kappa", kappa), ("omega", omega)],
        warnings: Vec::new(),
    })
}

/// Harmonic oscillator under a cosine force on the algebra
/// (1, x, p, m^2 w0^2 x^2 + p^2). The adjoint 4x4 representation is blind to
/// the central h_1; the constant coefficient is certified against the
/// closed-form shift instead.
pub fn kapitza(m: f64, omega0: f64, omega: f64, force: f64) -> Result<ModelPreset, ModelError> {
    require("m", m, "must be positive", m > 0.0)?;
    require("omega0", omega0, "must be positive", omega0 > 0.0)?;
    require("omega", omega, "must be positive", omega > 0.0)?;
    require("F", force, "must be finite", force.is_finite())?;

    let mut warnings = Vec::new();
    if (omega - omega0).abs() < 1e-9 * omega.max(omega0) {
        warnings.push(format!(
            "resonant drive omega = omega0 = {omega}: the closed-form shift diverges; raw runs only"
        ));
    }

    let mw2 = (m * omega0).powi(2);
    let bare = LieAlgebraSpec::new(
        4,
        &[
            ConstantEntry::new(1, 2, 0, 1.0),
            ConstantEntry::new(3, 1, 2, -2.0),
            ConstantEntry::new(3, 2, 1, 2.0 * mw2),
        ],
    )
    .expect("kapitza constants");
    let adj = adjoint_rep(&bare);
    let algebra = bare
        .with_labels(vec!["1", "x", "p", "m^2 w0^2 x^2 + p^2"])
        .with_rep(adj.matrices);

    let drive = DriveSpec::new(
        omega,
        vec![
            vec![],
            vec![DriveTerm::Cos {
                harmonic: 1,
                amplitude: force,
            }],
            vec![],
            vec![DriveTerm::Const {
                amplitude: 1.0 / (2.0 * m),
            }],
        ],
    )?;

    Ok(ModelPreset {
        name: "kapitza",
        kind: ModelKind::Kapitza {
            m,
            omega0,
            omega,
            force,
        },
        algebra,
        drive,
        central_note: Some(
            "adjoint representation cannot see the central generator h_1; \
             its coefficient is certified against the closed-form shift"
                .to_string(),
        ),
        central_components: vec![0],
        // exp(i theta_1 x) with theta_1 = he_p / (2 he_4), then exp(i theta_2 p)
        // with theta_2 = -he_x / (2 m^2 w0^2 he_4)
        reduction: Some(vec![
            ReductionStep {
                generator: 1,
                numerator: 2,
                denominator: 3,
                scale: 0.5,
            },
            ReductionStep {
                generator: 2,
                numerator: 1,
                denominator: 3,
                scale: -1.0 / (2.0 * mw2),
            },
        ]),
        params: vec![("m", m), ("omega0", omega0), ("omega", omega), ("F", force)],
        warnings,
    })
}

/// Closed-form quasienergy shift F^2 / (4 m (omega^2 - omega_0^2)) of the
/// reduced Kapitza Hamiltonian; None at resonance.
pub fn kapitza_constant_shift(m: f64, omega0: f64, omega: f64, force: f64) -> Option<f64> {
    let denom = 4.0 * m * (omega * omega - omega0 * omega0);
    if denom == 0.0 {
        None
    } else {
        Some(force * force / denom)
    }
}

/// Bessel J_0 by its power series: sum_k (-1)^k (x^2/4)^k / (k!)^2. The
/// independent reference for the lattice's dynamic-localization results.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=80 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Stability classification from the Mathieu monodromy trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stability::Stable => write!(f, "stable"),
            Stability::Unstable => write!(f, "unstable"),
        }
    }
}

/// Fundamental solutions and Floquet data of y'' + (a - 2q cos 2v) y = 0.
#[derive(Debug)]
pub struct MathieuReference {
    /// (y, y') with y(0) = 1, y'(0) = 0, the monodromy-normalized even
    /// solution.
    pub even: DenseSolution,
    /// (y, y') with y(0) = 0, y'(0) = 1.
    pub odd: DenseSolution,
    /// One-period (v in [0, pi]) propagator of (y, y').
    pub monodromy: DMatrix<f64>,
    pub trace: f64,
    /// Stable iff |trace| < 2.
    pub stable: bool,
    /// sigma with Floquet multipliers e^{+-i pi sigma}; defined for
    /// |trace| <= 2 (boundaries included).
    pub characteristic_exponent: Option<f64>,
    /// mu >= 0 with |multipliers| = e^{+- pi mu}; defined for |trace| >= 2.
    pub growth_exponent: Option<f64>,
}

/// Integrates both fundamental Mathieu solutions to max(v_end, pi); all
/// Mathieu quantities come from direct ODE integration, never from special
/// functions.
pub fn mathieu_reference(a: f64, q: f64, v_end: f64) -> Result<MathieuReference, ModelError> {
    let span = v_end.max(std::f64::consts::PI);
    let solve = |y0: [f64; 2]| -> Result<DenseSolution, OdeError> {
        integrate(
            &IvpProblem::new(
                (0.0, span),
                DVector::from_vec(vec![y0[0], y0[1]]),
                move |v, y, out| {
                    out[0] = y[1];
                    out[1] = -(a - 2.0 * q * (2.0 * v).cos()) * y[0];
                    Ok(())
                },
            )
            .with_tolerances(1e-12, 1e-12),
        )
    };
    let even = solve([1.0, 0.0])?;
    let odd = solve([0.0, 1.0])?;

    let ye = even.eval(std::f64::consts::PI);
    let yo = odd.eval(std::f64::consts::PI);
    let monodromy = DMatrix::from_row_slice(2, 2, &[ye[0], yo[0], ye[1], yo[1]]);
    let trace = monodromy[(0, 0)] + monodromy[(1, 1)];
    let stable = trace.abs() < 2.0;
    // exponents carry a small tolerance band so the exact boundary
    // |trace| = 2 yields both (sigma in {0, 1}, mu = 0) instead of neither
    let characteristic_exponent = if trace.abs() <= 2.0 + 1e-12 {
        Some((trace / 2.0).clamp(-1.0, 1.0).acos() / std::f64::consts::PI)
    } else {
        None
    };
    let growth_exponent = if trace.abs() >= 2.0 - 1e-12 {
        Some(((trace.abs() / 2.0).max(1.0)).acosh() / std::f64::consts::PI)
    } else {
        None
    };

    Ok(MathieuReference {
        even,
        odd,
        monodromy,
        trace,
        stable,
        characteristic_exponent,
        growth_exponent,
    })
}

/// Fig.-1-style derived quantities of a converged Paul-trap run, in the
/// preset basis (x^2, p^2, xp+px):
/// effective energy Omega/omega = sqrt(b_x2 b_p2 - b_cross^2) / pi and
/// effective mass M/m = pi / (m omega b_p2), against the small-drive
/// approximations omega_0^2 / (sqrt 2 omega^2) and 1.
#[derive(Debug, Clone)]
pub struct PaulTrapObservables {
    /// None when the discriminant goes negative (hyperbolic effective form).
    pub omega_over_omega: Option<f64>,
    pub m_over_m: f64,
    /// Classification from the independent Mathieu monodromy.
    pub stability: Stability,
    pub approx_omega_over_omega: f64,
    pub approx_m_over_m: f64,
}

pub fn paul_trap_observables(
    result: &BetaResult,
    preset: &ModelPreset,
) -> Result<PaulTrapObservables, ModelError> {
    let ModelKind::PaulTrap {
        m, omega0, omega, ..
    } = preset.kind
    else {
        return Err(ModelError::InvalidParameter {
            name: "preset",
            value: f64::NAN,
            requirement: "paul-trap preset required",
        });
    };
    let beta = &result.beta;
    let discriminant = beta[0] * beta[1] - beta[2] * beta[2];
    let omega_over_omega = if discriminant >= 0.0 {
        Some(discriminant.sqrt() / std::f64::consts::PI)
    } else {
        None
    };
    let m_over_m = std::f64::consts::PI / (m * omega * beta[1]);
    let (a, q) = paul_trap_mathieu_parameters(preset).expect("paul-trap kind");
    let mathieu = mathieu_reference(a, q, std::f64::consts::PI)?;
    Ok(PaulTrapObservables {
        omega_over_omega,
        m_over_m,
        stability: if mathieu.stable {
            Stability::Stable
        } else {
            Stability::Unstable
        },
        approx_omega_over_omega: omega0 * omega0 / (std::f64::consts::SQRT_2 * omega * omega),
        approx_m_over_m: 1.0,
    })
}
