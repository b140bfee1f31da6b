//! The alpha-flow: integrates the product-form parameters alpha(t) on [0, T]
//! from alpha' = (nu^T)^-1 M_n^T .. M_1^T a(t), alpha(0) = 0, and certifies
//! the result through the u-residual
//!     u(t) = M_n^T .. M_1^T a(t) - nu^T alpha'(t),
//! where alpha' comes from differentiating the dense interpolant rather than
//! re-evaluating the right-hand side, so u genuinely checks the assembled nu.

use std::cell::Cell;

use nalgebra::DVector;
use thiserror::Error;

use crate::algebra::{product_and_nu, AlgebraError, LieAlgebraSpec};
use crate::drive::DriveSpec;
use crate::linalg;
use crate::ode::{integrate, DenseSolution, IntegrationStats, IvpProblem, OdeError};

/// nu condition numbers above this threshold are attached as warnings.
pub const NU_CONDITION_WARNING: f64 = 1e10;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("nu matrix is singular at t = {t} (1-norm condition {condition:e})")]
    NuSingular { t: f64, condition: f64 },
    #[error("drive has {drive} components but the algebra dimension is {algebra}")]
    DriveDimension { drive: usize, algebra: usize },
    #[error("evaluation time {t} outside the trajectory span [0, {t_end}]")]
    OutOfSpan { t: f64, t_end: f64 },
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Step cap as a fraction of the span; keeps the interpolant derivative
    /// accurate enough for the residual check.
    pub max_step_fraction: f64,
    /// Number of intervals in the post-integration residual grid.
    pub residual_grid: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step_fraction: 1.0 / 256.0,
            residual_grid: 256,
        }
    }
}

/// Dense record of alpha on [0, T] with residual diagnostics.
#[derive(Debug, Clone)]
pub struct AlphaTrajectory {
    period: f64,
    solution: DenseSolution,
    /// max over the residual grid of ||u(t)||_inf.
    pub u_max: f64,
    /// max over the residual grid of the 1-norm condition number of nu.
    pub nu_condition_max: f64,
    pub warnings: Vec<String>,
}

impl AlphaTrajectory {
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn alpha(&self, t: f64) -> DVector<f64> {
        self.solution.eval(t)
    }

    /// Interpolant derivative, the alpha-dot that enters the residual.
    pub fn alpha_dot(&self, t: f64) -> DVector<f64> {
        self.solution.eval_derivative(t)
    }

    pub fn alpha_at_period(&self) -> DVector<f64> {
        self.solution.final_state().clone()
    }

    pub fn stats(&self) -> IntegrationStats {
        self.solution.stats
    }
}

fn flow_rhs(
    spec: &LieAlgebraSpec,
    drive: &DriveSpec,
    singular_site: &Cell<Option<(f64, f64)>>,
    t: f64,
    alpha: &DVector<f64>,
    out: &mut DVector<f64>,
) -> Result<(), String> {
    let (product, nu) = product_and_nu(spec, alpha).map_err(|e| e.to_string())?;
    let a = drive.coefficients_at(t);
    let target = product.transpose() * a;
    match nu.transpose().lu().solve(&target) {
        Some(rate) => {
            out.copy_from(&rate);
            Ok(())
        }
        None => {
            singular_site.set(Some((t, linalg::condition_1norm(&nu))));
            Err("nu matrix singular".to_string())
        }
    }
}

/// Integrates the alpha-flow from alpha(0) = 0 to t_end and attaches the
/// residual diagnostics evaluated on `opts.residual_grid` + 1 samples.
pub fn alpha_flow(
    spec: &LieAlgebraSpec,
    drive: &DriveSpec,
    t_end: f64,
    opts: &FlowOptions,
) -> Result<AlphaTrajectory, FlowError> {
    let n = spec.dimension();
    if drive.dimension() != n {
        return Err(FlowError::DriveDimension {
            drive: drive.dimension(),
            algebra: n,
        });
    }
    let singular_site = Cell::new(None);
    let problem = IvpProblem::new((0.0, t_end), DVector::zeros(n), |t, y, out| {
        flow_rhs(spec, drive, &singular_site, t, y, out)
    })
    .with_tolerances(opts.rel_tol, opts.abs_tol)
    .with_max_step(t_end * opts.max_step_fraction);

    let solution = integrate(&problem).map_err(|err| match (singular_site.get(), err) {
        (Some((t, condition)), OdeError::RhsFailure { .. }) => {
            FlowError::NuSingular { t, condition }
        }
        (_, other) => FlowError::Ode(other),
    })?;
    drop(problem);

    let mut u_max: f64 = 0.0;
    let mut cond_max: f64 = 0.0;
    let mut warnings = Vec::new();
    for i in 0..=opts.residual_grid {
        let t = t_end * i as f64 / opts.residual_grid as f64;
        let alpha = solution.eval(t);
        let alpha_dot = solution.eval_derivative(t);
        let a = drive.coefficients_at(t);
        let (product, nu) = product_and_nu(spec, &alpha)?;
        let u = product.transpose() * a - nu.transpose() * &alpha_dot;
        u_max = u_max.max(u.amax());
        cond_max = cond_max.max(linalg::condition_1norm(&nu));
    }
    if cond_max > NU_CONDITION_WARNING {
        warnings.push(format!(
            "nu condition number reached {cond_max:e}; the factorization is near-degenerate"
        ));
    }

    Ok(AlphaTrajectory {
        period: t_end,
        solution,
        u_max,
        nu_condition_max: cond_max,
        warnings,
    })
}

/// u(t) for a computed trajectory, with alpha-dot taken from the dense
/// interpolant.
pub fn u_residual(
    spec: &LieAlgebraSpec,
    drive: &DriveSpec,
    traj: &AlphaTrajectory,
    t: f64,
) -> Result<DVector<f64>, FlowError> {
    if !(0.0..=traj.period()).contains(&t) {
        return Err(FlowError::OutOfSpan {
            t,
            t_end: traj.period(),
        });
    }
    Ok(u_from_values(
        spec,
        &drive.coefficients_at(t),
        &traj.alpha(t),
        &traj.alpha_dot(t),
    )?)
}

/// The residual for explicitly supplied values; lets tests corrupt alpha and
/// confirm the detector fires.
pub fn u_from_values(
    spec: &LieAlgebraSpec,
    a: &DVector<f64>,
    alpha: &DVector<f64>,
    alpha_dot: &DVector<f64>,
) -> Result<DVector<f64>, AlgebraError> {
    let (product, nu) = product_and_nu(spec, alpha)?;
    Ok(product.transpose() * a - nu.transpose() * alpha_dot)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::algebra::tests::{kapitza_constants, lattice_constants, paul_constants};
    use crate::drive::DriveTerm;
    use crate::ode::step_doubling_verify;
    use crate::testing::{rk4_fixed, simpson};

    pub fn lattice_drive(kappa: f64, omega: f64) -> DriveSpec {
        DriveSpec::new(
            omega,
            vec![
                vec![DriveTerm::Cos {
                    harmonic: 1,
                    amplitude: omega * kappa,
                }],
                vec![],
                vec![DriveTerm::Const { amplitude: 1.0 }],
            ],
        )
        .unwrap()
    }

    pub fn paul_drive(m: f64, omega0: f64, omega1: f64, omega: f64) -> DriveSpec {
        DriveSpec::new(
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
        )
        .unwrap()
    }

    pub fn kapitza_drive(m: f64, force: f64, omega: f64) -> DriveSpec {
        DriveSpec::new(
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
        )
        .unwrap()
    }

    fn grid_amplitude_max(drive: &DriveSpec, t_end: f64) -> f64 {
        (0..=1024)
            .map(|i| drive.coefficients_at(t_end * i as f64 / 1024.0).amax())
            .fold(0.0, f64::max)
    }

    #[test]
    fn abelian_alpha_is_the_quadrature_of_the_drive() {
        let spec = LieAlgebraSpec::abelian(3);
        let drive = DriveSpec::new(
            2.0,
            vec![
                vec![
                    DriveTerm::Const { amplitude: 1.1 },
                    DriveTerm::Cos {
                        harmonic: 1,
                        amplitude: 0.8,
                    },
                ],
                vec![DriveTerm::Sin {
                    harmonic: 2,
                    amplitude: 0.5,
                }],
                vec![DriveTerm::Const { amplitude: -0.4 }],
            ],
        )
        .unwrap();
        let t_end = drive.period();
        let traj = alpha_flow(&spec, &drive, t_end, &FlowOptions::default()).unwrap();

        for i in 0..=32 {
            let t = t_end * i as f64 / 32.0;
            let alpha = traj.alpha(t);
            let closed = drive.integral_to(t);
            assert!((&alpha - &closed).amax() < 1e-10, "t = {t}");
            // independent quadrature oracle
            for k in 0..3 {
                let quad = simpson(|s| drive.coefficients_at(s)[k], 0.0, t, 400);
                assert!((alpha[k] - quad).abs() < 1e-10, "t = {t}, k = {k}");
            }
        }
        // with M = nu = I the residual is pure interpolant-derivative error,
        // bounded by the tolerance invariant
        let bound = 10.0 * FlowOptions::default().rel_tol * grid_amplitude_max(&drive, t_end);
        assert!(traj.u_max <= bound, "u_max = {:e} vs {bound:e}", traj.u_max);
    }

    #[test]
    fn alpha_starts_at_zero_exactly() {
        let traj = alpha_flow(
            &paul_constants(),
            &paul_drive(1.0, 1.0, 0.0, 10.0),
            2.0 * std::f64::consts::PI / 10.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.alpha(0.0), DVector::zeros(3));
    }

    #[test]
    fn lattice_alpha_matches_brute_force_integration() {
        let spec = lattice_constants();
        let (kappa, omega) = (1.0, 20.0);
        let drive = lattice_drive(kappa, omega);
        let t_end = drive.period();
        let traj = alpha_flow(&spec, &drive, t_end, &FlowOptions::default()).unwrap();

        // 1e5-step fixed-grid RK4 of the same flow field
        let brute = rk4_fixed(
            |t, alpha| {
                let (product, nu) = product_and_nu(&spec, alpha).unwrap();
                let a = drive.coefficients_at(t);
                nu.transpose()
                    .lu()
                    .solve(&(product.transpose() * a))
                    .unwrap()
            },
            0.0,
            t_end,
            &DVector::zeros(3),
            100_000,
        );
        let alpha_t = traj.alpha_at_period();
        assert!(
            (&alpha_t - &brute).amax() < 1e-8,
            "deviation {:e}",
            (&alpha_t - &brute).amax()
        );

        // closed forms: alpha_1 = kappa sin(omega t); alpha_3(T) is the
        // Bessel-type integral of cos(kappa sin), checked by quadrature
        for i in 0..=16 {
            let t = t_end * i as f64 / 16.0;
            assert!((traj.alpha(t)[0] - kappa * (omega * t).sin()).abs() < 1e-9);
        }
        let quad = simpson(|s| (kappa * (omega * s).sin()).cos(), 0.0, t_end, 2000);
        assert!((alpha_t[2] - quad).abs() < 1e-10);
        assert!(alpha_t[1].abs() < 1e-10);
    }

    #[test]
    fn paul_alpha_matches_mathieu_closed_forms() {
        // The x^2 Riccati parameter linearizes through the even Mathieu
        // solution y(t) of y'' + (w1^2 + w0^2 cos(w t)) y = 0, y(0) = 1,
        // y'(0) = 0:
        //   alpha_1 = -(m/2) y'/y
        //   alpha_2 = y^2 z / (2m),  z = int_0^t y^-2
        //   alpha_3 = (1/2) ln y
        let (m, omega0, omega1, omega) = (1.0, 1.0, 0.0, 10.0);
        let spec = paul_constants();
        let drive = paul_drive(m, omega0, omega1, omega);
        let t_end = drive.period();
        let traj = alpha_flow(&spec, &drive, t_end, &FlowOptions::default()).unwrap();

        let mathieu = integrate(
            &IvpProblem::new(
                (0.0, t_end),
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                |t, y, out| {
                    let w = omega1 * omega1 + omega0 * omega0 * (omega * t).cos();
                    out[0] = y[1];
                    out[1] = -w * y[0];
                    out[2] = 1.0 / (y[0] * y[0]);
                    Ok(())
                },
            )
            .with_tolerances(1e-12, 1e-12),
        )
        .unwrap();

        for i in 1..=16 {
            let t = t_end * i as f64 / 16.0;
            let alpha = traj.alpha(t);
            let y = mathieu.eval(t);
            let expected_1 = -(m / 2.0) * y[1] / y[0];
            let expected_2 = y[0] * y[0] * y[2] / (2.0 * m);
            let expected_3 = 0.5 * y[0].ln();
            assert!((alpha[0] - expected_1).abs() < 1e-7, "alpha_1 at t = {t}");
            assert!((alpha[1] - expected_2).abs() < 1e-7, "alpha_2 at t = {t}");
            assert!((alpha[2] - expected_3).abs() < 1e-7, "alpha_3 at t = {t}");
        }
    }

    #[test]
    fn residual_stays_within_the_tolerance_bound() {
        let opts = FlowOptions::default();
        let cases: Vec<(LieAlgebraSpec, DriveSpec)> = vec![
            (lattice_constants(), lattice_drive(1.0, 20.0)),
            (paul_constants(), paul_drive(1.0, 1.0, 0.0, 10.0)),
            (kapitza_constants(1.0, 1.0), kapitza_drive(1.0, 1.0, 10.0)),
        ];
        for (spec, drive) in cases {
            let t_end = drive.period();
            let traj = alpha_flow(&spec, &drive, t_end, &opts).unwrap();
            let bound = 10.0 * opts.rel_tol * grid_amplitude_max(&drive, t_end);
            assert!(
                traj.u_max <= bound,
                "u_max {:e} exceeds 10 * rel_tol * max|a| = {bound:e}",
                traj.u_max
            );
            assert!(traj.u_max <= 1e-7);
        }
    }

    #[test]
    fn u_residual_at_sample_times_is_small() {
        let spec = kapitza_constants(1.0, 1.0);
        let drive = kapitza_drive(1.0, 1.0, 10.0);
        let t_end = drive.period();
        let traj = alpha_flow(&spec, &drive, t_end, &FlowOptions::default()).unwrap();
        for i in 0..=256 {
            let t = t_end * i as f64 / 256.0;
            let u = u_residual(&spec, &drive, &traj, t).unwrap();
            assert!(u.amax() <= 1e-7, "t = {t}, |u| = {:e}", u.amax());
        }
    }

    #[test]
    fn corrupted_alpha_trips_the_detector() {
        let spec = lattice_constants();
        let drive = lattice_drive(1.0, 20.0);
        let t_end = drive.period();
        let traj = alpha_flow(&spec, &drive, t_end, &FlowOptions::default()).unwrap();
        let t = 0.3 * t_end;
        let mut alpha = traj.alpha(t);
        alpha[0] += 0.01;
        let u =
            u_from_values(&spec, &drive.coefficients_at(t), &alpha, &traj.alpha_dot(t)).unwrap();
        assert!(u.amax() > 1e-4, "detector failed: |u| = {:e}", u.amax());
    }

    #[test]
    fn nu_condition_is_reported() {
        let traj = alpha_flow(
            &paul_constants(),
            &paul_drive(1.0, 1.0, 0.0, 10.0),
            2.0 * std::f64::consts::PI / 10.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert!(traj.nu_condition_max.is_finite());
        assert!(traj.nu_condition_max >= 1.0);
    }

    #[test]
    fn flow_step_doubling_is_consistent() {
        // re-integration with 100x tighter tolerances moves the solution by
        // less than 10x the base tolerance
        let opts = FlowOptions::default();
        let cases: Vec<(LieAlgebraSpec, DriveSpec)> = vec![
            (paul_constants(), paul_drive(1.0, 1.0, 0.0, 10.0)),
            (kapitza_constants(1.0, 1.0), kapitza_drive(1.0, 1.0, 10.0)),
        ];
        for (spec, drive) in cases {
            let t_end = drive.period();
            let singular = Cell::new(None);
            let problem = IvpProblem::new((0.0, t_end), DVector::zeros(spec.dimension()), {
                let spec = &spec;
                let drive = &drive;
                let singular = &singular;
                move |t, y, out| flow_rhs(spec, drive, singular, t, y, out)
            })
            .with_tolerances(opts.rel_tol, opts.abs_tol)
            .with_max_step(t_end * opts.max_step_fraction);
            let deviation = step_doubling_verify(&problem).unwrap();
            assert!(
                deviation <= 10.0 * opts.rel_tol,
                "step-doubling deviation {deviation:e}"
            );
        }
    }

    #[test]
    fn drive_dimension_mismatch_is_rejected() {
        let spec = paul_constants();
        let drive = DriveSpec::new(1.0, vec![vec![], vec![]]).unwrap();
        assert!(matches!(
            alpha_flow(&spec, &drive, 1.0, &FlowOptions::default()),
            Err(FlowError::DriveDimension { .. })
        ));
    }
}
