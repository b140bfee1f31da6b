//! Adaptive initial-value-problem integration: an explicit Dormand-Prince
//! 5(4) pair with the classic 4th-order dense output, PI-free step control,
//! and per-step interpolation records so solutions (and their derivatives)
//! can be evaluated anywhere in the integration span.
//!
//! The stepping is fully deterministic: identical problems produce identical
//! meshes, states, and statistics.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("invalid problem: {0}")]
    BadInput(String),
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFiniteRhs { t: f64 },
    #[error("right-hand side failed at t = {t}: {message}")]
    RhsFailure { t: f64, message: String },
    #[error(
        "step size underflow at t = {t} (h = {h:e}); integration hit a stiff or singular point"
    )]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("exceeded {max_steps} accepted steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
}

/// The vector field. Writes dy/dt into `dydt`; an `Err` aborts the
/// integration and is reported with the evaluation time attached.
pub type Rhs<'a> = dyn Fn(f64, &DVector<f64>, &mut DVector<f64>) -> Result<(), String> + 'a;

pub struct IvpProblem<'a> {
    pub rhs: Box<Rhs<'a>>,
    pub t_span: (f64, f64),
    pub y0: DVector<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Optional cap on the step size; the flow residuals rely on it to keep
    /// the interpolant derivative accurate.
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl<'a> IvpProblem<'a> {
    pub fn new<F>(t_span: (f64, f64), y0: DVector<f64>, rhs: F) -> Self
    where
        F: Fn(f64, &DVector<f64>, &mut DVector<f64>) -> Result<(), String> + 'a,
    {
        Self {
            rhs: Box::new(rhs),
            t_span,
            y0,
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: None,
            max_steps: 1_000_000,
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = Some(max_step);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
}

#[derive(Debug, Clone)]
struct StepRecord {
    t: f64,
    h: f64,
    /// Dense-output coefficients c0..c4 of
    /// y(t + theta h) = c0 + theta (c1 + (1-theta)(c2 + theta (c3 + (1-theta) c4))).
    cont: [DVector<f64>; 5],
}

/// Accepted mesh with per-step interpolation coefficients.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    t0: f64,
    t1: f64,
    records: Vec<StepRecord>,
    y_end: DVector<f64>,
    pub stats: IntegrationStats,
}

impl DenseSolution {
    pub fn t_span(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    pub fn final_state(&self) -> &DVector<f64> {
        &self.y_end
    }

    fn locate(&self, t: f64) -> &StepRecord {
        debug_assert!(!self.records.is_empty());
        // binary search over step starts; clamp into [t0, t1]
        let mut lo = 0usize;
        let mut hi = self.records.len() - 1;
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.records[mid].t <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        &self.records[lo]
    }

    /// Interpolated state; defined for every t in the integration span and
    /// exact at the mesh nodes.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let rec = self.locate(t);
        let theta = ((t - rec.t) / rec.h).clamp(0.0, 1.0);
        let om = 1.0 - theta;
        let [c0, c1, c2, c3, c4] = &rec.cont;
        c0 + (c1 + (c2 + (c3 + c4 * om) * theta) * om) * theta
    }

    /// Time derivative of the interpolant (not a fresh rhs evaluation), used
    /// by the flow residuals as an independent consistency check.
    pub fn eval_derivative(&self, t: f64) -> DVector<f64> {
        let rec = self.locate(t);
        let theta = ((t - rec.t) / rec.h).clamp(0.0, 1.0);
        let [_, c1, c2, c3, c4] = &rec.cont;
        // p(theta) = c1 th + c2 th(1-th) + c3 th^2(1-th) + c4 th^2(1-th)^2
        let d = c1
            + c2 * (1.0 - 2.0 * theta)
            + c3 * (2.0 * theta - 3.0 * theta * theta)
            + c4 * (2.0 * theta - 6.0 * theta * theta + 4.0 * theta * theta * theta);
        d / rec.h
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - bhat, the embedded 4th-order error weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense-output weights
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn check_finite(t: f64, v: &DVector<f64>) -> Result<(), OdeError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(OdeError::NonFiniteRhs { t })
    }
}

/// Integrates the problem over its span and returns the dense solution.
pub fn integrate(problem: &IvpProblem) -> Result<DenseSolution, OdeError> {
    let (t0, t1) = problem.t_span;
    if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
        return Err(OdeError::BadInput(format!(
            "t_span must satisfy t1 > t0, got [{t0}, {t1}]"
        )));
    }
    for (name, tol) in [("rel_tol", problem.rel_tol), ("abs_tol", problem.abs_tol)] {
        if !(1e-14..=1e-2).contains(&tol) {
            return Err(OdeError::BadInput(format!(
                "{name} = {tol:e} outside the supported range [1e-14, 1e-2]"
            )));
        }
    }
    if problem.y0.iter().any(|x| !x.is_finite()) {
        return Err(OdeError::BadInput("initial state is not finite".into()));
    }

    let n = problem.y0.len();
    let span = t1 - t0;
    let h_cap = problem.max_step.unwrap_or(span).min(span);
    let mut stats = IntegrationStats::default();
    let eval = |t: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<(), OdeError> {
        (problem.rhs)(t, y, out).map_err(|message| OdeError::RhsFailure { t, message })?;
        check_finite(t, out)
    };

    let scale = |y_a: &DVector<f64>, y_b: &DVector<f64>, i: usize| {
        problem.abs_tol + problem.rel_tol * y_a[i].abs().max(y_b[i].abs())
    };

    let mut t = t0;
    let mut y = problem.y0.clone();
    let mut k1 = DVector::zeros(n);
    eval(t, &y, &mut k1)?;
    stats.rhs_evaluations += 1;

    // Hairer-style initial step guess from the first derivative and one Euler
    // probe of the second.
    let mut h = {
        let d0 = (0..n)
            .map(|i| (y[i] / scale(&y, &y, i)).powi(2))
            .sum::<f64>()
            .sqrt()
            / (n as f64).sqrt();
        let d1 = (0..n)
            .map(|i| (k1[i] / scale(&y, &y, i)).powi(2))
            .sum::<f64>()
            .sqrt()
            / (n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(h_cap);
        let y1 = &y + &k1 * h0;
        let mut f1 = DVector::zeros(n);
        eval(t + h0, &y1, &mut f1)?;
        stats.rhs_evaluations += 1;
        let d2 = (0..n)
            .map(|i| (((f1[i] - k1[i]) / scale(&y, &y, i)) / h0).powi(2))
            .sum::<f64>()
            .sqrt()
            / (n as f64).sqrt();
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(h_cap)
    };

    let mut records = Vec::new();
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut k5 = DVector::zeros(n);
    let mut k6 = DVector::zeros(n);
    let mut k7 = DVector::zeros(n);

    while t < t1 {
        if records.len() >= problem.max_steps {
            return Err(OdeError::MaxStepsExceeded {
                t,
                max_steps: problem.max_steps,
            });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        eval(t + C[1] * h, &(&y + &k1 * (A21 * h)), &mut k2)?;
        eval(
            t + C[2] * h,
            &(&y + &k1 * (A31 * h) + &k2 * (A32 * h)),
            &mut k3,
        )?;
        eval(
            t + C[3] * h,
            &(&y + &k1 * (A41 * h) + &k2 * (A42 * h) + &k3 * (A43 * h)),
            &mut k4,
        )?;
        eval(
            t + C[4] * h,
            &(&y + &k1 * (A51 * h) + &k2 * (A52 * h) + &k3 * (A53 * h) + &k4 * (A54 * h)),
            &mut k5,
        )?;
        eval(
            t + C[5] * h,
            &(&y + &k1 * (A61 * h)
                + &k2 * (A62 * h)
                + &k3 * (A63 * h)
                + &k4 * (A64 * h)
                + &k5 * (A65 * h)),
            &mut k6,
        )?;
        let y_new =
            &y + &k1 * (B1 * h) + &k3 * (B3 * h) + &k4 * (B4 * h) + &k5 * (B5 * h) + &k6 * (B6 * h);
        eval(t + h, &y_new, &mut k7)?;
        stats.rhs_evaluations += 6;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = scale(&y, &y_new, i);
            err_sq += (e / sc).powi(2);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            let ydiff = &y_new - &y;
            let bspl = &k1 * h - &ydiff;
            let c3 = &ydiff - &k7 * h - &bspl;
            let c4 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
            records.push(StepRecord {
                t,
                h,
                cont: [y.clone(), ydiff, bspl, c3, c4],
            });
            t += h;
            y = y_new;
            std::mem::swap(&mut k1, &mut k7);
            stats.steps_accepted += 1;
        } else {
            stats.steps_rejected += 1;
        }

        let factor = if err == 0.0 {
            FAC_MAX
        } else {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        };
        h = (h * factor).min(h_cap);
    }

    Ok(DenseSolution {
        t0,
        t1,
        records,
        y_end: y,
        stats,
    })
}

/// Re-integrates with tolerances tightened by 100x and returns the maximum
/// deviation between the two dense solutions on a 1000-point grid; a
/// self-consistency bound used by the acceptance tests.
pub fn step_doubling_verify(problem: &IvpProblem) -> Result<f64, OdeError> {
    let base = integrate(problem)?;
    let tight = IvpProblem {
        rhs: Box::new(|t, y, out| (problem.rhs)(t, y, out)),
        t_span: problem.t_span,
        y0: problem.y0.clone(),
        rel_tol: (problem.rel_tol / 100.0).max(1e-14),
        abs_tol: (problem.abs_tol / 100.0).max(1e-14),
        max_step: problem.max_step,
        max_steps: problem.max_steps,
    };
    let reference = integrate(&tight)?;
    let (t0, t1) = problem.t_span;
    let mut max_dev: f64 = 0.0;
    for i in 0..=1000 {
        let t = t0 + (t1 - t0) * i as f64 / 1000.0;
        let dev = (base.eval(t) - reference.eval(t)).amax();
        max_dev = max_dev.max(dev);
    }
    Ok(max_dev)
}
