//! Batch front end: parses run configs (preset or custom algebra), executes
//! validate -> alpha-flow -> recombination -> oracle, and emits
//! machine-readable results. Identical configs produce byte-identical output;
//! floats are serialized with 17 significant digits.
//!
//! Exit codes: 0 ok, 1 usage/parse, 2 validation, 3 numerical failure.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use liefloq::algebra::validate_algebra;
use liefloq::factorization::{alpha_flow, AlphaTrajectory};
use liefloq::models::{
    bessel_j0, kapitza_constant_shift, mathieu_reference, paul_trap_mathieu_parameters,
    paul_trap_observables, ModelKind, ModelPreset, PaulTrapObservables, Stability,
};
use liefloq::oracle::{compare_forms, OracleReport};
use liefloq::recombination::{
    reduce_quadratic_form, solve_beta, BetaMethod, BetaResult, ContinuationDiagnostics,
};

use config::{ConfigFile, ResolvedRun, SweepConfig};
use output::{JsonObject, SweepRow};

#[derive(Debug)]
pub enum CliError {
    /// Unusable input: exit 1.
    Usage(String),
    /// Algebra or representation validation failed: exit 2.
    Validation(String),
    /// A pipeline stage failed numerically: exit 3.
    Numerical {
        stage: &'static str,
        message: String,
    },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Validation(msg) => write!(f, "validation failed: {msg}"),
            CliError::Numerical { stage, message } => write!(f, "[{stage}] {message}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

/// Model-specific derived quantities attached to the record.
#[derive(Debug, Clone)]
pub enum ObservablesData {
    PaulTrap(PaulTrapObservables),
    Lattice {
        hopping: f64,
        j0_reference: f64,
    },
    Kapitza {
        constant_term: f64,
        p2_coefficient: f64,
        x2_coefficient: f64,
        reference_constant: Option<f64>,
    },
    None,
}

/// Everything a run produced, structured for both the JSON record and the
/// sweep table.
#[derive(Debug)]
pub struct RunData {
    pub alpha_at_period: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub method: &'static str,
    pub he_coeffs: Vec<f64>,
    pub reduced_he_coeffs: Option<Vec<f64>>,
    pub reduction_parameters: Option<Vec<(usize, f64)>>,
    pub observables: ObservablesData,
    pub u_max: f64,
    pub lambda_roundtrip: f64,
    pub eigenrelation: f64,
    pub nu_condition_max: f64,
    pub alpha_steps: usize,
    pub alpha_rejections: usize,
    pub rhs_evaluations: usize,
    pub eigenspace_dims: Vec<usize>,
    pub shooting_fallbacks: usize,
    pub warnings: Vec<String>,
    pub oracle: Option<OracleReport>,
    pub timings_ms: Option<[f64; 3]>,
}

fn method_name(method: BetaMethod) -> &'static str {
    match method {
        BetaMethod::Shooting => "shooting",
        BetaMethod::Eigenbasis => "eigenbasis",
    }
}

fn observables_for(
    preset: &ModelPreset,
    result: &BetaResult,
    reduced: Option<&[f64]>,
) -> Result<ObservablesData, CliError> {
    match preset.kind {
        ModelKind::PaulTrap { .. } => {
            let obs = paul_trap_observables(result, preset).map_err(|e| CliError::Numerical {
                stage: "observables",
                message: e.to_string(),
            })?;
            Ok(ObservablesData::PaulTrap(obs))
        }
        ModelKind::OpticalLattice { kappa, .. } => Ok(ObservablesData::Lattice {
            hopping: result.he_coeffs[2],
            j0_reference: bessel_j0(kappa),
        }),
        ModelKind::Kapitza {
            m,
            omega0,
            omega,
            force,
        } => {
            let reduced = reduced.ok_or(CliError::Numerical {
                stage: "reduction",
                message: "kapitza observables need the reduced form".into(),
            })?;
            Ok(ObservablesData::Kapitza {
                constant_term: reduced[0],
                p2_coefficient: reduced[3],
                x2_coefficient: (m * omega0).powi(2) * reduced[3],
                reference_constant: kapitza_constant_shift(m, omega0, omega, force),
            })
        }
        ModelKind::Custom => Ok(ObservablesData::None),
    }
}

/// Validates, integrates the alpha-flow, recombines beta by continuation
/// (eigenbasis with shooting fallback), reduces when a recipe exists, and
/// optionally runs the propagator oracle. Every failure carries its stage.
pub fn run_pipeline(resolved: &ResolvedRun, with_oracle: bool) -> Result<RunData, CliError> {
    let preset = &resolved.preset;
    let report = validate_algebra(&preset.algebra);
    if !report.passed() {
        let lines: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Validation(lines.join("; ")));
    }

    let t0 = Instant::now();
    let traj: AlphaTrajectory = alpha_flow(
        &preset.algebra,
        &preset.drive,
        preset.period(),
        &resolved.flow,
    )
    .map_err(|e| CliError::Numerical {
        stage: "alpha-flow",
        message: e.to_string(),
    })?;
    let t_alpha = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let (result, continuation): (BetaResult, ContinuationDiagnostics) =
        solve_beta(&preset.algebra, &traj, &resolved.recombination).map_err(|e| {
            CliError::Numerical {
                stage: "recombination",
                message: e.to_string(),
            }
        })?;
    let t_beta = t1.elapsed().as_secs_f64() * 1e3;

    let (reduced, reduction_parameters) = match &preset.reduction {
        Some(recipe) => {
            let reduced_form = reduce_quadratic_form(&preset.algebra, &result.he_coeffs, recipe)
                .map_err(|e| CliError::Numerical {
                    stage: "reduction",
                    message: e.to_string(),
                })?;
            (
                Some(reduced_form.coeffs.iter().copied().collect::<Vec<f64>>()),
                Some(reduced_form.applied),
            )
        }
        None => (None, None),
    };

    let observables = observables_for(preset, &result, reduced.as_deref())?;

    let t2 = Instant::now();
    let oracle = if with_oracle {
        Some(compare_forms(
            preset.rep(),
            &traj.alpha_at_period(),
            &result.beta,
            &preset.drive,
            preset.period(),
            preset.central_note.clone(),
            &resolved.oracle,
        ))
    } else {
        None
    };
    let t_oracle = t2.elapsed().as_secs_f64() * 1e3;

    let mut warnings = preset.warnings.clone();
    warnings.extend(traj.warnings.iter().cloned());

    Ok(RunData {
        alpha_at_period: traj.alpha_at_period().iter().copied().collect(),
        beta: result.beta.iter().copied().collect(),
        gamma: result.gamma.as_ref().map(|g| g.iter().copied().collect()),
        method: method_name(result.method),
        he_coeffs: result.he_coeffs.iter().copied().collect(),
        reduced_he_coeffs: reduced,
        reduction_parameters,
        observables,
        u_max: traj.u_max,
        lambda_roundtrip: result.lambda_residual,
        eigenrelation: result.eigen_residual,
        nu_condition_max: traj.nu_condition_max,
        alpha_steps: traj.stats().steps_accepted,
        alpha_rejections: traj.stats().steps_rejected,
        rhs_evaluations: traj.stats().rhs_evaluations,
        eigenspace_dims: continuation.eigenspace_dims,
        shooting_fallbacks: continuation.shooting_fallbacks,
        warnings,
        oracle,
        timings_ms: resolved.timings.then_some([t_alpha, t_beta, t_oracle]),
    })
}

fn config_echo_json(config: &ConfigFile, preset: &ModelPreset, resolved: &ResolvedRun) -> String {
    let model = match preset.kind {
        ModelKind::Custom => {
            let n = preset.algebra.dimension();
            JsonObject::new()
                .string("kind", "custom")
                .integer("dimension", n as u64)
                .strings("labels", preset.algebra.labels())
                .float("omega", preset.drive.omega())
                .finish()
        }
        _ => {
            let mut params = JsonObject::new();
            for (key, value) in &preset.params {
                params = params.float(key, *value);
            }
            JsonObject::new()
                .string("preset", preset.name)
                .raw("params", params.finish())
                .finish()
        }
    };
    let mut echo = JsonObject::new()
        .integer("schema", config::SCHEMA_VERSION as u64)
        .raw("model", model)
        .raw(
            "tolerances",
            JsonObject::new()
                .float("rel_tol", resolved.flow.rel_tol)
                .float("abs_tol", resolved.flow.abs_tol)
                .finish(),
        )
        .raw(
            "trotter",
            JsonObject::new()
                .float("target", resolved.oracle.richardson_target)
                .integer("start_steps_log2", resolved.oracle.start_steps_log2 as u64)
                .integer("max_steps_log2", resolved.oracle.max_steps_log2 as u64)
                .finish(),
        )
        .integer("checkpoints", resolved.recombination.checkpoints as u64);
    if let Some(sweep) = &config.sweep {
        echo = echo.raw(
            "sweep",
            JsonObject::new()
                .string("parameter", &sweep.parameter)
                .float("from", sweep.from)
                .float("to", sweep.to)
                .integer("points", sweep.points as u64)
                .finish(),
        );
    }
    echo.finish()
}

fn observables_json(observables: &ObservablesData) -> String {
    match observables {
        ObservablesData::PaulTrap(obs) => {
            let base = JsonObject::new().string("model", "paul-trap");
            let base = match obs.omega_over_omega {
                Some(v) => base.float("Omega_over_omega_exact", v),
                None => base.null("Omega_over_omega_exact"),
            };
            base.float("Omega_over_omega_approx", obs.approx_omega_over_omega)
                .float("M_over_m_exact", obs.m_over_m)
                .float("M_over_m_approx", obs.approx_m_over_m)
                .string("stability", &obs.stability.to_string())
                .finish()
        }
        ObservablesData::Lattice {
            hopping,
            j0_reference,
        } => JsonObject::new()
            .string("model", "optical-lattice")
            .float("hopping", *hopping)
            .float("j0_reference", *j0_reference)
            .finish(),
        ObservablesData::Kapitza {
            constant_term,
            p2_coefficient,
            x2_coefficient,
            reference_constant,
        } => {
            let base = JsonObject::new()
                .string("model", "kapitza")
                .float("constant_term", *constant_term)
                .float("p2_coefficient", *p2_coefficient)
                .float("x2_coefficient", *x2_coefficient);
            match reference_constant {
                Some(v) => base.float("reference_constant", *v).finish(),
                None => base.null("reference_constant").finish(),
            }
        }
        ObservablesData::None => "null".to_string(),
    }
}

/// Renders the run record with a frozen field order.
pub fn render_record(config: &ConfigFile, resolved: &ResolvedRun, data: &RunData) -> String {
    let preset = &resolved.preset;
    let mut record = JsonObject::new()
        .integer("schema", config::SCHEMA_VERSION as u64)
        .raw("config", config_echo_json(config, preset, resolved))
        .string("model", preset.name)
        .strings("labels", preset.algebra.labels())
        .floats("alpha_at_period", &data.alpha_at_period)
        .floats("beta", &data.beta)
        .optional_floats("gamma", data.gamma.as_deref())
        .string("method", data.method)
        .floats("he_coeffs", &data.he_coeffs)
        .optional_floats("reduced_he_coeffs", data.reduced_he_coeffs.as_deref());
    record = match &data.reduction_parameters {
        Some(steps) => {
            let items: Vec<String> = steps
                .iter()
                .map(|(generator, theta)| {
                    JsonObject::new()
                        .integer("generator", *generator as u64 + 1)
                        .float("theta", *theta)
                        .finish()
                })
                .collect();
            record.raw("reduction_parameters", format!("[{}]", items.join(",")))
        }
        None => record.null("reduction_parameters"),
    };
    record = record
        .raw("observables", observables_json(&data.observables))
        .raw(
            "residuals",
            JsonObject::new()
                .float("u_max", data.u_max)
                .float("lambda_roundtrip", data.lambda_roundtrip)
                .float("eigenrelation", data.eigenrelation)
                .finish(),
        );
    record = match &data.oracle {
        Some(oracle) => {
            let base = JsonObject::new()
                .integer("rep_dim", oracle.rep_dim as u64)
                .float("trotter_vs_ua", oracle.trotter_vs_ua)
                .float("trotter_vs_ub", oracle.trotter_vs_ub)
                .float("ua_vs_ub", oracle.ua_vs_ub)
                .float("richardson_estimate", oracle.richardson_estimate)
                .integer("steps_log2", oracle.steps_log2 as u64);
            let oracle_json = match &oracle.central_note {
                Some(note) => base.string("central_component_note", note).finish(),
                None => base.null("central_component_note").finish(),
            };
            record.raw("oracle", oracle_json)
        }
        None => record.null("oracle"),
    };
    let diagnostics = JsonObject::new()
        .integer("alpha_steps", data.alpha_steps as u64)
        .integer("alpha_rejections", data.alpha_rejections as u64)
        .integer("rhs_evaluations", data.rhs_evaluations as u64)
        .float("nu_condition_max", data.nu_condition_max)
        .raw(
            "eigenspace_dims",
            format!(
                "[{}]",
                data.eigenspace_dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        )
        .integer("shooting_fallbacks", data.shooting_fallbacks as u64)
        .strings("warnings", &data.warnings)
        .finish();
    record = record.raw("diagnostics", diagnostics);
    record = match data.timings_ms {
        Some([a, b, c]) => record.raw(
            "timings_ms",
            JsonObject::new()
                .float("alpha_flow", a)
                .float("recombination", b)
                .float("oracle", c)
                .finish(),
        ),
        None => record,
    };
    let mut out = record.finish();
    out.push('\n');
    out
}

/// Validation report text for `validate`; the boolean is the pass flag
/// (exit 0 when true, 2 when false).
pub fn cmd_validate(preset: &ModelPreset) -> (String, bool) {
    let report = validate_algebra(&preset.algebra);
    let mut text = format!(
        "model: {}\ndimension: {}\nlabels: {}\n",
        preset.name,
        preset.algebra.dimension(),
        preset.algebra.labels().join(", ")
    );
    if report.passed() {
        text.push_str("validation: PASS\n");
        (text, true)
    } else {
        text.push_str("validation: FAIL\n");
        for violation in &report.violations {
            text.push_str(&format!("  - {violation}\n"));
        }
        (text, false)
    }
}

/// Runs the full pipeline and renders the JSON record.
pub fn cmd_run(config: &ConfigFile, resolved: &ResolvedRun) -> Result<String, CliError> {
    let data = run_pipeline(resolved, true)?;
    Ok(render_record(config, resolved, &data))
}

/// Structured failure record written when a run dies mid-pipeline, so batch
/// consumers see the failing stage without parsing stderr.
pub fn render_error_record(err: &CliError) -> String {
    let (stage, message) = match err {
        CliError::Usage(message) => ("usage", message.as_str()),
        CliError::Validation(message) => ("validation", message.as_str()),
        CliError::Numerical { stage, message } => (*stage, message.as_str()),
    };
    let mut out = JsonObject::new()
        .integer("schema", config::SCHEMA_VERSION as u64)
        .raw(
            "error",
            JsonObject::new()
                .string("stage", stage)
                .string("message", message)
                .finish(),
        )
        .finish();
    out.push('\n');
    out
}

fn sweep_grid(sweep: &SweepConfig) -> Result<Vec<f64>, CliError> {
    if sweep.points < 2 {
        return Err(CliError::Usage("sweep needs at least 2 points".into()));
    }
    let n = sweep.points;
    Ok((0..n)
        .map(|i| sweep.from + (sweep.to - sweep.from) * i as f64 / (n - 1) as f64)
        .collect())
}

fn paul_row(preset: &ModelPreset, outcome: &Result<RunData, CliError>) -> SweepRow {
    let ModelKind::PaulTrap { omega0, omega, .. } = preset.kind else {
        unreachable!("paul rows come from paul presets");
    };
    let ratio = omega0 / omega;
    // Mathieu classification is independent of the pipeline and survives
    // pipeline failures.
    let (a, q) = paul_trap_mathieu_parameters(preset).expect("paul-trap kind");
    let stability = mathieu_reference(a, q, std::f64::consts::PI).ok().map(|m| {
        if m.stable {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    });
    match outcome {
        Ok(data) => {
            let ObservablesData::PaulTrap(obs) = &data.observables else {
                unreachable!("paul pipeline attaches paul observables");
            };
            SweepRow {
                values: vec![
                    Some(ratio),
                    obs.omega_over_omega,
                    Some(obs.approx_omega_over_omega),
                    Some(obs.m_over_m),
                    Some(obs.approx_m_over_m),
                ],
                stability,
                status: "ok".into(),
            }
        }
        Err(err) => SweepRow {
            values: vec![Some(ratio), None, None, None, None],
            stability,
            status: match err {
                CliError::Numerical { stage, .. } => format!("failed:{stage}"),
                other => format!("failed:exit{}", other.exit_code()),
            },
        },
    }
}

fn generic_row(value: f64, n: usize, outcome: &Result<RunData, CliError>) -> SweepRow {
    match outcome {
        Ok(data) => {
            let mut values = vec![Some(value)];
            values.extend(data.he_coeffs.iter().map(|&v| Some(v)));
            SweepRow {
                values,
                stability: None,
                status: "ok".into(),
            }
        }
        Err(err) => {
            let mut values = vec![Some(value)];
            values.resize(1 + n, None);
            SweepRow {
                values,
                stability: None,
                status: match err {
                    CliError::Numerical { stage, .. } => format!("failed:{stage}"),
                    other => format!("failed:exit{}", other.exit_code()),
                },
            }
        }
    }
}

/// Runs one pipeline per grid point (without the oracle stage: the table
/// carries observables only), up to `jobs` points concurrently, and assembles
/// the CSV in grid order. Per-point failures land in the status column and
/// the sweep continues.
pub fn cmd_sweep(
    resolved_template: &ResolvedRun,
    sweep: &SweepConfig,
    jobs: usize,
) -> Result<String, CliError> {
    let base = &resolved_template.preset;
    if matches!(base.kind, ModelKind::Custom) {
        return Err(CliError::Usage(
            "sweeps need a preset model with declared parameters".into(),
        ));
    }
    if !base.params.iter().any(|(k, _)| *k == sweep.parameter) {
        return Err(CliError::Usage(format!(
            "sweep parameter '{}' is not declared by preset '{}'",
            sweep.parameter, base.name
        )));
    }
    let grid = sweep_grid(sweep)?;
    let jobs = jobs.max(1);

    let n = base.algebra.dimension();
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; grid.len()]);
    let work = |index: usize| -> SweepRow {
        let value = grid[index];
        let mut params: BTreeMap<String, f64> = base
            .params
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        params.insert(sweep.parameter.clone(), value);
        let point = match config::build_preset(base.name, &params) {
            Ok(p) => p,
            Err(err) => {
                return SweepRow {
                    values: vec![Some(value)],
                    stability: None,
                    status: format!("failed:exit{}", err.exit_code()),
                }
            }
        };
        let resolved = ResolvedRun {
            preset: point,
            flow: resolved_template.flow.clone(),
            recombination: resolved_template.recombination.clone(),
            oracle: resolved_template.oracle.clone(),
            timings: false,
        };
        let outcome = run_pipeline(&resolved, false);
        match resolved.preset.kind {
            ModelKind::PaulTrap { .. } => paul_row(&resolved.preset, &outcome),
            _ => generic_row(value, n, &outcome),
        }
    };

    std::thread::scope(|scope| {
        for worker in 0..jobs.min(grid.len()) {
            let rows = &rows;
            let work = &work;
            let total = grid.len();
            scope.spawn(move || {
                let mut index = worker;
                while index < total {
                    let row = work(index);
                    if let Some(slot) = rows.lock().expect("sweep row lock").get_mut(index) {
                        *slot = Some(row);
                    }
                    index += jobs;
                }
            });
        }
    });

    let rows: Vec<SweepRow> = rows
        .into_inner()
        .expect("sweep row lock")
        .into_iter()
        .map(|r| r.expect("every grid index processed"))
        .collect();

    let csv = match base.kind {
        ModelKind::PaulTrap { .. } => output::sweep_csv(
            &[
                "omega0_over_omega",
                "Omega_over_omega_exact",
                "Omega_over_omega_approx",
                "M_over_m_exact",
                "M_over_m_approx",
                "stability",
                "status",
            ],
            &rows,
            true,
        ),
        _ => {
            let mut header: Vec<String> = vec![sweep.parameter.clone()];
            header.extend((1..=n).map(|i| format!("he_{i}")));
            header.push("status".into());
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            output::sweep_csv(&header_refs, &rows, false)
        }
    };
    Ok(csv)
}
