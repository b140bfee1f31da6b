//! Command-line entry point. Subcommands mirror the config modes; flags
//! mirror config keys and override them.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use liefloq_cli::config::{
    build_model, parse_config_text, resolve_options, ConfigFile, ModelConfig, ResolvedRun,
    SweepConfig,
};
use liefloq_cli::{cmd_run, cmd_sweep, cmd_validate, CliError};

#[derive(Parser)]
#[command(
    name = "liefloq",
    about = "Exact effective Hamiltonians of time-driven systems on finite Lie algebras",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the algebra axioms (and the representation, when present).
    Validate(CommonArgs),
    /// Run the full pipeline and write the JSON run record.
    Run(CommonArgs),
    /// Run the pipeline over a parameter grid and write the CSV table.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file (schema 1); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name: paul-trap, optical-lattice, or kapitza.
    #[arg(long)]
    model: Option<String>,
    /// Preset parameter override, repeatable: --param omega0=0.5
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Sets both rel_tol and abs_tol of the flow integrator.
    #[arg(long)]
    tol: Option<f64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: json (run) or csv (sweep).
    #[arg(long)]
    format: Option<String>,
    /// Include wall-clock stage timings in the record (breaks byte
    /// determinism across runs).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Declared model parameter to sweep.
    #[arg(long)]
    parameter: Option<String>,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Concurrent grid points (default 1; ordering and values are
    /// unaffected).
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_param_flags(flags: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut map = BTreeMap::new();
    for flag in flags {
        let (key, value) = flag
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param expects KEY=VALUE, got '{flag}'")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| CliError::Usage(format!("--param {key}: '{value}' is not a number")))?;
        map.insert(key.to_string(), value);
    }
    Ok(map)
}

/// Loads the config file (or synthesizes one from --model) and applies flag
/// overrides.
fn effective_config(common: &CommonArgs) -> Result<ConfigFile, CliError> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => {
            let model = common
                .model
                .clone()
                .ok_or_else(|| CliError::Usage("either --config or --model is required".into()))?;
            ConfigFile {
                schema: 1,
                mode: None,
                model: ModelConfig {
                    preset: Some(model),
                    params: None,
                    custom: None,
                },
                tolerances: None,
                trotter: None,
                checkpoints: None,
                sweep: None,
                output: None,
                jobs: None,
                timings: None,
            }
        }
    };
    if common.config.is_some() {
        if let Some(model) = &common.model {
            config.model = ModelConfig {
                preset: Some(model.clone()),
                params: config.model.params.clone(),
                custom: None,
            };
        }
    }
    let overrides = parse_param_flags(&common.params)?;
    if !overrides.is_empty() {
        if config.model.custom.is_some() {
            return Err(CliError::Usage(
                "--param applies to presets, not custom models".into(),
            ));
        }
        let mut params = config.model.params.clone().unwrap_or_default();
        params.extend(overrides);
        config.model.params = Some(params);
    }
    if let Some(tol) = common.tol {
        config.tolerances = Some(liefloq_cli::config::TolerancesConfig {
            rel_tol: Some(tol),
            abs_tol: Some(tol),
        });
    }
    if common.timings {
        config.timings = Some(true);
    }
    Ok(config)
}

fn resolve(config: &ConfigFile) -> Result<ResolvedRun, CliError> {
    let preset = build_model(&config.model)?;
    let (flow, recombination, oracle) = resolve_options(config)?;
    Ok(ResolvedRun {
        preset,
        flow,
        recombination,
        oracle,
        timings: config.timings.unwrap_or(false),
    })
}

fn write_output(common: &CommonArgs, config: &ConfigFile, payload: &str) -> Result<(), CliError> {
    let path = common.out.clone().or_else(|| {
        config
            .output
            .as_ref()
            .and_then(|o| o.path.as_ref())
            .map(PathBuf::from)
    });
    match path {
        Some(path) => std::fs::write(&path, payload)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(payload.as_bytes())
                .map_err(|e| CliError::Usage(format!("cannot write stdout: {e}")))
        }
    }
}

fn requested_format<'a>(common: &'a CommonArgs, config: &'a ConfigFile) -> Option<&'a str> {
    common
        .format
        .as_deref()
        .or_else(|| config.output.as_ref().and_then(|o| o.format.as_deref()))
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Validate(common) => {
            let config = effective_config(&common)?;
            let preset = build_model(&config.model)?;
            let (text, passed) = cmd_validate(&preset);
            write_output(&common, &config, &text)?;
            Ok(if passed { 0 } else { 2 })
        }
        Command::Run(common) => {
            let config = effective_config(&common)?;
            if let Some(format) = requested_format(&common, &config) {
                if format != "json" {
                    return Err(CliError::Usage(format!(
                        "run emits json records; format '{format}' is for sweeps"
                    )));
                }
            }
            let resolved = resolve(&config)?;
            match cmd_run(&config, &resolved) {
                Ok(record) => {
                    write_output(&common, &config, &record)?;
                    Ok(0)
                }
                // pipeline failures still produce a structured record with
                // the failing stage before the nonzero exit
                Err(err @ (CliError::Validation(_) | CliError::Numerical { .. })) => {
                    write_output(&common, &config, &liefloq_cli::render_error_record(&err))?;
                    Err(err)
                }
                Err(err) => Err(err),
            }
        }
        Command::Sweep(args) => {
            let config = effective_config(&args.common)?;
            if let Some(format) = requested_format(&args.common, &config) {
                if format != "csv" {
                    return Err(CliError::Usage(format!(
                        "sweep emits csv tables; format '{format}' is for run"
                    )));
                }
            }
            let base_sweep = config.sweep.clone();
            let sweep = SweepConfig {
                parameter: args
                    .parameter
                    .clone()
                    .or_else(|| base_sweep.as_ref().map(|s| s.parameter.clone()))
                    .ok_or_else(|| {
                        CliError::Usage("sweep needs --parameter (or a config sweep block)".into())
                    })?,
                from: args
                    .from
                    .or(base_sweep.as_ref().map(|s| s.from))
                    .ok_or_else(|| CliError::Usage("sweep needs --from".into()))?,
                to: args
                    .to
                    .or(base_sweep.as_ref().map(|s| s.to))
                    .ok_or_else(|| CliError::Usage("sweep needs --to".into()))?,
                points: args
                    .points
                    .or(base_sweep.as_ref().map(|s| s.points))
                    .ok_or_else(|| CliError::Usage("sweep needs --points".into()))?,
            };
            let jobs = args.jobs.or(config.jobs).unwrap_or(1);
            let resolved = resolve(&config)?;
            let csv = cmd_sweep(&resolved, &sweep, jobs)?;
            write_output(&args.common, &config, &csv)?;
            Ok(0)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help / --version are not usage errors
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
