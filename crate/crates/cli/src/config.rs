//! Run-configuration schema (`schema: 1`): JSON files parsed by serde, plus
//! the resolution step that merges CLI flag overrides and builds the model.
//!
//! Structure-constant and reduction indices in config files are 1-based,
//! matching the physics notation; the library API is 0-based.

use std::collections::BTreeMap;

use serde::Deserialize;

use liefloq::algebra::{adjoint_rep, ConstantEntry, LieAlgebraSpec};
use liefloq::drive::{DriveSpec, DriveTerm};
use liefloq::factorization::FlowOptions;
use liefloq::linalg::{CMatrix, Complex64};
use liefloq::models::{self, ModelKind, ModelPreset};
use liefloq::oracle::OracleOptions;
use liefloq::recombination::{RecombinationOptions, ReductionStep};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: u32,
    #[serde(default)]
    pub mode: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub tolerances: Option<TolerancesConfig>,
    #[serde(default)]
    pub trotter: Option<TrotterConfig>,
    #[serde(default)]
    pub checkpoints: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub timings: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub custom: Option<CustomModelConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModelConfig {
    pub labels: Vec<String>,
    /// Entries c_{i,j,k} with 1-based indices; antisymmetric completion is
    /// automatic.
    pub constants: Vec<ConstantConfig>,
    /// Optional representation: one d x d matrix per generator, row-major,
    /// entries as [re, im]. When absent the adjoint representation is used.
    #[serde(default)]
    pub rep: Option<Vec<Vec<Vec<[f64; 2]>>>>,
    pub drive: CustomDriveConfig,
    /// Optional quadratic-reduction recipe, applied in order; indices are
    /// 1-based.
    #[serde(default)]
    pub reduction: Option<Vec<ReductionConfig>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantConfig {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub c: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomDriveConfig {
    pub omega: f64,
    /// One term list per generator.
    pub terms: Vec<Vec<DriveTermConfig>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveTermConfig {
    /// "const", "cos", or "sin".
    pub kind: String,
    #[serde(default)]
    pub harmonic: Option<u32>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub generator: usize,
    pub numerator: usize,
    pub denominator: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterConfig {
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default)]
    pub start_steps_log2: Option<u32>,
    #[serde(default)]
    pub max_steps_log2: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<String>,
    /// "json" or "csv".
    #[serde(default)]
    pub format: Option<String>,
}

/// Everything a single run needs, after merging config and flag overrides.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub preset: ModelPreset,
    pub flow: FlowOptions,
    pub recombination: RecombinationOptions,
    pub oracle: OracleOptions,
    pub timings: bool,
}

pub fn parse_config_text(text: &str) -> Result<ConfigFile, CliError> {
    let config: ConfigFile =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config parse: {e}")))?;
    if config.schema != SCHEMA_VERSION {
        return Err(CliError::Usage(format!(
            "unsupported schema {} (expected {SCHEMA_VERSION})",
            config.schema
        )));
    }
    Ok(config)
}

fn preset_defaults(name: &str) -> Result<Vec<(&'static str, f64)>, CliError> {
    match name {
        "paul-trap" => Ok(vec![
            ("m", 1.0),
            ("omega0", 1.0),
            ("omega1", 0.0),
            ("omega", 10.0),
        ]),
        "optical-lattice" => Ok(vec![("J", 1.0), ("kappa", 1.0), ("omega", 20.0)]),
        "kapitza" => Ok(vec![
            ("m", 1.0),
            ("omega0", 1.0),
            ("omega", 10.0),
            ("F", 1.0),
        ]),
        other => Err(CliError::Usage(format!(
            "unknown preset '{other}' (expected paul-trap, optical-lattice, or kapitza)"
        ))),
    }
}

/// Builds a preset from its name and a parameter map; unknown keys are usage
/// errors, missing keys fall back to the documented defaults.
pub fn build_preset(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelPreset, CliError> {
    let defaults = preset_defaults(name)?;
    for key in params.keys() {
        if !defaults.iter().any(|(k, _)| k == key) {
            return Err(CliError::Usage(format!(
                "parameter '{key}' is not declared by preset '{name}'"
            )));
        }
    }
    let value = |key: &str| -> f64 {
        params
            .get(key)
            .copied()
            .unwrap_or_else(|| defaults.iter().find(|(k, _)| *k == key).unwrap().1)
    };
    let preset = match name {
        "paul-trap" => {
            models::paul_trap(value("m"), value("omega0"), value("omega1"), value("omega"))
        }
        "optical-lattice" => models::optical_lattice(value("J"), value("kappa"), value("omega")),
        "kapitza" => models::kapitza(value("m"), value("omega0"), value("omega"), value("F")),
        _ => unreachable!("preset name already checked"),
    };
    preset.map_err(|e| CliError::Usage(e.to_string()))
}

fn build_custom(custom: &CustomModelConfig) -> Result<ModelPreset, CliError> {
    let n = custom.labels.len();
    if n == 0 {
        return Err(CliError::Usage(
            "custom model needs at least one label".into(),
        ));
    }
    let mut entries = Vec::with_capacity(custom.constants.len());
    for c in &custom.constants {
        if c.i == 0 || c.j == 0 || c.k == 0 || c.i > n || c.j > n || c.k > n {
            return Err(CliError::Usage(format!(
                "constant index ({}, {}, {}) outside 1..={n}",
                c.i, c.j, c.k
            )));
        }
        entries.push(ConstantEntry::new(c.i - 1, c.j - 1, c.k - 1, c.c));
    }
    let bare = LieAlgebraSpec::new(n, &entries).map_err(|e| CliError::Usage(e.to_string()))?;

    let (rep, central_note, central_components) = match &custom.rep {
        Some(matrices) => {
            let mut parsed: Vec<CMatrix> = Vec::with_capacity(matrices.len());
            for (k, m) in matrices.iter().enumerate() {
                let d = m.len();
                let mut out = CMatrix::zeros(d, d);
                for (i, row) in m.iter().enumerate() {
                    if row.len() != d {
                        return Err(CliError::Usage(format!(
                            "rep matrix {k} is not square (row {i} has {} entries)",
                            row.len()
                        )));
                    }
                    for (j, entry) in row.iter().enumerate() {
                        out[(i, j)] = Complex64::new(entry[0], entry[1]);
                    }
                }
                parsed.push(out);
            }
            (parsed, None, Vec::new())
        }
        None => {
            let adj = adjoint_rep(&bare);
            let centrals: Vec<usize> = adj
                .central_directions
                .iter()
                .flat_map(|v| (0..n).filter(move |&i| v[i].abs() > 1e-8))
                .collect();
            let note = if adj.faithful {
                None
            } else {
                Some(
                    "adjoint representation is blind to the central directions; \
                     their coefficients are not oracle-checked"
                        .to_string(),
                )
            };
            (adj.matrices, note, centrals)
        }
    };

    let mut term_lists = Vec::with_capacity(custom.drive.terms.len());
    for list in &custom.drive.terms {
        let mut parsed = Vec::with_capacity(list.len());
        for term in list {
            let parsed_term = match term.kind.as_str() {
                "const" => DriveTerm::Const {
                    amplitude: term.amplitude,
                },
                "cos" => DriveTerm::Cos {
                    harmonic: term.harmonic.unwrap_or(1),
                    amplitude: term.amplitude,
                },
                "sin" => DriveTerm::Sin {
                    harmonic: term.harmonic.unwrap_or(1),
                    amplitude: term.amplitude,
                },
                other => {
                    return Err(CliError::Usage(format!(
                        "drive term kind '{other}' (expected const, cos, or sin)"
                    )))
                }
            };
            parsed.push(parsed_term);
        }
        term_lists.push(parsed);
    }
    if term_lists.len() != n {
        return Err(CliError::Usage(format!(
            "drive has {} term lists but the algebra has {n} generators",
            term_lists.len()
        )));
    }
    let drive = DriveSpec::new(custom.drive.omega, term_lists)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let reduction = match &custom.reduction {
        None => None,
        Some(steps) => {
            let mut parsed = Vec::with_capacity(steps.len());
            for s in steps {
                for (name, idx) in [
                    ("generator", s.generator),
                    ("numerator", s.numerator),
                    ("denominator", s.denominator),
                ] {
                    if idx == 0 || idx > n {
                        return Err(CliError::Usage(format!(
                            "reduction {name} index {idx} outside 1..={n}"
                        )));
                    }
                }
                parsed.push(ReductionStep {
                    generator: s.generator - 1,
                    numerator: s.numerator - 1,
                    denominator: s.denominator - 1,
                    scale: s.scale,
                });
            }
            Some(parsed)
        }
    };

    let algebra = bare.with_labels(custom.labels.clone()).with_rep(rep);
    Ok(ModelPreset {
        name: "custom",
        kind: ModelKind::Custom,
        algebra,
        drive,
        central_note,
        central_components,
        reduction,
        params: Vec::new(),
        warnings: Vec::new(),
    })
}

/// Builds the model from the config's model block.
pub fn build_model(model: &ModelConfig) -> Result<ModelPreset, CliError> {
    match (&model.preset, &model.custom) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "exactly one of model.preset / model.custom must be present, got both".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "exactly one of model.preset / model.custom must be present, got neither".into(),
        )),
        (Some(name), None) => {
            let empty = BTreeMap::new();
            build_preset(name, model.params.as_ref().unwrap_or(&empty))
        }
        (None, Some(custom)) => {
            if model.params.is_some() {
                return Err(CliError::Usage(
                    "model.params applies to presets only; custom drives carry their own numbers"
                        .into(),
                ));
            }
            build_custom(custom)
        }
    }
}

/// Merges the tolerance/trotter/checkpoint blocks into solver options.
pub fn resolve_options(
    config: &ConfigFile,
) -> Result<(FlowOptions, RecombinationOptions, OracleOptions), CliError> {
    let mut flow = FlowOptions::default();
    let mut recombination = RecombinationOptions::default();
    let mut oracle = OracleOptions::default();
    if let Some(t) = &config.tolerances {
        if let Some(rel) = t.rel_tol {
            flow.rel_tol = rel;
        }
        if let Some(abs) = t.abs_tol {
            flow.abs_tol = abs;
        }
    }
    if let Some(t) = &config.trotter {
        if let Some(target) = t.target {
            oracle.richardson_target = target;
        }
        if let Some(start) = t.start_steps_log2 {
            oracle.start_steps_log2 = start;
        }
        if let Some(max) = t.max_steps_log2 {
            oracle.max_steps_log2 = max;
        }
        if oracle.start_steps_log2 < 2 || oracle.start_steps_log2 > oracle.max_steps_log2 {
            return Err(CliError::Usage(format!(
                "trotter step bounds 2^{} .. 2^{} are not usable",
                oracle.start_steps_log2, oracle.max_steps_log2
            )));
        }
    }
    if let Some(checkpoints) = config.checkpoints {
        if checkpoints == 0 {
            return Err(CliError::Usage("checkpoints must be at least 1".into()));
        }
        recombination.checkpoints = checkpoints;
    }
    Ok((flow, recombination, oracle))
}
