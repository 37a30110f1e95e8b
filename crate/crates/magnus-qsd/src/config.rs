//! Run configuration: TOML/JSON schema with explicit unit tags on every
//! physical quantity, built-in presets, and resolution into executable runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::magnus::{FourthOrderFallback, SchemeConfig, SchemeKind, UnravelingKind};
use crate::matrix::CMat;
use crate::models::{self, InitialState, LindbladModel, RpmParameters};
use crate::wiener::DEFAULT_P;

/// Physical quantity carrying its unit explicitly; converted to the model's
/// native time unit at resolution time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

impl Quantity {
    pub fn new(value: f64, unit: &str) -> Self {
        Self {
            value,
            unit: unit.into(),
        }
    }

    /// Convert into `native` time units. Supported conversions: ps→fs,
    /// ms/us/µs/ns→s; the inverse-coupling unit of the spin chain ("1/J")
    /// has no multiples.
    pub fn in_unit(&self, native: &str) -> Result<f64> {
        if !self.value.is_finite() {
            return Err(QsdError::Config(format!(
                "non-finite quantity {} {}",
                self.value, self.unit
            )));
        }
        let u = self.unit.as_str();
        let factor = match native {
            "1/J" => match u {
                "1/J" | "tJ" | "dimensionless" => 1.0,
                _ => return Err(unit_error(u, native)),
            },
            "fs" => match u {
                "fs" => 1.0,
                "ps" => 1e3,
                "ns" => 1e6,
                _ => return Err(unit_error(u, native)),
            },
            "s" => match u {
                "s" => 1.0,
                "ms" => 1e-3,
                "us" | "µs" => 1e-6,
                "ns" => 1e-9,
                _ => return Err(unit_error(u, native)),
            },
            _ => {
                if u == native {
                    1.0
                } else {
                    return Err(unit_error(u, native));
                }
            }
        };
        Ok(self.value * factor)
    }
}

fn unit_error(got: &str, native: &str) -> QsdError {
    QsdError::Config(format!(
        "unit \"{got}\" is not convertible to the model's time unit \"{native}\""
    ))
}

/// Model selection: a built-in family with optional parameter overrides, or
/// a JSON model file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Built-in family: "tfim", "fmo", "rpm", or "damped-qubit".
    pub preset: Option<String>,
    /// Path to a JSON model definition (dim, hamiltonian, jump_ops,
    /// observables, unit_note).
    pub file: Option<PathBuf>,
    /// Basis index of the initial pure state for file models.
    pub initial_basis_index: Option<usize>,

    // Spin-chain parameters.
    pub n_sites: Option<usize>,
    pub coupling: Option<f64>,
    pub transverse_field: Option<f64>,
    /// One damping rate per site (a single entry broadcasts to all sites).
    pub damping_rates: Option<Vec<f64>>,

    // Radical-pair parameters.
    pub theta_deg: Option<f64>,
    pub phi_deg: Option<f64>,
    pub b0_gauss: Option<f64>,
    pub hyperfine_gauss: Option<[f64; 3]>,
    pub g_factor: Option<f64>,
    pub shelving_rate_per_s: Option<f64>,

    // Damped-qubit parameters.
    pub rabi_frequency: Option<f64>,
    pub decay_rate: Option<f64>,
}

/// One integrator choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    /// "em", "magnus1", "magnus2", "magnus3", or "magnus4".
    pub kind: String,
    /// "linear" or "nonlinear".
    pub unraveling: String,
    #[serde(default)]
    pub rkmk: bool,
    /// "downgrade" (default) or "error" when the order-4 structure
    /// conditions fail.
    pub fourth_order_fallback: Option<String>,
}

impl SchemeSection {
    pub fn resolve(&self) -> Result<SchemeConfig> {
        let kind: SchemeKind = self
            .kind
            .parse()
            .map_err(|e: QsdError| QsdError::Config(e.to_string()))?;
        let unraveling: UnravelingKind = self
            .unraveling
            .parse()
            .map_err(|e: QsdError| QsdError::Config(e.to_string()))?;
        let mut cfg = SchemeConfig::new(kind, unraveling).with_rkmk(self.rkmk);
        if let Some(fb) = &self.fourth_order_fallback {
            cfg = cfg.with_fallback(match fb.as_str() {
                "downgrade" => FourthOrderFallback::Downgrade,
                "error" => FourthOrderFallback::Error,
                other => {
                    return Err(QsdError::Config(format!(
                        "unknown fourth_order_fallback \"{other}\""
                    )))
                }
            });
        }
        cfg.validate().map_err(|e| QsdError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Stable tag used for output directories and report keys.
    pub fn tag(&self) -> String {
        let mut tag = format!("{}-{}", self.kind, self.unraveling);
        if self.rkmk {
            tag.push_str("-rkmk");
        }
        tag
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub delta: Quantity,
    pub t_stop: Quantity,
    pub n_traj: usize,
    pub n_repeats: usize,
    pub master_seed: u64,
    #[serde(default = "default_fourier_terms")]
    pub fourier_terms: usize,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub compare_exact: bool,
    /// Absent: record every model observable. Present but empty: record
    /// nothing (meta.json only).
    pub observables: Option<Vec<String>>,
}

fn default_fourier_terms() -> usize {
    DEFAULT_P
}

fn default_ci_level() -> f64 {
    0.99
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub deltas: Vec<Quantity>,
    pub t_final: Option<Quantity>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpmYieldSection {
    pub angles_deg: Vec<f64>,
}

/// Top-level configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: ModelSection,
    #[serde(rename = "scheme")]
    pub schemes: Vec<SchemeSection>,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub converge: Option<ConvergeSection>,
    #[serde(default)]
    pub rpm_yield: Option<RpmYieldSection>,
}

impl RawConfig {
    /// Parse from TOML or JSON, chosen by extension with fallback sniffing.
    pub fn from_str_auto(text: &str, hint: Option<&str>) -> Result<Self> {
        let toml_first = !matches!(hint, Some("json"));
        let (first, second): (&dyn Fn(&str) -> Result<Self>, &dyn Fn(&str) -> Result<Self>) =
            if toml_first {
                (&parse_toml, &parse_json)
            } else {
                (&parse_json, &parse_toml)
            };
        first(text).or_else(|primary| second(text).map_err(|_| primary))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let hint = path.extension().and_then(|e| e.to_str());
        Self::from_str_auto(&text, hint)
    }
}

fn parse_toml(text: &str) -> Result<RawConfig> {
    toml::from_str(text).map_err(|e| QsdError::Config(format!("TOML config: {e}")))
}

fn parse_json(text: &str) -> Result<RawConfig> {
    serde_json::from_str(text).map_err(|e| QsdError::Config(format!("JSON config: {e}")))
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

pub const PRESET_NAMES: [&str; 3] = ["tfim", "fmo", "rpm"];

/// Built-in configurations mirroring the benchmark setups: the damped
/// spin chain, the pigment network, and the radical-pair compass.
pub fn preset(name: &str) -> Result<RawConfig> {
    let scheme = |kind: &str, unraveling: &str| SchemeSection {
        kind: kind.into(),
        unraveling: unraveling.into(),
        rkmk: false,
        fourth_order_fallback: None,
    };
    match name {
        "tfim" => Ok(RawConfig {
            model: ModelSection {
                preset: Some("tfim".into()),
                n_sites: Some(2),
                coupling: Some(1.0),
                transverse_field: Some(1.0),
                damping_rates: Some(vec![0.1]),
                ..ModelSection::default()
            },
            schemes: vec![
                scheme("magnus1", "linear"),
                scheme("magnus2", "linear"),
                scheme("magnus1", "nonlinear"),
                scheme("magnus2", "nonlinear"),
            ],
            run: RunSection {
                delta: Quantity::new(0.25, "1/J"),
                t_stop: Quantity::new(25.0, "1/J"),
                n_traj: 1000,
                n_repeats: 10,
                master_seed: 20260822,
                fourier_terms: DEFAULT_P,
                ci_level: 0.99,
                compare_exact: true,
                observables: None,
            },
            output: OutputSection::default(),
            converge: Some(ConvergeSection {
                deltas: [0.1, 0.03, 0.01, 0.003]
                    .iter()
                    .map(|&d| Quantity::new(d, "1/J"))
                    .collect(),
                // Each delta divides the horizon an integer number of times.
                t_final: Some(Quantity::new(3.0, "1/J")),
            }),
            rpm_yield: None,
        }),
        "fmo" => Ok(RawConfig {
            model: ModelSection {
                preset: Some("fmo".into()),
                ..ModelSection::default()
            },
            schemes: vec![scheme("magnus1", "linear"), scheme("magnus1", "nonlinear")],
            run: RunSection {
                delta: Quantity::new(5.0, "fs"),
                t_stop: Quantity::new(500.0, "fs"),
                n_traj: 1000,
                n_repeats: 10,
                master_seed: 20260822,
                fourier_terms: DEFAULT_P,
                ci_level: 0.99,
                compare_exact: true,
                observables: None,
            },
            output: OutputSection::default(),
            converge: Some(ConvergeSection {
                deltas: [20.0, 10.0, 5.0, 2.0]
                    .iter()
                    .map(|&d| Quantity::new(d, "fs"))
                    .collect(),
                t_final: Some(Quantity::new(100.0, "fs")),
            }),
            rpm_yield: None,
        }),
        "rpm" => Ok(RawConfig {
            model: ModelSection {
                preset: Some("rpm".into()),
                theta_deg: Some(0.0),
                phi_deg: Some(0.0),
                b0_gauss: Some(0.47),
                hyperfine_gauss: Some([0.345, 0.345, 9.0]),
                g_factor: Some(2.0),
                shelving_rate_per_s: Some(1e4),
                ..ModelSection::default()
            },
            schemes: vec![
                scheme("magnus1", "linear"),
                scheme("magnus2", "linear"),
                scheme("magnus3", "linear"),
                scheme("magnus4", "linear"),
            ],
            run: RunSection {
                delta: Quantity::new(1e-7, "s"),
                t_stop: Quantity::new(5e-5, "s"),
                n_traj: 1000,
                n_repeats: 10,
                master_seed: 20260822,
                fourier_terms: DEFAULT_P,
                ci_level: 0.99,
                compare_exact: true,
                observables: None,
            },
            output: OutputSection::default(),
            converge: None,
            rpm_yield: Some(RpmYieldSection {
                angles_deg: (0..=9).map(|k| 10.0 * k as f64).collect(),
            }),
        }),
        other => Err(QsdError::Config(format!(
            "unknown preset \"{other}\" (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Fully resolved, validated run description.
pub struct ResolvedConfig {
    pub raw: RawConfig,
    pub model_label: String,
    pub model: LindbladModel,
    pub initial: InitialState,
    /// Native time unit used for delta/t_stop after conversion.
    pub time_unit: String,
    pub schemes: Vec<(String, SchemeConfig)>,
    pub delta: f64,
    pub n_steps: u64,
    pub n_traj: usize,
    pub n_repeats: usize,
    pub master_seed: u64,
    pub fourier_terms: usize,
    pub ci_level: f64,
    pub compare_exact: bool,
    /// Observables to record; `None` means "all model observables were
    /// requested", an empty vector means "record nothing".
    pub observables: Vec<(String, CMat)>,
    pub record_anything: bool,
    pub out_dir: PathBuf,
    pub converge_deltas: Vec<f64>,
    pub converge_t_final: Option<f64>,
    pub yield_angles_deg: Vec<f64>,
    /// Radical-pair parameters backing the model, when applicable; the
    /// angle-sweep command rebuilds models from these.
    pub rpm_params: Option<RpmParameters>,
}

/// Command-line overrides applied on top of the config file or preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub master_seed: Option<u64>,
}

pub fn resolve(mut raw: RawConfig, overrides: &Overrides) -> Result<ResolvedConfig> {
    if let Some(seed) = overrides.master_seed {
        raw.run.master_seed = seed;
    }
    if let Some(dir) = &overrides.out_dir {
        raw.output.directory = Some(dir.clone());
    }

    let (model_label, model, initial, time_unit, rpm_params) = build_model(&raw.model)?;

    if raw.schemes.is_empty() {
        return Err(QsdError::Config("no scheme configured".into()));
    }
    let mut schemes = Vec::with_capacity(raw.schemes.len());
    for section in &raw.schemes {
        schemes.push((section.tag(), section.resolve()?));
    }
    {
        let mut tags: Vec<&String> = schemes.iter().map(|(t, _)| t).collect();
        tags.sort();
        tags.dedup();
        if tags.len() != schemes.len() {
            return Err(QsdError::Config("duplicate scheme entries".into()));
        }
    }

    let delta = raw.run.delta.in_unit(&time_unit)?;
    if !(delta > 0.0) {
        return Err(QsdError::Config("delta must be positive".into()));
    }
    let t_stop = raw.run.t_stop.in_unit(&time_unit)?;
    let n_steps = integer_step_count(t_stop, delta)?;
    if raw.run.n_traj == 0 || raw.run.n_repeats == 0 {
        return Err(QsdError::Config("n_traj and n_repeats must be ≥ 1".into()));
    }
    if !(raw.run.ci_level > 0.0 && raw.run.ci_level < 1.0) {
        return Err(QsdError::Config("ci_level must lie in (0,1)".into()));
    }

    let (observables, record_anything) = match &raw.run.observables {
        None => (model.observables.clone(), true),
        Some(names) if names.is_empty() => (Vec::new(), false),
        Some(names) => {
            let mut out = Vec::with_capacity(names.len());
            for name in names {
                match model.observable(name) {
                    Some(op) => out.push((name.clone(), op.clone())),
                    None => {
                        return Err(QsdError::Config(format!(
                            "unknown observable \"{name}\" (model provides: {})",
                            model.observable_names().join(", ")
                        )))
                    }
                }
            }
            (out, true)
        }
    };

    let converge_deltas = match &raw.converge {
        Some(c) => c
            .deltas
            .iter()
            .map(|q| q.in_unit(&time_unit))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let converge_t_final = match &raw.converge {
        Some(c) => match &c.t_final {
            Some(q) => Some(q.in_unit(&time_unit)?),
            None => None,
        },
        None => None,
    };
    let yield_angles_deg = raw
        .rpm_yield
        .as_ref()
        .map(|s| s.angles_deg.clone())
        .unwrap_or_default();
    for &a in &yield_angles_deg {
        if !(0.0..=90.0).contains(&a) {
            return Err(QsdError::Config(format!(
                "sweep angle {a}° outside [0°, 90°]"
            )));
        }
    }

    let out_dir = raw
        .output
        .directory
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(ResolvedConfig {
        model_label,
        model,
        initial,
        time_unit,
        schemes,
        delta,
        n_steps,
        n_traj: raw.run.n_traj,
        n_repeats: raw.run.n_repeats,
        master_seed: raw.run.master_seed,
        fourier_terms: raw.run.fourier_terms,
        ci_level: raw.run.ci_level,
        compare_exact: raw.run.compare_exact,
        observables,
        record_anything,
        out_dir,
        converge_deltas,
        converge_t_final,
        yield_angles_deg,
        rpm_params,
        raw,
    })
}

/// t_stop/delta must be a positive integer (to 1e-9 relative).
pub fn integer_step_count(t_stop: f64, delta: f64) -> Result<u64> {
    if !(t_stop > 0.0 && delta > 0.0) {
        return Err(QsdError::Config(
            "t_stop and delta must be positive".into(),
        ));
    }
    let ratio = t_stop / delta;
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(QsdError::Config(format!(
            "t_stop/delta = {ratio} is not a positive integer step count"
        )));
    }
    Ok(steps as u64)
}

type BuiltModel = (
    String,
    LindbladModel,
    InitialState,
    String,
    Option<RpmParameters>,
);

fn build_model(section: &ModelSection) -> Result<BuiltModel> {
    match (&section.preset, &section.file) {
        (Some(_), Some(_)) => Err(QsdError::Config(
            "model.preset and model.file are mutually exclusive".into(),
        )),
        (None, None) => Err(QsdError::Config(
            "configure either model.preset or model.file".into(),
        )),
        (Some(name), None) => match name.as_str() {
            "tfim" => {
                let n = section.n_sites.unwrap_or(2);
                let j = section.coupling.unwrap_or(1.0);
                let h = section.transverse_field.unwrap_or(1.0);
                let rates = match &section.damping_rates {
                    Some(r) if r.len() == 1 => vec![r[0]; n],
                    Some(r) if r.len() == n => r.clone(),
                    Some(r) => {
                        return Err(QsdError::Config(format!(
                            "damping_rates has {} entries for {n} sites",
                            r.len()
                        )))
                    }
                    None => vec![0.1; n],
                };
                let model = models::build_tfim(n, j, h, &rates)?;
                Ok((
                    format!("tfim-{n}site"),
                    model,
                    models::tfim_initial_state(n),
                    "1/J".into(),
                    None,
                ))
            }
            "fmo" => Ok((
                "fmo".into(),
                models::build_fmo()?,
                models::fmo_initial_state(),
                "fs".into(),
                None,
            )),
            "rpm" => {
                let defaults = RpmParameters::default();
                let params = RpmParameters {
                    theta: section.theta_deg.unwrap_or(0.0).to_radians(),
                    phi: section.phi_deg.unwrap_or(0.0).to_radians(),
                    b0: section.b0_gauss.unwrap_or(defaults.b0),
                    hyperfine: section
                        .hyperfine_gauss
                        .map(|[x, y, z]| (x, y, z))
                        .unwrap_or(defaults.hyperfine),
                    g_factor: section.g_factor.unwrap_or(defaults.g_factor),
                    k: section.shelving_rate_per_s.unwrap_or(defaults.k),
                };
                let model = models::build_rpm(&params)?;
                Ok((
                    "rpm".into(),
                    model,
                    models::rpm_initial_state(),
                    "s".into(),
                    Some(params),
                ))
            }
            "damped-qubit" => {
                let omega = section.rabi_frequency.unwrap_or(1.0);
                let gamma = section.decay_rate.unwrap_or(0.5);
                let model = models::build_damped_qubit(omega, gamma)?;
                Ok((
                    "damped-qubit".into(),
                    model,
                    InitialState::pure_basis(2, 1),
                    "dimensionless".into(),
                    None,
                ))
            }
            other => Err(QsdError::Config(format!(
                "unknown model preset \"{other}\""
            ))),
        },
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let model = models::model_from_json(&text)?;
            let idx = section.initial_basis_index.unwrap_or(0);
            if idx >= model.dim {
                return Err(QsdError::Config(format!(
                    "initial_basis_index {idx} outside dimension {}",
                    model.dim
                )));
            }
            let unit = if model.unit_note.is_empty() {
                "dimensionless".to_string()
            } else {
                model.unit_note.clone()
            };
            let initial = InitialState::pure_basis(model.dim, idx);
            let label = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("model")
                .to_string();
            Ok((label, model, initial, unit, None))
        }
    }
}
