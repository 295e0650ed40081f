//! Experiment configuration: an INI-like text format with sections
//! `[scenario]`, `[data]`, `[estimator]`, `[sweep]`.
//!
//! ```text
//! [scenario]
//! name = two_sources            # or explicit doas/powers/correlation
//!
//! [data]
//! model = eps_contaminated      # gaussian | mvt | eps_contaminated
//! epsilon = 0.05
//! lambda = 10
//! n_sensors = 20
//! n_snapshots = 25
//! n_runs = 100
//! master_seed = 7
//!
//! [estimator]
//! losses = gauss, huber, mvt, tyler
//! grid_size = 1801
//!
//! [sweep]
//! kind = asnr                   # asnr | lambda
//! start = 0
//! stop = 30
//! step = 10
//! output = results.csv
//! ```
//!
//! Every key has a desk-scale default except the scenario, the data model,
//! and the sweep range. Parse errors name the offending line and field.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rdoa_core::{EstimatorConfig, LossKind, LossSpec, Scenario};

use crate::{CliError, Result};

/// Noise/data model for snapshot generation, with sweep-independent
/// parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataModel {
    Gaussian,
    /// Heavy-tailed multivariate t data with `nu_data` degrees of freedom.
    Mvt { nu_data: f64 },
    /// Gaussian with probability 1−ε, variance inflated by λ² with
    /// probability ε.
    EpsContaminated { epsilon: f64, lambda: f64 },
}

/// Sweep axis: either the array SNR in dB, or the contamination strength λ
/// at a fixed ASNR.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Asnr { values: Vec<f64> },
    Lambda { asnr_db: f64, values: Vec<f64> },
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::Asnr { values } | Sweep::Lambda { values, .. } => values,
        }
    }
}

/// One loss selected in the config; resolved to a [`LossSpec`] once the
/// sensor count is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossChoice(pub LossKind);

impl LossChoice {
    pub fn name(&self) -> &'static str {
        self.0.name()
    }

    pub fn to_spec(&self, n_sensors: usize, huber_q: f64, mvt_nu: f64) -> rdoa_core::Result<LossSpec> {
        match self.0 {
            LossKind::Gauss => LossSpec::gauss(n_sensors),
            LossKind::Huber => LossSpec::huber_with_q(n_sensors, huber_q),
            LossKind::Mvt => LossSpec::mvt_with_nu(n_sensors, mvt_nu),
            LossKind::Tyler => LossSpec::tyler(n_sensors),
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: DataModel,
    pub losses: Vec<LossChoice>,
    pub sweep: Sweep,
    pub n_sensors: usize,
    pub n_snapshots: usize,
    pub grid_size: usize,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Number of sources the estimator reports; defaults to the scenario's.
    pub n_sources: usize,
    pub huber_q: f64,
    /// ν of the MVT loss (not the data model's tail parameter).
    pub mvt_nu_loss: f64,
    pub estimator: EstimatorConfig,
    pub output: PathBuf,
}

impl ExperimentConfig {
    /// Switch from the desk-scale profile to the full-scale profile
    /// (M = 18001 grid points, 250 Monte-Carlo runs).
    pub fn apply_full_scale(&mut self) {
        self.grid_size = 18_001;
        self.n_runs = 250;
    }
}

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "scenario" => Some(&["name", "doas", "powers", "correlation"]),
        "data" => Some(&[
            "model",
            "epsilon",
            "lambda",
            "nu",
            "n_sensors",
            "n_snapshots",
            "n_runs",
            "master_seed",
        ]),
        "estimator" => Some(&[
            "losses",
            "huber_q",
            "mvt_nu",
            "stepsize",
            "conv_window",
            "max_iters",
            "gamma_range",
            "snr_max",
            "grid_size",
            "n_sources",
        ]),
        "sweep" => Some(&["kind", "start", "stop", "step", "values", "asnr_db", "output"]),
        _ => None,
    }
}

fn scan(text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    let mut section = String::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find(['#', ';']) {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                CliError::Config(format!("line {line_no}: unterminated section header '{raw}'"))
            })?;
            let name = name.trim().to_ascii_lowercase();
            if allowed_keys(&name).is_none() {
                return Err(CliError::Config(format!(
                    "line {line_no}: unknown section [{name}] (expected [scenario], [data], [estimator] or [sweep])"
                )));
            }
            section = name;
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {line_no}: expected 'key = value', got '{line}'"))
        })?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if section.is_empty() {
            return Err(CliError::Config(format!(
                "line {line_no}: key '{key}' appears before any section header"
            )));
        }
        let known = allowed_keys(&section).unwrap();
        if !known.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "line {line_no}: unknown field '{key}' in [{section}]"
            )));
        }
        if !seen.insert((section.clone(), key.clone())) {
            return Err(CliError::Config(format!(
                "line {line_no}: duplicate field '{key}' in [{section}]"
            )));
        }
        entries.push(Entry {
            section: section.clone(),
            key,
            value,
            line: line_no,
        });
    }
    Ok(entries)
}

struct RawConfig {
    entries: Vec<Entry>,
}

impl RawConfig {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.key == key)
    }

    fn str_opt(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).map(|e| e.value.as_str())
    }

    fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse::<f64>().map(Some).map_err(|_| {
                CliError::Config(format!(
                    "line {}: field '{}' in [{}] is not a number: '{}'",
                    e.line, e.key, e.section, e.value
                ))
            }),
        }
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(section, key)?.unwrap_or(default))
    }

    fn usize_opt(&self, section: &str, key: &str) -> Result<Option<usize>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse::<usize>().map(Some).map_err(|_| {
                CliError::Config(format!(
                    "line {}: field '{}' in [{}] is not a non-negative integer: '{}'",
                    e.line, e.key, e.section, e.value
                ))
            }),
        }
    }

    fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        Ok(self.usize_opt(section, key)?.unwrap_or(default))
    }

    fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => e.value.parse::<u64>().map_err(|_| {
                CliError::Config(format!(
                    "line {}: field '{}' in [{}] is not a non-negative integer: '{}'",
                    e.line, e.key, e.section, e.value
                ))
            }),
        }
    }

    fn f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for part in e.value.split(',') {
            let part = part.trim();
            let v = part.parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "line {}: field '{}' in [{}] has a non-numeric entry: '{}'",
                    e.line, e.key, e.section, part
                ))
            })?;
            out.push(v);
        }
        Ok(Some(out))
    }
}

fn parse_scenario(raw: &RawConfig) -> Result<Scenario> {
    let named = raw.str_opt("scenario", "name");
    let doas = raw.f64_list("scenario", "doas")?;
    match (named, doas) {
        (Some(name), None) => {
            let base = match name.to_ascii_lowercase().as_str() {
                "single_source" => Scenario::single_source(),
                "two_sources" => Scenario::two_sources(),
                "three_sources" => Scenario::three_sources(),
                other => {
                    let e = raw.get("scenario", "name").unwrap();
                    return Err(CliError::Config(format!(
                        "line {}: unknown scenario name '{other}' (expected single_source, two_sources or three_sources)",
                        e.line
                    )));
                }
            };
            // a correlation key applies on top of the named geometry
            let correlation = raw.f64_or("scenario", "correlation", base.correlation)?;
            Scenario::new(base.doas_degrees, base.source_powers, correlation)
                .map_err(CliError::from)
        }
        (None, Some(doas)) => {
            let powers = raw.f64_list("scenario", "powers")?.ok_or_else(|| {
                CliError::Config(
                    "field 'powers' in [scenario] is required when 'doas' is given".into(),
                )
            })?;
            let correlation = raw.f64_or("scenario", "correlation", 0.0)?;
            Scenario::new(doas, powers, correlation).map_err(CliError::from)
        }
        (Some(_), Some(_)) => Err(CliError::Config(
            "[scenario] must give either 'name' or explicit 'doas', not both".into(),
        )),
        (None, None) => Err(CliError::Config(
            "[scenario] needs a 'name' or explicit 'doas'/'powers'".into(),
        )),
    }
}

fn parse_model(raw: &RawConfig, sweep_is_lambda: bool) -> Result<DataModel> {
    let e = raw
        .get("data", "model")
        .ok_or_else(|| CliError::Config("field 'model' in [data] is required".into()))?;
    match e.value.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(DataModel::Gaussian),
        "mvt" => Ok(DataModel::Mvt {
            nu_data: raw.f64_or("data", "nu", 2.1)?,
        }),
        "eps_contaminated" => {
            let epsilon = raw.f64_opt("data", "epsilon")?.ok_or_else(|| {
                CliError::Config(
                    "field 'epsilon' in [data] is required for the eps_contaminated model".into(),
                )
            })?;
            // a λ sweep overrides this per sweep point
            let lambda = match raw.f64_opt("data", "lambda")? {
                Some(l) => l,
                None if sweep_is_lambda => 1.0,
                None => {
                    return Err(CliError::Config(
                        "field 'lambda' in [data] is required for the eps_contaminated model"
                            .into(),
                    ))
                }
            };
            Ok(DataModel::EpsContaminated { epsilon, lambda })
        }
        other => Err(CliError::Config(format!(
            "line {}: unknown data model '{other}' (expected gaussian, mvt or eps_contaminated)",
            e.line
        ))),
    }
}

fn parse_losses(raw: &RawConfig) -> Result<Vec<LossChoice>> {
    let Some(e) = raw.get("estimator", "losses") else {
        return Ok(vec![
            LossChoice(LossKind::Gauss),
            LossChoice(LossKind::Huber),
            LossChoice(LossKind::Mvt),
            LossChoice(LossKind::Tyler),
        ]);
    };
    let mut out = Vec::new();
    for part in e.value.split(',') {
        let part = part.trim().to_ascii_lowercase();
        let kind = match part.as_str() {
            "gauss" | "gaussian" => LossKind::Gauss,
            "huber" => LossKind::Huber,
            "mvt" => LossKind::Mvt,
            "tyler" => LossKind::Tyler,
            other => {
                return Err(CliError::Config(format!(
                    "line {}: unknown loss '{other}' in [estimator] (expected gauss, huber, mvt or tyler)",
                    e.line
                )))
            }
        };
        if out.contains(&LossChoice(kind)) {
            return Err(CliError::Config(format!(
                "line {}: loss '{part}' listed twice in [estimator]",
                e.line
            )));
        }
        out.push(LossChoice(kind));
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "line {}: field 'losses' in [estimator] must name at least one loss",
            e.line
        )));
    }
    Ok(out)
}

fn parse_sweep(raw: &RawConfig) -> Result<Sweep> {
    let e = raw
        .get("sweep", "kind")
        .ok_or_else(|| CliError::Config("field 'kind' in [sweep] is required".into()))?;
    let kind = e.value.to_ascii_lowercase();
    if kind != "asnr" && kind != "lambda" {
        return Err(CliError::Config(format!(
            "line {}: unknown sweep kind '{}' (expected asnr or lambda)",
            e.line, e.value
        )));
    }

    let explicit = raw.f64_list("sweep", "values")?;
    let has_range = raw.get("sweep", "start").is_some()
        || raw.get("sweep", "stop").is_some()
        || raw.get("sweep", "step").is_some();
    let values = match (explicit, has_range) {
        (Some(_), true) => {
            return Err(CliError::Config(
                "[sweep] must give either 'values' or 'start'/'stop'/'step', not both".into(),
            ))
        }
        (Some(v), false) => v,
        (None, true) => {
            let start = raw
                .f64_opt("sweep", "start")?
                .ok_or_else(|| CliError::Config("field 'start' in [sweep] is required".into()))?;
            let stop = raw
                .f64_opt("sweep", "stop")?
                .ok_or_else(|| CliError::Config("field 'stop' in [sweep] is required".into()))?;
            let step = raw.f64_or("sweep", "step", 1.0)?;
            if !(step > 0.0) || stop < start {
                return Err(CliError::Config(format!(
                    "invalid [sweep] range: start={start}, stop={stop}, step={step}"
                )));
            }
            // inclusive endpoint with tolerance for binary step rounding
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
        (None, false) => {
            return Err(CliError::Config(
                "[sweep] needs 'values' or a 'start'/'stop'/'step' range".into(),
            ))
        }
    };
    if values.is_empty() {
        return Err(CliError::Config("[sweep] resolved to an empty grid".into()));
    }

    if kind == "lambda" {
        let asnr_db = raw.f64_opt("sweep", "asnr_db")?.ok_or_else(|| {
            CliError::Config("field 'asnr_db' in [sweep] is required for a lambda sweep".into())
        })?;
        for &v in &values {
            if v < 1.0 {
                return Err(CliError::Config(format!(
                    "lambda sweep value {v} < 1; contamination cannot shrink the variance"
                )));
            }
        }
        Ok(Sweep::Lambda { asnr_db, values })
    } else {
        if raw.get("sweep", "asnr_db").is_some() {
            return Err(CliError::Config(
                "field 'asnr_db' in [sweep] only applies to lambda sweeps".into(),
            ));
        }
        Ok(Sweep::Asnr { values })
    }
}

/// Parse and validate a config file's text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw = RawConfig {
        entries: scan(text)?,
    };

    let scenario = parse_scenario(&raw)?;
    let sweep = parse_sweep(&raw)?;
    let model = parse_model(&raw, matches!(sweep, Sweep::Lambda { .. }))?;
    if matches!(sweep, Sweep::Lambda { .. }) && !matches!(model, DataModel::EpsContaminated { .. })
    {
        return Err(CliError::Config(
            "a lambda sweep requires the eps_contaminated data model".into(),
        ));
    }
    let losses = parse_losses(&raw)?;

    let n_sensors = raw.usize_or("data", "n_sensors", 20)?;
    let n_snapshots = raw.usize_or("data", "n_snapshots", 25)?;
    let n_runs = raw.usize_or("data", "n_runs", 100)?;
    let master_seed = raw.u64_or("data", "master_seed", 0)?;
    if n_runs < 1 {
        return Err(CliError::Config("field 'n_runs' in [data] must be at least 1".into()));
    }
    if n_snapshots < 1 {
        return Err(CliError::Config(
            "field 'n_snapshots' in [data] must be at least 1".into(),
        ));
    }

    let grid_size = raw.usize_or("estimator", "grid_size", 1801)?;
    let n_sources = raw.usize_or("estimator", "n_sources", scenario.n_sources())?;
    if n_sources < 1 || n_sources >= n_sensors {
        return Err(CliError::Config(format!(
            "field 'n_sources' in [estimator] must satisfy 1 <= K < N, got K={n_sources}, N={n_sensors}"
        )));
    }
    if n_sources != scenario.n_sources() {
        return Err(CliError::Config(format!(
            "field 'n_sources' in [estimator] must match the scenario's {} sources so RMSE \
             assignment is well defined, got {n_sources}",
            scenario.n_sources()
        )));
    }
    let huber_q = raw.f64_or("estimator", "huber_q", 0.9)?;
    let mvt_nu_loss = raw.f64_or("estimator", "mvt_nu", 2.1)?;

    let defaults = EstimatorConfig::default();
    let estimator = EstimatorConfig {
        stepsize: raw.f64_or("estimator", "stepsize", defaults.stepsize)?,
        conv_window: raw.usize_or("estimator", "conv_window", defaults.conv_window)?,
        max_iters: raw.usize_or("estimator", "max_iters", defaults.max_iters)?,
        gamma_range: raw.f64_or("estimator", "gamma_range", defaults.gamma_range)?,
        snr_max: raw.f64_or("estimator", "snr_max", defaults.snr_max)?,
        ..defaults
    };

    let output = PathBuf::from(raw.str_opt("sweep", "output").unwrap_or("results.csv"));

    // fail on impossible scenarios before any run starts
    scenario.validate().map_err(CliError::from)?;
    if scenario.n_sources() >= n_sensors {
        return Err(CliError::Config(format!(
            "scenario has {} sources but the array only {} sensors",
            scenario.n_sources(),
            n_sensors
        )));
    }
    for choice in &losses {
        choice
            .to_spec(n_sensors, huber_q, mvt_nu_loss)
            .map_err(CliError::from)?;
    }
    match model {
        DataModel::Mvt { nu_data } if !(nu_data > 0.0) => {
            return Err(CliError::Config(format!(
                "field 'nu' in [data] must be positive, got {nu_data}"
            )));
        }
        DataModel::EpsContaminated { epsilon, lambda } => {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(CliError::Config(format!(
                    "field 'epsilon' in [data] must lie in [0, 1], got {epsilon}"
                )));
            }
            if lambda < 1.0 {
                return Err(CliError::Config(format!(
                    "field 'lambda' in [data] must be at least 1, got {lambda}"
                )));
            }
        }
        _ => {}
    }

    Ok(ExperimentConfig {
        scenario,
        model,
        losses,
        sweep,
        n_sensors,
        n_snapshots,
        grid_size,
        n_runs,
        master_seed,
        n_sources,
        huber_q,
        mvt_nu_loss,
        estimator,
        output,
    })
}

/// Read and parse a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    parse_config(&text)
}
