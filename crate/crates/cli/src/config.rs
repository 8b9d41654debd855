//! Flat `key = value` run configuration with `[section]` headers. Every
//! field has a default mirroring the reference hyperparameters, so an
//! empty (or absent) file is a valid configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use obfnet::eval::EvalMode;
use obfnet::obfuscator::TrainHyper;
use obfnet::privatize::PrivacyParams;
use obfnet::tradeoff::AdversaryKind;

use crate::CliError;

/// Raw parsed file: `section.key` -> value, with consumption tracking so
/// typos surface as errors instead of silently using defaults.
struct ConfigFile {
    map: BTreeMap<String, String>,
    used: std::cell::RefCell<Vec<String>>,
}

impl ConfigFile {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("config line {}: expected key = value", idx + 1))
            })?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            if map.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::config(format!("duplicate config key {full:?}")));
            }
        }
        Ok(ConfigFile {
            map,
            used: std::cell::RefCell::new(Vec::new()),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key).map(String::as_str)
    }

    fn unknown_keys(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.map
            .keys()
            .filter(|k| !used.iter().any(|u| u == *k))
            .cloned()
            .collect()
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::config(format!("config key {key}: cannot parse {value:?}")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(CliError::config(format!(
            "config key {key}: expected on/off, found {other:?}"
        ))),
    }
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let grid: Vec<f64> = value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect::<Result<_, _>>()?;
    if grid.is_empty() {
        return Err(CliError::config(format!("config key {key}: empty grid")));
    }
    Ok(grid)
}

/// Train/test and provider/adversary split settings.
#[derive(Debug, Clone)]
pub struct DataConfig {
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Fraction of the training split kept by the data provider; the
    /// remainder is the adversaries' "similar" dataset.
    pub provider_fraction: f64,
    pub provider_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_fraction: 0.8,
            split_seed: 1,
            provider_fraction: 0.5,
            provider_seed: 2,
        }
    }
}

/// Sweep grids and scoring settings. The default protocol is the
/// pessimistic one: the adversary retrains on obfuscated data and the
/// released (obfuscated) records are what both probes are scored on.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub k_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub adversary: AdversaryKind,
    pub eval_mode: EvalMode,
    pub baseline: bool,
    /// Input-noise variances for the Gaussian baseline curve.
    pub baseline_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k_grid: vec![0.0, 5.0, 10.0, 15.0, 20.0, 40.0, 60.0, 100.0, 200.0],
            lambda_grid: vec![-3000.0],
            adversary: AdversaryKind::Strong,
            eval_mode: EvalMode::ObfuscatedTest,
            baseline: true,
            baseline_grid: vec![0.0, 0.0025, 0.01, 0.04, 0.09, 0.25, 1.0],
        }
    }
}

/// Everything a run needs beyond file paths given on the command line.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainHyper,
    pub probe: TrainHyper,
    pub privacy: PrivacyParams,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            train: TrainHyper {
                seed: 7,
                ..TrainHyper::default()
            },
            probe: TrainHyper {
                epochs: 15,
                patience: 3,
                seed: 11,
                ..TrainHyper::default()
            },
            privacy: PrivacyParams::reference(),
            sweep: SweepConfig::default(),
        }
    }
}

fn apply_hyper(file: &ConfigFile, section: &str, hyper: &mut TrainHyper) -> Result<(), CliError> {
    let key = |name: &str| format!("{section}.{name}");
    if let Some(v) = file.get(&key("learning_rate")) {
        hyper.learning_rate = parse_value(&key("learning_rate"), v)?;
    }
    if let Some(v) = file.get(&key("epochs")) {
        hyper.epochs = parse_value(&key("epochs"), v)?;
    }
    if let Some(v) = file.get(&key("batch_size")) {
        hyper.batch_size = parse_value(&key("batch_size"), v)?;
    }
    if let Some(v) = file.get(&key("patience")) {
        hyper.patience = parse_value(&key("patience"), v)?;
    }
    if let Some(v) = file.get(&key("val_fraction")) {
        hyper.val_fraction = parse_value(&key("val_fraction"), v)?;
    }
    if let Some(v) = file.get(&key("seed")) {
        hyper.seed = parse_value(&key("seed"), v)?;
    }
    Ok(())
}

impl RunConfig {
    /// Defaults overlaid with the file at `path`, when given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = RunConfig::default();
        let Some(path) = path else {
            return Ok(config);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let file = ConfigFile::parse(&text)?;

        if let Some(v) = file.get("data.train_fraction") {
            config.data.train_fraction = parse_value("data.train_fraction", v)?;
        }
        if let Some(v) = file.get("data.split_seed") {
            config.data.split_seed = parse_value("data.split_seed", v)?;
        }
        if let Some(v) = file.get("data.provider_fraction") {
            config.data.provider_fraction = parse_value("data.provider_fraction", v)?;
        }
        if let Some(v) = file.get("data.provider_seed") {
            config.data.provider_seed = parse_value("data.provider_seed", v)?;
        }

        apply_hyper(&file, "train", &mut config.train)?;
        apply_hyper(&file, "probe", &mut config.probe)?;

        if let Some(v) = file.get("privacy.k") {
            config.privacy.k = parse_value("privacy.k", v)?;
        }
        if let Some(v) = file.get("privacy.lambda") {
            config.privacy.lambda = parse_value("privacy.lambda", v)?;
        }
        if let Some(v) = file.get("privacy.g") {
            config.privacy.g_enabled = parse_switch("privacy.g", v)?;
        }
        if let Some(v) = file.get("privacy.f") {
            config.privacy.f_enabled = parse_switch("privacy.f", v)?;
        }
        if let Some(v) = file.get("privacy.noise_seed") {
            config.privacy.noise_seed = parse_value("privacy.noise_seed", v)?;
        }

        if let Some(v) = file.get("sweep.k_grid") {
            config.sweep.k_grid = parse_grid("sweep.k_grid", v)?;
        }
        if let Some(v) = file.get("sweep.lambda_grid") {
            config.sweep.lambda_grid = parse_grid("sweep.lambda_grid", v)?;
        }
        if let Some(v) = file.get("sweep.adversary") {
            config.sweep.adversary = match v {
                "weak" => AdversaryKind::Weak,
                "strong" => AdversaryKind::Strong,
                other => {
                    return Err(CliError::config(format!(
                        "sweep.adversary: expected weak or strong, found {other:?}"
                    )))
                }
            };
        }
        if let Some(v) = file.get("sweep.eval_mode") {
            config.sweep.eval_mode = parse_eval_mode(v)?;
        }
        if let Some(v) = file.get("sweep.baseline") {
            config.sweep.baseline = parse_switch("sweep.baseline", v)?;
        }
        if let Some(v) = file.get("sweep.baseline_grid") {
            config.sweep.baseline_grid = parse_grid("sweep.baseline_grid", v)?;
        }

        let unknown = file.unknown_keys();
        if !unknown.is_empty() {
            return Err(CliError::config(format!(
                "unknown config keys: {}",
                unknown.join(", ")
            )));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (name, fraction) in [
            ("data.train_fraction", self.data.train_fraction),
            ("data.provider_fraction", self.data.provider_fraction),
        ] {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(CliError::config(format!("{name} {fraction} outside (0,1)")));
            }
        }
        self.privacy
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }

    /// The effective configuration, in the file's own syntax.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "[data]").unwrap();
        writeln!(out, "train_fraction = {}", self.data.train_fraction).unwrap();
        writeln!(out, "split_seed = {}", self.data.split_seed).unwrap();
        writeln!(out, "provider_fraction = {}", self.data.provider_fraction).unwrap();
        writeln!(out, "provider_seed = {}", self.data.provider_seed).unwrap();
        for (name, hyper) in [("train", &self.train), ("probe", &self.probe)] {
            writeln!(out, "\n[{name}]").unwrap();
            writeln!(out, "learning_rate = {}", hyper.learning_rate).unwrap();
            writeln!(out, "epochs = {}", hyper.epochs).unwrap();
            writeln!(out, "batch_size = {}", hyper.batch_size).unwrap();
            writeln!(out, "patience = {}", hyper.patience).unwrap();
            writeln!(out, "val_fraction = {}", hyper.val_fraction).unwrap();
            writeln!(out, "seed = {}", hyper.seed).unwrap();
        }
        writeln!(out, "\n[privacy]").unwrap();
        writeln!(out, "k = {}", self.privacy.k).unwrap();
        writeln!(out, "lambda = {}", self.privacy.lambda).unwrap();
        writeln!(out, "g = {}", if self.privacy.g_enabled { "on" } else { "off" }).unwrap();
        writeln!(out, "f = {}", if self.privacy.f_enabled { "on" } else { "off" }).unwrap();
        writeln!(out, "noise_seed = {}", self.privacy.noise_seed).unwrap();
        writeln!(out, "\n[sweep]").unwrap();
        writeln!(out, "k_grid = {}", render_grid(&self.sweep.k_grid)).unwrap();
        writeln!(out, "lambda_grid = {}", render_grid(&self.sweep.lambda_grid)).unwrap();
        writeln!(out, "adversary = {}", self.sweep.adversary.as_str()).unwrap();
        writeln!(out, "eval_mode = {}", self.sweep.eval_mode.as_str()).unwrap();
        writeln!(out, "baseline = {}", if self.sweep.baseline { "on" } else { "off" }).unwrap();
        writeln!(out, "baseline_grid = {}", render_grid(&self.sweep.baseline_grid)).unwrap();
        out
    }
}

fn render_grid(grid: &[f64]) -> String {
    grid.iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_eval_mode(value: &str) -> Result<EvalMode, CliError> {
    match value {
        "original_test" => Ok(EvalMode::OriginalTest),
        "obfuscated_test" => Ok(EvalMode::ObfuscatedTest),
        other => Err(CliError::config(format!(
            "eval mode: expected original_test or obfuscated_test, found {other:?}"
        ))),
    }
}
