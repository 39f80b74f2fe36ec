//! Run configuration: a small sectioned key-value format.
//!
//! The grammar is line-oriented. A line is blank, a comment (first
//! non-space character `#` or `;`), a section header `[name]`, or an
//! assignment `key = value`. Keys are case-insensitive; values keep
//! their spelling. Lists separate entries with commas. Keys before any
//! header belong to `[run]`, and a key assigned twice keeps the last
//! value. Unknown sections or keys, malformed values and out-of-range
//! parameters are reported with their line number.
//!
//! Documented limits: 1 ≤ N ≤ 65 536 elements, 2 ≤ K ≤ 1024 phases,
//! 1 ≤ T ≤ 10⁸ probes, 1 ≤ trials ≤ 10⁶.

use std::path::PathBuf;

use crate::channel::ScenarioGeometry;
use crate::error::{Error, Result};
use crate::experiments::{AlgorithmId, TRule};

pub const MAX_N: usize = 65_536;
pub const MAX_K: u16 = 1024;
pub const MAX_T: u64 = 100_000_000;
pub const MAX_TRIALS: u32 = 1_000_000;

/// Everything a subcommand needs; the reference scenario fills in
/// whatever the document does not mention.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: ScenarioGeometry,
    pub n: usize,
    pub k: u16,
    pub t: u64,
    pub trials: u32,
    pub algorithms: Vec<AlgorithmId>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Record complex receiver outputs, not only their powers.
    pub complex_mode: bool,
    /// Probe with one fixed pilot symbol instead of random phases.
    pub common_symbol: bool,
    /// Drop receiver noise from every simulated measurement.
    pub noiseless: bool,
    /// Align the two-phase enhancement with the estimated direct path.
    pub ecsm_derotate: bool,
    pub scaling_n_list: Vec<usize>,
    pub scaling_rule: TRule,
    pub scaling_trials: u32,
    pub adversarial_k: u16,
    pub adversarial_beta0: f64,
    pub adversarial_beta: f64,
    pub adversarial_eps_list: Vec<f64>,
    pub checks_trials: u32,
    pub checks_ratio_trials: u32,
    pub checks_noise_trials: u32,
    pub checks_t_list: Vec<u64>,
    pub checks_n_list: Vec<usize>,
    pub checks_k_list: Vec<u16>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: ScenarioGeometry::default(),
            n: 500,
            k: 4,
            t: 500,
            trials: 100,
            algorithms: vec![
                AlgorithmId::Rms,
                AlgorithmId::Csm,
                AlgorithmId::Ecsm,
                AlgorithmId::Cpp,
            ],
            seed: 1,
            output: None,
            complex_mode: false,
            common_symbol: true,
            noiseless: false,
            ecsm_derotate: true,
            scaling_n_list: vec![16, 32, 64, 128],
            scaling_rule: TRule::CsmLaw,
            scaling_trials: 50,
            adversarial_k: 2,
            adversarial_beta0: 1.0,
            adversarial_beta: 1.0,
            adversarial_eps_list: vec![1e-3, 1e-2, 1e-1],
            checks_trials: 100_000,
            checks_ratio_trials: 1000,
            checks_noise_trials: 200,
            checks_t_list: vec![100, 1000, 10_000],
            checks_n_list: vec![16, 64, 256],
            checks_k_list: vec![2, 3, 4],
        }
    }
}

impl RunConfig {
    /// Noise power actually applied to simulated measurements.
    pub fn effective_noise_power(&self) -> f64 {
        if self.noiseless {
            0.0
        } else {
            self.geometry.noise_power_watts()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Scenario,
    Run,
    Modes,
    Scaling,
    Adversarial,
    Checks,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_scalar<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| err(line, format!("malformed value for {key}: '{}'", value.trim())))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = value
        .split(',')
        .map(|item| parse_scalar(line, key, item))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(err(line, format!("{key} must list at least one entry")));
    }
    Ok(items)
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(err(line, format!("malformed value for {key}: '{other}' (expected true or false)"))),
    }
}

fn parse_triple(line: usize, key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = parse_list(line, key, value)?;
    if parts.len() != 3 {
        return Err(err(line, format!("{key} needs exactly three coordinates")));
    }
    if parts.iter().any(|p| !p.is_finite()) {
        return Err(err(line, format!("{key} coordinates must be finite")));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_k(line: usize, key: &str, value: &str) -> Result<u16> {
    let k: u16 = parse_scalar(line, key, value)?;
    if k < 2 {
        return Err(err(line, format!("{key} = {k} violates K ≥ 2")));
    }
    if k > MAX_K {
        return Err(err(line, format!("{key} = {k} exceeds the limit of {MAX_K}")));
    }
    Ok(k)
}

/// Parses a configuration document; an empty document yields the full
/// default scenario.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut section = Section::Run;
    let mut fixed_rule = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return Err(err(line, "unterminated section header"));
            };
            section = match name.trim().to_ascii_lowercase().as_str() {
                "scenario" => Section::Scenario,
                "run" => Section::Run,
                "modes" => Section::Modes,
                "scaling" => Section::Scaling,
                "adversarial" => Section::Adversarial,
                "checks" => Section::Checks,
                other => return Err(err(line, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let Some((raw_key, value)) = trimmed.split_once('=') else {
            return Err(err(line, "expected 'key = value'"));
        };
        let key = raw_key.trim().to_ascii_lowercase();
        let key = key.as_str();
        match section {
            Section::Scenario => match key {
                "tx_pos" => config.geometry.tx_pos = parse_triple(line, key, value)?,
                "irs_pos" => config.geometry.irs_pos = parse_triple(line, key, value)?,
                "rx_pos" => config.geometry.rx_pos = parse_triple(line, key, value)?,
                "tx_power_dbm" => {
                    let p: f64 = parse_scalar(line, key, value)?;
                    if !p.is_finite() {
                        return Err(err(line, "tx_power_dbm must be finite"));
                    }
                    config.geometry.tx_power_dbm = p;
                }
                "noise_power_dbm" => {
                    let p: f64 = parse_scalar(line, key, value)?;
                    if p.is_nan() || p == f64::INFINITY {
                        return Err(err(line, "noise_power_dbm must be finite or -inf"));
                    }
                    config.geometry.noise_power_dbm = p;
                }
                other => return Err(err(line, format!("unknown key '{other}' in [scenario]"))),
            },
            Section::Run => match key {
                "n" => {
                    let n: usize = parse_scalar(line, key, value)?;
                    if !(1..=MAX_N).contains(&n) {
                        return Err(err(line, format!("n must be in 1..={MAX_N}")));
                    }
                    config.n = n;
                }
                "k" => config.k = parse_k(line, key, value)?,
                "t" => {
                    let t: u64 = parse_scalar(line, key, value)?;
                    if !(1..=MAX_T).contains(&t) {
                        return Err(err(line, format!("t must be in 1..={MAX_T}")));
                    }
                    config.t = t;
                }
                "trials" => {
                    let tr: u32 = parse_scalar(line, key, value)?;
                    if !(1..=MAX_TRIALS).contains(&tr) {
                        return Err(err(line, format!("trials must be in 1..={MAX_TRIALS}")));
                    }
                    config.trials = tr;
                }
                "algorithms" => {
                    let algs: Result<Vec<AlgorithmId>> = value
                        .split(',')
                        .map(|item| {
                            item.parse::<AlgorithmId>().map_err(|e| err(line, e.to_string()))
                        })
                        .collect();
                    config.algorithms = algs?;
                    if config.algorithms.is_empty() {
                        return Err(err(line, "algorithms must list at least one entry"));
                    }
                }
                "seed" => config.seed = parse_scalar(line, key, value)?,
                "out" => {
                    let path = value.trim();
                    if path.is_empty() {
                        return Err(err(line, "out must name a directory"));
                    }
                    config.output = Some(PathBuf::from(path));
                }
                other => return Err(err(line, format!("unknown key '{other}' in [run]"))),
            },
            Section::Modes => match key {
                "complex_mode" => config.complex_mode = parse_bool(line, key, value)?,
                "common_symbol" => config.common_symbol = parse_bool(line, key, value)?,
                "noiseless" => config.noiseless = parse_bool(line, key, value)?,
                "ecsm_derotate" => config.ecsm_derotate = parse_bool(line, key, value)?,
                other => return Err(err(line, format!("unknown key '{other}' in [modes]"))),
            },
            Section::Scaling => match key {
                "n_list" => {
                    let ns: Vec<usize> = parse_list(line, key, value)?;
                    if ns.iter().any(|&n| !(1..=MAX_N).contains(&n)) {
                        return Err(err(line, format!("n_list entries must be in 1..={MAX_N}")));
                    }
                    config.scaling_n_list = ns;
                }
                "t_rule" => match value.trim() {
                    "csm-law" => {
                        config.scaling_rule = TRule::CsmLaw;
                        fixed_rule = false;
                    }
                    "rms-law" => {
                        config.scaling_rule = TRule::RmsLaw;
                        fixed_rule = false;
                    }
                    "fixed" => fixed_rule = true,
                    other => {
                        return Err(err(
                            line,
                            format!("unknown t_rule '{other}' (expected csm-law, rms-law or fixed)"),
                        ))
                    }
                },
                "trials" => {
                    let tr: u32 = parse_scalar(line, key, value)?;
                    if !(1..=MAX_TRIALS).contains(&tr) {
                        return Err(err(line, format!("trials must be in 1..={MAX_TRIALS}")));
                    }
                    config.scaling_trials = tr;
                }
                other => return Err(err(line, format!("unknown key '{other}' in [scaling]"))),
            },
            Section::Adversarial => match key {
                "k" => config.adversarial_k = parse_k(line, key, value)?,
                "beta0" => {
                    let b: f64 = parse_scalar(line, key, value)?;
                    if !(b > 0.0) || !b.is_finite() {
                        return Err(err(line, "beta0 must be positive and finite"));
                    }
                    config.adversarial_beta0 = b;
                }
                "beta" => {
                    let b: f64 = parse_scalar(line, key, value)?;
                    if !(b > 0.0) || !b.is_finite() {
                        return Err(err(line, "beta must be positive and finite"));
                    }
                    config.adversarial_beta = b;
                }
                "eps_list" => {
                    let eps: Vec<f64> = parse_list(line, key, value)?;
                    if eps.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
                        return Err(err(line, "eps_list entries must be positive and finite"));
                    }
                    config.adversarial_eps_list = eps;
                }
                other => {
                    return Err(err(line, format!("unknown key '{other}' in [adversarial]")))
                }
            },
            Section::Checks => match key {
                "trials" => {
                    let tr: u32 = parse_scalar(line, key, value)?;
                    if !(1..=MAX_TRIALS).contains(&tr) {
                        return Err(err(line, format!("trials must be in 1..={MAX_TRIALS}")));
                    }
                    config.checks_trials = tr;
                }
                "ratio_trials" => {
                    let tr: u32 = parse_scalar(line, key, value)?;
                    if !(1..=MAX_TRIALS).contains(&tr) {
                        return Err(err(line, format!("ratio_trials must be in 1..={MAX_TRIALS}")));
                    }
                    config.checks_ratio_trials = tr;
                }
                "noise_trials" => {
                    let tr: u32 = parse_scalar(line, key, value)?;
                    if !(1..=MAX_TRIALS).contains(&tr) {
                        return Err(err(line, format!("noise_trials must be in 1..={MAX_TRIALS}")));
                    }
                    config.checks_noise_trials = tr;
                }
                "t_list" => {
                    let ts: Vec<u64> = parse_list(line, key, value)?;
                    if ts.iter().any(|&t| !(1..=MAX_T).contains(&t)) {
                        return Err(err(line, format!("t_list entries must be in 1..={MAX_T}")));
                    }
                    config.checks_t_list = ts;
                }
                "n_list" => {
                    let ns: Vec<usize> = parse_list(line, key, value)?;
                    if ns.iter().any(|&n| !(1..=MAX_N).contains(&n)) {
                        return Err(err(line, format!("n_list entries must be in 1..={MAX_N}")));
                    }
                    config.checks_n_list = ns;
                }
                "k_list" => {
                    let ks: Result<Vec<u16>> = value
                        .split(',')
                        .map(|item| parse_k(line, "k_list", item))
                        .collect();
                    config.checks_k_list = ks?;
                }
                other => return Err(err(line, format!("unknown key '{other}' in [checks]"))),
            },
        }
    }
    if fixed_rule {
        config.scaling_rule = TRule::Fixed(config.t);
    }
    config.geometry.validate()?;
    Ok(config)
}
