//! Scenario files.
//!
//! ```text
//! [config]
//! seed = 7
//! mass_threshold = 0.99
//!
//! [session]
//! lambda = 4000
//! train_size = 17
//! packet_size_bytes = 1500
//! rate_min_bps = 0.5e9
//! rate_max_bps = 1.5e9
//! count = 1
//! ```
//!
//! `[config]` is optional. Every `[session]` section adds `count` copies of
//! the session, each with intensity `lambda`. Comments take a whole line.

use std::path::Path;
use std::str::FromStr;

use ini::{Ini, Properties};
use refqueue::{Scenario, SessionSpec};

use crate::CliError;

/// Settings a file may carry. Anything unset falls back to the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub grid_steps: Option<usize>,
    pub k_steps: Option<usize>,
    pub mass_threshold: Option<f64>,
    pub mc_tolerance: Option<f64>,
    pub mc_initial: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub config: FileConfig,
    pub scenario: Scenario<f64>,
}

const CONFIG_KEYS: [&str; 6] = ["grid_steps", "k_steps", "mass_threshold", "mc_tolerance", "mc_initial", "seed"];
const SESSION_KEYS: [&str; 6] = ["lambda", "train_size", "packet_size_bytes", "rate_min_bps", "rate_max_bps", "count"];

pub fn load(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioFile, CliError> {
    let ini = Ini::load_from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let mut config = FileConfig::default();
    let mut seen_config = false;
    let mut sessions = Vec::new();
    for (number, (section, props)) in ini.iter().enumerate() {
        match section {
            None => {
                if let Some((k, _)) = props.iter().next() {
                    return Err(CliError::Parse(format!("key `{k}` outside of any section")));
                }
            }
            Some("config") => {
                if seen_config {
                    return Err(CliError::Parse("more than one [config] section".into()));
                }
                seen_config = true;
                check_keys(props, &CONFIG_KEYS, "config")?;
                let at = "[config]";
                config = FileConfig {
                    grid_steps: optional(props, "grid_steps", at)?,
                    k_steps: optional(props, "k_steps", at)?,
                    mass_threshold: optional(props, "mass_threshold", at)?,
                    mc_tolerance: optional(props, "mc_tolerance", at)?,
                    mc_initial: optional(props, "mc_initial", at)?,
                    seed: seed(props)?,
                };
            }
            Some("session") => {
                check_keys(props, &SESSION_KEYS, "session")?;
                let at = format!("[session] #{number}");
                let lambda: f64 = required(props, "lambda", &at)?;
                let train_size: u32 = required(props, "train_size", &at)?;
                let packet_bytes: u64 = required(props, "packet_size_bytes", &at)?;
                let rate_min: f64 = required(props, "rate_min_bps", &at)?;
                let rate_max: f64 = required(props, "rate_max_bps", &at)?;
                let count: usize = optional(props, "count", &at)?.unwrap_or(1);
                let bits = packet_bytes
                    .checked_mul(8)
                    .ok_or_else(|| CliError::Parse(format!("{at}: packet_size_bytes too large")))?;
                let spec = SessionSpec::new(lambda, train_size, bits, rate_min, rate_max)
                    .map_err(|e| CliError::Parse(format!("{at}: {e}")))?;
                sessions.extend(std::iter::repeat_n(spec, count));
            }
            Some(other) => return Err(CliError::Parse(format!("unknown section [{other}]"))),
        }
    }
    if sessions.is_empty() {
        return Err(CliError::Parse("scenario has no [session] sections".into()));
    }
    let scenario = Scenario::new(sessions).map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(ScenarioFile { config, scenario })
}

fn check_keys(props: &Properties, allowed: &[&str], section: &str) -> Result<(), CliError> {
    let mut seen: Vec<&str> = Vec::new();
    for (k, _) in props.iter() {
        if !allowed.contains(&k) {
            return Err(CliError::Parse(format!("unknown key `{k}` in [{section}]")));
        }
        if seen.contains(&k) {
            return Err(CliError::Parse(format!("duplicate key `{k}` in [{section}]")));
        }
        seen.push(k);
    }
    Ok(())
}

/// Positive number under `key`, if present.
fn optional<V>(props: &Properties, key: &str, at: &str) -> Result<Option<V>, CliError>
where
    V: FromStr + PartialOrd + Default,
{
    let Some(raw) = props.get(key) else { return Ok(None) };
    match raw.trim().parse::<V>() {
        Ok(v) if v > V::default() => Ok(Some(v)),
        _ => Err(CliError::Parse(format!("{at}: `{key}` must be a positive number, got `{raw}`"))),
    }
}

fn required<V>(props: &Properties, key: &str, at: &str) -> Result<V, CliError>
where
    V: FromStr + PartialOrd + Default,
{
    optional(props, key, at)?.ok_or_else(|| CliError::Parse(format!("{at}: missing `{key}`")))
}

/// Seeds may be zero.
fn seed(props: &Properties) -> Result<Option<u64>, CliError> {
    props
        .get("seed")
        .map(|raw| {
            raw.trim()
                .parse()
                .map_err(|_| CliError::Parse(format!("[config]: `seed` must be a non-negative integer, got `{raw}`")))
        })
        .transpose()
}
