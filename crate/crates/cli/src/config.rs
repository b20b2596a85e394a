//! Config resolution and error-to-exit-code mapping.
//!
//! Every parameter resolves as flag > config-file > default; the winning
//! value is recorded so the manifest can echo the fully-resolved config,
//! defaults included. Config files are flat `key = value` lines, `#`
//! comments allowed; `-` and `_` are interchangeable in keys.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ncvxcs_core::penalty::PenaltyFamily;
use serde_json::{json, Map, Value};

/// Exit code 1 (bad config / usage) vs 2 (numerical failure).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl From<ncvxcs_core::Error> for CliError {
    fn from(e: ncvxcs_core::Error) -> Self {
        use ncvxcs_core::Error::*;
        match e {
            InvalidParameter { .. } | SizeLimit { .. } | LengthMismatch { .. } | Io(_)
            | MalformedFile(_) => CliError::Config(e.to_string()),
            Inadmissible { .. } | NonFiniteIntegrand { .. } | BracketFailure { .. }
            | NoRoot { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn norm(k: &str) -> String {
    k.trim().replace('-', "_")
}

pub struct Resolver {
    file: HashMap<String, String>,
    /// Everything looked up so far, with the values that won.
    pub resolved: Map<String, Value>,
}

impl Resolver {
    pub fn new(path: Option<&Path>) -> CliResult<Self> {
        let mut file = HashMap::new();
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(CliError::Config(format!(
                        "{}:{}: expected key=value",
                        p.display(),
                        ln + 1
                    )));
                };
                file.insert(norm(k), v.trim().to_string());
            }
        }
        Ok(Resolver {
            file,
            resolved: Map::new(),
        })
    }

    fn from_file<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.file.get(&norm(key)) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::Config(format!("config key `{key}` = `{raw}`: {e}"))),
        }
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + Clone + serde::Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.resolved.insert(norm(key), json!(v));
        Ok(v)
    }

    /// Like `opt` but the parameter may stay absent.
    pub fn maybe<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Clone + serde::Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(ref v) = v {
            self.resolved.insert(norm(key), json!(v));
        }
        Ok(v)
    }

    pub fn req<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Clone + serde::Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.ok_or_else(|| {
                CliError::Config(format!(
                    "missing required parameter `{key}` (pass --{} or set it in --config)",
                    key.replace('_', "-")
                ))
            })?,
        };
        self.resolved.insert(norm(key), json!(v));
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Scad,
    Mcp,
    L1,
}

impl FromStr for FamilyArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(FamilyArg::Scad),
            "mcp" => Ok(FamilyArg::Mcp),
            "l1" => Ok(FamilyArg::L1),
            other => Err(format!("unknown family `{other}` (expected scad|mcp|l1)")),
        }
    }
}

impl FamilyArg {
    pub fn to_family(self) -> PenaltyFamily {
        match self {
            FamilyArg::Scad => PenaltyFamily::Scad,
            FamilyArg::Mcp => PenaltyFamily::Mcp,
            FamilyArg::L1 => PenaltyFamily::L1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Json,
}

impl FromStr for FormatArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(FormatArg::Csv),
            "json" => Ok(FormatArg::Json),
            other => Err(format!("unknown format `{other}` (expected csv|json)")),
        }
    }
}

/// "start:end:step" with step > 0, inclusive of both ends (up to float slop).
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::Config(format!("grid `{text}`: {why}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:end:step"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad(&e.to_string()))?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(start.is_finite() && end.is_finite() && step > 0.0 && end >= start) {
        return Err(bad("need start <= end and step > 0"));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

/// Manifest lands next to the output as `<name>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write_manifest(
    command: &str,
    resolved: &Map<String, Value>,
    seed: Option<u64>,
    out_path: &Path,
    wall_time_s: f64,
) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "resolved_config": Value::Object(resolved.clone()),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall_time_s,
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(manifest_path(out_path), text + "\n")
        .map_err(|e| CliError::Config(format!("cannot write manifest: {e}")))
}
