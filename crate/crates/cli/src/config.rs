//! Input resolution. Precedence: command-line flags and `--set` overrides,
//! then the scenario file, then the built-in Table 2 stack and default
//! variation settings.

use std::path::{Path, PathBuf};

use gtherm::kv::KvFile;
use gtherm::{ChipStack, VariationConfig};

use crate::error::{At, CliError};

const STACK_KEYS: &[&str] = &["die_edge", "n", "ambient", "sink_resistance", "layer"];
const VARIATION_KEYS: &[&str] = &[
    "sigma_sys", "sigma_rand", "corr_range", "seed", "beta", "beta_L", "beta_tox", "L_nominal",
    "tox_nominal", "leak_nominal", "dopant_spread", "k_cap", "eta", "k_seed",
];
const SCENARIO_KEYS: &[&str] = &[
    "stack", "variation", "power", "trace", "greens", "out", "mode", "dt", "window", "times",
    "runs", "seeds", "suite",
];

/// Scenario file with relative paths resolved against its directory.
#[derive(Debug, Default)]
pub struct Scenario {
    kv: KvFile,
    dir: PathBuf,
}

impl Scenario {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let kv = KvFile::read(path).at("scenario")?;
        if let Some((k, _)) = kv.entries.iter().find(|(k, _)| !SCENARIO_KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown scenario key '{k}' in {}", path.display())));
        }
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { kv, dir })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.kv.get(key)
    }

    /// Flag value if given, else the scenario's (resolved) path.
    pub fn path(&self, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.kv.get(key).map(|p| self.dir.join(p)))
    }

    pub fn require_path(&self, flag: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.path(flag, key)
            .ok_or_else(|| CliError::Config(format!("missing --{key} (flag or scenario file)")))
    }

    pub fn value<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.kv.parse_opt(key).at("scenario")
    }

    /// Errors if the scenario names a different mode than the subcommand.
    pub fn check_mode(&self, mode: &str) -> Result<(), CliError> {
        match self.kv.get("mode") {
            Some(m) if m != mode => {
                Err(CliError::Config(format!("scenario mode '{m}' does not match subcommand '{mode}'")))
            }
            _ => Ok(()),
        }
    }
}

fn split_override(s: &str) -> Result<(&str, &str), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| CliError::Config(format!("override '{s}' is not key=value")))
}

pub fn check_overrides(overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (k, _) = split_override(o)?;
        if !STACK_KEYS.contains(&k) && !VARIATION_KEYS.contains(&k) {
            return Err(CliError::Config(format!("unknown override key '{k}'")));
        }
    }
    Ok(())
}

fn apply(kv: &mut KvFile, keys: &[&str], overrides: &[String]) -> Result<(), CliError> {
    let mut layers_replaced = false;
    for o in overrides {
        let (k, v) = split_override(o)?;
        if !keys.contains(&k) {
            continue;
        }
        // a `layer` override replaces the file's layer list, not appends to it
        if k == "layer" && !layers_replaced {
            kv.entries.retain(|(key, _)| key != "layer");
            layers_replaced = true;
        }
        kv.set(k, v);
    }
    Ok(())
}

pub fn load_stack(path: Option<&Path>, overrides: &[String]) -> Result<ChipStack, CliError> {
    check_overrides(overrides)?;
    let mut kv = match path {
        Some(p) => KvFile::read(p).at("stack")?,
        None => KvFile { name: "defaults".into(), ..Default::default() },
    };
    apply(&mut kv, STACK_KEYS, overrides)?;
    ChipStack::from_kv(&kv).at("stack")
}

pub fn load_variation(path: Option<&Path>, overrides: &[String]) -> Result<VariationConfig, CliError> {
    check_overrides(overrides)?;
    let mut kv = match path {
        Some(p) => KvFile::read(p).at("variation")?,
        None => KvFile { name: "defaults".into(), ..Default::default() },
    };
    apply(&mut kv, VARIATION_KEYS, overrides)?;
    VariationConfig::from_kv(&kv).at("variation")
}
