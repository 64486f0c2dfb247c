use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algos::{Algo, EntropyConfig, TrainConfig};
use crate::envs::{EnvConfig, ENV_IDS};
use crate::error::{Error, Result};
use crate::metrics::EvalProtocol;
use crate::nets::{ArchConfig, ArchKind};

/// Environment variables starting with this prefix override config keys.
/// Sections are separated by a double underscore: `DMORL_TRAIN__LR=1e-3`
/// sets `train.lr`.
pub const ENV_PREFIX: &str = "DMORL_";

/// The `[arch]` section. Widths left unset follow the architecture default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub kind: ArchKind,
    pub shared_trunk: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
    pub mlp_depth: usize,
}

impl Default for ArchSection {
    fn default() -> Self {
        let a = ArchConfig::default();
        Self {
            kind: a.kind,
            shared_trunk: a.shared_trunk,
            hidden_dim: None,
            feature_dim: None,
            mlp_depth: a.mlp_depth,
        }
    }
}

impl ArchSection {
    pub fn resolve(&self) -> ArchConfig {
        let base = ArchConfig::new(self.kind, self.shared_trunk);
        ArchConfig {
            hidden_dim: self.hidden_dim.unwrap_or(base.hidden_dim),
            feature_dim: self.feature_dim.unwrap_or(base.feature_dim),
            mlp_depth: self.mlp_depth,
            ..base
        }
    }
}

/// Everything one run needs. Sections mirror the library modules.
///
/// ```toml
/// env = "dst"
/// algo = "moppo"
/// seed = 1
/// out_dir = "runs/dst-1"
///
/// [arch]
/// kind = "multi-body"
/// shared_trunk = true
///
/// [train]
/// total_steps = 100000
///
/// [entropy]
/// schedule = "custom"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    pub algo: Algo,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub arch: ArchSection,
    pub train: TrainConfig,
    pub entropy: EntropyConfig,
    pub eval: EvalProtocol,
    /// Environment parameters (`[envs.dst]`, `[envs.minecart]`).
    pub envs: EnvConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: None,
            algo: Algo::Moppo,
            seed: 0,
            out_dir: PathBuf::from("runs/latest"),
            arch: ArchSection::default(),
            train: TrainConfig::default(),
            entropy: EntropyConfig::default(),
            eval: EvalProtocol::default(),
            envs: EnvConfig::default(),
        }
    }
}

impl RunConfig {
    /// The environment id, which has no default.
    pub fn env_id(&self) -> Result<&str> {
        let id = self
            .env
            .as_deref()
            .ok_or_else(|| Error::Config("missing required key `env` (use --env, `env = ...` or DMORL_ENV)".into()))?;
        if !ENV_IDS.contains(&id) {
            return Err(Error::Config(format!("env: unknown environment `{id}` (expected one of {})", ENV_IDS.join(", "))));
        }
        Ok(id)
    }

    pub fn validate(&self) -> Result<()> {
        self.env_id()?;
        self.arch.resolve().validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Layers of configuration, lowest precedence first.
#[derive(Debug, Default)]
pub struct ConfigSources {
    pub base: Option<toml::Table>,
    pub file: Option<PathBuf>,
    pub vars: Vec<(String, String)>,
    /// `key=value` pairs from the command line, applied last.
    pub sets: Vec<(String, String)>,
}

impl ConfigSources {
    /// Merges base, file, environment and command line, then deserializes.
    /// Every failure names the key at fault.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut table = self.base.clone().unwrap_or_default();
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            let file: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message())))?;
            merge(&mut table, file);
        }
        for (name, raw) in &self.vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                set_key(&mut table, &key, raw).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        for (key, raw) in &self.sets {
            set_key(&mut table, key, raw)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.inner().message().trim().to_string();
            if path == "." {
                Error::Config(msg)
            } else {
                Error::Config(format!("{path}: {msg}"))
            }
        })?;
        Ok(cfg)
    }
}

/// Reads the `config` object of a manifest back as a TOML table.
pub fn table_from_manifest(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = v
        .get("config")
        .cloned()
        .ok_or_else(|| Error::Config(format!("{}: no `config` object", path.display())))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(cfg)
        .map_err(|e| Error::Config(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
    toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("`{s}` is not of the form key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// A raw override is read as a TOML value when it parses as one and as a
/// plain string otherwise, so `seed=3` is a number and `env=dst` a string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        let slot = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        t = match slot {
            toml::Value::Table(inner) => inner,
            _ => return Err(Error::Config(format!("`{key}`: `{p}` is not a section"))),
        };
    }
    let mut v = parse_value(raw);
    // Paths and ids stay strings even when they look like numbers.
    if matches!(key, "out_dir" | "env") {
        v = toml::Value::String(raw.to_string());
    }
    t.insert(parts[parts.len() - 1].to_string(), v);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources(sets: &[&str], vars: &[(&str, &str)]) -> ConfigSources {
        ConfigSources {
            sets: sets.iter().map(|s| parse_assignment(s).unwrap()).collect(),
            vars: vars.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig {
            env: Some("dst".into()),
            ..Default::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flags_beat_environment() {
        let cfg = sources(&["train.lr=0.5", "env=dst"], &[("DMORL_TRAIN__LR", "0.25"), ("DMORL_SEED", "9"), ("HOME", "/x")])
            .resolve()
            .unwrap();
        assert_eq!(cfg.train.lr, 0.5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.env_id().unwrap(), "dst");
    }

    #[test]
    fn integers_fill_float_fields() {
        let cfg = sources(&["train.lr=1", "out_dir=7"], &[]).resolve().unwrap();
        assert_eq!(cfg.train.lr, 1.0);
        assert_eq!(cfg.out_dir, PathBuf::from("7"));
    }

    #[test]
    fn errors_name_the_key() {
        let e = sources(&["train.lr=fast"], &[]).resolve().unwrap_err().to_string();
        assert!(e.contains("train.lr"), "{e}");
        let e = sources(&["train.lrr=1"], &[]).resolve().unwrap_err().to_string();
        assert!(e.contains("lrr"), "{e}");
        let e = sources(&[], &[("DMORL_ARCH__KIND", "mlp")]).resolve().unwrap_err().to_string();
        assert!(e.contains("arch.kind"), "{e}");
        let e = sources(&[], &[]).resolve().unwrap().validate().unwrap_err().to_string();
        assert!(e.contains("env"), "{e}");
        let e = sources(&["env=dst", "train.lr=0"], &[]).resolve().unwrap().validate().unwrap_err().to_string();
        assert!(e.contains("train.lr"), "{e}");
    }

    #[test]
    fn arch_widths_follow_the_kind() {
        let cfg = sources(&["arch.kind=\"hypernet\""], &[]).resolve().unwrap();
        assert_eq!(cfg.arch.resolve().hidden_dim, 64);
        let cfg = sources(&["arch.kind=merge", "arch.hidden_dim=32"], &[]).resolve().unwrap();
        assert_eq!(cfg.arch.resolve().hidden_dim, 32);
        assert_eq!(cfg.arch.resolve().feature_dim, 256);
    }
}
