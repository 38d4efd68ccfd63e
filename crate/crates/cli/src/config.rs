//! Flat `key = value` run configuration. Values from a file are applied
//! first, then command-line overrides; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use hran_core::model::{FusionMode, ModelConfig};
use hran_core::train::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: Option<PathBuf>,
    pub lr_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            dataset: None,
            lr_dir: None,
            manifest: None,
            out_dir: PathBuf::from("runs/hran"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "preset",
    "scale",
    "channels",
    "rg_count",
    "hrab_per_rg",
    "ca_reduction",
    "fusion",
    "batch",
    "patch",
    "lr0",
    "halve_every",
    "max_iters",
    "seed",
    "checkpoint_every",
    "log_every",
    "dataset",
    "lr_dir",
    "manifest",
    "out_dir",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn preset(name: &str) -> Result<ModelConfig, String> {
    match name {
        "default" => Ok(ModelConfig::default()),
        "tiny" => Ok(ModelConfig::tiny()),
        other => Err(format!("unknown preset `{other}` (expected default or tiny)")),
    }
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            // handled before any other key
            "preset" => {}
            "scale" => m.scale = parse(key, value)?,
            "channels" => m.channels = parse(key, value)?,
            "rg_count" => m.rg_count = parse(key, value)?,
            "hrab_per_rg" => m.hrab_per_rg = parse(key, value)?,
            "ca_reduction" => m.ca_reduction = parse(key, value)?,
            "fusion" => m.fusion = value.parse::<FusionMode>().map_err(|e| e.to_string())?,
            "batch" => t.batch = parse(key, value)?,
            "patch" => t.patch = parse(key, value)?,
            "lr0" => t.lr0 = parse(key, value)?,
            "halve_every" => t.halve_every = parse(key, value)?,
            "max_iters" => t.max_iters = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "log_every" => t.log_every = parse(key, value)?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "lr_dir" => self.lr_dir = Some(PathBuf::from(value)),
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Build from optional file entries and flag overrides, then validate.
    /// A `preset` (flag first, then file) replaces the model defaults before
    /// any other key is applied.
    pub fn build(file: &[(String, String)], overrides: &[(String, String)]) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        let chosen = overrides
            .iter()
            .chain(file)
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.as_str());
        if let Some(name) = chosen {
            cfg.model = preset(name).map_err(CliError::config)?;
        }
        for (k, v) in file.iter().chain(overrides) {
            cfg.set(k, v).map_err(CliError::config)?;
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

/// Parse `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config_text(text: &str, origin: &Path) -> CliResult<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = || format!("{}:{}", origin.display(), n + 1);
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("{}: expected `key = value`", at())))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(CliError::config(format!("{}: unknown key `{k}`", at())));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(CliError::config(format!("{}: duplicate key `{k}`", at())));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    parse_config_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_need_no_keys() {
        let cfg = RunConfig::build(&[], &[]).unwrap();
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn file_then_flags() {
        let file = parse_config_text(
            "# run\npreset = tiny\nchannels = 8\nlr0 = 2e-4 # fast\n\nfusion=hff\n",
            "f".as_ref(),
        )
        .unwrap();
        let cfg = RunConfig::build(&file, &kv(&[("lr0", "0.001"), ("scale", "3")])).unwrap();
        assert_eq!(cfg.model.channels, 8);
        assert_eq!(cfg.model.rg_count, 2);
        assert_eq!(cfg.model.scale, 3);
        assert_eq!(cfg.model.fusion, FusionMode::Hierarchical);
        assert_eq!(cfg.train.lr0, 0.001);
    }

    #[test]
    fn rejects_bad_input() {
        let p: &Path = "c.conf".as_ref();
        assert!(parse_config_text("colour = red", p)
            .unwrap_err()
            .message
            .contains("c.conf:1: unknown key"));
        assert!(parse_config_text("batch 4", p).is_err());
        assert!(parse_config_text("batch = 4\nbatch = 5", p).is_err());
        assert_eq!(RunConfig::build(&kv(&[("batch", "x")]), &[]).unwrap_err().code, 2);
        assert_eq!(RunConfig::build(&kv(&[("scale", "5")]), &[]).unwrap_err().code, 2);
        assert_eq!(
            RunConfig::build(&kv(&[("preset", "huge")]), &[])
                .unwrap_err()
                .code,
            2
        );
    }
}
