//! Plain-text `key=value` generator configuration files.
//!
//! Blank lines and lines starting with `#` are ignored.

use std::path::Path;
use std::str::FromStr;

use anyhow::Context as _;

use crate::commands::Usage;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub p: Option<f64>,
    pub count: Option<u64>,
    pub seed: Option<u64>,
    pub c_max: Option<u64>,
    pub shard_size: Option<usize>,
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<Option<T>, Usage> {
    raw.parse()
        .map(Some)
        .map_err(|_| Usage(format!("line {line}: bad value {raw:?} for {key}")))
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<FileConfig, Usage> {
        let mut config = FileConfig::default();
        for (i, line) in text.lines().enumerate() {
            let number = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Usage(format!("line {number}: expected key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            match key {
                "n" => config.n = value(key, raw, number)?,
                "m" => config.m = value(key, raw, number)?,
                "p" => config.p = value(key, raw, number)?,
                "count" => config.count = value(key, raw, number)?,
                "seed" => config.seed = value(key, raw, number)?,
                "c_max" => config.c_max = value(key, raw, number)?,
                "shard_size" => config.shard_size = value(key, raw, number)?,
                _ => return Err(Usage(format!("line {number}: unknown key {key:?}"))),
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        FileConfig::parse(&text).map_err(|e| Usage(format!("{}: {}", path.display(), e.0)).into())
    }
}
