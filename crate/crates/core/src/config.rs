//! Flat `key = value` run configuration.
//!
//! ```text
//! # spots run
//! preset = spots
//! search = 19
//! patch = 13
//! seed = 7
//! input = noisy.pgm
//! ```
//!
//! Blank lines and `#` comments are ignored. `preset` (if present) is applied
//! first, then every other key in file order. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::FilterConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub filter: FilterConfig,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub clean: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                let (key, value) = content.split_once('=').ok_or_else(|| {
                    Error::parse(offset, format!("expected key = value, got '{content}'"))
                })?;
                entries.push((offset, key.trim().to_string(), value.trim().to_string()));
            }
            offset += line.len();
        }

        let mut cfg = RunConfig::default();
        if let Some((at, _, name)) = entries.iter().find(|(_, k, _)| k == "preset") {
            cfg.filter = FilterConfig::preset_by_name(name)
                .ok_or_else(|| Error::parse(*at, format!("unknown preset '{name}'")))?;
        }
        for (at, key, value) in &entries {
            cfg.set(key, value).map_err(|e| match e {
                Error::InvalidArgument(msg) => Error::parse(*at, msg),
                other => other,
            })?;
        }
        cfg.filter.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Set one key; also used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = &mut self.filter;
        match key {
            "preset" => {}
            "search" => f.search_width = num(key, value)?,
            "patch" => f.patch_width = num(key, value)?,
            "d" => f.d = num(key, value)?,
            "delta" => f.delta = num(key, value)?,
            "mu" => f.mu = num(key, value)?,
            "hg" | "h_g" | "sigma_h" => f.h_g = num(key, value)?,
            "kernel" => f.kernel = value.parse()?,
            "variant" => f.variant = value.parse()?,
            "seed" => self.seed = Some(num(key, value)?),
            "threads" => self.threads = Some(num(key, value)?),
            "input" => self.input = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "clean" => self.clean = Some(PathBuf::from(value)),
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("invalid value '{value}' for '{key}'")))
}
