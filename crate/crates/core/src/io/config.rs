//! Run configuration files and reproducibility manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PriorConfig;
use crate::sampler::McmcConfig;
use crate::tensor::FactorLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Bammit,
    ArBammit,
    Ammi,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bammit => "bammit",
            ModelKind::ArBammit => "ar-bammit",
            ModelKind::Ammi => "ammi",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub factors: Vec<String>,
    pub response: Option<String>,
    /// Optional held-out test CSV scored after fitting.
    pub test: Option<PathBuf>,
    /// `factor=level1,level2`: rows at these levels are held out as a test set.
    pub split_by: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArConfig {
    pub time_factor: Option<String>,
}

/// Everything `fit` needs; command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub q: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    /// When absent the grand-mean prior is centred on the response.
    pub priors: Option<PriorConfig>,
    pub mcmc: McmcConfig,
    pub ar: ArConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Bammit,
            q: 1,
            seed: None,
            out: None,
            data: DataConfig::default(),
            priors: None,
            mcmc: McmcConfig::default(),
            ar: ArConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks internal consistency and that named factors exist in `layout`.
    pub fn validate(&self, layout: Option<&FactorLayout>) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("Q must be at least 1".into()));
        }
        if self.model == ModelKind::ArBammit && self.ar.time_factor.is_none() {
            return Err(Error::Config("ar-bammit needs a time factor (--ar-time)".into()));
        }
        if let Some(layout) = layout {
            let mut names: Vec<&str> = self.data.factors.iter().map(String::as_str).collect();
            names.extend(self.ar.time_factor.as_deref());
            for n in names {
                if layout.factor_index(n).is_none() {
                    return Err(Error::Config(format!("factor `{n}` is not in the data")));
                }
            }
        }
        Ok(())
    }
}

/// Parses `factor=level1,level2` into its parts.
pub fn parse_split_by(spec: &str) -> Result<(String, Vec<String>)> {
    let (factor, levels) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("split spec `{spec}` is not factor=levels")))?;
    let levels: Vec<String> = levels
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if factor.trim().is_empty() || levels.is_empty() {
        return Err(Error::Config(format!("split spec `{spec}` is not factor=levels")));
    }
    Ok((factor.trim().to_string(), levels))
}

/// One input or output file recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    /// FNV-1a 64 of the contents, hex.
    pub fnv1a64: String,
}

impl FileEntry {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self {
            path: path.display().to_string(),
            bytes: bytes.len() as u64,
            fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
        })
    }
}

/// Stable content fingerprint (not cryptographic).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// What ran, with which settings, on which files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub settings: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, argv: Vec<String>, seed: Option<u64>, settings: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            seed,
            settings,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        crate::viz::write_text(path, &(text + "\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_and_defaults() {
        let c = RunConfig::from_toml_str(
            r#"
            model = "ar-bammit"
            q = 2
            seed = 9
            [data]
            path = "d.csv"
            factors = ["g", "e", "year"]
            response = "yield"
            [mcmc]
            n_iter = 100
            n_burn = 50
            adapt_window = 50
            [ar]
            time_factor = "year"
            "#,
        )
        .unwrap();
        assert_eq!(c.model, ModelKind::ArBammit);
        assert_eq!(c.mcmc.n_chains, 3);
        assert_eq!(c.mcmc.n_iter, 100);
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap(), c);
        assert!(matches!(RunConfig::from_toml_str("modle = 1"), Err(Error::Config(_))));
        let layout = FactorLayout::from_dims(&[2, 2]).unwrap();
        assert!(matches!(c.validate(Some(&layout)), Err(Error::Config(_))));
        let bad = RunConfig { q: 0, ..RunConfig::default() };
        assert!(bad.validate(None).is_err());
    }

    #[test]
    fn split_spec_and_fingerprint() {
        assert_eq!(
            parse_split_by("block=3, 4").unwrap(),
            ("block".to_string(), vec!["3".to_string(), "4".to_string()])
        );
        assert!(parse_split_by("block").is_err());
        assert!(parse_split_by("block=").is_err());
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
