//! Run configuration: `key = value` lines, `#` starts a comment.
//!
//! Lists are comma separated. Unknown keys are errors so typos surface early.

use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evolve::GaConfig;
use crate::molio::{PropertyKind, FEATURE_COUNT};
use crate::network::Detection;
use crate::trainer::{Architecture, Variant};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Feature cache written by `featurize`.
    pub features: Option<PathBuf>,
    /// Directory of raw `.xyz` records, featurized on the fly when no cache is given.
    pub xyz_dir: Option<PathBuf>,
    pub eigenvalues: usize,
    pub properties: Vec<PropertyKind>,
    pub arch: Architecture,
    /// Variants trained by `compare`.
    pub variants: Vec<Variant>,
    /// Seeds used by `compare`.
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub ga: GaConfig,
    /// Excluded from the hash: where results go does not change them.
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            features: None,
            xyz_dir: None,
            eigenvalues: FEATURE_COUNT,
            properties: vec![PropertyKind::FreeEnergy],
            arch: Architecture::default(),
            variants: vec![Variant::ComplexIntensity, Variant::RealBaseline],
            seeds: vec![0, 1, 2, 3, 4],
            n_train: 100,
            n_test: 30,
            ga: GaConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

fn list<T>(value: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("`{v}` is not a valid number"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: line_no })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|reason| match reason {
                None => ConfigError::UnknownKey { line: line_no, key: key.into() },
                Some(reason) => ConfigError::BadValue { line: line_no, key: key.into(), reason },
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `Err(None)` for an unknown key.
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), Option<String>> {
        let ga = &mut self.ga;
        match key {
            "features" => self.features = Some(PathBuf::from(v)),
            "xyz_dir" => self.xyz_dir = Some(PathBuf::from(v)),
            "eigenvalues" => self.eigenvalues = num(v)?,
            "properties" => {
                self.properties = list(v, |s| s.parse::<PropertyKind>().map_err(|e| e.to_string()))?
            }
            "variant" => self.arch.variant = v.parse::<Variant>().map_err(|e| e.to_string())?,
            "variants" => self.variants = list(v, |s| s.parse::<Variant>().map_err(|e| e.to_string()))?,
            "seeds" => self.seeds = list(v, num::<u64>)?,
            "seed" => ga.seed = num(v)?,
            "n_modes" => self.arch.n_modes = num(v)?,
            "hidden_width" => self.arch.hidden_width = num(v)?,
            "detection" => {
                self.arch.detection = match v {
                    "modulus" => Detection::Modulus,
                    "power" => Detection::Power,
                    _ => return Err(Some("expected `modulus` or `power`".into())),
                }
            }
            "n_train" => self.n_train = num(v)?,
            "n_test" => self.n_test = num(v)?,
            "population" => ga.population = num(v)?,
            "generations" => ga.generations = num(v)?,
            "elites" => ga.elites = num(v)?,
            "n_crossover" => ga.n_crossover = num(v)?,
            "n_mutation" => ga.n_mutation = num(v)?,
            "tournament_size" => ga.tournament_size = num(v)?,
            "sigma_phase" => ga.sigma.phase = num(v)?,
            "sigma_bias" => ga.sigma.bias = num(v)?,
            "sigma_scale" => ga.sigma.input_scale = num(v)?,
            "sigma_hidden" => ga.sigma.hidden = num(v)?,
            "sigma_readout" => ga.sigma.readout = num(v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(None),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.ga.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.properties.is_empty() || self.properties.len() > 3 {
            return Err(ConfigError::Invalid("select one to three properties".into()));
        }
        let mut sorted = self.properties.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.properties.len() {
            return Err(ConfigError::Invalid("properties must be distinct".into()));
        }
        if self.n_train == 0 {
            return Err(ConfigError::Invalid("n_train must be positive".into()));
        }
        if self.eigenvalues == 0 {
            return Err(ConfigError::Invalid("eigenvalues must be positive".into()));
        }
        if self.variants.is_empty() || self.seeds.is_empty() {
            return Err(ConfigError::Invalid("variants and seeds must not be empty".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; identical configs hash identically.
    pub fn sha256(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let text = "\
# desk-scale run
features = data/features.csv
properties = free_energy, h ,u   # three tasks
variant = real_baseline
seed = 7
generations = 20
n_crossover = 38
n_mutation = 9
sigma_phase = 0.1
detection = power
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.features, Some(PathBuf::from("data/features.csv")));
        assert_eq!(
            cfg.properties,
            vec![PropertyKind::FreeEnergy, PropertyKind::Enthalpy, PropertyKind::InternalEnergy]
        );
        assert_eq!(cfg.arch.variant, Variant::RealBaseline);
        assert_eq!(cfg.arch.detection, Detection::Power);
        assert_eq!((cfg.ga.seed, cfg.ga.generations, cfg.ga.n_crossover, cfg.ga.n_mutation), (7, 20, 38, 9));
        assert_eq!(cfg.ga.sigma.phase, 0.1);
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn reports_errors_with_lines() {
        assert_eq!(RunConfig::parse("\nfoo"), Err(ConfigError::Syntax { line: 2 }));
        assert_eq!(
            RunConfig::parse("colour = red"),
            Err(ConfigError::UnknownKey { line: 1, key: "colour".into() })
        );
        assert!(matches!(RunConfig::parse("seed = -1"), Err(ConfigError::BadValue { line: 1, .. })));
        assert!(matches!(RunConfig::parse("variant = quantum"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(RunConfig::parse("n_crossover = 40"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse("properties = g, g"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::parse("seed = 1").unwrap();
        let b = RunConfig::parse("seed = 1 # same").unwrap();
        let c = RunConfig::parse("seed = 2").unwrap();
        assert_eq!(a.sha256(), b.sha256());
        assert_ne!(a.sha256(), c.sha256());
        assert_eq!(a.sha256().len(), 64);
        let moved = RunConfig::parse("seed = 1\nout = elsewhere").unwrap();
        assert_eq!(a.sha256(), moved.sha256());
    }
}
