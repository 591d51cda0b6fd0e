//! Versioned JSON model files.
//!
//! Every float is stored as a shortest round-trip decimal string, so a saved
//! model reloads bit-for-bit. The file records the genome layout, the mesh
//! ordering and the feature packing; a loader rejects anything it cannot
//! reproduce exactly.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::{Genome, Segment};
use crate::molio::{LabelScaler, PropertyKind, Range};
use crate::trainer::{Architecture, ModelSpec, TrainError, TrainOutcome, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;
pub const MESH_ORDER: &str = "rectangular";
pub const FEATURE_PACKING: &str = "consecutive_pairs";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access model file")]
    Io(#[from] std::io::Error),
    #[error("malformed model file")]
    Json(#[from] serde_json::Error),
    #[error("model file version {found} is not supported (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] TrainError),
}

pub type Result<T> = std::result::Result<T, ModelFileError>;

/// How the model was produced. Only deterministic inputs are recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub generations: usize,
    pub config_sha256: String,
    pub train_fitness: String,
    pub package_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StoredRange {
    min: String,
    max: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture: Architecture,
    pub n_features: usize,
    pub tasks: Vec<PropertyKind>,
    pub mesh_order: String,
    pub feature_packing: String,
    pub layout: Vec<Segment>,
    pub parameters: Vec<String>,
    pub feature_divisor: String,
    scaler: BTreeMap<PropertyKind, StoredRange>,
    pub provenance: Provenance,
}

fn enc(v: f64) -> String {
    format!("{v:e}")
}

fn dec(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| ModelFileError::Corrupt(format!("bad number `{s}`")))
}

impl ModelFile {
    pub fn new(spec: &ModelSpec, genome: &Genome, provenance: Provenance) -> Self {
        let scaler = spec
            .tasks
            .iter()
            .map(|&k| {
                let r = spec.scaler.range(k).expect("spec validated against scaler");
                (k, StoredRange { min: enc(r.min), max: enc(r.max) })
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            architecture: spec.arch,
            n_features: spec.n_features,
            tasks: spec.tasks.clone(),
            mesh_order: MESH_ORDER.into(),
            feature_packing: FEATURE_PACKING.into(),
            layout: genome.layout().segments().to_vec(),
            parameters: genome.values().iter().map(|&v| enc(v)).collect(),
            feature_divisor: enc(spec.feature_divisor),
            scaler,
            provenance,
        }
    }

    pub fn from_outcome(outcome: &TrainOutcome, provenance: Provenance) -> Self {
        Self::new(&outcome.spec, &outcome.genome, provenance)
    }

    /// Rebuilds the `ModelSpec` and genome, checking the stored layout against the architecture.
    pub fn decode(&self) -> Result<(ModelSpec, Genome)> {
        if self.format_version != FORMAT_VERSION {
            return Err(ModelFileError::UnsupportedVersion { found: self.format_version });
        }
        if self.mesh_order != MESH_ORDER || self.feature_packing != FEATURE_PACKING {
            return Err(ModelFileError::Corrupt(format!(
                "unsupported mesh order `{}` or feature packing `{}`",
                self.mesh_order, self.feature_packing
            )));
        }
        let mut ranges = BTreeMap::new();
        for (k, r) in &self.scaler {
            ranges.insert(*k, Range { min: dec(&r.min)?, max: dec(&r.max)? });
        }
        let scaler = LabelScaler::from_ranges(ranges)
            .map_err(|e| ModelFileError::Corrupt(e.to_string()))?;
        let spec = ModelSpec {
            arch: self.architecture,
            n_features: self.n_features,
            tasks: self.tasks.clone(),
            feature_divisor: dec(&self.feature_divisor)?,
            scaler,
        };
        spec.validate()?;
        let layout = spec.layout();
        if layout.segments() != self.layout.as_slice() {
            return Err(ModelFileError::Corrupt("layout does not match architecture".into()));
        }
        let values = self.parameters.iter().map(|s| dec(s)).collect::<Result<Vec<f64>>>()?;
        let genome = Genome::new(values, Arc::new(layout))
            .map_err(|e| ModelFileError::Corrupt(e.to_string()))?;
        if genome.values().iter().zip(&self.parameters).any(|(v, s)| enc(*v) != *s) {
            return Err(ModelFileError::Corrupt("parameters are not canonical".into()));
        }
        Ok((spec, genome))
    }

    pub fn model(&self) -> Result<TrainedModel> {
        let (spec, genome) = self.decode()?;
        Ok(spec.materialize(&genome)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => Ok(serde_json::from_value(value)?),
            Some(v) => Err(ModelFileError::UnsupportedVersion { found: v as u32 }),
            None => Err(ModelFileError::Corrupt("missing format_version".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::GaConfig;
    use crate::molio::{split_dataset, FeatureVector, Labels, Sample};
    use crate::network::Regressor;
    use crate::trainer::{train, Variant};

    fn samples() -> Vec<Sample> {
        (0..40)
            .map(|i| {
                let t = i as f64 / 40.0;
                let mut f: Vec<f64> = (0..16).map(|j| (t + 0.1) * (16 - j) as f64 + 0.37 * t * t).collect();
                f.sort_by(|a, b| b.total_cmp(a));
                let labels = Labels::from([
                    (PropertyKind::Enthalpy, -1000.0 * t - 12.0),
                    (PropertyKind::FreeEnergy, -990.0 * t),
                    (PropertyKind::InternalEnergy, -1001.0 * t + t * t),
                ]);
                Sample { id: format!("m{i}"), features: FeatureVector::new(f).unwrap(), labels }
            })
            .collect()
    }

    fn provenance() -> Provenance {
        Provenance {
            seed: 1,
            split_seed: 1,
            n_train: 30,
            n_test: 10,
            generations: 3,
            config_sha256: String::new(),
            train_fitness: "0".into(),
            package_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let split = split_dataset(&samples(), 1, 30, 10).unwrap();
        let ga = GaConfig { generations: 3, seed: 1, ..GaConfig::default() };
        for variant in Variant::ALL {
            let arch = Architecture { variant, ..Architecture::default() };
            let out = train(&split, arch, &PropertyKind::ALL, &ga).unwrap();
            let file = ModelFile::from_outcome(&out, provenance());
            let text = file.to_json();
            let back = ModelFile::from_json(&text).unwrap();
            assert_eq!(back, file);
            let (spec, genome) = back.decode().unwrap();
            assert_eq!(spec, out.spec);
            assert_eq!(genome.values(), out.genome.values());
            let model = back.model().unwrap();
            for s in &split.test {
                assert_eq!(model.forward_scaled(s.features.values()), out.model.forward_scaled(s.features.values()));
            }
            assert_eq!(ModelFile::from_json(&text).unwrap().to_json(), text);
        }
    }

    #[test]
    fn rejects_bad_files() {
        let split = split_dataset(&samples(), 2, 30, 10).unwrap();
        let ga = GaConfig { generations: 1, seed: 2, ..GaConfig::default() };
        let out = train(&split, Architecture::default(), &[PropertyKind::FreeEnergy], &ga).unwrap();
        let file = ModelFile::from_outcome(&out, provenance());

        let mut v: serde_json::Value = serde_json::from_str(&file.to_json()).unwrap();
        v["format_version"] = 99.into();
        assert!(matches!(
            ModelFile::from_json(&v.to_string()),
            Err(ModelFileError::UnsupportedVersion { found: 99 })
        ));

        let mut short = file.clone();
        short.parameters.pop();
        assert!(matches!(short.decode(), Err(ModelFileError::Corrupt(_))));

        let mut garbled = file.clone();
        garbled.parameters[0] = "pi".into();
        assert!(matches!(garbled.decode(), Err(ModelFileError::Corrupt(_))));

        let mut order = file;
        order.mesh_order = "triangular".into();
        assert!(order.decode().is_err());
        assert!(ModelFile::from_json("{}").is_err());
    }
}
