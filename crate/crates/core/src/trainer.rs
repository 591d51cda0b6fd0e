//! Model variants, genome decoding and GA training on a dataset split.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::{self, GaConfig, GaError, Genome, GenomeLayout, Objective, SegmentKind, TrainingHistory};
use crate::mesh::{MeshError, MeshParams};
use crate::metrics::{MetricError, RegressionReport, RegressionScores, SplitKind};
use crate::molio::{DatasetSplit, LabelScaler, MolError, PropertyKind, Sample};
use crate::network::{
    Activation, Detection, ModelError, OnnModel, OnnParts, Readout, ReadoutOnlyModel,
    RealBaselineModel, Regressor,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Data(#[from] MolError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ComplexIntensity,
    ComplexCoherent,
    RealBaseline,
    ReadoutOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::ComplexIntensity,
        Variant::ComplexCoherent,
        Variant::RealBaseline,
        Variant::ReadoutOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ComplexIntensity => "complex_intensity",
            Variant::ComplexCoherent => "complex_coherent",
            Variant::RealBaseline => "real_baseline",
            Variant::ReadoutOnly => "readout_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| TrainError::Invalid(format!("unknown model variant `{s}`")))
    }
}

/// Architecture choices independent of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub variant: Variant,
    pub n_modes: usize,
    pub hidden_width: usize,
    pub detection: Detection,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            variant: Variant::ComplexIntensity,
            n_modes: 8,
            hidden_width: RealBaselineModel::HIDDEN_WIDTH,
            detection: Detection::Modulus,
        }
    }
}

/// Everything needed to turn a flat genome into a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub n_features: usize,
    pub tasks: Vec<PropertyKind>,
    pub feature_divisor: f64,
    pub scaler: LabelScaler,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        if self.tasks.is_empty() || self.tasks.len() > PropertyKind::ALL.len() {
            return Err(TrainError::Invalid("select between one and three properties".into()));
        }
        if self.n_features == 0 {
            return Err(TrainError::Invalid("feature count must be positive".into()));
        }
        match a.variant {
            Variant::ComplexIntensity | Variant::ComplexCoherent | Variant::ReadoutOnly => {
                if a.n_modes < 2 || self.n_features != 2 * a.n_modes {
                    return Err(TrainError::Invalid(format!(
                        "{} needs {} features for {} modes, got {}",
                        a.variant,
                        2 * a.n_modes,
                        a.n_modes,
                        self.n_features
                    )));
                }
            }
            Variant::RealBaseline => {
                if a.hidden_width == 0 {
                    return Err(TrainError::Invalid("hidden width must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> GenomeLayout {
        let a = &self.arch;
        let m = self.tasks.len();
        match a.variant {
            Variant::ComplexIntensity | Variant::ComplexCoherent => GenomeLayout::optical(a.n_modes, m),
            Variant::RealBaseline => GenomeLayout::real_baseline(self.n_features, a.hidden_width, m),
            Variant::ReadoutOnly => GenomeLayout::readout_only(a.n_modes, m),
        }
    }

    /// Decodes a genome laid out by [`ModelSpec::layout`].
    pub fn materialize(&self, genome: &Genome) -> Result<TrainedModel> {
        if **genome.layout() != self.layout() {
            return Err(GaError::LayoutMismatch.into());
        }
        let seg = |k: SegmentKind| genome.segment(k).expect("segment present in layout");
        let a = &self.arch;
        let m = self.tasks.len();
        let width = match a.variant {
            Variant::RealBaseline => a.hidden_width,
            _ => a.n_modes,
        };
        let readout = Readout::new(
            width,
            seg(SegmentKind::ReadoutWeights).to_vec(),
            seg(SegmentKind::ReadoutBias).to_vec(),
        )?;
        debug_assert_eq!(readout.outputs(), m);
        let model = match a.variant {
            Variant::ComplexIntensity | Variant::ComplexCoherent => {
                let mesh = MeshParams::rectangular(a.n_modes, seg(SegmentKind::Phases), seg(SegmentKind::OutputPhases))?;
                let bias = seg(SegmentKind::BiasRe)
                    .iter()
                    .zip(seg(SegmentKind::BiasIm))
                    .map(|(&re, &im)| Complex64::new(re, im))
                    .collect();
                let activation = if a.variant == Variant::ComplexCoherent {
                    Activation::CoherentModReLU
                } else {
                    Activation::IntensityAbs
                };
                TrainedModel::Onn(OnnModel::new(OnnParts {
                    mesh,
                    input_scale: seg(SegmentKind::InputScale)[0],
                    bias,
                    readout,
                    feature_divisor: self.feature_divisor,
                    scaler: self.scaler.clone(),
                    activation,
                    detection: a.detection,
                    tasks: self.tasks.clone(),
                })?)
            }
            Variant::RealBaseline => TrainedModel::Real(RealBaselineModel::new(
                self.n_features,
                seg(SegmentKind::HiddenWeights).to_vec(),
                seg(SegmentKind::HiddenBias).to_vec(),
                readout,
                self.feature_divisor,
                self.scaler.clone(),
                self.tasks.clone(),
            )?),
            Variant::ReadoutOnly => TrainedModel::ReadoutOnly(ReadoutOnlyModel::new(
                readout,
                self.feature_divisor,
                a.detection,
                self.scaler.clone(),
                self.tasks.clone(),
            )?),
        };
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Onn(OnnModel),
    Real(RealBaselineModel),
    ReadoutOnly(ReadoutOnlyModel),
}

impl TrainedModel {
    fn inner(&self) -> &dyn Regressor {
        match self {
            TrainedModel::Onn(m) => m,
            TrainedModel::Real(m) => m,
            TrainedModel::ReadoutOnly(m) => m,
        }
    }
}

impl Regressor for TrainedModel {
    fn tasks(&self) -> &[PropertyKind] {
        self.inner().tasks()
    }

    fn scaler(&self) -> &LabelScaler {
        self.inner().scaler()
    }

    fn forward_scaled(&self, features: &[f64]) -> Vec<f64> {
        self.inner().forward_scaled(features)
    }
}

/// Raw features with scaled targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn new(samples: &[Sample], tasks: &[PropertyKind], scaler: &LabelScaler) -> Result<Self> {
        let mut features = Vec::with_capacity(samples.len());
        let mut targets = Vec::with_capacity(samples.len());
        for s in samples {
            features.push(s.features.values().to_vec());
            let row = tasks
                .iter()
                .map(|&k| {
                    let y = *s.labels.get(&k).ok_or(MolError::MissingLabel(k))?;
                    Ok(scaler.scale(k, y))
                })
                .collect::<Result<Vec<f64>>>()?;
            targets.push(row);
        }
        if features.is_empty() {
            return Err(TrainError::Invalid("empty training set".into()));
        }
        Ok(Self { features, targets })
    }
}

/// Mean squared error in scaled space, averaged over samples and tasks.
pub fn scaled_mse<R: Regressor + ?Sized>(model: &R, set: &TrainingSet) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, t) in set.features.iter().zip(&set.targets) {
        for (p, y) in model.forward_scaled(x).iter().zip(t) {
            total += (p - y) * (p - y);
            count += 1;
        }
    }
    total / count as f64
}

struct Problem<'a> {
    spec: &'a ModelSpec,
    set: &'a TrainingSet,
}

impl Objective for Problem<'_> {
    fn fitness(&self, genome: &Genome) -> f64 {
        match self.spec.materialize(genome) {
            Ok(model) => scaled_mse(&model, self.set),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Builds the `ModelSpec` for `split`: divisor and scaler come from the training part only.
pub fn spec_for_split(arch: Architecture, tasks: &[PropertyKind], split: &DatasetSplit) -> Result<ModelSpec> {
    let n_features = split.train.first().map_or(0, |s| s.features.len());
    let spec = ModelSpec {
        arch,
        n_features,
        tasks: tasks.to_vec(),
        feature_divisor: split.feature_divisor(),
        scaler: split.scaler.clone(),
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub spec: ModelSpec,
    pub ga: GaConfig,
    pub genome: Genome,
    pub model: TrainedModel,
    pub best_fitness: f64,
    pub history: TrainingHistory,
    pub report: RegressionReport,
}

pub fn train(split: &DatasetSplit, arch: Architecture, tasks: &[PropertyKind], ga: &GaConfig) -> Result<TrainOutcome> {
    let spec = spec_for_split(arch, tasks, split)?;
    let set = TrainingSet::new(&split.train, tasks, &split.scaler)?;
    let run = evolve::run(ga, spec.layout(), &Problem { spec: &spec, set: &set })?;
    let model = spec.materialize(&run.best)?;

    let mut report = RegressionReport::default();
    score_into(&model, &split.train, SplitKind::Train, &mut report)?;
    if !split.test.is_empty() {
        score_into(&model, &split.test, SplitKind::Test, &mut report)?;
    }
    log::info!(
        "{} seed {}: best scaled MSE {:.6e}",
        arch.variant,
        ga.seed,
        run.best_fitness
    );
    Ok(TrainOutcome {
        spec,
        ga: ga.clone(),
        genome: run.best,
        model,
        best_fitness: run.best_fitness,
        history: run.history,
        report,
    })
}

/// Scores `model` on `samples` for every task and adds the rows to `report`.
pub fn score_into<R: Regressor + ?Sized>(
    model: &R,
    samples: &[Sample],
    split: SplitKind,
    report: &mut RegressionReport,
) -> Result<()> {
    let tasks = model.tasks().to_vec();
    let mut pred = vec![Vec::with_capacity(samples.len()); tasks.len()];
    let mut truth = vec![Vec::with_capacity(samples.len()); tasks.len()];
    for s in samples {
        let p = model.predict(s.features.values());
        for (t, k) in tasks.iter().enumerate() {
            pred[t].push(p[k]);
            truth[t].push(*s.labels.get(k).ok_or(MolError::MissingLabel(*k))?);
        }
    }
    let scaler = model.scaler();
    for (t, &k) in tasks.iter().enumerate() {
        let sp: Vec<f64> = pred[t].iter().map(|&y| scaler.scale(k, y)).collect();
        let st: Vec<f64> = truth[t].iter().map(|&y| scaler.scale(k, y)).collect();
        report.insert(k, split, RegressionScores::compute(&pred[t], &truth[t], &sp, &st)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molio::{FeatureVector, Labels};

    fn synthetic(n: usize, k: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let mut f: Vec<f64> = (0..k).map(|j| 10.0 * t / (j + 1) as f64 + 1.0 / (j + 1) as f64).collect();
                f.sort_by(|a, b| b.total_cmp(a));
                let labels = Labels::from([
                    (PropertyKind::Enthalpy, -100.0 * t),
                    (PropertyKind::FreeEnergy, -90.0 * t - 3.0),
                    (PropertyKind::InternalEnergy, -95.0 * t * t),
                ]);
                Sample { id: format!("s{i}"), features: FeatureVector::new(f).unwrap(), labels }
            })
            .collect()
    }

    fn quick_ga(seed: u64) -> GaConfig {
        GaConfig { generations: 8, seed, ..GaConfig::default() }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("quantum".parse::<Variant>().is_err());
    }

    #[test]
    fn layouts_match_parameter_ledger() {
        let split = crate::molio::split_dataset(&synthetic(40, 16), 1, 30, 10).unwrap();
        let all = PropertyKind::ALL.to_vec();
        let spec = spec_for_split(Architecture::default(), &all, &split).unwrap();
        assert_eq!(spec.layout().len(), OnnModel::trainable_parameter_count(8, 3));
        let ro = Architecture { variant: Variant::ReadoutOnly, ..Architecture::default() };
        assert_eq!(spec_for_split(ro, &all, &split).unwrap().layout().len(), 27);

        let bad = Architecture { n_modes: 4, ..Architecture::default() };
        assert!(spec_for_split(bad, &all, &split).is_err());
        assert!(spec_for_split(Architecture::default(), &[], &split).is_err());
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let split = crate::molio::split_dataset(&synthetic(60, 16), 3, 40, 20).unwrap();
        let tasks = [PropertyKind::FreeEnergy];
        for variant in Variant::ALL {
            let arch = Architecture { variant, ..Architecture::default() };
            let a = train(&split, arch, &tasks, &quick_ga(9)).unwrap();
            let b = train(&split, arch, &tasks, &quick_ga(9)).unwrap();
            assert_eq!(a.genome, b.genome, "{variant}");
            let best = a.history.best_per_generation();
            assert!(best.last().unwrap() <= &best[0]);
            assert_eq!(a.best_fitness, *best.last().unwrap());
            let refit = scaled_mse(&a.model, &TrainingSet::new(&split.train, &tasks, &split.scaler).unwrap());
            assert_eq!(refit, a.best_fitness);
            assert!(a.report.get(PropertyKind::FreeEnergy, SplitKind::Test).is_some());
        }
    }

    #[test]
    fn materialize_rejects_foreign_genome() {
        let split = crate::molio::split_dataset(&synthetic(40, 16), 1, 30, 10).unwrap();
        let spec = spec_for_split(Architecture::default(), &[PropertyKind::Enthalpy], &split).unwrap();
        let other = Genome::new(vec![0.0; 9], std::sync::Arc::new(GenomeLayout::readout_only(8, 1))).unwrap();
        assert!(spec.materialize(&other).is_err());
    }
}
