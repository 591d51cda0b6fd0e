//! Forward passes of the hybrid optical/digital network and its baselines.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{self, compose_mesh, ComplexMatrix, MeshError, MeshParams};
use crate::molio::{LabelScaler, Labels, PropertyKind};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("forward pass requires {expected:?} activation, model uses {actual:?}")]
    ActivationMismatch { expected: Activation, actual: Activation },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Nonlinearity realized by the detection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Intensity detection, `h = |z|`.
    IntensityAbs,
    /// Coherent detection with ModReLU, readout takes the real part.
    CoherentModReLU,
}

/// Detected quantity under intensity detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    #[default]
    Modulus,
    Power,
}

impl Detection {
    fn detect(self, z: Complex64) -> f64 {
        match self {
            Detection::Modulus => z.norm(),
            Detection::Power => z.norm_sqr(),
        }
    }
}

/// `ReLU(|z| + b) · z/|z|`, zero at `z = 0`.
pub fn modrelu(z: Complex64, b: f64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 || r + b <= 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((r + b) / r)
    }
}

/// Real affine layer `y = R·h + b'`, `R` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    inputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Readout {
    pub fn new(inputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * bias.len() {
            return Err(ModelError::Invalid(format!(
                "readout has {} weights for {}×{}",
                weights.len(),
                bias.len(),
                inputs
            )));
        }
        Ok(Self { inputs, weights, bias })
    }

    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self { inputs, weights: vec![0.0; outputs * inputs], bias: vec![0.0; outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.inputs, "readout input width");
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Anything that maps raw features to scaled predictions per task.
pub trait Regressor {
    fn tasks(&self) -> &[PropertyKind];
    fn scaler(&self) -> &LabelScaler;
    /// Predictions in scaled label space, one per task.
    fn forward_scaled(&self, features: &[f64]) -> Vec<f64>;

    /// Predictions in kcal/mol.
    fn predict(&self, features: &[f64]) -> Labels {
        let scaled = self.forward_scaled(features);
        self.tasks()
            .iter()
            .zip(scaled)
            .map(|(&k, y)| (k, self.scaler().unscale(k, y)))
            .collect()
    }
}

fn check_common(
    tasks: &[PropertyKind],
    scaler: &LabelScaler,
    readout: &Readout,
    feature_divisor: f64,
) -> Result<()> {
    if tasks.is_empty() || tasks.len() != readout.outputs() {
        return Err(ModelError::Invalid(format!(
            "{} tasks but readout has {} outputs",
            tasks.len(),
            readout.outputs()
        )));
    }
    if let Some(k) = tasks.iter().find(|k| scaler.range(**k).is_none()) {
        return Err(ModelError::Invalid(format!("scaler missing {k}")));
    }
    if !(feature_divisor > 0.0 && feature_divisor.is_finite()) {
        return Err(ModelError::Invalid("feature divisor must be positive".into()));
    }
    Ok(())
}

fn normalize(features: &[f64], divisor: f64) -> Vec<f64> {
    features.iter().map(|v| v / divisor).collect()
}

/// Optical layer followed by the digital readout.
#[derive(Debug, Clone, PartialEq)]
pub struct OnnModel {
    mesh: MeshParams,
    weights: ComplexMatrix,
    input_scale: f64,
    bias: Vec<Complex64>,
    readout: Readout,
    feature_divisor: f64,
    scaler: LabelScaler,
    activation: Activation,
    detection: Detection,
    tasks: Vec<PropertyKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnnParts {
    pub mesh: MeshParams,
    pub input_scale: f64,
    pub bias: Vec<Complex64>,
    pub readout: Readout,
    pub feature_divisor: f64,
    pub scaler: LabelScaler,
    pub activation: Activation,
    pub detection: Detection,
    pub tasks: Vec<PropertyKind>,
}

impl OnnModel {
    pub fn new(parts: OnnParts) -> Result<Self> {
        let n = parts.mesh.n_modes();
        check_common(&parts.tasks, &parts.scaler, &parts.readout, parts.feature_divisor)?;
        if parts.tasks.len() > n {
            return Err(ModelError::Invalid(format!("{} tasks exceed {n} modes", parts.tasks.len())));
        }
        if parts.readout.inputs() != n || parts.bias.len() != n {
            return Err(ModelError::Invalid("readout/bias width must equal mode count".into()));
        }
        if !(parts.input_scale > 0.0 && parts.input_scale.is_finite()) {
            return Err(ModelError::Invalid("input scale must be positive".into()));
        }
        Ok(Self {
            weights: compose_mesh(&parts.mesh),
            mesh: parts.mesh,
            input_scale: parts.input_scale,
            bias: parts.bias,
            readout: parts.readout,
            feature_divisor: parts.feature_divisor,
            scaler: parts.scaler,
            activation: parts.activation,
            detection: parts.detection,
            tasks: parts.tasks,
        })
    }

    /// Trainable reals for `n` modes and `m` tasks: phases, output phases,
    /// complex bias, input scale, readout weights and bias.
    pub fn trainable_parameter_count(n: usize, m: usize) -> usize {
        MeshParams::internal_phase_count(n) + n + 2 * n + 1 + m * n + m
    }

    pub fn mesh(&self) -> &MeshParams {
        &self.mesh
    }

    pub fn weights(&self) -> &ComplexMatrix {
        &self.weights
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn bias(&self) -> &[Complex64] {
        &self.bias
    }

    pub fn readout_layer(&self) -> &Readout {
        &self.readout
    }

    pub fn feature_divisor(&self) -> f64 {
        self.feature_divisor
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn detection(&self) -> Detection {
        self.detection
    }

    /// `z = W · c·x + b` for raw features.
    pub fn field(&self, features: &[f64]) -> Vec<Complex64> {
        let x = mesh::encode_features(&normalize(features, self.feature_divisor), self.input_scale)
            .expect("feature count must be even");
        let mut z = self.weights.matvec(&x);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }

    /// Detected intensities `h_j = |z_j|` (or `|z_j|²` under power detection).
    pub fn forward_optical(&self, features: &[f64]) -> Vec<f64> {
        self.field(features).into_iter().map(|z| self.detection.detect(z)).collect()
    }

    /// Coherent detection: ModReLU with per-mode bias `Re(b_j)`, then the real part.
    pub fn forward_coherent(&self, features: &[f64]) -> Result<Vec<f64>> {
        if self.activation != Activation::CoherentModReLU {
            return Err(ModelError::ActivationMismatch {
                expected: Activation::CoherentModReLU,
                actual: self.activation,
            });
        }
        Ok(self
            .field(features)
            .into_iter()
            .zip(&self.bias)
            .map(|(z, b)| modrelu(z, b.re).re)
            .collect())
    }

    /// Hidden representation under the model's own activation.
    pub fn hidden(&self, features: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::IntensityAbs => self.forward_optical(features),
            Activation::CoherentModReLU => {
                self.forward_coherent(features).expect("activation checked")
            }
        }
    }

    pub fn readout(&self, h: &[f64]) -> Vec<f64> {
        self.readout.apply(h)
    }
}

impl Regressor for OnnModel {
    fn tasks(&self) -> &[PropertyKind] {
        &self.tasks
    }

    fn scaler(&self) -> &LabelScaler {
        &self.scaler
    }

    fn forward_scaled(&self, features: &[f64]) -> Vec<f64> {
        self.readout(&self.hidden(features))
    }
}

/// Digital real-valued network with one ReLU hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RealBaselineModel {
    inputs: usize,
    hidden_w: Vec<f64>,
    hidden_b: Vec<f64>,
    readout: Readout,
    feature_divisor: f64,
    scaler: LabelScaler,
    tasks: Vec<PropertyKind>,
}

impl RealBaselineModel {
    pub const HIDDEN_WIDTH: usize = 8;

    pub fn new(
        inputs: usize,
        hidden_w: Vec<f64>,
        hidden_b: Vec<f64>,
        readout: Readout,
        feature_divisor: f64,
        scaler: LabelScaler,
        tasks: Vec<PropertyKind>,
    ) -> Result<Self> {
        check_common(&tasks, &scaler, &readout, feature_divisor)?;
        let width = hidden_b.len();
        if hidden_w.len() != width * inputs || readout.inputs() != width {
            return Err(ModelError::Invalid("hidden layer shape mismatch".into()));
        }
        Ok(Self { inputs, hidden_w, hidden_b, readout, feature_divisor, scaler, tasks })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden_weights(&self) -> &[f64] {
        &self.hidden_w
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_b
    }

    pub fn readout_layer(&self) -> &Readout {
        &self.readout
    }

    pub fn feature_divisor(&self) -> f64 {
        self.feature_divisor
    }

    pub fn forward_baseline(&self, features: &[f64]) -> Vec<f64> {
        assert_eq!(features.len(), self.inputs, "baseline input width");
        let x = normalize(features, self.feature_divisor);
        let h: Vec<f64> = self
            .hidden_w
            .chunks_exact(self.inputs)
            .zip(&self.hidden_b)
            .map(|(row, b)| (row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + b).max(0.0))
            .collect();
        self.readout.apply(&h)
    }
}

impl Regressor for RealBaselineModel {
    fn tasks(&self) -> &[PropertyKind] {
        &self.tasks
    }

    fn scaler(&self) -> &LabelScaler {
        &self.scaler
    }

    fn forward_scaled(&self, features: &[f64]) -> Vec<f64> {
        self.forward_baseline(features)
    }
}

/// The optical layer removed: encoded amplitudes are detected directly and fed
/// to the readout, `y = R·|x| + b'`.
pub fn readout_only_forward(readout: &Readout, normalized: &[f64], detection: Detection) -> Vec<f64> {
    let x = mesh::encode_features(normalized, 1.0).expect("feature count must be even");
    let h: Vec<f64> = x.into_iter().map(|z| detection.detect(z)).collect();
    readout.apply(&h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutOnlyModel {
    readout: Readout,
    feature_divisor: f64,
    detection: Detection,
    scaler: LabelScaler,
    tasks: Vec<PropertyKind>,
}

impl ReadoutOnlyModel {
    pub fn new(
        readout: Readout,
        feature_divisor: f64,
        detection: Detection,
        scaler: LabelScaler,
        tasks: Vec<PropertyKind>,
    ) -> Result<Self> {
        check_common(&tasks, &scaler, &readout, feature_divisor)?;
        Ok(Self { readout, feature_divisor, detection, scaler, tasks })
    }

    pub fn readout_layer(&self) -> &Readout {
        &self.readout
    }

    pub fn feature_divisor(&self) -> f64 {
        self.feature_divisor
    }
}

impl Regressor for ReadoutOnlyModel {
    fn tasks(&self) -> &[PropertyKind] {
        &self.tasks
    }

    fn scaler(&self) -> &LabelScaler {
        &self.scaler
    }

    fn forward_scaled(&self, features: &[f64]) -> Vec<f64> {
        readout_only_forward(&self.readout, &normalize(features, self.feature_divisor), self.detection)
    }
}
