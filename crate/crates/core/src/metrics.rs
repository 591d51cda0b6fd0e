//! Regression metrics and the optical-vs-digital resource estimate.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molio::PropertyKind;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("prediction and truth lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least two points required")]
    TooFewPoints,
    #[error("truth values are all equal")]
    DegenerateTruth,
    #[error("predictions have zero variance")]
    DegeneratePrediction,
    #[error("resource inputs must be positive: {0}")]
    NonPositiveInput(&'static str),
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    mse(pred, truth).map(f64::sqrt)
}

/// Coefficient of determination; negative when worse than the truth mean.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    if pred.len() < 2 {
        return Err(MetricError::TooFewPoints);
    }
    let mu = mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - mu) * (t - mu)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::DegenerateTruth);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// OLS slope of truth regressed on prediction (1 for perfect learning).
pub fn bestfit_gradient(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    if pred.len() < 2 {
        return Err(MetricError::TooFewPoints);
    }
    let (mp, mt) = (mean(pred), mean(truth));
    let sxx: f64 = pred.iter().map(|p| (p - mp) * (p - mp)).sum();
    if sxx == 0.0 {
        return Err(MetricError::DegeneratePrediction);
    }
    let sxy: f64 = pred.iter().zip(truth).map(|(p, t)| (p - mp) * (t - mt)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionScores {
    /// kcal/mol.
    pub mae: f64,
    /// kcal/mol.
    pub rmse: f64,
    pub r2: f64,
    pub bestfit_gradient: f64,
    /// MSE in scaled label space, comparable to training fitness.
    pub scaled_mse: f64,
}

impl RegressionScores {
    /// Scores unscaled predictions; `scaled_*` feed the scaled-space MSE.
    /// Degenerate R² or gradient cases report NaN rather than failing the whole report.
    pub fn compute(
        pred: &[f64],
        truth: &[f64],
        scaled_pred: &[f64],
        scaled_truth: &[f64],
    ) -> Result<Self> {
        Ok(Self {
            mae: mae(pred, truth)?,
            rmse: rmse(pred, truth)?,
            r2: r2(pred, truth).unwrap_or(f64::NAN),
            bestfit_gradient: bestfit_gradient(pred, truth).unwrap_or(f64::NAN),
            scaled_mse: mse(scaled_pred, scaled_truth)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    Test,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressionReport {
    pub scores: BTreeMap<(PropertyKind, SplitKind), RegressionScores>,
}

impl RegressionReport {
    pub fn insert(&mut self, kind: PropertyKind, split: SplitKind, scores: RegressionScores) {
        self.scores.insert((kind, split), scores);
    }

    pub fn get(&self, kind: PropertyKind, split: SplitKind) -> Option<&RegressionScores> {
        self.scores.get(&(kind, split))
    }

    /// Flat rows, one per property and split.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .scores
            .iter()
            .map(|((p, split), s)| serde_json::json!({ "property": p, "split": split, "scores": s }))
            .collect();
        serde_json::Value::Array(rows)
    }

    pub fn properties(&self) -> Vec<PropertyKind> {
        let mut v: Vec<PropertyKind> = self.scores.keys().map(|(k, _)| *k).collect();
        v.dedup();
        v
    }

    /// Table-shaped CSV: one row per metric and split, one column per property.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let props = self.properties();
        let mut header = vec!["metric".to_string()];
        header.extend(props.iter().map(|p| p.as_str().to_string()));
        writeln!(out, "{}", header.join(","))?;
        type Getter = fn(&RegressionScores) -> f64;
        let metrics: [(&str, Getter); 5] = [
            ("mae", |s| s.mae),
            ("r2", |s| s.r2),
            ("rmse", |s| s.rmse),
            ("gradient", |s| s.bestfit_gradient),
            ("scaled_mse", |s| s.scaled_mse),
        ];
        for split in [SplitKind::Train, SplitKind::Test] {
            for (name, get) in metrics {
                if props.iter().all(|p| self.get(*p, split).is_none()) {
                    continue;
                }
                let mut row = vec![format!("{}_{}", split.as_str(), name)];
                for p in &props {
                    row.push(self.get(*p, split).map_or_else(String::new, |s| format!("{:.10}", get(s))));
                }
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Throughput and power of an optical network of `m` layers over `n` modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub layers: f64,
    pub modes: f64,
    /// Hz.
    pub detection_rate: f64,
    /// W/cm².
    pub saturation_power: f64,
    /// cm².
    pub cross_section: f64,
    /// Equivalent FLOPS, `m·N²·D`.
    pub flops: f64,
    /// Watt, `N·p·A`.
    pub power: f64,
    /// FLOPS per Watt.
    pub efficiency: f64,
}

pub fn resource_estimate(
    layers: f64,
    modes: f64,
    detection_rate: f64,
    saturation_power: f64,
    cross_section: f64,
) -> Result<ResourceEstimate> {
    for (name, v) in [
        ("m", layers),
        ("n", modes),
        ("detection_rate", detection_rate),
        ("saturation_power", saturation_power),
        ("cross_section", cross_section),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MetricError::NonPositiveInput(name));
        }
    }
    let flops = layers * modes * modes * detection_rate;
    let power = modes * saturation_power * cross_section;
    Ok(ResourceEstimate {
        layers,
        modes,
        detection_rate,
        saturation_power,
        cross_section,
        flops,
        power,
        efficiency: flops / power,
    })
}
