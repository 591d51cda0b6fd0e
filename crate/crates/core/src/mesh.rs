//! Optical layer: MZI gates, the rectangular mesh and input encoding.
//!
//! Each gate is the phase shifter PS(φ) on the upper input port followed by
//! BS · PS(θ) · BS, i.e. the product `BS · PS(θ) · BS · PS(φ)`:
//!
//! ```text
//! i e^{iθ/2} [ e^{iφ} sin(θ/2)          cos(θ/2) ]
//!            [ e^{iφ} cos(θ/2)         -sin(θ/2) ]
//! ```
//!
//! The φ factor sits on the first column (input side). Placing PS(φ) on the
//! upper output port instead moves it to the first row; see [`output_phase_gate`].
//!
//! Gates act on adjacent modes `(p, p+1)` (zero-based here). The mesh is the
//! product of embedded gates in mesh order, the first gate acting first on
//! the input, and the layer's weight matrix is `W = D · U` with
//! `D = diag(e^{iδ_j})`.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("mode {mode} has no partner in a {n_modes}-mode mesh")]
    IndexOutOfRange { mode: usize, n_modes: usize },
    #[error("expected {expected} phases, got {got}")]
    PhaseCount { expected: usize, got: usize },
    #[error("non-finite phase")]
    NonFinitePhase,
    #[error("feature count {0} is not even")]
    OddFeatureCount(usize),
}

pub type Result<T> = std::result::Result<T, MeshError>;

pub const DEFAULT_MODES: usize = 8;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |W†W − I|`.
    pub fn unitarity_error(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.cols))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

pub type ComplexVector = Vec<Complex64>;

/// Wraps into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePhases {
    theta: f64,
    phi: f64,
}

impl GatePhases {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(MeshError::NonFinitePhase);
        }
        Ok(Self { theta: wrap_phase(theta), phi: wrap_phase(phi) })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// 2×2 transfer matrix of one MZI, global phase included.
pub fn mzi_gate(g: GatePhases) -> [[Complex64; 2]; 2] {
    let (s, c) = (g.theta / 2.0).sin_cos();
    let global = I * Complex64::from_polar(1.0, g.theta / 2.0);
    let ephi = Complex64::from_polar(1.0, g.phi);
    [
        [global * ephi * s, global * c],
        [global * ephi * c, -global * s],
    ]
}

/// Variant with PS(φ) on the upper output port, `PS(φ) · BS · PS(θ) · BS`.
pub fn output_phase_gate(g: GatePhases) -> [[Complex64; 2]; 2] {
    let (s, c) = (g.theta / 2.0).sin_cos();
    let global = I * Complex64::from_polar(1.0, g.theta / 2.0);
    let ephi = Complex64::from_polar(1.0, g.phi);
    [
        [global * ephi * s, global * ephi * c],
        [global * c, -global * s],
    ]
}

/// 50:50 beam splitter.
pub fn beam_splitter() -> [[Complex64; 2]; 2] {
    let a = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let b = Complex64::new(0.0, FRAC_1_SQRT_2);
    [[a, b], [b, a]]
}

/// Phase shifter on the upper arm.
pub fn phase_shifter(phase: f64) -> [[Complex64; 2]; 2] {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    [[Complex64::from_polar(1.0, phase), zero], [zero, one]]
}

pub fn mul2(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Identity-bordered gate acting on modes `mode` and `mode + 1`.
pub fn embed_gate(n_modes: usize, mode: usize, gate: &[[Complex64; 2]; 2]) -> Result<ComplexMatrix> {
    if mode + 1 >= n_modes {
        return Err(MeshError::IndexOutOfRange { mode, n_modes });
    }
    let mut m = ComplexMatrix::identity(n_modes);
    for (r, row) in gate.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m[(mode + r, mode + c)] = *v;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshGate {
    /// Upper mode of the adjacent pair.
    pub mode: usize,
    pub phases: GatePhases,
}

/// Upper modes of each gate in a rectangular mesh, column by column.
pub fn rectangular_layout(n_modes: usize) -> Vec<usize> {
    let mut modes = Vec::with_capacity(n_modes * (n_modes.saturating_sub(1)) / 2);
    for column in 0..n_modes {
        let start = column % 2;
        modes.extend((start..n_modes.saturating_sub(1)).step_by(2));
    }
    modes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    n_modes: usize,
    gates: Vec<MeshGate>,
    output_phases: Vec<f64>,
}

impl MeshParams {
    pub fn gate_count(n_modes: usize) -> usize {
        n_modes * (n_modes - 1) / 2
    }

    /// Number of internal phases (θ and φ per gate).
    pub fn internal_phase_count(n_modes: usize) -> usize {
        2 * Self::gate_count(n_modes)
    }

    /// Builds a rectangular mesh from interleaved `[θ0, φ0, θ1, φ1, …]` and output phases.
    pub fn rectangular(n_modes: usize, internal: &[f64], output: &[f64]) -> Result<Self> {
        let expected = Self::internal_phase_count(n_modes);
        if internal.len() != expected {
            return Err(MeshError::PhaseCount { expected, got: internal.len() });
        }
        if output.len() != n_modes {
            return Err(MeshError::PhaseCount { expected: n_modes, got: output.len() });
        }
        if output.iter().any(|v| !v.is_finite()) {
            return Err(MeshError::NonFinitePhase);
        }
        let gates = rectangular_layout(n_modes)
            .into_iter()
            .zip(internal.chunks_exact(2))
            .map(|(mode, p)| Ok(MeshGate { mode, phases: GatePhases::new(p[0], p[1])? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_modes, gates, output_phases: output.iter().map(|&d| wrap_phase(d)).collect() })
    }

    /// Builds a rectangular mesh from a flat list: internal phases then output phases.
    pub fn from_flat(n_modes: usize, flat: &[f64]) -> Result<Self> {
        let split = Self::internal_phase_count(n_modes);
        if flat.len() != split + n_modes {
            return Err(MeshError::PhaseCount { expected: split + n_modes, got: flat.len() });
        }
        Self::rectangular(n_modes, &flat[..split], &flat[split..])
    }

    /// Arbitrary gate sequence; every gate must sit on an adjacent pair.
    pub fn with_gates(n_modes: usize, gates: Vec<MeshGate>, output: Vec<f64>) -> Result<Self> {
        if let Some(g) = gates.iter().find(|g| g.mode + 1 >= n_modes) {
            return Err(MeshError::IndexOutOfRange { mode: g.mode, n_modes });
        }
        if output.len() != n_modes {
            return Err(MeshError::PhaseCount { expected: n_modes, got: output.len() });
        }
        Ok(Self { n_modes, gates, output_phases: output.into_iter().map(wrap_phase).collect() })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn gates(&self) -> &[MeshGate] {
        &self.gates
    }

    pub fn output_phases(&self) -> &[f64] {
        &self.output_phases
    }

    /// Flat serialization order: `θ, φ` per gate in mesh order, then output phases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.gates.iter().flat_map(|g| [g.phases.theta, g.phases.phi]).collect();
        v.extend_from_slice(&self.output_phases);
        v
    }
}

/// `W = D · T_K ⋯ T_1`.
pub fn compose_mesh(mp: &MeshParams) -> ComplexMatrix {
    let n = mp.n_modes;
    let mut u = ComplexMatrix::identity(n);
    for g in &mp.gates {
        let t = mzi_gate(g.phases);
        let (p, q) = (g.mode, g.mode + 1);
        // left-multiply by the embedded gate: only rows p and q change
        for j in 0..n {
            let a = u[(p, j)];
            let b = u[(q, j)];
            u[(p, j)] = t[0][0] * a + t[0][1] * b;
            u[(q, j)] = t[1][0] * a + t[1][1] * b;
        }
    }
    for (i, &d) in mp.output_phases.iter().enumerate() {
        let e = Complex64::from_polar(1.0, d);
        for j in 0..n {
            u[(i, j)] *= e;
        }
    }
    u
}

/// Packs consecutive feature pairs into complex amplitudes: `x_k = c (f_{2k} + i f_{2k+1})`.
pub fn encode_features(features: &[f64], scale: f64) -> Result<ComplexVector> {
    if features.len() % 2 != 0 {
        return Err(MeshError::OddFeatureCount(features.len()));
    }
    Ok(features
        .chunks_exact(2)
        .map(|p| Complex64::new(scale * p[0], scale * p[1]))
        .collect())
}
