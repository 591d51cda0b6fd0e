//! Molecular record ingestion and Coulomb-matrix featurization.
//!
//! Records use the QM9 extended-XYZ layout: an atom-count line, a
//! whitespace-separated property line, then one `symbol x y z charge` line per
//! atom (Ångström). Anything after the atom block (frequencies, SMILES,
//! InChI) is ignored. Coordinates are stored in Bohr and labels in kcal/mol.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bohr per Ångström.
pub const ANGSTROM_TO_BOHR: f64 = 1.889_725_988_6;
/// kcal/mol per Hartree.
pub const HARTREE_TO_KCAL_MOL: f64 = 627.509_474;
/// Largest molecule in the dataset, and the padded Coulomb-matrix size.
pub const MAX_ATOMS: usize = 29;
/// Number of eigenvalues fed to the optical chip.
pub const FEATURE_COUNT: usize = 16;
/// Pairs of atoms closer than this (Bohr) are rejected.
pub const MIN_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MolError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("unknown element symbol {0:?}")]
    UnknownElement(String),
    #[error("molecule has {atoms} atoms, more than the matrix dimension {dim}")]
    TooManyAtoms { atoms: usize, dim: usize },
    #[error("atoms {0} and {1} coincide")]
    CoincidentAtoms(usize, usize),
    #[error("symmetric eigensolver did not converge")]
    EigensolverFailure,
    #[error("all values of {0} are equal")]
    DegenerateLabels(PropertyKind),
    #[error("label {0} missing from a record")]
    MissingLabel(PropertyKind),
    #[error("requested {requested} records but only {available} available")]
    InsufficientData { requested: usize, available: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MolError>;

/// Thermodynamic label kinds. The order here is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Enthalpy,
    FreeEnergy,
    InternalEnergy,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 3] = [
        PropertyKind::Enthalpy,
        PropertyKind::FreeEnergy,
        PropertyKind::InternalEnergy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropertyKind::Enthalpy => "enthalpy",
            PropertyKind::FreeEnergy => "free_energy",
            PropertyKind::InternalEnergy => "internal_energy",
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyKind {
    type Err = MolError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "enthalpy" | "h" => Ok(PropertyKind::Enthalpy),
            "free_energy" | "free-energy" | "g" => Ok(PropertyKind::FreeEnergy),
            "internal_energy" | "internal-energy" | "u" => Ok(PropertyKind::InternalEnergy),
            other => Err(MolError::InvalidArgument(format!("unknown property {other:?}"))),
        }
    }
}

pub type Labels = BTreeMap<PropertyKind, f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub atomic_number: u32,
    /// Cartesian position in Bohr.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub id: String,
    atoms: Vec<Atom>,
    /// kcal/mol.
    pub labels: Labels,
}

impl Molecule {
    pub fn new(id: impl Into<String>, atoms: Vec<Atom>, labels: Labels) -> Result<Self> {
        if atoms.is_empty() {
            return Err(MolError::MalformedRecord("molecule has no atoms".into()));
        }
        if atoms.len() > MAX_ATOMS {
            return Err(MolError::TooManyAtoms { atoms: atoms.len(), dim: MAX_ATOMS });
        }
        if let Some(a) = atoms.iter().find(|a| a.atomic_number == 0) {
            return Err(MolError::MalformedRecord(format!("atomic number {}", a.atomic_number)));
        }
        Ok(Self { id: id.into(), atoms, labels })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn label(&self, kind: PropertyKind) -> Result<f64> {
        self.labels.get(&kind).copied().ok_or(MolError::MissingLabel(kind))
    }

    /// Same molecule with atoms reordered by `perm` (new index i takes old atom `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let atoms = perm.iter().map(|&i| self.atoms[i]).collect();
        Self { id: self.id.clone(), atoms, labels: self.labels.clone() }
    }

    /// Applies `rotation` (row-major 3×3) then `translation` to every atom.
    pub fn transformed(&self, rotation: &[[f64; 3]; 3], translation: [f64; 3]) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let p = a.position;
                let mut q = translation;
                for (r, row) in rotation.iter().enumerate() {
                    q[r] += row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
                }
                Atom { atomic_number: a.atomic_number, position: q }
            })
            .collect();
        Self { id: self.id.clone(), atoms, labels: self.labels.clone() }
    }
}

pub fn atomic_number(symbol: &str) -> Result<u32> {
    match symbol {
        "H" => Ok(1),
        "C" => Ok(6),
        "N" => Ok(7),
        "O" => Ok(8),
        "F" => Ok(9),
        other => Err(MolError::UnknownElement(other.to_string())),
    }
}

/// Zero-based indices of the labels within the whitespace-split property line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub internal_energy: usize,
    pub enthalpy: usize,
    pub free_energy: usize,
}

impl Default for ColumnLayout {
    fn default() -> Self {
        Self { internal_energy: 13, enthalpy: 14, free_energy: 15 }
    }
}

impl ColumnLayout {
    fn column(&self, kind: PropertyKind) -> usize {
        match kind {
            PropertyKind::Enthalpy => self.enthalpy,
            PropertyKind::FreeEnergy => self.free_energy,
            PropertyKind::InternalEnergy => self.internal_energy,
        }
    }
}

/// Parses a float, accepting the Mathematica-style `1.5*^-6` exponent found in QM9 files.
fn parse_float(token: &str) -> Result<f64> {
    let cleaned = token.replace("*^", "e");
    cleaned
        .parse::<f64>()
        .map_err(|_| MolError::MalformedRecord(format!("unparseable number {token:?}")))
}

pub fn parse_qm9_record(text: &str) -> Result<Molecule> {
    parse_qm9_record_with(text, &ColumnLayout::default())
}

pub fn parse_qm9_record_with(text: &str, layout: &ColumnLayout) -> Result<Molecule> {
    let mut lines = text.lines();
    let (molecule, _) = parse_one(&mut lines, layout)?;
    Ok(molecule)
}

fn parse_one<'a, I>(lines: &mut I, layout: &ColumnLayout) -> Result<(Molecule, usize)>
where
    I: Iterator<Item = &'a str>,
{
    let count_line = lines
        .next()
        .ok_or_else(|| MolError::MalformedRecord("empty record".into()))?;
    let n: usize = count_line
        .trim()
        .parse()
        .map_err(|_| MolError::MalformedRecord(format!("bad atom count {:?}", count_line.trim())))?;
    if n == 0 {
        return Err(MolError::MalformedRecord("atom count is zero".into()));
    }
    let props_line = lines
        .next()
        .ok_or_else(|| MolError::MalformedRecord("missing property line".into()))?;
    let props: Vec<&str> = props_line.split_whitespace().collect();
    let id = match props.as_slice() {
        [tag, idx, ..] if tag.eq_ignore_ascii_case("gdb") => format!("gdb_{idx}"),
        _ => String::new(),
    };
    let mut labels = Labels::new();
    for kind in PropertyKind::ALL {
        let col = layout.column(kind);
        let token = props.get(col).ok_or_else(|| {
            MolError::MalformedRecord(format!("property line has no column {col} for {kind}"))
        })?;
        labels.insert(kind, parse_float(token)? * HARTREE_TO_KCAL_MOL);
    }

    let mut atoms = Vec::with_capacity(n);
    for i in 0..n {
        let line = lines.next().ok_or_else(|| {
            MolError::MalformedRecord(format!("record claims {n} atoms but lists {i}"))
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(MolError::MalformedRecord(format!(
                "record claims {n} atoms but lists {i} (line {line:?})"
            )));
        }
        let z = atomic_number(fields[0])?;
        let mut position = [0.0; 3];
        for (p, tok) in position.iter_mut().zip(&fields[1..4]) {
            *p = parse_float(tok)? * ANGSTROM_TO_BOHR;
        }
        atoms.push(Atom { atomic_number: z, position });
    }
    Ok((Molecule::new(id, atoms, labels)?, n))
}

/// Parses a stream of concatenated records. Trailing non-atom lines after each
/// atom block are skipped until the next line that is a bare atom count.
pub fn parse_concatenated(text: &str, layout: &ColumnLayout) -> Vec<Result<Molecule>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut starts = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let trimmed = lines[i].trim();
        match trimmed.parse::<usize>() {
            Ok(n) if n > 0 => {
                starts.push(i);
                i += n + 2;
            }
            _ => i += 1,
        }
    }
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let end = starts.get(k + 1).copied().unwrap_or(lines.len());
            let mut it = lines[s..end].iter().copied();
            parse_one(&mut it, layout).map(|(m, _)| m)
        })
        .collect()
}

/// Parses every `*.xyz` file in `dir`, ordered by file name.
pub fn read_xyz_dir(
    dir: &Path,
    layout: &ColumnLayout,
) -> std::io::Result<Vec<(PathBuf, Result<Molecule>)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xyz"))
        .collect();
    paths.sort();
    paths
        .into_par_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)?;
            let mol = parse_qm9_record_with(&text, layout);
            Ok((p, mol))
        })
        .collect()
}

/// Dense symmetric Coulomb matrix padded with zeros to `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoulombMatrix {
    entries: DMatrix<f64>,
}

impl CoulombMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Wraps an arbitrary square matrix; used for spectra of hand-built matrices.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(MolError::InvalidArgument("Coulomb matrix must be square".into()));
        }
        Ok(Self { entries })
    }
}

pub fn coulomb_matrix(mol: &Molecule, dim: usize) -> Result<CoulombMatrix> {
    let atoms = mol.atoms();
    if atoms.len() > dim {
        return Err(MolError::TooManyAtoms { atoms: atoms.len(), dim });
    }
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for (i, ai) in atoms.iter().enumerate() {
        let zi = f64::from(ai.atomic_number);
        m[(i, i)] = 0.5 * zi.powf(2.4);
        for (j, aj) in atoms.iter().enumerate().skip(i + 1) {
            let d = distance(&ai.position, &aj.position);
            if d < MIN_DISTANCE {
                return Err(MolError::CoincidentAtoms(i, j));
            }
            let v = zi * f64::from(aj.atomic_number) / d;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(CoulombMatrix { entries: m })
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Leading eigenvalues of a Coulomb matrix, sorted in non-increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(MolError::InvalidArgument("features must be non-increasing".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// The `k` algebraically largest eigenvalues of `cm`, descending.
pub fn eigenspectrum(cm: &CoulombMatrix, k: usize) -> Result<FeatureVector> {
    if k == 0 || k > cm.dim() {
        return Err(MolError::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            cm.dim()
        )));
    }
    let eig = nalgebra::SymmetricEigen::try_new(cm.entries.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(MolError::EigensolverFailure)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MolError::EigensolverFailure);
    }
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(k);
    Ok(FeatureVector(values))
}

pub fn featurize(mol: &Molecule, k: usize) -> Result<FeatureVector> {
    eigenspectrum(&coulomb_matrix(mol, MAX_ATOMS)?, k)
}

/// One featurized molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: FeatureVector,
    pub labels: Labels,
}

/// Featurizes in parallel; output order follows input order.
pub fn featurize_all(mols: &[Molecule], k: usize) -> Vec<Result<Sample>> {
    mols.par_iter()
        .map(|m| {
            Ok(Sample { id: m.id.clone(), features: featurize(m, k)?, labels: m.labels.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

/// Per-property min-max scaler (kcal/mol to the unit interval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScaler {
    ranges: BTreeMap<PropertyKind, Range>,
}

impl LabelScaler {
    pub fn from_ranges(ranges: BTreeMap<PropertyKind, Range>) -> Result<Self> {
        for (kind, r) in &ranges {
            if !(r.max > r.min) {
                return Err(MolError::DegenerateLabels(*kind));
            }
        }
        Ok(Self { ranges })
    }

    pub fn range(&self, kind: PropertyKind) -> Option<Range> {
        self.ranges.get(&kind).copied()
    }

    pub fn kinds(&self) -> impl Iterator<Item = PropertyKind> + '_ {
        self.ranges.keys().copied()
    }

    fn fitted(&self, kind: PropertyKind) -> Range {
        self.ranges
            .get(&kind)
            .copied()
            .unwrap_or_else(|| panic!("scaler not fitted for {kind}"))
    }

    /// Maps `[min, max]` onto `[0, 1]`; extrapolates linearly outside.
    ///
    /// Panics if `kind` was not fitted.
    pub fn scale(&self, kind: PropertyKind, y: f64) -> f64 {
        let r = self.fitted(kind);
        (y - r.min) / (r.max - r.min)
    }

    pub fn unscale(&self, kind: PropertyKind, y_scaled: f64) -> f64 {
        let r = self.fitted(kind);
        y_scaled * (r.max - r.min) + r.min
    }
}

/// Fits a scaler over every property present in the first label map.
pub fn fit_scaler(labels: &[&Labels]) -> Result<LabelScaler> {
    let kinds: Vec<PropertyKind> = labels
        .first()
        .map(|l| l.keys().copied().collect())
        .unwrap_or_default();
    if kinds.is_empty() {
        return Err(MolError::InvalidArgument("no labels to fit".into()));
    }
    let mut ranges = BTreeMap::new();
    for kind in kinds {
        let mut r = Range { min: f64::INFINITY, max: f64::NEG_INFINITY };
        for l in labels {
            let y = *l.get(&kind).ok_or(MolError::MissingLabel(kind))?;
            r.min = r.min.min(y);
            r.max = r.max.max(y);
        }
        ranges.insert(kind, r);
    }
    LabelScaler::from_ranges(ranges)
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    /// Fitted on `train` only.
    pub scaler: LabelScaler,
}

impl DatasetSplit {
    /// Largest absolute feature over the training set.
    pub fn feature_divisor(&self) -> f64 {
        let d = self.train.iter().map(|s| s.features.max_abs()).fold(0.0, f64::max);
        if d > 0.0 {
            d
        } else {
            1.0
        }
    }
}

/// Draws disjoint uniformly random train/test subsets with a seeded ChaCha8 stream.
pub fn split_dataset(
    records: &[Sample],
    seed: u64,
    n_train: usize,
    n_test: usize,
) -> Result<DatasetSplit> {
    let requested = n_train + n_test;
    if requested > records.len() || n_train == 0 {
        return Err(MolError::InsufficientData { requested, available: records.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, records.len(), requested).into_vec();
    let (train_indices, test_indices) = picked.split_at(n_train);
    let train: Vec<Sample> = train_indices.iter().map(|&i| records[i].clone()).collect();
    let test: Vec<Sample> = test_indices.iter().map(|&i| records[i].clone()).collect();
    let scaler = fit_scaler(&train.iter().map(|s| &s.labels).collect::<Vec<_>>())?;
    Ok(DatasetSplit {
        train,
        test,
        train_indices: train_indices.to_vec(),
        test_indices: test_indices.to_vec(),
        seed,
        scaler,
    })
}

fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the feature cache: `id,e1..ek,enthalpy,free_energy,internal_energy`.
pub fn write_feature_csv<W: Write>(out: &mut W, samples: &[Sample]) -> std::io::Result<()> {
    let k = samples.first().map_or(FEATURE_COUNT, |s| s.features.len());
    let mut header = vec!["id".to_string()];
    header.extend((1..=k).map(|i| format!("e{i}")));
    header.extend(PropertyKind::ALL.iter().map(|p| p.as_str().to_string()));
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let mut row = vec![s.id.clone()];
        row.extend(s.features.values().iter().map(|&v| format_f64(v)));
        for kind in PropertyKind::ALL {
            row.push(s.labels.get(&kind).map_or_else(String::new, |&v| format_f64(v)));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_feature_csv<R: BufRead>(input: R) -> Result<Vec<Sample>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| MolError::MalformedRecord("empty feature file".into()))?
        .map_err(|e| MolError::MalformedRecord(e.to_string()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"id") {
        return Err(MolError::MalformedRecord("feature header must start with id".into()));
    }
    let k = cols.iter().filter(|c| c.starts_with('e') && c[1..].parse::<usize>().is_ok()).count();
    let label_cols: Vec<(usize, PropertyKind)> = cols
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.parse::<PropertyKind>().ok().map(|p| (i, p)))
        .collect();
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| MolError::MalformedRecord(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(MolError::MalformedRecord(format!(
                "row {} has {} fields, header has {}",
                lineno + 2,
                fields.len(),
                cols.len()
            )));
        }
        let values = fields[1..=k].iter().map(|t| parse_float(t)).collect::<Result<Vec<_>>>()?;
        let mut labels = Labels::new();
        for &(i, kind) in &label_cols {
            if !fields[i].is_empty() {
                labels.insert(kind, parse_float(fields[i])?);
            }
        }
        samples.push(Sample {
            id: fields[0].to_string(),
            features: FeatureVector::new(values)?,
            labels,
        });
    }
    Ok(samples)
}
