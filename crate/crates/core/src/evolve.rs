//! Genetic-algorithm trainer over flat real genomes.
//!
//! Each generation keeps the elites unchanged, then fills the remaining rows
//! with uniform-crossover children and Gaussian-mutation children whose
//! parents are drawn by tournament. Row order is fixed: elites, crossover
//! children, mutation children.
//!
//! Randomness comes from [`SeedStreams`]: one root seed, and an independent
//! ChaCha8 stream per `(generation, row)`. Fitness evaluation is pure and runs
//! in parallel, so results do not depend on the thread count.

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::wrap_phase;

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("genome layouts differ")]
    LayoutMismatch,
    #[error("genome has {got} values, layout expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, GaError>;

/// Smallest admissible input scale.
pub const MIN_INPUT_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Phases,
    OutputPhases,
    BiasRe,
    BiasIm,
    InputScale,
    HiddenWeights,
    HiddenBias,
    ReadoutWeights,
    ReadoutBias,
}

impl SegmentKind {
    fn is_phase(self) -> bool {
        matches!(self, SegmentKind::Phases | SegmentKind::OutputPhases)
    }

    /// Initial value drawn for one gene of this segment.
    fn sample_initial<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            SegmentKind::Phases | SegmentKind::OutputPhases => rng.random_range(0.0..TAU),
            SegmentKind::BiasRe | SegmentKind::BiasIm | SegmentKind::HiddenBias => {
                rng.random_range(-0.1..=0.1)
            }
            SegmentKind::InputScale => 1.0,
            SegmentKind::HiddenWeights | SegmentKind::ReadoutWeights => rng.random_range(-1.0..=1.0),
            SegmentKind::ReadoutBias => rng.random_range(0.0..=1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub len: usize,
}

/// Ordered segment descriptor of a genome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeLayout {
    segments: Vec<Segment>,
}

impl GenomeLayout {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    /// Optical network: phases, output phases, complex bias, input scale, readout.
    pub fn optical(n_modes: usize, tasks: usize) -> Self {
        use SegmentKind::*;
        Self::new(vec![
            Segment { kind: Phases, len: n_modes * (n_modes - 1) },
            Segment { kind: OutputPhases, len: n_modes },
            Segment { kind: BiasRe, len: n_modes },
            Segment { kind: BiasIm, len: n_modes },
            Segment { kind: InputScale, len: 1 },
            Segment { kind: ReadoutWeights, len: tasks * n_modes },
            Segment { kind: ReadoutBias, len: tasks },
        ])
    }

    pub fn real_baseline(inputs: usize, hidden: usize, tasks: usize) -> Self {
        use SegmentKind::*;
        Self::new(vec![
            Segment { kind: HiddenWeights, len: hidden * inputs },
            Segment { kind: HiddenBias, len: hidden },
            Segment { kind: ReadoutWeights, len: tasks * hidden },
            Segment { kind: ReadoutBias, len: tasks },
        ])
    }

    pub fn readout_only(inputs: usize, tasks: usize) -> Self {
        use SegmentKind::*;
        Self::new(vec![
            Segment { kind: ReadoutWeights, len: tasks * inputs },
            Segment { kind: ReadoutBias, len: tasks },
        ])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range of the first segment of `kind`.
    pub fn range(&self, kind: SegmentKind) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for s in &self.segments {
            if s.kind == kind {
                return Some(start..start + s.len);
            }
            start += s.len;
        }
        None
    }

    /// Segment kind of every gene, in order.
    pub fn gene_kinds(&self) -> Vec<SegmentKind> {
        self.segments.iter().flat_map(|s| std::iter::repeat_n(s.kind, s.len)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    values: Vec<f64>,
    layout: Arc<GenomeLayout>,
}

impl Genome {
    /// Validates the length and canonicalizes phases and the input scale.
    pub fn new(mut values: Vec<f64>, layout: Arc<GenomeLayout>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(GaError::LengthMismatch { expected: layout.len(), got: values.len() });
        }
        canonicalize(&mut values, &layout);
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &Arc<GenomeLayout> {
        &self.layout
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&[f64]> {
        self.layout.range(kind).map(|r| &self.values[r])
    }
}

fn canonicalize(values: &mut [f64], layout: &GenomeLayout) {
    let mut start = 0;
    for s in layout.segments() {
        let genes = &mut values[start..start + s.len];
        if s.kind.is_phase() {
            genes.iter_mut().for_each(|v| *v = wrap_phase(*v));
        } else if s.kind == SegmentKind::InputScale {
            genes.iter_mut().for_each(|v| *v = v.max(MIN_INPUT_SCALE));
        }
        start += s.len;
    }
}

/// Gaussian mutation width per segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationSigma {
    pub phase: f64,
    pub bias: f64,
    pub input_scale: f64,
    pub hidden: f64,
    pub readout: f64,
}

impl Default for MutationSigma {
    fn default() -> Self {
        Self { phase: 0.2, bias: 0.05, input_scale: 0.05, hidden: 0.1, readout: 0.1 }
    }
}

impl MutationSigma {
    pub fn zero() -> Self {
        Self { phase: 0.0, bias: 0.0, input_scale: 0.0, hidden: 0.0, readout: 0.0 }
    }

    pub fn for_kind(&self, kind: SegmentKind) -> f64 {
        match kind {
            SegmentKind::Phases | SegmentKind::OutputPhases => self.phase,
            SegmentKind::BiasRe | SegmentKind::BiasIm => self.bias,
            SegmentKind::InputScale => self.input_scale,
            SegmentKind::HiddenWeights | SegmentKind::HiddenBias => self.hidden,
            SegmentKind::ReadoutWeights | SegmentKind::ReadoutBias => self.readout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub elites: usize,
    pub n_crossover: usize,
    pub n_mutation: usize,
    pub tournament_size: usize,
    pub sigma: MutationSigma,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 50,
            elites: 3,
            n_crossover: 39,
            n_mutation: 8,
            tournament_size: 2,
            sigma: MutationSigma::default(),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elites + self.n_crossover + self.n_mutation != self.population {
            return Err(GaError::InvalidConfig(format!(
                "elites {} + crossover {} + mutation {} != population {}",
                self.elites, self.n_crossover, self.n_mutation, self.population
            )));
        }
        if self.population == 0 || self.elites == 0 {
            return Err(GaError::InvalidConfig("population and elites must be positive".into()));
        }
        if self.tournament_size == 0 {
            return Err(GaError::InvalidConfig("tournament size must be positive".into()));
        }
        let s = &self.sigma;
        if [s.phase, s.bias, s.input_scale, s.hidden, s.readout].iter().any(|v| !(*v >= 0.0)) {
            return Err(GaError::InvalidConfig("mutation sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// Independent ChaCha8 streams derived from one root seed.
///
/// Stream `(generation, slot)` seeds ChaCha8 with the root seed and selects
/// the 64-bit stream id `generation << 32 | slot`; streams never overlap.
#[derive(Debug, Clone, Copy)]
pub struct SeedStreams {
    root: u64,
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn stream(&self, generation: u32, slot: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream((u64::from(generation) << 32) | u64::from(slot));
        rng
    }
}

/// Cost function to minimize. Must be pure.
pub trait Objective: Sync {
    fn fitness(&self, genome: &Genome) -> f64;
}

impl<F: Fn(&Genome) -> f64 + Sync> Objective for F {
    fn fitness(&self, genome: &Genome) -> f64 {
        self(genome)
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

pub fn evaluate<O: Objective + ?Sized>(objective: &O, genomes: &[Genome]) -> Vec<f64> {
    genomes.par_iter().map(|g| sanitize(objective.fitness(g))).collect()
}

pub fn init_population(
    cfg: &GaConfig,
    layout: &Arc<GenomeLayout>,
    streams: &SeedStreams,
) -> Vec<Genome> {
    let kinds = layout.gene_kinds();
    (0..cfg.population)
        .map(|i| {
            let mut rng = streams.stream(0, i as u32);
            let values = kinds.iter().map(|k| k.sample_initial(&mut rng)).collect();
            Genome::new(values, Arc::clone(layout)).expect("length follows layout")
        })
        .collect()
}

fn ranked(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    // stable: equal fitness keeps the lower index first
    idx.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    idx
}

/// Indices of the `k` fittest genomes, best first; ties go to the lower index.
pub fn select_elites(fitness: &[f64], k: usize) -> Vec<usize> {
    let mut idx = ranked(fitness);
    idx.truncate(k);
    idx
}

/// Draws `size` contestants with replacement and returns the fittest.
pub fn tournament<R: Rng>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] < fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Uniform crossover: each gene from either parent with probability ½.
pub fn crossover<R: Rng>(a: &Genome, b: &Genome, rng: &mut R) -> Result<Genome> {
    if a.layout != b.layout {
        return Err(GaError::LayoutMismatch);
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y })
        .collect();
    Genome::new(values, Arc::clone(&a.layout))
}

/// Adds per-segment Gaussian noise, then re-wraps phases and clamps the input scale.
pub fn mutate<R: Rng>(parent: &Genome, rng: &mut R, sigma: &MutationSigma) -> Genome {
    let mut values = parent.values.clone();
    let mut start = 0;
    for s in parent.layout.segments() {
        let sd = sigma.for_kind(s.kind);
        if sd > 0.0 {
            let normal = Normal::new(0.0, sd).expect("finite sigma");
            for v in &mut values[start..start + s.len] {
                *v += normal.sample(rng);
            }
        }
        start += s.len;
    }
    Genome::new(values, Arc::clone(&parent.layout)).expect("same layout")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Elite,
    Crossover,
    Mutation,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Origin::Initial => "initial",
            Origin::Elite => "elite",
            Origin::Crossover => "crossover",
            Origin::Mutation => "mutation",
        };
        f.write_str(s)
    }
}

/// Evaluated population.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub genomes: Vec<Genome>,
    pub fitness: Vec<f64>,
    pub origins: Vec<Origin>,
}

impl Population {
    pub fn best(&self) -> (usize, f64) {
        let i = ranked(&self.fitness)[0];
        (i, self.fitness[i])
    }
}

/// Minimum, quartiles and maximum (linear interpolation between order statistics).
pub fn five_number_summary(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [f64::NAN; 5];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub generation: usize,
    pub fitness: Vec<f64>,
    pub origins: Vec<Origin>,
    pub best: f64,
    pub mean: f64,
    /// Over every gene of every individual.
    pub five_number: [f64; 5],
}

impl HistoryEntry {
    pub fn record(generation: usize, pop: &Population) -> Self {
        let all: Vec<f64> = pop.genomes.iter().flat_map(|g| g.values.iter().copied()).collect();
        Self {
            generation,
            fitness: pop.fitness.clone(),
            origins: pop.origins.clone(),
            best: pop.best().1,
            mean: pop.fitness.iter().sum::<f64>() / pop.fitness.len() as f64,
            five_number: five_number_summary(&all),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub entries: Vec<HistoryEntry>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    generation: usize,
    best: f64,
    mean: f64,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    composition: &'a [Origin],
}

impl TrainingHistory {
    pub fn best_per_generation(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.best).collect()
    }

    /// `generation,individual,origin,fitness`, one row per individual.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "generation,individual,origin,fitness")?;
        for e in &self.entries {
            for (i, (f, o)) in e.fitness.iter().zip(&e.origins).enumerate() {
                writeln!(out, "{},{},{},{:e}", e.generation, i, o, f)?;
            }
        }
        Ok(())
    }

    /// Per-generation best, mean and five-number summary.
    pub fn summary_json(&self) -> serde_json::Value {
        let rows: Vec<SummaryRow> = self
            .entries
            .iter()
            .map(|e| SummaryRow {
                generation: e.generation,
                best: e.best,
                mean: e.mean,
                min: e.five_number[0],
                q1: e.five_number[1],
                median: e.five_number[2],
                q3: e.five_number[3],
                max: e.five_number[4],
                composition: &e.origins,
            })
            .collect();
        serde_json::json!({ "generations": rows })
    }
}

/// Builds and evaluates generation `generation + 1` from `pop`.
pub fn evolve_generation<O: Objective + ?Sized>(
    pop: &Population,
    cfg: &GaConfig,
    streams: &SeedStreams,
    generation: usize,
    objective: &O,
) -> Population {
    let n = cfg.population;
    let elites = select_elites(&pop.fitness, cfg.elites);
    let stream_gen = (generation + 1) as u32;

    let children: Vec<(Genome, Origin)> = (cfg.elites..n)
        .into_par_iter()
        .map(|slot| {
            let mut rng = streams.stream(stream_gen, slot as u32);
            if slot < cfg.elites + cfg.n_crossover {
                let a = tournament(&pop.fitness, cfg.tournament_size, &mut rng);
                let b = tournament(&pop.fitness, cfg.tournament_size, &mut rng);
                let child = crossover(&pop.genomes[a], &pop.genomes[b], &mut rng)
                    .expect("population shares one layout");
                (child, Origin::Crossover)
            } else {
                let p = tournament(&pop.fitness, cfg.tournament_size, &mut rng);
                (mutate(&pop.genomes[p], &mut rng, &cfg.sigma), Origin::Mutation)
            }
        })
        .collect();

    let child_genomes: Vec<Genome> = children.iter().map(|(g, _)| g.clone()).collect();
    let child_fitness = evaluate(objective, &child_genomes);

    let mut genomes = Vec::with_capacity(n);
    let mut fitness = Vec::with_capacity(n);
    let mut origins = Vec::with_capacity(n);
    for &e in &elites {
        genomes.push(pop.genomes[e].clone());
        fitness.push(pop.fitness[e]);
        origins.push(Origin::Elite);
    }
    for ((g, o), f) in children.into_iter().zip(child_fitness) {
        genomes.push(g);
        fitness.push(f);
        origins.push(o);
    }
    Population { genomes, fitness, origins }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best: Genome,
    pub best_fitness: f64,
    pub history: TrainingHistory,
}

/// Runs `cfg.generations` generations and returns the fittest genome seen.
pub fn run<O: Objective + ?Sized>(
    cfg: &GaConfig,
    layout: GenomeLayout,
    objective: &O,
) -> Result<RunResult> {
    cfg.validate()?;
    let layout = Arc::new(layout);
    let streams = SeedStreams::new(cfg.seed);
    let genomes = init_population(cfg, &layout, &streams);
    let fitness = evaluate(objective, &genomes);
    let mut pop = Population { origins: vec![Origin::Initial; genomes.len()], genomes, fitness };

    let mut history = TrainingHistory::default();
    history.entries.push(HistoryEntry::record(0, &pop));
    let (i, f) = pop.best();
    let (mut best, mut best_fitness) = (pop.genomes[i].clone(), f);

    for generation in 0..cfg.generations {
        pop = evolve_generation(&pop, cfg, &streams, generation, objective);
        history.entries.push(HistoryEntry::record(generation + 1, &pop));
        let (i, f) = pop.best();
        if f < best_fitness {
            best = pop.genomes[i].clone();
            best_fitness = f;
        }
        log::debug!("generation {} best {:.6e}", generation + 1, best_fitness);
    }
    Ok(RunResult { best, best_fitness, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Arc<GenomeLayout> {
        Arc::new(GenomeLayout::optical(8, 3))
    }

    #[test]
    fn optical_layout_sizes() {
        let l = GenomeLayout::optical(8, 3);
        assert_eq!(l.len(), 108);
        assert_eq!(l.range(SegmentKind::Phases), Some(0..56));
        assert_eq!(l.range(SegmentKind::OutputPhases), Some(56..64));
        assert_eq!(l.range(SegmentKind::InputScale), Some(80..81));
        assert_eq!(GenomeLayout::readout_only(8, 3).len(), 27);
        assert_eq!(GenomeLayout::real_baseline(16, 8, 3).len(), 128 + 8 + 24 + 3);
    }

    #[test]
    fn genome_canonicalizes() {
        let l = layout();
        let mut v = vec![0.0; l.len()];
        v[0] = -1.0;
        v[57] = 7.0;
        v[80] = -3.0;
        let g = Genome::new(v, Arc::clone(&l)).unwrap();
        assert!((g.values()[0] - (TAU - 1.0)).abs() < 1e-15);
        assert!((g.values()[57] - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(g.values()[80], MIN_INPUT_SCALE);
        assert!(matches!(Genome::new(vec![0.0; 3], l), Err(GaError::LengthMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = GaConfig { n_crossover: 38, ..GaConfig::default() };
        assert!(bad.validate().is_err());
        let alt = GaConfig { n_crossover: 38, n_mutation: 9, ..GaConfig::default() };
        assert!(alt.validate().is_ok());
    }

    #[test]
    fn init_is_seeded_and_in_range() {
        let cfg = GaConfig { seed: 11, ..GaConfig::default() };
        let s = SeedStreams::new(cfg.seed);
        let a = init_population(&cfg, &layout(), &s);
        let b = init_population(&cfg, &layout(), &s);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for g in &a {
            assert!(g.segment(SegmentKind::Phases).unwrap().iter().all(|p| (0.0..TAU).contains(p)));
            assert_eq!(g.segment(SegmentKind::InputScale).unwrap(), &[1.0]);
            assert!(g.segment(SegmentKind::BiasRe).unwrap().iter().all(|b| b.abs() <= 0.1));
            assert!(g.segment(SegmentKind::ReadoutBias).unwrap().iter().all(|b| (0.0..=1.0).contains(b)));
            assert!(g.segment(SegmentKind::ReadoutWeights).unwrap().iter().all(|w| w.abs() <= 1.0));
        }
        let c = init_population(&GaConfig { seed: 12, ..cfg }, &layout(), &SeedStreams::new(12));
        assert_ne!(a, c);
    }

    #[test]
    fn elite_selection_rules() {
        let f = [0.5, 0.1, 0.3, 0.1, 0.9];
        assert_eq!(select_elites(&f, 5), vec![1, 3, 2, 0, 4]);
        assert_eq!(select_elites(&f, 2), vec![1, 3]);
        assert_eq!(select_elites(&[0.2, 0.1, 0.3], 1), vec![1]);
    }

    #[test]
    fn crossover_gene_provenance() {
        let s = SeedStreams::new(3);
        let cfg = GaConfig::default();
        let pop = init_population(&cfg, &layout(), &s);
        let (a, b) = (&pop[0], &pop[1]);
        let child = crossover(a, b, &mut s.stream(9, 0)).unwrap();
        for i in 0..child.values().len() {
            let v = child.values()[i];
            assert!(v == a.values()[i] || v == b.values()[i]);
        }
        assert_eq!(child, crossover(a, b, &mut s.stream(9, 0)).unwrap());
        assert_eq!(crossover(a, a, &mut s.stream(9, 1)).unwrap(), *a);

        let other = Genome::new(vec![0.0; 27], Arc::new(GenomeLayout::readout_only(8, 3))).unwrap();
        assert_eq!(crossover(a, &other, &mut s.stream(0, 0)), Err(GaError::LayoutMismatch));
    }

    #[test]
    fn mutation_rules() {
        let s = SeedStreams::new(5);
        let cfg = GaConfig::default();
        let pop = init_population(&cfg, &layout(), &s);
        let p = &pop[0];
        assert_eq!(mutate(p, &mut s.stream(1, 1), &MutationSigma::zero()), *p);
        let big = MutationSigma { phase: 10.0, bias: 1.0, input_scale: 50.0, hidden: 1.0, readout: 1.0 };
        for k in 0..20 {
            let m = mutate(p, &mut s.stream(1, k), &big);
            assert!(m.segment(SegmentKind::Phases).unwrap().iter().all(|v| (0.0..TAU).contains(v)));
            assert!(m.segment(SegmentKind::InputScale).unwrap()[0] >= MIN_INPUT_SCALE);
        }
        let a = mutate(p, &mut s.stream(2, 2), &cfg.sigma);
        let b = mutate(p, &mut s.stream(2, 2), &cfg.sigma);
        assert_eq!(a, b);
        assert_ne!(a, *p);
    }

    fn sphere(g: &Genome) -> f64 {
        g.values().iter().map(|v| v * v).sum::<f64>() / g.values().len() as f64
    }

    #[test]
    fn generation_composition_and_elitism() {
        let cfg = GaConfig { seed: 21, generations: 15, ..GaConfig::default() };
        let res = run(&cfg, GenomeLayout::readout_only(8, 1), &sphere).unwrap();
        assert_eq!(res.history.entries.len(), 16);
        let best = res.history.best_per_generation();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert!(best[15] < best[0]);
        for e in &res.history.entries[1..] {
            assert_eq!(e.fitness.len(), 50);
            assert!(e.origins[..3].iter().all(|o| *o == Origin::Elite));
            assert!(e.origins[3..42].iter().all(|o| *o == Origin::Crossover));
            assert!(e.origins[42..].iter().all(|o| *o == Origin::Mutation));
        }
        assert_eq!(res.best_fitness, best[15]);
    }

    #[test]
    fn uniform_population_stays_uniform_under_crossover() {
        let l = Arc::new(GenomeLayout::readout_only(8, 1));
        let g = Genome::new(vec![0.25; l.len()], Arc::clone(&l)).unwrap();
        let pop = Population {
            genomes: vec![g.clone(); 50],
            fitness: vec![1.0; 50],
            origins: vec![Origin::Initial; 50],
        };
        let cfg = GaConfig::default();
        let next = evolve_generation(&pop, &cfg, &SeedStreams::new(1), 0, &|_: &Genome| 1.0);
        assert_eq!(&next.genomes[..42], &vec![g; 42][..]);
    }

    #[test]
    fn zero_generations_returns_initial_best() {
        let cfg = GaConfig { seed: 4, generations: 0, ..GaConfig::default() };
        let res = run(&cfg, GenomeLayout::readout_only(8, 1), &sphere).unwrap();
        assert_eq!(res.history.entries.len(), 1);
        let init = init_population(&cfg, &Arc::new(GenomeLayout::readout_only(8, 1)), &SeedStreams::new(4));
        let min = init.iter().map(sphere).fold(f64::INFINITY, f64::min);
        assert_eq!(res.best_fitness, min);
    }

    #[test]
    fn five_numbers() {
        assert_eq!(five_number_summary(&[1.0, 2.0, 3.0, 4.0, 5.0]), [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(five_number_summary(&[4.0, 1.0]), [1.0, 1.75, 2.5, 3.25, 4.0]);
    }

    #[test]
    fn history_exports() {
        let cfg = GaConfig { seed: 2, generations: 2, ..GaConfig::default() };
        let res = run(&cfg, GenomeLayout::readout_only(8, 1), &sphere).unwrap();
        let mut buf = Vec::new();
        res.history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 50);
        assert!(text.lines().nth(1).unwrap().starts_with("0,0,initial,"));
        let json = res.history.summary_json();
        assert_eq!(json["generations"].as_array().unwrap().len(), 3);
    }
}
