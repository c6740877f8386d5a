//! Evolutionary search over per-layer dropout part modes.
//!
//! A [`Genome`] assigns a [`PartMode`] to each of the `N` Bayesian layers, so
//! the design space has `3^N` points. The search keeps a fixed-size
//! population, evaluates it through a memoized [`Evaluator`], keeps the top
//! half as parents and refills the population with mutated and crossed-over
//! children plus the best feasible record seen so far. Infeasible genomes rank
//! after feasible ones by how far their dropout count is from the admitted
//! range, so a population with no feasible member still moves toward one.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::PartMode;
use crate::rng::derive_rng;

/// Largest `N` accepted by [`enumerate_all`].
pub const MAX_ENUMERATION_LAYERS: usize = 10;

/// Part-mode assignment for every Bayesian layer, written `R-B-I`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome(Vec<PartMode>);

impl Genome {
    pub fn new(modes: Vec<PartMode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("genome must have at least one gene".into()));
        }
        Ok(Self(modes))
    }

    pub fn uniform(mode: PartMode, n: usize) -> Result<Self> {
        Self::new(vec![mode; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..n).map(|_| PartMode::ALL[rng.random_range(0..3)]).collect())
    }

    /// The `index`-th genome in base-3 order (first gene most significant).
    pub fn from_index(mut index: usize, n: usize) -> Self {
        let mut modes = vec![PartMode::Real; n];
        for slot in modes.iter_mut().rev() {
            *slot = PartMode::ALL[index % 3];
            index /= 3;
        }
        Self(modes)
    }

    pub fn modes(&self) -> &[PartMode] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of instantiated masks: one per single-part layer, two per `B` layer.
    pub fn dropout_count(&self) -> usize {
        self.0.iter().map(|m| m.mask_count()).sum()
    }
}

pub fn dropout_count(genome: &Genome) -> usize {
    genome.dropout_count()
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

impl FromStr for Genome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let modes = s
            .trim()
            .split('-')
            .map(str::parse)
            .collect::<Result<Vec<PartMode>>>()
            .map_err(|_| Error::InvalidArgument(format!("malformed genome {s:?} (expected e.g. R-B-I)")))?;
        Self::new(modes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    MaxAcc,
    MinEce,
    Weighted { w_acc: f64, w_ece: f64 },
}

impl Objective {
    pub fn fitness(&self, accuracy: f64, ece: f64) -> f64 {
        match *self {
            Objective::MaxAcc => accuracy,
            Objective::MinEce => -ece,
            Objective::Weighted { w_acc, w_ece } => w_acc * accuracy - w_ece * ece,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Objective::Weighted { w_acc, w_ece } = *self {
            if !(w_acc >= 0.0 && w_ece >= 0.0) || (w_acc == 0.0 && w_ece == 0.0) {
                return Err(Error::InvalidArgument(
                    "objective weights must be >= 0 and not both zero".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Hardware constraint on the dropout count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    MaxDropout(usize),
    MinDropout(usize),
}

impl Constraint {
    pub fn admits(&self, genome: &Genome) -> bool {
        self.violation(genome) == 0
    }

    /// Distance of the genome's dropout count from the admitted range.
    pub fn violation(&self, genome: &Genome) -> usize {
        let c = genome.dropout_count();
        match *self {
            Constraint::MaxDropout(m) => c.saturating_sub(m),
            Constraint::MinDropout(m) => m.saturating_sub(c),
        }
    }
}

fn admitted(constraint: Option<Constraint>, genome: &Genome) -> bool {
    constraint.is_none_or(|c| c.admits(genome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub population_size: usize,
    pub mutation_portion: f64,
    pub mutation_prob: f64,
    pub crossover_prob: f64,
    pub iterations: usize,
    pub objective: Objective,
    pub constraint: Option<Constraint>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population_size: 8,
            mutation_portion: 0.5,
            mutation_prob: 0.5,
            crossover_prob: 0.5,
            iterations: 20,
            objective: Objective::MaxAcc,
            constraint: None,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidArgument("population_size must be >= 2".into()));
        }
        for (name, p) in [
            ("mutation_portion", self.mutation_portion),
            ("mutation_prob", self.mutation_prob),
            ("crossover_prob", self.crossover_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        self.objective.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub ece: f64,
}

/// Maps a genome to `(accuracy, ece)`. Must be deterministic for a given genome.
pub trait Evaluator {
    fn evaluate(&mut self, genome: &Genome) -> Result<Metrics>;
}

impl<F: FnMut(&Genome) -> Result<Metrics>> Evaluator for F {
    fn evaluate(&mut self, genome: &Genome) -> Result<Metrics> {
        self(genome)
    }
}

/// Lookup-table evaluator, typically loaded from a `genome,accuracy,ece` CSV.
#[derive(Clone, Debug, Default)]
pub struct CachedEvaluator {
    table: HashMap<Genome, Metrics>,
    calls: usize,
}

impl CachedEvaluator {
    pub fn new(table: HashMap<Genome, Metrics>) -> Self {
        Self { table, calls: 0 }
    }

    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            genome: String,
            accuracy: f64,
            ece: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut table = HashMap::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            table.insert(row.genome.parse()?, Metrics { accuracy: row.accuracy, ece: row.ece });
        }
        Ok(Self::new(table))
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    /// Gene count shared by every entry, if the table is non-empty and consistent.
    pub fn genome_len(&self) -> Option<usize> {
        let mut lens = self.table.keys().map(Genome::len);
        let first = lens.next()?;
        lens.all(|l| l == first).then_some(first)
    }
}

impl Evaluator for CachedEvaluator {
    fn evaluate(&mut self, genome: &Genome) -> Result<Metrics> {
        self.calls += 1;
        self.table
            .get(genome)
            .copied()
            .ok_or_else(|| Error::InvalidArgument("genome missing from fitness table".into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitnessRecord {
    pub genome: Genome,
    pub accuracy: f64,
    pub ece: f64,
    pub dropout_count: usize,
    pub feasible: bool,
    /// Constraint violation; zero exactly when `feasible`.
    pub violation: usize,
    pub fitness: f64,
}

/// Evaluator wrapper that calls the inner evaluator at most once per genome.
pub struct Memo<E> {
    inner: E,
    cache: HashMap<Genome, Metrics>,
    inner_calls: usize,
}

impl<E: Evaluator> Memo<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, cache: HashMap::new(), inner_calls: 0 }
    }

    pub fn inner_calls(&self) -> usize {
        self.inner_calls
    }

    pub fn into_inner(self) -> E {
        self.inner
    }

    pub fn metrics(&mut self, genome: &Genome) -> Result<Metrics> {
        if let Some(m) = self.cache.get(genome) {
            return Ok(*m);
        }
        self.inner_calls += 1;
        let m = self.inner.evaluate(genome).map_err(|e| match e {
            e @ Error::Evaluator { .. } => e,
            other => Error::Evaluator { genome: genome.to_string(), message: other.to_string() },
        })?;
        self.cache.insert(genome.clone(), m);
        Ok(m)
    }
}

/// Evaluates `genome` and scores it under `objective` and `constraint`.
pub fn evaluate<E: Evaluator>(
    genome: &Genome,
    evaluator: &mut Memo<E>,
    objective: Objective,
    constraint: Option<Constraint>,
) -> Result<FitnessRecord> {
    let m = evaluator.metrics(genome)?;
    Ok(FitnessRecord {
        genome: genome.clone(),
        accuracy: m.accuracy,
        ece: m.ece,
        dropout_count: genome.dropout_count(),
        feasible: admitted(constraint, genome),
        violation: constraint.map_or(0, |c| c.violation(genome)),
        fitness: objective.fitness(m.accuracy, m.ece),
    })
}

/// Higher fitness first; ties go to the lexicographically smaller genome
/// (`R < I < B` per gene).
fn rank_order(a: &FitnessRecord, b: &FitnessRecord) -> Ordering {
    b.fitness.total_cmp(&a.fitness).then_with(|| a.genome.cmp(&b.genome))
}

/// Top `k` distinct records: feasible ones in rank order, then infeasible
/// ones by increasing violation.
pub fn select(population: &[FitnessRecord], k: usize) -> Result<Vec<FitnessRecord>> {
    if population.is_empty() {
        return Err(Error::InvalidArgument("cannot select from an empty population".into()));
    }
    let mut ranked: Vec<&FitnessRecord> = population.iter().collect();
    ranked.sort_by(|a, b| a.violation.cmp(&b.violation).then_with(|| rank_order(a, b)));
    ranked.dedup_by(|a, b| a.genome == b.genome);
    Ok(ranked.into_iter().take(k.max(1)).cloned().collect())
}

/// Replaces each gene, with probability `prob`, by one of the two other modes
/// chosen uniformly.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, prob: f64, rng: &mut R) -> Genome {
    let modes = genome
        .0
        .iter()
        .map(|&m| {
            if rng.random::<f64>() < prob {
                let others: Vec<PartMode> = PartMode::ALL.into_iter().filter(|&o| o != m).collect();
                others[rng.random_range(0..2)]
            } else {
                m
            }
        })
        .collect();
    Genome(modes)
}

/// Uniform layer-wise mixture: each gene comes from `a` or `b` with equal probability.
pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Result<Genome> {
    crossover_with(a, b, 0.5, rng)
}

/// Layer-wise mixture taking each gene from `b` with probability `prob_b`.
pub fn crossover_with<R: Rng + ?Sized>(a: &Genome, b: &Genome, prob_b: f64, rng: &mut R) -> Result<Genome> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot cross genomes of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(Genome(
        a.0.iter()
            .zip(&b.0)
            .map(|(&x, &y)| if rng.random::<f64>() < prob_b { y } else { x })
            .collect(),
    ))
}

/// Non-dominated records under (accuracy higher, ece lower), in input order.
pub fn pareto_front(records: &[FitnessRecord]) -> Vec<FitnessRecord> {
    let dominates = |a: &FitnessRecord, b: &FitnessRecord| {
        a.accuracy >= b.accuracy && a.ece <= b.ece && (a.accuracy > b.accuracy || a.ece < b.ece)
    };
    records
        .iter()
        .filter(|r| !records.iter().any(|o| dominates(o, r)))
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry {
    pub generation: usize,
    pub record: FitnessRecord,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: FitnessRecord,
    pub history: Vec<HistoryEntry>,
    /// Pareto set over the distinct feasible genomes evaluated.
    pub pareto: Vec<FitnessRecord>,
    /// Calls that reached the wrapped evaluator.
    pub evaluations: usize,
}

/// Runs the evolutionary search over genomes of length `n`.
///
/// Offspring slot `s` of generation `g` draws from a generator derived from
/// `(seed, g, s)`, so the run is reproducible for a fixed seed.
pub fn run_search<E: Evaluator>(n: usize, config: &SearchConfig, evaluator: E) -> Result<SearchOutcome> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("genome length must be >= 1".into()));
    }
    let mut memo = Memo::new(evaluator);
    let pop_size = config.population_size;
    let parent_count = pop_size / 2;
    let mut population: Vec<Genome> = (0..pop_size)
        .map(|slot| Genome::random(n, &mut derive_rng(config.seed, &[0, slot as u64])))
        .collect::<Result<_>>()?;
    let mut history = Vec::new();
    let mut best: Option<FitnessRecord> = None;

    for generation in 0..config.iterations {
        let mut records = Vec::with_capacity(pop_size + 1);
        for g in &population {
            let r = evaluate(g, &mut memo, config.objective, config.constraint)?;
            history.push(HistoryEntry { generation, record: r.clone() });
            if r.feasible && best.as_ref().is_none_or(|b| rank_order(&r, b) == Ordering::Less) {
                best = Some(r.clone());
            }
            records.push(r);
        }
        records.extend(best.clone());
        let parents = select(&records, parent_count)?;
        if generation + 1 == config.iterations {
            break;
        }

        let elite = best.as_ref().unwrap_or(&parents[0]);
        let offspring = pop_size - 1;
        let mutants = (config.mutation_portion * offspring as f64).round() as usize;
        let mut next = Vec::with_capacity(pop_size);
        next.push(elite.genome.clone());
        for slot in 0..offspring {
            let mut rng = derive_rng(config.seed, &[generation as u64 + 1, slot as u64]);
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| &parents[rng.random_range(0..parents.len())].genome;
            let child = if slot < mutants {
                let p = pick(&mut rng);
                mutate(p, config.mutation_prob, &mut rng)
            } else {
                let a = pick(&mut rng);
                let b = pick(&mut rng);
                crossover_with(a, b, config.crossover_prob, &mut rng)?
            };
            next.push(child);
        }
        population = next;
    }

    let best = best.ok_or_else(|| Error::NoFeasible("search finished without a feasible genome".into()))?;
    let mut seen = HashMap::new();
    for h in history.iter().filter(|h| h.record.feasible) {
        seen.entry(h.record.genome.clone()).or_insert_with(|| h.record.clone());
    }
    let mut distinct: Vec<FitnessRecord> = seen.into_values().collect();
    distinct.sort_by(rank_order);
    Ok(SearchOutcome {
        best,
        history,
        pareto: pareto_front(&distinct),
        evaluations: memo.inner_calls(),
    })
}

/// Evaluates all `3^n` genomes and returns them feasible-first in rank order.
pub fn enumerate_all<E: Evaluator>(
    n: usize,
    evaluator: E,
    objective: Objective,
    constraint: Option<Constraint>,
) -> Result<Vec<FitnessRecord>> {
    if n == 0 || n > MAX_ENUMERATION_LAYERS {
        return Err(Error::InvalidArgument(format!(
            "enumeration supports 1..={MAX_ENUMERATION_LAYERS} Bayesian layers, got {n}"
        )));
    }
    objective.validate()?;
    let mut memo = Memo::new(evaluator);
    let total = 3usize.pow(n as u32);
    let mut records = (0..total)
        .map(|i| evaluate(&Genome::from_index(i, n), &mut memo, objective, constraint))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| b.feasible.cmp(&a.feasible).then_with(|| rank_order(a, b)));
    Ok(records)
}

const RECORD_HEADER: [&str; 6] = ["genome", "accuracy", "ece", "dropout_count", "feasible", "fitness"];

fn record_fields(r: &FitnessRecord) -> [String; 6] {
    [
        r.genome.to_string(),
        r.accuracy.to_string(),
        r.ece.to_string(),
        r.dropout_count.to_string(),
        r.feasible.to_string(),
        r.fitness.to_string(),
    ]
}

/// `generation,genome,accuracy,ece,dropout_count,feasible,fitness`.
pub fn write_history_csv<W: Write>(history: &[HistoryEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["generation"];
    header.extend(RECORD_HEADER);
    w.write_record(&header)?;
    for h in history {
        let mut row = vec![h.generation.to_string()];
        row.extend(record_fields(&h.record));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `rank,genome,accuracy,ece,dropout_count,feasible,fitness` with 1-based rank.
pub fn write_records_csv<W: Write>(records: &[FitnessRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rank"];
    header.extend(RECORD_HEADER);
    w.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(record_fields(r));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
