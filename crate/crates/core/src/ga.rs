//! Single-level genetic-algorithm engine.
//!
//! The engine is generic over the genotype through [`GenomeOps`]. A
//! generation consists of selection, crossover of selected individuals with
//! random partners, mutation of every selected individual, refilling the
//! population up to its floor, and evaluating everything that changed.
//!
//! Selection ranks individuals by fitness (higher is better). Equal fitness
//! falls back to lower cost, then to lower id, so every selection is a
//! deterministic function of the random stream.

use std::cmp::Ordering;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{derive_stream, tags, GaRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    Random,
    Softmax,
    Percentile,
    Tournament,
}

/// Selection strategy and its parameters. Only the parameters relevant to
/// `kind` are read.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSpec {
    pub kind: SelectionKind,
    /// Percentile selection keeps the top `percentile`% of the population.
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    /// Fraction of the population sampled in each tournament round.
    #[serde(default = "default_sample_fraction")]
    pub sample_fraction: f64,
    /// Fraction of the population retained by random, softmax and tournament selection.
    #[serde(default = "default_keep_fraction")]
    pub keep_fraction: f64,
}

fn default_percentile() -> f64 {
    50.0
}
fn default_sample_fraction() -> f64 {
    0.10
}
fn default_keep_fraction() -> f64 {
    0.5
}

impl SelectionSpec {
    pub fn new(kind: SelectionKind) -> Self {
        Self {
            kind,
            percentile: default_percentile(),
            sample_fraction: default_sample_fraction(),
            keep_fraction: default_keep_fraction(),
        }
    }

    pub fn random() -> Self {
        Self::new(SelectionKind::Random)
    }

    pub fn softmax() -> Self {
        Self::new(SelectionKind::Softmax)
    }

    pub fn percentile(p: f64) -> Self {
        Self {
            percentile: p,
            ..Self::new(SelectionKind::Percentile)
        }
    }

    pub fn tournament() -> Self {
        Self::new(SelectionKind::Tournament)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SelectionKind::Percentile => {
                if !(self.percentile > 0.0 && self.percentile <= 100.0) {
                    return Err(invalid("selection.percentile", format!("{} not in (0, 100]", self.percentile)));
                }
            }
            SelectionKind::Tournament => {
                if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
                    return Err(invalid(
                        "selection.sample_fraction",
                        format!("{} not in (0, 1]", self.sample_fraction),
                    ));
                }
            }
            _ => {}
        }
        if self.kind != SelectionKind::Percentile
            && !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0)
        {
            return Err(invalid("selection.keep_fraction", format!("{} not in (0, 1]", self.keep_fraction)));
        }
        Ok(())
    }

    /// Number of individuals retained from a population of `basis` members.
    pub fn retained(&self, basis: usize) -> usize {
        let frac = match self.kind {
            SelectionKind::Percentile => self.percentile / 100.0,
            _ => self.keep_fraction,
        };
        ((frac * basis as f64).ceil() as usize).clamp(1, basis.max(1))
    }
}

/// Population sizes, operator rates and selection strategy of one GA level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub initial_population: usize,
    pub min_population: usize,
    /// Per-locus mutation probability `m`.
    pub mutation_rate: f64,
    /// Per-individual crossover probability `c'`.
    pub crossover_rate: f64,
    /// Per-locus exchange probability `c` inside a crossover.
    pub point_crossover_prob: f64,
    pub selection: SelectionSpec,
    pub seed: u64,
}

impl GaConfig {
    /// Meta-solver for soft-TSP: 100/20, m=0.2, c'=0.5, c=0.5, percentile 50.
    pub fn soft_tsp_meta() -> Self {
        Self {
            initial_population: 100,
            min_population: 20,
            mutation_rate: 0.2,
            crossover_rate: 0.5,
            point_crossover_prob: 0.5,
            selection: SelectionSpec::percentile(50.0),
            seed: 0,
        }
    }

    /// TSP sub-solver: 200/50, m=0.02, c'=0.7, c=0.5, softmax selection.
    pub fn tsp_solver() -> Self {
        Self {
            initial_population: 200,
            min_population: 50,
            mutation_rate: 0.02,
            crossover_rate: 0.7,
            point_crossover_prob: 0.5,
            selection: SelectionSpec::softmax(),
            seed: 0,
        }
    }

    /// Meta-solver for regression: 100/20, m=0.2, c'=0.5, c=0.5, percentile 50.
    pub fn regression_meta() -> Self {
        Self::soft_tsp_meta()
    }

    /// Polynomial regression sub-solver: 500/100, m=0.2, c'=0.7, c=0.5,
    /// random tournament keeping half.
    pub fn regression_solver() -> Self {
        Self {
            initial_population: 500,
            min_population: 100,
            mutation_rate: 0.2,
            crossover_rate: 0.7,
            point_crossover_prob: 0.5,
            selection: SelectionSpec::tournament(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
            ("point_crossover_prob", self.point_crossover_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("{v} not in [0, 1]")));
            }
        }
        if self.initial_population == 0 {
            return Err(invalid("initial_population", "must be positive"));
        }
        if self.min_population == 0 {
            return Err(invalid("min_population", "must be positive"));
        }
        if self.min_population > self.initial_population {
            return Err(invalid(
                "min_population",
                format!(
                    "{} exceeds initial_population {}",
                    self.min_population, self.initial_population
                ),
            ));
        }
        self.selection.validate()
    }
}

/// Result of evaluating one genome. `cost` is the domain quantity being
/// minimized; `fitness` drives selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct Individual<G> {
    pub genome: G,
    pub eval: Option<Evaluation>,
    pub id: u64,
}

impl<G> Individual<G> {
    pub fn fitness(&self) -> Option<f64> {
        self.eval.map(|e| e.fitness)
    }

    pub fn cost(&self) -> Option<f64> {
        self.eval.map(|e| e.cost)
    }
}

/// Ordering where `Less` means `a` ranks ahead of `b`.
pub fn rank_cmp<G>(a: &Individual<G>, b: &Individual<G>) -> Ordering {
    match (a.eval, b.eval) {
        (Some(ea), Some(eb)) => eb
            .fitness
            .total_cmp(&ea.fitness)
            .then(ea.cost.total_cmp(&eb.cost))
            .then(a.id.cmp(&b.id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.id.cmp(&b.id),
    }
}

#[derive(Clone, Debug)]
pub struct Population<G> {
    pub members: Vec<Individual<G>>,
    pub generation: u64,
    /// Best individual seen so far; re-inserted verbatim if it drops out.
    pub best_ever: Option<Individual<G>>,
    next_id: u64,
}

impl<G: Clone> Population<G> {
    pub fn new(genomes: impl IntoIterator<Item = G>) -> Self {
        let members: Vec<_> = genomes
            .into_iter()
            .enumerate()
            .map(|(i, genome)| Individual {
                genome,
                eval: None,
                id: i as u64,
            })
            .collect();
        let next_id = members.len() as u64;
        Self {
            members,
            generation: 0,
            best_ever: None,
            next_id,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Appends an unevaluated individual and returns its id.
    pub fn push_genome(&mut self, genome: G) -> u64 {
        let id = self.fresh_id();
        self.members.push(Individual {
            genome,
            eval: None,
            id,
        });
        id
    }

    /// Appends an individual with a known evaluation and returns its id.
    pub fn push_evaluated(&mut self, genome: G, eval: Option<Evaluation>) -> u64 {
        let id = self.push_genome(genome);
        self.members.last_mut().expect("just pushed").eval = eval;
        id
    }

    /// Best evaluated member of the current generation.
    pub fn best(&self) -> Option<&Individual<G>> {
        self.members
            .iter()
            .filter(|m| m.eval.is_some())
            .min_by(|a, b| rank_cmp(a, b))
    }

    pub fn invalidate(&mut self) {
        for m in &mut self.members {
            m.eval = None;
        }
        self.best_ever = None;
    }

    /// Refreshes `best_ever` from the current members.
    pub fn update_best_ever(&mut self) {
        let Some(best) = self.best() else { return };
        let replace = match &self.best_ever {
            None => true,
            // Stateful genomes change in place; keep the snapshot current.
            Some(prev) if prev.id == best.id => true,
            Some(prev) => {
                let (b, p) = (best.eval.unwrap(), prev.eval.unwrap());
                b.fitness > p.fitness || (b.fitness == p.fitness && b.cost < p.cost)
            }
        };
        if replace {
            self.best_ever = Some(best.clone());
        }
    }
}

/// Context handed to [`GenomeOps::evaluate`]; stateful genomes derive their
/// private random stream from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalContext {
    pub id: u64,
    pub generation: u64,
}

/// Problem-specific operators plugged into the engine.
pub trait GenomeOps: Sync {
    type Genome: Clone + Send + Sync;

    /// Produces one or more offspring; `point_prob` is the per-locus exchange probability.
    fn crossover(
        &self,
        a: &Self::Genome,
        b: &Self::Genome,
        point_prob: f64,
        rng: &mut GaRng,
    ) -> Vec<Self::Genome>;

    fn mutate(&self, genome: &Self::Genome, rate: f64, rng: &mut GaRng) -> Self::Genome;

    /// Evaluates a genome. Stateful genomes (those that carry a sub-solver)
    /// may advance their internal state here.
    fn evaluate(&self, genome: &mut Self::Genome, ctx: EvalContext) -> Evaluation;

    /// When true, survivors are re-evaluated every generation instead of
    /// keeping their cached evaluation.
    fn retrains_survivors(&self) -> bool {
        false
    }

    /// True when `a` and `b` are known to evaluate identically; lets the
    /// engine copy a parent's evaluation to an unchanged child.
    fn same_genome(&self, _a: &Self::Genome, _b: &Self::Genome) -> bool {
        false
    }

    /// When true, pending evaluations run on the rayon pool.
    fn parallel(&self) -> bool {
        false
    }
}

fn check_evaluated<G>(members: &[Individual<G>]) -> Result<()> {
    if members.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if members.iter().any(|m| m.eval.is_none()) {
        return Err(Error::UnevaluatedIndividual);
    }
    Ok(())
}

/// Selects `spec.retained(basis)` members and returns their indices.
pub fn select_indices<G>(
    members: &[Individual<G>],
    spec: &SelectionSpec,
    basis: usize,
    rng: &mut GaRng,
) -> Result<Vec<usize>> {
    check_evaluated(members)?;
    let n = members.len();
    let count = spec.retained(basis.min(n));
    let picked = match spec.kind {
        SelectionKind::Random => (0..count).map(|_| rng.random_range(0..n)).collect(),
        SelectionKind::Softmax => {
            let max = members
                .iter()
                .map(|m| m.eval.unwrap().fitness)
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = members
                .iter()
                .map(|m| (m.eval.unwrap().fitness - max).exp())
                .collect();
            let dist = WeightedIndex::new(&weights).expect("max-shifted weights contain a 1");
            (0..count).map(|_| dist.sample(rng)).collect()
        }
        SelectionKind::Percentile => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| rank_cmp(&members[a], &members[b]));
            order.truncate(count);
            order
        }
        SelectionKind::Tournament => {
            let sample = ((spec.sample_fraction * n as f64).ceil() as usize).max(1);
            // rank_cmp is a total order, so comparing precomputed ranks is equivalent.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| rank_cmp(&members[a], &members[b]));
            let mut rank = vec![0usize; n];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r;
            }
            let mut remaining: Vec<usize> = (0..n).collect();
            let mut out = Vec::with_capacity(count);
            while out.len() < count && !remaining.is_empty() {
                let k = sample.min(remaining.len());
                // Partial Fisher-Yates: the first k slots become the round's sample.
                for i in 0..k {
                    let j = rng.random_range(i as u32..remaining.len() as u32) as usize;
                    remaining.swap(i, j);
                }
                let winner = (0..k).min_by_key(|&a| rank[remaining[a]]).unwrap();
                out.push(remaining.swap_remove(winner));
            }
            out
        }
    };
    Ok(picked)
}

/// Selects individuals from `pop` according to `spec`. With-replacement
/// strategies may return the same individual more than once.
pub fn select<G: Clone>(
    pop: &Population<G>,
    spec: &SelectionSpec,
    rng: &mut GaRng,
) -> Result<Vec<Individual<G>>> {
    let idx = select_indices(&pop.members, spec, pop.len(), rng)?;
    Ok(idx.into_iter().map(|i| pop.members[i].clone()).collect())
}

/// Appends `mutate(crossover(best, random member))` offspring until the
/// population reaches `cfg.min_population`.
pub fn maintain_floor<O: GenomeOps>(
    pop: &mut Population<O::Genome>,
    best: &Individual<O::Genome>,
    ops: &O,
    cfg: &GaConfig,
    rng: &mut GaRng,
) {
    while pop.len() < cfg.min_population {
        let children = if pop.is_empty() {
            vec![best.genome.clone()]
        } else {
            let partner = rng.random_range(0..pop.len());
            ops.crossover(
                &best.genome,
                &pop.members[partner].genome,
                cfg.point_crossover_prob,
                rng,
            )
        };
        for child in children {
            if pop.len() >= cfg.min_population {
                break;
            }
            let mutant = ops.mutate(&child, cfg.mutation_rate, rng);
            pop.push_genome(mutant);
        }
    }
}

/// Evaluates every member without a cached evaluation and refreshes `best_ever`.
pub fn evaluate_pending<O: GenomeOps>(pop: &mut Population<O::Genome>, ops: &O) {
    let generation = pop.generation;
    let eval_one = |m: &mut Individual<O::Genome>| {
        if m.eval.is_none() {
            let ctx = EvalContext { id: m.id, generation };
            let e = ops.evaluate(&mut m.genome, ctx);
            debug_assert!(e.fitness.is_finite(), "non-finite fitness {e:?}");
            m.eval = Some(e);
        }
    };
    if ops.parallel() {
        pop.members.par_iter_mut().for_each(eval_one);
    } else {
        pop.members.iter_mut().for_each(eval_one);
    }
    pop.update_best_ever();
}

fn inherited_eval<O: GenomeOps>(
    ops: &O,
    child: &O::Genome,
    parents: &[&Individual<O::Genome>],
) -> Option<Evaluation> {
    if ops.retrains_survivors() {
        return None;
    }
    parents
        .iter()
        .find(|p| ops.same_genome(child, &p.genome))
        .and_then(|p| p.eval)
}

/// Advances `pop` by one generation.
pub fn step_generation<O: GenomeOps>(
    pop: &mut Population<O::Genome>,
    ops: &O,
    cfg: &GaConfig,
    rng: &mut GaRng,
) -> Result<()> {
    check_evaluated(&pop.members)?;
    // The retained count is computed against at most the initial size;
    // otherwise each generation would grow the population geometrically.
    let basis = pop.len().min(cfg.initial_population);
    let picked = select_indices(&pop.members, &cfg.selection, basis, rng)?;

    let mut slots: Vec<Option<Individual<O::Genome>>> =
        std::mem::take(&mut pop.members).into_iter().map(Some).collect();
    let mut first_pos: Vec<Option<usize>> = vec![None; slots.len()];
    let mut selected: Vec<Individual<O::Genome>> = Vec::with_capacity(picked.len());
    for i in picked {
        match first_pos[i] {
            None => {
                first_pos[i] = Some(selected.len());
                selected.push(slots[i].take().unwrap());
            }
            Some(pos) => {
                let mut dup = selected[pos].clone();
                dup.id = pop.fresh_id();
                selected.push(dup);
            }
        }
    }
    drop(slots);

    let best = selected
        .iter()
        .min_by(|a, b| rank_cmp(a, b))
        .cloned()
        .expect("selection returns at least one individual");

    let s = selected.len();
    let mut offspring = Vec::new();
    for i in 0..s {
        if rng.random::<f64>() < cfg.crossover_rate {
            let j = if s > 1 {
                let j = rng.random_range(0..s - 1);
                if j >= i {
                    j + 1
                } else {
                    j
                }
            } else {
                i
            };
            let (a, b) = (&selected[i], &selected[j]);
            for child in ops.crossover(&a.genome, &b.genome, cfg.point_crossover_prob, rng) {
                let eval = inherited_eval(ops, &child, &[a, b]);
                offspring.push((child, eval));
            }
        }
    }
    let mutants: Vec<_> = selected
        .iter()
        .map(|ind| {
            let child = ops.mutate(&ind.genome, cfg.mutation_rate, rng);
            let eval = inherited_eval(ops, &child, &[ind]);
            (child, eval)
        })
        .collect();

    pop.members = selected;
    for (g, eval) in offspring.into_iter().chain(mutants) {
        pop.push_evaluated(g, eval);
    }
    maintain_floor(pop, &best, ops, cfg, rng);

    if let Some(elite) = &pop.best_ever {
        if !pop.members.iter().any(|m| m.id == elite.id) {
            let elite = elite.clone();
            pop.members.push(elite);
        }
    }
    if ops.retrains_survivors() {
        for m in &mut pop.members {
            m.eval = None;
        }
    }
    pop.generation += 1;
    evaluate_pending(pop, ops);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u64,
    pub best_fitness: f64,
    pub best_cost: f64,
    pub best_ever_fitness: f64,
    pub best_ever_cost: f64,
    pub mean_fitness: f64,
    pub mean_cost: f64,
    pub population_size: usize,
}

impl GenerationStats {
    pub fn of<G: Clone>(pop: &Population<G>) -> Self {
        let best = pop.best().and_then(|b| b.eval);
        let ever = pop.best_ever.as_ref().and_then(|b| b.eval).or(best);
        // Running means; fitness values can be close to f64::MAX.
        let (mut mf, mut mc, mut k) = (0.0, 0.0, 0.0);
        for e in pop.members.iter().filter_map(|m| m.eval) {
            k += 1.0;
            mf += (e.fitness - mf) / k;
            mc += (e.cost - mc) / k;
        }
        Self {
            generation: pop.generation,
            best_fitness: best.map_or(f64::NAN, |e| e.fitness),
            best_cost: best.map_or(f64::NAN, |e| e.cost),
            best_ever_fitness: ever.map_or(f64::NAN, |e| e.fitness),
            best_ever_cost: ever.map_or(f64::NAN, |e| e.cost),
            mean_fitness: mf,
            mean_cost: mc,
            population_size: pop.len(),
        }
    }
}

pub type History = Vec<GenerationStats>;

/// Runs `generations` generations with the random stream derived from `cfg.seed`.
pub fn run<O: GenomeOps>(
    pop: &mut Population<O::Genome>,
    ops: &O,
    cfg: &GaConfig,
    generations: usize,
) -> Result<History> {
    let mut rng = derive_stream(cfg.seed, &[tags::STEP]);
    run_with_rng(pop, ops, cfg, generations, &mut rng)
}

/// Evaluates pending members, then runs `generations` generations on `rng`.
/// The returned history starts with a snapshot of the incoming population.
pub fn run_with_rng<O: GenomeOps>(
    pop: &mut Population<O::Genome>,
    ops: &O,
    cfg: &GaConfig,
    generations: usize,
    rng: &mut GaRng,
) -> Result<History> {
    if pop.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    evaluate_pending(pop, ops);
    let mut history = Vec::with_capacity(generations + 1);
    history.push(GenerationStats::of(pop));
    for _ in 0..generations {
        step_generation(pop, ops, cfg, rng)?;
        history.push(GenerationStats::of(pop));
    }
    Ok(history)
}
