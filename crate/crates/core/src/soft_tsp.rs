//! Meta-solver for soft-TSP.
//!
//! Each meta individual is a vertex subset carrying its own TSP sub-solver.
//! Every meta generation trains all sub-solvers for `k_subgens` generations
//! and then evolves the subsets. Sub-populations persist across meta
//! generations; when a subset changes, its tours are repaired rather than
//! reinitialized.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ga::{self, EvalContext, Evaluation, GaConfig, GenomeOps, Individual, Population};
use crate::rng::{derive_stream, tags, GaRng};
use crate::tsp::{greedy_two_approx, path_cost, path_cost_unchecked, random_tours, EuclideanInstance, Tour, TspSolver};

/// Non-negative per-vertex penalty for leaving a vertex out of the path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyMap {
    values: Vec<f64>,
}

impl PenaltyMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("penalties", "must be finite and non-negative"));
        }
        Ok(Self { values })
    }

    /// Negative entries are raised to zero.
    pub fn clamped(values: &[f64]) -> Self {
        Self {
            values: values.iter().map(|p| p.max(0.0)).collect(),
        }
    }

    pub fn uniform(n: usize, p: f64) -> Self {
        Self::clamped(&vec![p; n])
    }

    /// Independent draws from `U[lo, hi]`.
    pub fn random_range(n: usize, lo: f64, hi: f64, seed: u64) -> Self {
        let mut rng = derive_stream(seed, &[tags::PENALTY, n as u64]);
        Self::clamped(&(0..n).map(|_| rng.random_range(lo..=hi)).collect::<Vec<_>>())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: self.values.len(),
            });
        }
        Ok(())
    }

    /// Sum of penalties of vertices whose bit is unset.
    fn skipped(&self, bits: &[bool]) -> f64 {
        self.values
            .iter()
            .zip(bits)
            .filter(|(_, &b)| !b)
            .map(|(p, _)| p)
            .sum()
    }
}

/// `bits[j]` tells whether vertex `j` belongs to the subset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetGenome {
    pub bits: Vec<bool>,
}

impl SubsetGenome {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_subset(n: usize, subset: &[usize]) -> Self {
        let mut bits = vec![false; n];
        for &v in subset {
            bits[v] = true;
        }
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Selected vertex ids in ascending order.
    pub fn subset(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Path length plus the penalties of every vertex not on the path.
pub fn soft_cost(inst: &EuclideanInstance, pen: &PenaltyMap, tour: &Tour) -> Result<f64> {
    pen.check_len(inst.n())?;
    tour.validate(inst.n())?;
    let path = path_cost(inst, tour)?;
    let bits = SubsetGenome::from_subset(inst.n(), &tour.order);
    Ok(path + pen.skipped(&bits.bits))
}

pub fn meta_fitness(cost: f64) -> f64 {
    (-cost).exp()
}

/// Swaps each locus between the two genomes with probability `c`.
pub fn subset_crossover(
    b1: &SubsetGenome,
    b2: &SubsetGenome,
    c: f64,
    rng: &mut GaRng,
) -> Result<(SubsetGenome, SubsetGenome)> {
    if b1.len() != b2.len() {
        return Err(Error::LengthMismatch {
            expected: b1.len(),
            actual: b2.len(),
        });
    }
    let (mut x, mut y) = (b1.clone(), b2.clone());
    for i in 0..x.len() {
        if rng.random::<f64>() < c {
            std::mem::swap(&mut x.bits[i], &mut y.bits[i]);
        }
    }
    Ok((x, y))
}

/// Flips each bit independently with probability `m`.
pub fn subset_mutation(b: &SubsetGenome, m: f64, rng: &mut GaRng) -> SubsetGenome {
    SubsetGenome {
        bits: b.bits.iter().map(|&bit| bit ^ (rng.random::<f64>() < m)).collect(),
    }
}

/// Moves every tour from `old_subset` to `new_subset`: dropped vertices are
/// removed in place, added vertices are inserted at uniform random positions.
/// The returned population carries no evaluations.
pub fn repair_subpopulation(
    sub: &Population<Tour>,
    old_subset: &[usize],
    new_subset: &[usize],
    rng: &mut GaRng,
) -> Population<Tour> {
    let bound = old_subset
        .iter()
        .chain(new_subset)
        .max()
        .map_or(0, |m| m + 1);
    let mut in_old = vec![false; bound];
    let mut in_new = vec![false; bound];
    old_subset.iter().for_each(|&v| in_old[v] = true);
    new_subset.iter().for_each(|&v| in_new[v] = true);
    let added: Vec<usize> = new_subset.iter().copied().filter(|&v| !in_old[v]).collect();

    let tours = sub.members.iter().map(|m| {
        let mut order: Vec<usize> = m.genome.order.iter().copied().filter(|&v| in_new[v]).collect();
        for &v in &added {
            let pos = rng.random_range(0..=order.len());
            order.insert(pos, v);
        }
        Tour { order }
    });
    let mut out = Population::new(tours);
    out.generation = sub.generation;
    out
}

impl TspSolver {
    /// Re-targets the solver at `new_subset` (see [`repair_subpopulation`]).
    /// A population that was trivial is topped up with random permutations.
    pub fn repair(&mut self, new_subset: Vec<usize>, rng: &mut GaRng) {
        let mut pop = repair_subpopulation(&self.population, self.subset(), &new_subset, rng);
        let cfg = *self.config();
        if new_subset.len() > 1 && pop.len() < cfg.min_population {
            for t in random_tours(&new_subset, &cfg, rng).into_iter().skip(pop.len()) {
                pop.push_genome(t);
            }
        }
        self.replace_population(new_subset, pop);
    }
}

/// Genome of a meta individual: the subset plus the sub-solver working on it.
#[derive(Clone, Debug)]
pub struct MetaGenome {
    pub subset: SubsetGenome,
    pub solver: TspSolver,
    /// Soft cost of the sub-solver's best tour at the last evaluation.
    pub best_cost: f64,
}

impl MetaGenome {
    /// Best tour of the sub-solver and its soft cost under `pen`.
    pub fn best_solution(&self, inst: &EuclideanInstance, pen: &PenaltyMap) -> (Tour, f64) {
        let (tour, _) = self.solver.best();
        let cost = path_cost_unchecked(inst, &tour.order) + pen.skipped(&self.subset.bits);
        (tour, cost)
    }
}

pub type MetaIndividual = Individual<MetaGenome>;

/// Two-level configuration shared by both hierarchical solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierConfig {
    pub meta: GaConfig,
    pub sub: GaConfig,
    /// Sub-solver generations per meta generation.
    pub k_subgens: usize,
    pub meta_generations: usize,
}

impl HierConfig {
    /// Soft-TSP defaults: meta 100/20, m=0.2, c'=0.5, c=0.5, percentile 50;
    /// sub-solver 200/50, m=0.02, c'=0.7, c=0.5, softmax; 50 sub-generations.
    pub fn soft_tsp(seed: u64) -> Self {
        Self {
            meta: GaConfig::soft_tsp_meta().with_seed(seed),
            sub: GaConfig::tsp_solver().with_seed(seed),
            k_subgens: 50,
            meta_generations: 30,
        }
    }

    /// Regression defaults: meta 100/20, m=0.2, c'=0.5, c=0.5, percentile 50;
    /// sub-solver 500/100, m=0.2, c'=0.7, c=0.5, tournament; 200 sub-generations.
    pub fn regression(seed: u64) -> Self {
        Self {
            meta: GaConfig::regression_meta().with_seed(seed),
            sub: GaConfig::regression_solver().with_seed(seed),
            k_subgens: 200,
            meta_generations: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        self.sub.validate()?;
        if self.k_subgens == 0 {
            return Err(invalid("k_subgens", "must be at least 1"));
        }
        Ok(())
    }
}

/// One row of a meta-level learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaRow {
    pub generation: u64,
    /// Best cost known so far under the penalties active in this generation.
    pub best_cost: f64,
    /// Best member cost of this generation.
    pub generation_best_cost: f64,
    pub mean_cost: f64,
    pub population_size: usize,
    pub phase: String,
    /// Best cost known so far under the target penalties.
    pub target_best_cost: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaHistory {
    pub rows: Vec<MetaRow>,
    /// Double-tree cost over the full vertex set.
    pub baseline_cost: f64,
}

#[derive(Clone, Debug)]
pub struct SoftTspOutcome {
    pub best_tour: Tour,
    /// Soft cost of `best_tour` under the target penalties.
    pub best_cost: f64,
    pub history: MetaHistory,
}

/// [`GenomeOps`] for meta individuals.
pub struct SoftTspOps<'a> {
    pub inst: &'a EuclideanInstance,
    pub pen: PenaltyMap,
    pub sub_cfg: GaConfig,
    pub k_subgens: usize,
    pub seed: u64,
}

impl SoftTspOps<'_> {
    fn child(&self, parent: &MetaGenome, subset: SubsetGenome, rng: &mut GaRng) -> MetaGenome {
        let mut solver = parent.solver.clone();
        if subset != parent.subset {
            solver.repair(subset.subset(), rng);
        }
        MetaGenome {
            subset,
            solver,
            best_cost: f64::INFINITY,
        }
    }
}

impl GenomeOps for SoftTspOps<'_> {
    type Genome = MetaGenome;

    /// Children inherit the sub-population of the fitter parent.
    fn crossover(&self, a: &MetaGenome, b: &MetaGenome, point_prob: f64, rng: &mut GaRng) -> Vec<MetaGenome> {
        let (x, y) = subset_crossover(&a.subset, &b.subset, point_prob, rng).expect("equal lengths");
        let parent = if b.best_cost < a.best_cost { b } else { a };
        vec![self.child(parent, x, rng), self.child(parent, y, rng)]
    }

    fn mutate(&self, genome: &MetaGenome, rate: f64, rng: &mut GaRng) -> MetaGenome {
        let bits = subset_mutation(&genome.subset, rate, rng);
        let mut child = self.child(genome, bits, rng);
        child.best_cost = genome.best_cost;
        child
    }

    fn evaluate(&self, genome: &mut MetaGenome, ctx: EvalContext) -> Evaluation {
        let mut rng = derive_stream(self.seed, &[tags::TRAIN, ctx.id, ctx.generation]);
        genome
            .solver
            .train(self.inst, self.k_subgens, &mut rng)
            .expect("sub-solver population is non-empty");
        let (_, cost) = genome.best_solution(self.inst, &self.pen);
        genome.best_cost = cost;
        Evaluation {
            fitness: meta_fitness(cost),
            cost,
        }
    }

    fn retrains_survivors(&self) -> bool {
        true
    }

    fn parallel(&self) -> bool {
        true
    }
}

/// Stateful driver shared by the plain, adaptive and constraint-switch runs.
pub struct SoftTspRun<'a> {
    ops: SoftTspOps<'a>,
    target: PenaltyMap,
    cfg: HierConfig,
    pub population: Population<MetaGenome>,
    rng: GaRng,
    best: (Tour, f64),
    target_best: (Tour, f64),
    phase: String,
    started: Instant,
    pub history: MetaHistory,
}

impl<'a> SoftTspRun<'a> {
    /// Builds the initial meta population (uniform random subsets) and trains
    /// every sub-solver once under `active` penalties.
    pub fn new(
        inst: &'a EuclideanInstance,
        target: &PenaltyMap,
        active: PenaltyMap,
        cfg: &HierConfig,
        phase: &str,
    ) -> Result<Self> {
        cfg.validate()?;
        target.check_len(inst.n())?;
        active.check_len(inst.n())?;
        let started = Instant::now();
        let seed = cfg.meta.seed;
        let mut init_rng = derive_stream(seed, &[tags::INIT]);
        let genomes: Vec<MetaGenome> = (0..cfg.meta.initial_population)
            .map(|i| {
                let bits: Vec<bool> = (0..inst.n()).map(|_| init_rng.random::<bool>()).collect();
                let subset = SubsetGenome::new(bits);
                let mut rng = derive_stream(seed, &[tags::INIT, i as u64]);
                let solver = TspSolver::new(inst, &subset.subset(), &cfg.sub, &mut rng)
                    .expect("subset ids are in range");
                MetaGenome {
                    subset,
                    solver,
                    best_cost: f64::INFINITY,
                }
            })
            .collect();
        let baseline = greedy_two_approx(inst, &inst.all_vertices())?;
        let baseline_cost = path_cost_unchecked(inst, &baseline.order);
        let empty_target = (Tour::default(), target.values().iter().sum());
        let empty_active = (Tour::default(), active.values().iter().sum());

        let ops = SoftTspOps {
            inst,
            pen: active,
            sub_cfg: cfg.sub,
            k_subgens: cfg.k_subgens,
            seed,
        };
        let mut run = Self {
            ops,
            target: target.clone(),
            cfg: *cfg,
            population: Population::new(genomes),
            rng: derive_stream(seed, &[tags::STEP]),
            best: empty_active,
            target_best: empty_target,
            phase: phase.to_string(),
            started,
            history: MetaHistory {
                rows: Vec::new(),
                baseline_cost,
            },
        };
        ga::evaluate_pending(&mut run.population, &run.ops);
        run.record();
        Ok(run)
    }

    pub fn config(&self) -> &HierConfig {
        &self.cfg
    }

    pub fn active_penalties(&self) -> &PenaltyMap {
        &self.ops.pen
    }

    /// Best tour and soft cost under the active penalties.
    pub fn best(&self) -> &(Tour, f64) {
        &self.best
    }

    /// Best tour and soft cost under the target penalties.
    pub fn target_best(&self) -> &(Tour, f64) {
        &self.target_best
    }

    /// Switches the active penalties and rescores every member against them.
    pub fn set_penalties(&mut self, pen: PenaltyMap, phase: &str) {
        let inst = self.ops.inst;
        self.ops.pen = pen;
        self.phase = phase.to_string();
        let pen = &self.ops.pen;
        let rescore = |m: &mut MetaIndividual| {
            let (_, cost) = m.genome.best_solution(inst, pen);
            m.genome.best_cost = cost;
            m.eval = Some(Evaluation {
                fitness: meta_fitness(cost),
                cost,
            });
        };
        self.population.members.iter_mut().for_each(rescore);
        if let Some(elite) = self.population.best_ever.as_mut() {
            rescore(elite);
        }
        self.population.best_ever = None;
        self.population.update_best_ever();
        let old = self.best.0.clone();
        let cost = soft_cost(inst, pen, &old).expect("valid tour");
        self.best = (old, cost);
    }

    /// One meta generation: evolve subsets, then train every sub-solver.
    pub fn step(&mut self) -> Result<()> {
        ga::step_generation(&mut self.population, &self.ops, &self.cfg.meta, &mut self.rng)?;
        self.record();
        Ok(())
    }

    fn record(&mut self) {
        let inst = self.ops.inst;
        let mut gen_best = f64::INFINITY;
        let mut mean = 0.0;
        for m in &self.population.members {
            let (tour, cost) = m.genome.best_solution(inst, &self.ops.pen);
            mean += cost;
            gen_best = gen_best.min(cost);
            if cost < self.best.1 {
                self.best = (tour.clone(), cost);
            }
            let target_cost = path_cost_unchecked(inst, &tour.order) + self.target.skipped(&m.genome.subset.bits);
            if target_cost < self.target_best.1 {
                self.target_best = (tour, target_cost);
            }
        }
        mean /= self.population.len() as f64;
        self.history.rows.push(MetaRow {
            generation: self.population.generation,
            best_cost: self.best.1,
            generation_best_cost: gen_best,
            mean_cost: mean,
            population_size: self.population.len(),
            phase: self.phase.clone(),
            target_best_cost: self.target_best.1,
            wall_ms: self.started.elapsed().as_millis() as u64,
        });
    }

    pub fn into_outcome(self) -> SoftTspOutcome {
        SoftTspOutcome {
            best_tour: self.target_best.0,
            best_cost: self.target_best.1,
            history: self.history,
        }
    }
}

/// Hierarchical GA for soft-TSP with fixed penalties.
pub fn run_hierarchical(inst: &EuclideanInstance, pen: &PenaltyMap, cfg: &HierConfig) -> Result<SoftTspOutcome> {
    let mut run = SoftTspRun::new(inst, pen, pen.clone(), cfg, "target")?;
    for _ in 0..cfg.meta_generations {
        run.step()?;
    }
    Ok(run.into_outcome())
}

/// Penalty schedule that starts every vertex at the maximum penalty and
/// moves each one linearly toward its target, reaching it after
/// `n_steps / 2` steps and continuing past it afterwards. Entries are
/// returned unclamped and may be negative; `n_steps + 1` maps in total.
pub fn adaptive_penalty_schedule(pen: &PenaltyMap, n_steps: usize) -> Result<Vec<Vec<f64>>> {
    if n_steps < 1 {
        return Err(invalid("n_steps", "must be at least 1"));
    }
    let max = pen.max();
    let half = n_steps as f64 / 2.0;
    let diff: Vec<f64> = pen.values().iter().map(|p| (max - p) / half).collect();
    let mut current = vec![max; pen.len()];
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(current.clone());
    for _ in 0..n_steps {
        for (c, d) in current.iter_mut().zip(&diff) {
            *c -= d;
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Meta generations without improvement after which the final phase of
/// [`run_adaptive`] stops.
pub const CONVERGENCE_PATIENCE: usize = 10;

/// Trains two meta generations on each of the first `n_steps` scheduled
/// penalty maps (negative entries clamped to zero), then switches to the
/// target penalties until convergence or until `cfg.meta_generations`
/// generations have been spent in total.
pub fn run_adaptive(
    inst: &EuclideanInstance,
    pen: &PenaltyMap,
    cfg: &HierConfig,
    n_steps: usize,
) -> Result<SoftTspOutcome> {
    let schedule = adaptive_penalty_schedule(pen, n_steps)?;
    let budget = cfg.meta_generations;
    let mut run = SoftTspRun::new(inst, pen, PenaltyMap::clamped(&schedule[0]), cfg, "schedule_0")?;
    let mut spent = 0;
    for (i, entry) in schedule.iter().take(n_steps).enumerate() {
        if i > 0 {
            run.set_penalties(PenaltyMap::clamped(entry), &format!("schedule_{i}"));
        }
        for _ in 0..2 {
            if spent < budget {
                run.step()?;
                spent += 1;
            }
        }
    }
    run.set_penalties(pen.clone(), "target");
    let mut since_improvement = 0;
    while spent < budget && since_improvement < CONVERGENCE_PATIENCE {
        let before = run.best().1;
        run.step()?;
        spent += 1;
        if run.best().1 < before {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
    }
    Ok(run.into_outcome())
}

pub const SWITCH_HIGH_COUNT: usize = 20;
pub const SWITCH_HIGH_PENALTY: f64 = 10.0;
pub const SWITCH_LOW_PENALTY: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchCurve {
    pub t: usize,
    /// Rows after each post-switch meta generation (`total_gens - t` of them).
    pub rows: Vec<MetaRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub high_before: Vec<usize>,
    pub high_after: Vec<usize>,
    pub penalties_before: PenaltyMap,
    pub penalties_after: PenaltyMap,
    pub curves: Vec<SwitchCurve>,
}

fn high_low(n: usize, high: &[usize]) -> PenaltyMap {
    let mut v = vec![SWITCH_LOW_PENALTY; n];
    for &h in high {
        v[h] = SWITCH_HIGH_PENALTY;
    }
    PenaltyMap::clamped(&v)
}

/// Trains `t` meta generations with 20 random vertices at penalty 10 (0.1
/// elsewhere), redraws the high-penalty set and trains the remaining
/// `total_gens - t` generations. One post-switch curve per requested `t`;
/// `t = 0` is a fresh start on the second penalty map.
pub fn constraint_switch_experiment(
    inst: &EuclideanInstance,
    ts: &[usize],
    total_gens: usize,
    cfg: &HierConfig,
) -> Result<SwitchReport> {
    let n = inst.n();
    if n < SWITCH_HIGH_COUNT {
        return Err(invalid(
            "n",
            format!("constraint switch needs at least {SWITCH_HIGH_COUNT} vertices, got {n}"),
        ));
    }
    if let Some(&t) = ts.iter().find(|&&t| t > total_gens) {
        return Err(invalid("t", format!("{t} exceeds total generations {total_gens}")));
    }
    let mut rng = derive_stream(cfg.meta.seed, &[tags::SWITCH]);
    let mut draw = || {
        let mut v = index::sample(&mut rng, n, SWITCH_HIGH_COUNT).into_vec();
        v.sort_unstable();
        v
    };
    let high_before = draw();
    let high_after = draw();
    let before = high_low(n, &high_before);
    let after = high_low(n, &high_after);

    let mut curves = Vec::with_capacity(ts.len());
    for &t in ts {
        let label = format!("t={t}");
        let mut run = if t == 0 {
            SoftTspRun::new(inst, &after, after.clone(), cfg, &label)?
        } else {
            let mut run = SoftTspRun::new(inst, &after, before.clone(), cfg, "pre_switch")?;
            for _ in 0..t {
                run.step()?;
            }
            run.set_penalties(after.clone(), &label);
            run
        };
        let skip = run.history.rows.len();
        for _ in t..total_gens {
            run.step()?;
        }
        curves.push(SwitchCurve {
            t,
            rows: run.history.rows.split_off(skip),
        });
    }
    Ok(SwitchReport {
        high_before,
        high_after,
        penalties_before: before,
        penalties_after: after,
        curves,
    })
}
