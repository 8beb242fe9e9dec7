//! Meta-solver over the hyperparameters of the regression objective.
//!
//! Each meta individual carries `(λ1, λ2, d, γ)` and a coefficient GA that
//! minimizes the composite objective those values define. The meta level only
//! sees the score a black-box oracle gives to the predictions of each
//! individual's best model.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ga::{self, EvalContext, Evaluation, GenomeOps, Individual, Population};
use crate::regression::{huber_loss, weighted_loss, Dataset, LossKind, LossParams, PolynomialModel, RegionWeight, RegressionSolver};
use crate::rng::{derive_stream, tags, GaRng};
use crate::soft_tsp::HierConfig;

pub const LAMBDA1_STD: f64 = 0.5;
pub const LAMBDA2_STD: f64 = 0.1;
pub const GAMMA_STD: f64 = 0.1;

/// Largest degree drawn for the initial population.
pub const INITIAL_MAX_DEGREE: usize = 8;

/// Objective hyperparameters: quantile weight `lambda1`, L2 weight
/// `lambda2`, polynomial degree and quantile level `gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGenome {
    pub lambda1: f64,
    pub lambda2: f64,
    pub degree: usize,
    pub gamma: f64,
}

impl HyperGenome {
    pub fn new(lambda1: f64, lambda2: f64, degree: usize, gamma: f64) -> Result<Self> {
        let h = Self {
            lambda1,
            lambda2,
            degree,
            gamma,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(invalid("lambda1", format!("{} must be finite and >= 0", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(invalid("lambda2", format!("{} must be finite and >= 0", self.lambda2)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma", format!("{} not in [0, 1]", self.gamma)));
        }
        Ok(())
    }

    fn clamped(self) -> Self {
        Self {
            lambda1: self.lambda1.max(0.0),
            lambda2: self.lambda2.max(0.0),
            degree: self.degree,
            gamma: self.gamma.clamp(0.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Huber { delta: f64 },
    WeightedHuber { delta: f64, weights: RegionWeight },
}

/// Hidden objective: a loss of predictions against the truth targets.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSpec {
    kind: OracleKind,
    truth: Dataset,
}

impl OracleSpec {
    pub fn new(kind: OracleKind, truth: Dataset) -> Result<Self> {
        let delta = match &kind {
            OracleKind::Huber { delta } => *delta,
            OracleKind::WeightedHuber { delta, weights } => {
                weights.validate()?;
                *delta
            }
        };
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("{delta} must be positive")));
        }
        Ok(Self { kind, truth })
    }

    pub fn huber(truth: Dataset, delta: f64) -> Result<Self> {
        Self::new(OracleKind::Huber { delta }, truth)
    }

    pub fn weighted_huber(truth: Dataset, delta: f64, weights: RegionWeight) -> Result<Self> {
        Self::new(OracleKind::WeightedHuber { delta, weights }, truth)
    }
}

/// The only view of the oracle the meta-solver gets.
pub trait CostOracle: Sync {
    /// Number of predictions expected per submission.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cost(&self, pred: &[f64]) -> Result<f64>;

    /// Short label written to learning-curve rows.
    fn tag(&self) -> &'static str;
}

impl CostOracle for OracleSpec {
    fn len(&self) -> usize {
        self.truth.len()
    }

    fn cost(&self, pred: &[f64]) -> Result<f64> {
        oracle_cost(self, pred)
    }

    fn tag(&self) -> &'static str {
        match self.kind {
            OracleKind::Huber { .. } => "oracle:huber",
            OracleKind::WeightedHuber { .. } => "oracle:weighted_huber",
        }
    }
}

pub fn oracle_cost(spec: &OracleSpec, pred: &[f64]) -> Result<f64> {
    let truth = spec.truth.ys();
    match &spec.kind {
        OracleKind::Huber { delta } => huber_loss(truth, pred, *delta),
        OracleKind::WeightedHuber { delta, weights } => {
            let params = LossParams {
                gamma: 0.5,
                delta: *delta,
                region_weight: weights.clone(),
            };
            weighted_loss(truth, pred, spec.truth.xs(), LossKind::Huber, &params)
        }
    }
}

/// Swaps each of the four slots between the genomes with probability `c`.
pub fn hyper_crossover(h1: &HyperGenome, h2: &HyperGenome, c: f64, rng: &mut GaRng) -> (HyperGenome, HyperGenome) {
    let (mut a, mut b) = (*h1, *h2);
    if rng.random::<f64>() < c {
        std::mem::swap(&mut a.lambda1, &mut b.lambda1);
    }
    if rng.random::<f64>() < c {
        std::mem::swap(&mut a.lambda2, &mut b.lambda2);
    }
    if rng.random::<f64>() < c {
        std::mem::swap(&mut a.degree, &mut b.degree);
    }
    if rng.random::<f64>() < c {
        std::mem::swap(&mut a.gamma, &mut b.gamma);
    }
    (a, b)
}

/// Perturbs each slot with probability `m`, then clamps to the valid box.
pub fn hyper_mutation(h: &HyperGenome, m: f64, rng: &mut GaRng) -> HyperGenome {
    let mut out = *h;
    let gauss = |std: f64, rng: &mut GaRng| Normal::new(0.0, std).expect("finite std").sample(rng);
    if rng.random::<f64>() < m {
        out.lambda1 += gauss(LAMBDA1_STD, rng);
    }
    if rng.random::<f64>() < m {
        out.lambda2 += gauss(LAMBDA2_STD, rng);
    }
    if rng.random::<f64>() < m {
        out.degree = if rng.random::<bool>() {
            out.degree + 1
        } else {
            out.degree.saturating_sub(1)
        };
    }
    if rng.random::<f64>() < m {
        out.gamma += gauss(GAMMA_STD, rng);
    }
    out.clamped()
}

/// Pads with zeros or truncates high-order terms so every array has
/// `new_degree + 1` coefficients. Cached evaluations are dropped.
pub fn resize_coefficients(pop: &mut Population<Vec<f64>>, new_degree: usize) {
    for m in &mut pop.members {
        m.genome.resize(new_degree + 1, 0.0);
    }
    pop.invalidate();
}

/// `λ1 ~ U[0,2]`, `λ2 ~ U[0,0.5]`, `d ~ U{0..8}`, `γ ~ U[0,1]`.
pub fn initial_hyper_population(size: usize, rng: &mut GaRng) -> Result<Vec<HyperGenome>> {
    if size < 1 {
        return Err(invalid("size", "must be at least 1"));
    }
    Ok((0..size)
        .map(|_| HyperGenome {
            lambda1: rng.random_range(0.0..=2.0),
            lambda2: rng.random_range(0.0..=0.5),
            degree: rng.random_range(0..=INITIAL_MAX_DEGREE),
            gamma: rng.random_range(0.0..=1.0),
        })
        .collect())
}

/// Genome of a regression meta individual.
#[derive(Clone, Debug)]
pub struct RegMetaGenome {
    pub hyper: HyperGenome,
    pub solver: RegressionSolver,
    /// Lowest oracle cost seen since the hyperparameters last changed.
    pub best_oracle_cost: f64,
    pub best_coeffs: Vec<f64>,
}

pub type RegMetaIndividual = Individual<RegMetaGenome>;

pub struct RegMetaOps<'a, O: CostOracle> {
    pub ds: &'a Dataset,
    pub oracle: &'a O,
    pub k_subgens: usize,
    pub seed: u64,
}

impl<O: CostOracle> RegMetaOps<'_, O> {
    fn child(&self, parent: &RegMetaGenome, hyper: HyperGenome) -> RegMetaGenome {
        if hyper == parent.hyper {
            return parent.clone();
        }
        let mut solver = parent.solver.clone();
        solver.set_hyper(hyper);
        RegMetaGenome {
            hyper,
            solver,
            best_oracle_cost: f64::INFINITY,
            best_coeffs: Vec::new(),
        }
    }
}

impl<O: CostOracle> GenomeOps for RegMetaOps<'_, O> {
    type Genome = RegMetaGenome;

    /// Children inherit the coefficient population of the fitter parent.
    fn crossover(&self, a: &RegMetaGenome, b: &RegMetaGenome, point_prob: f64, rng: &mut GaRng) -> Vec<RegMetaGenome> {
        let (x, y) = hyper_crossover(&a.hyper, &b.hyper, point_prob, rng);
        let parent = if b.best_oracle_cost < a.best_oracle_cost { b } else { a };
        vec![self.child(parent, x), self.child(parent, y)]
    }

    fn mutate(&self, genome: &RegMetaGenome, rate: f64, rng: &mut GaRng) -> RegMetaGenome {
        self.child(genome, hyper_mutation(&genome.hyper, rate, rng))
    }

    fn evaluate(&self, genome: &mut RegMetaGenome, ctx: EvalContext) -> Evaluation {
        let mut rng = derive_stream(self.seed, &[tags::TRAIN, ctx.id, ctx.generation]);
        genome
            .solver
            .train(self.ds, self.k_subgens, &mut rng)
            .expect("coefficient population is non-empty");
        let (model, _) = genome.solver.best();
        let cost = self
            .oracle
            .cost(&model.predict(self.ds.xs()))
            .map(|c| if c.is_finite() { c } else { f64::MAX })
            .expect("oracle and dataset have equal length");
        if cost < genome.best_oracle_cost || genome.best_coeffs.is_empty() {
            genome.best_oracle_cost = cost;
            genome.best_coeffs = model.coeffs().to_vec();
        }
        Evaluation {
            fitness: (-genome.best_oracle_cost).exp(),
            cost: genome.best_oracle_cost,
        }
    }

    fn retrains_survivors(&self) -> bool {
        true
    }

    fn parallel(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegMetaRow {
    pub generation: u64,
    /// Best oracle cost seen so far.
    pub best_cost: f64,
    pub generation_best_cost: f64,
    pub mean_cost: f64,
    pub population_size: usize,
    pub phase: String,
    pub best_hyper: HyperGenome,
    pub best_coeffs: Vec<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct RegressionOutcome {
    pub best_model: PolynomialModel,
    pub best_hyper: HyperGenome,
    pub best_cost: f64,
    pub rows: Vec<RegMetaRow>,
}

/// Hierarchical regression with a random initial hyper population.
pub fn run_regression_hierarchy<O: CostOracle>(ds: &Dataset, oracle: &O, cfg: &HierConfig) -> Result<RegressionOutcome> {
    let mut rng = derive_stream(cfg.meta.seed, &[tags::INIT]);
    let hypers = initial_hyper_population(cfg.meta.initial_population, &mut rng)?;
    run_regression_hierarchy_from(ds, oracle, cfg, hypers)
}

/// Hierarchical regression starting from the given hyper population.
pub fn run_regression_hierarchy_from<O: CostOracle>(
    ds: &Dataset,
    oracle: &O,
    cfg: &HierConfig,
    hypers: Vec<HyperGenome>,
) -> Result<RegressionOutcome> {
    cfg.validate()?;
    if hypers.is_empty() {
        return Err(invalid("hypers", "initial population is empty"));
    }
    for h in &hypers {
        h.validate()?;
    }
    if oracle.len() != ds.len() {
        return Err(crate::error::Error::LengthMismatch {
            expected: ds.len(),
            actual: oracle.len(),
        });
    }
    let started = Instant::now();
    let seed = cfg.meta.seed;
    let genomes = hypers.into_iter().enumerate().map(|(i, hyper)| {
        let mut rng = derive_stream(seed, &[tags::INIT, i as u64]);
        RegMetaGenome {
            hyper,
            solver: RegressionSolver::new(ds, hyper, &cfg.sub, &mut rng),
            best_oracle_cost: f64::INFINITY,
            best_coeffs: Vec::new(),
        }
    });
    let mut pop = Population::new(genomes);
    let ops = RegMetaOps {
        ds,
        oracle,
        k_subgens: cfg.k_subgens,
        seed,
    };
    let mut rng = derive_stream(seed, &[tags::STEP]);
    let mut best: Option<(f64, HyperGenome, Vec<f64>)> = None;
    let mut rows = Vec::with_capacity(cfg.meta_generations + 1);

    ga::evaluate_pending(&mut pop, &ops);
    for gen in 0..=cfg.meta_generations {
        if gen > 0 {
            ga::step_generation(&mut pop, &ops, &cfg.meta, &mut rng)?;
        }
        let mut gen_best = f64::INFINITY;
        let mut mean = 0.0;
        for m in &pop.members {
            let g = &m.genome;
            mean += g.best_oracle_cost;
            gen_best = gen_best.min(g.best_oracle_cost);
            if best.as_ref().is_none_or(|b| g.best_oracle_cost < b.0) {
                best = Some((g.best_oracle_cost, g.hyper, g.best_coeffs.clone()));
            }
        }
        let (cost, hyper, coeffs) = best.clone().expect("population is non-empty");
        rows.push(RegMetaRow {
            generation: pop.generation,
            best_cost: cost,
            generation_best_cost: gen_best,
            mean_cost: mean / pop.len() as f64,
            population_size: pop.len(),
            phase: oracle.tag().to_string(),
            best_hyper: hyper,
            best_coeffs: coeffs,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
    let (best_cost, best_hyper, coeffs) = best.expect("population is non-empty");
    Ok(RegressionOutcome {
        best_model: PolynomialModel::new(coeffs)?,
        best_hyper,
        best_cost,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(l1: f64, l2: f64, d: usize, g: f64) -> HyperGenome {
        HyperGenome::new(l1, l2, d, g).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let ds = Dataset::new(vec![-1.0, 1.0], vec![2.0, 3.0]).unwrap();
        let o = OracleSpec::huber(ds.clone(), 0.2).unwrap();
        assert_eq!(oracle_cost(&o, ds.ys()).unwrap(), 0.0);
        assert!(oracle_cost(&o, &[1.0]).is_err());

        let one = Dataset::new(vec![0.0], vec![1.0]).unwrap();
        let o = OracleSpec::huber(one.clone(), 0.2).unwrap();
        assert!((oracle_cost(&o, &[0.0]).unwrap() - 0.18).abs() < 1e-15);

        let plain = OracleSpec::huber(ds.clone(), 0.3).unwrap();
        let unit = OracleSpec::weighted_huber(ds.clone(), 0.3, RegionWeight::uniform()).unwrap();
        let pred = [1.7, 3.9];
        assert_eq!(oracle_cost(&plain, &pred).unwrap(), oracle_cost(&unit, &pred).unwrap());
        assert!(OracleSpec::huber(ds, 0.0).is_err());
        assert_eq!(unit.tag(), "oracle:weighted_huber");
    }

    #[test]
    fn crossover_examples() {
        let mut rng = derive_stream(1, &[]);
        let (a, b) = (h(1.0, 0.1, 2, 0.3), h(0.5, 0.4, 7, 0.9));
        assert_eq!(hyper_crossover(&a, &b, 0.0, &mut rng), (a, b));
        assert_eq!(hyper_crossover(&a, &b, 1.0, &mut rng), (b, a));
        for _ in 0..100 {
            let (x, y) = hyper_crossover(&a, &b, 0.5, &mut rng);
            assert_eq!(x.lambda1 + y.lambda1, a.lambda1 + b.lambda1);
            assert_eq!(x.degree + y.degree, a.degree + b.degree);
        }
    }

    #[test]
    fn mutation_examples() {
        let mut rng = derive_stream(2, &[]);
        let a = h(1.0, 0.05, 0, 0.5);
        assert_eq!(hyper_mutation(&a, 0.0, &mut rng), a);
        for _ in 0..500 {
            let m = hyper_mutation(&a, 1.0, &mut rng);
            m.validate().unwrap();
            assert!(m.degree <= 1);
        }
    }

    #[test]
    fn resize_examples() {
        let mut pop = Population::new(vec![vec![1.0, 2.0, 3.0]]);
        resize_coefficients(&mut pop, 2);
        assert_eq!(pop.members[0].genome, vec![1.0, 2.0, 3.0]);
        resize_coefficients(&mut pop, 4);
        assert_eq!(pop.members[0].genome, vec![1.0, 2.0, 3.0, 0.0, 0.0]);
        resize_coefficients(&mut pop, 1);
        assert_eq!(pop.members[0].genome, vec![1.0, 2.0]);
        assert!(pop.members[0].eval.is_none());
    }

    #[test]
    fn initial_population() {
        let a = initial_hyper_population(100, &mut derive_stream(3, &[])).unwrap();
        let b = initial_hyper_population(100, &mut derive_stream(3, &[])).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        for g in &a {
            g.validate().unwrap();
            assert!(g.lambda1 <= 2.0 && g.lambda2 <= 0.5 && g.degree <= 8);
        }
        assert!(initial_hyper_population(0, &mut derive_stream(3, &[])).is_err());
    }

    fn small_cfg(seed: u64) -> HierConfig {
        let mut cfg = HierConfig::regression(seed);
        cfg.meta.initial_population = 12;
        cfg.meta.min_population = 6;
        cfg.sub.initial_population = 60;
        cfg.sub.min_population = 20;
        cfg.k_subgens = 30;
        cfg.meta_generations = 4;
        cfg
    }

    #[test]
    fn hierarchy_tracks_degree_and_is_monotone() {
        let ds = Dataset::generate(&[1.0, -1.0, 0.5], 0.1, -1.0, 1.0, 40, 4).unwrap();
        let oracle = OracleSpec::huber(ds.clone(), 0.2).unwrap();
        let out = run_regression_hierarchy(&ds, &oracle, &small_cfg(7)).unwrap();
        assert_eq!(out.rows.len(), 5);
        for w in out.rows.windows(2) {
            assert!(w[1].best_cost <= w[0].best_cost);
        }
        assert_eq!(out.best_model.degree(), out.best_hyper.degree);
        let pred = out.best_model.predict(ds.xs());
        assert!((oracle_cost(&oracle, &pred).unwrap() - out.best_cost).abs() < 1e-12);
    }

    #[test]
    fn coefficient_lengths_follow_degree() {
        let ds = Dataset::generate(&[1.0, 0.5], 0.1, 0.0, 1.0, 20, 9).unwrap();
        let oracle = OracleSpec::huber(ds.clone(), 0.2).unwrap();
        let mut cfg = small_cfg(2);
        cfg.meta.mutation_rate = 0.9;
        cfg.k_subgens = 3;
        let hypers = initial_hyper_population(cfg.meta.initial_population, &mut derive_stream(2, &[])).unwrap();
        let genomes = hypers.into_iter().enumerate().map(|(i, hyper)| RegMetaGenome {
            hyper,
            solver: RegressionSolver::new(&ds, hyper, &cfg.sub, &mut derive_stream(2, &[i as u64])),
            best_oracle_cost: f64::INFINITY,
            best_coeffs: Vec::new(),
        });
        let mut pop = Population::new(genomes);
        let ops = RegMetaOps {
            ds: &ds,
            oracle: &oracle,
            k_subgens: cfg.k_subgens,
            seed: 2,
        };
        let mut rng = derive_stream(2, &[tags::STEP]);
        ga::evaluate_pending(&mut pop, &ops);
        for _ in 0..6 {
            ga::step_generation(&mut pop, &ops, &cfg.meta, &mut rng).unwrap();
            for m in &pop.members {
                let want = m.genome.hyper.degree + 1;
                assert_eq!(m.genome.solver.hyper(), m.genome.hyper);
                assert!(m.genome.solver.population.members.iter().all(|c| c.genome.len() == want));
                assert_eq!(m.genome.best_coeffs.len(), want);
            }
        }
    }

    #[test]
    fn hierarchy_is_deterministic() {
        let ds = Dataset::generate(&[0.5, 2.0], 0.1, 0.0, 1.0, 30, 5).unwrap();
        let oracle = OracleSpec::huber(ds.clone(), 0.2).unwrap();
        let strip = |o: &RegressionOutcome| {
            o.rows
                .iter()
                .map(|r| (r.best_cost, r.mean_cost, r.best_coeffs.clone()))
                .collect::<Vec<_>>()
        };
        let a = run_regression_hierarchy(&ds, &oracle, &small_cfg(1)).unwrap();
        let b = run_regression_hierarchy(&ds, &oracle, &small_cfg(1)).unwrap();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn realizable_truth_drives_cost_to_zero() {
        let ds = Dataset::from_polynomial(&[1.0, 2.0], 0.0, 1.0, 30).unwrap();
        let oracle = OracleSpec::huber(ds.clone(), 0.2).unwrap();
        let mut cfg = small_cfg(3);
        cfg.k_subgens = 100;
        let hypers = vec![h(0.0, 0.0, 1, 0.5); cfg.meta.initial_population];
        let out = run_regression_hierarchy_from(&ds, &oracle, &cfg, hypers).unwrap();
        assert!(out.best_cost < 1e-3, "{}", out.best_cost);
    }
}
