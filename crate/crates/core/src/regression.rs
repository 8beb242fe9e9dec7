//! Polynomial regression: datasets, the loss zoo, the composite sub-solver
//! objective and the coefficient-space GA.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ga::{self, EvalContext, Evaluation, GaConfig, GenomeOps, History, Population};
use crate::regression_meta::HyperGenome;
use crate::rng::{derive_stream, tags, GaRng};

/// Standard deviation of the Gaussian noise added by coefficient mutation.
pub const COEFF_MUTATION_STD: f64 = 2.0;
/// Standard deviation of freshly initialized coefficients.
pub const COEFF_INIT_STD: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(invalid("dataset", "needs at least one sample"));
        }
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                expected: xs.len(),
                actual: ys.len(),
            });
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(invalid("dataset", "values must be finite"));
        }
        Ok(Self { xs, ys })
    }

    /// `n` evenly spaced samples of `p(x) + N(0, noise_sigma²)` on `[x_lo, x_hi]`.
    pub fn generate(
        coeffs: &[f64],
        noise_sigma: f64,
        x_lo: f64,
        x_hi: f64,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        if !(x_lo < x_hi) {
            return Err(invalid("x_range", format!("x_lo {x_lo} must be below x_hi {x_hi}")));
        }
        if !(noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma", "must be non-negative"));
        }
        let model = PolynomialModel::new(coeffs.to_vec())?;
        let noise = Normal::new(0.0, noise_sigma).map_err(|e| invalid("noise_sigma", e.to_string()))?;
        let mut rng = derive_stream(seed, &[tags::DATASET]);
        let step = if n > 1 { (x_hi - x_lo) / (n - 1) as f64 } else { 0.0 };
        let xs: Vec<f64> = (0..n).map(|i| x_lo + step * i as f64).collect();
        let ys = xs
            .iter()
            .map(|&x| {
                let e = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                model.eval(x) + e
            })
            .collect();
        Self::new(xs, ys)
    }

    /// Noiseless samples of the polynomial.
    pub fn from_polynomial(coeffs: &[f64], x_lo: f64, x_hi: f64, n: usize) -> Result<Self> {
        Self::generate(coeffs, 0.0, x_lo, x_hi, n, 0)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

pub fn generate_dataset(
    coeffs: &[f64],
    noise_sigma: f64,
    x_lo: f64,
    x_hi: f64,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    Dataset::generate(coeffs, noise_sigma, x_lo, x_hi, n, seed)
}

/// `p(x) = Σ a[k] x^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    coeffs: Vec<f64>,
}

impl PolynomialModel {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("coeffs", "polynomial needs at least one coefficient"));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        horner(&self.coeffs, x)
    }

    pub fn predict(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

#[inline]
pub(crate) fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

pub fn eval_poly(m: &PolynomialModel, x: f64) -> f64 {
    m.eval(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mae,
    Quantile,
    Huber,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Self::Mse),
            "mae" => Ok(Self::Mae),
            "quantile" => Ok(Self::Quantile),
            "huber" => Ok(Self::Huber),
            _ => Err(Error::UnknownLoss(s.to_string())),
        }
    }
}

/// Interval `(lo, hi]` of x values sharing one loss weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightRegion {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

/// Piecewise-constant weight over x; the first matching region wins and
/// uncovered x values get weight 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionWeight {
    pub regions: Vec<WeightRegion>,
}

impl RegionWeight {
    pub fn uniform() -> Self {
        Self::default()
    }

    /// Weight `w` for every `x > 0`, 1 elsewhere.
    pub fn positive_x(w: f64) -> Self {
        Self {
            regions: vec![WeightRegion {
                lo: 0.0,
                hi: f64::INFINITY,
                weight: w,
            }],
        }
    }

    pub fn weight(&self, x: f64) -> f64 {
        self.regions
            .iter()
            .find(|r| x > r.lo && x <= r.hi)
            .map_or(1.0, |r| r.weight)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.iter().any(|r| !(r.weight > 0.0) || !r.weight.is_finite()) {
            return Err(invalid("region_weight", "weights must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub gamma: f64,
    pub delta: f64,
    pub region_weight: RegionWeight,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            delta: 1.0,
            region_weight: RegionWeight::uniform(),
        }
    }
}

/// Per-sample loss of residual `r = truth - pred`; the sample mean of these
/// terms is the corresponding loss.
#[inline]
pub fn loss_term(kind: LossKind, r: f64, gamma: f64, delta: f64) -> f64 {
    match kind {
        LossKind::Mse => 0.5 * r * r,
        LossKind::Mae => r.abs(),
        LossKind::Quantile => {
            if r > 0.0 {
                gamma * r
            } else {
                (1.0 - gamma) * -r
            }
        }
        LossKind::Huber => {
            let a = r.abs();
            if a < delta {
                0.5 * r * r
            } else {
                delta * a - 0.5 * delta * delta
            }
        }
    }
}

fn check_lengths(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(invalid("truth", "needs at least one sample"));
    }
    Ok(())
}

fn mean_term(truth: &[f64], pred: &[f64], kind: LossKind, gamma: f64, delta: f64) -> Result<f64> {
    check_lengths(truth, pred)?;
    let sum: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| loss_term(kind, t - p, gamma, delta))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// `1/(2N) Σ (truth - pred)²`.
pub fn mse_loss(truth: &[f64], pred: &[f64]) -> Result<f64> {
    mean_term(truth, pred, LossKind::Mse, 0.0, 0.0)
}

pub fn mae_loss(truth: &[f64], pred: &[f64]) -> Result<f64> {
    mean_term(truth, pred, LossKind::Mae, 0.0, 0.0)
}

/// Under-predictions weighted by `gamma`, over-predictions by `1 - gamma`.
pub fn quantile_loss(truth: &[f64], pred: &[f64], gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid("gamma", format!("{gamma} not in [0, 1]")));
    }
    mean_term(truth, pred, LossKind::Quantile, gamma, 0.0)
}

pub fn huber_loss(truth: &[f64], pred: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid("delta", format!("{delta} must be positive")));
    }
    mean_term(truth, pred, LossKind::Huber, 0.0, delta)
}

/// Mean of per-sample `base` terms, each scaled by the weight of its x value.
pub fn weighted_loss(
    truth: &[f64],
    pred: &[f64],
    xs: &[f64],
    base: LossKind,
    params: &LossParams,
) -> Result<f64> {
    check_lengths(truth, pred)?;
    if xs.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: xs.len(),
        });
    }
    let sum: f64 = truth
        .iter()
        .zip(pred)
        .zip(xs)
        .map(|((t, p), &x)| {
            params.region_weight.weight(x) * loss_term(base, t - p, params.gamma, params.delta)
        })
        .sum();
    Ok(sum / truth.len() as f64)
}

/// `mse + λ1·quantile(γ) + λ2·Σ a_k²` of `coeffs` on `ds`.
pub fn composite_objective_coeffs(ds: &Dataset, coeffs: &[f64], l1: f64, l2: f64, gamma: f64) -> f64 {
    let (mut sq, mut q) = (0.0, 0.0);
    for (&x, &y) in ds.xs.iter().zip(&ds.ys) {
        let r = y - horner(coeffs, x);
        sq += r * r;
        q += if r > 0.0 { gamma * r } else { (gamma - 1.0) * r };
    }
    let n = ds.len() as f64;
    let reg: f64 = coeffs.iter().map(|a| a * a).sum();
    sq / (2.0 * n) + l1 * q / n + l2 * reg
}

pub fn composite_objective(ds: &Dataset, m: &PolynomialModel, l1: f64, l2: f64, gamma: f64) -> f64 {
    composite_objective_coeffs(ds, &m.coeffs, l1, l2, gamma)
}

/// [`GenomeOps`] for coefficient arrays under fixed objective hyperparameters.
pub struct RegressionOps<'a> {
    pub ds: &'a Dataset,
    pub hyper: HyperGenome,
}

impl GenomeOps for RegressionOps<'_> {
    type Genome = Vec<f64>;

    fn crossover(&self, a: &Vec<f64>, b: &Vec<f64>, point_prob: f64, rng: &mut GaRng) -> Vec<Vec<f64>> {
        let (x, y) = coefficient_crossover(a, b, point_prob, rng);
        vec![x, y]
    }

    fn mutate(&self, genome: &Vec<f64>, rate: f64, rng: &mut GaRng) -> Vec<f64> {
        coefficient_mutation(genome, rate, COEFF_MUTATION_STD, rng)
    }

    fn same_genome(&self, a: &Vec<f64>, b: &Vec<f64>) -> bool {
        a == b
    }

    fn evaluate(&self, genome: &mut Vec<f64>, _: EvalContext) -> Evaluation {
        let h = &self.hyper;
        let mut cost = composite_objective_coeffs(self.ds, genome, h.lambda1, h.lambda2, h.gamma);
        if !cost.is_finite() {
            cost = f64::MAX;
        }
        Evaluation {
            fitness: (-cost).exp(),
            cost,
        }
    }
}

/// Swaps each locus between the two arrays with probability `c`.
pub fn coefficient_crossover(a: &[f64], b: &[f64], c: f64, rng: &mut GaRng) -> (Vec<f64>, Vec<f64>) {
    let (mut x, mut y) = (a.to_vec(), b.to_vec());
    for i in 0..x.len().min(y.len()) {
        if rng.random::<f64>() < c {
            std::mem::swap(&mut x[i], &mut y[i]);
        }
    }
    (x, y)
}

/// Adds `N(0, std²)` noise to each coefficient with probability `m`.
pub fn coefficient_mutation(a: &[f64], m: f64, std: f64, rng: &mut GaRng) -> Vec<f64> {
    let noise = Normal::new(0.0, std).expect("finite std");
    a.iter()
        .map(|&v| {
            if rng.random::<f64>() < m {
                v + noise.sample(rng)
            } else {
                v
            }
        })
        .collect()
}

/// Coefficient GA bound to one set of objective hyperparameters.
#[derive(Clone, Debug)]
pub struct RegressionSolver {
    pub population: Population<Vec<f64>>,
    hyper: HyperGenome,
    cfg: GaConfig,
}

impl RegressionSolver {
    /// Seeds `cfg.initial_population` arrays of `d + 1` coefficients drawn
    /// from `N(0, COEFF_INIT_STD²)`.
    pub fn new(ds: &Dataset, hyper: HyperGenome, cfg: &GaConfig, rng: &mut GaRng) -> Self {
        let init = Normal::new(0.0, COEFF_INIT_STD).expect("finite std");
        let len = hyper.degree + 1;
        let genomes: Vec<Vec<f64>> = (0..cfg.initial_population)
            .map(|_| (0..len).map(|_| init.sample(rng)).collect())
            .collect();
        let mut solver = Self {
            population: Population::new(genomes),
            hyper,
            cfg: *cfg,
        };
        ga::evaluate_pending(&mut solver.population, &RegressionOps { ds, hyper });
        solver
    }

    pub fn hyper(&self) -> HyperGenome {
        self.hyper
    }

    pub fn train(&mut self, ds: &Dataset, generations: usize, rng: &mut GaRng) -> Result<History> {
        let ops = RegressionOps { ds, hyper: self.hyper };
        ga::run_with_rng(&mut self.population, &ops, &self.cfg, generations, rng)
    }

    /// Best model so far and its objective value.
    pub fn best(&self) -> (PolynomialModel, f64) {
        let best = self
            .population
            .best_ever
            .as_ref()
            .or_else(|| self.population.best())
            .expect("solver population is evaluated");
        (
            PolynomialModel {
                coeffs: best.genome.clone(),
            },
            best.eval.unwrap().cost,
        )
    }

    /// Switches to new hyperparameters, resizing coefficient arrays when the
    /// degree changes. All cached evaluations are dropped.
    pub fn set_hyper(&mut self, hyper: HyperGenome) {
        if hyper.degree != self.hyper.degree {
            crate::regression_meta::resize_coefficients(&mut self.population, hyper.degree);
        }
        self.hyper = hyper;
        self.population.invalidate();
    }
}

/// Fits a degree-`hyper.degree` polynomial by minimizing the composite
/// objective with the coefficient GA.
pub fn run_regression_solver(
    ds: &Dataset,
    hyper: HyperGenome,
    cfg: &GaConfig,
    generations: usize,
) -> Result<(PolynomialModel, History)> {
    cfg.validate()?;
    hyper.validate()?;
    let mut init_rng = derive_stream(cfg.seed, &[tags::INIT]);
    let mut solver = RegressionSolver::new(ds, hyper, cfg, &mut init_rng);
    let mut rng = derive_stream(cfg.seed, &[tags::STEP]);
    let history = solver.train(ds, generations, &mut rng)?;
    Ok((solver.best().0, history))
}
