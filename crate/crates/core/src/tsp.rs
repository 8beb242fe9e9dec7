//! TSP sub-solver over a fixed vertex subset of a Euclidean instance.
//!
//! Tours are open Hamiltonian paths: the cost is the sum of consecutive edge
//! lengths with no closing edge.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::ga::{self, EvalContext, Evaluation, GaConfig, GenomeOps, History, Population};
use crate::rng::{derive_stream, tags, GaRng};

/// Guard against zero-length paths in [`tsp_fitness`].
pub const COST_EPSILON: f64 = 1e-9;
/// Largest exponent used by [`tsp_fitness`]; keeps fitness finite.
pub const MAX_FITNESS_EXPONENT: f64 = 700.0;

/// Points in the plane; edge weights are Euclidean distances.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanInstance {
    points: Vec<(f64, f64)>,
    dist: Vec<f64>,
}

impl EuclideanInstance {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("points", "instance needs at least one point"));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(invalid("points", "coordinates must be finite"));
        }
        let n = points.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                dist[i * n + j] = dx.hypot(dy);
            }
        }
        Ok(Self { points, dist })
    }

    /// `n` points drawn uniformly from the unit square.
    pub fn random_unit_square(n: usize, seed: u64) -> Result<Self> {
        let mut rng = derive_stream(seed, &[tags::INSTANCE, n as u64]);
        let points = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        Self::new(points)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.points.len() + j]
    }

    pub fn all_vertices(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }
}

/// Visiting order over a subset of the instance's vertices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Tour {
    pub order: Vec<usize>,
}

impl Tour {
    pub fn new(order: Vec<usize>) -> Self {
        Self { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Checks that every id is below `n` and appears once.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &v in &self.order {
            if v >= n {
                return Err(Error::InvalidVertex { vertex: v, n });
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::DuplicateVertex(v));
            }
        }
        Ok(())
    }

    /// Vertex ids in ascending order.
    pub fn vertex_set(&self) -> Vec<usize> {
        let mut v = self.order.clone();
        v.sort_unstable();
        v
    }
}

#[inline]
pub(crate) fn path_cost_unchecked(inst: &EuclideanInstance, order: &[usize]) -> f64 {
    order.windows(2).map(|w| inst.dist(w[0], w[1])).sum()
}

/// Length of the open path visiting `tour.order` in sequence.
pub fn path_cost(inst: &EuclideanInstance, tour: &Tour) -> Result<f64> {
    if let Some(&v) = tour.order.iter().find(|&&v| v >= inst.n()) {
        return Err(Error::InvalidVertex { vertex: v, n: inst.n() });
    }
    Ok(path_cost_unchecked(inst, &tour.order))
}

/// `exp(|V'| / cost)` with the cost floored at [`COST_EPSILON`] and the
/// exponent capped at [`MAX_FITNESS_EXPONENT`].
pub fn fitness_from_cost(subset_len: usize, cost: f64) -> f64 {
    (subset_len as f64 / cost.max(COST_EPSILON))
        .min(MAX_FITNESS_EXPONENT)
        .exp()
}

pub fn tsp_fitness(inst: &EuclideanInstance, tour: &Tour) -> Result<f64> {
    Ok(fitness_from_cost(tour.len(), path_cost(inst, tour)?))
}

fn check_same_set(p1: &Tour, p2: &Tour) -> Result<()> {
    if p1.len() != p2.len() {
        return Err(Error::SubsetMismatch);
    }
    let bound = p1.order.iter().chain(&p2.order).max().map_or(0, |m| m + 1);
    let mut mark = vec![0u8; bound];
    for &v in &p1.order {
        mark[v] += 1;
    }
    for &v in &p2.order {
        if mark[v] != 1 {
            return Err(Error::SubsetMismatch);
        }
        mark[v] = 2;
    }
    Ok(())
}

/// Ordered crossover driven by an explicit coin sequence (one coin per position).
pub fn ordered_crossover_with_coins(p1: &Tour, p2: &Tour, coins: &[bool]) -> Result<Tour> {
    check_same_set(p1, p2)?;
    if coins.len() != p1.len() {
        return Err(Error::LengthMismatch {
            expected: p1.len(),
            actual: coins.len(),
        });
    }
    Ok(ordered_crossover_unchecked(p1, p2, |i| coins[i]))
}

fn ordered_crossover_unchecked(p1: &Tour, p2: &Tour, mut heads: impl FnMut(usize) -> bool) -> Tour {
    let bound = p1.order.iter().max().map_or(0, |m| m + 1);
    let mut kept = vec![false; bound];
    let mut order = Vec::with_capacity(p1.len());
    for (i, &v) in p1.order.iter().enumerate() {
        if heads(i) {
            kept[v] = true;
            order.push(v);
        }
    }
    order.extend(p2.order.iter().copied().filter(|&v| !kept[v]));
    Tour { order }
}

/// Keeps the entries of `p1` at positions where a coin of bias `c` lands
/// heads (in `p1` order), then appends the remaining vertices in `p2` order.
pub fn ordered_crossover(p1: &Tour, p2: &Tour, c: f64, rng: &mut GaRng) -> Result<Tour> {
    check_same_set(p1, p2)?;
    Ok(ordered_crossover_unchecked(p1, p2, |_| rng.random::<f64>() < c))
}

/// For each position, with probability `m`, swaps it with a uniformly random position.
pub fn swap_mutation(p: &Tour, m: f64, rng: &mut GaRng) -> Tour {
    let mut order = p.order.clone();
    let len = order.len();
    for i in 0..len {
        if rng.random::<f64>() < m {
            let j = rng.random_range(0..len);
            order.swap(i, j);
        }
    }
    Tour { order }
}

/// Double-tree heuristic: Prim's minimum spanning tree over `subset`
/// (rooted at the lowest id, ties to the lower id) walked in depth-first
/// preorder with children in ascending id order. The result costs at most
/// twice the optimal path over the same subset.
pub fn greedy_two_approx(inst: &EuclideanInstance, subset: &[usize]) -> Result<Tour> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut verts = subset.to_vec();
    verts.sort_unstable();
    Tour::new(verts.clone()).validate(inst.n())?;
    let k = verts.len();

    let mut in_tree = vec![false; k];
    let mut key = vec![f64::INFINITY; k];
    let mut parent = vec![usize::MAX; k];
    key[0] = 0.0;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
    for _ in 0..k {
        // Lowest key; index order is id order so the first minimum is the lowest id.
        let u = (0..k)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)))
            .unwrap();
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            children[parent[u]].push(u);
        }
        for v in 0..k {
            if !in_tree[v] {
                let w = inst.dist(verts[u], verts[v]);
                if w < key[v] {
                    key[v] = w;
                    parent[v] = u;
                }
            }
        }
    }

    let mut order = Vec::with_capacity(k);
    let mut stack = vec![0usize];
    while let Some(u) = stack.pop() {
        order.push(verts[u]);
        children[u].sort_unstable();
        stack.extend(children[u].iter().rev());
    }
    Ok(Tour { order })
}

/// [`GenomeOps`] for permutations over a fixed subset.
pub struct TspOps<'a> {
    pub inst: &'a EuclideanInstance,
}

impl GenomeOps for TspOps<'_> {
    type Genome = Tour;

    fn crossover(&self, a: &Tour, b: &Tour, point_prob: f64, rng: &mut GaRng) -> Vec<Tour> {
        vec![ordered_crossover_unchecked(a, b, |_| rng.random::<f64>() < point_prob)]
    }

    fn mutate(&self, genome: &Tour, rate: f64, rng: &mut GaRng) -> Tour {
        swap_mutation(genome, rate, rng)
    }

    fn same_genome(&self, a: &Tour, b: &Tour) -> bool {
        a == b
    }

    fn evaluate(&self, genome: &mut Tour, _: EvalContext) -> Evaluation {
        let cost = path_cost_unchecked(self.inst, &genome.order);
        Evaluation {
            fitness: fitness_from_cost(genome.len(), cost),
            cost,
        }
    }
}

/// A TSP GA population bound to one vertex subset.
#[derive(Clone, Debug)]
pub struct TspSolver {
    subset: Vec<usize>,
    pub population: Population<Tour>,
    cfg: GaConfig,
}

impl TspSolver {
    /// Seeds `cfg.initial_population` independent uniform permutations of
    /// `subset` (a single trivial tour when the subset has at most one vertex).
    pub fn new(
        inst: &EuclideanInstance,
        subset: &[usize],
        cfg: &GaConfig,
        rng: &mut GaRng,
    ) -> Result<Self> {
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        Tour::new(subset.clone()).validate(inst.n())?;
        let population = Population::new(random_tours(&subset, cfg, rng));
        let mut solver = Self {
            subset,
            population,
            cfg: *cfg,
        };
        ga::evaluate_pending(&mut solver.population, &TspOps { inst });
        Ok(solver)
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn config(&self) -> &GaConfig {
        &self.cfg
    }

    /// Runs `generations` GA generations; trivial subsets do nothing.
    pub fn train(
        &mut self,
        inst: &EuclideanInstance,
        generations: usize,
        rng: &mut GaRng,
    ) -> Result<History> {
        let ops = TspOps { inst };
        let gens = if self.subset.len() <= 1 { 0 } else { generations };
        ga::run_with_rng(&mut self.population, &ops, &self.cfg, gens, rng)
    }

    /// Best tour found so far and its path cost.
    pub fn best(&self) -> (Tour, f64) {
        let best = self
            .population
            .best_ever
            .as_ref()
            .or_else(|| self.population.best())
            .expect("solver population is evaluated");
        (best.genome.clone(), best.eval.unwrap().cost)
    }

    pub(crate) fn replace_population(&mut self, subset: Vec<usize>, population: Population<Tour>) {
        self.subset = subset;
        self.population = population;
    }
}

pub(crate) fn random_tours(subset: &[usize], cfg: &GaConfig, rng: &mut GaRng) -> Vec<Tour> {
    if subset.len() <= 1 {
        return vec![Tour::new(subset.to_vec())];
    }
    (0..cfg.initial_population)
        .map(|_| {
            let mut order = subset.to_vec();
            order.shuffle(rng);
            Tour { order }
        })
        .collect()
}

/// Solves TSP over `subset` with the GA and returns the best tour found
/// together with the per-generation history.
pub fn run_tsp_solver(
    inst: &EuclideanInstance,
    subset: &[usize],
    cfg: &GaConfig,
    generations: usize,
) -> Result<(Tour, History)> {
    cfg.validate()?;
    let mut init_rng = derive_stream(cfg.seed, &[tags::INIT]);
    let mut solver = TspSolver::new(inst, subset, cfg, &mut init_rng)?;
    let mut rng = derive_stream(cfg.seed, &[tags::STEP]);
    let history = solver.train(inst, generations, &mut rng)?;
    Ok((solver.best().0, history))
}
