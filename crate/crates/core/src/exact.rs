//! Reference solvers used to check the genetic solvers: Held-Karp for open
//! TSP paths, exhaustive soft-TSP, and least-squares polynomial fitting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::regression::{Dataset, PolynomialModel};
use crate::soft_tsp::PenaltyMap;
use crate::tsp::{EuclideanInstance, Tour};

/// Size cap for the exponential-time solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimit {
    pub max_n: usize,
}

impl Default for OracleLimit {
    fn default() -> Self {
        Self { max_n: 12 }
    }
}

impl OracleLimit {
    fn check(&self, n: usize) -> Result<()> {
        if n > self.max_n {
            Err(Error::TooLarge { n, max_n: self.max_n })
        } else {
            Ok(())
        }
    }
}

/// `cost[mask * k + last]`: cheapest open path visiting exactly `mask`
/// (bits index `verts`) and ending at `last`, starting anywhere.
struct HeldKarp {
    k: usize,
    cost: Vec<f64>,
    prev: Vec<u8>,
}

const NO_PREV: u8 = u8::MAX;

impl HeldKarp {
    fn solve(inst: &EuclideanInstance, verts: &[usize]) -> Self {
        let k = verts.len();
        let states = (1usize << k) * k;
        let mut cost = vec![f64::INFINITY; states];
        let mut prev = vec![NO_PREV; states];
        for v in 0..k {
            cost[(1 << v) * k + v] = 0.0;
        }
        for mask in 1usize..(1 << k) {
            for last in 0..k {
                if mask & (1 << last) == 0 {
                    continue;
                }
                let here = cost[mask * k + last];
                if !here.is_finite() {
                    continue;
                }
                for next in 0..k {
                    if mask & (1 << next) != 0 {
                        continue;
                    }
                    let nmask = mask | (1 << next);
                    let c = here + inst.dist(verts[last], verts[next]);
                    let slot = nmask * k + next;
                    if c < cost[slot] {
                        cost[slot] = c;
                        prev[slot] = last as u8;
                    }
                }
            }
        }
        Self { k, cost, prev }
    }

    /// Best `(last, cost)` over paths covering exactly `mask`.
    fn best_end(&self, mask: usize) -> (usize, f64) {
        (0..self.k)
            .filter(|&l| mask & (1 << l) != 0)
            .map(|l| (l, self.cost[mask * self.k + l]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("mask is non-empty")
    }

    fn path(&self, mut mask: usize, mut last: usize, verts: &[usize]) -> Vec<usize> {
        let mut rev = Vec::with_capacity(mask.count_ones() as usize);
        loop {
            rev.push(verts[last]);
            let p = self.prev[mask * self.k + last];
            mask &= !(1 << last);
            if p == NO_PREV {
                break;
            }
            last = p as usize;
        }
        rev.reverse();
        rev
    }
}

/// Minimum-weight open Hamiltonian path over `subset`, both endpoints free.
pub fn exact_tsp_path(
    inst: &EuclideanInstance,
    subset: &[usize],
    limit: OracleLimit,
) -> Result<(Tour, f64)> {
    limit.check(subset.len())?;
    let mut verts = subset.to_vec();
    verts.sort_unstable();
    Tour::new(verts.clone()).validate(inst.n())?;
    if verts.is_empty() {
        return Ok((Tour::default(), 0.0));
    }
    let hk = HeldKarp::solve(inst, &verts);
    let full = (1usize << verts.len()) - 1;
    let (last, cost) = hk.best_end(full);
    Ok((Tour::new(hk.path(full, last, &verts)), cost))
}

/// Exact soft-TSP optimum: minimum over every vertex subset of the skipped
/// penalties plus the optimal open path over the subset.
pub fn exact_soft_tsp(
    inst: &EuclideanInstance,
    pen: &PenaltyMap,
    limit: OracleLimit,
) -> Result<(Tour, f64)> {
    let n = inst.n();
    limit.check(n)?;
    pen.check_len(n)?;
    let verts: Vec<usize> = (0..n).collect();
    let hk = HeldKarp::solve(inst, &verts);
    let total: f64 = pen.values().iter().sum();

    let mut best = (Tour::default(), total);
    for mask in 1usize..(1 << n) {
        let kept: f64 = (0..n)
            .filter(|&v| mask & (1 << v) != 0)
            .map(|v| pen.values()[v])
            .sum();
        let (last, path) = hk.best_end(mask);
        let cost = path + (total - kept);
        if cost < best.1 {
            best = (Tour::new(hk.path(mask, last, &verts)), cost);
        }
    }
    Ok(best)
}

/// Degree-`d` least-squares fit from the normal equations `(XᵀX) a = Xᵀy`.
pub fn least_squares_fit(ds: &Dataset, d: usize) -> Result<PolynomialModel> {
    let rows = ds.len();
    let cols = d + 1;
    if cols > rows {
        return Err(Error::DegenerateDesign);
    }
    let x = DMatrix::from_fn(rows, cols, |i, k| ds.xs()[i].powi(k as i32));
    let y = DVector::from_column_slice(ds.ys());
    let xt = x.transpose();
    let gram = &xt * &x;
    let rhs = &xt * &y;
    let coeffs = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or(Error::DegenerateDesign)?;
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::DegenerateDesign);
    }
    PolynomialModel::new(coeffs.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::path_cost;

    fn inst(points: &[(f64, f64)]) -> EuclideanInstance {
        EuclideanInstance::new(points.to_vec()).unwrap()
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn small_paths() {
        let line = inst(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let (t, c) = exact_tsp_path(&line, &[0, 1, 2], OracleLimit::default()).unwrap();
        assert_eq!(c, 2.0);
        assert_eq!(path_cost(&line, &t).unwrap(), 2.0);
        let two = inst(&[(0.0, 0.0), (3.0, 4.0)]);
        assert_eq!(exact_tsp_path(&two, &[0, 1], OracleLimit::default()).unwrap().1, 5.0);
        assert_eq!(exact_tsp_path(&two, &[1], OracleLimit::default()).unwrap().1, 0.0);
        assert_eq!(exact_tsp_path(&two, &[], OracleLimit::default()).unwrap().1, 0.0);
    }

    #[test]
    fn held_karp_matches_enumeration() {
        for seed in 0..5 {
            let i = EuclideanInstance::random_unit_square(7, seed).unwrap();
            let all = i.all_vertices();
            let brute = permutations(&all)
                .into_iter()
                .map(|p| path_cost(&i, &Tour::new(p)).unwrap())
                .fold(f64::INFINITY, f64::min);
            let (t, c) = exact_tsp_path(&i, &all, OracleLimit::default()).unwrap();
            assert!((c - brute).abs() < 1e-12);
            assert!((path_cost(&i, &t).unwrap() - c).abs() < 1e-12);
            assert_eq!(t.vertex_set(), all);
        }
    }

    #[test]
    fn size_limit() {
        let i = EuclideanInstance::random_unit_square(13, 0).unwrap();
        assert_eq!(
            exact_tsp_path(&i, &i.all_vertices(), OracleLimit::default()).unwrap_err(),
            Error::TooLarge { n: 13, max_n: 12 }
        );
        let pen = PenaltyMap::uniform(13, 1.0);
        assert!(exact_soft_tsp(&i, &pen, OracleLimit::default()).is_err());
    }

    #[test]
    fn soft_examples() {
        let one = inst(&[(0.5, 0.5)]);
        let (t, c) = exact_soft_tsp(&one, &PenaltyMap::uniform(1, 0.4), OracleLimit::default()).unwrap();
        assert_eq!((t.order, c), (vec![0], 0.0));

        let two = inst(&[(0.0, 0.0), (3.0, 4.0)]);
        let (_, c) = exact_soft_tsp(&two, &PenaltyMap::uniform(2, 1.0), OracleLimit::default()).unwrap();
        assert_eq!(c, 1.0);

        let i = EuclideanInstance::random_unit_square(6, 2).unwrap();
        let (t, c) = exact_soft_tsp(&i, &PenaltyMap::uniform(6, 0.0), OracleLimit::default()).unwrap();
        assert_eq!(c, 0.0);
        assert!(t.len() <= 1);
    }

    #[test]
    fn soft_matches_subset_enumeration() {
        use crate::soft_tsp::soft_cost;
        for seed in 0..3 {
            let i = EuclideanInstance::random_unit_square(6, 40 + seed).unwrap();
            let pen = PenaltyMap::random_range(6, 0.0, 0.5, seed);
            let mut brute = f64::INFINITY;
            for mask in 0usize..(1 << 6) {
                let subset: Vec<usize> = (0..6).filter(|v| mask & (1 << v) != 0).collect();
                for p in permutations(&subset) {
                    brute = brute.min(soft_cost(&i, &pen, &Tour::new(p)).unwrap());
                }
            }
            let (t, c) = exact_soft_tsp(&i, &pen, OracleLimit::default()).unwrap();
            assert!((c - brute).abs() < 1e-12);
            assert!((soft_cost(&i, &pen, &t).unwrap() - c).abs() < 1e-12);
        }
    }

    #[test]
    fn least_squares_recovers_quadratic() {
        let ds = Dataset::from_polynomial(&[4.0, 3.0, 4.0], 0.0, 5.0, 100).unwrap();
        let m = least_squares_fit(&ds, 2).unwrap();
        for (got, want) in m.coeffs().iter().zip([4.0, 3.0, 4.0]) {
            assert!((got - want).abs() < 1e-8, "{:?}", m.coeffs());
        }
        let flat = Dataset::new(vec![0.0, 1.0, 2.0], vec![7.0; 3]).unwrap();
        assert!((least_squares_fit(&flat, 0).unwrap().coeffs()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_residuals_are_orthogonal() {
        let ds = Dataset::generate(&[1.0, -2.0, 0.5, 0.25], 0.3, -2.0, 2.0, 80, 17).unwrap();
        let m = least_squares_fit(&ds, 3).unwrap();
        for k in 0..4 {
            let dot: f64 = ds
                .xs()
                .iter()
                .zip(ds.ys())
                .map(|(&x, &y)| (y - m.eval(x)) * x.powi(k))
                .sum();
            assert!(dot.abs() < 1e-8, "column {k}: {dot}");
        }
    }

    #[test]
    fn least_squares_degenerate() {
        let ds = Dataset::new(vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(least_squares_fit(&ds, 1).unwrap_err(), Error::DegenerateDesign);
        let short = Dataset::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(least_squares_fit(&short, 2).unwrap_err(), Error::DegenerateDesign);
    }
}
