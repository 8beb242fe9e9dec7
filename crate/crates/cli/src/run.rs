//! Experiment dispatch and run files.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hga_core::{
    constraint_switch_experiment, exact_soft_tsp, least_squares_fit, oracle_cost, run_adaptive, run_hierarchical,
    run_regression_hierarchy, Dataset, EuclideanInstance, OracleLimit, OracleSpec, PenaltyMap, PolynomialModel,
    RegionWeight,
};
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, PenaltyConfig};
use crate::output::{write_json, write_rows, Row};
use crate::plot::{render_svg, Series};

/// File name of the configuration snapshot written next to the runs.
pub const SNAPSHOT: &str = "config.json";

fn tsp_setup(cfg: &ExperimentConfig) -> Result<(EuclideanInstance, PenaltyMap)> {
    let inst_cfg = cfg.instance.as_ref().context("missing instance section")?;
    let n = inst_cfg.vertices;
    let inst = EuclideanInstance::random_unit_square(n, inst_cfg.seed)?;
    let pen = match inst_cfg.penalties {
        PenaltyConfig::Uniform { value } => PenaltyMap::uniform(n, value),
        PenaltyConfig::Range { lo, hi } => PenaltyMap::random_range(n, lo, hi, inst_cfg.seed),
    };
    Ok((inst, pen))
}

fn regression_setup(cfg: &ExperimentConfig) -> Result<(Dataset, OracleSpec, PolynomialModel)> {
    let d = cfg.dataset.as_ref().context("missing dataset section")?;
    let o = cfg.oracle.as_ref().context("missing oracle section")?;
    let ds = Dataset::generate(&d.coeffs, d.noise_std, d.x_lo, d.x_hi, d.points, d.seed)?;
    let oracle = if o.positive_x_weight == 1.0 {
        OracleSpec::huber(ds.clone(), o.delta)?
    } else {
        OracleSpec::weighted_huber(ds.clone(), o.delta, RegionWeight::positive_x(o.positive_x_weight))?
    };
    Ok((ds, oracle, PolynomialModel::new(d.coeffs.clone())?))
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Writer<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn csv(&mut self, stem: &str, rows: &[Row]) -> Result<()> {
        let p = self.path(&format!("{stem}.csv"));
        write_rows(&p, rows)?;
        self.written.push(p);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let p = self.path(name);
        write_json(&p, value)?;
        self.written.push(p);
        Ok(())
    }

    fn svg(&mut self, stem: &str, title: &str, series: &[Series], baseline: Option<f64>) -> Result<()> {
        let p = self.path(&format!("{stem}.svg"));
        std::fs::write(&p, render_svg(title, series, baseline)).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(p);
        Ok(())
    }
}

fn rows_of<'a, T: 'a>(rows: impl IntoIterator<Item = &'a T>) -> Vec<Row>
where
    Row: From<&'a T>,
{
    rows.into_iter().map(Row::from).collect()
}

/// Runs every seed of `cfg` and returns the paths written under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let mut w = Writer {
        dir: &cfg.output_dir,
        written: Vec::new(),
    };
    w.json(SNAPSHOT, &serde_json::to_value(cfg)?)?;
    for &seed in &cfg.seeds {
        let stem = format!("{}_seed{seed}", cfg.experiment.name());
        let hier = cfg.hier(seed);
        match cfg.experiment {
            Experiment::SoftTsp | Experiment::Oracle => {
                let (inst, pen) = tsp_setup(cfg)?;
                let out = run_hierarchical(&inst, &pen, &hier)?;
                let rows = rows_of(&out.history.rows);
                let greedy = out.history.baseline_cost;
                let mut summary = json!({
                    "experiment": cfg.experiment.name(),
                    "seed": seed,
                    "best_cost": out.best_cost,
                    "best_tour": out.best_tour.order,
                    "greedy_cost": greedy,
                    "beats_greedy": out.best_cost < greedy,
                });
                let mut baseline = greedy;
                if cfg.experiment == Experiment::Oracle {
                    let (tour, exact) = exact_soft_tsp(&inst, &pen, OracleLimit::default())?;
                    summary["exact_cost"] = json!(exact);
                    summary["exact_tour"] = json!(tour.order);
                    summary["matches_exact"] = json!((out.best_cost - exact).abs() <= 1e-9 * exact.abs().max(1.0));
                    baseline = exact;
                }
                w.csv(&stem, &rows)?;
                w.json(&format!("{stem}.summary.json"), &summary)?;
                w.svg(&stem, &stem, &[Series::from_rows(&rows, &stem)], Some(baseline))?;
            }
            Experiment::AdaptiveTsp => {
                let (inst, pen) = tsp_setup(cfg)?;
                let steps = cfg.adaptive_steps.context("missing adaptive_steps")?;
                let adaptive = run_adaptive(&inst, &pen, &hier, steps)?;
                let fixed = run_hierarchical(&inst, &pen, &hier)?;
                let fixed_stem = format!("{stem}_fixed");
                let (ra, rf) = (rows_of(&adaptive.history.rows), rows_of(&fixed.history.rows));
                w.csv(&stem, &ra)?;
                w.csv(&fixed_stem, &rf)?;
                w.json(
                    &format!("{stem}.summary.json"),
                    &json!({
                        "experiment": cfg.experiment.name(),
                        "seed": seed,
                        "best_cost": adaptive.best_cost,
                        "best_tour": adaptive.best_tour.order,
                        "fixed_best_cost": fixed.best_cost,
                        "adaptive_not_worse": adaptive.best_cost <= fixed.best_cost,
                        "adaptive_generations": ra.len() - 1,
                        "greedy_cost": adaptive.history.baseline_cost,
                    }),
                )?;
                let series = [Series::from_rows(&ra, &stem), Series::from_rows(&rf, &fixed_stem)];
                w.svg(&stem, &stem, &series, Some(adaptive.history.baseline_cost))?;
            }
            Experiment::ConstraintSwitch => {
                let (inst, _) = tsp_setup(cfg)?;
                let ts = cfg.switch_at.as_deref().context("missing switch_at")?;
                let report = constraint_switch_experiment(&inst, ts, cfg.meta_generations, &hier)?;
                let mut series = Vec::with_capacity(report.curves.len());
                let mut finals = Vec::with_capacity(report.curves.len());
                for c in &report.curves {
                    let rows = rows_of(&c.rows);
                    let curve_stem = format!("{stem}_t{}", c.t);
                    w.csv(&curve_stem, &rows)?;
                    finals.push(json!({"t": c.t, "final_best_cost": rows.last().map(|r| r.best_cost)}));
                    series.push(Series::from_rows(&rows, &curve_stem));
                }
                w.json(
                    &format!("{stem}.summary.json"),
                    &json!({
                        "experiment": cfg.experiment.name(),
                        "seed": seed,
                        "high_before": report.high_before,
                        "high_after": report.high_after,
                        "curves": finals,
                    }),
                )?;
                w.svg(&stem, &stem, &series, None)?;
            }
            Experiment::Regression | Experiment::WeightedRegression => {
                let (ds, oracle, truth) = regression_setup(cfg)?;
                let out = run_regression_hierarchy(&ds, &oracle, &hier)?;
                let rows = rows_of(&out.rows);
                let truth_cost = oracle_cost(&oracle, &truth.predict(ds.xs()))?;
                let ls = least_squares_fit(&ds, truth.degree())?;
                let ls_cost = oracle_cost(&oracle, &ls.predict(ds.xs()))?;
                w.csv(&stem, &rows)?;
                w.json(
                    &format!("{stem}.summary.json"),
                    &json!({
                        "experiment": cfg.experiment.name(),
                        "seed": seed,
                        "best_cost": out.best_cost,
                        "best_hyper": out.best_hyper,
                        "best_coeffs": out.best_model.coeffs(),
                        "truth_oracle_cost": truth_cost,
                        "least_squares_coeffs": ls.coeffs(),
                        "least_squares_oracle_cost": ls_cost,
                        "ratio_to_truth": out.best_cost / truth_cost,
                    }),
                )?;
                w.svg(&stem, &stem, &[Series::from_rows(&rows, &stem)], Some(truth_cost))?;
            }
        }
    }
    Ok(w.written)
}
