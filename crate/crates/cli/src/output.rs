//! Run files: per-generation CSV rows and JSON documents.

use std::path::Path;

use anyhow::{Context, Result};
use hga_core::{MetaRow, RegMetaRow};
use serde::{Deserialize, Serialize};

/// One CSV line: `generation,best_cost,mean_cost,population_size,phase,wall_ms`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub generation: u64,
    pub best_cost: f64,
    pub mean_cost: f64,
    pub population_size: usize,
    pub phase: String,
    pub wall_ms: u64,
}

impl From<&MetaRow> for Row {
    fn from(r: &MetaRow) -> Self {
        Self {
            generation: r.generation,
            best_cost: r.best_cost,
            mean_cost: r.mean_cost,
            population_size: r.population_size,
            phase: r.phase.clone(),
            wall_ms: r.wall_ms,
        }
    }
}

impl From<&RegMetaRow> for Row {
    fn from(r: &RegMetaRow) -> Self {
        Self {
            generation: r.generation,
            best_cost: r.best_cost,
            mean_cost: r.mean_cost,
            population_size: r.population_size,
            phase: r.phase.clone(),
            wall_ms: r.wall_ms,
        }
    }
}

pub fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<Row>, _>>()
        .with_context(|| format!("malformed run file {}", path.display()))?;
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
