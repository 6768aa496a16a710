//! CSV tables and JSON metadata sidecars.

use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::driving::DrivingSpec;
use crate::error::Result;
use crate::hull_trace::{TraceCurve, WeldingTable};
use crate::ode_engine::IntegratorConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub version: &'static str,
    pub spec_hash: Option<String>,
    pub driving: Option<serde_json::Value>,
    pub dt: Option<f64>,
    pub tolerances: IntegratorConfig,
    pub seed: Option<u64>,
    /// Free-form parameters of the run.
    pub params: serde_json::Value,
}

impl Metadata {
    pub fn new(command: &str, spec: Option<&DrivingSpec>, tolerances: IntegratorConfig) -> Self {
        Metadata {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            spec_hash: spec.map(DrivingSpec::spec_hash),
            driving: spec.map(|s| serde_json::to_value(s.to_config()).expect("config serializes")),
            dt: None,
            tolerances,
            seed: None,
            params: serde_json::Value::Null,
        }
    }
}

/// `name.json` next to the table `name.csv`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes the table and its metadata sidecar.
pub fn write_table<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>, meta: &Metadata) -> Result<()> {
    write_rows(path, rows)?;
    write_json(&sidecar_path(path), meta)
}

#[derive(Serialize)]
struct TraceRow {
    t: f64,
    re: f64,
    im: f64,
    cell_step: f64,
}

pub fn trace_rows(curve: &TraceCurve) -> impl Iterator<Item = impl Serialize + '_> {
    curve.times.iter().zip(&curve.points).map(|(&t, p)| TraceRow {
        t,
        re: p.re,
        im: p.im,
        cell_step: curve.cell_step,
    })
}

#[derive(Serialize)]
struct WeldingRow {
    s: f64,
    left: f64,
    right: f64,
    ratio1: f64,
}

pub fn welding_rows(table: &WeldingTable) -> impl Iterator<Item = impl Serialize + '_> {
    (0..table.s_grid.len()).map(|k| WeldingRow {
        s: table.s_grid[k],
        left: table.left[k],
        right: table.right[k],
        ratio1: table.ratio1[k],
    })
}
