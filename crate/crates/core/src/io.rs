//! Columnar text storage for batches and trajectories, plus report writers.
//!
//! A batch `name` is stored as `name.csv` (header `x1..xn`, one configuration
//! per row, shortest round-trip decimal doubles) and `name.json` (sidecar
//! with parameters and provenance). Trajectories add a leading `t` column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::dynamics::{DbmConfig, Trajectory};
use crate::ensemble::{Configuration, EnsembleParams, Provenance, SampleBatch};
use crate::error::{Error, Result};

const BATCH_FORMAT: &str = "cbe-batch/1";
const TRAJECTORY_FORMAT: &str = "cbe-trajectory/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BatchSidecar {
    format: String,
    rows: usize,
    params: EnsembleParams,
    provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectorySidecar {
    format: String,
    rows: usize,
    n: usize,
    beta: f64,
    dbm: DbmConfig,
}

/// Paths of the two files making up a stored batch or trajectory.
pub fn artifact_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("csv"), base.with_extension("json"))
}

fn angle_header(n: usize, time: bool) -> Vec<String> {
    let mut h = Vec::with_capacity(n + 1);
    if time {
        h.push("t".to_string());
    }
    h.extend((1..=n).map(|j| format!("x{j}")));
    h
}

fn write_rows<'a>(
    path: &Path,
    header: Vec<String>,
    rows: impl Iterator<Item = (Option<f64>, &'a [f64])>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (t, xs) in rows {
        record.clear();
        record.extend(t.map(|t| t.to_string()));
        record.extend(xs.iter().map(|x| x.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path, time: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    let offset = usize::from(time);
    if width < 1 + offset {
        return Err(Error::Malformed(format!("{}: no angle columns", path.display())));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Malformed(format!("{} row {}: {e}", path.display(), i + 1)))
        };
        let vals = rec.iter().map(parse).collect::<Result<Vec<f64>>>()?;
        if time {
            times.push(vals[0]);
        }
        rows.push(vals[offset..].to_vec());
    }
    Ok((times, rows))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes `base.csv` and `base.json`; returns both paths.
pub fn write_batch(base: &Path, batch: &SampleBatch) -> Result<Vec<PathBuf>> {
    let (csv_path, json_path) = artifact_paths(base);
    let rows = batch.configs.iter().map(|c| (None, c.angles()));
    write_rows(&csv_path, angle_header(batch.params.n, false), rows)?;
    let sidecar = BatchSidecar {
        format: BATCH_FORMAT.into(),
        rows: batch.len(),
        params: batch.params,
        provenance: batch.provenance.clone(),
    };
    write_json_file(&json_path, &sidecar)?;
    Ok(vec![csv_path, json_path])
}

pub fn read_batch(base: &Path) -> Result<SampleBatch> {
    let (csv_path, json_path) = artifact_paths(base);
    let sidecar: BatchSidecar = read_json_file(&json_path)?;
    if sidecar.format != BATCH_FORMAT {
        return Err(Error::Malformed(format!("unexpected format tag {:?}", sidecar.format)));
    }
    let (_, rows) = read_rows(&csv_path, false)?;
    if rows.len() != sidecar.rows {
        return Err(Error::Malformed(format!(
            "sidecar declares {} rows, table has {}",
            sidecar.rows,
            rows.len()
        )));
    }
    let configs = rows.into_iter().map(Configuration::new).collect::<Result<Vec<_>>>()?;
    SampleBatch::new(configs, sidecar.params, sidecar.provenance)
}

/// Writes a trajectory as `base.csv` (with a `t` column) and `base.json`.
pub fn write_trajectory(base: &Path, traj: &Trajectory, beta: f64, cfg: &DbmConfig) -> Result<Vec<PathBuf>> {
    let (csv_path, json_path) = artifact_paths(base);
    let n = traj.n();
    let rows = traj.times.iter().zip(&traj.states).map(|(&t, s)| (Some(t), s.angles()));
    write_rows(&csv_path, angle_header(n, true), rows)?;
    let sidecar =
        TrajectorySidecar { format: TRAJECTORY_FORMAT.into(), rows: traj.times.len(), n, beta, dbm: cfg.clone() };
    write_json_file(&json_path, &sidecar)?;
    Ok(vec![csv_path, json_path])
}

pub fn read_trajectory(base: &Path) -> Result<(Trajectory, f64, DbmConfig)> {
    let (csv_path, json_path) = artifact_paths(base);
    let sidecar: TrajectorySidecar = read_json_file(&json_path)?;
    if sidecar.format != TRAJECTORY_FORMAT {
        return Err(Error::Malformed(format!("unexpected format tag {:?}", sidecar.format)));
    }
    let (times, rows) = read_rows(&csv_path, true)?;
    let states = rows.into_iter().map(Configuration::new).collect::<Result<Vec<_>>>()?;
    Ok((Trajectory::new(times, states)?, sidecar.beta, sidecar.dbm))
}

/// Pretty JSON report.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json_file(path, value)
}

/// CSV table from serializable rows (header taken from field names).
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
