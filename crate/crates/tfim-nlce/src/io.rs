//! Run artifacts: CSV tables with the resolved configuration embedded,
//! a JSON provenance dump, and the append-only checkpoint store that
//! lets interrupted expansions resume.
//!
//! Every emitted file starts with a `# config: {...}` comment so the
//! run that produced it can be replayed from the file alone. Numeric
//! fields print with Rust's shortest-roundtrip formatting, so a replay
//! on the same platform reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nlce::NlceResult;
use crate::noise::ScalingRow;
use crate::optimize::GridSolve;
use crate::scalar::Scalar;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn config_comment<W: Write>(w: &mut W, config: &serde_json::Value) -> Result<()> {
    writeln!(w, "# config: {}", serde_json::to_string(config)?)?;
    Ok(())
}

/// Per-cluster sweep table:
/// `cluster,lx,ly,j_over_h,layers,energy,grad_norm,iterations,converged`.
pub fn write_sweep_csv<S: Scalar>(
    path: &Path,
    config: &serde_json::Value,
    shape: (usize, usize),
    layers: usize,
    records: &[GridSolve<S>],
) -> Result<()> {
    let mut w = create(path)?;
    config_comment(&mut w, config)?;
    writeln!(
        w,
        "cluster,lx,ly,j_over_h,layers,energy,grad_norm,iterations,converged"
    )?;
    for r in records {
        writeln!(
            w,
            "{}x{},{},{},{},{},{},{:e},{},{}",
            shape.0,
            shape.1,
            shape.0,
            shape.1,
            r.j_over_h,
            layers,
            r.energy,
            r.grad_norm,
            r.iterations,
            r.converged
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Expansion series table: `order,j_over_h,energy_per_site,solver`.
pub fn write_nlce_csv<S: Scalar>(
    path: &Path,
    config: &serde_json::Value,
    result: &NlceResult<S>,
) -> Result<()> {
    let solver = match result.solver {
        crate::nlce::SolverKind::Ed => "ed",
        crate::nlce::SolverKind::Vqe => "vqe",
        crate::nlce::SolverKind::Hybrid { .. } => "hybrid",
    };
    let mut w = create(path)?;
    config_comment(&mut w, config)?;
    writeln!(w, "order,j_over_h,energy_per_site,solver")?;
    for (k, row) in result.per_order.iter().enumerate() {
        for (&j, &e) in result.grid.iter().zip(row) {
            writeln!(w, "{},{},{},{}", k + 1, j, e, solver)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Full provenance dump: the resolved configuration plus the complete
/// result, per-cluster energies and diagnostics included.
pub fn write_nlce_json<S: Scalar + Serialize>(
    path: &Path,
    config: &serde_json::Value,
    result: &NlceResult<S>,
) -> Result<()> {
    let doc = serde_json::json!({ "config": config, "result": result });
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Noise study table: `order,mode,sigma,sigma_nlce,n_samples,seed`.
pub fn write_noise_csv<S: Scalar>(
    path: &Path,
    config: &serde_json::Value,
    rows: &[ScalingRow<S>],
) -> Result<()> {
    let mut w = create(path)?;
    config_comment(&mut w, config)?;
    writeln!(w, "order,mode,sigma,sigma_nlce,n_samples,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.order,
            r.mode.label(),
            r.sigma,
            r.sigma_nlce,
            r.n_samples,
            r.seed
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `(J/h, energy per site)` reference table. Lines starting
/// with `#` and a leading header line are skipped.
pub fn read_reference_csv<S: Scalar>(path: &Path) -> Result<Vec<(S, S)>> {
    let file = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(',');
        let a = fields.next().unwrap_or_default().trim();
        let b = fields.next().unwrap_or_default().trim();
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(j), Ok(e)) => pairs.push((crate::scalar::cast(j), crate::scalar::cast(e))),
            // One non-numeric line is the header; anything later is data rot.
            _ if pairs.is_empty() => continue,
            _ => {
                return Err(Error::MalformedData(format!(
                    "reference file line {}: expected two numeric fields, got {trimmed:?}",
                    idx + 1
                )))
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::MalformedData("reference file has no data rows".into()));
    }
    Ok(pairs)
}

/// One completed `(cluster, grid point)` solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointRecord<S> {
    pub lx: usize,
    pub ly: usize,
    pub j_over_h: S,
    pub energy: S,
    pub grad_norm: S,
    pub iterations: usize,
    pub converged: bool,
    pub theta: Vec<S>,
}

/// Append-only JSONL store of completed solves, keyed by cluster shape
/// and coupling. A rerun serves completed work from the store instead
/// of re-optimizing; a torn final line from an interrupted write is
/// dropped on load. Replayed energies are bit-identical to the solves
/// that produced them (the `float_roundtrip` serializer feature).
pub struct Checkpoint<S> {
    path: PathBuf,
    records: BTreeMap<(usize, usize, String), CheckpointRecord<S>>,
}

/// Identical couplings format identically, which is all the key needs;
/// the shortest-roundtrip text also keeps the store human-greppable.
fn coupling_key<S: Scalar>(j: S) -> String {
    format!("{j:e}")
}

impl<S: Scalar + Serialize + DeserializeOwned> Checkpoint<S> {
    /// Opens or creates the store at `path`, loading existing records.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut records = BTreeMap::new();
        if path.exists() {
            let file = BufReader::new(File::open(&path)?);
            let lines: Vec<String> = file.lines().collect::<std::io::Result<_>>()?;
            let last = lines.len();
            for (idx, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CheckpointRecord<S>>(&line) {
                    Ok(rec) => {
                        records.insert((rec.lx, rec.ly, coupling_key(rec.j_over_h)), rec);
                    }
                    Err(_) if idx + 1 == last => break,
                    Err(e) => {
                        return Err(Error::MalformedData(format!(
                            "checkpoint line {}: {e}",
                            idx + 1
                        )))
                    }
                }
            }
        }
        Ok(Checkpoint { path, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, shape: (usize, usize), j: S) -> Option<&CheckpointRecord<S>> {
        self.records.get(&(shape.0, shape.1, coupling_key(j)))
    }

    /// True when every grid point of the shape is stored.
    pub fn covers(&self, shape: (usize, usize), grid: &[S]) -> bool {
        grid.iter().all(|&j| self.get(shape, j).is_some())
    }

    /// Inserts a record and appends it to the store file immediately.
    pub fn put(&mut self, rec: CheckpointRecord<S>) -> Result<()> {
        let mut file = BufWriter::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)?,
        );
        serde_json::to_writer(&mut file, &rec)?;
        writeln!(file)?;
        file.flush()?;
        self.records
            .insert((rec.lx, rec.ly, coupling_key(rec.j_over_h)), rec);
        Ok(())
    }
}
