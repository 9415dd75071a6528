//! File formats: the model file, run bundles and spine exports.
//!
//! The model file is a JSON object `{ "states": n+1, "Q": [[…], …] }` with
//! row 0 the cemetery. Run bundles are plain CSVs with fixed headers
//! (`events.csv`, `trajectories.csv`) plus a `meta.json`; particle indices
//! are 0-based and event indices 1-based, matching the in-memory types.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fv::FvRun;
use crate::genealogy::{DhpRecord, SpineRecord};
use crate::model::{FiniteChainModel, ValidationErrors};
use crate::sidebranch::BranchingTree;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    states: usize,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
}

/// Read and validate a model file.
pub fn load_model(path: &FsPath) -> Result<FiniteChainModel, IoError> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    // `states` is redundant but must agree when present.
    let model = FiniteChainModel::validate(file.q)?;
    if file.states != model.n_states() {
        return Err(IoError::Validation(ValidationErrors {
            issues: vec![crate::model::ModelIssue::NotSquare {
                rows: file.states,
                row: 0,
                cols: model.n_states(),
            }],
        }));
    }
    Ok(model)
}

pub fn save_model(model: &FiniteChainModel, path: &FsPath) -> Result<(), IoError> {
    let file = ModelFile { states: model.n_states(), q: model.q_rows().to_vec() };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// FNV-1a over the canonical model JSON; stable identification for manifests.
pub fn model_hash(model: &FiniteChainModel) -> String {
    let canonical = serde_json::to_string(model.q_rows()).expect("model serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Write `events.csv`, `trajectories.csv` and `meta.json` into `dir`.
pub fn export_run(run: &FvRun, dir: &FsPath) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let mut events = BufWriter::new(fs::File::create(dir.join("events.csv"))?);
    writeln!(events, "k,tau,killed,target,adopted_state")?;
    for e in &run.events {
        writeln!(
            events,
            "{},{:.17e},{},{},{}",
            e.k, e.tau, e.killed, e.target, e.adopted_state
        )?;
    }
    events.flush()?;

    let mut traj = BufWriter::new(fs::File::create(dir.join("trajectories.csv"))?);
    writeln!(traj, "particle,entry_time,state")?;
    for (p, path) in run.trajectories.iter().enumerate() {
        for &(t, s) in path.segments() {
            writeln!(traj, "{p},{t:.17e},{s}")?;
        }
    }
    traj.flush()?;

    let meta = serde_json::json!({
        "schema_version": 1,
        "model_hash": model_hash(&run.model),
        "n_particles": run.n_particles,
        "horizon": run.horizon,
        "seed": run.rng_seed.root,
        "n_events": run.events.len(),
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Write a branching tree as JSON: nodes keyed by binary index strings
/// ("0", "00", "01", …) with birth/death times, the branched flag and the
/// path segments.
pub fn export_tree(tree: &BranchingTree, path: &FsPath) -> Result<(), IoError> {
    fs::write(path, serde_json::to_string_pretty(tree)?)?;
    Ok(())
}

/// Write a dynamical historical path in the trajectory schema: one row per
/// segment, with the particle column carrying the index map value there.
pub fn export_dhp(dhp: &DhpRecord, path: &FsPath) -> Result<(), IoError> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    writeln!(f, "particle,entry_time,state")?;
    for &(t, s) in dhp.path.segments() {
        writeln!(f, "{},{t:.17e},{s}", dhp.chi_at(t))?;
    }
    f.flush()?;
    Ok(())
}

/// Write `spine.csv` (entry_time, state) and `branch_times.csv` into `dir`.
pub fn export_spine(spine: &SpineRecord, dir: &FsPath) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(fs::File::create(dir.join("spine.csv"))?);
    writeln!(f, "entry_time,state")?;
    for &(t, s) in spine.path.segments() {
        writeln!(f, "{t:.17e},{s}")?;
    }
    f.flush()?;
    let mut b = BufWriter::new(fs::File::create(dir.join("branch_times.csv"))?);
    writeln!(b, "branch_time")?;
    for &t in &spine.branch_times {
        writeln!(b, "{t:.17e}")?;
    }
    b.flush()?;
    Ok(())
}
