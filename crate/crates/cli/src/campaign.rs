//! Replicated simulation campaigns: deterministic per-replicate seeding, a
//! rayon worker pool, and aggregation as a fold in replicate-index order
//! regardless of completion order.

use std::path::Path;

use anyhow::Result;
use fv_core::fv::{simulate_fv, FvRun};
use fv_core::genealogy::{default_burn_in, Genealogy};
use fv_core::model::{Distribution, FiniteChainModel, StateId};
use fv_core::seeds;
use rayon::prelude::*;
use serde::Serialize;

/// What one replicate contributes to the aggregate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub index: usize,
    pub seed: u64,
    pub n_events: usize,
    pub mrca_time: f64,
    pub burn_in: f64,
    pub window: f64,
    pub spine_branch_events: usize,
    /// Spine occupation time per interior state over the trimmed window.
    pub spine_occupancy: Vec<f64>,
    /// Particle occupation time per interior state over the whole run.
    pub particle_occupancy: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateStatus {
    pub index: usize,
    pub seed: u64,
    pub status: String,
}

pub struct CampaignOutcome {
    pub summaries: Vec<ReplicateSummary>,
    pub statuses: Vec<ReplicateStatus>,
}

fn occupancy_in_window(
    path: &fv_core::model::Path,
    from: f64,
    to: f64,
    n_interior: usize,
) -> Vec<f64> {
    let mut occ = vec![0.0; n_interior];
    let segs = path.segments();
    for (i, &(entry, state)) in segs.iter().enumerate() {
        let exit = segs.get(i + 1).map_or(path.end_time(), |s| s.0);
        let lo = entry.max(from);
        let hi = exit.min(to);
        if hi > lo && state >= 1 {
            occ[state - 1] += hi - lo;
        }
    }
    occ
}

fn summarize(run: &FvRun, index: usize, seed: u64, burn_override: Option<f64>) -> ReplicateSummary {
    let n_interior = run.model.n_interior();
    let genealogy = Genealogy::new(run);
    let spine = genealogy.extract_spine(run.horizon).expect("horizon in range");
    let burn = burn_override.unwrap_or_else(|| default_burn_in(spine.mrca_time));
    let window = (spine.mrca_time - burn).max(0.0);
    let spine_branch_events = spine.branch_times.iter().filter(|&&u| u > burn).count();
    let spine_occupancy =
        occupancy_in_window(&spine.path, burn, spine.mrca_time, n_interior);
    let mut particle_occupancy = vec![0.0; n_interior];
    for path in &run.trajectories {
        for (i, &v) in path.occupancy(n_interior + 1).iter().skip(1).enumerate() {
            particle_occupancy[i] += v;
        }
    }
    ReplicateSummary {
        index,
        seed,
        n_events: run.events.len(),
        mrca_time: spine.mrca_time,
        burn_in: burn,
        window,
        spine_branch_events,
        spine_occupancy,
        particle_occupancy,
    }
}

/// Run a replicated campaign; `per_run` is applied to each finished run
/// (export hooks) before the run is dropped.
#[allow(clippy::too_many_arguments)]
pub fn run_campaign<F>(
    model: &FiniteChainModel,
    init: &Distribution,
    n_particles: usize,
    horizon: f64,
    replicates: usize,
    root_seed: u64,
    burn_override: Option<f64>,
    per_run: F,
) -> CampaignOutcome
where
    F: Fn(usize, &FvRun, &ReplicateSummary) -> Result<()> + Sync,
{
    let results: Vec<(ReplicateStatus, Option<ReplicateSummary>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = seeds::derive(root_seed, &[seeds::ROLE_REPLICATE, r as u64]);
            let mut init_rng = seeds::stream(seed, &[seeds::ROLE_INIT]);
            let states: Vec<StateId> = (0..n_particles)
                .map(|_| init.sample(&mut init_rng) + 1)
                .collect();
            let outcome = simulate_fv(model, &states, horizon, seed)
                .map_err(anyhow::Error::from)
                .and_then(|run| {
                    let summary = summarize(&run, r, seed, burn_override);
                    per_run(r, &run, &summary)?;
                    Ok(summary)
                });
            match outcome {
                Ok(summary) => (
                    ReplicateStatus { index: r, seed, status: "ok".into() },
                    Some(summary),
                ),
                Err(e) => (
                    ReplicateStatus { index: r, seed, status: format!("failed: {e}") },
                    None,
                ),
            }
        })
        .collect();
    let mut summaries = Vec::new();
    let mut statuses = Vec::new();
    for (status, summary) in results {
        statuses.push(status);
        summaries.extend(summary);
    }
    CampaignOutcome { summaries, statuses }
}

/// Write a manifest next to a command's outputs; primary outputs carry no
/// timestamps so identical configs reproduce byte-identical bundles.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &serde_json::Value,
    model_hash: &str,
    statuses: &[ReplicateStatus],
    outputs: &[String],
) -> Result<()> {
    let manifest = serde_json::json!({
        "schema_version": 1,
        "command": command,
        "config": config,
        "model_hash": model_hash,
        "replicates": statuses,
        "outputs": outputs,
        "incomplete": statuses.iter().filter(|s| s.status != "ok").count(),
    });
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
