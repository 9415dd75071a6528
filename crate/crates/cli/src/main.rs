//! `fv` — experiment runner for Fleming-Viot particle-system campaigns.
//!
//! Subcommands: `validate`, `exact`, `simulate`, `sidebranch`, `sweep`.
//! Parameters come from an optional JSON config file plus flags (flags win);
//! all primary outputs are timestamp-free so identical configs reproduce
//! byte-identical bundles.

mod campaign;
mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fv_core::ctmc;
use fv_core::fv::ResampleEvent;
use fv_core::genealogy::Genealogy;
use fv_core::io as fvio;
use fv_core::model::FiniteChainModel;
use fv_core::pairchain;
use fv_core::seeds;
use fv_core::sidebranch::{self, LambdaProfile, SidebranchError};
use fv_core::stats;
use rayon::prelude::*;

use campaign::{run_campaign, write_manifest, ReplicateStatus};
use config::{ExperimentConfig, InitSpec};

#[derive(Parser)]
#[command(name = "fv", about = "Fleming-Viot particle systems on finite chains", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonFlags {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file: {"states": n+1, "Q": [[…], …]} with row 0 the cemetery.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Particle counts (repeatable / comma-separated for sweep).
    #[arg(long, value_delimiter = ',')]
    particles: Option<Vec<usize>>,
    /// Simulation horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of replicate runs.
    #[arg(long)]
    replicates: Option<usize>,
    /// Root seed; replicate streams derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial distribution: qsd | delta:x | w1,w2,…
    #[arg(long)]
    init: Option<InitSpec>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Spine burn-in override (default: min(1, mrca/4) per replicate).
    #[arg(long)]
    burn_in: Option<f64>,
    /// Node cap for side-branch trees.
    #[arg(long)]
    node_cap: Option<usize>,
    /// Oracle sample size for sidebranch comparisons.
    #[arg(long)]
    oracle_trees: Option<usize>,
}

impl CommonFlags {
    fn resolve(self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(base.overlay(ExperimentConfig {
            model: self.model,
            particles: self.particles,
            horizon: self.horizon,
            replicates: self.replicates,
            seed: self.seed,
            init: self.init,
            out: self.out,
            burn_in: self.burn_in,
            node_cap: self.node_cap,
            oracle_trees: self.oracle_trees,
        }))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model file and report every defect.
    Validate {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Exact two-particle analysis: stationary law, race function, spine
    /// marginal, QSD and Q-process, with their gaps.
    Exact {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Replicated N-particle simulation with full event logs and spine
    /// statistics.
    Simulate {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// First-side-branch trees versus the limiting branching process.
    Sidebranch {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Spine occupancy across particle counts, against the Q-process
    /// stationary law.
    Sweep {
        #[command(flatten)]
        flags: CommonFlags,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { flags } => cmd_validate(flags),
        Command::Exact { flags } => cmd_exact(flags),
        Command::Simulate { flags } => cmd_simulate(flags),
        Command::Sidebranch { flags } => cmd_sidebranch(flags),
        Command::Sweep { flags } => cmd_sweep(flags),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_model(cfg: &ExperimentConfig) -> Result<FiniteChainModel> {
    let path = cfg.model_path()?;
    fvio::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn cmd_validate(flags: CommonFlags) -> Result<()> {
    let cfg = flags.resolve()?;
    let model = load_model(&cfg)?;
    println!(
        "ok: n={} interior states, communicating, cemetery reachable",
        model.n_interior()
    );
    Ok(())
}

fn cmd_exact(flags: CommonFlags) -> Result<()> {
    let cfg = flags.resolve()?;
    let model = load_model(&cfg)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;

    let pair = pairchain::product_generator(&model);
    let pi = pairchain::stationary(&pair.generator)?;
    let race = pairchain::race_harmonic(&model)?;
    let report = pairchain::fixed_n_gap_report(&model)?;
    let qsd = ctmc::qsd(&model)?;
    let qp = ctmc::qprocess_generator(&model)?;

    // Internal invariant checks before anything is written.
    let n = model.n_interior();
    let pi_sum: f64 = pi.weights().iter().sum();
    if (pi_sum - 1.0).abs() > 1e-10 {
        bail!("pair stationary law does not sum to one");
    }
    let mut f_table = vec![vec![0.0; n]; n];
    for x in 1..=n {
        for y in 1..=n {
            let f = race.prob_second_dies_first(x, y);
            if !(-1e-10..=1.0 + 1e-10).contains(&f) {
                bail!("race function violates the maximum principle at ({x},{y})");
            }
            f_table[x - 1][y - 1] = f;
        }
    }

    let json = serde_json::json!({
        "schema_version": 1,
        "model_hash": fvio::model_hash(&model),
        "pair_stationary": pi.weights(),
        "race_f": f_table,
        "spine_marginal": report.spine_marginal,
        "qsd": { "nu": qsd.nu.weights(), "lambda_inf": qsd.lambda_inf, "phi": qsd.phi },
        "qprocess": {
            "generator": qp.generator.to_rows(),
            "stationary": qp.stationary.weights(),
        },
        "gaps": {
            "spine_vs_qsd": report.gap_spine_vs_qsd,
            "spine_vs_qprocess": report.gap_spine_vs_qprocess,
            "qsd_vs_qprocess": report.gap_qsd_vs_qprocess,
        },
    });
    let path = out.join("exact_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&json)?)?;
    write_manifest(
        &out,
        "exact",
        &serde_json::to_value(&cfg)?,
        &fvio::model_hash(&model),
        &[],
        &["exact_report.json".into()],
    )?;
    println!(
        "spine marginal {:?}; qsd {:?} (lambda {:.6}); q-process stationary {:?}",
        report.spine_marginal, report.qsd, qsd.lambda_inf, report.qprocess_stationary
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(flags: CommonFlags) -> Result<()> {
    let cfg = flags.resolve()?;
    let model = load_model(&cfg)?;
    let n_particles = match cfg.particles.as_deref() {
        Some([n]) => *n,
        Some(_) => bail!("simulate takes exactly one --particles value"),
        None => bail!("--particles is required"),
    };
    if n_particles < 2 {
        bail!("a Fleming-Viot run needs at least two particles, got {n_particles}");
    }
    let horizon = cfg.horizon.context("--horizon is required")?;
    let init = cfg.init_spec().resolve(&model)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;

    let outcome = run_campaign(
        &model,
        &init,
        n_particles,
        horizon,
        cfg.replicate_count(),
        cfg.seed_value(),
        cfg.burn_in,
        |r, run, _summary| {
            let dir = out.join(format!("rep_{r:03}"));
            fvio::export_run(run, &dir)?;
            let genealogy = Genealogy::new(run);
            let spine = genealogy.extract_spine(run.horizon)?;
            fvio::export_spine(&spine, &dir)?;
            Ok(())
        },
    );

    // Aggregate: deterministic fold in replicate-index order.
    let n = model.n_interior();
    let mut spine_occ = vec![0.0; n];
    let mut particle_occ = vec![0.0; n];
    let mut events = 0u64;
    let mut exposure = 0.0;
    let mut mrcas: Vec<f64> = Vec::new();
    for s in &outcome.summaries {
        for i in 0..n {
            spine_occ[i] += s.spine_occupancy[i];
            particle_occ[i] += s.particle_occupancy[i];
        }
        events += s.spine_branch_events as u64;
        exposure += s.window;
        mrcas.push(s.mrca_time);
    }
    mrcas.sort_by(f64::total_cmp);
    let rate = if exposure > 0.0 {
        Some(stats::poisson_rate_ci(events, exposure, 0.95)?)
    } else {
        None
    };
    let normalize = |v: &[f64]| -> Vec<f64> {
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter().map(|x| x / total).collect()
        } else {
            vec![0.0; v.len()]
        }
    };
    let summary = serde_json::json!({
        "schema_version": 1,
        "replicates": outcome.summaries.len(),
        "particle_occupancy": normalize(&particle_occ),
        "spine_occupancy": normalize(&spine_occ),
        "spine_branch_rate": rate.as_ref().map(|r| serde_json::json!({
            "events": r.events,
            "exposure": r.exposure,
            "rate": r.rate,
            "ci_low": r.ci_low,
            "ci_high": r.ci_high,
        })),
        "mrca_times": mrcas,
        "per_replicate": outcome.summaries,
    });
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;

    let mut outputs: Vec<String> = vec!["summary.json".into()];
    for s in &outcome.statuses {
        if s.status == "ok" {
            outputs.push(format!("rep_{:03}/", s.index));
        }
    }
    write_manifest(
        &out,
        "simulate",
        &serde_json::to_value(&cfg)?,
        &fvio::model_hash(&model),
        &outcome.statuses,
        &outputs,
    )?;
    let failed = outcome.statuses.iter().filter(|s| s.status != "ok").count();
    println!(
        "{} replicates ({} failed); summary in {}",
        outcome.statuses.len(),
        failed,
        out.join("summary.json").display()
    );
    if failed > 0 {
        bail!("{failed} replicates failed; see manifest.json");
    }
    Ok(())
}

fn cmd_sidebranch(flags: CommonFlags) -> Result<()> {
    let cfg = flags.resolve()?;
    let model = load_model(&cfg)?;
    let n_particles = match cfg.particles.as_deref() {
        Some([n]) => *n,
        _ => 250,
    };
    if n_particles < 2 {
        bail!("a Fleming-Viot run needs at least two particles, got {n_particles}");
    }
    let replicates = cfg.replicate_count();
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| auto_horizon(&model, n_particles));
    let init = cfg.init_spec().resolve(&model)?;
    let node_cap = cfg.node_cap.unwrap_or(50_000);
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let root_seed = cfg.seed_value();

    // Empirical side: the first interior spine branch of each replicate.
    enum Extraction {
        Tree { size: usize, lifetime: f64 },
        Truncated,
        NoBranch,
    }
    let results: Vec<(ReplicateStatus, Option<Extraction>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = seeds::derive(root_seed, &[seeds::ROLE_REPLICATE, r as u64]);
            let mut init_rng = seeds::stream(seed, &[seeds::ROLE_INIT]);
            let states: Vec<usize> = (0..n_particles)
                .map(|_| init.sample(&mut init_rng) + 1)
                .collect();
            let outcome = fv_core::fv::simulate_fv(&model, &states, horizon, seed)
                .map_err(anyhow::Error::from)
                .and_then(|run| {
                    let genealogy = Genealogy::new(&run);
                    let spine = genealogy.extract_spine(horizon)?;
                    let Some(&u1) = spine.branch_times.iter().find(|&&u| u < spine.mrca_time)
                    else {
                        return Ok(Extraction::NoBranch);
                    };
                    let k = run
                        .events
                        .binary_search_by(|e: &ResampleEvent| e.tau.total_cmp(&u1))
                        .expect("branch times are event times")
                        + 1;
                    let event = &run.events[k - 1];
                    let continuation = spine
                        .label
                        .pairs
                        .iter()
                        .find(|&&(_, b)| b == k)
                        .expect("interior branch is in the prefix")
                        .0;
                    let j2 = if event.killed == continuation {
                        event.target
                    } else {
                        event.killed
                    };
                    match sidebranch::extract_z_tree(&genealogy, &spine, (j2, u1), node_cap) {
                        Ok(tree) if !tree.truncated => Ok(Extraction::Tree {
                            size: tree.size(),
                            lifetime: tree.lifetime(),
                        }),
                        Ok(_) | Err(SidebranchError::NodeCapExceeded(_)) => {
                            Ok(Extraction::Truncated)
                        }
                        Err(e) => Err(e.into()),
                    }
                });
            match outcome {
                Ok(extraction) => (
                    ReplicateStatus { index: r, seed, status: "ok".into() },
                    Some(extraction),
                ),
                Err(e) => (
                    ReplicateStatus { index: r, seed, status: format!("failed: {e}") },
                    None,
                ),
            }
        })
        .collect();
    let statuses: Vec<ReplicateStatus> = results.iter().map(|(s, _)| s.clone()).collect();
    let mut z_sizes = Vec::new();
    let mut z_lifetimes = Vec::new();
    let mut truncated = 0usize;
    let mut no_branch = 0usize;
    for (_, extraction) in results {
        match extraction {
            Some(Extraction::Tree { size, lifetime }) => {
                z_sizes.push(size);
                z_lifetimes.push(lifetime);
            }
            Some(Extraction::Truncated) => truncated += 1,
            Some(Extraction::NoBranch) => no_branch += 1,
            None => {}
        }
    }

    // Oracle side: the limiting tree at the stationary mixture.
    let lambda = ctmc::qsd(&model)?.lambda_inf;
    let pi_inf = ctmc::qprocess_generator(&model)?.stationary;
    let oracle_n = cfg.oracle_trees.unwrap_or(4 * replicates.max(1));
    let oracle: Vec<Option<(usize, f64)>> = (0..oracle_n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream(root_seed, &[seeds::ROLE_VTREE, i as u64]);
            let root = pi_inf.sample(&mut rng) + 1;
            match sidebranch::simulate_v_tree(
                &model,
                &LambdaProfile::Constant(lambda),
                0.0,
                root,
                f64::INFINITY,
                node_cap,
                &mut rng,
            ) {
                Ok(tree) => Some((tree.size(), tree.lifetime())),
                Err(SidebranchError::NodeCapExceeded(_)) => None,
                Err(e) => panic!("oracle tree failed: {e}"),
            }
        })
        .collect();
    let oracle_sizes: Vec<usize> = oracle.iter().flatten().map(|&(s, _)| s).collect();
    let mut oracle_lifetimes: Vec<f64> = oracle.iter().flatten().map(|&(_, l)| l).collect();
    let oracle_capped = oracle.len() - oracle_sizes.len();

    // Size classes {1, 3, 5, 7, >=9} and oracle lifetime quartiles.
    let classify = |size: usize| -> usize {
        match size {
            1 => 0,
            3 => 1,
            5 => 2,
            7 => 3,
            _ => 4,
        }
    };
    let mut observed = [0u64; 5];
    for &s in &z_sizes {
        observed[classify(s)] += 1;
    }
    let mut oracle_counts = [0u64; 5];
    for &s in &oracle_sizes {
        oracle_counts[classify(s)] += 1;
    }
    let expected: Vec<f64> = oracle_counts
        .iter()
        .map(|&c| c as f64 / oracle_sizes.len().max(1) as f64)
        .collect();
    let (size_stat, size_p) = stats::chisq_gof(&observed, &expected)?;

    oracle_lifetimes.sort_by(f64::total_cmp);
    let quartile = |q: f64| oracle_lifetimes[(q * (oracle_lifetimes.len() - 1) as f64) as usize];
    let cuts = [quartile(0.25), quartile(0.5), quartile(0.75)];
    let mut life_observed = [0u64; 4];
    for &l in &z_lifetimes {
        let class = cuts.iter().filter(|&&c| l > c).count();
        life_observed[class] += 1;
    }
    let (life_stat, life_p) = stats::chisq_gof(&life_observed, &[0.25; 4])?;

    let truncation_fraction =
        truncated as f64 / (truncated + z_sizes.len()).max(1) as f64;
    let report = serde_json::json!({
        "schema_version": 1,
        "model_hash": fvio::model_hash(&model),
        "n_particles": n_particles,
        "horizon": horizon,
        "z_trees": z_sizes.len(),
        "no_branch_replicates": no_branch,
        "truncation_fraction": truncation_fraction,
        "oracle_trees": oracle_sizes.len(),
        "oracle_capped": oracle_capped,
        "size_classes": { "labels": ["1", "3", "5", "7", ">=9"],
                          "observed": observed, "expected": expected,
                          "chi2": size_stat, "p": size_p },
        "lifetime_quartiles": { "cuts": cuts, "observed": life_observed,
                                "chi2": life_stat, "p": life_p },
    });
    std::fs::write(out.join("sidebranch_report.json"), serde_json::to_string_pretty(&report)?)?;
    write_manifest(
        &out,
        "sidebranch",
        &serde_json::to_value(&cfg)?,
        &fvio::model_hash(&model),
        &statuses,
        &["sidebranch_report.json".into()],
    )?;
    println!(
        "{} side-branch trees vs {} oracle trees: size p = {size_p:.4}, lifetime p = {life_p:.4}, truncation {truncation_fraction:.4}",
        z_sizes.len(),
        oracle_sizes.len()
    );
    Ok(())
}

/// Horizon long enough for the all-particle MRCA: lineages merge at rate
/// about lambda k(k-1)/(N-1), so full coalescence needs roughly N/lambda.
fn auto_horizon(model: &FiniteChainModel, n_particles: usize) -> f64 {
    let lambda = ctmc::qsd(model).map(|q| q.lambda_inf).unwrap_or(1.0);
    30.0 + 1.6 * n_particles as f64 / lambda
}

fn cmd_sweep(flags: CommonFlags) -> Result<()> {
    let cfg = flags.resolve()?;
    let model = load_model(&cfg)?;
    let particle_list = cfg
        .particles
        .clone()
        .context("--particles is required (comma-separated list)")?;
    if particle_list.iter().any(|&n| n < 2) {
        bail!("a Fleming-Viot run needs at least two particles");
    }
    let init = cfg.init_spec().resolve(&model)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let replicates = cfg.replicate_count();
    let pi_inf = ctmc::qprocess_generator(&model)?.stationary;
    let n = model.n_interior();

    let mut csv = String::from("particles,state,occupancy,ci_low,ci_high,tv_to_qprocess_stationary\n");
    let mut all_statuses = Vec::new();
    for (row, &n_particles) in particle_list.iter().enumerate() {
        let horizon = cfg
            .horizon
            .unwrap_or_else(|| auto_horizon(&model, n_particles));
        let outcome = run_campaign(
            &model,
            &init,
            n_particles,
            horizon,
            replicates,
            seeds::derive(cfg.seed_value(), &[row as u64]),
            cfg.burn_in,
            |_, _, _| Ok(()),
        );
        let usable: Vec<_> = outcome
            .summaries
            .iter()
            .filter(|s| s.window > 0.0)
            .collect();
        let mut pooled = vec![0.0; n];
        for s in &usable {
            for (acc, v) in pooled.iter_mut().zip(&s.spine_occupancy) {
                *acc += v;
            }
        }
        let total: f64 = pooled.iter().sum();
        let occupancy: Vec<f64> = if total > 0.0 {
            pooled.iter().map(|x| x / total).collect()
        } else {
            vec![f64::NAN; n]
        };
        let tv = if total > 0.0 {
            0.5 * occupancy
                .iter()
                .zip(pi_inf.weights())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        } else {
            f64::NAN
        };
        for state in 1..=n {
            // Replicate-level spread of the per-state fraction.
            let fractions: Vec<f64> = usable
                .iter()
                .filter(|s| s.window > 0.0)
                .map(|s| s.spine_occupancy[state - 1] / s.window)
                .collect();
            let (lo, hi) = if fractions.len() >= 2 {
                let m = fractions.iter().sum::<f64>() / fractions.len() as f64;
                let var = fractions.iter().map(|f| (f - m).powi(2)).sum::<f64>()
                    / (fractions.len() as f64 - 1.0);
                let se = (var / fractions.len() as f64).sqrt();
                (m - 1.96 * se, m + 1.96 * se)
            } else {
                (f64::NAN, f64::NAN)
            };
            csv.push_str(&format!(
                "{n_particles},{state},{:.6},{lo:.6},{hi:.6},{tv:.6}\n",
                occupancy[state - 1]
            ));
        }
        all_statuses.extend(outcome.statuses);
    }
    let mut file = std::fs::File::create(out.join("sweep.csv"))?;
    file.write_all(csv.as_bytes())?;
    write_manifest(
        &out,
        "sweep",
        &serde_json::to_value(&cfg)?,
        &fvio::model_hash(&model),
        &all_statuses,
        &["sweep.csv".into()],
    )?;
    println!("wrote {}", out.join("sweep.csv").display());
    Ok(())
}
