use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Simulation};
use crate::ltv::SliceSummary;
use crate::rng::replicate_seed;

/// Condensed result of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub seed: u64,
    /// Mean error at iterations `0..=iterations`.
    pub mean_errors: Vec<f64>,
    pub final_errors: Vec<f64>,
    pub update_counts: Vec<usize>,
    pub beacon_update_counts: Vec<usize>,
    /// First iteration with mean error below the threshold.
    pub iterations_to_threshold: Option<usize>,
    pub slices: Vec<SliceSummary>,
    /// Largest cumulative product norm observed after each slice.
    pub cumulative_norms: Vec<f64>,
    pub max_residual: Option<f64>,
    /// Iterations whose error-recursion residual exceeded its tolerance.
    pub residual_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: Result<ReplicateSummary, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub replicates: Vec<ReplicateOutcome>,
    /// Mean over successful replicates of the per-iteration mean error.
    pub mean_curve: Vec<f64>,
    /// Population standard deviation across replicates, per iteration.
    pub std_curve: Vec<f64>,
}

impl MonteCarloResult {
    pub fn successes(&self) -> impl Iterator<Item = &ReplicateSummary> {
        self.replicates
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &str)> {
        self.replicates
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r.index, e.as_str())))
    }
}

/// Runs one replicate with its own seed.
pub fn run_replicate(cfg: &ExperimentConfig, seed: u64) -> crate::Result<ReplicateSummary> {
    let mut sim = Simulation::new(cfg.with_seed(seed))?;
    let mut mean_errors = Vec::with_capacity(cfg.iterations + 1);
    mean_errors.push(sim.mean_error());
    let mut hit = (mean_errors[0] < cfg.convergence_threshold).then_some(0);
    let mut cumulative_norms = Vec::new();
    let mut residual_violations = 0;
    for k in 1..=cfg.iterations {
        let step = sim.step();
        if step.residual.is_some_and(|r| r > step.residual_tolerance) {
            residual_violations += 1;
        }
        for _ in &step.completed_slices {
            cumulative_norms.push(sim.slices().cumulative_norm());
        }
        let m = sim.mean_error();
        if hit.is_none() && m < cfg.convergence_threshold {
            hit = Some(k);
        }
        mean_errors.push(m);
    }
    Ok(ReplicateSummary {
        seed,
        mean_errors,
        final_errors: sim.errors(),
        update_counts: sim.update_counts().to_vec(),
        beacon_update_counts: sim.beacon_update_counts().to_vec(),
        iterations_to_threshold: hit,
        slices: sim.slices().completed.clone(),
        cumulative_norms,
        max_residual: sim.max_residual(),
        residual_violations,
    })
}

/// Runs `n` replicates in parallel, replicate `r` seeded with
/// `replicate_seed(master, r)`, and aggregates them in replicate order.
pub fn monte_carlo(cfg: &ExperimentConfig, n: usize) -> MonteCarloResult {
    let master = cfg.world.rng_seed;
    let replicates: Vec<ReplicateOutcome> = (0..n)
        .into_par_iter()
        .map(|index| {
            let seed = replicate_seed(master, index as u64);
            ReplicateOutcome {
                index,
                seed,
                result: run_replicate(cfg, seed).map_err(|e| e.to_string()),
            }
        })
        .collect();

    let curves: Vec<&Vec<f64>> = replicates
        .iter()
        .filter_map(|r| r.result.as_ref().ok().map(|s| &s.mean_errors))
        .collect();
    let len = curves.first().map_or(0, |c| c.len());
    let mut mean_curve = vec![0.0; len];
    let mut std_curve = vec![0.0; len];
    if !curves.is_empty() {
        let count = curves.len() as f64;
        for k in 0..len {
            let mu = curves.iter().map(|c| c[k]).sum::<f64>() / count;
            let var = curves.iter().map(|c| (c[k] - mu).powi(2)).sum::<f64>() / count;
            mean_curve[k] = mu;
            std_curve[k] = var.sqrt();
        }
    }
    MonteCarloResult {
        replicates,
        mean_curve,
        std_curve,
    }
}
