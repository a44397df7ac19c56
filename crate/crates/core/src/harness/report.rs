use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mean, ExperimentConfig, Simulation};
use crate::error::{Error, Result};
use crate::localizer::SearchDiagnostics;
use crate::ltv::{check_theorem1, FeasibilityReport, Theorem1Report};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStatistics {
    pub completed: usize,
    pub max_length: usize,
    pub mean_length: f64,
    /// Slices whose product norm exceeded the slice bound.
    pub bound_violations: usize,
    pub max_product_norm: f64,
    pub cumulative_norm: f64,
}

/// Structured end-of-run report, written as JSON next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub iterations: u64,
    pub feasibility: FeasibilityReport,
    pub final_errors: Vec<f64>,
    pub final_mean_error: f64,
    pub update_counts: Vec<usize>,
    pub beacon_update_counts: Vec<usize>,
    pub neighbor_histogram: Vec<Vec<u64>>,
    pub slices: SliceStatistics,
    pub theorem1: Theorem1Report,
    /// Largest error-recursion residual; absent for noisy runs.
    pub max_error_dynamics_residual: Option<f64>,
    pub search: SearchDiagnostics,
}

impl Summary {
    pub fn from_simulation(sim: &Simulation) -> Self {
        let st = sim.slices();
        let done = &st.completed;
        let lengths: Vec<f64> = done.iter().map(|s| s.length as f64).collect();
        let errors = sim.errors();
        Summary {
            config: sim.config().clone(),
            iterations: sim.iteration(),
            feasibility: sim.feasibility().clone(),
            final_mean_error: mean(&errors),
            final_errors: errors,
            update_counts: sim.update_counts().to_vec(),
            beacon_update_counts: sim.beacon_update_counts().to_vec(),
            neighbor_histogram: sim.neighbor_histogram().to_vec(),
            slices: SliceStatistics {
                completed: done.len(),
                max_length: done.iter().map(|s| s.length).max().unwrap_or(0),
                mean_length: mean(&lengths),
                bound_violations: done.iter().filter(|s| !s.within_bound()).count(),
                max_product_norm: done.iter().map(|s| s.product_inf_norm).fold(0.0, f64::max),
                cumulative_norm: st.cumulative_norm(),
            },
            theorem1: check_theorem1(done, sim.config().theorem1_mode),
            max_error_dynamics_residual: sim.max_residual(),
            search: sim.diagnostics(),
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Contract(format!("cannot serialise report: {e}")))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
