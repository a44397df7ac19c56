//! Experiment orchestration: configuration, the simulation loop, metrics,
//! Monte-Carlo replication and output files.

mod config;
mod metrics;
mod monte_carlo;
mod report;

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localizer::{
    run_iteration, AlgorithmConfig, EstimateState, SearchDiagnostics, UpdateRecord,
};
use crate::ltv::{
    assemble_matrices, check_feasibility, verify_error_dynamics, FeasibilityInput,
    FeasibilityReport, SliceParams, SliceState, SliceSummary, SystemMatrices, Theorem1Mode,
};
use crate::point::Point;
use crate::rng::{substream, Purpose};
use crate::world::{union_dim, NoiseConfig, Role, World, WorldConfig};

pub use config::{parse_motion_axis, parse_region, FlatConfig};
pub use metrics::{emit_csv, format_g9, write_csv, MetricsRecord, CSV_HEADER};
pub use monte_carlo::{
    monte_carlo, run_replicate, MonteCarloResult, ReplicateOutcome, ReplicateSummary,
};
pub use report::{write_json, SliceStatistics, Summary};

/// Default noiseless convergence threshold, in meters.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialEstimate {
    /// Uniform over the region, drawn from each robot's estimate stream.
    RandomInRegion,
    /// Placed in a random direction from the region centre, at the given
    /// multiple of the region's largest extent.
    AdverseOffset(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub algorithm: AlgorithmConfig,
    pub noise: NoiseConfig,
    pub iterations: usize,
    pub mc_replicates: usize,
    pub convergence_threshold: f64,
    pub initial_estimate: InitialEstimate,
    pub output_path: Option<PathBuf>,
    /// Run even when the necessary localizability conditions fail.
    pub allow_infeasible: bool,
    pub theorem1_mode: Theorem1Mode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            algorithm: AlgorithmConfig::default(),
            noise: NoiseConfig::none(),
            iterations: 3000,
            mc_replicates: 1,
            convergence_threshold: DEFAULT_THRESHOLD,
            initial_estimate: InitialEstimate::RandomInRegion,
            output_path: None,
            allow_infeasible: false,
            theorem1_mode: Theorem1Mode::Bounded(1000),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.algorithm.validate()?;
        self.noise.validate()?;
        if self.mc_replicates < 1 {
            return Err(Error::Config("at least one replicate is required".into()));
        }
        if !(self.convergence_threshold > 0.0) {
            return Err(Error::Config(
                "convergence threshold must be positive".into(),
            ));
        }
        if let InitialEstimate::AdverseOffset(f) = self.initial_estimate {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Config("adverse offset must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Inputs to the localizability check, from the declared motion models.
    pub fn feasibility_input(&self) -> Result<FeasibilityInput> {
        let world = World::new(self.world.clone())?;
        let subspaces = |role| {
            let spaces: Vec<_> = world
                .nodes()
                .iter()
                .filter(|n| n.role == role)
                .map(|n| n.motion.clone())
                .collect();
            union_dim(&spaces)
        };
        Ok(FeasibilityInput {
            beacons: self.world.n_beacons,
            robots: self.world.n_robots,
            dim: self.world.dim,
            dim_robot_motion: subspaces(Role::Robot),
            dim_beacon_motion: subspaces(Role::Beacon),
        })
    }

    pub fn feasibility(&self) -> Result<FeasibilityReport> {
        Ok(check_feasibility(self.feasibility_input()?))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.world.rng_seed = seed;
        c
    }
}

/// Initial estimates for every robot.
pub fn initial_estimates(cfg: &ExperimentConfig) -> Vec<Point> {
    let w = &cfg.world;
    (0..w.n_robots)
        .map(|id| {
            let mut rng = substream(w.rng_seed, id, Purpose::Estimate);
            match cfg.initial_estimate {
                InitialEstimate::RandomInRegion => w.region.sample(w.dim, &mut rng),
                InitialEstimate::AdverseOffset(multiple) => {
                    let extent = (0..w.dim).map(|k| w.region.extent(k)).fold(0.0, f64::max);
                    let mut dir = Point::ZERO;
                    while dir.norm() < 1e-9 {
                        for k in 0..w.dim {
                            dir[k] = rng.gen_range(-1.0..=1.0);
                        }
                        if dir.norm() > 1.0 {
                            dir = Point::ZERO;
                        }
                    }
                    w.region.center() + dir * (multiple * extent / dir.norm())
                }
            }
        })
        .collect()
}

/// Euclidean error per robot.
pub fn error_norm(estimates: &[Point], truths: &[Point]) -> Result<Vec<f64>> {
    if estimates.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} estimates for {} robots",
            estimates.len(),
            truths.len()
        )));
    }
    Ok(estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| e.distance(t))
        .collect())
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Outcome of one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iteration: u64,
    pub records: Vec<UpdateRecord>,
    pub neighbor_counts: Vec<usize>,
    pub matrices: Vec<SystemMatrices>,
    /// Error-recursion residual; `None` when not applicable (noisy runs, or
    /// updates that are not convex combinations).
    pub residual: Option<f64>,
    /// Tolerance the residual is held to.
    pub residual_tolerance: f64,
    pub completed_slices: Vec<SliceSummary>,
}

/// A single seeded run, advanced one iteration at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ExperimentConfig,
    world: World,
    state: EstimateState,
    slices: SliceState,
    update_counts: Vec<usize>,
    beacon_update_counts: Vec<usize>,
    /// `neighbor_histogram[i][c]`: iterations in which robot `i` had `c` neighbours.
    neighbor_histogram: Vec<Vec<u64>>,
    last_neighbor_counts: Vec<usize>,
    diagnostics: SearchDiagnostics,
    max_residual: Option<f64>,
    ltv_consistent: bool,
    feasibility: FeasibilityReport,
}

impl Simulation {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let feasibility = cfg.feasibility()?;
        if !feasibility.feasible && !cfg.allow_infeasible {
            return Err(Error::Infeasible(feasibility));
        }
        let world = World::new(cfg.world.clone())?;
        let state = EstimateState::new(initial_estimates(&cfg));
        let n = cfg.world.n_robots;
        let last_neighbor_counts = (0..n).map(|i| world.neighbors(i).len()).collect();
        Ok(Simulation {
            slices: SliceState::new(n, SliceParams::new(cfg.algorithm.alpha, cfg.algorithm.beta)),
            update_counts: vec![0; n],
            beacon_update_counts: vec![0; n],
            neighbor_histogram: vec![Vec::new(); n],
            last_neighbor_counts,
            diagnostics: SearchDiagnostics::default(),
            max_residual: None,
            ltv_consistent: true,
            feasibility,
            cfg,
            world,
            state,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn estimates(&self) -> &[Point] {
        &self.state.estimates
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    pub fn errors(&self) -> Vec<f64> {
        error_norm(&self.state.estimates, &self.world.robot_positions())
            .expect("one estimate per robot")
    }

    pub fn mean_error(&self) -> f64 {
        mean(&self.errors())
    }

    /// Updates performed so far, per robot.
    pub fn update_counts(&self) -> &[usize] {
        &self.update_counts
    }

    /// Updates involving a beacon so far, per robot.
    pub fn beacon_update_counts(&self) -> &[usize] {
        &self.beacon_update_counts
    }

    pub fn neighbor_histogram(&self) -> &[Vec<u64>] {
        &self.neighbor_histogram
    }

    pub fn slices(&self) -> &SliceState {
        &self.slices
    }

    pub fn diagnostics(&self) -> SearchDiagnostics {
        self.diagnostics
    }

    pub fn max_residual(&self) -> Option<f64> {
        self.max_residual
    }

    pub fn feasibility(&self) -> &FeasibilityReport {
        &self.feasibility
    }

    /// Whether every iteration so far could be written as `P_k`, `B_k`.
    pub fn ltv_consistent(&self) -> bool {
        self.ltv_consistent
    }

    fn error_vectors(&self) -> Vec<Point> {
        self.state
            .estimates
            .iter()
            .zip(self.world.robot_positions())
            .map(|(e, t)| *e - t)
            .collect()
    }

    pub fn step(&mut self) -> StepReport {
        let e_k = self.error_vectors();
        let outcome = run_iteration(
            &mut self.world,
            &mut self.state,
            &self.cfg.algorithm,
            &self.cfg.noise,
        );
        let iteration = self.state.iteration - 1;
        let n = self.cfg.world.n_robots;

        for r in &outcome.records {
            self.update_counts[r.robot] += 1;
            if r.uses_beacon() {
                self.beacon_update_counts[r.robot] += 1;
            }
        }
        for (i, &c) in outcome.neighbor_counts.iter().enumerate() {
            let h = &mut self.neighbor_histogram[i];
            if h.len() <= c {
                h.resize(c + 1, 0);
            }
            h[c] += 1;
        }
        self.last_neighbor_counts = outcome.neighbor_counts.clone();
        self.diagnostics += outcome.diagnostics;

        let (matrices, completed_slices) =
            match assemble_matrices(&outcome.records, n, self.cfg.world.n_beacons) {
                Ok(mats) if self.ltv_consistent => {
                    let done = self.slices.advance_all(iteration, &mats);
                    (mats, done)
                }
                Ok(mats) => (mats, Vec::new()),
                Err(_) => {
                    self.ltv_consistent = false;
                    (Vec::new(), Vec::new())
                }
            };

        let e_next = self.error_vectors();
        let residual_tolerance = 1e-9 * (1.0 + crate::ltv::error_inf_norm(&e_k));
        let residual = if self.cfg.noise.is_noiseless() && self.ltv_consistent {
            verify_error_dynamics(&e_k, &matrices, &e_next).ok()
        } else {
            None
        };
        if let Some(r) = residual {
            self.max_residual = Some(self.max_residual.map_or(r, |m: f64| m.max(r)));
        }

        StepReport {
            iteration,
            records: outcome.records,
            neighbor_counts: outcome.neighbor_counts,
            matrices,
            residual,
            residual_tolerance,
            completed_slices,
        }
    }

    pub fn metrics(&self) -> MetricsRecord {
        let errors = self.errors();
        MetricsRecord {
            iteration: self.state.iteration,
            mean_error: mean(&errors),
            errors,
            update_counts: self.update_counts.clone(),
            neighbor_counts: self.last_neighbor_counts.clone(),
        }
    }

    pub fn summary(&self) -> Summary {
        Summary::from_simulation(self)
    }
}

/// Full per-iteration metrics of one run, starting with the initial state.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: Vec<MetricsRecord>,
    pub summary: Summary,
}

/// Runs `cfg.iterations` iterations with the configured seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut sim = Simulation::new(cfg.clone())?;
    let mut metrics = Vec::with_capacity(cfg.iterations + 1);
    metrics.push(sim.metrics());
    for _ in 0..cfg.iterations {
        sim.step();
        metrics.push(sim.metrics());
    }
    Ok(ExperimentResult {
        metrics,
        summary: sim.summary(),
    })
}

/// First iteration at which the mean error drops below the threshold, if it
/// does within `max_iterations`.
pub fn iterations_to_threshold(
    cfg: &ExperimentConfig,
    max_iterations: usize,
) -> Result<Option<usize>> {
    let mut sim = Simulation::new(cfg.clone())?;
    if sim.mean_error() < cfg.convergence_threshold {
        return Ok(Some(0));
    }
    for k in 1..=max_iterations {
        sim.step();
        if sim.mean_error() < cfg.convergence_threshold {
            return Ok(Some(k));
        }
    }
    Ok(None)
}
