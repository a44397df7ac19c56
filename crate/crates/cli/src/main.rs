use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use convexloc::harness::{
    emit_csv, format_g9, monte_carlo, run_experiment, write_json, ExperimentConfig, FlatConfig,
};
use convexloc::localizer::UpdateMode;
use convexloc::world::NoiseModel;
use convexloc::Error;

/// Simulate opportunistic barycentric localization of a robot swarm.
#[derive(Debug, Parser)]
#[command(name = "convexloc", version)]
struct Args {
    /// TOML file with the same keys as the long flags (dashes as underscores).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    robots: Option<usize>,
    #[arg(long)]
    beacons: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Region extents, e.g. 20x20 or 20x20x20.
    #[arg(long)]
    region: Option<String>,
    /// Communication radius in meters.
    #[arg(long)]
    radius: Option<f64>,
    /// Largest step a robot takes per iteration, in meters.
    #[arg(long)]
    dmax: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte-Carlo replicates.
    #[arg(long)]
    mc: Option<usize>,
    /// Minimum beacon weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Self-weight of an update.
    #[arg(long)]
    beta: Option<f64>,
    /// Relative inclusion error threshold on noisy ranges.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    #[arg(long)]
    kd: Option<f64>,
    #[arg(long)]
    ktheta: Option<f64>,
    #[arg(long)]
    kr: Option<f64>,
    /// Fraction for proportional noise, e.g. 0.05 for +-5%.
    #[arg(long)]
    prop_frac: Option<f64>,
    #[arg(long, value_enum)]
    update_mode: Option<ModeArg>,
    /// Output CSV path; the JSON summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start every estimate this many region sizes away from the centre.
    #[arg(long)]
    adverse_init: Option<f64>,
    /// Run even if the configuration cannot localize every robot.
    #[arg(long)]
    allow_infeasible: bool,
    /// Mean-error threshold for convergence, in meters.
    #[arg(long)]
    threshold: Option<f64>,
    /// Restrict robot motion to one direction: x, y, z or e.g. 1,1.
    #[arg(long)]
    motion_axis: Option<String>,
    /// Turn off the safeguards for noisy ranges.
    #[arg(long)]
    no_safeguards: bool,
    /// Per-iteration probability that a robot drops out of communication.
    #[arg(long)]
    drop_prob: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseArg {
    None,
    Model1,
    Model2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    First,
    All,
}

impl Args {
    fn flat(&self) -> FlatConfig {
        FlatConfig {
            robots: self.robots,
            beacons: self.beacons,
            dim: self.dim,
            region: self.region.clone(),
            radius: self.radius,
            dmax: self.dmax,
            iters: self.iters,
            seed: self.seed,
            mc: self.mc,
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            noise: self.noise.map(|n| match n {
                NoiseArg::None => NoiseModel::None,
                NoiseArg::Model1 => NoiseModel::Model1,
                NoiseArg::Model2 => NoiseModel::Model2,
            }),
            kd: self.kd,
            ktheta: self.ktheta,
            kr: self.kr,
            prop_frac: self.prop_frac,
            update_mode: self.update_mode.map(|m| match m {
                ModeArg::First => UpdateMode::FirstSet,
                ModeArg::All => UpdateMode::AllSets,
            }),
            out: self.out.clone(),
            adverse_init: self.adverse_init,
            allow_infeasible: self.allow_infeasible.then_some(true),
            threshold: self.threshold,
            motion_axis: self.motion_axis.clone(),
            no_safeguards: self.no_safeguards.then_some(true),
            drop_prob: self.drop_prob,
        }
    }
}

fn build_config(args: &Args) -> anyhow::Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::default(),
    };
    Ok(file
        .merged_with(args.flat())
        .apply(ExperimentConfig::default())?)
}

fn write_aggregate(path: &Path, mean: &[f64], std: &[f64]) -> anyhow::Result<()> {
    let mut text = String::from("iter,mean_err,std_err\n");
    for (k, (m, s)) in mean.iter().zip(std).enumerate() {
        text.push_str(&format!("{k},{},{}\n", format_g9(*m), format_g9(*s)));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let out = cfg
        .output_path
        .clone()
        .unwrap_or_else(|| PathBuf::from("convexloc.csv"));
    let json = out.with_extension("json");
    if cfg.mc_replicates <= 1 {
        let result = run_experiment(cfg)?;
        emit_csv(&result.metrics, &out)?;
        write_json(&result.summary, &json)?;
        let s = &result.summary;
        println!(
            "{} iterations, final mean error {} m, {} slices, updates per robot {:?}",
            s.iterations,
            format_g9(s.final_mean_error),
            s.slices.completed,
            s.update_counts
        );
    } else {
        // Fail fast on an infeasible setup instead of once per replicate.
        convexloc::harness::Simulation::new(cfg.clone())?;
        let mc = monte_carlo(cfg, cfg.mc_replicates);
        write_aggregate(&out, &mc.mean_curve, &mc.std_curve)?;
        write_json(&mc, &json)?;
        for (index, err) in mc.failures() {
            eprintln!("replicate {index} failed: {err}");
        }
        println!(
            "{} replicates, final mean error {} m",
            mc.successes().count(),
            mc.mean_curve.last().map_or("n/a".into(), |v| format_g9(*v))
        );
    }
    println!("wrote {} and {}", out.display(), json.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = build_config(&args).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Infeasible(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
