use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, InitialEstimate};
use crate::error::{Error, Result};
use crate::localizer::UpdateMode;
use crate::point::Point;
use crate::world::{NoiseModel, Region, RobotMotion};

/// Flat key-value settings, as read from a TOML file or gathered from
/// command-line flags. Unset keys leave the defaults alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatConfig {
    pub robots: Option<usize>,
    pub beacons: Option<usize>,
    pub dim: Option<usize>,
    /// Region extents, `"20x20"` or `"20x20x20"`.
    pub region: Option<String>,
    pub radius: Option<f64>,
    pub dmax: Option<f64>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub mc: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub noise: Option<NoiseModel>,
    pub kd: Option<f64>,
    pub ktheta: Option<f64>,
    pub kr: Option<f64>,
    pub prop_frac: Option<f64>,
    pub update_mode: Option<UpdateMode>,
    pub out: Option<PathBuf>,
    /// Initial estimates at this multiple of the region size.
    pub adverse_init: Option<f64>,
    pub allow_infeasible: Option<bool>,
    pub threshold: Option<f64>,
    /// Restricts robot motion to a line: `"x"`, `"y"`, `"z"` or a direction
    /// such as `"1,1"`.
    pub motion_axis: Option<String>,
    /// Disables the noisy-distance safeguards.
    pub no_safeguards: Option<bool>,
    pub drop_prob: Option<f64>,
}

impl FlatConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `other`'s set keys take precedence.
    pub fn merged_with(self, other: FlatConfig) -> FlatConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FlatConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            robots,
            beacons,
            dim,
            region,
            radius,
            dmax,
            iters,
            seed,
            mc,
            alpha,
            beta,
            epsilon,
            noise,
            kd,
            ktheta,
            kr,
            prop_frac,
            update_mode,
            out,
            adverse_init,
            allow_infeasible,
            threshold,
            motion_axis,
            no_safeguards,
            drop_prob
        )
    }

    /// Applies the set keys on top of `base`.
    pub fn apply(&self, base: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut c = base;
        let w = &mut c.world;
        if let Some(v) = self.robots {
            w.n_robots = v;
        }
        if let Some(v) = self.beacons {
            w.n_beacons = v;
        }
        match (self.dim, &self.region) {
            (_, Some(text)) => {
                let extents = parse_region(text)?;
                if self.dim.is_some_and(|d| d != extents.len()) {
                    return Err(Error::Config(format!(
                        "region {text} does not have {} extents",
                        self.dim.unwrap_or_default()
                    )));
                }
                w.dim = extents.len();
                w.region = Region::from_extents(&extents);
            }
            (Some(d), None) => {
                if !(1..=3).contains(&d) {
                    return Err(Error::Config(format!("dimension {d} not in 1..=3")));
                }
                let side = w.region.extent(0);
                w.dim = d;
                w.region = Region::from_extents(&vec![side; d]);
            }
            (None, None) => {}
        }
        if let Some(v) = self.radius {
            w.comm_radius = v;
        }
        if let Some(v) = self.dmax {
            w.d_max = v;
        }
        if let Some(v) = self.seed {
            w.rng_seed = v;
        }
        if let Some(v) = self.drop_prob {
            w.drop_probability = v;
        }
        if let Some(text) = &self.motion_axis {
            w.robot_motion = RobotMotion::Subspace(vec![parse_motion_axis(text, w.dim)?]);
        }
        if let Some(v) = self.iters {
            c.iterations = v;
        }
        if let Some(v) = self.mc {
            c.mc_replicates = v;
        }
        let a = &mut c.algorithm;
        if let Some(v) = self.alpha {
            a.alpha = v;
        }
        if let Some(v) = self.beta {
            a.beta = v;
        }
        if let Some(v) = self.epsilon {
            a.epsilon = v;
        }
        if let Some(v) = self.update_mode {
            a.update_mode = v;
        }
        if self.no_safeguards == Some(true) {
            a.modifications = crate::localizer::Modifications::NONE;
        }
        let n = &mut c.noise;
        if let Some(v) = self.noise {
            n.model = v;
        }
        if let Some(v) = self.kd {
            n.k_d = v;
        }
        if let Some(v) = self.ktheta {
            n.k_theta = v;
        }
        if let Some(v) = self.kr {
            n.k_r = v;
        }
        if let Some(v) = self.prop_frac {
            n.proportional_fraction = v;
        }
        if let Some(v) = &self.out {
            c.output_path = Some(v.clone());
        }
        if let Some(v) = self.adverse_init {
            c.initial_estimate = InitialEstimate::AdverseOffset(v);
        }
        if let Some(v) = self.allow_infeasible {
            c.allow_infeasible = v;
        }
        if let Some(v) = self.threshold {
            c.convergence_threshold = v;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `"WxH"` or `"WxHxD"` into extents.
pub fn parse_region(text: &str) -> Result<Vec<f64>> {
    let extents: Vec<f64> = text
        .split(['x', 'X'])
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse region {text:?}")))?;
    if extents.is_empty()
        || extents.len() > 3
        || extents.iter().any(|e| !(e.is_finite() && *e >= 0.0))
    {
        return Err(Error::Config(format!(
            "region {text:?} needs one to three non-negative extents"
        )));
    }
    Ok(extents)
}

pub fn parse_motion_axis(text: &str, dim: usize) -> Result<Point> {
    let axis = |k: usize| {
        let mut p = Point::ZERO;
        p[k] = 1.0;
        p
    };
    let p = match text.trim() {
        "x" => axis(0),
        "y" => axis(1),
        "z" => axis(2),
        other => {
            let v: Vec<f64> = other
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("cannot parse motion axis {text:?}")))?;
            if v.len() != dim {
                return Err(Error::Config(format!(
                    "motion axis {text:?} must have {dim} components"
                )));
            }
            Point::from_slice(&v)
        }
    };
    if (dim..3).any(|k| p[k] != 0.0) || p.norm() == 0.0 {
        return Err(Error::Config(format!(
            "motion axis {text:?} is not a direction in {dim} dimensions"
        )));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_keys_apply() {
        let f = FlatConfig::from_toml_str(
            r#"
            robots = 10
            region = "30x30"
            radius = 3.0
            noise = "model1"
            kd = 0.005
            update_mode = "first_set"
            adverse_init = 30.0
            "#,
        )
        .unwrap();
        let c = f.apply(ExperimentConfig::default()).unwrap();
        assert_eq!(c.world.n_robots, 10);
        assert_eq!(c.world.region.extent(1), 30.0);
        assert_eq!(c.world.comm_radius, 3.0);
        assert_eq!(c.noise.model, NoiseModel::Model1);
        assert_eq!(c.noise.k_d, 0.005);
        assert_eq!(c.algorithm.update_mode, UpdateMode::FirstSet);
        assert_eq!(c.initial_estimate, InitialEstimate::AdverseOffset(30.0));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(FlatConfig::from_toml_str("robotz = 3").is_err());
        let f = FlatConfig {
            alpha: Some(1.5),
            ..FlatConfig::default()
        };
        assert!(f.apply(ExperimentConfig::default()).is_err());
        let f = FlatConfig {
            dim: Some(3),
            region: Some("10x10".into()),
            ..FlatConfig::default()
        };
        assert!(f.apply(ExperimentConfig::default()).is_err());
    }

    #[test]
    fn later_settings_win() {
        let file = FlatConfig {
            robots: Some(5),
            seed: Some(1),
            ..FlatConfig::default()
        };
        let flags = FlatConfig {
            robots: Some(20),
            ..FlatConfig::default()
        };
        let m = file.merged_with(flags);
        assert_eq!(m.robots, Some(20));
        assert_eq!(m.seed, Some(1));
    }

    #[test]
    fn region_and_axis_parsing() {
        assert_eq!(parse_region("20x20").unwrap(), vec![20.0, 20.0]);
        assert_eq!(parse_region("5x6x7").unwrap(), vec![5.0, 6.0, 7.0]);
        assert!(parse_region("5x").is_err());
        assert!(parse_region("1x2x3x4").is_err());
        assert_eq!(parse_motion_axis("x", 2).unwrap(), Point::new2(1.0, 0.0));
        assert_eq!(parse_motion_axis("1,1", 2).unwrap(), Point::new2(1.0, 1.0));
        assert!(parse_motion_axis("z", 2).is_err());
        assert!(parse_motion_axis("0,0", 2).is_err());
    }

    #[test]
    fn dimension_flag_resizes_the_region() {
        let f = FlatConfig {
            dim: Some(3),
            ..FlatConfig::default()
        };
        let c = f.apply(ExperimentConfig::default()).unwrap();
        assert_eq!(c.world.dim, 3);
        assert_eq!(c.world.region.extent(2), 20.0);
    }
}
