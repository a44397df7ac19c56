//! Ground-truth simulation of robots and beacons in a bounded region.
//!
//! Robots take random steps (uniform length in `[0, d_max]`, uniform
//! direction within their motion subspace) and resample until the step
//! lands inside the region. Beacons are static or follow a cyclic waypoint
//! script. Odometry and ranging are corrupted according to [`NoiseConfig`].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{Point, MAX_DIM};
use crate::rng::{substream, Purpose, StreamRng};

pub type NodeId = usize;

/// Attempts at drawing an in-region step before a robot stays put for the
/// iteration. Far beyond what any reachable configuration needs.
pub const MAX_STEP_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Robot,
    Beacon,
}

/// Axis-aligned box `[min, max]` in the first `dim` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Point,
    pub max: Point,
}

impl Region {
    /// `[0, extent_0] x ... x [0, extent_{m-1}]`.
    pub fn from_extents(extents: &[f64]) -> Self {
        Region {
            min: Point::ZERO,
            max: Point::from_slice(extents),
        }
    }

    pub fn contains(&self, p: &Point, dim: usize) -> bool {
        (0..dim).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn center(&self) -> Point {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self, k: usize) -> f64 {
        self.max[k] - self.min[k]
    }

    pub fn sample(&self, dim: usize, rng: &mut impl Rng) -> Point {
        let mut p = Point::ZERO;
        for k in 0..dim {
            p[k] = if self.extent(k) > 0.0 {
                rng.gen_range(self.min[k]..=self.max[k])
            } else {
                self.min[k]
            };
        }
        p
    }

    fn validate(&self, dim: usize) -> Result<()> {
        for k in 0..dim {
            if !(self.min[k].is_finite() && self.max[k].is_finite()) || self.max[k] < self.min[k] {
                return Err(Error::Config(format!(
                    "region is empty or not finite along axis {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Linear subspace a node may move in, given by an orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSubspace {
    basis: Vec<Point>,
}

impl MotionSubspace {
    pub fn full(dim: usize) -> Self {
        let basis = (0..dim)
            .map(|k| {
                let mut e = Point::ZERO;
                e[k] = 1.0;
                e
            })
            .collect();
        MotionSubspace { basis }
    }

    pub fn fixed() -> Self {
        MotionSubspace { basis: Vec::new() }
    }

    /// Span of `vectors`, orthonormalised; dependent vectors are dropped.
    pub fn span(vectors: &[Point]) -> Self {
        MotionSubspace {
            basis: orthonormal_basis(vectors),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Point] {
        &self.basis
    }

    /// Uniformly distributed unit vector in the subspace.
    fn random_direction(&self, rng: &mut impl Rng) -> Point {
        match self.basis.len() {
            0 => Point::ZERO,
            1 => {
                if rng.gen_bool(0.5) {
                    self.basis[0]
                } else {
                    -self.basis[0]
                }
            }
            2 => {
                let theta = rng.gen_range(0.0..2.0 * PI);
                self.basis[0] * theta.cos() + self.basis[1] * theta.sin()
            }
            _ => loop {
                let g: [f64; MAX_DIM] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break self
                        .basis
                        .iter()
                        .zip(g)
                        .fold(Point::ZERO, |acc, (b, c)| acc + *b * (c / n));
                }
            },
        }
    }
}

/// Gram-Schmidt with a rank tolerance.
pub fn orthonormal_basis(vectors: &[Point]) -> Vec<Point> {
    let scale = vectors.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let mut basis: Vec<Point> = Vec::new();
    for v in vectors {
        let mut w = *v;
        for b in &basis {
            w -= *b * w.dot(b);
        }
        let n = w.norm();
        if n > 1e-9 * scale.max(1e-300) && basis.len() < MAX_DIM {
            basis.push(w * (1.0 / n));
        }
    }
    basis
}

/// Dimension of the union (span) of several subspaces.
pub fn union_dim<'a>(subspaces: impl IntoIterator<Item = &'a MotionSubspace>) -> usize {
    let all: Vec<Point> = subspaces
        .into_iter()
        .flat_map(|s| s.basis.iter().copied())
        .collect();
    orthonormal_basis(&all).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    pub true_position: Point,
    /// Total distance travelled so far.
    pub cumulative_distance: f64,
    pub motion: MotionSubspace,
}

impl NodeState {
    pub fn motion_subspace_dim(&self) -> usize {
        self.motion.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub true_motion: Point,
    pub measured_motion: Point,
    pub noise: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceMeasurement {
    pub from_id: NodeId,
    pub to_id: NodeId,
    pub true_distance: f64,
    pub measured_distance: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    #[default]
    None,
    /// Gaussian odometry noise with variance growing with the distance
    /// travelled, Gaussian ranging noise with variance growing with time.
    Model1,
    /// Noise proportional to each measurement, uniform in `[-f, f]`.
    Model2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub model: NoiseModel,
    pub k_d: f64,
    pub k_theta: f64,
    pub k_r: f64,
    pub proportional_fraction: f64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            model: NoiseModel::None,
            k_d: 0.0,
            k_theta: 0.0,
            k_r: 0.0,
            proportional_fraction: 0.0,
        }
    }

    pub fn model1(k_d: f64, k_theta: f64, k_r: f64) -> Self {
        NoiseConfig {
            model: NoiseModel::Model1,
            k_d,
            k_theta,
            k_r,
            ..Self::none()
        }
    }

    pub fn model2(fraction: f64) -> Self {
        NoiseConfig {
            model: NoiseModel::Model2,
            proportional_fraction: fraction,
            ..Self::none()
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.model == NoiseModel::None
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.k_d, self.k_theta, self.k_r, self.proportional_fraction];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "noise gains must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BeaconMotion {
    Static,
    /// Beacon `j` sits at `waypoints[j][k % len]` at iteration `k`.
    Scripted(Vec<Vec<Point>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RobotMotion {
    /// Unconstrained motion in `R^m`.
    Full,
    /// Every robot moves along the span of the given directions.
    Subspace(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dim: usize,
    pub region: Region,
    pub comm_radius: f64,
    pub d_max: f64,
    pub n_robots: usize,
    pub n_beacons: usize,
    /// Initial beacon positions. When absent the first beacon sits at the
    /// region centre and any further beacons are placed uniformly at random.
    pub beacon_positions: Option<Vec<Point>>,
    pub beacon_motion: BeaconMotion,
    pub robot_motion: RobotMotion,
    /// Per-robot, per-iteration probability of a communication drop.
    pub drop_probability: f64,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dim: 2,
            region: Region::from_extents(&[20.0, 20.0]),
            comm_radius: 2.0,
            d_max: 5.0,
            n_robots: 5,
            n_beacons: 1,
            beacon_positions: None,
            beacon_motion: BeaconMotion::Static,
            robot_motion: RobotMotion::Full,
            drop_probability: 0.0,
            rng_seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::Config(format!(
                "dimension {} not in 1..=3",
                self.dim
            )));
        }
        self.region.validate(self.dim)?;
        if !(self.comm_radius > 0.0 && self.comm_radius.is_finite()) {
            return Err(Error::Config(
                "communication radius must be positive".into(),
            ));
        }
        if !(self.d_max >= 0.0 && self.d_max.is_finite()) {
            return Err(Error::Config("d_max must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::Config("drop probability must lie in [0, 1]".into()));
        }
        if let Some(bp) = &self.beacon_positions {
            if bp.len() != self.n_beacons {
                return Err(Error::Config(format!(
                    "{} beacon positions given for {} beacons",
                    bp.len(),
                    self.n_beacons
                )));
            }
            if bp.iter().any(|p| !self.region.contains(p, self.dim)) {
                return Err(Error::Config("beacon position outside the region".into()));
            }
        }
        if let BeaconMotion::Scripted(paths) = &self.beacon_motion {
            if paths.len() != self.n_beacons || paths.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(
                    "scripted beacon motion needs one non-empty waypoint list per beacon".into(),
                ));
            }
            if paths
                .iter()
                .flatten()
                .any(|p| !self.region.contains(p, self.dim))
            {
                return Err(Error::Config("beacon waypoint outside the region".into()));
            }
        }
        Ok(())
    }

    pub fn robot_subspace(&self) -> MotionSubspace {
        match &self.robot_motion {
            RobotMotion::Full => MotionSubspace::full(self.dim),
            RobotMotion::Subspace(dirs) => MotionSubspace::span(dirs),
        }
    }

    fn beacon_subspace(&self, beacon: usize) -> MotionSubspace {
        match &self.beacon_motion {
            BeaconMotion::Static => MotionSubspace::fixed(),
            BeaconMotion::Scripted(paths) => {
                let path = &paths[beacon];
                let deltas: Vec<Point> = path.iter().map(|p| *p - path[0]).collect();
                MotionSubspace::span(&deltas)
            }
        }
    }
}

/// Draws one random step for a robot and returns the moved node together
/// with the displacement actually applied.
pub fn step_motion(
    node: &NodeState,
    d_max: f64,
    region: &Region,
    dim: usize,
    rng: &mut impl Rng,
) -> (NodeState, Point) {
    let mut next = node.clone();
    if d_max <= 0.0 || node.motion.dim() == 0 {
        return (next, Point::ZERO);
    }
    for _ in 0..MAX_STEP_ATTEMPTS {
        let d = rng.gen_range(0.0..=d_max);
        let dir = node.motion.random_direction(rng);
        let displacement = dir * d;
        let candidate = node.true_position + displacement;
        if region.contains(&candidate, dim) {
            next.true_position = candidate;
            next.cumulative_distance += d;
            return (next, displacement);
        }
    }
    (next, Point::ZERO)
}

/// Applies odometry noise to a true displacement.
///
/// `node` is the robot's state before the step: Model 1 variances scale with
/// the distance travelled up to that point.
pub fn measure_motion(
    true_motion: Point,
    node: &NodeState,
    dim: usize,
    noise: &NoiseConfig,
    rng: &mut impl Rng,
) -> MotionSample {
    let measured = match noise.model {
        NoiseModel::None => true_motion,
        NoiseModel::Model1 => {
            let travelled = node.cumulative_distance.max(0.0);
            let sigma_d = noise.k_d * travelled.sqrt();
            let sigma_theta = noise.k_theta * travelled.sqrt();
            perturb_polar(true_motion, dim, sigma_d, sigma_theta, rng)
        }
        NoiseModel::Model2 => {
            let f = noise.proportional_fraction;
            let mut m = true_motion;
            for k in 0..dim {
                m[k] *= 1.0 + uniform_sym(f, rng);
            }
            m
        }
    };
    MotionSample {
        true_motion,
        measured_motion: measured,
        noise: measured - true_motion,
    }
}

fn uniform_sym(f: f64, rng: &mut impl Rng) -> f64 {
    if f > 0.0 {
        rng.gen_range(-f..=f)
    } else {
        0.0
    }
}

fn gaussian(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma)
            .expect("sigma is positive and finite")
            .sample(rng)
    } else {
        0.0
    }
}

/// Perturbs the length and direction angles of a displacement.
fn perturb_polar(
    motion: Point,
    dim: usize,
    sigma_d: f64,
    sigma_theta: f64,
    rng: &mut impl Rng,
) -> Point {
    let d = motion.norm();
    let d_noisy = d + gaussian(sigma_d, rng);
    match dim {
        1 => {
            let sign = if motion[0] < 0.0 { -1.0 } else { 1.0 };
            Point::from_slice(&[sign * d_noisy])
        }
        2 => {
            let theta = motion[1].atan2(motion[0]) + gaussian(sigma_theta, rng);
            Point::new2(d_noisy * theta.cos(), d_noisy * theta.sin())
        }
        _ => {
            let azimuth = motion[1].atan2(motion[0]) + gaussian(sigma_theta, rng);
            let horizontal = (motion[0] * motion[0] + motion[1] * motion[1]).sqrt();
            let elevation = motion[2].atan2(horizontal) + gaussian(sigma_theta, rng);
            Point::new3(
                d_noisy * elevation.cos() * azimuth.cos(),
                d_noisy * elevation.cos() * azimuth.sin(),
                d_noisy * elevation.sin(),
            )
        }
    }
}

/// Simulated world: node states plus one random stream per node and purpose.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    nodes: Vec<NodeState>,
    iteration: u64,
    motion_rngs: Vec<StreamRng>,
    odometry_rngs: Vec<StreamRng>,
    ranging_rngs: Vec<StreamRng>,
    drop_rngs: Vec<StreamRng>,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.dim;
        let seed = config.rng_seed;
        let total = config.n_robots + config.n_beacons;
        let robot_motion = config.robot_subspace();

        let mut nodes = Vec::with_capacity(total);
        for id in 0..config.n_robots {
            let mut rng = substream(seed, id, Purpose::Placement);
            nodes.push(NodeState {
                id,
                role: Role::Robot,
                true_position: config.region.sample(dim, &mut rng),
                cumulative_distance: 0.0,
                motion: robot_motion.clone(),
            });
        }
        for b in 0..config.n_beacons {
            let id = config.n_robots + b;
            let position = match (&config.beacon_motion, &config.beacon_positions) {
                (BeaconMotion::Scripted(paths), _) => paths[b][0],
                (BeaconMotion::Static, Some(ps)) => ps[b],
                (BeaconMotion::Static, None) if b == 0 => config.region.center(),
                (BeaconMotion::Static, None) => config
                    .region
                    .sample(dim, &mut substream(seed, id, Purpose::Placement)),
            };
            nodes.push(NodeState {
                id,
                role: Role::Beacon,
                true_position: position,
                cumulative_distance: 0.0,
                motion: config.beacon_subspace(b),
            });
        }

        let streams = |purpose| (0..total).map(|id| substream(seed, id, purpose)).collect();
        Ok(World {
            motion_rngs: streams(Purpose::Motion),
            odometry_rngs: streams(Purpose::Odometry),
            ranging_rngs: streams(Purpose::Ranging),
            drop_rngs: streams(Purpose::Drop),
            config,
            nodes,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id]
    }

    pub fn n_robots(&self) -> usize {
        self.config.n_robots
    }

    pub fn n_beacons(&self) -> usize {
        self.config.n_beacons
    }

    pub fn role(&self, id: NodeId) -> Role {
        self.nodes[id].role
    }

    pub fn position(&self, id: NodeId) -> Point {
        self.nodes[id].true_position
    }

    pub fn robot_positions(&self) -> Vec<Point> {
        self.nodes[..self.config.n_robots]
            .iter()
            .map(|n| n.true_position)
            .collect()
    }

    pub fn beacon_ids(&self) -> std::ops::Range<NodeId> {
        self.config.n_robots..self.config.n_robots + self.config.n_beacons
    }

    /// Draws this iteration's communication drops, one flag per robot.
    pub fn draw_drops(&mut self) -> Vec<bool> {
        let p = self.config.drop_probability;
        (0..self.config.n_robots)
            .map(|id| p > 0.0 && self.drop_rngs[id].gen_bool(p))
            .collect()
    }

    /// Moves every node one step and returns the robots' motion samples
    /// (true and measured), indexed by robot id.
    pub fn advance(&mut self, noise: &NoiseConfig) -> Vec<MotionSample> {
        let dim = self.config.dim;
        let mut samples = Vec::with_capacity(self.config.n_robots);
        for id in 0..self.config.n_robots {
            let before = self.nodes[id].clone();
            let (moved, displacement) = step_motion(
                &before,
                self.config.d_max,
                &self.config.region,
                dim,
                &mut self.motion_rngs[id],
            );
            samples.push(measure_motion(
                displacement,
                &before,
                dim,
                noise,
                &mut self.odometry_rngs[id],
            ));
            self.nodes[id] = moved;
        }
        self.iteration += 1;
        if let BeaconMotion::Scripted(paths) = &self.config.beacon_motion {
            for (b, path) in paths.iter().enumerate() {
                let id = self.config.n_robots + b;
                let next = path[(self.iteration as usize) % path.len()];
                let node = &mut self.nodes[id];
                node.cumulative_distance += node.true_position.distance(&next);
                node.true_position = next;
            }
        }
        samples
    }

    /// All nodes other than `i` within the communication radius (closed ball),
    /// in increasing id order.
    pub fn neighbors(&self, i: NodeId) -> Vec<NodeId> {
        let r2 = self.config.comm_radius * self.config.comm_radius;
        let p = self.nodes[i].true_position;
        self.nodes
            .iter()
            .filter(|n| n.id != i && n.true_position.distance_squared(&p) <= r2)
            .map(|n| n.id)
            .collect()
    }

    pub fn in_range(&self, i: NodeId, j: NodeId) -> bool {
        let r = self.config.comm_radius;
        self.nodes[i]
            .true_position
            .distance_squared(&self.nodes[j].true_position)
            <= r * r
    }

    /// Node `i` ranges to node `j`, drawing from `i`'s ranging stream.
    pub fn measure_distance(
        &mut self,
        i: NodeId,
        j: NodeId,
        noise: &NoiseConfig,
    ) -> Result<DistanceMeasurement> {
        let k = self.iteration;
        let (nodes, rngs) = (&self.nodes, &mut self.ranging_rngs);
        measure_distance(
            &nodes[i],
            &nodes[j],
            self.config.comm_radius,
            noise,
            &mut rngs[i],
            k,
        )
    }
}

/// Noisy range from `from` to `to` at iteration `k`.
pub fn measure_distance(
    from: &NodeState,
    to: &NodeState,
    comm_radius: f64,
    noise: &NoiseConfig,
    rng: &mut impl Rng,
    k: u64,
) -> Result<DistanceMeasurement> {
    let true_distance = from.true_position.distance(&to.true_position);
    if true_distance > comm_radius {
        return Err(Error::OutOfRange {
            from: from.id,
            to: to.id,
            distance: true_distance,
            radius: comm_radius,
        });
    }
    let raw_noise = match noise.model {
        NoiseModel::None => 0.0,
        NoiseModel::Model1 => gaussian(noise.k_r * (k as f64).sqrt(), rng),
        NoiseModel::Model2 => true_distance * uniform_sym(noise.proportional_fraction, rng),
    };
    let measured_distance = (true_distance + raw_noise).max(0.0);
    Ok(DistanceMeasurement {
        from_id: from.id,
        to_id: to.id,
        true_distance,
        measured_distance,
        noise: measured_distance - true_distance,
    })
}
