//! The per-robot opportunistic update.
//!
//! Each iteration a robot gathers ranges among itself and its neighbours,
//! looks for `m + 1` neighbours whose simplex strictly contains it, and if it
//! finds one moves its estimate to
//! `alpha x_i + (1 - alpha) (sum p_j x_j + sum b_m u_m)` before adding its
//! measured motion. Otherwise it only adds the motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    barycentric_coordinates, inclusion_test_with, raw_barycentric_coordinates, BarycentricWeights,
    InclusionParams, SquaredDistanceMatrix, ToleranceRule, Verdict, INTERIOR_FLOOR,
    NOISELESS_TOLERANCE,
};
use crate::point::Point;
use crate::world::{MotionSample, NodeId, NoiseConfig, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Update with the first accepted set only.
    FirstSet,
    /// Chain one update per accepted set.
    #[default]
    AllSets,
}

/// Safeguards for noisy distances. All three are on by default; they have no
/// effect on noiseless runs except the sign screen, which never fires there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modifications {
    /// Discard sets whose Cayley-Menger determinants have the wrong sign.
    pub sign_screen: bool,
    /// Accept only sets whose relative inclusion error is below epsilon.
    pub error_gate: bool,
    /// Renormalise the barycentric weights to sum to one.
    pub normalize: bool,
}

impl Modifications {
    pub const ALL: Modifications = Modifications {
        sign_screen: true,
        error_gate: true,
        normalize: true,
    };
    pub const NONE: Modifications = Modifications {
        sign_screen: false,
        error_gate: false,
        normalize: false,
    };
}

impl Default for Modifications {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    /// Minimum weight any participating beacon must receive.
    pub alpha: f64,
    /// Self-weight used whenever an update happens.
    pub beta: f64,
    /// Relative inclusion error threshold on noisy distances.
    pub epsilon: f64,
    pub update_mode: UpdateMode,
    pub max_one_robot_per_iteration: bool,
    pub modifications: Modifications,
    pub noiseless_tolerance: f64,
    pub interior_floor: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            alpha: 0.01,
            beta: 0.01,
            epsilon: 0.2,
            update_mode: UpdateMode::AllSets,
            max_one_robot_per_iteration: false,
            modifications: Modifications::ALL,
            noiseless_tolerance: NOISELESS_TOLERANCE,
            interior_floor: INTERIOR_FLOOR,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if !open_unit(self.beta) {
            return Err(Error::Config(format!(
                "beta {} must lie in (0, 1)",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if !(self.noiseless_tolerance >= 0.0 && self.interior_floor >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }

    /// Inclusion-test settings for noiseless or noisy ranging.
    ///
    /// Without the error gate a noisy test keeps the exact-arithmetic
    /// dichotomy: any excess of the sub-volume sum over the outer volume
    /// means outside, and a shortfall is read as inside.
    pub fn inclusion_params(&self, noisy: bool) -> InclusionParams {
        let m = self.modifications;
        let (tolerance, rule) = match (noisy, m.error_gate) {
            (false, _) => (self.noiseless_tolerance, ToleranceRule::TwoSided),
            (true, true) => (self.epsilon, ToleranceRule::TwoSided),
            (true, false) => (self.noiseless_tolerance, ToleranceRule::OneSided),
        };
        InclusionParams {
            tolerance,
            interior_floor: self.interior_floor,
            sign_screen: m.sign_screen || !noisy,
            rule,
        }
    }
}

/// Robot estimates, indexed by robot id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateState {
    pub estimates: Vec<Point>,
    pub iteration: u64,
}

impl EstimateState {
    pub fn new(estimates: Vec<Point>) -> Self {
        EstimateState {
            estimates,
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangulationCandidate {
    /// `m + 1` node ids in increasing order.
    pub members: Vec<NodeId>,
    /// One weight per member, in the same order.
    pub weights: BarycentricWeights,
    pub relative_error: f64,
    pub beacon_members: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub robot: NodeId,
    pub iteration: u64,
    pub alpha_k: f64,
    pub robot_weights: Vec<(NodeId, f64)>,
    pub beacon_weights: Vec<(NodeId, f64)>,
    pub candidate: TriangulationCandidate,
    /// Motion added after this update; zero for all but a robot's last
    /// update in an iteration.
    pub applied_motion: Point,
}

impl UpdateRecord {
    pub fn weight_sum(&self) -> f64 {
        self.robot_weights
            .iter()
            .chain(&self.beacon_weights)
            .map(|&(_, w)| w)
            .sum()
    }

    pub fn robot_weight_sum(&self) -> f64 {
        self.robot_weights.iter().map(|&(_, w)| w).sum()
    }

    pub fn uses_beacon(&self) -> bool {
        !self.beacon_weights.is_empty()
    }
}

/// Measured distances among a robot and its neighbours. Index 0 is the
/// robot itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeTable {
    nodes: Vec<NodeId>,
    distances: Vec<Vec<Option<f64>>>,
}

impl RangeTable {
    pub fn new(robot: NodeId, neighbors: &[NodeId]) -> Self {
        let mut nodes = vec![robot];
        nodes.extend(neighbors.iter().copied().filter(|&n| n != robot));
        let k = nodes.len();
        RangeTable {
            nodes,
            distances: vec![vec![None; k]; k],
        }
    }

    pub fn robot(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn neighbors(&self) -> &[NodeId] {
        &self.nodes[1..]
    }

    fn index(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == id)
    }

    pub fn set(&mut self, a: NodeId, b: NodeId, distance: f64) -> Result<()> {
        let (Some(i), Some(j)) = (self.index(a), self.index(b)) else {
            return Err(Error::Contract(format!(
                "nodes {a}, {b} are not in the range table"
            )));
        };
        self.distances[i][j] = Some(distance);
        self.distances[j][i] = Some(distance);
        Ok(())
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        self.distances[self.index(a)?][self.index(b)?]
    }

    /// Exact table from known positions, every pair present.
    pub fn from_positions(
        robot: NodeId,
        neighbors: &[NodeId],
        position: impl Fn(NodeId) -> Point,
    ) -> Self {
        let mut t = RangeTable::new(robot, neighbors);
        let nodes = t.nodes.clone();
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                t.set(a, b, position(a).distance(&position(b)))
                    .expect("both nodes are in the table");
            }
        }
        t
    }

    /// Ranges gathered in `world`: the robot ranges to each neighbour, and
    /// each pair of neighbours within range of each other reports the range
    /// measured by its lower id. Pairs out of range stay missing.
    pub fn gather(
        world: &mut World,
        robot: NodeId,
        neighbors: &[NodeId],
        noise: &NoiseConfig,
    ) -> Self {
        let mut t = RangeTable::new(robot, neighbors);
        let nodes = t.nodes.clone();
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                let (from, to) = if i == 0 { (a, b) } else { (a.min(b), a.max(b)) };
                if world.in_range(from, to) {
                    if let Ok(m) = world.measure_distance(from, to, noise) {
                        t.set(a, b, m.measured_distance)
                            .expect("both nodes are in the table");
                    }
                }
            }
        }
        t
    }
}

/// Counts of why subsets were turned down.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub subsets_examined: usize,
    pub missing_distances: usize,
    pub degenerate: usize,
    pub outside: usize,
    pub error_gate: usize,
    pub beacon_gate: usize,
    pub accepted: usize,
}

impl std::ops::AddAssign for SearchDiagnostics {
    fn add_assign(&mut self, o: Self) {
        self.subsets_examined += o.subsets_examined;
        self.missing_distances += o.missing_distances;
        self.degenerate += o.degenerate;
        self.outside += o.outside;
        self.error_gate += o.error_gate;
        self.beacon_gate += o.beacon_gate;
        self.accepted += o.accepted;
    }
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&p| idx[p] != p + n - k) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Enumerates the robot's `(m + 1)`-subsets of neighbours and returns those
/// passing the inclusion test, the error gate and the beacon-weight gate,
/// in lexicographic order of neighbour ids.
///
/// Node ids below `n_robots` are robots, the rest beacons.
pub fn find_triangulation_sets(
    table: &RangeTable,
    n_robots: usize,
    dim: usize,
    config: &AlgorithmConfig,
    noisy: bool,
) -> (Vec<TriangulationCandidate>, SearchDiagnostics) {
    let mut diag = SearchDiagnostics::default();
    let mut out = Vec::new();
    let mut neighbors = table.neighbors().to_vec();
    neighbors.sort_unstable();
    let k = dim + 1;
    if neighbors.len() < k {
        return (out, diag);
    }
    let robot = table.robot();
    let params = config.inclusion_params(noisy);

    for_each_combination(neighbors.len(), k, |idx| {
        diag.subsets_examined += 1;
        let members: Vec<NodeId> = idx.iter().map(|&i| neighbors[i]).collect();
        let mut missing = false;
        let mut sq = |a: NodeId, b: NodeId| match table.get(a, b) {
            Some(d) => d * d,
            None => {
                missing = true;
                0.0
            }
        };
        let outer = SquaredDistanceMatrix::from_fn(dim, |i, j| sq(members[i], members[j]));
        let cand: Vec<f64> = members.iter().map(|&j| sq(robot, j)).collect();
        if missing {
            diag.missing_distances += 1;
            return;
        }
        let Ok(incl) = inclusion_test_with(&outer, &cand, &params) else {
            diag.degenerate += 1;
            return;
        };
        match incl.verdict {
            Verdict::Degenerate => {
                diag.degenerate += 1;
                return;
            }
            Verdict::Outside => {
                diag.outside += 1;
                return;
            }
            Verdict::Inside => {}
        }
        if noisy && config.modifications.error_gate && !(incl.relative_error < config.epsilon) {
            diag.error_gate += 1;
            return;
        }
        let weights = if config.modifications.normalize {
            barycentric_coordinates(&incl)
        } else {
            raw_barycentric_coordinates(&incl)
        }
        .expect("verdict is Inside");
        let beacon_members: Vec<NodeId> =
            members.iter().copied().filter(|&j| j >= n_robots).collect();
        let beacon_ok = members
            .iter()
            .zip(weights.as_slice())
            .all(|(&j, &w)| j < n_robots || w >= config.alpha);
        if !beacon_ok {
            diag.beacon_gate += 1;
            return;
        }
        diag.accepted += 1;
        out.push(TriangulationCandidate {
            members,
            weights,
            relative_error: incl.relative_error,
            beacon_members,
        });
    });
    (out, diag)
}

/// Splits a candidate's weights into robot and beacon parts.
pub fn split_weights(
    candidate: &TriangulationCandidate,
    n_robots: usize,
) -> (Vec<(NodeId, f64)>, Vec<(NodeId, f64)>) {
    candidate
        .members
        .iter()
        .copied()
        .zip(candidate.weights.as_slice().iter().copied())
        .partition(|&(j, _)| j < n_robots)
}

/// `alpha_k current + (1 - alpha_k) (sum p x_j + sum b u_m) + motion`.
///
/// `estimates` holds every robot's estimate and `beacons` every beacon's true
/// position; node `n` with `n >= estimates.len()` is beacon
/// `n - estimates.len()`.
pub fn update_estimate(
    robot: NodeId,
    current: Point,
    candidate: &TriangulationCandidate,
    estimates: &[Point],
    beacons: &[Point],
    alpha_k: f64,
    measured_motion: Point,
) -> Result<Point> {
    let n = estimates.len();
    if candidate.members.len() != candidate.weights.0.len() {
        return Err(Error::Contract(format!(
            "{} members but {} weights",
            candidate.members.len(),
            candidate.weights.0.len()
        )));
    }
    if !(0.0..1.0).contains(&alpha_k) {
        return Err(Error::Contract(format!(
            "self-weight {alpha_k} outside [0, 1)"
        )));
    }
    let mut combo = Point::ZERO;
    for (&j, &w) in candidate.members.iter().zip(candidate.weights.as_slice()) {
        let x = if j == robot {
            return Err(Error::Contract(format!(
                "robot {robot} is a member of its own set"
            )));
        } else if j < n {
            estimates[j]
        } else if j - n < beacons.len() {
            beacons[j - n]
        } else {
            return Err(Error::Contract(format!("unknown node {j}")));
        };
        combo += x * w;
    }
    Ok(current * alpha_k + combo * (1.0 - alpha_k) + measured_motion)
}

/// Everything that happened in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    /// Records in robot-id order, chained records of a robot in the order
    /// they were applied.
    pub records: Vec<UpdateRecord>,
    pub neighbor_counts: Vec<usize>,
    pub dropped: Vec<bool>,
    pub motions: Vec<MotionSample>,
    pub diagnostics: SearchDiagnostics,
}

/// Runs one iteration of the algorithm.
///
/// Neighbour discovery and ranging happen at the configuration of time `k`
/// against the estimates of time `k`; the world then moves, and each robot
/// combines its update with the motion it measured on the way to `k + 1`.
/// This is the order in which the estimate update is written, so the
/// noiseless error obeys `e_{k+1} = P_k e_k` exactly.
pub fn run_iteration(
    world: &mut World,
    state: &mut EstimateState,
    config: &AlgorithmConfig,
    noise: &NoiseConfig,
) -> IterationOutcome {
    let n = world.n_robots();
    let dim = world.dim();
    let noisy = !noise.is_noiseless();
    let iteration = state.iteration;
    let dropped = world.draw_drops();

    let mut neighbor_counts = vec![0; n];
    let mut accepted: Vec<Vec<TriangulationCandidate>> = vec![Vec::new(); n];
    let mut diagnostics = SearchDiagnostics::default();
    for i in 0..n {
        if dropped[i] {
            continue;
        }
        let neighbors: Vec<NodeId> = world
            .neighbors(i)
            .into_iter()
            .filter(|&j| j >= n || !dropped[j])
            .collect();
        neighbor_counts[i] = neighbors.len();
        if neighbors.len() < dim + 1 {
            continue;
        }
        let table = RangeTable::gather(world, i, &neighbors, noise);
        let (mut found, diag) = find_triangulation_sets(&table, n, dim, config, noisy);
        diagnostics += diag;
        if config.update_mode == UpdateMode::FirstSet {
            found.truncate(1);
        }
        accepted[i] = found;
    }
    if config.max_one_robot_per_iteration {
        if let Some(first) = accepted.iter().position(|a| !a.is_empty()) {
            for a in accepted.iter_mut().skip(first + 1) {
                a.clear();
            }
        }
    }

    let beacons: Vec<Point> = world.beacon_ids().map(|b| world.position(b)).collect();
    let motions = world.advance(noise);
    let frozen = state.estimates.clone();
    let mut records = Vec::new();
    for i in 0..n {
        let motion = motions[i].measured_motion;
        let mut x = frozen[i];
        for cand in accepted[i].drain(..) {
            match update_estimate(i, x, &cand, &frozen, &beacons, config.beta, Point::ZERO) {
                Ok(next) if next.is_finite() => {
                    x = next;
                    let (robot_weights, beacon_weights) = split_weights(&cand, n);
                    records.push(UpdateRecord {
                        robot: i,
                        iteration,
                        alpha_k: config.beta,
                        robot_weights,
                        beacon_weights,
                        candidate: cand,
                        applied_motion: Point::ZERO,
                    });
                }
                _ => {}
            }
        }
        if let Some(last) = records.last_mut().filter(|r| r.robot == i) {
            last.applied_motion = motion;
        }
        state.estimates[i] = x + motion;
    }
    state.iteration += 1;
    IterationOutcome {
        records,
        neighbor_counts,
        dropped,
        motions,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::WorldConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn positions(list: &[(NodeId, Point)]) -> impl Fn(NodeId) -> Point + '_ {
        move |id| list.iter().find(|(n, _)| *n == id).unwrap().1
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut seen = Vec::new();
        for_each_combination(4, 3, |c| seen.push(c.to_vec()));
        assert_eq!(
            seen,
            vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]]
        );
        let mut count = 0;
        for_each_combination(7, 3, |_| count += 1);
        assert_eq!(count, 35);
        for_each_combination(2, 3, |_| panic!("no subsets"));
    }

    #[test]
    fn single_neighbour_finds_nothing() {
        let pts = [(0, Point::new2(0.0, 0.0)), (1, Point::new2(1.0, 0.0))];
        let t = RangeTable::from_positions(0, &[1], positions(&pts));
        let (c, d) = find_triangulation_sets(&t, 2, 2, &AlgorithmConfig::default(), false);
        assert!(c.is_empty());
        assert_eq!(d.subsets_examined, 0);
    }

    /// Square of side 1.2 around the robot; the robot sits in the triangles
    /// on the 2-4 side of both diagonals.
    fn two_set_layout() -> Vec<(NodeId, Point)> {
        vec![
            (1, Point::new2(-0.18, 0.06)),
            (2, Point::new2(-0.6, 0.6)),
            (3, Point::new2(0.6, 0.6)),
            (4, Point::new2(-0.6, -0.6)),
            (5, Point::new2(0.6, -0.6)),
        ]
    }

    fn in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
        let cross = |o: Point, u: Point, v: Point| {
            (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])
        };
        let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
        (d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || (d1 < 0.0 && d2 < 0.0 && d3 < 0.0)
    }

    #[test]
    fn robot_with_two_triangulation_sets() {
        let pts = two_set_layout();
        let pos = positions(&pts);
        // Coordinate oracle for the intended layout.
        let expect = [
            ([2, 3, 4], true),
            ([2, 3, 5], false),
            ([2, 4, 5], true),
            ([3, 4, 5], false),
        ];
        for (set, inside) in expect {
            assert_eq!(
                in_triangle(pos(1), pos(set[0]), pos(set[1]), pos(set[2])),
                inside
            );
        }
        for (a, pa) in &pts {
            for (_, pb) in &pts {
                assert!(pa.distance(pb) <= 2.0, "node {a} out of range");
            }
        }
        let t = RangeTable::from_positions(1, &[2, 3, 4, 5], &pos);
        let (c, d) = find_triangulation_sets(&t, 6, 2, &AlgorithmConfig::default(), false);
        let sets: Vec<_> = c.iter().map(|c| c.members.clone()).collect();
        assert_eq!(sets, vec![vec![2, 3, 4], vec![2, 4, 5]]);
        assert_eq!(d.outside, 2);
        for cand in &c {
            assert_relative_eq!(cand.weights.sum(), 1.0, epsilon = 1e-12);
            // Weights reproduce the robot's position.
            let rebuilt = cand
                .members
                .iter()
                .zip(cand.weights.as_slice())
                .fold(Point::ZERO, |acc, (&j, &w)| acc + pos(j) * w);
            assert!(rebuilt.distance(&pos(1)) < 1e-9);
        }
    }

    #[test]
    fn small_beacon_weight_is_rejected() {
        // Robot close to the edge opposite the beacon (node 3).
        let pts = [
            (0, Point::new2(0.5, 0.1)),
            (1, Point::new2(0.0, 0.0)),
            (2, Point::new2(1.0, 0.0)),
            (3, Point::new2(0.5, 1.0)),
        ];
        let t = RangeTable::from_positions(0, &[1, 2, 3], positions(&pts));
        let mut cfg = AlgorithmConfig {
            alpha: 0.25,
            ..AlgorithmConfig::default()
        };
        let (c, d) = find_triangulation_sets(&t, 3, 2, &cfg, false);
        assert!(c.is_empty());
        assert_eq!(d.beacon_gate, 1);
        cfg.alpha = 0.05;
        let (c, _) = find_triangulation_sets(&t, 3, 2, &cfg, false);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].beacon_members, vec![3]);
        assert_relative_eq!(c[0].weights.0[2], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn missing_pairs_are_counted() {
        let pts = two_set_layout();
        let mut t = RangeTable::new(1, &[2, 3, 4, 5]);
        for (a, pa) in &pts {
            for (b, pb) in &pts {
                if a < b && !(*a == 2 && *b == 5) {
                    t.set(*a, *b, pa.distance(pb)).unwrap();
                }
            }
        }
        let (c, d) = find_triangulation_sets(&t, 6, 2, &AlgorithmConfig::default(), false);
        assert_eq!(d.missing_distances, 2);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members, vec![2, 3, 4]);
    }

    fn candidate(members: Vec<NodeId>, w: Vec<f64>) -> TriangulationCandidate {
        TriangulationCandidate {
            members,
            weights: BarycentricWeights(w),
            relative_error: 0.0,
            beacon_members: Vec::new(),
        }
    }

    #[test]
    fn update_at_fixed_point() {
        let est = [
            Point::new2(1.0, 1.0),
            Point::ZERO,
            Point::new2(3.0, 0.0),
            Point::new2(0.0, 3.0),
        ];
        let c = candidate(vec![1, 2, 3], vec![1.0 / 3.0; 3]);
        let x = update_estimate(0, est[0], &c, &est, &[], 0.5, Point::ZERO).unwrap();
        assert_relative_eq!(x.distance(&Point::new2(1.0, 1.0)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn update_contract_violations() {
        let est = [Point::ZERO; 3];
        let c = candidate(vec![1, 2], vec![0.5]);
        assert!(update_estimate(0, est[0], &c, &est, &[], 0.5, Point::ZERO).is_err());
        let c = candidate(vec![0, 2], vec![0.5, 0.5]);
        assert!(update_estimate(0, est[0], &c, &est, &[], 0.5, Point::ZERO).is_err());
        let c = candidate(vec![1, 9], vec![0.5, 0.5]);
        assert!(update_estimate(0, est[0], &c, &est, &[Point::ZERO], 0.5, Point::ZERO).is_err());
    }

    #[test]
    fn all_beacon_set_reconstructs_the_truth() {
        let truth = Point::new2(5.3, 4.1);
        let beacons = [
            Point::new2(4.0, 3.5),
            Point::new2(6.5, 3.9),
            Point::new2(5.1, 5.6),
        ];
        let nodes: Vec<(NodeId, Point)> = std::iter::once((0, truth))
            .chain(beacons.iter().enumerate().map(|(b, p)| (1 + b, *p)))
            .collect();
        let t = RangeTable::from_positions(0, &[1, 2, 3], positions(&nodes));
        let (c, _) = find_triangulation_sets(&t, 1, 2, &AlgorithmConfig::default(), false);
        assert_eq!(c.len(), 1);
        let motion = Point::new2(0.7, -1.1);
        let x = update_estimate(0, truth, &c[0], &[truth], &beacons, 0.01, motion).unwrap();
        assert!(x.distance(&(truth + motion)) < 1e-12);
        // From a wrong estimate the update closes (1 - alpha) of the gap.
        let wrong = truth + Point::new2(3.0, -4.0);
        let x = update_estimate(0, wrong, &c[0], &[wrong], &beacons, 0.01, Point::ZERO).unwrap();
        assert_relative_eq!(x.distance(&truth), 0.05, epsilon = 1e-9);
    }

    #[test]
    fn noisy_inclusion_modes() {
        let cfg = AlgorithmConfig::default();
        let p = cfg.inclusion_params(false);
        assert_eq!(
            (p.tolerance, p.rule),
            (NOISELESS_TOLERANCE, ToleranceRule::TwoSided)
        );
        let p = cfg.inclusion_params(true);
        assert_eq!((p.tolerance, p.rule), (0.2, ToleranceRule::TwoSided));
        let bare = AlgorithmConfig {
            modifications: Modifications::NONE,
            ..cfg
        };
        let p = bare.inclusion_params(true);
        assert_eq!(p.rule, ToleranceRule::OneSided);
        assert!(!p.sign_screen);
    }

    #[test]
    fn error_gate_rejects_large_mismatch() {
        // Robot outside the triangle by a margin that a 30% tolerance would
        // forgive but epsilon = 0.2 does not.
        let pts = [
            (0, Point::new2(0.5, -0.125)),
            (1, Point::new2(0.0, 0.0)),
            (2, Point::new2(1.0, 0.0)),
            (3, Point::new2(0.5, 1.0)),
        ];
        let t = RangeTable::from_positions(0, &[1, 2, 3], positions(&pts));
        let cfg = AlgorithmConfig::default();
        let (c, d) = find_triangulation_sets(&t, 4, 2, &cfg, true);
        assert!(c.is_empty());
        assert_eq!(d.outside + d.error_gate, 1);
        let loose = AlgorithmConfig {
            epsilon: 0.3,
            ..cfg
        };
        let (c, _) = find_triangulation_sets(&t, 4, 2, &loose, true);
        assert_eq!(c.len(), 1);
        assert!(c[0].relative_error < 0.3);
    }

    fn small_world(seed: u64, n: usize) -> World {
        World::new(WorldConfig {
            region: crate::world::Region::from_extents(&[6.0, 6.0]),
            n_robots: n,
            rng_seed: seed,
            ..WorldConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn isolated_robots_move_by_odometry() {
        let mut w = World::new(WorldConfig {
            n_robots: 2,
            comm_radius: 1e-6,
            rng_seed: 3,
            ..WorldConfig::default()
        })
        .unwrap();
        let mut st = EstimateState::new(vec![Point::new2(1.0, 1.0), Point::new2(2.0, 2.0)]);
        let before = st.estimates.clone();
        let out = run_iteration(
            &mut w,
            &mut st,
            &AlgorithmConfig::default(),
            &NoiseConfig::none(),
        );
        assert!(out.records.is_empty());
        for i in 0..2 {
            assert_eq!(st.estimates[i], before[i] + out.motions[i].measured_motion);
        }
        assert_eq!(st.iteration, 1);
    }

    #[test]
    fn records_are_convex_and_respect_the_beacon_gate() {
        let cfg = AlgorithmConfig::default();
        let mut total = 0;
        for seed in 0..4 {
            let mut w = small_world(seed, 8);
            let mut st = EstimateState::new(vec![Point::new2(3.0, 3.0); 8]);
            for _ in 0..200 {
                let out = run_iteration(&mut w, &mut st, &cfg, &NoiseConfig::none());
                for r in &out.records {
                    total += 1;
                    assert_relative_eq!(
                        r.alpha_k + (1.0 - r.alpha_k) * r.weight_sum(),
                        1.0,
                        epsilon = 1e-12
                    );
                    assert!(r.alpha_k >= cfg.beta);
                    if r.uses_beacon() {
                        assert!(r.robot_weight_sum() <= 1.0 - cfg.alpha + 1e-12);
                        assert!(r.beacon_weights.iter().all(|&(_, b)| b >= cfg.alpha));
                    }
                    assert!(!r.candidate.members.contains(&r.robot));
                }
            }
        }
        assert!(total > 0);
    }

    #[test]
    fn first_set_mode_and_single_updater() {
        let base = AlgorithmConfig::default();
        let first = AlgorithmConfig {
            update_mode: UpdateMode::FirstSet,
            ..base
        };
        let single = AlgorithmConfig {
            max_one_robot_per_iteration: true,
            ..base
        };
        let mut w1 = small_world(5, 10);
        let mut w2 = small_world(5, 10);
        let mut s1 = EstimateState::new(vec![Point::new2(3.0, 3.0); 10]);
        let mut s2 = s1.clone();
        for _ in 0..200 {
            let o = run_iteration(&mut w1, &mut s1, &first, &NoiseConfig::none());
            let mut robots: Vec<_> = o.records.iter().map(|r| r.robot).collect();
            robots.dedup();
            assert_eq!(robots.len(), o.records.len());
            let o = run_iteration(&mut w2, &mut s2, &single, &NoiseConfig::none());
            assert!(o.records.windows(2).all(|p| p[0].robot == p[1].robot));
        }
    }

    #[test]
    fn noiseless_iteration_error_follows_weights() {
        // Robots holding exact estimates keep them exact.
        let mut w = small_world(11, 8);
        let mut st = EstimateState::new(w.robot_positions());
        for _ in 0..100 {
            run_iteration(
                &mut w,
                &mut st,
                &AlgorithmConfig::default(),
                &NoiseConfig::none(),
            );
        }
        for (e, t) in st.estimates.iter().zip(w.robot_positions()) {
            assert!(e.distance(&t) < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn inside_weights_reconstruct_the_point(
            pts in proptest::collection::vec((0.0..2.0f64, 0.0..2.0f64), 4),
        ) {
            let nodes: Vec<(NodeId, Point)> = pts.iter().enumerate().map(|(i, &(x, y))| (i, Point::new2(x, y))).collect();
            let pos = positions(&nodes);
            let t = RangeTable::from_positions(0, &[1, 2, 3], &pos);
            let (c, _) = find_triangulation_sets(&t, 4, 2, &AlgorithmConfig::default(), false);
            for cand in &c {
                let rebuilt = cand.members.iter().zip(cand.weights.as_slice())
                    .fold(Point::ZERO, |acc, (&j, &w)| acc + pos(j) * w);
                prop_assert!(rebuilt.distance(&pos(0)) < 1e-6);
                prop_assert!(cand.weights.as_slice().iter().all(|&w| w > 0.0));
            }
        }
    }
}
