//! Linear time-varying view of the network.
//!
//! Stacking the robots' estimates into `x_k`, one iteration of the localizer
//! reads `x_{k+1} = P_k x_k + B_k u_k + motion`. This module assembles
//! `P_k` and `B_k` from update records, cuts the matrix stream into slices
//! (shortest products in which every row has become sub-stochastic), checks
//! the slice norm bound and convergence conditions, verifies the noiseless
//! error recursion `e_{k+1} = P_k e_k`, and evaluates the necessary
//! localizability conditions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localizer::UpdateRecord;
use crate::point::Point;

/// Tolerance on the convexity of a single update.
pub const CONVEXITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    Identity,
    StochasticUpdate,
    SubStochasticUpdate,
}

/// One non-identity row of `[P_k | B_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdatedRow {
    pub robot: usize,
    /// Row of `P_k`, length `N`, self-entry included.
    pub p: Vec<f64>,
    /// Row of `B_k`, length `M`.
    pub b: Vec<f64>,
}

impl UpdatedRow {
    pub fn p_sum(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn b_sum(&self) -> f64 {
        self.b.iter().sum()
    }

    fn has_beacon(&self) -> bool {
        self.b.iter().any(|&v| v > 0.0)
    }
}

/// `P_k` (N x N) and `B_k` (N x M) stored as identity plus the updated rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMatrices {
    pub n_robots: usize,
    pub n_beacons: usize,
    /// Updated rows in increasing robot order.
    pub rows: Vec<UpdatedRow>,
}

impl SystemMatrices {
    pub fn identity(n_robots: usize, n_beacons: usize) -> Self {
        SystemMatrices {
            n_robots,
            n_beacons,
            rows: Vec::new(),
        }
    }

    pub fn kind(&self) -> MatrixKind {
        if self.rows.is_empty() {
            MatrixKind::Identity
        } else if self.rows.iter().any(UpdatedRow::has_beacon) {
            MatrixKind::SubStochasticUpdate
        } else {
            MatrixKind::StochasticUpdate
        }
    }

    pub fn row(&self, robot: usize) -> Option<&UpdatedRow> {
        self.rows.iter().find(|r| r.robot == robot)
    }

    pub fn p_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_robots;
        let mut out: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for r in &self.rows {
            out[r.robot] = r.p.clone();
        }
        out
    }

    pub fn b_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_beacons]; self.n_robots];
        for r in &self.rows {
            out[r.robot] = r.b.clone();
        }
        out
    }

    /// `P v` for a column vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for r in &self.rows {
            out[r.robot] = r.p.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `P E` for an N x m matrix stored row-wise as points.
    pub fn apply_points(&self, e: &[Point]) -> Vec<Point> {
        let mut out = e.to_vec();
        for r in &self.rows {
            out[r.robot] =
                r.p.iter()
                    .zip(e)
                    .fold(Point::ZERO, |acc, (w, x)| acc + *x * *w);
        }
        out
    }

    /// Infinity norm of `P` (maximum row sum; entries are non-negative).
    pub fn p_inf_norm(&self) -> f64 {
        let updated = self.rows.iter().map(UpdatedRow::p_sum).fold(0.0, f64::max);
        if self.rows.len() < self.n_robots {
            updated.max(1.0)
        } else {
            updated
        }
    }
}

fn check_record(rec: &UpdateRecord, n: usize, m: usize) -> Result<()> {
    let bad = |what: String| {
        Err(Error::Contract(format!(
            "record of robot {}: {what}",
            rec.robot
        )))
    };
    if rec.robot >= n {
        return bad("robot id out of range".into());
    }
    if !(0.0..1.0).contains(&rec.alpha_k) {
        return bad(format!("self-weight {} outside [0, 1)", rec.alpha_k));
    }
    for &(j, w) in &rec.robot_weights {
        if j >= n || j == rec.robot {
            return bad(format!("invalid robot member {j}"));
        }
        if !(w >= 0.0) {
            return bad(format!("negative weight {w} on robot {j}"));
        }
    }
    for &(b, w) in &rec.beacon_weights {
        if b < n || b >= n + m {
            return bad(format!("invalid beacon member {b}"));
        }
        if !(w >= 0.0) {
            return bad(format!("negative weight {w} on beacon {b}"));
        }
    }
    let total = rec.alpha_k + (1.0 - rec.alpha_k) * rec.weight_sum();
    if (total - 1.0).abs() > CONVEXITY_TOLERANCE {
        return bad(format!("row sums to {total}, not one"));
    }
    Ok(())
}

/// Folds one record into a row: `row <- alpha row + (1 - alpha) weights`.
fn chain_into(row: &mut UpdatedRow, rec: &UpdateRecord, n: usize) {
    let a = rec.alpha_k;
    for v in row.p.iter_mut().chain(row.b.iter_mut()) {
        *v *= a;
    }
    for &(j, w) in &rec.robot_weights {
        row.p[j] += (1.0 - a) * w;
    }
    for &(b, w) in &rec.beacon_weights {
        row.b[b - n] += (1.0 - a) * w;
    }
}

fn fresh_row(robot: usize, n: usize, m: usize) -> UpdatedRow {
    let mut p = vec![0.0; n];
    p[robot] = 1.0;
    UpdatedRow {
        robot,
        p,
        b: vec![0.0; m],
    }
}

/// Builds the system matrices for one iteration's update records.
///
/// Records of a single robot yield one matrix per record: the robot chains
/// its updates while every other estimate stays put, so the product of those
/// matrices is exact. When several robots update in the same iteration they
/// all read the estimates frozen at the start of the iteration, so each
/// robot's records are composed into one row and a single matrix is emitted.
/// No records yields a single identity matrix.
pub fn assemble_matrices(
    records: &[UpdateRecord],
    n: usize,
    m: usize,
) -> Result<Vec<SystemMatrices>> {
    for rec in records {
        check_record(rec, n, m)?;
    }
    let Some(first) = records.first() else {
        return Ok(vec![SystemMatrices::identity(n, m)]);
    };
    if records.iter().all(|r| r.robot == first.robot) {
        return Ok(records
            .iter()
            .map(|rec| {
                let mut row = fresh_row(rec.robot, n, m);
                chain_into(&mut row, rec, n);
                SystemMatrices {
                    n_robots: n,
                    n_beacons: m,
                    rows: vec![row],
                }
            })
            .collect());
    }
    let mut rows: Vec<UpdatedRow> = Vec::new();
    for rec in records {
        let pos = match rows.iter().position(|r| r.robot == rec.robot) {
            Some(p) => p,
            None => {
                rows.push(fresh_row(rec.robot, n, m));
                rows.len() - 1
            }
        };
        chain_into(&mut rows[pos], rec, n);
    }
    rows.sort_by_key(|r| r.robot);
    Ok(vec![SystemMatrices {
        n_robots: n,
        n_beacons: m,
        rows,
    }])
}

/// `1 - beta1^(length - 1) * deficit`: the infinity-norm bound of a slice of
/// `length` matrices whose self-weights are at least `beta1` and whose
/// sub-stochastic rows fall short of one by at least `deficit`.
///
/// With constant self-weight `beta` and beacon weight at least `alpha`, a
/// beacon update leaves a row sum of at most `1 - (1 - beta) alpha`, so the
/// deficit to pass is `(1 - beta) * alpha`.
pub fn slice_norm_bound(length: usize, beta1: f64, deficit: f64) -> f64 {
    let exp = length.saturating_sub(1) as i32;
    1.0 - beta1.powi(exp) * deficit
}

/// Largest slice length admissible for slice index `i` (1-based) under the
/// growth condition with parameters `gamma1`, `gamma2`.
pub fn growth_bound(i: usize, beta1: f64, deficit: f64, gamma1: f64, gamma2: f64) -> f64 {
    let decay = (-gamma2 * (i as f64).powf(-gamma1)).exp();
    ((1.0 - decay) / deficit).ln() / beta1.ln() + 1.0
}

/// Bound parameters derived from the algorithm's `alpha` and `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceParams {
    /// Lower bound on every self-weight.
    pub beta1: f64,
    /// Upper bound on the row sum of `P` after a beacon update, `1 - (1 - beta) alpha`.
    pub row_sum_cap: f64,
    /// `1 - row_sum_cap`, the quantity entering the slice bound.
    pub deficit: f64,
}

impl SliceParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        let deficit = (1.0 - beta) * alpha;
        SliceParams {
            beta1: beta,
            row_sum_cap: 1.0 - deficit,
            deficit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    /// Iteration of the matrix that opened the slice.
    pub start_iteration: u64,
    /// Iteration of the matrix that completed it.
    pub end_iteration: u64,
    /// Number of matrices in the slice.
    pub length: usize,
    pub product_inf_norm: f64,
    /// Smallest `1 - row sum` of the product, accumulated without
    /// cancellation so that it stays meaningful when the norm rounds to one.
    pub min_row_deficit: f64,
    pub bound: f64,
}

impl SliceSummary {
    pub fn within_bound(&self) -> bool {
        self.min_row_deficit > 0.0 && self.product_inf_norm <= self.bound + 1e-12
    }
}

/// Running slice segmentation over the matrix stream.
///
/// A row counts as informed once it has taken a beacon weight, or a positive
/// weight on an already informed row, within the current slice. This is the
/// structural form of "its row of the running product sums to less than
/// one", free of rounding false positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceState {
    params: SliceParams,
    n_robots: usize,
    open: bool,
    current_start: u64,
    length: usize,
    rows_substochastic: Vec<bool>,
    /// Row sums of the current slice's running product.
    slice_row_sums: Vec<f64>,
    /// `1 - slice_row_sums`, as `d <- b_sum + P d`.
    slice_row_deficits: Vec<f64>,
    /// Row sums of the product of every matrix seen so far.
    cumulative_row_sums: Vec<f64>,
    matrices_seen: usize,
    pub completed: Vec<SliceSummary>,
}

impl SliceState {
    pub fn new(n_robots: usize, params: SliceParams) -> Self {
        SliceState {
            params,
            n_robots,
            open: false,
            current_start: 0,
            length: 0,
            rows_substochastic: vec![false; n_robots],
            slice_row_sums: vec![1.0; n_robots],
            slice_row_deficits: vec![0.0; n_robots],
            cumulative_row_sums: vec![1.0; n_robots],
            matrices_seen: 0,
            completed: Vec::new(),
        }
    }

    pub fn params(&self) -> SliceParams {
        self.params
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn current_start(&self) -> Option<u64> {
        self.open.then_some(self.current_start)
    }

    pub fn current_length(&self) -> usize {
        self.length
    }

    pub fn rows_substochastic(&self) -> &[bool] {
        &self.rows_substochastic
    }

    /// Infinity norm of the current slice's running product.
    pub fn slice_norm(&self) -> f64 {
        max_of(&self.slice_row_sums)
    }

    /// Infinity norm of the product of every matrix seen so far.
    pub fn cumulative_norm(&self) -> f64 {
        max_of(&self.cumulative_row_sums)
    }

    pub fn matrices_seen(&self) -> usize {
        self.matrices_seen
    }

    /// Feeds one matrix produced at `iteration`; returns the summary of the
    /// slice it completes, if any.
    pub fn advance(&mut self, iteration: u64, mats: &SystemMatrices) -> Option<SliceSummary> {
        self.matrices_seen += 1;
        self.cumulative_row_sums = mats.apply(&self.cumulative_row_sums);

        if !self.open {
            if mats.kind() != MatrixKind::SubStochasticUpdate {
                return None;
            }
            self.open = true;
            self.current_start = iteration;
            self.length = 0;
            self.rows_substochastic = vec![false; self.n_robots];
            self.slice_row_sums = vec![1.0; self.n_robots];
            self.slice_row_deficits = vec![0.0; self.n_robots];
        }

        self.length += 1;
        self.slice_row_sums = mats.apply(&self.slice_row_sums);
        let mut deficits = mats.apply(&self.slice_row_deficits);
        for r in &mats.rows {
            deficits[r.robot] += r.b_sum();
        }
        self.slice_row_deficits = deficits;
        let before = self.rows_substochastic.clone();
        for r in &mats.rows {
            let informed = before[r.robot]
                || r.has_beacon()
                || r.p
                    .iter()
                    .enumerate()
                    .any(|(j, &w)| j != r.robot && w > 0.0 && before[j]);
            self.rows_substochastic[r.robot] = informed;
        }

        if self.rows_substochastic.iter().all(|&f| f) {
            self.open = false;
            let summary = SliceSummary {
                start_iteration: self.current_start,
                end_iteration: iteration,
                length: self.length,
                product_inf_norm: self.slice_norm(),
                min_row_deficit: self
                    .slice_row_deficits
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min),
                bound: slice_norm_bound(self.length, self.params.beta1, self.params.deficit),
            };
            self.completed.push(summary.clone());
            return Some(summary);
        }
        None
    }

    pub fn advance_all(&mut self, iteration: u64, mats: &[SystemMatrices]) -> Vec<SliceSummary> {
        mats.iter()
            .filter_map(|m| self.advance(iteration, m))
            .collect()
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Theorem1Mode {
    /// Every slice has length at most `L`.
    Bounded(usize),
    /// Slices of length at most `L1` keep recurring: both halves of the
    /// observed horizon contain at least one.
    InfiniteBounded(usize),
    /// Slice `i` has length at most the growth bound for `i`.
    Growth {
        gamma1: f64,
        gamma2: f64,
        beta1: f64,
        deficit: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Satisfied,
    Violated,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub mode: Theorem1Mode,
    pub status: CheckStatus,
    pub slice_count: usize,
    pub max_length: usize,
    /// Indices (0-based) of slices breaking the condition.
    pub witnesses: Vec<usize>,
    /// Fraction of slices no longer than the mode's length bound.
    pub short_fraction: Option<f64>,
}

/// Evaluates a convergence condition on an observed sequence of slices.
pub fn check_theorem1(summaries: &[SliceSummary], mode: Theorem1Mode) -> Theorem1Report {
    let lengths: Vec<usize> = summaries.iter().map(|s| s.length).collect();
    let mut report = Theorem1Report {
        mode,
        status: CheckStatus::Indeterminate,
        slice_count: lengths.len(),
        max_length: lengths.iter().copied().max().unwrap_or(0),
        witnesses: Vec::new(),
        short_fraction: None,
    };
    if lengths.is_empty() {
        return report;
    }
    let fraction = |limit: usize| {
        lengths.iter().filter(|&&l| l <= limit).count() as f64 / lengths.len() as f64
    };
    match mode {
        Theorem1Mode::Bounded(limit) => {
            report.witnesses = (0..lengths.len()).filter(|&i| lengths[i] > limit).collect();
            report.short_fraction = Some(fraction(limit));
            report.status = if report.witnesses.is_empty() {
                CheckStatus::Satisfied
            } else {
                CheckStatus::Violated
            };
        }
        Theorem1Mode::InfiniteBounded(limit) => {
            report.witnesses = (0..lengths.len()).filter(|&i| lengths[i] > limit).collect();
            report.short_fraction = Some(fraction(limit));
            let half = lengths.len() / 2;
            let recurs = |range: &[usize]| range.iter().any(|&l| l <= limit);
            report.status = if lengths.len() < 2 {
                CheckStatus::Indeterminate
            } else if recurs(&lengths[..half]) && recurs(&lengths[half..]) {
                CheckStatus::Satisfied
            } else {
                CheckStatus::Violated
            };
        }
        Theorem1Mode::Growth {
            gamma1,
            gamma2,
            beta1,
            deficit,
        } => {
            report.witnesses = (0..lengths.len())
                .filter(|&i| {
                    lengths[i] as f64 > growth_bound(i + 1, beta1, deficit, gamma1, gamma2)
                })
                .collect();
            report.status = if report.witnesses.is_empty() {
                CheckStatus::Satisfied
            } else {
                CheckStatus::Violated
            };
        }
    }
    report
}

/// `||e_next - P e||_inf` (maximum absolute row sum over the coordinates),
/// with `P` the product of `mats` in order.
pub fn verify_error_dynamics(
    e_k: &[Point],
    mats: &[SystemMatrices],
    e_next: &[Point],
) -> Result<f64> {
    if e_k.len() != e_next.len() {
        return Err(Error::Contract(format!(
            "error matrices have {} and {} rows",
            e_k.len(),
            e_next.len()
        )));
    }
    let mut predicted = e_k.to_vec();
    for m in mats {
        if m.n_robots != e_k.len() {
            return Err(Error::Contract(
                "system matrix size does not match the error".into(),
            ));
        }
        predicted = m.apply_points(&predicted);
    }
    Ok(e_next
        .iter()
        .zip(&predicted)
        .map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Infinity norm of an N x m error matrix.
pub fn error_inf_norm(e: &[Point]) -> f64 {
    e.iter()
        .map(|p| (0..3).map(|k| p[k].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInput {
    pub beacons: usize,
    pub robots: usize,
    pub dim: usize,
    /// Dimension of the span of all robots' motion subspaces.
    pub dim_robot_motion: usize,
    /// Dimension of the span of all beacons' motion subspaces.
    pub dim_beacon_motion: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeasibilityCondition {
    /// At least one beacon.
    BeaconPresent,
    /// `M + N >= m + 2`.
    NodeCount,
    /// `M + dim(robot motion) + dim(beacon motion) >= m + 1`.
    MotionDiversity,
}

impl fmt::Display for FeasibilityCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeasibilityCondition::BeaconPresent => write!(f, "at least one beacon is required"),
            FeasibilityCondition::NodeCount => {
                write!(f, "beacons + robots must be at least dimension + 2")
            }
            FeasibilityCondition::MotionDiversity => write!(
                f,
                "beacons + robot motion dimension + beacon motion dimension must be at least dimension + 1"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub input: FeasibilityInput,
    pub feasible: bool,
    pub violated_conditions: Vec<FeasibilityCondition>,
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.feasible {
            return write!(f, "feasible");
        }
        let parts: Vec<String> = self
            .violated_conditions
            .iter()
            .map(|c| c.to_string())
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Necessary conditions for every robot to become localizable.
pub fn check_feasibility(input: FeasibilityInput) -> FeasibilityReport {
    let FeasibilityInput {
        beacons,
        robots,
        dim,
        dim_robot_motion,
        dim_beacon_motion,
    } = input;
    let mut violated = Vec::new();
    if beacons < 1 {
        violated.push(FeasibilityCondition::BeaconPresent);
    }
    if beacons + robots < dim + 2 {
        violated.push(FeasibilityCondition::NodeCount);
    }
    if beacons + dim_robot_motion + dim_beacon_motion < dim + 1 {
        violated.push(FeasibilityCondition::MotionDiversity);
    }
    FeasibilityReport {
        input,
        feasible: violated.is_empty(),
        violated_conditions: violated,
    }
}
