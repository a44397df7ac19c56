//! Distance-only simplex geometry.
//!
//! Everything here works from squared pairwise distances: simplex volumes
//! come from Cayley-Menger determinants, the convex-hull inclusion test
//! compares the sum of the sub-simplex volumes (candidate point substituted
//! for each vertex in turn) with the outer volume, and the barycentric
//! coordinates are the ratios of those volumes.
//!
//! Supported dimensions are `m = 1, 2, 3`. For `m = 1` a simplex is a
//! segment, its "volume" is its length and the inclusion test reduces to
//! betweenness: `|d(i,1) + d(i,2) - d(1,2)|` relative to `d(1,2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// Largest supported spatial dimension.
pub const MAX_SIMPLEX_DIM: usize = 3;
const MAX_VERTICES: usize = MAX_SIMPLEX_DIM + 1;
const MAX_BORDERED: usize = MAX_VERTICES + 1;

/// Default relative tolerance of the inclusion test on exact distances.
pub const NOISELESS_TOLERANCE: f64 = 1e-9;
/// Default minimum sub-volume, relative to the outer volume, for a point to
/// count as strictly interior.
pub const INTERIOR_FLOOR: f64 = 1e-12;
/// Outer volumes below this fraction of `scale^m` are treated as zero.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// `s_m = 2^m (m!)^2 / (-1)^(m+1)`, the normalising coefficient of the
/// Cayley-Menger determinant of an `m`-simplex.
pub fn coefficient_s(m: usize) -> Result<f64> {
    if m > MAX_SIMPLEX_DIM {
        return Err(Error::Domain(format!(
            "Cayley-Menger coefficient requested for m = {m}, supported range is 0..=3"
        )));
    }
    let factorial: f64 = (1..=m).map(|v| v as f64).product();
    let magnitude = 2f64.powi(m as i32) * factorial * factorial;
    Ok(if m.is_multiple_of(2) {
        -magnitude
    } else {
        magnitude
    })
}

/// Symmetric `(m+1) x (m+1)` matrix of squared distances between the
/// vertices of a simplex in `R^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredDistanceMatrix {
    dim: usize,
    entries: [[f64; MAX_VERTICES]; MAX_VERTICES],
}

impl SquaredDistanceMatrix {
    /// Validates and wraps a square matrix of squared distances.
    pub fn new(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        check_dim(dim)?;
        let n = dim + 1;
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Domain(format!(
                "expected a {n}x{n} squared-distance matrix for m = {dim}"
            )));
        }
        let mut entries = [[0.0; MAX_VERTICES]; MAX_VERTICES];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!(
                        "squared distance [{i}][{j}] = {v} is not a finite non-negative number"
                    )));
                }
                entries[i][j] = v;
            }
        }
        for i in 0..n {
            if entries[i][i] != 0.0 {
                return Err(Error::Domain(format!(
                    "diagonal entry [{i}][{i}] is not zero"
                )));
            }
            for j in 0..i {
                if entries[i][j] != entries[j][i] {
                    return Err(Error::Domain(format!(
                        "matrix is not symmetric at [{i}][{j}]"
                    )));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    /// Squared distances among `points`; `points.len()` must be `dim + 1`.
    pub fn from_points(dim: usize, points: &[Point]) -> Result<Self> {
        check_dim(dim)?;
        if points.len() != dim + 1 {
            return Err(Error::Domain(format!(
                "{} points given, a simplex in R^{dim} has {}",
                points.len(),
                dim + 1
            )));
        }
        let mut entries = [[0.0; MAX_VERTICES]; MAX_VERTICES];
        for i in 0..points.len() {
            for j in 0..i {
                let d = points[i].distance_squared(&points[j]);
                entries[i][j] = d;
                entries[j][i] = d;
            }
        }
        Ok(Self { dim, entries })
    }

    /// Builds the matrix from a symmetric accessor, skipping validation of
    /// symmetry (guaranteed by construction).
    pub(crate) fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = [[0.0; MAX_VERTICES]; MAX_VERTICES];
        for i in 0..=dim {
            for j in 0..i {
                let v = f(i, j);
                entries[i][j] = v;
                entries[j][i] = v;
            }
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.dim + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// Matrix of the simplex with vertex `j` replaced by a candidate point
    /// whose squared distances to the vertices are `candidate`.
    pub fn with_vertex_replaced(&self, j: usize, candidate: &[f64]) -> Self {
        let mut out = *self;
        for (l, &d) in candidate.iter().enumerate().take(self.vertex_count()) {
            if l != j {
                out.entries[j][l] = d;
                out.entries[l][j] = d;
            }
        }
        out.entries[j][j] = 0.0;
        out
    }

    /// The same matrix with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        for row in out.entries.iter_mut() {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        out
    }

    fn max_entry(&self) -> f64 {
        let n = self.vertex_count();
        self.entries[..n]
            .iter()
            .flat_map(|r| r[..n].iter())
            .fold(0.0_f64, |a, &b| a.max(b))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_SIMPLEX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "dimension m = {dim} is not supported (expected 1..=3)"
        )))
    }
}

/// Signed determinant of the bordered matrix `[[0, 1^T], [1, D]]`.
///
/// Evaluated in double-double arithmetic: for thin simplexes the determinant
/// is a small difference of large products and plain `f64` loses most digits.
pub fn cayley_menger_determinant(d: &SquaredDistanceMatrix) -> f64 {
    let n = d.vertex_count() + 1;
    let mut a = [[Dd::ZERO; MAX_BORDERED]; MAX_BORDERED];
    for i in 1..n {
        a[0][i] = Dd::from(1.0);
        a[i][0] = Dd::from(1.0);
        for j in 1..n {
            a[i][j] = Dd::from(d.entries[i - 1][j - 1]);
        }
    }
    determinant(&mut a, n).hi()
}

/// Gaussian elimination with partial pivoting on the leading `n x n` block.
fn determinant(a: &mut [[Dd; MAX_BORDERED]; MAX_BORDERED], n: usize) -> Dd {
    let mut det = Dd::from(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].hi().abs().total_cmp(&a[y][col].hi().abs()))
            .unwrap_or(col);
        if a[pivot][col].hi() == 0.0 {
            return Dd::from(0.0);
        }
        if pivot != col {
            a.swap(pivot, col);
            det = det.neg();
        }
        let p = a[col][col];
        det = det.mul(p);
        for row in col + 1..n {
            let factor = a[row][col].div(p);
            if factor.hi() != 0.0 {
                for k in col..n {
                    a[row][k] = a[row][k].sub(factor.mul(a[col][k]));
                }
            }
        }
    }
    det
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`, about 32 digits.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn hi(self) -> f64 {
        self.hi
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd {
            hi: s,
            lo: b - (s - a),
        }
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let u = Dd::quick_two_sum(s.hi, s.lo + t.hi);
        Dd::quick_two_sum(u.hi, u.lo + t.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    /// Veltkamp split into two 26-bit halves.
    fn split(a: f64) -> (f64, f64) {
        let t = 134_217_729.0 * a;
        let hi = t - (t - a);
        (hi, a - hi)
    }

    /// Dekker's exact product, avoiding a software `mul_add` on targets
    /// without FMA.
    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        let (ah, al) = Dd::split(a);
        let (bh, bl) = Dd::split(b);
        let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
        Dd { hi: p, lo: e }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::two_prod(self.hi, o.hi);
        Dd::quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        Dd::quick_two_sum(q1, q2).add(Dd::from(q3))
    }
}

/// Volume of a simplex together with the determinant it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexVolumeResult {
    pub raw_determinant: f64,
    /// Present exactly when `valid`.
    pub volume: Option<f64>,
    /// The determinant has the sign of `s_m` (or is zero), so the volume is real.
    pub valid: bool,
}

impl SimplexVolumeResult {
    /// Volume ignoring the sign screen: `sqrt(|det / s_m|)`.
    pub fn magnitude(&self, dim: usize) -> f64 {
        let s = coefficient_s(dim).expect("dimension validated on construction");
        (self.raw_determinant / s).abs().sqrt()
    }
}

/// Hypervolume `sqrt(det / s_m)` of the simplex, or `valid = false` when
/// the determinant has the wrong sign for a real simplex.
pub fn simplex_volume(d: &SquaredDistanceMatrix) -> SimplexVolumeResult {
    let det = cayley_menger_determinant(d);
    let s = coefficient_s(d.dim()).expect("dimension validated on construction");
    let ratio = det / s;
    if ratio >= 0.0 {
        SimplexVolumeResult {
            raw_determinant: det,
            volume: Some(ratio.sqrt()),
            valid: true,
        }
    } else {
        SimplexVolumeResult {
            raw_determinant: det,
            volume: None,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Inside,
    Outside,
    Degenerate,
}

/// How the sum of sub-volumes is compared against the outer volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToleranceRule {
    /// `|sum - outer| / outer <= tolerance`.
    TwoSided,
    /// `(sum - outer) / outer <= tolerance`: only a sum exceeding the outer
    /// volume rejects. On exact distances the sum never falls short, so this
    /// coincides with `TwoSided`; on noisy distances it is the unscreened test.
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionParams {
    pub tolerance: f64,
    pub interior_floor: f64,
    /// Reject as degenerate when any determinant has an inadmissible sign.
    pub sign_screen: bool,
    pub rule: ToleranceRule,
}

impl InclusionParams {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

impl Default for InclusionParams {
    fn default() -> Self {
        Self {
            tolerance: NOISELESS_TOLERANCE,
            interior_floor: INTERIOR_FLOOR,
            sign_screen: true,
            rule: ToleranceRule::TwoSided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionResult {
    pub verdict: Verdict,
    pub outer_volume: f64,
    /// `sub_volumes[j]`: volume with the candidate substituted for vertex `j`.
    pub sub_volumes: Vec<f64>,
    /// `|sum(sub_volumes) - outer| / outer`.
    pub relative_error: f64,
}

/// Inclusion test with the default interior floor and sign screen.
pub fn inclusion_test(
    outer: &SquaredDistanceMatrix,
    candidate_distances: &[f64],
    tolerance: f64,
) -> Result<InclusionResult> {
    inclusion_test_with(
        outer,
        candidate_distances,
        &InclusionParams::with_tolerance(tolerance),
    )
}

/// Decides whether a point, known only through its squared distances to the
/// vertices, lies strictly inside the simplex described by `outer`.
pub fn inclusion_test_with(
    outer: &SquaredDistanceMatrix,
    candidate_distances: &[f64],
    params: &InclusionParams,
) -> Result<InclusionResult> {
    let n = outer.vertex_count();
    if candidate_distances.len() != n {
        return Err(Error::Domain(format!(
            "{} candidate distances given for a simplex with {n} vertices",
            candidate_distances.len()
        )));
    }
    if candidate_distances
        .iter()
        .any(|d| !d.is_finite() || *d < 0.0)
    {
        return Err(Error::Domain(
            "candidate squared distances must be finite and non-negative".into(),
        ));
    }

    let dim = outer.dim();
    let degenerate = |outer_volume: f64| InclusionResult {
        verdict: Verdict::Degenerate,
        outer_volume,
        sub_volumes: Vec::new(),
        relative_error: f64::INFINITY,
    };

    let outer_res = simplex_volume(outer);
    let outer_volume = match (outer_res.volume, params.sign_screen) {
        (Some(v), _) => v,
        (None, true) => return Ok(degenerate(0.0)),
        (None, false) => outer_res.magnitude(dim),
    };
    let scale = outer.max_entry().sqrt();
    if outer_volume <= DEGENERACY_FLOOR * scale.powi(dim as i32) || outer_volume == 0.0 {
        return Ok(degenerate(outer_volume));
    }

    let mut sub_volumes = Vec::with_capacity(n);
    for j in 0..n {
        let sub = simplex_volume(&outer.with_vertex_replaced(j, candidate_distances));
        match (sub.volume, params.sign_screen) {
            (Some(v), _) => sub_volumes.push(v),
            (None, true) => return Ok(degenerate(outer_volume)),
            (None, false) => sub_volumes.push(sub.magnitude(dim)),
        }
    }

    let total: f64 = sub_volumes.iter().sum();
    let signed_error = (total - outer_volume) / outer_volume;
    let relative_error = signed_error.abs();
    let within = match params.rule {
        ToleranceRule::TwoSided => relative_error <= params.tolerance,
        ToleranceRule::OneSided => signed_error <= params.tolerance,
    };
    let interior = sub_volumes
        .iter()
        .all(|&v| v > params.interior_floor * outer_volume);
    let verdict = if within && interior {
        Verdict::Inside
    } else {
        Verdict::Outside
    };
    Ok(InclusionResult {
        verdict,
        outer_volume,
        sub_volumes,
        relative_error,
    })
}

/// Convex weights of the candidate point, one per vertex, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycentricWeights(pub Vec<f64>);

impl BarycentricWeights {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Volume ratios `sub_volumes[j] / outer_volume`, renormalised to sum to one.
pub fn barycentric_coordinates(incl: &InclusionResult) -> Result<BarycentricWeights> {
    let raw = raw_barycentric_coordinates(incl)?;
    let total = raw.sum();
    Ok(BarycentricWeights(
        raw.0.iter().map(|w| w / total).collect(),
    ))
}

/// Volume ratios without renormalisation. On noisy distances they need not
/// sum to one.
pub fn raw_barycentric_coordinates(incl: &InclusionResult) -> Result<BarycentricWeights> {
    if incl.verdict != Verdict::Inside {
        return Err(Error::Contract(format!(
            "barycentric coordinates requested for a {:?} inclusion result",
            incl.verdict
        )));
    }
    Ok(BarycentricWeights(
        incl.sub_volumes
            .iter()
            .map(|v| v / incl.outer_volume)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Cofactor expansion along the first row; independent of the
    /// elimination used by the implementation.
    fn cofactor_det(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        (0..n)
            .map(|c| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(k, _)| *k != c)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][c] * cofactor_det(&minor)
            })
            .sum()
    }

    fn bordered(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows.len();
        let mut out = vec![vec![0.0; n + 1]; n + 1];
        for i in 0..n {
            out[0][i + 1] = 1.0;
            out[i + 1][0] = 1.0;
            for j in 0..n {
                out[i + 1][j + 1] = rows[i][j];
            }
        }
        out
    }

    fn tri(a2: f64, b2: f64, c2: f64) -> Vec<Vec<f64>> {
        vec![vec![0.0, a2, b2], vec![a2, 0.0, c2], vec![b2, c2, 0.0]]
    }

    fn unit_tetrahedron() -> Vec<Vec<f64>> {
        (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect()
    }

    #[test]
    fn coefficient_values() {
        assert_eq!(coefficient_s(0).unwrap(), -1.0);
        assert_eq!(coefficient_s(1).unwrap(), 2.0);
        assert_eq!(coefficient_s(2).unwrap(), -16.0);
        assert_eq!(coefficient_s(3).unwrap(), 288.0);
        assert!(matches!(coefficient_s(4), Err(Error::Domain(_))));
    }

    #[test]
    fn frozen_determinants_match_cofactor_oracle() {
        let right = tri(9.0, 16.0, 25.0);
        let tet = unit_tetrahedron();
        // Values frozen from the cofactor oracle.
        assert_eq!(cofactor_det(&bordered(&right)), -576.0);
        assert_eq!(cofactor_det(&bordered(&tet)), 4.0);

        let d = SquaredDistanceMatrix::new(2, &right).unwrap();
        assert_relative_eq!(cayley_menger_determinant(&d), -576.0, max_relative = 1e-14);
        let d = SquaredDistanceMatrix::new(3, &tet).unwrap();
        assert_relative_eq!(cayley_menger_determinant(&d), 4.0, max_relative = 1e-14);
        let d = SquaredDistanceMatrix::new(2, &tri(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(cayley_menger_determinant(&d), 0.0);
    }

    #[test]
    fn volumes() {
        let v = simplex_volume(&SquaredDistanceMatrix::new(2, &tri(9.0, 16.0, 25.0)).unwrap());
        assert!(v.valid);
        assert_relative_eq!(v.volume.unwrap(), 6.0, max_relative = 1e-12);

        let v = simplex_volume(&SquaredDistanceMatrix::new(3, &unit_tetrahedron()).unwrap());
        assert_relative_eq!(
            v.volume.unwrap(),
            1.0 / (6.0 * 2f64.sqrt()),
            max_relative = 1e-12
        );

        // Collinear 0 -- 1 -- 3: sides 1, 2, 3.
        let v = simplex_volume(&SquaredDistanceMatrix::new(2, &tri(1.0, 9.0, 4.0)).unwrap());
        assert_eq!(v.raw_determinant, 0.0);
        assert_eq!(v.volume, Some(0.0));
        assert!(v.valid);
    }

    #[test]
    fn impossible_triangle_fails_sign_screen() {
        // Sides 1, 1, 5 violate the triangle inequality.
        let v = simplex_volume(&SquaredDistanceMatrix::new(2, &tri(1.0, 1.0, 25.0)).unwrap());
        assert!(!v.valid);
        assert!(v.volume.is_none());
        assert!(v.raw_determinant > 0.0);
    }

    #[test]
    fn segment_length_is_its_volume() {
        let d = SquaredDistanceMatrix::new(1, &[vec![0.0, 9.0], vec![9.0, 0.0]]).unwrap();
        assert_relative_eq!(
            simplex_volume(&d).volume.unwrap(),
            3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn malformed_matrices_are_rejected() {
        assert!(SquaredDistanceMatrix::new(2, &tri(1.0, 2.0, 3.0)[..2]).is_err());
        let mut asym = tri(1.0, 2.0, 3.0);
        asym[0][1] = 1.5;
        assert!(SquaredDistanceMatrix::new(2, &asym).is_err());
        let mut diag = tri(1.0, 2.0, 3.0);
        diag[1][1] = 0.1;
        assert!(SquaredDistanceMatrix::new(2, &diag).is_err());
        assert!(SquaredDistanceMatrix::new(2, &tri(-1.0, 2.0, 3.0)).is_err());
        assert!(SquaredDistanceMatrix::new(4, &[]).is_err());
    }

    fn shoelace(a: Point, b: Point, c: Point) -> f64 {
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
    }

    fn squared_to(p: Point, vs: &[Point]) -> Vec<f64> {
        vs.iter().map(|v| p.distance_squared(v)).collect()
    }

    #[test]
    fn inclusion_inside_and_outside() {
        let vs = [
            Point::new2(0.0, 0.0),
            Point::new2(4.0, 0.0),
            Point::new2(0.0, 4.0),
        ];
        let outer = SquaredDistanceMatrix::from_points(2, &vs).unwrap();

        let p = Point::new2(1.0, 1.0);
        // Shoelace oracle: sub-areas opposite each vertex.
        let expected = [
            shoelace(p, vs[1], vs[2]),
            shoelace(vs[0], p, vs[2]),
            shoelace(vs[0], vs[1], p),
        ];
        assert_eq!(expected, [4.0, 2.0, 2.0]);
        let r = inclusion_test(&outer, &squared_to(p, &vs), 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Inside);
        assert_relative_eq!(r.outer_volume, 8.0, max_relative = 1e-12);
        for (got, want) in r.sub_volumes.iter().zip(expected) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        assert!(r.relative_error < 1e-12);

        let w = barycentric_coordinates(&r).unwrap();
        for (got, want) in w.0.iter().zip([0.5, 0.25, 0.25]) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }

        let q = Point::new2(3.0, 3.0);
        let expected = [
            shoelace(q, vs[1], vs[2]),
            shoelace(vs[0], q, vs[2]),
            shoelace(vs[0], vs[1], q),
        ];
        assert_eq!(expected, [4.0, 6.0, 6.0]);
        let r = inclusion_test(&outer, &squared_to(q, &vs), 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Outside);
        assert_relative_eq!(
            r.sub_volumes.iter().sum::<f64>(),
            16.0,
            max_relative = 1e-12
        );
        assert!(barycentric_coordinates(&r).is_err());
    }

    #[test]
    fn coincident_vertices_are_degenerate() {
        let vs = [Point::new2(1.0, 1.0); 3];
        let outer = SquaredDistanceMatrix::from_points(2, &vs).unwrap();
        let r = inclusion_test(&outer, &[2.0, 2.0, 2.0], 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Degenerate);
        assert!(barycentric_coordinates(&r).is_err());
    }

    #[test]
    fn dimension_mismatch_is_a_domain_error() {
        let vs = [
            Point::new2(0.0, 0.0),
            Point::new2(4.0, 0.0),
            Point::new2(0.0, 4.0),
        ];
        let outer = SquaredDistanceMatrix::from_points(2, &vs).unwrap();
        assert!(matches!(
            inclusion_test(&outer, &[1.0, 2.0], 1e-9),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn boundary_point_is_not_strictly_inside() {
        let vs = [
            Point::new2(0.0, 0.0),
            Point::new2(4.0, 0.0),
            Point::new2(0.0, 4.0),
        ];
        let outer = SquaredDistanceMatrix::from_points(2, &vs).unwrap();
        let r = inclusion_test(&outer, &squared_to(Point::new2(2.0, 0.0), &vs), 1e-9).unwrap();
        assert_ne!(r.verdict, Verdict::Inside);
    }

    #[test]
    fn centroid_weights_are_equal() {
        let vs = [
            Point::new2(-1.0, 0.3),
            Point::new2(5.0, 1.0),
            Point::new2(2.0, 7.0),
        ];
        let c = (vs[0] + vs[1] + vs[2]) * (1.0 / 3.0);
        let outer = SquaredDistanceMatrix::from_points(2, &vs).unwrap();
        let r = inclusion_test(&outer, &squared_to(c, &vs), 1e-9).unwrap();
        let w = barycentric_coordinates(&r).unwrap();
        for v in w.0 {
            assert_relative_eq!(v, 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn normalisation_restores_unit_sum() {
        let incl = InclusionResult {
            verdict: Verdict::Inside,
            outer_volume: 8.1,
            sub_volumes: vec![4.0, 2.0, 2.0],
            relative_error: 0.1 / 8.1,
        };
        let raw = raw_barycentric_coordinates(&incl).unwrap();
        assert!((raw.sum() - 1.0).abs() > 1e-3);
        let w = barycentric_coordinates(&incl).unwrap();
        assert!((w.sum() - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn betweenness_in_one_dimension() {
        let vs = [Point::from_slice(&[0.0]), Point::from_slice(&[4.0])];
        let outer = SquaredDistanceMatrix::from_points(1, &vs).unwrap();
        let inside =
            inclusion_test(&outer, &squared_to(Point::from_slice(&[1.0]), &vs), 1e-9).unwrap();
        assert_eq!(inside.verdict, Verdict::Inside);
        let w = barycentric_coordinates(&inside).unwrap();
        assert_relative_eq!(w.0[0], 0.75, max_relative = 1e-12);
        assert_relative_eq!(w.0[1], 0.25, max_relative = 1e-12);

        let outside =
            inclusion_test(&outer, &squared_to(Point::from_slice(&[5.0]), &vs), 1e-9).unwrap();
        assert_eq!(outside.verdict, Verdict::Outside);
    }

    #[test]
    fn sign_screen_catches_inconsistent_noisy_distances() {
        let vs = [
            Point::new2(0.0, 0.0),
            Point::new2(4.0, 0.0),
            Point::new2(0.0, 4.0),
        ];
        let outer = SquaredDistanceMatrix::from_points(2, &vs).unwrap();
        // Distances from a "point" 0.1 from vertex 0 but 10 from vertex 1:
        // no such point exists, the sub-triangle with vertex 2 is impossible.
        let cand = [0.01, 100.0, 16.0];
        let screened = inclusion_test(&outer, &cand, 0.2).unwrap();
        assert_eq!(screened.verdict, Verdict::Degenerate);
        let params = InclusionParams {
            tolerance: 0.2,
            sign_screen: false,
            ..InclusionParams::default()
        };
        let unscreened = inclusion_test_with(&outer, &cand, &params).unwrap();
        assert_ne!(unscreened.verdict, Verdict::Degenerate);
        assert_eq!(unscreened.sub_volumes.len(), 3);
    }

    #[test]
    fn one_sided_rule_accepts_short_sums() {
        let incl_params = InclusionParams {
            rule: ToleranceRule::OneSided,
            ..InclusionParams::default()
        };
        let vs = [
            Point::new2(0.0, 0.0),
            Point::new2(4.0, 0.0),
            Point::new2(0.0, 4.0),
        ];
        // Shrink the candidate distances so the sub-areas sum below the outer area.
        let cand: Vec<f64> = squared_to(Point::new2(1.0, 1.0), &vs)
            .iter()
            .map(|d| d * 0.9)
            .collect();
        let outer = SquaredDistanceMatrix::from_points(2, &vs).unwrap();
        let two = inclusion_test(&outer, &cand, 1e-9).unwrap();
        let one = inclusion_test_with(&outer, &cand, &incl_params).unwrap();
        assert_eq!(two.verdict, Verdict::Outside);
        assert_eq!(one.verdict, Verdict::Inside);
        assert!(one.sub_volumes.iter().sum::<f64>() < one.outer_volume);
    }

    #[test]
    fn double_double_keeps_the_low_word() {
        let third = Dd::from(1.0).div(Dd::from(3.0));
        let back = third.mul(Dd::from(3.0)).sub(Dd::from(1.0));
        assert!(back.hi.abs() < 1e-30, "{back:?}");
        assert!(third.lo != 0.0);
    }

    #[test]
    fn sliver_triangle_area_is_accurate() {
        let h = 2f64.powi(-20);
        let vs = [
            Point::new2(0.0, 0.0),
            Point::new2(8.0, 0.0),
            Point::new2(4.0, h),
        ];
        let d = SquaredDistanceMatrix::from_points(2, &vs).unwrap();
        let area = simplex_volume(&d).volume.unwrap();
        assert_relative_eq!(area, 4.0 * h, max_relative = 1e-14);
    }

    fn heron(a2: f64, b2: f64, c2: f64) -> f64 {
        let (a, b, c) = (a2.sqrt(), b2.sqrt(), c2.sqrt());
        let s = (a + b + c) / 2.0;
        (s * (s - a) * (s - b) * (s - c)).max(0.0).sqrt()
    }

    fn arb_points(dim: usize) -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, dim), dim + 1)
            .prop_map(|v| v.iter().map(|c| Point::from_slice(c)).collect())
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn volume_ignores_vertex_order(pts in arb_points(3), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
            let a = SquaredDistanceMatrix::from_points(3, &pts).unwrap();
            let shuffled: Vec<Point> = perm.iter().map(|&i| pts[i]).collect();
            let b = SquaredDistanceMatrix::from_points(3, &shuffled).unwrap();
            let (va, vb) = (simplex_volume(&a).magnitude(3), simplex_volume(&b).magnitude(3));
            prop_assert!((va - vb).abs() <= 1e-9 * va.max(1.0));
        }

        #[test]
        fn volume_scales_with_distance(pts in arb_points(2), c in 0.1..10.0f64) {
            let d = SquaredDistanceMatrix::from_points(2, &pts).unwrap();
            let v = simplex_volume(&d).magnitude(2);
            let vs = simplex_volume(&d.scaled(c * c)).magnitude(2);
            prop_assert!((vs - c * c * v).abs() <= 1e-9 * (c * c * v).max(1e-6));
        }

        #[test]
        fn triangle_area_agrees_with_heron(pts in arb_points(2)) {
            let d = SquaredDistanceMatrix::from_points(2, &pts).unwrap();
            let area = simplex_volume(&d).volume.unwrap();
            let e = &d.entries;
            let h = heron(e[0][1], e[0][2], e[1][2]);
            prop_assert!((area - h).abs() <= 1e-9 * 25.0);
        }

        #[test]
        fn weights_are_a_partition_of_unity(pts in arb_points(2), raw in proptest::collection::vec(0.05..1.0f64, 3)) {
            let s: f64 = raw.iter().sum();
            let p = pts.iter().zip(&raw).fold(Point::ZERO, |acc, (v, w)| acc + *v * (w / s));
            let outer = SquaredDistanceMatrix::from_points(2, &pts).unwrap();
            let res = inclusion_test(&outer, &squared_to(p, &pts), NOISELESS_TOLERANCE).unwrap();
            if res.verdict == Verdict::Inside {
                let w = barycentric_coordinates(&res).unwrap();
                prop_assert!((w.sum() - 1.0).abs() <= 1e-9);
                for (a, b) in w.as_slice().iter().zip(&raw) {
                    prop_assert!((a - b / s).abs() <= 1e-6);
                }
            }
        }
    }
}
