//! Finite metric spaces: storage, balls, axiom validation and greedy covering counts.
//!
//! A space is a fixed set of `n` points with a distance oracle. The oracle is
//! either a dense row-major matrix, a closed form on stored coordinates, or the
//! closed form of a complete m-ary tree ultrametric. Any of these may be
//! snowflaked by raising every distance to an exponent in (0, 1].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest point count stored as a dense distance matrix.
pub const DENSE_CAP: usize = 8192;

/// Norm used by coordinate-backed spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Euclidean,
    Chebyshev,
    Lp(f64),
}

impl Norm {
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::Chebyshev => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            Norm::Lp(p) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p),
        }
    }
}

#[derive(Debug, Clone)]
enum Distances {
    Dense(Vec<f64>),
    Coordinates {
        dim: usize,
        coords: Vec<f64>,
        norm: Norm,
    },
    /// Leaves of the complete `arity`-ary tree of height `depth`; leaf index
    /// digits (most significant first) spell the root-to-leaf path.
    TreeUltrametric {
        arity: usize,
        depth: u32,
        /// `powers[l]` is the distance of two leaves whose deepest common
        /// ancestor sits at depth `l`.
        powers: Vec<f64>,
    },
}

/// Closed or open ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallKind {
    /// `{y : d(x, y) <= t}`
    Closed,
    /// `{y : d(x, y) < t}`
    Open,
}

/// A finite metric space with cached diameter and minimal positive gap.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct FiniteMetricSpace {
    n: usize,
    labels: Option<Vec<String>>,
    distances: Distances,
    exponent: f64,
    base_point: usize,
    diameter: f64,
    min_gap: f64,
}

impl FiniteMetricSpace {
    /// Dense matrix space. Only shape and finiteness are checked here; metric
    /// axioms are the business of [`validate_metric`].
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        if n > DENSE_CAP {
            return Err(Error::SizeCapExceeded { n, cap: DENSE_CAP });
        }
        let mut d = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::MalformedDistances(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::MalformedDistances(format!(
                    "entry ({i}, {j}) is not finite"
                )));
            }
            d.extend(row);
        }
        Ok(Self::assemble(n, Distances::Dense(d)))
    }

    /// Coordinate-backed space; distances are evaluated on demand.
    pub fn from_coordinates(points: &[Vec<f64>], norm: Norm) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        if let Norm::Lp(p) = norm {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "l^p exponent {p} must be a finite value >= 1"
                )));
            }
        }
        let dim = points[0].len();
        let mut coords = Vec::with_capacity(n * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::MalformedDistances(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedDistances(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self::assemble(n, Distances::Coordinates { dim, coords, norm }))
    }

    /// Leaves of the complete `arity`-ary tree of height `depth` with
    /// `d(u, v) = ratio^l`, `l` the depth of the deepest common ancestor.
    pub fn tree_ultrametric(arity: usize, depth: u32, ratio: f64) -> Result<Self> {
        if arity < 1 {
            return Err(Error::InvalidParameter("arity must be >= 1".into()));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ultrametric ratio {ratio} must lie in (0, 1)"
            )));
        }
        let n = arity
            .checked_pow(depth)
            .ok_or(Error::SizeCapExceeded { n: usize::MAX, cap: usize::MAX })?;
        let powers = (0..depth.max(1) as i32).map(|l| ratio.powi(l)).collect();
        Ok(Self::assemble(
            n,
            Distances::TreeUltrametric {
                arity,
                depth,
                powers,
            },
        ))
    }

    fn assemble(n: usize, distances: Distances) -> Self {
        let mut space = FiniteMetricSpace {
            n,
            labels: None,
            distances,
            exponent: 1.0,
            base_point: 0,
            diameter: 0.0,
            min_gap: 0.0,
        };
        space.refresh_extent();
        space
    }

    fn refresh_extent(&mut self) {
        if self.n < 2 {
            self.diameter = 0.0;
            self.min_gap = 0.0;
            return;
        }
        let (diam, gap) = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut hi = 0.0f64;
                let mut lo = f64::INFINITY;
                for j in (i + 1)..self.n {
                    let d = self.dist(i, j);
                    hi = hi.max(d);
                    lo = lo.min(d);
                }
                (hi, lo)
            })
            .reduce(
                || (0.0, f64::INFINITY),
                |a, b| (a.0.max(b.0), a.1.min(b.1)),
            );
        self.diameter = diam;
        self.min_gap = gap;
    }

    /// Replace every distance `d` by `d^epsilon`.
    pub fn snowflake(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "snowflake exponent {epsilon} must lie in (0, 1]"
            )));
        }
        self.exponent *= epsilon;
        self.refresh_extent();
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::MalformedDistances(format!(
                "{} labels for {} points",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_base_point(mut self, x0: usize) -> Result<Self> {
        self.check_index(x0)?;
        self.base_point = x0;
        Ok(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Index of the distinguished point `x_0`.
    pub fn base_point(&self) -> usize {
        self.base_point
    }

    /// Largest pairwise distance (0 for a single point).
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest distance between distinct points (0 for a single point).
    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn snowflake_exponent(&self) -> f64 {
        self.exponent
    }

    /// Whether distances are exact in floating point for the usual test inputs
    /// (matrices and ultrametrics are looked up, coordinates go through roots).
    pub fn is_exact(&self) -> bool {
        self.exponent == 1.0 && !matches!(self.distances, Distances::Coordinates { .. })
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, n: self.n })
        }
    }

    /// Distance between points `i` and `j`. Panics on out-of-range indices.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let raw = match &self.distances {
            Distances::Dense(d) => d[i * self.n + j],
            Distances::Coordinates { dim, coords, norm } => {
                if i == j {
                    0.0
                } else {
                    norm.eval(
                        &coords[i * dim..(i + 1) * dim],
                        &coords[j * dim..(j + 1) * dim],
                    )
                }
            }
            Distances::TreeUltrametric {
                arity,
                depth,
                powers,
            } => {
                assert!(i < self.n && j < self.n, "index out of range");
                if i == j {
                    0.0
                } else {
                    powers[common_prefix(i, j, *arity, *depth) as usize]
                }
            }
        };
        if self.exponent == 1.0 {
            raw
        } else {
            raw.powf(self.exponent)
        }
    }

    /// Point indices of the closed or open ball around `x`, ascending.
    pub fn ball(&self, x: usize, t: f64, kind: BallKind) -> Result<Vec<usize>> {
        self.check_index(x)?;
        Ok((0..self.n)
            .filter(|&y| within(self.dist(x, y), t, kind))
            .collect())
    }

    /// Dense copy of the distance matrix. Intended for small spaces.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.dist(i, j)).collect())
            .collect()
    }
}

/// Number of leading base-`arity` digits (out of `depth`) shared by `i` and `j`.
fn common_prefix(i: usize, j: usize, arity: usize, depth: u32) -> u32 {
    let mut a = i;
    let mut b = j;
    let mut shared_suffix_free = 0u32;
    // strip digits from the least significant end until the prefixes agree
    while a != b {
        a /= arity;
        b /= arity;
        shared_suffix_free += 1;
    }
    depth - shared_suffix_free
}

/// Free-function form of [`FiniteMetricSpace::ball`].
pub fn ball(space: &FiniteMetricSpace, x: usize, t: f64, kind: BallKind) -> Result<Vec<usize>> {
    space.ball(x, t, kind)
}

#[inline]
pub(crate) fn within(d: f64, t: f64, kind: BallKind) -> bool {
    match kind {
        BallKind::Closed => d <= t,
        BallKind::Open => d < t,
    }
}

/// One axiom failure found by [`validate_metric`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonzeroDiagonal { i: usize, value: f64 },
    Negative { i: usize, j: usize, value: f64 },
    ZeroOffDiagonal { i: usize, j: usize },
    Asymmetric { i: usize, j: usize, forward: f64, backward: f64 },
    /// `d(i,k) > d(i,j) + d(j,k) + tol`.
    Triangle { i: usize, j: usize, k: usize, excess: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub tol: f64,
    pub triangle_checked: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Pairwise axioms only (diagonal, sign, symmetry). O(n^2).
pub fn validate_pairs(space: &FiniteMetricSpace, tol: f64) -> ValidationReport {
    let n = space.len();
    let mut violations = Vec::new();
    for i in 0..n {
        let dii = space.dist(i, i);
        if dii != 0.0 {
            violations.push(Violation::NonzeroDiagonal { i, value: dii });
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let dij = space.dist(i, j);
            if dij < 0.0 {
                violations.push(Violation::Negative { i, j, value: dij });
            } else if dij == 0.0 && i < j {
                violations.push(Violation::ZeroOffDiagonal { i, j });
            }
            if i < j {
                let dji = space.dist(j, i);
                if (dij - dji).abs() > tol {
                    violations.push(Violation::Asymmetric {
                        i,
                        j,
                        forward: dij,
                        backward: dji,
                    });
                }
            }
        }
    }
    ValidationReport {
        n,
        tol,
        triangle_checked: false,
        violations,
    }
}

/// Full axiom scan including every triangle `(i, j, k)` with `i < k`.
/// O(n^3); witnesses are listed in scan order.
pub fn validate_metric(space: &FiniteMetricSpace, tol: f64) -> ValidationReport {
    let mut report = validate_pairs(space, tol);
    let n = space.len();
    let triangles: Vec<Violation> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut found = Vec::new();
            for k in (i + 1)..n {
                let dik = space.dist(i, k);
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let bound = space.dist(i, j) + space.dist(j, k);
                    if dik > bound + tol {
                        found.push(Violation::Triangle {
                            i,
                            j,
                            k,
                            excess: dik - bound,
                        });
                    }
                }
            }
            found
        })
        .collect();
    report.violations.extend(triangles);
    report.triangle_checked = true;
    report
}

/// Centers of a greedy cover of the closed ball `B(x, 2t)` by closed `t`-balls
/// centered at points of the ball: repeatedly take the lowest-index uncovered
/// point as a new center.
pub fn greedy_cover(space: &FiniteMetricSpace, x: usize, t: f64) -> Result<Vec<usize>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "covering radius {t} must be positive"
        )));
    }
    let mut uncovered = space.ball(x, 2.0 * t, BallKind::Closed)?;
    let mut centers = Vec::new();
    while let Some(&c) = uncovered.first() {
        centers.push(c);
        uncovered.retain(|&y| space.dist(c, y) > t);
    }
    Ok(centers)
}

/// Greedy upper estimate of how many closed `t`-balls cover `B(x, 2t)`.
pub fn covering_number(space: &FiniteMetricSpace, x: usize, t: f64) -> Result<usize> {
    greedy_cover(space, x, t).map(|c| c.len())
}
