//! Seeded generators for test spaces with known structure.
//!
//! Every generator is a pure function of its [`GeneratorSpec`]; the base point
//! `x_0` is always index 0 of the generated ordering.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{validate_metric, FiniteMetricSpace, Norm};

/// Default cap on generated point counts.
pub const DEFAULT_MAX_POINTS: usize = 1 << 16;

fn one() -> f64 {
    1.0
}

fn third() -> f64 {
    1.0 / 3.0
}

/// Kind-specific generator parameters, serialized as `{"kind": .., "params": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `n` points `0, spacing, 2·spacing, ...` on a line.
    Grid1d {
        n: usize,
        #[serde(default = "one")]
        spacing: f64,
    },
    /// `nx × ny` lattice in the plane, row-major, Euclidean distance.
    Grid2d {
        nx: usize,
        ny: usize,
        #[serde(default = "one")]
        spacing: f64,
    },
    /// `n` uniform points in `[0, side)^dim`, Euclidean distance.
    EuclideanRandom {
        n: usize,
        dim: usize,
        #[serde(default = "one")]
        side: f64,
    },
    /// Binary Cantor code space: `2^depth` codes, distance `ratio^l` where `l`
    /// is the length of the common prefix.
    CantorUltrametric {
        depth: u32,
        #[serde(default = "third")]
        ratio: f64,
    },
    /// Leaves of the complete `arity`-ary tree of height `depth`,
    /// `d(u, v) = ratio^(depth of deepest common ancestor)`, root depth 0.
    MaryUltrametric { arity: usize, depth: u32, ratio: f64 },
    /// `base` with every distance raised to `epsilon`.
    #[serde(alias = "snowflake_wrapped", alias = "snowflake-wrapped")]
    Snowflake {
        epsilon: f64,
        base: Box<GeneratorKind>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        GeneratorSpec { kind, seed }
    }
}

impl GeneratorKind {
    /// Number of points the generator will produce, if representable.
    pub fn point_count(&self) -> Option<usize> {
        match self {
            GeneratorKind::Grid1d { n, .. } => Some(*n),
            GeneratorKind::Grid2d { nx, ny, .. } => nx.checked_mul(*ny),
            GeneratorKind::EuclideanRandom { n, .. } => Some(*n),
            GeneratorKind::CantorUltrametric { depth, .. } => 2usize.checked_pow(*depth),
            GeneratorKind::MaryUltrametric { arity, depth, .. } => arity.checked_pow(*depth),
            GeneratorKind::Snowflake { base, .. } => base.point_count(),
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<FiniteMetricSpace> {
    generate_with_cap(spec, DEFAULT_MAX_POINTS)
}

pub fn generate_with_cap(spec: &GeneratorSpec, cap: usize) -> Result<FiniteMetricSpace> {
    let n = spec.kind.point_count().unwrap_or(usize::MAX);
    if n > cap {
        return Err(Error::SizeCapExceeded { n, cap });
    }
    build(&spec.kind, spec.seed)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive")))
    }
}

fn build(kind: &GeneratorKind, seed: u64) -> Result<FiniteMetricSpace> {
    match kind {
        GeneratorKind::Grid1d { n, spacing } => {
            nonzero("n", *n)?;
            positive("spacing", *spacing)?;
            let pts: Vec<Vec<f64>> = (0..*n).map(|i| vec![i as f64 * spacing]).collect();
            FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean)
        }
        GeneratorKind::Grid2d { nx, ny, spacing } => {
            nonzero("nx", *nx)?;
            nonzero("ny", *ny)?;
            positive("spacing", *spacing)?;
            let mut pts = Vec::with_capacity(nx * ny);
            for row in 0..*ny {
                for col in 0..*nx {
                    pts.push(vec![col as f64 * spacing, row as f64 * spacing]);
                }
            }
            FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean)
        }
        GeneratorKind::EuclideanRandom { n, dim, side } => {
            nonzero("n", *n)?;
            nonzero("dim", *dim)?;
            positive("side", *side)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = HashSet::with_capacity(*n);
            let mut pts = Vec::with_capacity(*n);
            while pts.len() < *n {
                let p: Vec<f64> = (0..*dim).map(|_| rng.gen::<f64>() * side).collect();
                let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
                if seen.insert(key) {
                    pts.push(p);
                }
            }
            FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean)
        }
        GeneratorKind::CantorUltrametric { depth, ratio } => {
            FiniteMetricSpace::tree_ultrametric(2, *depth, *ratio)
        }
        GeneratorKind::MaryUltrametric {
            arity,
            depth,
            ratio,
        } => {
            nonzero("arity", *arity)?;
            FiniteMetricSpace::tree_ultrametric(*arity, *depth, *ratio)
        }
        GeneratorKind::Snowflake { epsilon, base } => {
            let space = build(base, seed)?.snowflake(*epsilon)?;
            recheck_snowflake(&space, seed)?;
            Ok(space)
        }
    }
}

/// Full triangle scan up to this many points; seeded triple sampling above.
const FULL_RECHECK_MAX: usize = 256;
const SAMPLED_TRIPLES: usize = 100_000;

fn recheck_snowflake(space: &FiniteMetricSpace, seed: u64) -> Result<()> {
    let tol = 1e-9 * space.diameter();
    let n = space.len();
    if n <= FULL_RECHECK_MAX {
        let report = validate_metric(space, tol);
        if let Some(v) = report.violations.first() {
            return Err(Error::InvalidParameter(format!(
                "snowflaked space fails metric validation: {v:?}"
            )));
        }
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1a4e);
    for _ in 0..SAMPLED_TRIPLES {
        let (i, j, k) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
        if space.dist(i, k) > space.dist(i, j) + space.dist(j, k) + tol {
            return Err(Error::InvalidParameter(format!(
                "snowflaked space fails the triangle inequality at ({i}, {j}, {k})"
            )));
        }
    }
    Ok(())
}
