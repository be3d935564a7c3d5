//! Sampled and exhaustive checks of cube comparability and ball doubling.
//!
//! For a radius `t` the working level is the `k` with `3 r^k <= t < 3 r^(k-1)`.
//! The cube of `y` at that level lies inside `B(y, t)`; every level-`k` cube
//! meeting `B(y, 2t)` must then have mass at most `p^-4` times that cube, and
//! consequently `μ(B(y, 2t)) <= M̃ p^-4 μ(B(y, t))` where `M̃` counts the
//! cubes meeting the larger ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubes::{CubeTree, NodeId};
use crate::error::{Error, Result};
use crate::measure::{MeasureAssignment, MeasureKind};
use crate::metric::FiniteMetricSpace;
use crate::nets::radius;

/// Largest space accepted by the exhaustive sweep.
pub const EXHAUSTIVE_MAX_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    None,
    /// Raised to `k_min`.
    Coarse,
    /// Lowered to `k_max`.
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleLevel {
    pub k: i32,
    pub unclamped: i32,
    pub clamp: Clamp,
}

/// The `k` with `3 r^k <= t < 3 r^(k-1)`, clamped into `[k_min, k_max]`.
pub fn scale_level(t: f64, r: f64, k_min: i32, k_max: i32) -> ScaleLevel {
    assert!(t > 0.0 && r > 0.0 && r < 1.0, "scale_level needs t > 0 and 0 < r < 1");
    let mut k = ((t / 3.0).ln() / r.ln()).floor() as i32;
    loop {
        if 3.0 * radius(r, k) > t {
            k += 1;
        } else if 3.0 * radius(r, k - 1) <= t {
            k -= 1;
        } else {
            break;
        }
    }
    let (level, clamp) = if k < k_min {
        (k_min, Clamp::Coarse)
    } else if k > k_max {
        (k_max, Clamp::Fine)
    } else {
        (k, Clamp::None)
    };
    ScaleLevel {
        k: level,
        unclamped: k,
        clamp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub y: usize,
    pub t: f64,
    pub k: i32,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub samples: usize,
    pub seed: u64,
    pub exhaustive: bool,
    pub r: f64,
    pub p: f64,
    /// Bounds are asserted only for the standard split with `r <= 1/7`.
    pub asserted: bool,
    pub clamped_draws: usize,
    pub containment_failures: usize,
    pub worst_ratio_cubes: f64,
    pub bound_cubes: f64,
    pub cube_violations: usize,
    pub worst_cube_witness: Option<Witness>,
    pub balls_checked: bool,
    pub worst_ratio_balls: f64,
    pub m_tilde: usize,
    pub bound_balls: f64,
    pub ball_violations: usize,
    pub worst_ball_witness: Option<Witness>,
    pub pass_cubes: bool,
    pub pass_balls: bool,
}

impl DoublingReport {
    /// True when nothing asserted failed.
    pub fn passed(&self) -> bool {
        !self.asserted
            || (self.pass_cubes
                && self.containment_failures == 0
                && (!self.balls_checked || self.pass_balls))
    }
}

struct Context<'a> {
    tree: &'a CubeTree,
    space: &'a FiniteMetricSpace,
    measure: &'a MeasureAssignment,
    assignments: Vec<Vec<usize>>,
    bound: f64,
}

#[derive(Debug, Clone, Copy)]
struct DrawOutcome {
    y: usize,
    t: f64,
    k: i32,
    clamped: bool,
    contained: bool,
    meeting: usize,
    cube_ratio: f64,
    ball_ratio: f64,
}

impl DrawOutcome {
    fn witness(&self, ratio: f64) -> Witness {
        Witness {
            y: self.y,
            t: self.t,
            k: self.k,
            ratio,
        }
    }
}

impl<'a> Context<'a> {
    fn new(
        tree: &'a CubeTree,
        space: &'a FiniteMetricSpace,
        measure: &'a MeasureAssignment,
    ) -> Result<Self> {
        measure.check_tree(tree)?;
        if space.len() != tree.num_points() {
            return Err(Error::Mismatch(format!(
                "space has {} points, tree {}",
                space.len(),
                tree.num_points()
            )));
        }
        Ok(Context {
            tree,
            space,
            measure,
            assignments: tree.all_assignments(),
            bound: measure.p().powi(-4),
        })
    }

    fn t_range(&self) -> (f64, f64) {
        let lo = 3.0 * radius(self.tree.r(), self.tree.k_max());
        (lo, self.space.diameter().max(lo))
    }

    fn evaluate(&self, y: usize, t: f64, dists: &[f64], balls: bool) -> Result<DrawOutcome> {
        let tree = self.tree;
        let level = scale_level(t, tree.r(), tree.k_min(), tree.k_max());
        let k = level.k;
        let idx = (k - tree.k_min()) as usize;
        let assign = &self.assignments[idx];
        let masses = self.measure.level_masses(k);

        let inside = |pos: usize| {
            tree.members(NodeId(k, pos))
                .iter()
                .all(|&m| dists[m] <= t)
        };
        let own = assign[y];
        let contained = if inside(own) {
            Some(own)
        } else {
            (0..tree.level(k).len()).find(|&pos| inside(pos))
        };

        let mut meeting: Vec<usize> = (0..dists.len())
            .filter(|&z| dists[z] <= 2.0 * t)
            .map(|z| assign[z])
            .collect();
        meeting.sort_unstable();
        meeting.dedup();

        let cube_ratio = match contained {
            Some(i) => meeting
                .iter()
                .map(|&j| masses[j] / masses[i])
                .fold(1.0, f64::max),
            None => f64::NAN,
        };

        let ball_ratio = if balls {
            let mut small = 0.0;
            let mut large = 0.0;
            for (z, &d) in dists.iter().enumerate() {
                if d <= t {
                    small += self.measure.point_mass(z);
                }
                if d <= 2.0 * t {
                    large += self.measure.point_mass(z);
                }
            }
            if !(small > 0.0) {
                return Err(Error::ZeroMassBall { x: y, t });
            }
            large / small
        } else {
            f64::NAN
        };

        Ok(DrawOutcome {
            y,
            t,
            k,
            clamped: level.clamp != Clamp::None,
            contained: contained.is_some(),
            meeting: meeting.len(),
            cube_ratio,
            ball_ratio,
        })
    }

    fn distances_from(&self, y: usize) -> Vec<f64> {
        (0..self.space.len()).map(|z| self.space.dist(y, z)).collect()
    }

    fn report(
        &self,
        outcomes: &[DrawOutcome],
        seed: u64,
        exhaustive: bool,
        balls: bool,
    ) -> DoublingReport {
        let standard = matches!(
            self.measure.kind(),
            MeasureKind::Doubling | MeasureKind::AlphaHomogeneous { .. }
        );
        let mut rep = DoublingReport {
            samples: outcomes.len(),
            seed,
            exhaustive,
            r: self.tree.r(),
            p: self.measure.p(),
            asserted: standard && self.tree.r() <= 1.0 / 7.0,
            clamped_draws: 0,
            containment_failures: 0,
            worst_ratio_cubes: 1.0,
            bound_cubes: self.bound,
            cube_violations: 0,
            worst_cube_witness: None,
            balls_checked: balls,
            worst_ratio_balls: 1.0,
            m_tilde: 0,
            bound_balls: 0.0,
            ball_violations: 0,
            worst_ball_witness: None,
            pass_cubes: true,
            pass_balls: true,
        };
        for o in outcomes {
            if o.clamped {
                rep.clamped_draws += 1;
            }
            rep.m_tilde = rep.m_tilde.max(o.meeting);
            if !o.contained {
                rep.containment_failures += 1;
                continue;
            }
            if o.cube_ratio > self.bound {
                rep.cube_violations += 1;
            }
            if rep.worst_cube_witness.is_none_or(|w| o.cube_ratio > w.ratio) {
                rep.worst_ratio_cubes = o.cube_ratio;
                rep.worst_cube_witness = Some(o.witness(o.cube_ratio));
            }
        }
        rep.pass_cubes = rep.worst_ratio_cubes <= rep.bound_cubes;
        if balls {
            rep.bound_balls = rep.m_tilde as f64 * self.bound;
            for o in outcomes {
                if o.ball_ratio > rep.bound_balls {
                    rep.ball_violations += 1;
                }
                if rep.worst_ball_witness.is_none_or(|w| o.ball_ratio > w.ratio) {
                    rep.worst_ratio_balls = o.ball_ratio;
                    rep.worst_ball_witness = Some(o.witness(o.ball_ratio));
                }
            }
            rep.pass_balls = rep.worst_ratio_balls <= rep.bound_balls;
        }
        rep
    }
}

/// Seeded draws: `y` uniform over points, `log t` uniform over
/// `[log(3 r^k_max), log(diameter)]`.
fn draws(ctx: &Context<'_>, samples: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = ctx.t_range();
    let (llo, lhi) = (lo.ln(), hi.ln());
    let n = ctx.space.len();
    (0..samples)
        .map(|_| {
            let y = rng.gen_range(0..n);
            let u: f64 = rng.gen();
            (y, (llo + u * (lhi - llo)).exp())
        })
        .collect()
}

fn run_sampled(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    samples: usize,
    seed: u64,
    balls: bool,
) -> Result<DoublingReport> {
    let ctx = Context::new(tree, space, measure)?;
    let outcomes = draws(&ctx, samples, seed)
        .into_par_iter()
        .map(|(y, t)| ctx.evaluate(y, t, &ctx.distances_from(y), balls))
        .collect::<Result<Vec<_>>>()?;
    Ok(ctx.report(&outcomes, seed, false, balls))
}

/// Worst same-level cube mass ratio against a cube inside `B(y, t)`, over
/// seeded draws of `(y, t)`.
pub fn verify_cube_comparability(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    samples: usize,
    seed: u64,
) -> Result<DoublingReport> {
    run_sampled(tree, measure, space, samples, seed, false)
}

/// Cube comparability plus the ball ratio `μ(B(y, 2t)) / μ(B(y, t))`.
pub fn verify_doubling(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    samples: usize,
    seed: u64,
) -> Result<DoublingReport> {
    run_sampled(tree, measure, space, samples, seed, true)
}

/// Every center `y` and every radius at which `B(y, t)` or `B(y, 2t)` changes
/// within `[3 r^k_max, diameter]`, plus both endpoints.
pub fn verify_doubling_exhaustive(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
) -> Result<DoublingReport> {
    if space.len() > EXHAUSTIVE_MAX_POINTS {
        return Err(Error::InvalidParameter(format!(
            "exhaustive mode is limited to {EXHAUSTIVE_MAX_POINTS} points, got {}",
            space.len()
        )));
    }
    let ctx = Context::new(tree, space, measure)?;
    let (lo, hi) = ctx.t_range();
    let per_center: Vec<Vec<DrawOutcome>> = (0..space.len())
        .into_par_iter()
        .map(|y| {
            let dists = ctx.distances_from(y);
            let mut radii: Vec<f64> = dists
                .iter()
                .flat_map(|&d| [d, d / 2.0])
                .chain([lo, hi])
                .filter(|&t| t >= lo && t <= hi && t > 0.0)
                .collect();
            radii.sort_by(f64::total_cmp);
            radii.dedup();
            radii
                .into_iter()
                .map(|t| ctx.evaluate(y, t, &dists, true))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<DrawOutcome> = per_center.into_iter().flatten().collect();
    Ok(ctx.report(&outcomes, 0, true, true))
}
