//! Local L^q-spectrum and local dimension estimates, and the entropy bound on
//! the upper local dimension of the standard split measure.
//!
//! The limits in the definitions are replaced by finite-window surrogates: a
//! least-squares slope and a window extremum. Levels requested outside the
//! materialized range use the natural extension of the hierarchy: a single
//! cube of mass 1 above `k_min` and the singleton leaves below `k_max`.

use std::io::Write;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cubes::CubeTree;
use crate::doubling::scale_level;
use crate::error::{Error, Result};
use crate::measure::MeasureAssignment;
use crate::metric::FiniteMetricSpace;

/// Tolerance applied to each link of the dimension chain.
pub const CHAIN_TOLERANCE: f64 = 0.15;

/// How a cube meeting the window ball contributes to the level sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `μ(Q)` of the whole cube.
    #[default]
    FullCube,
    /// `μ(Q ∩ B(x, t))`.
    Intersection,
}

fn clamp_level(tree: &CubeTree, k: i32) -> i32 {
    k.clamp(tree.k_min(), tree.k_max())
}

fn level_sum(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    in_ball: &[bool],
    k: i32,
    q: f64,
    weighting: Weighting,
) -> f64 {
    let k = clamp_level(tree, k);
    let masses = measure.level_masses(k);
    let mut sum = 0.0;
    for (pos, _) in tree.level(k).iter().enumerate() {
        let members = tree.members(crate::cubes::NodeId(k, pos));
        match weighting {
            Weighting::FullCube => {
                if members.iter().any(|&m| in_ball[m]) {
                    sum += masses[pos].powf(q);
                }
            }
            Weighting::Intersection => {
                let part: f64 = members
                    .iter()
                    .filter(|&&m| in_ball[m])
                    .map(|&m| measure.point_mass(m))
                    .sum();
                if part > 0.0 {
                    sum += part.powf(q);
                }
            }
        }
    }
    sum
}

fn ball_mask(space: &FiniteMetricSpace, x: usize, t: f64) -> Vec<bool> {
    (0..space.len()).map(|y| space.dist(x, y) <= t).collect()
}

fn check_inputs(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    x: usize,
) -> Result<()> {
    measure.check_tree(tree)?;
    if space.len() != tree.num_points() {
        return Err(Error::Mismatch("space and tree sizes differ".into()));
    }
    space.check_index(x)
}

/// `Σ μ(Q)^q` over level-`k` cubes meeting the closed ball `B(x, t)`.
pub fn lq_sum(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    x: usize,
    t: f64,
    k: i32,
    q: f64,
) -> Result<f64> {
    lq_sum_weighted(tree, measure, space, x, t, k, q, Weighting::FullCube)
}

#[allow(clippy::too_many_arguments)]
pub fn lq_sum_weighted(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    x: usize,
    t: f64,
    k: i32,
    q: f64,
    weighting: Weighting,
) -> Result<f64> {
    check_inputs(tree, measure, space, x)?;
    if !(q >= 0.0) {
        return Err(Error::InvalidParameter(format!("q = {q} must be >= 0")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    tree.check_level(k)?;
    let mask = ball_mask(space, x, t);
    Ok(level_sum(tree, measure, &mask, k, q, weighting))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub x: usize,
    pub q: f64,
    pub t: f64,
    pub k_window: (i32, i32),
    pub log_sums: Vec<f64>,
    /// Least-squares slope of `log_sums` against `k log r`.
    pub tau_fit: f64,
    /// Minimum of `log_sum / (k log r)` over the window, `k = 0` skipped.
    pub tau_min: f64,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Finite-window estimate of `τ_q(μ, x)` over levels `k_window.0 ..= k_window.1`.
#[allow(clippy::too_many_arguments)]
pub fn tau_q_estimate(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    x: usize,
    q: f64,
    t: f64,
    k_window: (i32, i32),
    weighting: Weighting,
) -> Result<SpectrumEstimate> {
    check_inputs(tree, measure, space, x)?;
    let (lo, hi) = k_window;
    if hi - lo < 2 {
        return Err(Error::DegenerateWindow(format!(
            "window [{lo}, {hi}] has fewer than 3 levels"
        )));
    }
    if !(q >= 0.0) || !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("need q >= 0 and t > 0, got q = {q}, t = {t}")));
    }
    let ln_r = tree.r().ln();
    let mask = ball_mask(space, x, t);
    let levels: Vec<i32> = (lo..=hi).collect();
    let log_sums: Vec<f64> = levels
        .iter()
        .map(|&k| level_sum(tree, measure, &mask, k, q, weighting).ln())
        .collect();
    let xs: Vec<f64> = levels.iter().map(|&k| k as f64 * ln_r).collect();
    let tau_fit = slope(&xs, &log_sums);
    let tau_min = levels
        .iter()
        .zip(&log_sums)
        .filter(|(&k, _)| k != 0)
        .map(|(&k, &s)| s / (k as f64 * ln_r))
        .fold(f64::INFINITY, f64::min);
    Ok(SpectrumEstimate {
        x,
        q,
        t,
        k_window,
        log_sums,
        tau_fit,
        tau_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub x: usize,
    pub t_grid: Vec<f64>,
    pub log_ball_masses: Vec<f64>,
    pub upper_dim_est: f64,
    pub lower_dim_est: f64,
}

/// Radii `t, t/2, t/4, ...` down to the minimal gap. When that gives fewer
/// than four radii, four geometrically spaced radii from `t` down to half the
/// minimal gap are used instead.
pub fn default_radii(space: &FiniteMetricSpace, t: f64) -> Vec<f64> {
    let gap = space.min_gap();
    if !(gap > 0.0) {
        return (0..8).map(|j| t / 2f64.powi(j)).collect();
    }
    let mut radii = Vec::new();
    let mut s = t;
    while s >= gap {
        radii.push(s);
        s /= 2.0;
    }
    if radii.len() >= 4 {
        return radii;
    }
    let ratio = (gap / 2.0 / t).powf(1.0 / 3.0);
    let mut radii: Vec<f64> = (0..3).map(|j| t * ratio.powi(j)).collect();
    radii.push(gap / 2.0);
    radii
}

/// Slopes of `log μ(B(x, t))` against `log t` over the tail windows of the
/// grid (suffixes covering at least half of it, and at least three radii).
pub fn local_dimension_estimate(
    space: &FiniteMetricSpace,
    measure: &MeasureAssignment,
    x: usize,
    t_grid: &[f64],
) -> Result<DimensionEstimate> {
    space.check_index(x)?;
    if measure.point_masses().len() != space.len() {
        return Err(Error::Mismatch("measure and space sizes differ".into()));
    }
    if t_grid.len() < 4 {
        return Err(Error::InvalidParameter("need at least 4 radii".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("radii must be strictly decreasing".into()));
    }
    let floor = space.min_gap() / 2.0;
    if let Some(&t) = t_grid.iter().find(|&&t| !(t > 0.0 && t >= floor)) {
        return Err(Error::InvalidParameter(format!(
            "radius {t} is below half the minimal gap {floor}"
        )));
    }
    let dists: Vec<f64> = (0..space.len()).map(|y| space.dist(x, y)).collect();
    let mut log_ball_masses = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let m: f64 = dists
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= t)
            .map(|(y, _)| measure.point_mass(y))
            .sum();
        if !(m > 0.0) {
            return Err(Error::ZeroMassBall { x, t });
        }
        log_ball_masses.push(m.ln());
    }
    let log_t: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let len = t_grid.len();
    let min_len = 3.max(len.div_ceil(2));
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::INFINITY;
    for start in 0..=(len - min_len) {
        let s = slope(&log_t[start..], &log_ball_masses[start..]);
        upper = upper.max(s);
        lower = lower.min(s);
    }
    Ok(DimensionEstimate {
        x,
        t_grid: t_grid.to_vec(),
        log_ball_masses,
        upper_dim_est: upper,
        lower_dim_est: lower,
    })
}

/// `(M p log p + (1 - M p) log(1 - M p)) / log r`.
pub fn dimension_bound(m: usize, p: f64, r: f64) -> Result<f64> {
    let bound = 1.0 / (m as f64 + 1.0);
    if !(p > 0.0 && p <= bound) {
        return Err(Error::MassParameterOutOfRange { p, bound });
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("r = {r} must lie in (0, 1)")));
    }
    let mp = m as f64 * p;
    let central = 1.0 - mp;
    if !(central > 0.0) {
        return Err(Error::InvalidParameter("1 - M p vanishes".into()));
    }
    let spread = if m == 0 { 0.0 } else { mp * p.ln() };
    Ok((spread + central * central.ln()) / r.ln())
}

/// Points drawn with probability proportional to their mass.
pub fn sample_by_mass(measure: &MeasureAssignment, count: usize, seed: u64) -> Vec<usize> {
    let dist = WeightedIndex::new(measure.point_masses()).expect("positive point masses");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| dist.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub x: usize,
    /// `(q, τ_q / (q - 1))` for `q > 1`.
    pub from_above: Vec<(f64, f64)>,
    /// `(q, τ_q / (q - 1))` for `q < 1`.
    pub from_below: Vec<(f64, f64)>,
    pub lower_dim_est: f64,
    pub upper_dim_est: f64,
    /// `q > 1` surrogate ≤ lower dim ≤ upper dim ≤ `q < 1` surrogate, each
    /// up to the chain tolerance.
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub t: f64,
    pub tolerance: f64,
    pub k_window: (i32, i32),
    pub entries: Vec<ChainEntry>,
    pub fraction_ordered: f64,
}

/// Level window for spectra at radius `t`: from the scale level of `t` down
/// to `k_max`, widened upward to at least three levels.
pub fn spectrum_window(tree: &CubeTree, t: f64) -> (i32, i32) {
    let start = scale_level(t, tree.r(), tree.k_min(), tree.k_max()).k;
    let hi = tree.k_max();
    (start.min(hi - 2), hi)
}

/// Finite-scale surrogates of the `L^q` dimension chain at each sample point.
/// The ordering is recorded, not asserted.
pub fn check_dimension_chain(
    tree: &CubeTree,
    measure: &MeasureAssignment,
    space: &FiniteMetricSpace,
    sample_points: &[usize],
    q_grid: &[f64],
    t: f64,
) -> Result<ChainReport> {
    if !q_grid.iter().any(|&q| q < 1.0) || !q_grid.iter().any(|&q| q > 1.0) {
        return Err(Error::InvalidParameter("q grid must straddle 1".into()));
    }
    let window = spectrum_window(tree, t);
    let radii = default_radii(space, t);
    let mut entries = Vec::with_capacity(sample_points.len());
    for &x in sample_points {
        let mut from_above = Vec::new();
        let mut from_below = Vec::new();
        for &q in q_grid {
            if q == 1.0 {
                continue;
            }
            let est = tau_q_estimate(tree, measure, space, x, q, t, window, Weighting::FullCube)?;
            let v = est.tau_fit / (q - 1.0);
            if q > 1.0 {
                from_above.push((q, v));
            } else {
                from_below.push((q, v));
            }
        }
        let dim = local_dimension_estimate(space, measure, x, &radii)?;
        let nearest = |v: &[(f64, f64)]| {
            v.iter()
                .min_by(|a, b| (a.0 - 1.0).abs().total_cmp(&(b.0 - 1.0).abs()))
                .map(|e| e.1)
                .unwrap()
        };
        let lo_q = nearest(&from_above);
        let hi_q = nearest(&from_below);
        let tol = CHAIN_TOLERANCE;
        let ordered = lo_q <= dim.lower_dim_est + tol
            && dim.lower_dim_est <= dim.upper_dim_est + tol
            && dim.upper_dim_est <= hi_q + tol;
        entries.push(ChainEntry {
            x,
            from_above,
            from_below,
            lower_dim_est: dim.lower_dim_est,
            upper_dim_est: dim.upper_dim_est,
            ordered,
        });
    }
    let fraction_ordered = if entries.is_empty() {
        1.0
    } else {
        entries.iter().filter(|e| e.ordered).count() as f64 / entries.len() as f64
    };
    Ok(ChainReport {
        t,
        tolerance: CHAIN_TOLERANCE,
        k_window: window,
        entries,
        fraction_ordered,
    })
}

/// `x,q,k,log_sum` rows.
pub fn write_spectrum_csv<W: Write>(out: W, estimates: &[SpectrumEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "q", "k", "log_sum"])?;
    for e in estimates {
        for (k, s) in (e.k_window.0..=e.k_window.1).zip(&e.log_sums) {
            w.write_record([e.x.to_string(), e.q.to_string(), k.to_string(), s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `x,log_t,log_mass` rows.
pub fn write_dimension_csv<W: Write>(out: W, estimates: &[DimensionEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "log_t", "log_mass"])?;
    for e in estimates {
        for (t, m) in e.t_grid.iter().zip(&e.log_ball_masses) {
            w.write_record([e.x.to_string(), t.ln().to_string(), m.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
