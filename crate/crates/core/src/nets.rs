//! Nested maximal separated nets and the nearest-center parent relation.
//!
//! Level `k` holds an `r^k`-separated set of points. The finest level is the
//! whole space (ordered `x_0` first, then ascending index) and each coarser
//! level is the greedy maximal `r^k`-separated subsequence of the level below
//! it, so levels are nested and `x_0` is present everywhere.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;

/// `r^k`, evaluated as `(1/r)^|k|` for negative `k`.
///
/// Every threshold comparison in the crate goes through this function so that
/// nets, verifiers and estimators agree bit for bit.
pub fn radius(r: f64, k: i32) -> f64 {
    if k >= 0 {
        r.powi(k)
    } else {
        (1.0 / r).powi(-k)
    }
}

/// Inner-ball constant `1/2 - r/(1-r)`.
pub fn inner_constant(r: f64) -> f64 {
    0.5 - r / (1.0 - r)
}

/// Outer-ball constant `1/(1-r)`.
pub fn outer_constant(r: f64) -> f64 {
    1.0 / (1.0 - r)
}

/// Per-scale nets `{x_{k,i} : i ∈ N_k}` for `k_min <= k <= k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetHierarchyJson", try_from = "NetHierarchyJson")]
pub struct NetHierarchy {
    r: f64,
    k_min: i32,
    k_max: i32,
    base_point: usize,
    /// `levels[k - k_min]`; positions are the indices `i ∈ N_k`.
    levels: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct NetHierarchyJson {
    r: f64,
    k_min: i32,
    k_max: i32,
    base_point: usize,
    levels: BTreeMap<i32, Vec<usize>>,
}

impl From<NetHierarchy> for NetHierarchyJson {
    fn from(h: NetHierarchy) -> Self {
        let levels = h
            .levels
            .into_iter()
            .enumerate()
            .map(|(idx, pts)| (h.k_min + idx as i32, pts))
            .collect();
        NetHierarchyJson {
            r: h.r,
            k_min: h.k_min,
            k_max: h.k_max,
            base_point: h.base_point,
            levels,
        }
    }
}

impl TryFrom<NetHierarchyJson> for NetHierarchy {
    type Error = String;

    fn try_from(j: NetHierarchyJson) -> std::result::Result<Self, String> {
        let mut levels = Vec::new();
        for k in j.k_min..=j.k_max {
            levels.push(
                j.levels
                    .get(&k)
                    .cloned()
                    .ok_or_else(|| format!("missing level {k}"))?,
            );
        }
        Ok(NetHierarchy {
            r: j.r,
            k_min: j.k_min,
            k_max: j.k_max,
            base_point: j.base_point,
            levels,
        })
    }
}

impl NetHierarchy {
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    pub fn base_point(&self) -> usize {
        self.base_point
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Net points of level `k` in `N_k` order.
    pub fn level(&self, k: i32) -> Result<&[usize]> {
        self.check_level(k)?;
        Ok(&self.levels[(k - self.k_min) as usize])
    }

    pub fn levels(&self) -> impl Iterator<Item = (i32, &[usize])> {
        self.levels
            .iter()
            .enumerate()
            .map(move |(idx, l)| (self.k_min + idx as i32, l.as_slice()))
    }

    pub fn check_level(&self, k: i32) -> Result<()> {
        if k < self.k_min || k > self.k_max {
            Err(Error::LevelOutOfRange {
                k,
                k_min: self.k_min,
                k_max: self.k_max,
            })
        } else {
            Ok(())
        }
    }
}

/// Build the nets for `0 < r < 1/3`.
pub fn build_nets(space: &FiniteMetricSpace, r: f64) -> Result<NetHierarchy> {
    if !(r > 0.0 && r < 1.0 / 3.0) {
        return Err(Error::RatioOutOfRange(r));
    }
    build_nets_unrestricted(space, r)
}

/// Same construction for any `0 < r < 1`.
///
/// For `r >= 1/3` the inner-ball constant `1/2 - r/(1-r)` is not positive, so
/// only the outer-ball containment and the combinatorial properties remain
/// guaranteed. Useful on ultrametrics whose natural ratio is large.
pub fn build_nets_unrestricted(space: &FiniteMetricSpace, r: f64) -> Result<NetHierarchy> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("scale ratio {r} must lie in (0, 1)")));
    }
    let n = space.len();
    if n == 0 {
        return Err(Error::EmptySpace);
    }
    let x0 = space.base_point();
    if n == 1 {
        return Ok(NetHierarchy {
            r,
            k_min: 0,
            k_max: 0,
            base_point: x0,
            levels: vec![vec![x0]],
        });
    }
    let gap = space.min_gap();
    if !(gap > 0.0) {
        return Err(Error::MalformedDistances(
            "distinct points at distance zero".into(),
        ));
    }
    let k_max = finest_level(r, gap);
    let k_min = coarsest_level(r, space.diameter());
    debug_assert!(k_min < k_max);

    let mut finest = Vec::with_capacity(n);
    finest.push(x0);
    finest.extend((0..n).filter(|&i| i != x0));

    let count = (k_max - k_min + 1) as usize;
    let mut levels = vec![Vec::new(); count];
    levels[count - 1] = finest;
    for idx in (0..count - 1).rev() {
        let sep = radius(r, k_min + idx as i32);
        let kept = greedy_separated(space, &levels[idx + 1], sep);
        levels[idx] = kept;
    }
    Ok(NetHierarchy {
        r,
        k_min,
        k_max,
        base_point: x0,
        levels,
    })
}

/// Least `k` with `r^k <= gap`.
fn finest_level(r: f64, gap: f64) -> i32 {
    let mut k = (gap.ln() / r.ln()).floor() as i32;
    while radius(r, k) > gap {
        k += 1;
    }
    while radius(r, k - 1) <= gap {
        k -= 1;
    }
    k
}

/// Greatest `k` with `r^k > diameter`.
fn coarsest_level(r: f64, diameter: f64) -> i32 {
    let mut k = (diameter.ln() / r.ln()).ceil() as i32;
    while radius(r, k) <= diameter {
        k -= 1;
    }
    while radius(r, k + 1) > diameter {
        k += 1;
    }
    k
}

/// Scan `candidates` in order, keeping a point iff it is at distance `>= sep`
/// from every point kept so far.
pub fn greedy_separated(space: &FiniteMetricSpace, candidates: &[usize], sep: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &c in candidates {
        if kept.iter().all(|&q| space.dist(c, q) >= sep) {
            kept.push(c);
        }
    }
    kept
}

/// Parent positions and central children between consecutive levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentMap {
    /// `parent[k - k_min][i]` is the position in level `k - 1` of the parent
    /// of `(k, i)`. Empty for the coarsest level.
    pub parent: Vec<Vec<usize>>,
    /// `central_child[k - k_min][j]` is the position in level `k + 1` of the
    /// point `x_{k,j}`. Empty for the finest level.
    pub central_child: Vec<Vec<usize>>,
}

/// Attach each `(k+1, i)` to the nearest level-`k` center, ties to the least
/// position in `N_k`.
pub fn assign_parents(space: &FiniteMetricSpace, nets: &NetHierarchy) -> ParentMap {
    let count = nets.levels.len();
    let mut parent = vec![Vec::new(); count];
    let mut central_child = vec![Vec::new(); count];
    let mut position = vec![usize::MAX; space.len()];
    for idx in 1..count {
        let coarse = &nets.levels[idx - 1];
        let fine = &nets.levels[idx];
        parent[idx] = fine
            .par_iter()
            .map(|&p| nearest_position(space, p, coarse))
            .collect();
        for (pos, &p) in fine.iter().enumerate() {
            position[p] = pos;
        }
        central_child[idx - 1] = coarse.iter().map(|&c| position[c]).collect();
    }
    ParentMap {
        parent,
        central_child,
    }
}

fn nearest_position(space: &FiniteMetricSpace, p: usize, centers: &[usize]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (pos, &c) in centers.iter().enumerate() {
        let d = space.dist(p, c);
        if d < best_d {
            best_d = d;
            best = pos;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Norm;

    fn line(points: &[f64]) -> FiniteMetricSpace {
        let pts: Vec<Vec<f64>> = points.iter().map(|&x| vec![x]).collect();
        FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean).unwrap()
    }

    fn grid8() -> FiniteMetricSpace {
        line(&(0..8).map(f64::from).collect::<Vec<_>>())
    }

    #[test]
    fn constants() {
        assert!((inner_constant(1.0 / 7.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((outer_constant(1.0 / 7.0) - 7.0 / 6.0).abs() < 1e-15);
        assert!((inner_constant(0.25) - 1.0 / 6.0).abs() < 1e-15);
        assert!((outer_constant(0.25) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn radius_negative_levels() {
        let r = 1.0 / 7.0;
        assert_eq!(radius(r, 0), 1.0);
        assert_eq!(radius(r, -1), 7.0);
        assert_eq!(radius(r, -2), 49.0);
        assert_eq!(radius(0.25, 2), 0.0625);
    }

    #[test]
    fn grid8_levels() {
        let nets = build_nets(&grid8(), 1.0 / 7.0).unwrap();
        assert_eq!(nets.k_max(), 0);
        assert_eq!(nets.k_min(), -2);
        assert_eq!(nets.level(0).unwrap(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(nets.level(-1).unwrap(), &[0, 7]);
        assert_eq!(nets.level(-2).unwrap(), &[0]);
        assert!(nets.level(1).is_err());
    }

    #[test]
    fn grid8_parents() {
        let s = grid8();
        let nets = build_nets(&s, 1.0 / 7.0).unwrap();
        let pm = assign_parents(&s, &nets);
        // level 0 (index 2) -> level -1 positions: 0 -> point 0, 1 -> point 7
        assert_eq!(pm.parent[2], vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(pm.parent[1], vec![0, 0]);
        assert!(pm.parent[0].is_empty());
        assert_eq!(pm.central_child[1], vec![0, 7]);
        assert_eq!(pm.central_child[0], vec![0]);
    }

    #[test]
    fn equidistant_tie_goes_to_least_position() {
        let s = line(&[0.0, 1.0, 2.0]);
        let nets = NetHierarchy {
            r: 0.5,
            k_min: 0,
            k_max: 1,
            base_point: 0,
            levels: vec![vec![0, 2], vec![0, 1, 2]],
        };
        let pm = assign_parents(&s, &nets);
        assert_eq!(pm.parent[1], vec![0, 0, 1]);
    }

    #[test]
    fn single_point() {
        let nets = build_nets(&line(&[3.0]), 0.2).unwrap();
        assert_eq!(nets.k_min(), nets.k_max());
        assert_eq!(nets.level(0).unwrap(), &[0]);
    }

    #[test]
    fn ratio_checked() {
        assert_eq!(
            build_nets(&grid8(), 0.4).unwrap_err(),
            Error::RatioOutOfRange(0.4)
        );
        assert!(build_nets(&grid8(), 1.0 / 3.0).is_err());
        assert!(build_nets(&grid8(), 0.0).is_err());
        assert!(build_nets_unrestricted(&grid8(), 0.5).is_ok());
        assert!(build_nets_unrestricted(&grid8(), 1.0).is_err());
    }

    #[test]
    fn base_point_leads_every_level() {
        let s = line(&[0.0, 1.0, 2.0, 5.0, 9.0]).with_base_point(3).unwrap();
        let nets = build_nets(&s, 0.2).unwrap();
        for (_, level) in nets.levels() {
            assert_eq!(level[0], 3);
        }
        assert_eq!(nets.level(nets.k_min()).unwrap(), &[3]);
    }

    #[test]
    fn json_round_trip() {
        let nets = build_nets(&grid8(), 1.0 / 7.0).unwrap();
        let text = serde_json::to_string(&nets).unwrap();
        assert!(text.contains(r#""levels":{"-2":[0],"-1":[0,7],"0":[0,1,2,3,4,5,6,7]}"#));
        let back: NetHierarchy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, nets);
    }
}
