//! Doubling measures on a cube tree by recursive mass splitting.
//!
//! The coarsest cube carries mass 1. In the standard split a node with
//! `M + 1` children hands `p` times its mass to every non-central child and
//! the remaining `1 - M p` share to the central child (the child sharing its
//! center). Point masses are the masses of the leaves.

use serde::{Deserialize, Serialize};

use crate::cubes::{CubeTree, NodeId};
use crate::error::{Error, Result};
use crate::report::{PropertyCheck, VerificationReport};

/// Relative tolerance for conservation checks.
pub const CONSERVATION_TOL: f64 = 1e-12;

/// `M_{k,i}`: number of children minus one, per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildCounts {
    /// Indexed by `k - k_min`, then by position.
    pub per_level: Vec<Vec<usize>>,
    pub m_max: usize,
}

impl ChildCounts {
    pub fn get(&self, k_min: i32, id: NodeId) -> usize {
        self.per_level[(id.0 - k_min) as usize][id.1]
    }
}

pub fn child_counts(tree: &CubeTree) -> ChildCounts {
    let per_level: Vec<Vec<usize>> = (tree.k_min()..=tree.k_max())
        .map(|k| {
            tree.level(k)
                .iter()
                .map(|n| n.children.len().saturating_sub(1))
                .collect()
        })
        .collect();
    let m_max = per_level.iter().flatten().copied().max().unwrap_or(0);
    ChildCounts { per_level, m_max }
}

/// Which builder produced an assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum MeasureKind {
    Doubling,
    AlphaHomogeneous { beta: f64 },
    SelfSimilar { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureAssignment {
    kind: MeasureKind,
    p: f64,
    m_max: usize,
    r: f64,
    k_min: i32,
    node_mass: Vec<Vec<f64>>,
    log_mass: Vec<Vec<f64>>,
    point_mass: Vec<f64>,
    warnings: Vec<String>,
}

impl MeasureAssignment {
    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn mass(&self, id: NodeId) -> f64 {
        self.node_mass[(id.0 - self.k_min) as usize][id.1]
    }

    pub fn log_mass(&self, id: NodeId) -> f64 {
        self.log_mass[(id.0 - self.k_min) as usize][id.1]
    }

    /// Masses of level `k`, by position.
    pub fn level_masses(&self, k: i32) -> &[f64] {
        &self.node_mass[(k - self.k_min) as usize]
    }

    pub fn point_mass(&self, point: usize) -> f64 {
        self.point_mass[point]
    }

    pub fn point_masses(&self) -> &[f64] {
        &self.point_mass
    }

    /// Mass of an arbitrary point set: the sum of its point masses.
    pub fn mass_of(&self, points: impl IntoIterator<Item = usize>) -> f64 {
        points.into_iter().map(|p| self.point_mass[p]).sum()
    }

    /// Fault unless this assignment was built on a tree of the same shape.
    pub fn check_tree(&self, tree: &CubeTree) -> Result<()> {
        let same = tree.k_min() == self.k_min
            && tree.num_levels() == self.node_mass.len()
            && tree.num_points() == self.point_mass.len()
            && (tree.k_min()..=tree.k_max())
                .zip(&self.node_mass)
                .all(|(k, m)| tree.level(k).len() == m.len());
        if same {
            Ok(())
        } else {
            Err(Error::Mismatch("level sizes differ".into()))
        }
    }

    pub fn to_json(&self) -> MeasureJson {
        let nodes = self
            .node_mass
            .iter()
            .enumerate()
            .flat_map(|(idx, level)| {
                let k = self.k_min + idx as i32;
                level
                    .iter()
                    .enumerate()
                    .map(move |(i, &mass)| NodeMassJson { k, i, mass })
            })
            .collect();
        MeasureJson {
            kind: self.kind.clone(),
            p: self.p,
            m_max: self.m_max,
            r: self.r,
            warnings: self.warnings.clone(),
            nodes,
            points: self.point_mass.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMassJson {
    pub k: i32,
    pub i: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureJson {
    #[serde(flatten)]
    pub kind: MeasureKind,
    pub p: f64,
    pub m_max: usize,
    pub r: f64,
    pub warnings: Vec<String>,
    pub nodes: Vec<NodeMassJson>,
    pub points: Vec<f64>,
}

fn admissible_bound(m_max: usize) -> f64 {
    1.0 / (m_max as f64 + 1.0)
}

fn ratio_warning(tree: &CubeTree) -> Vec<String> {
    if tree.r() <= 1.0 / 7.0 {
        Vec::new()
    } else {
        vec![format!(
            "r = {} exceeds 1/7: the p^-4 cube comparability bound is not guaranteed",
            tree.r()
        )]
    }
}

/// Standard split: `p` to every non-central child, `1 - M p` to the central one.
pub fn build_doubling_measure(tree: &CubeTree, p: f64) -> Result<MeasureAssignment> {
    let counts = child_counts(tree);
    let bound = admissible_bound(counts.m_max);
    if !(p > 0.0 && p <= bound) {
        return Err(Error::MassParameterOutOfRange { p, bound });
    }
    Ok(split_standard(tree, &counts, p, MeasureKind::Doubling, ratio_warning(tree)))
}

fn split_standard(
    tree: &CubeTree,
    counts: &ChildCounts,
    p: f64,
    kind: MeasureKind,
    warnings: Vec<String>,
) -> MeasureAssignment {
    let count = tree.num_levels();
    let k_min = tree.k_min();
    let mut node_mass: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut log_mass: Vec<Vec<f64>> = Vec::with_capacity(count);
    node_mass.push(vec![1.0]);
    log_mass.push(vec![0.0]);
    let ln_p = p.ln();
    for idx in 1..count {
        let k = k_min + idx as i32;
        let level = tree.level(k);
        let mut masses = Vec::with_capacity(level.len());
        let mut logs = Vec::with_capacity(level.len());
        for (pos, node) in level.iter().enumerate() {
            let par = node.parent.expect("non-root");
            let parent = &tree.level(k - 1)[par];
            let pm = node_mass[idx - 1][par];
            let pl = log_mass[idx - 1][par];
            if parent.central_child == Some(pos) {
                let share = 1.0 - counts.per_level[idx - 1][par] as f64 * p;
                masses.push(share * pm);
                logs.push(share.ln() + pl);
            } else {
                masses.push(p * pm);
                logs.push(ln_p + pl);
            }
        }
        node_mass.push(masses);
        log_mass.push(logs);
    }
    finish(tree, kind, p, counts.m_max, node_mass, log_mass, warnings)
}

fn finish(
    tree: &CubeTree,
    kind: MeasureKind,
    p: f64,
    m_max: usize,
    node_mass: Vec<Vec<f64>>,
    log_mass: Vec<Vec<f64>>,
    warnings: Vec<String>,
) -> MeasureAssignment {
    let finest = node_mass.len() - 1;
    let mut point_mass = vec![0.0; tree.num_points()];
    for (pos, node) in tree.level(tree.k_max()).iter().enumerate() {
        point_mass[node.center] = node_mass[finest][pos];
    }
    MeasureAssignment {
        kind,
        p,
        m_max,
        r: tree.r(),
        k_min: tree.k_min(),
        node_mass,
        log_mass,
        point_mass,
        warnings,
    }
}

/// Least admissible `beta`, `log(M_max + 1) / log(1/r)`.
pub fn min_alpha_beta(tree: &CubeTree) -> f64 {
    let counts = child_counts(tree);
    (counts.m_max as f64 + 1.0).ln() / (1.0 / tree.r()).ln()
}

/// Standard split with `p = r^beta`.
///
/// `beta` at the admissible boundary (to 1e-12 relative) yields exactly
/// `p = 1/(M_max + 1)`.
pub fn build_alpha_homogeneous(tree: &CubeTree, beta: f64) -> Result<MeasureAssignment> {
    let counts = child_counts(tree);
    let min_beta = (counts.m_max as f64 + 1.0).ln() / (1.0 / tree.r()).ln();
    if !beta.is_finite() || beta < min_beta * (1.0 - 1e-12) {
        return Err(Error::BetaTooSmall { beta, min_beta });
    }
    let bound = admissible_bound(counts.m_max);
    let mut p = tree.r().powf(beta);
    if p > bound || rel_err(p, bound) <= 1e-12 {
        p = bound;
    }
    Ok(split_standard(
        tree,
        &counts,
        p,
        MeasureKind::AlphaHomogeneous { beta },
        ratio_warning(tree),
    ))
}

/// Two-level split with prescribed weights on selected central grandchildren.
///
/// From every node `Q` at even depth below the root, the `n = weights.len()`
/// lowest-position children `j_1..j_n` are selected. Each grandchild whose
/// center is not a selected child's center receives `p · μ(Q)`; the remainder
/// is shared among the central grandchildren of `j_1..j_n` by weight. When the
/// children of `Q` are leaves, each leaf stands in for its own central
/// grandchild.
pub fn build_self_similar(tree: &CubeTree, p: f64, weights: &[f64]) -> Result<MeasureAssignment> {
    if weights.is_empty() {
        return Err(Error::SelfSimilar("weights must be non-empty".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::SelfSimilar("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 * weights.len() as f64 {
        return Err(Error::SelfSimilar(format!("weights sum to {total}, not 1")));
    }
    let counts = child_counts(tree);
    let bound = if counts.m_max == 0 {
        1.0
    } else {
        1.0 / (counts.m_max as f64).powi(2)
    };
    if !(p > 0.0 && p < bound) {
        return Err(Error::MassParameterOutOfRange { p, bound });
    }

    let count = tree.num_levels();
    let k_min = tree.k_min();
    let mut node_mass: Vec<Vec<f64>> = (tree.k_min()..=tree.k_max())
        .map(|k| vec![0.0; tree.level(k).len()])
        .collect();
    node_mass[0][0] = 1.0;
    let n_sel = weights.len();

    for idx in (0..count.saturating_sub(1)).step_by(2) {
        let k = k_min + idx as i32;
        for pos in 0..tree.level(k).len() {
            let node = &tree.level(k)[pos];
            let m = node_mass[idx][pos];
            let children = &node.children;
            if children.len() < n_sel {
                return Err(Error::SelfSimilar(format!(
                    "node ({k}, {pos}) has {} children, fewer than {n_sel}",
                    children.len()
                )));
            }
            let chosen = &children[..n_sel];
            if idx + 1 == count - 1 {
                let others = children.len() - n_sel;
                let rest = m * (1.0 - p * others as f64);
                if !(rest > 0.0) {
                    return Err(remainder_fault(k, pos, rest));
                }
                for (slot, &c) in children.iter().enumerate() {
                    node_mass[idx + 1][c] = if slot < n_sel { weights[slot] * rest } else { p * m };
                }
                continue;
            }
            let chosen_centers: Vec<usize> =
                chosen.iter().map(|&c| tree.level(k + 1)[c].center).collect();
            let mut others = 0usize;
            for &c in children {
                for &g in &tree.level(k + 1)[c].children {
                    if !chosen_centers.contains(&tree.level(k + 2)[g].center) {
                        others += 1;
                    }
                }
            }
            let rest = m * (1.0 - p * others as f64);
            if !(rest > 0.0) {
                return Err(remainder_fault(k, pos, rest));
            }
            for &c in children {
                let mut child_total = 0.0;
                for &g in &tree.level(k + 1)[c].children {
                    let center = tree.level(k + 2)[g].center;
                    let mass = match chosen_centers.iter().position(|&x| x == center) {
                        Some(slot) => weights[slot] * rest,
                        None => p * m,
                    };
                    node_mass[idx + 2][g] = mass;
                    child_total += mass;
                }
                node_mass[idx + 1][c] = child_total;
            }
        }
    }
    let log_mass = node_mass
        .iter()
        .map(|l| l.iter().map(|m| m.ln()).collect())
        .collect();
    Ok(finish(
        tree,
        MeasureKind::SelfSimilar {
            weights: weights.to_vec(),
        },
        p,
        counts.m_max,
        node_mass,
        log_mass,
        ratio_warning(tree),
    ))
}

fn remainder_fault(k: i32, pos: usize, rest: f64) -> Error {
    Error::SelfSimilar(format!(
        "remainder {rest} at node ({k}, {pos}) is not positive; p is too large for this tree"
    ))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Root normalization, positivity, conservation at every node, point masses
/// summing to one, and node mass equal to the mass of the points below.
pub fn check_measure(tree: &CubeTree, measure: &MeasureAssignment) -> Result<VerificationReport> {
    measure.check_tree(tree)?;
    let mut root = PropertyCheck::new("root_mass");
    let root_mass = measure.mass(tree.root());
    root.record(root_mass == 1.0, Some(-(root_mass - 1.0).abs()), || {
        format!("root mass {root_mass}")
    });

    let mut positivity = PropertyCheck::new("positivity");
    let mut conservation = PropertyCheck::new("conservation");
    let mut leaf_sums = PropertyCheck::new("node_equals_point_sum");
    for id in tree.node_ids() {
        let m = measure.mass(id);
        positivity.record(m > 0.0, None, || format!("node {id:?} has mass {m}"));
        if tree.node(id).children.is_empty() {
            continue;
        }
        let sum: f64 = tree.children(id).map(|c| measure.mass(c)).sum();
        let e = rel_err(sum, m);
        conservation.record(e <= CONSERVATION_TOL, Some(CONSERVATION_TOL - e), || {
            format!("children of {id:?} sum to {sum}, parent {m}")
        });
        let pts = measure.mass_of(tree.members(id).iter().copied());
        let e = rel_err(pts, m);
        leaf_sums.record(e <= CONSERVATION_TOL, Some(CONSERVATION_TOL - e), || {
            format!("points of {id:?} sum to {pts}, node {m}")
        });
    }
    let mut total = PropertyCheck::new("point_total");
    let s: f64 = measure.point_masses().iter().sum();
    let e = rel_err(s, 1.0);
    total.record(e <= CONSERVATION_TOL, Some(CONSERVATION_TOL - e), || {
        format!("point masses sum to {s}")
    });
    Ok(VerificationReport::new(
        "measure",
        vec![root, positivity, conservation, leaf_sums, total],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubes::build_cubes;
    use crate::metric::{FiniteMetricSpace, Norm};
    use crate::nets::{assign_parents, build_nets, build_nets_unrestricted};

    fn tree_for(space: &FiniteMetricSpace, r: f64) -> CubeTree {
        let nets = build_nets_unrestricted(space, r).unwrap();
        build_cubes(&nets, &assign_parents(space, &nets))
    }

    fn grid(n: usize) -> FiniteMetricSpace {
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean).unwrap()
    }

    fn binary(depth: u32) -> FiniteMetricSpace {
        FiniteMetricSpace::tree_ultrametric(2, depth, 0.5).unwrap()
    }

    #[test]
    fn grid8_child_counts() {
        let s = grid(8);
        let nets = build_nets(&s, 1.0 / 7.0).unwrap();
        let t = build_cubes(&nets, &assign_parents(&s, &nets));
        let c = child_counts(&t);
        assert_eq!(c.get(t.k_min(), t.root()), 1);
        assert_eq!(c.per_level[1], vec![3, 3]);
        assert!(c.per_level[2].iter().all(|&m| m == 0));
        assert_eq!(c.m_max, 3);
    }

    #[test]
    fn single_point_mass_one() {
        let t = tree_for(&grid(1), 0.2);
        let m = build_doubling_measure(&t, 1.0).unwrap();
        assert_eq!(m.point_mass(0), 1.0);
        assert!(t.node_ids().all(|id| m.mass(id) == 1.0));
    }

    #[test]
    fn three_children_split() {
        // 0 and 10 far apart, 0 with two near points: level with three children
        let pts = vec![vec![0.0], vec![0.9], vec![-0.9]];
        let s = FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean).unwrap();
        let t = tree_for(&s, 0.2);
        let root = t.root();
        let parent = t
            .node_ids()
            .find(|&id| t.node(id).children.len() == 3)
            .expect("a node with three children");
        let m = build_doubling_measure(&t, 0.1).unwrap();
        assert_eq!(m.mass(root), 1.0);
        let pm = m.mass(parent);
        for c in t.children(parent) {
            let expect = if Some(c) == t.central_child(parent) { 0.8 } else { 0.1 };
            assert!((m.mass(c) - expect * pm).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_binary_split() {
        let s = binary(5);
        let t = tree_for(&s, 0.5);
        assert_eq!(child_counts(&t).m_max, 1);
        let m = build_doubling_measure(&t, 0.5).unwrap();
        for p in 0..s.len() {
            assert_eq!(m.point_mass(p), 1.0 / 32.0);
        }
        assert!(check_measure(&t, &m).unwrap().passed);
        assert_eq!(m.warnings().len(), 1);
    }

    #[test]
    fn p_out_of_range() {
        let s = grid(8);
        let t = tree_for(&s, 1.0 / 7.0);
        match build_doubling_measure(&t, 0.3) {
            Err(Error::MassParameterOutOfRange { bound, .. }) => assert_eq!(bound, 0.25),
            other => panic!("{other:?}"),
        }
        assert!(build_doubling_measure(&t, 0.0).is_err());
        assert!(build_doubling_measure(&t, 0.25).is_ok());
    }

    #[test]
    fn alpha_boundary() {
        let s = grid(8);
        let t = tree_for(&s, 1.0 / 7.0);
        let beta = 4f64.ln() / 7f64.ln();
        assert!((min_alpha_beta(&t) - beta).abs() < 1e-12);
        let m = build_alpha_homogeneous(&t, beta).unwrap();
        assert_eq!(m.p(), 0.25);
        assert!(matches!(
            build_alpha_homogeneous(&t, 0.5),
            Err(Error::BetaTooSmall { .. })
        ));
        let b = binary(4);
        let tb = tree_for(&b, 0.5);
        let m = build_alpha_homogeneous(&tb, 1.0).unwrap();
        assert_eq!(m.p(), 0.5);
        assert!(m.point_masses().iter().all(|&x| x == 1.0 / 16.0));
    }

    #[test]
    fn self_similar_two_level_rule() {
        let s = binary(4);
        let t = tree_for(&s, 0.5);
        let m = build_self_similar(&t, 0.1, &[0.5, 0.5]).unwrap();
        let root = t.root();
        let kids: Vec<_> = t.children(root).collect();
        let mut grand = Vec::new();
        for &c in &kids {
            for g in t.children(c) {
                let central = Some(g) == t.central_child(c);
                grand.push((central, m.mass(g)));
            }
        }
        assert_eq!(grand.len(), 4);
        for (central, mass) in grand {
            let expect = if central { 0.4 } else { 0.1 };
            assert!((mass - expect).abs() < 1e-15, "{central} {mass}");
        }
        assert!(check_measure(&t, &m).unwrap().passed);
    }

    #[test]
    fn self_similar_single_weight() {
        let s = binary(4);
        let t = tree_for(&s, 0.5);
        let m = build_self_similar(&t, 0.1, &[1.0]).unwrap();
        let root = t.root();
        let first = t.children(root).next().unwrap();
        let central_g = t.central_child(first).unwrap();
        // three of four grandchildren are non-central relative to the single selected child
        assert!((m.mass(central_g) - 0.7).abs() < 1e-15);
        assert!(check_measure(&t, &m).unwrap().passed);
    }

    #[test]
    fn self_similar_faults() {
        let s = binary(4);
        let t = tree_for(&s, 0.5);
        assert!(build_self_similar(&t, 0.1, &[0.3, 0.3, 0.4]).is_err());
        assert!(build_self_similar(&t, 0.1, &[0.6, 0.6]).is_err());
        assert!(build_self_similar(&t, 1.0, &[0.5, 0.5]).is_err());
        assert!(build_self_similar(&t, 0.1, &[]).is_err());
    }

    #[test]
    fn mismatch_detected() {
        let a = tree_for(&grid(8), 1.0 / 7.0);
        let b = tree_for(&grid(9), 1.0 / 7.0);
        let m = build_doubling_measure(&a, 0.1).unwrap();
        assert!(matches!(check_measure(&b, &m), Err(Error::Mismatch(_))));
    }

    #[test]
    fn log_masses_track_masses() {
        let t = tree_for(&grid(300), 1.0 / 7.0);
        let m = build_doubling_measure(&t, 0.01).unwrap();
        for id in t.node_ids() {
            assert!((m.log_mass(id) - m.mass(id).ln()).abs() < 1e-9);
        }
    }
}
