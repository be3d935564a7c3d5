//! Generalized dyadic cubes `Q_{k,i}` built from a net hierarchy.
//!
//! On a finite space the closures in the set definitions are identities and
//! the unique-parent rule already sends every point down exactly one chain, so
//! a cube is simply the set of points whose level-`k` ancestor is `(k, i)`.
//! Nodes are stored per level; cube membership is a contiguous slice of a
//! depth-first leaf ordering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;
use crate::nets::{inner_constant, outer_constant, radius, NetHierarchy, ParentMap};
use crate::report::{PropertyCheck, VerificationReport};

/// `(k, i)`: level and position within `N_k`. Serialized as `[k, i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub i32, pub usize);

impl NodeId {
    pub fn k(self) -> i32 {
        self.0
    }

    pub fn i(self) -> usize {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeNode {
    pub center: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub central_child: Option<usize>,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeTree {
    r: f64,
    k_min: i32,
    k_max: i32,
    base_point: usize,
    levels: Vec<Vec<CubeNode>>,
    /// Points in depth-first leaf order.
    order: Vec<usize>,
    /// Position of each point's leaf within the finest level.
    leaf_of: Vec<usize>,
}

pub fn build_cubes(nets: &NetHierarchy, parents: &ParentMap) -> CubeTree {
    let k_min = nets.k_min();
    let count = nets.num_levels();
    let mut levels: Vec<Vec<CubeNode>> = nets
        .levels()
        .enumerate()
        .map(|(idx, (_, pts))| {
            pts.iter()
                .enumerate()
                .map(|(pos, &c)| CubeNode {
                    center: c,
                    parent: if idx == 0 { None } else { Some(parents.parent[idx][pos]) },
                    children: Vec::new(),
                    central_child: parents.central_child[idx].get(pos).copied(),
                    start: 0,
                    end: 0,
                })
                .collect()
        })
        .collect();
    for idx in 1..count {
        for pos in 0..levels[idx].len() {
            let p = levels[idx][pos].parent.expect("non-root node has a parent");
            levels[idx - 1][p].children.push(pos);
        }
    }

    // level-by-level depth-first ordering
    let mut frontier: Vec<usize> = (0..levels[0].len()).collect();
    for idx in 1..count {
        let mut next = Vec::with_capacity(levels[idx].len());
        for &pos in &frontier {
            next.extend_from_slice(&levels[idx - 1][pos].children);
        }
        frontier = next;
    }
    let finest = count - 1;
    let n = levels[finest].len();
    let mut order = Vec::with_capacity(n);
    let mut leaf_of = vec![0; n];
    for (slot, &pos) in frontier.iter().enumerate() {
        let node = &mut levels[finest][pos];
        node.start = slot;
        node.end = slot + 1;
        order.push(node.center);
        leaf_of[node.center] = pos;
    }
    for idx in (0..finest).rev() {
        let (upper, lower) = levels.split_at_mut(idx + 1);
        for node in upper[idx].iter_mut() {
            node.start = node
                .children
                .iter()
                .map(|&c| lower[0][c].start)
                .min()
                .expect("every node has its central child");
            node.end = node.children.iter().map(|&c| lower[0][c].end).max().unwrap();
        }
    }

    CubeTree {
        r: nets.r(),
        k_min,
        k_max: nets.k_max(),
        base_point: nets.base_point(),
        levels,
        order,
        leaf_of,
    }
}

impl CubeTree {
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

    /// Number of points of the underlying space.
    pub fn num_points(&self) -> usize {
        self.order.len()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn root(&self) -> NodeId {
        NodeId(self.k_min, 0)
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

    /// Nodes of level `k` in `N_k` order. Panics outside `[k_min, k_max]`.
    pub fn level(&self, k: i32) -> &[CubeNode] {
        &self.levels[(k - self.k_min) as usize]
    }

    pub fn node(&self, id: NodeId) -> &CubeNode {
        &self.level(id.0)[id.1]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.node(id).parent.map(|p| NodeId(id.0 - 1, p))
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.node(id).children.iter().map(move |&c| NodeId(id.0 + 1, c))
    }

    pub fn central_child(&self, id: NodeId) -> Option<NodeId> {
        self.node(id).central_child.map(|c| NodeId(id.0 + 1, c))
    }

    /// Points of the cube, in depth-first leaf order.
    pub fn members(&self, id: NodeId) -> &[usize] {
        let node = self.node(id);
        &self.order[node.start..node.end]
    }

    pub fn size(&self, id: NodeId) -> usize {
        let node = self.node(id);
        node.end - node.start
    }

    /// All node ids, level by level.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.levels.iter().enumerate().flat_map(move |(idx, l)| {
            (0..l.len()).map(move |i| NodeId(self.k_min + idx as i32, i))
        })
    }

    /// Leaf node (level `k_max`) of a point.
    pub fn leaf(&self, point: usize) -> Result<NodeId> {
        match self.leaf_of.get(point) {
            Some(&pos) => Ok(NodeId(self.k_max, pos)),
            None => Err(Error::IndexOutOfRange {
                index: point,
                n: self.leaf_of.len(),
            }),
        }
    }

    /// For every point, the position of its level-`k` cube.
    pub fn level_assignment(&self, k: i32) -> Vec<usize> {
        let mut assign = vec![usize::MAX; self.num_points()];
        for (pos, _) in self.level(k).iter().enumerate() {
            for &p in self.members(NodeId(k, pos)) {
                assign[p] = pos;
            }
        }
        assign
    }

    /// Assignments for every level, indexed by `k - k_min`.
    pub fn all_assignments(&self) -> Vec<Vec<usize>> {
        (self.k_min..=self.k_max)
            .map(|k| self.level_assignment(k))
            .collect()
    }

    pub fn to_json(&self, emit_members: bool) -> TreeJson {
        let nodes = self
            .node_ids()
            .map(|id| {
                let node = self.node(id);
                NodeJson {
                    k: id.0,
                    i: id.1,
                    center: node.center,
                    parent: self.parent(id),
                    children: self.children(id).collect(),
                    members: emit_members.then(|| {
                        let mut m = self.members(id).to_vec();
                        m.sort_unstable();
                        m
                    }),
                }
            })
            .collect();
        TreeJson {
            r: self.r,
            k_min: self.k_min,
            k_max: self.k_max,
            base_point: self.base_point,
            nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub k: i32,
    pub i: usize,
    pub center: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub r: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub base_point: usize,
    pub nodes: Vec<NodeJson>,
}

/// The unique level-`k` cube containing `point`, found by walking up from the leaf.
pub fn cube_at(tree: &CubeTree, point: usize, k: i32) -> Result<NodeId> {
    tree.check_level(k)?;
    let mut id = tree.leaf(point)?;
    while id.0 > k {
        id = tree.parent(id).expect("levels above k_min have parents");
    }
    Ok(id)
}

/// The unique `k` with `r_base^k < r_tilde^n <= r_base^(k-1)`: the base level
/// standing in for level `n` of a coarser ratio `r_tilde`.
pub fn regrade_scales(r_base: f64, r_tilde: f64, n: u32) -> Result<i32> {
    if !(r_base > 0.0 && r_base < 1.0 / 3.0) {
        return Err(Error::RatioOutOfRange(r_base));
    }
    if !(1.0 / 3.0..1.0).contains(&r_tilde) {
        return Err(Error::InvalidParameter(format!(
            "regraded ratio {r_tilde} must lie in [1/3, 1)"
        )));
    }
    let value = r_tilde.powi(n as i32);
    let mut k = (value.ln() / r_base.ln()).ceil() as i32;
    loop {
        if radius(r_base, k) >= value {
            k += 1;
        } else if radius(r_base, k - 1) < value {
            k -= 1;
        } else {
            return Ok(k);
        }
    }
}

/// Check partition, nesting, the ball sandwich, the base-point ball and net
/// nesting on every node. Slack values are divided by `r^k`.
pub fn verify_tree_properties(tree: &CubeTree, space: &FiniteMetricSpace) -> VerificationReport {
    let n = space.len();
    let r = tree.r;
    let c_in = inner_constant(r);
    let c_out = outer_constant(r);

    let mut root = PropertyCheck::new("root");
    root.record(tree.level(tree.k_min).len() == 1, None, || {
        format!("{} nodes at k_min", tree.level(tree.k_min).len())
    });
    root.record(tree.size(tree.root()) == n, None, || "root misses points".into());

    // (i) partition, counted from member slices
    let mut partition = PropertyCheck::new("partition");
    let mut assignments = Vec::with_capacity(tree.num_levels());
    for k in tree.k_min..=tree.k_max {
        let mut hits = vec![0usize; n];
        let mut assign = vec![usize::MAX; n];
        let mut total = 0;
        for pos in 0..tree.level(k).len() {
            let members = tree.members(NodeId(k, pos));
            total += members.len();
            for &p in members {
                hits[p] += 1;
                assign[p] = pos;
            }
        }
        partition.record(total == n, None, || format!("level {k}: sizes sum to {total}, n = {n}"));
        for (p, &h) in hits.iter().enumerate() {
            partition.record(h == 1, None, || format!("level {k}: point {p} in {h} cubes"));
        }
        assignments.push(assign);
    }

    // (ii) nesting: each member of a child lies in the parent, and each cube holds its center
    let mut nesting = PropertyCheck::new("nesting");
    for k in tree.k_min..=tree.k_max {
        let idx = (k - tree.k_min) as usize;
        for (pos, node) in tree.level(k).iter().enumerate() {
            nesting.record(assignments[idx][node.center] == pos, None, || {
                format!("center {} outside its cube ({k}, {pos})", node.center)
            });
            if let Some(par) = node.parent {
                for &p in tree.members(NodeId(k, pos)) {
                    nesting.record(assignments[idx - 1][p] == par, None, || {
                        format!("point {p} of ({k}, {pos}) escapes parent ({}, {par})", k - 1)
                    });
                }
            }
        }
    }

    // (iii) sandwich U(x, c r^k) ⊂ Q ⊂ B(x, C r^k)
    let mut inner = PropertyCheck::new("sandwich_inner");
    let mut outer = PropertyCheck::new("sandwich_outer");
    for k in tree.k_min..=tree.k_max {
        let idx = (k - tree.k_min) as usize;
        let scale = radius(r, k);
        let rin = c_in * scale;
        let rout = c_out * scale;
        let assign = &assignments[idx];
        let (lvl_in, lvl_out) = tree
            .level(k)
            .par_iter()
            .enumerate()
            .map(|(pos, node)| {
                let mut ci = PropertyCheck::new("sandwich_inner");
                let mut co = PropertyCheck::new("sandwich_outer");
                for (y, &owner) in assign.iter().enumerate() {
                    let d = space.dist(node.center, y);
                    let member = owner == pos;
                    if member {
                        co.record(d <= rout, Some((rout - d) / scale), || {
                            format!("({k}, {pos}): member {y} at {d} > C r^k = {rout}")
                        });
                    } else if c_in > 0.0 {
                        ci.record(d >= rin, Some((d - rin) / scale), || {
                            format!("({k}, {pos}): point {y} at {d} < c r^k = {rin} but outside")
                        });
                    }
                }
                (ci, co)
            })
            .reduce(
                || (PropertyCheck::new("sandwich_inner"), PropertyCheck::new("sandwich_outer")),
                |mut a, b| {
                    a.0.merge(b.0);
                    a.1.merge(b.1);
                    a
                },
            );
        inner.merge(lvl_in);
        outer.merge(lvl_out);
    }

    // (iv) x_0 is a center at every level and its cube holds U(x_0, c r^k)
    let mut base = PropertyCheck::new("base_point_ball");
    let x0 = tree.base_point;
    for k in tree.k_min..=tree.k_max {
        let idx = (k - tree.k_min) as usize;
        let pos = assignments[idx][x0];
        base.record(tree.level(k)[pos].center == x0, None, || {
            format!("x_0 is not the center of its level-{k} cube")
        });
        let rin = c_in * radius(r, k);
        for (y, &owner) in assignments[idx].iter().enumerate() {
            if space.dist(x0, y) < rin {
                base.record(owner == pos, None, || {
                    format!("level {k}: point {y} inside U(x_0, c r^k) but outside x_0's cube")
                });
            }
        }
    }

    // (v) level-k centers reappear at level k+1
    let mut net_nesting = PropertyCheck::new("net_nesting");
    for k in tree.k_min..tree.k_max {
        for (pos, node) in tree.level(k).iter().enumerate() {
            let ok = node
                .central_child
                .map(|c| tree.level(k + 1)[c].center == node.center)
                .unwrap_or(false)
                && node.children.contains(&node.central_child.unwrap_or(usize::MAX));
            net_nesting.record(ok, None, || format!("({k}, {pos}) has no central child"));
        }
    }

    VerificationReport::new(
        "cube_tree",
        vec![root, partition, nesting, inner, outer, base, net_nesting],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Norm;
    use crate::nets::{assign_parents, build_nets};

    fn line(points: &[f64]) -> FiniteMetricSpace {
        let pts: Vec<Vec<f64>> = points.iter().map(|&x| vec![x]).collect();
        FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean).unwrap()
    }

    fn tree_of(space: &FiniteMetricSpace, r: f64) -> CubeTree {
        let nets = build_nets(space, r).unwrap();
        let parents = assign_parents(space, &nets);
        build_cubes(&nets, &parents)
    }

    fn sorted(v: &[usize]) -> Vec<usize> {
        let mut v = v.to_vec();
        v.sort_unstable();
        v
    }

    #[test]
    fn grid8_cubes() {
        let s = line(&(0..8).map(f64::from).collect::<Vec<_>>());
        let t = tree_of(&s, 1.0 / 7.0);
        assert_eq!(t.num_levels(), 3);
        assert_eq!(sorted(t.members(NodeId(-2, 0))), (0..8).collect::<Vec<_>>());
        assert_eq!(t.node(NodeId(-1, 0)).center, 0);
        assert_eq!(sorted(t.members(NodeId(-1, 0))), vec![0, 1, 2, 3]);
        assert_eq!(t.node(NodeId(-1, 1)).center, 7);
        assert_eq!(sorted(t.members(NodeId(-1, 1))), vec![4, 5, 6, 7]);
        let c = cube_at(&t, 5, -1).unwrap();
        assert_eq!(t.node(c).center, 7);
        assert!(verify_tree_properties(&t, &s).passed);
    }

    #[test]
    fn cube_at_examples() {
        let s = line(&[0.0, 0.3, 1.1, 2.6, 7.0, 7.2]);
        let t = tree_of(&s, 0.2);
        for k in t.k_min()..=t.k_max() {
            let c = cube_at(&t, s.base_point(), k).unwrap();
            assert_eq!(t.node(c).center, s.base_point());
        }
        for p in 0..s.len() {
            let leaf = cube_at(&t, p, t.k_max()).unwrap();
            assert_eq!(t.members(leaf), &[p]);
        }
        assert!(matches!(
            cube_at(&t, 0, t.k_max() + 1),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(cube_at(&t, 99, t.k_max()).is_err());
    }

    #[test]
    fn single_point_chain() {
        let s = line(&[1.0]);
        let t = tree_of(&s, 0.1);
        assert_eq!(t.num_nodes(), 1);
        assert_eq!(t.members(t.root()), &[0]);
        assert!(verify_tree_properties(&t, &s).passed);
    }

    #[test]
    fn corrupted_tree_is_reported() {
        let s = line(&(0..8).map(f64::from).collect::<Vec<_>>());
        let nets = build_nets(&s, 1.0 / 7.0).unwrap();
        let mut parents = assign_parents(&s, &nets);
        // point 1 lies in U(x_0, c r^-1) but is moved under center 7
        parents.parent[2][1] = 1;
        let t = build_cubes(&nets, &parents);
        let rep = verify_tree_properties(&t, &s);
        assert!(!rep.passed);
        assert!(!rep.check("sandwich_inner").unwrap().passed);
    }

    #[test]
    fn regrade_examples() {
        assert_eq!(regrade_scales(0.25, 0.5, 2).unwrap(), 2);
        assert_eq!(regrade_scales(0.25, 1.0 / 3.0, 1).unwrap(), 1);
        assert_eq!(regrade_scales(0.25, 0.5, 0).unwrap(), 1);
        assert_eq!(regrade_scales(0.25, 0.9, 0).unwrap(), 1);
        assert!(regrade_scales(0.4, 0.5, 1).is_err());
        assert!(regrade_scales(0.25, 0.2, 1).is_err());
    }

    #[test]
    fn regrade_inequality_holds() {
        for &rt in &[1.0 / 3.0, 0.4, 0.5, 0.77, 0.95] {
            for n in 0..40 {
                let k = regrade_scales(0.25, rt, n).unwrap();
                let v = rt.powi(n as i32);
                assert!(radius(0.25, k) < v && v <= radius(0.25, k - 1), "rt={rt} n={n} k={k}");
            }
        }
    }

    #[test]
    fn json_shape() {
        let s = line(&(0..8).map(f64::from).collect::<Vec<_>>());
        let t = tree_of(&s, 1.0 / 7.0);
        let j = serde_json::to_value(t.to_json(false)).unwrap();
        let root = &j["nodes"][0];
        assert_eq!(root["k"], -2);
        assert!(root["parent"].is_null());
        assert_eq!(root["children"], serde_json::json!([[-1, 0], [-1, 1]]));
        assert!(root.get("members").is_none());
        let j = serde_json::to_value(t.to_json(true)).unwrap();
        assert_eq!(j["nodes"][2]["members"], serde_json::json!([4, 5, 6, 7]));
    }
}
