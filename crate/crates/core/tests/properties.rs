use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netcube::doubling::scale_level;
use netcube::metric::{greedy_cover, validate_metric, Violation};
use netcube::nets::{inner_constant, outer_constant, radius};
use netcube::spectrum::{dimension_bound, lq_sum};
use netcube::{
    ball, build_doubling_measure, build_nets, build_tree, generate, regrade_scales,
    verify_tree_properties, BallKind, CubeTree, FiniteMetricSpace, GeneratorKind, GeneratorSpec,
    Norm,
};

fn cloud(n: usize, dim: usize, seed: u64) -> FiniteMetricSpace {
    generate(&GeneratorSpec::new(
        GeneratorKind::EuclideanRandom { n, dim, side: 1.0 },
        seed,
    ))
    .unwrap()
}

fn m_max(tree: &CubeTree) -> usize {
    tree.node_ids()
        .map(|id| tree.children(id).count().saturating_sub(1))
        .max()
        .unwrap_or(0)
}

fn triangle_oracle(d: &[Vec<f64>], tol: f64) -> Vec<(usize, usize, usize)> {
    let n = d.len();
    let mut out = Vec::new();
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                if i < k && j != i && j != k && d[i][k] > d[i][j] + d[j][k] + tol {
                    out.push((i, j, k));
                }
            }
        }
    }
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn balls_grow_with_radius(seed in 0u64..1000, x in 0usize..40, t1 in 0.0f64..1.5, dt in 0.0f64..1.0) {
        let s = cloud(40, 2, seed);
        let t2 = t1 + dt;
        for kind in [BallKind::Closed, BallKind::Open] {
            let small = ball(&s, x, t1, kind).unwrap();
            let large = ball(&s, x, t2, kind).unwrap();
            prop_assert!(small.iter().all(|p| large.contains(p)));
        }
        let open = ball(&s, x, t1, BallKind::Open).unwrap();
        let closed = ball(&s, x, t1, BallKind::Closed).unwrap();
        prop_assert!(open.iter().all(|p| closed.contains(p)));
    }

    #[test]
    fn validator_matches_exhaustive_scan(seed in 0u64..1000, bumps in 0usize..6) {
        let s = cloud(50, 2, seed);
        let mut d = s.to_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..bumps {
            let i = rng.gen_range(0..50);
            let j = rng.gen_range(0..50);
            if i != j {
                let v = d[i][j] * rng.gen_range(1.5..4.0);
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        let expected = triangle_oracle(&d, 0.0);
        let rep = validate_metric(&FiniteMetricSpace::from_matrix(d).unwrap(), 0.0);
        let mut found: Vec<(usize, usize, usize)> = rep
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::Triangle { i, j, k, .. } => Some((*i, *j, *k)),
                _ => None,
            })
            .collect();
        found.sort();
        prop_assert_eq!(found, expected);
        let only_triangles = rep.violations.iter().all(|v| matches!(v, Violation::Triangle { .. }));
        prop_assert!(only_triangles);
    }

    #[test]
    fn nets_are_separated_nested_and_dense(seed in 0u64..1000, n in 2usize..200, ri in 0usize..3) {
        let r = [1.0 / 7.0, 0.2, 0.3][ri];
        let s = cloud(n, 2, seed);
        let nets = build_nets(&s, r).unwrap();
        prop_assert_eq!(nets.level(nets.k_min()).unwrap(), &[0][..]);
        prop_assert_eq!(nets.level(nets.k_max()).unwrap().len(), n);
        for k in nets.k_min()..nets.k_max() {
            let coarse = nets.level(k).unwrap();
            let fine = nets.level(k + 1).unwrap();
            let sep = radius(r, k);
            for (a, &x) in coarse.iter().enumerate() {
                prop_assert!(fine.contains(&x));
                for &y in &coarse[a + 1..] {
                    prop_assert!(s.dist(x, y) >= sep);
                }
            }
            for &y in fine {
                prop_assert!(coarse.iter().any(|&x| s.dist(x, y) < sep));
            }
        }
    }

    #[test]
    fn cube_tree_invariants(seed in 0u64..1000, n in 1usize..300, dim in 1usize..4, ri in 0usize..3) {
        let r = [1.0 / 7.0, 0.2, 0.3][ri];
        let s = cloud(n, dim, seed);
        let tree = build_tree(&s, r).unwrap();
        let rep = verify_tree_properties(&tree, &s);
        prop_assert!(rep.passed, "{:?}", rep.failures().collect::<Vec<_>>());
        let (c, cc) = (inner_constant(r), outer_constant(r));
        for id in tree.node_ids() {
            let center = tree.node(id).center;
            let members = tree.members(id);
            let scale = radius(r, id.k());
            for y in 0..n {
                let d = s.dist(center, y);
                if d < c * scale {
                    prop_assert!(members.contains(&y));
                }
            }
            for &y in members {
                prop_assert!(s.dist(center, y) <= cc * scale);
            }
        }
    }

    #[test]
    fn mass_ratios_are_quantized(seed in 0u64..1000, n in 1usize..300, frac in 0.01f64..1.0) {
        let s = cloud(n, 2, seed);
        let tree = build_tree(&s, 1.0 / 7.0).unwrap();
        let m = m_max(&tree);
        let p = frac / (m as f64 + 1.0);
        let mu = build_doubling_measure(&tree, p).unwrap();
        for id in tree.node_ids() {
            let kids: Vec<_> = tree.children(id).collect();
            let others = kids.len().saturating_sub(1) as f64;
            for c in kids {
                let ratio = mu.mass(c) / mu.mass(id);
                let expect = if Some(c) == tree.central_child(id) { 1.0 - others * p } else { p };
                prop_assert!((ratio - expect).abs() <= 1e-12);
            }
        }
        let total: f64 = mu.point_masses().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), n in 1usize..60, dim in 1usize..4) {
        let a = cloud(n, dim, seed);
        let b = cloud(n, dim, seed);
        prop_assert_eq!(a.to_matrix(), b.to_matrix());
    }

    #[test]
    fn generated_spaces_are_metrics(seed in 0u64..1000, which in 0usize..5, eps in 0.1f64..1.0) {
        let kind = match which {
            0 => GeneratorKind::Grid1d { n: 30, spacing: 1.0 },
            1 => GeneratorKind::Grid2d { nx: 5, ny: 6, spacing: 1.0 },
            2 => GeneratorKind::EuclideanRandom { n: 30, dim: 3, side: 2.0 },
            3 => GeneratorKind::MaryUltrametric { arity: 3, depth: 3, ratio: 0.4 },
            _ => GeneratorKind::Snowflake {
                epsilon: eps,
                base: Box::new(GeneratorKind::EuclideanRandom { n: 30, dim: 2, side: 1.0 }),
            },
        };
        let s = generate(&GeneratorSpec::new(kind, seed)).unwrap();
        let tol = if which == 0 || which == 3 { 0.0 } else { 1e-9 * s.diameter() };
        prop_assert!(validate_metric(&s, tol).is_valid());
    }

    #[test]
    fn ultrametric_strong_triangle(arity in 2usize..4, depth in 1u32..5, ratio in 0.05f64..0.95) {
        let s = FiniteMetricSpace::tree_ultrametric(arity, depth, ratio).unwrap();
        let n = s.len();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    prop_assert!(s.dist(x, z) <= s.dist(x, y).max(s.dist(y, z)));
                }
            }
        }
    }

    #[test]
    fn greedy_cover_covers(seed in 0u64..1000, x in 0usize..80, t in 0.01f64..0.8) {
        let s = cloud(80, 2, seed);
        let centers = greedy_cover(&s, x, t).unwrap();
        for y in ball(&s, x, 2.0 * t, BallKind::Closed).unwrap() {
            prop_assert!(centers.iter().any(|&c| s.dist(c, y) <= t));
        }
        for (a, &c) in centers.iter().enumerate() {
            prop_assert!(s.dist(x, c) <= 2.0 * t);
            for &e in &centers[a + 1..] {
                prop_assert!(s.dist(c, e) > t);
            }
        }
    }

    #[test]
    fn regrade_brackets(r_base in 0.01f64..0.33, r_tilde in 0.34f64..0.99, n in 1u32..12) {
        let k = regrade_scales(r_base, r_tilde, n).unwrap();
        let target = r_tilde.powi(n as i32);
        prop_assert!(radius(r_base, k) < target * (1.0 + 1e-12));
        prop_assert!(target <= radius(r_base, k - 1) * (1.0 + 1e-12));
    }

    #[test]
    fn scale_level_brackets(t in 1e-3f64..1e3, ri in 0usize..3) {
        let r = [1.0 / 7.0, 0.2, 0.3][ri];
        let lv = scale_level(t, r, -100, 100);
        prop_assert!(3.0 * radius(r, lv.k) <= t);
        prop_assert!(t < 3.0 * radius(r, lv.k - 1));
    }

    #[test]
    fn lq_sum_monotone(seed in 0u64..200, x in 0usize..120, q1 in 0.0f64..3.0, dq in 0.05f64..2.0) {
        let s = cloud(120, 2, seed);
        let tree = build_tree(&s, 1.0 / 7.0).unwrap();
        let p = 0.5 / (m_max(&tree) as f64 + 1.0);
        let mu = build_doubling_measure(&tree, p).unwrap();
        let t = 0.4;
        for k in tree.k_min()..=tree.k_max() {
            let a = lq_sum(&tree, &mu, &s, x, t, k, q1).unwrap();
            let b = lq_sum(&tree, &mu, &s, x, t, k, q1 + dq).unwrap();
            // a single cube at this level carries all the mass
            if tree.level(k).len() > 1 {
                prop_assert!(b < a);
            } else {
                prop_assert_eq!(a, b);
            }
            let wide = lq_sum(&tree, &mu, &s, x, t, k, 1.0).unwrap();
            let narrow = lq_sum(&tree, &mu, &s, x, t / 2.0, k, 1.0).unwrap();
            prop_assert!(narrow <= wide);
        }
    }

    #[test]
    fn dimension_bound_increases_in_p(m in 1usize..20, a in 0.001f64..1.0, b in 0.001f64..1.0) {
        let bound = 1.0 / (m as f64 + 1.0);
        let (lo, hi) = if a < b { (a * bound, b * bound) } else { (b * bound, a * bound) };
        prop_assume!(hi - lo > 1e-9);
        let r = 1.0 / 7.0;
        prop_assert!(dimension_bound(m, lo, r).unwrap() < dimension_bound(m, hi, r).unwrap());
        prop_assert!(dimension_bound(m, lo, r).unwrap() >= 0.0);
    }
}

#[test]
fn grid_coordinates_match_line_distances() {
    let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
    let s = FiniteMetricSpace::from_coordinates(&pts, Norm::Euclidean).unwrap();
    let g = generate(&GeneratorSpec::new(GeneratorKind::Grid1d { n: 8, spacing: 1.0 }, 0)).unwrap();
    assert_eq!(s.to_matrix(), g.to_matrix());
}
