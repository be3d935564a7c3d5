use netcube::nets::build_nets_unrestricted;
use netcube::spectrum::{check_dimension_chain, sample_by_mass};
use netcube::{
    assign_parents, build_cubes, build_doubling_measure, build_tree, generate, GeneratorKind,
    GeneratorSpec,
};

const Q_GRID: [f64; 4] = [0.9, 0.95, 1.05, 1.1];

#[test]
fn binary_ultrametric_chain_is_flat() {
    let kind = GeneratorKind::MaryUltrametric { arity: 2, depth: 10, ratio: 0.5 };
    let space = generate(&GeneratorSpec::new(kind, 0)).unwrap();
    let nets = build_nets_unrestricted(&space, 0.5).unwrap();
    let tree = build_cubes(&nets, &assign_parents(&space, &nets));
    let mu = build_doubling_measure(&tree, 0.5).unwrap();
    let points = sample_by_mass(&mu, 20, 5);
    let rep = check_dimension_chain(&tree, &mu, &space, &points, &Q_GRID, space.diameter()).unwrap();
    assert_eq!(rep.fraction_ordered, 1.0);
    for e in &rep.entries {
        for &(_, v) in e.from_above.iter().chain(&e.from_below) {
            assert!((v - 1.0).abs() < 0.1, "{v}");
        }
        assert!((e.lower_dim_est - 1.0).abs() < 0.1);
        assert!((e.upper_dim_est - 1.0).abs() < 0.1);
    }
}

/// The ordering is recorded, not asserted: at this depth the finite-window
/// surrogates do not reproduce the almost-everywhere limit ordering.
#[test]
fn grid_chain_is_recorded() {
    let space = generate(&GeneratorSpec::new(GeneratorKind::Grid1d { n: 4096, spacing: 1.0 }, 0)).unwrap();
    let tree = build_tree(&space, 1.0 / 7.0).unwrap();
    let mu = build_doubling_measure(&tree, 0.1).unwrap();
    let points = sample_by_mass(&mu, 50, 9);
    let rep = check_dimension_chain(&tree, &mu, &space, &points, &Q_GRID, space.diameter()).unwrap();
    println!("ordered fraction {}", rep.fraction_ordered);
    assert_eq!(rep.entries.len(), 50);
    assert_eq!(rep.tolerance, 0.15);
    let ordered = rep.entries.iter().filter(|e| e.ordered).count() as f64 / 50.0;
    assert_eq!(ordered, rep.fraction_ordered);
    for e in &rep.entries {
        assert_eq!(e.from_above.len(), 2);
        assert_eq!(e.from_below.len(), 2);
        assert!(e.lower_dim_est <= e.upper_dim_est);
    }
}

#[test]
fn q_grid_must_straddle_one() {
    let space = generate(&GeneratorSpec::new(GeneratorKind::Grid1d { n: 16, spacing: 1.0 }, 0)).unwrap();
    let tree = build_tree(&space, 0.2).unwrap();
    let mu = build_doubling_measure(&tree, 0.1).unwrap();
    assert!(check_dimension_chain(&tree, &mu, &space, &[0], &[0.5, 0.9], 4.0).is_err());
}
