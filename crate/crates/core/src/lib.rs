//! Generalized dyadic cubes and doubling measures on finite metric spaces.
//!
//! The pipeline is: a [`FiniteMetricSpace`] (ingested or generated) →
//! nested separated nets ([`nets`]) → the cube tree ([`cubes`]) → a measure
//! built by recursive mass splitting ([`measure`]) → empirical checks of
//! doubling behaviour ([`doubling`]) and of local spectra and dimensions
//! ([`spectrum`]).

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cubes;
pub mod doubling;
pub mod error;
pub mod generators;
pub mod io;
pub mod measure;
pub mod metric;
pub mod nets;
pub mod report;
pub mod spectrum;

pub use cubes::{build_cubes, cube_at, regrade_scales, verify_tree_properties, CubeTree, NodeId};
pub use error::{Error, Result};
pub use generators::{generate, GeneratorKind, GeneratorSpec};
pub use measure::{
    build_alpha_homogeneous, build_doubling_measure, build_self_similar, child_counts,
    MeasureAssignment,
};
pub use metric::{ball, covering_number, validate_metric, BallKind, FiniteMetricSpace, Norm};
pub use nets::{assign_parents, build_nets, NetHierarchy, ParentMap};
pub use report::{PropertyCheck, VerificationReport};

/// Nets, parents and cubes for `space` at ratio `r` in one call.
pub fn build_tree(space: &FiniteMetricSpace, r: f64) -> Result<CubeTree> {
    let nets = build_nets(space, r)?;
    let parents = assign_parents(space, &nets);
    Ok(build_cubes(&nets, &parents))
}
