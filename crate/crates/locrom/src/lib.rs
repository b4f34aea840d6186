//! Localized reduced-order modeling for steady parametrized problems with
//! bifurcating solution branches: snapshot generation along solution branches,
//! k-means clustering of the snapshots, per-cluster proper-orthogonal bases,
//! parameter-space basis assignment, and Galerkin-reduced online solves.

// Numeric kernels co-index several arrays per loop, and ordering guards are
// written `!(a > b)` on purpose so NaN input fails them too.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod clustering;
pub mod fom;
pub mod linalg;
pub mod pipeline;
pub mod podbasis;
pub mod rom;
pub mod sampling;
pub mod snapshots;
pub mod store;
