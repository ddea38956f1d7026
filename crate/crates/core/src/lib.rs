//! Kähler–Ricci flow on Calabi-ansatz metrics: block-form chart geometry,
//! O'Neill-type curvature identities for conformal submersions, a reduced
//! one-dimensional flow solver, blow-up analysis and a small run harness.

// `!(x > 0.0)` rejects NaN; index loops mirror the tensor formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chart;
pub mod curvature;
pub mod oneill;
pub mod flow;
pub mod singularity;
pub mod suite;
pub mod harness;
