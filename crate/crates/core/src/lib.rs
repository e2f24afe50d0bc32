//! Coherence-minimizing preconditioners for frames.
//!
//! Given a frame `Φ` (an `m × M` matrix of unit-norm columns), the
//! [`precondition`] module finds a nonsingular `G` minimizing the coherence of
//! `GΦ` through a semidefinite program over `X = GᵀG`, solved by the interior
//! point method in [`conic`]. [`recovery`] provides OMP and basis pursuit, and
//! [`experiments`] runs coherence tables, phase diagrams and condition-number
//! sweeps.

// `!(a > b)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conic;
pub mod experiments;
pub mod frames;
pub mod numerics;
pub mod precondition;
pub mod recovery;
