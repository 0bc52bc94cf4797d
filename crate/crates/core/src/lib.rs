//! Orthogonal Finsler geodesic chords in domains bounded by a level set.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64` for the common case.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chord;
pub mod config;
pub mod curve;
pub mod domain;
pub mod error;
pub mod expr;
pub mod metric;
pub mod optimize;
pub mod penalty;
pub mod report;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Metric = metric::MetricSpec<f64>;
pub type Domain = domain::ImplicitDomain<f64>;
pub type Curve = curve::DiscreteCurve<f64>;
pub type Params = penalty::PenaltyParams<f64>;
pub type Report = penalty::SolverReport<f64>;
