#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod error;
pub mod expansion;
pub mod experiments;
pub mod kernels;
pub mod krr;
pub mod linalg;
pub mod link;
pub mod mlp;
pub mod network;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod tabular;
