//! Numerical laboratory for stochastic flows driven by Osgood-Sobolev
//! coefficients.
//!
//! The crate is organised bottom-up:
//!
//! * [`moduli`]: Osgood moduli `rho` and the concave gauge `psi_delta`.
//! * [`fields`]: coefficient pairs `(sigma, b)`, local maximal functions and
//!   pairwise certification of the Osgood-Sobolev hypotheses.
//! * [`mollify`]: convolution with a rescaled bump followed by a cutoff.
//! * [`flow`]: coupled Euler-Maruyama ensembles on shared Brownian paths.
//! * [`density`]: reference measures, pushforward densities and their bounds.
//! * [`fokker_planck`]: the generator, its flux-form adjoint and the
//!   PDE/particle duality checks.
//! * [`lab`]: configuration, canned experiments and report emission.

// `!(x > 0.0)` is the NaN-rejecting form, kept on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod density;
pub mod error;
pub mod fields;
pub mod flow;
pub mod fokker_planck;
pub mod grid;
pub mod lab;
pub mod moduli;
pub mod mollify;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
