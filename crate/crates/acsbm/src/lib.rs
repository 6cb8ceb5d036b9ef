//! Spectral recovery of latent communities in networks whose edge
//! probabilities mix block structure with additive covariate effects.
//!
//! The crate covers the whole workflow:
//!
//! * [`model`] — model specification, the expansion into an equivalent flat
//!   stochastic block model over (community, covariate) subcommunities, and
//!   canonical latent positions;
//! * [`sampler`] — drawing node attributes and networks from a model;
//! * [`clustering`] — k-means and Gaussian-mixture clustering of embedded
//!   nodes, run separately within each covariate configuration;
//! * [`pipeline`] — the three-stage fit: embed the adjacency matrix,
//!   cluster within configurations, then align cluster labels across
//!   configurations through estimated latent positions;
//! * [`harness`] — replicated misclassification experiments over a grid of
//!   network sizes, with CSV/JSON reporting;
//! * [`linalg`] — the symmetric eigensolvers, assignment solver, and small
//!   matrix utilities the rest is built on.
//!
//! The `examples/` directory walks through each capability end to end.

pub mod clustering;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod link;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
