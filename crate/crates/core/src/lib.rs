//! Circula-based multivariate distributions on the flat torus.
//!
//! A distribution on `T^d` is assembled from `d` univariate circular
//! marginals and a *circula*, a density on the torus with uniform marginals
//! obtained by coupling every coordinate to one latent angle. The crate
//! provides closed-form circula densities for von Mises and wrapped Cauchy
//! binding densities, quadrature oracles, sampling, estimation, mixture
//! learning with a message-length criterion, and synthetic benchmarks.

pub mod angle;
pub mod cbmd;
pub mod circula;
pub mod correlation;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod io;
pub mod mixture;
pub mod modes;
pub mod optim;
pub mod rng;
pub mod special;
pub mod synth;
pub mod univariate;

pub use angle::{geodesic_dist2, Angle, AngleVector};
pub use cbmd::CbmdParams;
pub use circula::{BindingFamily, CirculaParams};
pub use dataset::Dataset;
pub use error::{Error, ErrorKind, Result};
pub use mixture::{MixtureModel, MmlConfig};
pub use rng::RandomSource;
pub use univariate::{MarginalFamily, UnivariateCircular, VonMises, WrappedCauchy};
