//! Preferential Bayesian optimization.
//!
//! A decision-maker is repeatedly shown `q` alternatives and picks the one
//! they prefer. This crate learns the latent utility behind those choices
//! with a Gaussian-process model and chooses the next query by maximizing
//! the expected utility of the best option (qEUBO), with qEI, Thompson
//! sampling and random search as competitors.

pub mod acquisition;
pub mod domain;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod recommend;
pub mod rng;

pub use domain::{validate_query, Domain, Point, PreferenceDataset, Query, Response};
pub use error::{Error, Result};
