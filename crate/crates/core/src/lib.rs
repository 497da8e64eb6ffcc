//! Bayesian analysis of partial top rankings with finite mixtures of
//! Plackett-Luce models.
//!
//! The crate covers the whole workflow: data handling ([`rank_data`]),
//! likelihood and simulation ([`plmodel`]), MAP estimation by EM ([`em`]),
//! Gibbs sampling ([`gibbs`]), model selection ([`selection`]), posterior
//! predictive checks ([`assessment`]), label-switching repair ([`relabel`]) and
//! file formats ([`io`]).

pub mod assessment;
pub mod em;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod plmodel;
pub mod rank_data;
pub mod relabel;
pub mod selection;

pub use error::{Error, ErrorKind, Result};
pub use plmodel::MixtureParams;
pub use rank_data::{Dataset, Format};
