pub mod channel;
pub mod cli;
pub mod error;
pub mod hs_algebra;
pub mod manifold;
pub mod models;
pub mod spectral;
pub mod trajectory;

pub use error::{Error, Result};
