pub mod alignment;
pub mod equilibrium;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod mediator;
pub mod model;
pub mod netio;
pub mod polyhedra;
pub mod sweep;

pub use error::{Error, Result};
