//! Distributed ramp-limiting dispatch for unbalanced radial distribution feeders.

pub mod decomposition;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod opf;
pub mod pac;
pub mod qp;
pub mod scenarios;

pub use error::{Error, ErrorClass, Result};
pub use grid::{load_network, parse_network, Network};
