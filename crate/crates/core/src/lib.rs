pub mod error;
pub mod kernels;
pub mod measures;
pub mod membranes;
pub mod montecarlo;
pub mod pairing;
pub mod processes;
pub mod quadrature;
pub mod suite;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
