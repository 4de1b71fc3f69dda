pub mod analysis;
pub mod assembly;
pub mod error;
pub mod mesh;
pub mod polybasis;
pub mod quadrature;
pub mod solver;
pub mod study;
pub mod verification;
pub mod weakops;

pub use error::{MeshError, Result, WgError};
