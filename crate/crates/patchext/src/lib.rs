pub mod boundary;
pub mod coloring;
pub mod element;
pub mod error;
pub mod estimator;
pub mod fields;
pub mod fixtures;
pub mod extension;
pub mod linalg;
pub mod mesh;
pub mod par;
pub mod shelling;
pub mod spaces;
pub mod topology;

pub use error::{Error, Result};
pub use nalgebra;
