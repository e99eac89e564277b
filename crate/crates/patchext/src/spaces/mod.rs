//! Polynomial spaces on simplices: quadrature, modal bases, Raviart-Thomas-Nedelec
//! fields, conforming hierarchical shape functions and affine/Piola maps.

pub mod dubiner;
pub mod geometry;
pub mod quadrature;
pub mod tables;
pub mod hierarchical;
pub mod rtn;
