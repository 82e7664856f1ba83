//! Numerical construction of transition densities for Lévy-type operators
//! with variable coefficients by the parametrix method.

pub mod envelopes;
pub mod error;
pub mod frozen;
pub mod io;
pub mod kato;
pub mod model;
pub mod oracle;
pub mod parametrix;
pub mod quadrature;
pub mod stats;
