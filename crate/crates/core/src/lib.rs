//! Spectra and eigenstates of one-dimensional non-Hermitian tight-binding lattices,
//! with open-chain results obtained from periodic Green's functions dressed by an
//! impurity or vacancy.

pub mod error;
pub mod linalg;
pub mod oracle;
pub mod spectrum;
pub mod model;
pub mod greens;
pub mod closed_form;
pub mod obc;
pub mod analysis;
pub mod validate;
