//! Full-order VMS Navier-Stokes solver and POD-Galerkin reduced order models.

pub mod discretization;
pub mod fom;
pub mod operators;
pub mod pod;
pub mod rom;
pub mod sparse;
pub mod verification;
