//! Finite-scale experiments on integer-part polynomial averages: exact
//! multiquadratic arithmetic, polynomial families, concrete dynamical
//! systems, weighted ergodic averages and their combinatorial shadows.

pub mod averages;
pub mod combinatorics;
pub mod dynamics;
pub mod error;
pub mod fixed;
pub mod polyfam;
pub mod primes;
pub mod symreal;

pub use error::{Error, Result};
pub use polyfam::{FloorEvaluator, IndependenceVerdict, PolynomialFamily, RealPolynomial, Witness};
pub use symreal::{RadicalBasis, Rational, SymbolicReal};
