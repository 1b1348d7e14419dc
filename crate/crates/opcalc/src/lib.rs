//! Exact combinatorial workbench for operadic tree categories,
//! Boardman-Vogt style resolutions and their integral homology.
//!
//! Everything is computed with exact arithmetic: tree parameters are
//! arbitrary-precision rationals and homology is obtained from Smith
//! normal forms of arbitrary-precision integer matrices.

pub mod algebra;
pub mod bv;
pub mod cli;
pub mod complex;
pub mod psi;
pub mod trees;
pub mod verify;

/// Arbitrary-precision integer used for all chain-level arithmetic.
pub type Int = num_bigint::BigInt;
/// Arbitrary-precision rational used for all geometric parameters.
pub type Rat = num_rational::BigRational;

pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(p.into(), q.into())
}

pub fn int(n: i64) -> Int {
    Int::from(n)
}
