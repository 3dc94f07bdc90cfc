//! Exact computer algebra for cobar, convolution, brace and Swiss-cheese
//! operads, and for shifted Poisson and coisotropic structures on
//! finitely presented commutative dg algebras over ℚ.

pub mod gradedlin;
pub mod treecomb;
pub mod opcore;
pub mod cobar;
pub mod brace;
pub mod convolution;
pub mod cdga;
pub mod polyvec;
pub mod swisscheese;
