pub mod error;
pub mod operator;
pub mod pauli;
pub mod spin;
pub mod krylov;
pub mod tridiag;
pub mod winding;
pub mod analytic;
pub mod quad;
pub mod scramblon;
pub mod config;
pub mod harness;
pub mod selftest;
