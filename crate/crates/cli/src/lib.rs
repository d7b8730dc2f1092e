//! Harness library behind the `maskmatch` binary: synthetic data, database
//! directories, benchmark sweeps, the precision study and self-checks.

pub mod accuracy;
pub mod bench;
pub mod config;
pub mod db;
pub mod selftest;
pub mod synth;
