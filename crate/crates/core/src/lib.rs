//! Privacy-preserving vector-similarity matching.
//!
//! Data providers enroll quantized feature vectors, packed many-per-ciphertext
//! under a lattice-based homomorphic scheme; a verifier learns a single bit —
//! whether any enrolled vector's cosine similarity with its query exceeds a
//! threshold — through masked homomorphic distance computation followed by a
//! two-party secret-shared comparison.

pub mod bfv;
pub mod encoding;
pub mod error;
pub mod mpc;
pub mod net;
pub mod protocol;
pub mod ring;
pub mod stats;

pub use error::{Error, Result};
