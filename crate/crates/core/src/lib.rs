//! Privacy-preserving matching of electric-vehicle buyers with shared
//! private charging piles.
//!
//! Buyers and sellers encrypt their profiles under a per-round Paillier key.
//! A proxy combines buyer and seller ciphertexts homomorphically, a cloud
//! server decrypts only the resulting sums and differences and runs a greedy
//! demand-aware matching, and matched parties receive each other's location
//! through a key hand-over encrypted under their personal keys.

pub mod paillier;
pub mod bench;
pub mod counters;
mod error;
pub mod matching;
pub mod oracle;
pub mod orchestrator;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};
