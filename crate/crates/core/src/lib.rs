//! Weakly supervised deep hashing from tag embeddings.
//!
//! The crate learns compact binary codes for images from noisy user tags.
//! Each sample's tags are embedded with a word-vector table and averaged
//! into one target vector ([`tagvec`]); a small network on top of frozen
//! image features is trained so that Hamming distances between its codes
//! follow cosine distances between those vectors ([`hashnet`]). Codes are
//! packed into 64-bit words ([`codec`]), ranked by exact Hamming scan
//! ([`retrieval`]) and scored with mAP and precision-recall curves
//! ([`eval`]).

pub mod codec;
pub mod datastore;
pub mod error;
pub mod eval;
pub mod hashnet;
mod io;
pub mod retrieval;
pub mod rng;
pub mod tagvec;

pub use error::{Error, Result};
