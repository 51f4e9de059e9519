//! Chaos-game waiting times for self-similar sets.
//!
//! The crate runs the random iteration algorithm on an iterated function
//! system of similitudes, measures how long the orbit takes to become
//! δ-dense in the attractor, and analyses the same quantity symbolically as
//! the cover time of a finite Markov chain on cylinder words.

pub mod chain;
pub mod config;
pub mod cover;
pub mod error;
pub mod game;
pub mod harness;
pub mod hitting;
pub mod ifs;
pub mod net;
pub mod partition;
pub mod render;
pub mod report;
pub mod sampling;

pub use chain::{Chain, Kernel};
pub use error::{Error, Result};
pub use ifs::{IfsSystem, Similitude};
pub use net::ReferenceNet;
pub use partition::{Partition, Word};
