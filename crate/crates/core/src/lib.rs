//! Federated knowledge graph embedding.
//!
//! Clients hold private knowledge graphs whose entity sets overlap. A server
//! keeps the global entity table and entity embeddings; clients train their
//! relation embeddings and local copies of the entity embeddings on their own
//! triples, and the server averages each entity over the clients that hold it.

pub mod checkpoint;
pub mod config;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod federation;
pub mod fusion;
pub mod kg;
pub mod model;
pub mod optim;
pub mod rng;
pub mod run;
pub mod settings;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
