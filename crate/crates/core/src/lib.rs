//! Spark core: a self-hostable shared experiential memory for coding
//! agents. Documentation corpora and agent feedback traces are curated
//! across discrete memory epochs; retrieval fuses lexical, vector, and
//! insight channels into context-aware recommendations served over a
//! JSON-RPC tool protocol.

pub mod config;
pub mod evalkit;
pub mod gateway;
pub mod index;
pub mod learning;
pub mod retrieval;
pub mod server;
pub mod store;
pub mod tokenize;

pub use config::Config;
pub use server::SparkService;
