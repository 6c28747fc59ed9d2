//! Co-evolution of executable agent workflows over a shared
//! activity-on-edge state graph.
//!
//! The crate models an agent workflow as a chain of edges (activities)
//! between named intermediate states, folds a population of such chains
//! into one directed graph, and evolves the population by recombining
//! paths through that graph and mutating individual chains. Generation
//! of concrete workflow artifacts is delegated to a pluggable backend;
//! a deterministic in-process mock makes every algorithm testable
//! without network access.

pub mod backend;
pub mod chain;
pub mod cli;
pub mod config;
pub mod digest;
pub mod engine;
pub mod error;
pub mod eval;
pub mod graph;
pub mod merge;
pub mod persist;
pub mod recombine;
pub mod rng;
pub mod variation;
