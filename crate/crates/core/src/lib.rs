//! Entity embeddings over heterogeneous semantic knowledge graphs.

pub mod kgraph;
pub mod numcore;
pub mod syngen;
pub mod embfile;
pub mod seeds;
pub mod kge;
pub mod rgnn;
pub mod hasp;
pub mod trainer;
pub mod evalkit;
pub mod pipeline;
