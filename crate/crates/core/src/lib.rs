pub mod analysis;
pub mod combinatorics;
pub mod config;
pub mod error;
pub mod events;
pub mod format;
pub mod measure;
pub mod offspring;
pub mod oracle;
pub mod probs;
pub mod rng;
pub mod sampler;
pub mod tree;
pub mod weight;
