pub mod error;
pub mod graph;
pub mod perm;
pub mod symmetry;

pub use error::{Error, Result};
pub use graph::LabeledGraph;
pub use perm::Permutation;
pub mod env;
pub mod fragments;
pub mod pe;
pub mod state_space;
pub mod policy;
pub mod training;
pub mod cli;
