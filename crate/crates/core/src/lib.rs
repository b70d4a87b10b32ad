//! Semantic-communication networks among heterogeneous agents.
//!
//! Agents expose sample-aligned `d × n` embedding matrices. The crate learns
//! a shared dictionary with row-sparse per-agent codes ([`dictionary`]), then
//! an orthogonal network sheaf over the denoised representations
//! ([`sheaf`]): which agents should talk and the orthogonal maps translating
//! between their latent spaces. [`analysis`] scores the result and
//! [`synthetic`] plants networks with known structure.

pub mod analysis;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod sheaf;
pub mod synthetic;

pub use config::{Budgets, DictionaryInit, EdgeRule, LearnConfig};
pub use error::{Error, Result};
pub use model::{
    reconstruct, validate_network, AgentEmbeddings, ConnectionSheaf, Dictionary, SheafLaplacian,
    SparseCodes, StackedEmbeddings,
};
