//! Dense-matrix autodiff and the graph-attention Q-network built on it.

mod adam;
mod matrix;
mod network;
mod tape;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use network::{param_names, AttentionScale, ForwardVars, NetHyper, QNetworkParams, GAT_LAYERS};
pub use tape::{Tape, Var};
