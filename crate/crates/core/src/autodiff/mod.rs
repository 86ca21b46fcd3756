//! Reverse-mode differentiation over dense matrices, plus the trainable
//! building blocks (linear, GRU) and the Adam optimizer.

mod graph;
mod layers;
mod params;

pub use graph::{Grads, Graph, Mat, Var};
pub use layers::{Gru, Linear};
pub use params::{flatten_grads, Adam, ParamSet, TensorRecord};

#[cfg(test)]
mod tests;
