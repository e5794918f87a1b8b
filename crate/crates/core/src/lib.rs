//! Attention-based hierarchical LSTM for predicting the direction of the
//! next close from financial news headlines.
//!
//! The crate is layered bottom up: [`tensor`] provides dense tensors and a
//! reverse-mode tape, [`layers`] the neural building blocks, [`model`] the
//! full network and its ablation variants, [`corpus`] ingestion and sample
//! construction, [`training`] the optimizer, loop and checkpoints, and
//! [`cli`] the command-line pipeline.

pub mod atomic;
pub mod cli;
pub mod corpus;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod training;
