//! Desk-scale neural kernel: a reverse-mode tape over f64 matrices, the
//! encoder-decoder orchestration transformer with beat-counter embeddings,
//! and the bidirectional masked-infill model.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod mlm;
pub mod seq2seq;
pub mod tensor;
pub mod train;
