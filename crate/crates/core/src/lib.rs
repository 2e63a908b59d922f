//! Core model and tooling for machine-readable Jeongganbo: the rational-time
//! score model, the plain-text corpus format, three tokenization schemes,
//! piano-roll masking and evaluation metrics.

pub mod codecs;
pub mod corpus;
pub mod metrics;
pub mod notation;
pub mod pianoroll;
pub mod synth;
