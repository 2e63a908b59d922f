//! Generation harness: predictor abstraction and the end-to-end pipeline
//! from an 8-beat source melody to a refined six-part score.

pub mod manifest;
pub mod pipeline;
pub mod predictor;

use thiserror::Error;

use jgb_core::notation::Instrument;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("no input parts")]
    EmptyInputs,
    #[error("leading part is {found}, the plan starts with {expected}")]
    InstrumentMismatch { expected: Instrument, found: Instrument },
    #[error("predictor failure: {0}")]
    Predictor(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Pianoroll(#[from] jgb_core::pianoroll::PianorollError),
    #[error(transparent)]
    Codec(#[from] jgb_core::codecs::CodecError),
    #[error(transparent)]
    Kernel(#[from] jgb_neural::tensor::KernelError),
}
