//! Tokenization schemes and converters.
//!
//! Three encodings of the same monophonic material:
//!
//! * `jg`   — bar/linebreak structure plus (position label, symbol) pairs;
//!   duration vocabulary is the 16 position labels.
//! * `remi` — identical stream shape with each position label replaced by its
//!   in-jeonggan onset fraction (8 values). Token counts match `jg` exactly.
//! * `abc`  — barless (symbol, duration) pairs; durations are explicit
//!   rationals in jeonggan units, unit lengths included.
//!
//! Decoders run in strict mode for corpus data and in a recovery mode for
//! model output, where malformed tokens are dropped and flagged instead of
//! aborting.

mod abc;
mod beats;
mod jg;
mod remi;
mod textio;
mod vocab;

pub use abc::{decode_abc, encode_abc};
pub use beats::{annotate_beats, BeatCursor, BeatTriple};
pub use jg::{decode_jg, encode_jg};
pub use remi::{canonical_labels, decode_remi, encode_remi};
pub use textio::{
    read_stream_binary, stream_from_text, stream_to_text, token_text, vocab_from_text,
    vocab_to_text, write_stream_binary,
};
pub use vocab::{build_vocab, KindCounts, Vocabulary};

use thiserror::Error;

use crate::notation::{
    frac_text, Frac, Instrument, NotationError, Part, PitchSymbol, PositionLabel,
};

/// Non-content tokens shared by every scheme's vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Special {
    Start,
    End,
    Pad,
    Mask,
    Instrument(Instrument),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Jg,
    Remi,
    Abc,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Jg => "jg",
            Scheme::Remi => "remi",
            Scheme::Abc => "abc",
        }
    }

    pub fn from_name(s: &str) -> Option<Scheme> {
        match s {
            "jg" => Some(Scheme::Jg),
            "remi" => Some(Scheme::Remi),
            "abc" => Some(Scheme::Abc),
            _ => None,
        }
    }
}

/// One token. Payload variants are scheme-dependent; see the module docs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Bar,
    LineBreak,
    Position(PositionLabel),
    BeatPos(Frac),
    Pitch(PitchSymbol),
    Duration(Frac),
    Rest,
    TimedSigimsae(String),
    Ornament(String),
    Special(Special),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream {
    pub scheme: Scheme,
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn new(scheme: Scheme, tokens: Vec<Token>) -> TokenStream {
        TokenStream { scheme, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Abort on the first malformed token.
    Strict,
    /// Drop malformed tokens, keep going, report what was dropped.
    Recover,
}

/// Decoder result: the part plus a description of every recovery fix applied.
/// `fixes` is empty in strict mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub part: Part,
    pub fixes: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("empty stream cannot decode to a part")]
    EmptyStream,
    #[error("stream scheme is {found:?}, expected {expected:?}")]
    WrongScheme { expected: Scheme, found: Scheme },
    #[error("token {index}: position {label} does not advance within its jeonggan")]
    NonMonotonicPosition { index: usize, label: u8 },
    #[error("token {index}: onset {onset} does not advance within its jeonggan")]
    NonMonotonicOnset { index: usize, onset: String },
    #[error("token {index}: ornament '{id}' has no preceding symbol")]
    OrphanOrnament { index: usize, id: String },
    #[error("token {index}: position token has no symbol")]
    DanglingPosition { index: usize },
    #[error("token {index}: unexpected {what} in {scheme:?} stream")]
    UnexpectedToken { index: usize, what: String, scheme: Scheme },
    #[error("accumulated duration overflows the declared shape at token {index}")]
    DurationOverflow { index: usize },
    #[error("token {index}: onset {onset} is not in the in-jeonggan onset vocabulary")]
    UnalignedOnset { index: usize, onset: String },
    #[error("onsets {{{}}} fit no position-label layout", .onsets.join(", "))]
    NoLayout { onsets: Vec<String> },
    #[error("beat position {0} is not in the onset vocabulary")]
    BadBeatPos(String),
    #[error("token '{0}' is not in the vocabulary")]
    NotInVocab(String),
    #[error(transparent)]
    Notation(#[from] NotationError),
}

pub(crate) fn no_layout_err(onsets: &[Frac]) -> CodecError {
    CodecError::NoLayout { onsets: onsets.iter().map(|o| frac_text(*o)).collect() }
}

/// Converts a stream to another scheme by decoding and re-encoding.
///
/// `shape` (jeonggans per gak) is required when the source is `abc`, which
/// carries no structural tokens. Content is onset/pitch/ornament-preserving.
pub fn convert(
    stream: &TokenStream,
    target: Scheme,
    shape: Option<&[usize]>,
) -> Result<TokenStream, CodecError> {
    if stream.scheme == target {
        return Ok(stream.clone());
    }
    // the carrier instrument is irrelevant: streams carry no instrument tokens
    let carrier = Instrument::Piri;
    let part = match stream.scheme {
        Scheme::Jg => decode_jg(stream, carrier, DecodeMode::Strict)?.part,
        Scheme::Remi => decode_remi(stream, carrier, DecodeMode::Strict)?.part,
        Scheme::Abc => {
            let shape = shape.ok_or(CodecError::EmptyStream)?;
            decode_abc(stream, shape, carrier, DecodeMode::Strict)?.part
        }
    };
    Ok(match target {
        Scheme::Jg => encode_jg(&part),
        Scheme::Remi => encode_remi(&part),
        Scheme::Abc => encode_abc(&part)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::resolve_durations;
    use crate::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_conversion_returns_equal_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let score = random_score(&mut rng, &SynthConfig::default());
        let stream = encode_jg(&score.parts[0]);
        assert_eq!(convert(&stream, Scheme::Jg, None).unwrap(), stream);
    }

    #[test]
    fn conversion_preserves_note_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let score = random_score(&mut rng, &SynthConfig::default());
            let part = &score.parts[0];
            let events = resolve_durations(part).unwrap();
            let shape = part.gak_shape();

            let jg = encode_jg(part);
            let remi = convert(&jg, Scheme::Remi, None).unwrap();
            let back = convert(&remi, Scheme::Jg, None).unwrap();
            let decoded = decode_jg(&back, part.instrument, DecodeMode::Strict).unwrap();
            assert_eq!(resolve_durations(&decoded.part).unwrap(), events);

            let abc = convert(&jg, Scheme::Abc, None).unwrap();
            let back = convert(&abc, Scheme::Jg, Some(&shape)).unwrap();
            let decoded = decode_jg(&back, part.instrument, DecodeMode::Strict).unwrap();
            assert_eq!(resolve_durations(&decoded.part).unwrap(), events);
        }
    }
}
