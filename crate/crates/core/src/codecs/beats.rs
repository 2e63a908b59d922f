//! Beat-counter triples: (gak index, jeonggan index, sub-beat index) per
//! token. The same cursor drives offline annotation and the online counter a
//! decoder maintains while emitting tokens one at a time, so the two always
//! agree.

use crate::notation::{frac_text, onset_of, subbeat_index};

use super::{CodecError, Scheme, Token, TokenStream};

/// Position of one token in musical time. `subbeat` indexes the sorted
/// 8-value onset vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BeatTriple {
    pub gak: usize,
    pub jeonggan: usize,
    pub subbeat: usize,
}

impl BeatTriple {
    pub fn zero() -> BeatTriple {
        BeatTriple { gak: 0, jeonggan: 0, subbeat: 0 }
    }
}

/// Streaming counter. A bar announces the next jeonggan of the current gak, a
/// linebreak closes the gak, and position payloads move the sub-beat.
#[derive(Debug, Clone)]
pub struct BeatCursor {
    gak: usize,
    jeonggan: usize,
    subbeat: usize,
    fresh_gak: bool,
}

impl BeatCursor {
    pub fn new() -> BeatCursor {
        BeatCursor { gak: 0, jeonggan: 0, subbeat: 0, fresh_gak: true }
    }

    /// Advances past one token and returns the triple that token carries.
    pub fn observe(&mut self, token: &Token) -> Result<BeatTriple, CodecError> {
        match token {
            Token::Bar => {
                if self.fresh_gak {
                    self.jeonggan = 0;
                    self.fresh_gak = false;
                } else {
                    self.jeonggan += 1;
                }
                self.subbeat = 0;
            }
            Token::LineBreak => {
                self.gak += 1;
                self.jeonggan = 0;
                self.subbeat = 0;
                self.fresh_gak = true;
            }
            Token::Position(label) => {
                self.subbeat = subbeat_index(onset_of(*label)).expect("labels map into the vocabulary");
            }
            Token::BeatPos(onset) => {
                self.subbeat =
                    subbeat_index(*onset).ok_or_else(|| CodecError::BadBeatPos(frac_text(*onset)))?;
            }
            // symbols, ornaments and specials ride on the current position
            _ => {}
        }
        Ok(BeatTriple { gak: self.gak, jeonggan: self.jeonggan, subbeat: self.subbeat })
    }
}

impl Default for BeatCursor {
    fn default() -> Self {
        BeatCursor::new()
    }
}

/// Annotates every token of a jg or remi stream with its beat triple.
/// Triples are lexicographically non-decreasing.
pub fn annotate_beats(stream: &TokenStream) -> Result<Vec<BeatTriple>, CodecError> {
    if stream.scheme == Scheme::Abc {
        return Err(CodecError::WrongScheme { expected: Scheme::Jg, found: Scheme::Abc });
    }
    let mut cursor = BeatCursor::new();
    stream.tokens.iter().map(|t| cursor.observe(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::{encode_jg, encode_remi};
    use crate::notation::{frac, PositionLabel, Symbol, Yul};
    use crate::notation::{Gak, Instrument, Jeonggan, Part};
    use crate::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triple(gak: usize, jeonggan: usize, subbeat: usize) -> BeatTriple {
        BeatTriple { gak, jeonggan, subbeat }
    }

    #[test]
    fn hand_traced_annotation() {
        let part = Part::new(
            Instrument::Piri,
            vec![Gak::new(vec![
                Jeonggan::with_events(vec![(
                    PositionLabel::new(0).unwrap(),
                    Symbol::pitch(Yul::Hwang, 0),
                )]),
                Jeonggan::empty(),
            ])],
        );
        let stream = encode_jg(&part);
        // [bar, pos0, hwang, bar, linebreak]
        let triples = annotate_beats(&stream).unwrap();
        assert_eq!(
            triples,
            vec![triple(0, 0, 0), triple(0, 0, 0), triple(0, 0, 0), triple(0, 1, 0), triple(1, 0, 0)]
        );
    }

    #[test]
    fn half_beat_onset_is_subbeat_four() {
        let part = Part::new(
            Instrument::Piri,
            vec![Gak::new(vec![Jeonggan::with_events(vec![(
                PositionLabel::new(11).unwrap(),
                Symbol::pitch(Yul::Jung, 0),
            )])])],
        );
        let stream = encode_remi(&part);
        let triples = annotate_beats(&stream).unwrap();
        assert_eq!(stream.tokens[1], super::super::Token::BeatPos(frac(1, 2)));
        assert_eq!(triples[1].subbeat, 4);
        assert_eq!(triples[2].subbeat, 4); // the pitch copies its position's triple
    }

    #[test]
    fn triples_are_monotone_and_gaks_step_at_linebreaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let score = random_score(&mut rng, &SynthConfig::default());
            for part in &score.parts {
                for stream in [encode_jg(part), encode_remi(part)] {
                    let triples = annotate_beats(&stream).unwrap();
                    for w in triples.windows(2) {
                        assert!(w[0] <= w[1], "{:?} > {:?}", w[0], w[1]);
                    }
                    let mut gak = 0usize;
                    for (token, t) in stream.tokens.iter().zip(&triples) {
                        if matches!(token, super::super::Token::LineBreak) {
                            gak += 1;
                            assert_eq!(t.gak, gak);
                        }
                    }
                    assert_eq!(gak, part.gaks.len());
                }
            }
        }
    }
}
