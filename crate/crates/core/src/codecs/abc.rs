//! The barless (symbol, duration) encoding.
//!
//! Durations are exact rationals in jeonggan units and are always written,
//! including unit lengths. Because the stream has no structural tokens, the
//! decoder needs the gak shape (jeonggans per gak) to rebuild the grid.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::notation::{
    frac_text, resolve_durations, subbeat_index, Frac, Gak, Instrument, Jeonggan, Part, Symbol,
};

use super::jg::{symbol_to_token, token_to_base};
use super::remi::canonical_labels;
use super::{CodecError, DecodeMode, Decoded, Scheme, Token, TokenStream};

pub fn encode_abc(part: &Part) -> Result<TokenStream, CodecError> {
    let events = resolve_durations(part)?;
    let mut tokens = Vec::new();
    for event in events {
        tokens.push(symbol_to_token(&event.symbol));
        for orn in &event.symbol.ornaments {
            tokens.push(Token::Ornament(orn.glyph_id.clone()));
        }
        tokens.push(Token::Duration(event.duration));
    }
    Ok(TokenStream::new(Scheme::Abc, tokens))
}

pub fn decode_abc(
    stream: &TokenStream,
    shape: &[usize],
    instrument: Instrument,
    mode: DecodeMode,
) -> Result<Decoded, CodecError> {
    if stream.scheme != Scheme::Abc {
        return Err(CodecError::WrongScheme { expected: Scheme::Abc, found: stream.scheme });
    }
    if stream.tokens.is_empty() {
        return Err(CodecError::EmptyStream);
    }

    let total_jeonggans: usize = shape.iter().sum();
    let total = Frac::from(total_jeonggans as i64);
    let mut fixes = Vec::new();
    // absolute jeonggan index -> events at their in-jeonggan onsets
    let mut placed: BTreeMap<usize, Vec<(Frac, Symbol)>> = BTreeMap::new();
    let mut clock = Frac::zero();
    let mut pending: Option<Symbol> = None;

    macro_rules! bail_or_flag {
        ($err:expr) => {{
            let err = $err;
            if mode == DecodeMode::Strict {
                return Err(err);
            }
            fixes.push(err.to_string());
        }};
    }

    for (index, token) in stream.tokens.iter().enumerate() {
        match token {
            Token::Pitch(_) | Token::Rest | Token::TimedSigimsae(_) => {
                if pending.is_some() {
                    bail_or_flag!(CodecError::UnexpectedToken {
                        index,
                        what: "symbol before previous duration".into(),
                        scheme: Scheme::Abc,
                    });
                }
                pending = Some(Symbol { base: token_to_base(token).unwrap(), ornaments: Vec::new() });
            }
            Token::Ornament(id) => match pending.as_mut() {
                Some(symbol) => {
                    symbol.ornaments.push(crate::notation::OrnamentSymbol::new(id.clone()))
                }
                None => bail_or_flag!(CodecError::OrphanOrnament { index, id: id.clone() }),
            },
            Token::Duration(dur) => {
                let Some(symbol) = pending.take() else {
                    bail_or_flag!(CodecError::UnexpectedToken {
                        index,
                        what: "duration without symbol".into(),
                        scheme: Scheme::Abc,
                    });
                    continue;
                };
                if *dur <= Frac::zero() {
                    bail_or_flag!(CodecError::UnexpectedToken {
                        index,
                        what: format!("non-positive duration {}", frac_text(*dur)),
                        scheme: Scheme::Abc,
                    });
                    continue;
                }
                if clock >= total {
                    bail_or_flag!(CodecError::DurationOverflow { index });
                    continue;
                }
                let jeonggan = (clock.to_integer()) as usize; // floor: clock >= 0, proper fraction split
                let within = clock - Frac::from(jeonggan as i64);
                if subbeat_index(within).is_none() {
                    bail_or_flag!(CodecError::UnalignedOnset { index, onset: frac_text(within) });
                    clock += *dur;
                    continue;
                }
                placed.entry(jeonggan).or_default().push((within, symbol));
                clock += *dur;
            }
            Token::Special(_) => continue,
            other => {
                bail_or_flag!(CodecError::UnexpectedToken {
                    index,
                    what: format!("{:?}", other),
                    scheme: Scheme::Abc,
                });
            }
        }
    }

    if pending.is_some() {
        bail_or_flag!(CodecError::UnexpectedToken {
            index: stream.tokens.len() - 1,
            what: "trailing symbol without duration".into(),
            scheme: Scheme::Abc,
        });
    }
    if clock > total {
        bail_or_flag!(CodecError::DurationOverflow { index: stream.tokens.len() - 1 });
    } else if clock < total && mode == DecodeMode::Recover {
        fixes.push(format!(
            "stream covers {} of {} jeonggans; final note sustains the rest",
            frac_text(clock),
            frac_text(total)
        ));
    }

    let mut gaks = Vec::with_capacity(shape.len());
    let mut abs = 0usize;
    for gak_len in shape {
        let mut jeonggans = Vec::with_capacity(*gak_len);
        for _ in 0..*gak_len {
            match placed.remove(&abs) {
                None => jeonggans.push(Jeonggan::empty()),
                Some(events) => {
                    let onsets: Vec<Frac> = events.iter().map(|(o, _)| *o).collect();
                    match canonical_labels(&onsets) {
                        Ok(labels) => jeonggans.push(Jeonggan::with_events(
                            labels.into_iter().zip(events.into_iter().map(|(_, s)| s)).collect(),
                        )),
                        Err(err) => {
                            if mode == DecodeMode::Strict {
                                return Err(err);
                            }
                            fixes.push(format!("dropped jeonggan {}: {}", abs, err));
                            jeonggans.push(Jeonggan::empty());
                        }
                    }
                }
            }
            abs += 1;
        }
        gaks.push(Gak::new(jeonggans));
    }
    Ok(Decoded { part: Part::new(instrument, gaks), fixes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::{frac, PitchSymbol, PositionLabel, Yul};
    use crate::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lab(v: u8) -> PositionLabel {
        PositionLabel::new(v).unwrap()
    }

    #[test]
    fn sustained_note_becomes_one_pair() {
        let part = Part::new(
            Instrument::Piri,
            vec![Gak::new(vec![
                Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Hwang, 0))]),
                Jeonggan::empty(),
            ])],
        );
        let stream = encode_abc(&part).unwrap();
        assert_eq!(
            stream.tokens,
            vec![
                Token::Pitch(PitchSymbol { yul: Yul::Hwang, octave: 0 }),
                Token::Duration(frac(2, 1)),
            ]
        );
    }

    #[test]
    fn unit_length_duration_is_explicit() {
        let part = Part::new(
            Instrument::Piri,
            vec![Gak::new(vec![
                Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Im, 0))]),
                Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Nam, 0))]),
            ])],
        );
        let stream = encode_abc(&part).unwrap();
        assert_eq!(stream.tokens[1], Token::Duration(frac(1, 1)));
        assert_eq!(stream.tokens[3], Token::Duration(frac(1, 1)));
    }

    #[test]
    fn round_trip_preserves_note_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let score = random_score(&mut rng, &SynthConfig::default());
            for part in &score.parts {
                let want = resolve_durations(part).unwrap();
                let stream = encode_abc(part).unwrap();
                let decoded =
                    decode_abc(&stream, &part.gak_shape(), part.instrument, DecodeMode::Strict)
                        .unwrap();
                let got = resolve_durations(&decoded.part).unwrap();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn overflow_is_detected() {
        let stream = TokenStream::new(
            Scheme::Abc,
            vec![
                Token::Pitch(PitchSymbol { yul: Yul::Hwang, octave: 0 }),
                Token::Duration(frac(9, 1)),
            ],
        );
        match decode_abc(&stream, &[4], Instrument::Piri, DecodeMode::Strict) {
            Err(CodecError::DurationOverflow { .. }) => {}
            other => panic!("expected overflow, got {:?}", other),
        }
    }

    #[test]
    fn unaligned_onset_is_detected() {
        let stream = TokenStream::new(
            Scheme::Abc,
            vec![
                Token::Pitch(PitchSymbol { yul: Yul::Hwang, octave: 0 }),
                Token::Duration(frac(1, 12)),
                Token::Pitch(PitchSymbol { yul: Yul::Jung, octave: 0 }),
                Token::Duration(frac(11, 12)),
            ],
        );
        match decode_abc(&stream, &[4], Instrument::Piri, DecodeMode::Strict) {
            Err(CodecError::UnalignedOnset { .. }) => {}
            other => panic!("expected unaligned onset, got {:?}", other),
        }
    }
}
