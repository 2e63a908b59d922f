//! The position-label encoding: bar per jeonggan, linebreak per gak,
//! (position, symbol, ornament*) per event.

use crate::notation::{onset_of, Frac, Gak, Instrument, Jeonggan, Part, Symbol, SymbolBase};

use super::{CodecError, DecodeMode, Decoded, Scheme, Token, TokenStream};

pub fn encode_jg(part: &Part) -> TokenStream {
    let mut tokens = Vec::new();
    for gak in &part.gaks {
        for jg in &gak.jeonggans {
            tokens.push(Token::Bar);
            for (label, symbol) in &jg.events {
                tokens.push(Token::Position(*label));
                tokens.push(symbol_to_token(symbol));
                for orn in &symbol.ornaments {
                    tokens.push(Token::Ornament(orn.glyph_id.clone()));
                }
            }
        }
        tokens.push(Token::LineBreak);
    }
    TokenStream::new(Scheme::Jg, tokens)
}

pub(super) fn symbol_to_token(symbol: &Symbol) -> Token {
    match &symbol.base {
        SymbolBase::Pitch(p) => Token::Pitch(*p),
        SymbolBase::Rest => Token::Rest,
        SymbolBase::TimedSigimsae(id) => Token::TimedSigimsae(id.clone()),
    }
}

pub(super) fn token_to_base(token: &Token) -> Option<SymbolBase> {
    match token {
        Token::Pitch(p) => Some(SymbolBase::Pitch(*p)),
        Token::Rest => Some(SymbolBase::Rest),
        Token::TimedSigimsae(id) => Some(SymbolBase::TimedSigimsae(id.clone())),
        _ => None,
    }
}

pub fn decode_jg(
    stream: &TokenStream,
    instrument: Instrument,
    mode: DecodeMode,
) -> Result<Decoded, CodecError> {
    if stream.scheme != Scheme::Jg {
        return Err(CodecError::WrongScheme { expected: Scheme::Jg, found: stream.scheme });
    }
    if stream.tokens.is_empty() {
        return Err(CodecError::EmptyStream);
    }

    let mut fixes = Vec::new();
    let mut gaks: Vec<Gak> = Vec::new();
    let mut jeonggans: Vec<Jeonggan> = Vec::new();
    // None until the first bar of the current gak arrives
    let mut current: Option<Jeonggan> = None;
    let mut last_onset: Option<Frac> = None;
    let mut pending_position: Option<(usize, Frac, crate::notation::PositionLabel)> = None;

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
            Token::Bar | Token::LineBreak => {
                if pending_position.is_some() {
                    bail_or_flag!(CodecError::DanglingPosition { index });
                    pending_position = None;
                }
                if let Some(jg) = current.take() {
                    jeonggans.push(jg);
                }
                last_onset = None;
                if matches!(token, Token::Bar) {
                    current = Some(Jeonggan::empty());
                } else {
                    gaks.push(Gak::new(std::mem::take(&mut jeonggans)));
                }
            }
            Token::Position(label) => {
                if pending_position.is_some() {
                    bail_or_flag!(CodecError::DanglingPosition { index: index - 1 });
                }
                if current.is_none() {
                    bail_or_flag!(CodecError::UnexpectedToken {
                        index,
                        what: "position before any bar".into(),
                        scheme: Scheme::Jg,
                    });
                    continue;
                }
                let onset = onset_of(*label);
                if last_onset.map_or(false, |p| onset <= p) {
                    bail_or_flag!(CodecError::NonMonotonicPosition { index, label: label.value() });
                    // recovery drops the whole event: skip the position and
                    // let its symbol fall through as orphaned-and-dropped
                    pending_position = None;
                    continue;
                }
                pending_position = Some((index, onset, *label));
            }
            Token::Pitch(_) | Token::Rest | Token::TimedSigimsae(_) => {
                let base = token_to_base(token).unwrap();
                match pending_position.take() {
                    Some((_, onset, label)) => {
                        last_onset = Some(onset);
                        current
                            .as_mut()
                            .unwrap()
                            .events
                            .push((label, Symbol { base, ornaments: Vec::new() }));
                    }
                    None => {
                        bail_or_flag!(CodecError::UnexpectedToken {
                            index,
                            what: "symbol without position".into(),
                            scheme: Scheme::Jg,
                        });
                    }
                }
            }
            Token::Ornament(id) => {
                let attached = current
                    .as_mut()
                    .and_then(|jg| jg.events.last_mut())
                    .filter(|_| pending_position.is_none() && last_onset.is_some());
                match attached {
                    Some((_, symbol)) => {
                        symbol.ornaments.push(crate::notation::OrnamentSymbol::new(id.clone()))
                    }
                    None => bail_or_flag!(CodecError::OrphanOrnament { index, id: id.clone() }),
                }
            }
            Token::Special(_) => {
                // specials frame model output; they carry no content
                continue;
            }
            other => {
                bail_or_flag!(CodecError::UnexpectedToken {
                    index,
                    what: format!("{:?}", other),
                    scheme: Scheme::Jg,
                });
            }
        }
    }

    if pending_position.is_some() {
        bail_or_flag!(CodecError::DanglingPosition { index: stream.tokens.len() - 1 });
    }
    if let Some(jg) = current.take() {
        // unterminated trailing material: close it as a partial gak
        jeonggans.push(jg);
    }
    if !jeonggans.is_empty() {
        if mode == DecodeMode::Strict {
            // strict streams must end each gak with a linebreak
            return Err(CodecError::UnexpectedToken {
                index: stream.tokens.len().saturating_sub(1),
                what: "gak not closed by linebreak".into(),
                scheme: Scheme::Jg,
            });
        }
        fixes.push("closed unterminated gak".to_string());
        gaks.push(Gak::new(jeonggans));
    }
    if gaks.is_empty() {
        return Err(CodecError::EmptyStream);
    }
    Ok(Decoded { part: Part::new(instrument, gaks), fixes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::{PositionLabel, Symbol, Yul};
    use crate::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lab(v: u8) -> PositionLabel {
        PositionLabel::new(v).unwrap()
    }

    #[test]
    fn empty_jeonggan_emits_bare_bar() {
        let part = Part::new(
            Instrument::Piri,
            vec![Gak::new(vec![
                Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Hwang, 0))]),
                Jeonggan::empty(),
            ])],
        );
        let stream = encode_jg(&part);
        assert_eq!(
            stream.tokens,
            vec![
                Token::Bar,
                Token::Position(lab(0)),
                Token::Pitch(crate::notation::PitchSymbol { yul: Yul::Hwang, octave: 0 }),
                Token::Bar,
                Token::LineBreak,
            ]
        );
    }

    #[test]
    fn ornament_follows_its_pitch() {
        let part = Part::new(
            Instrument::Piri,
            vec![Gak::new(vec![Jeonggan::with_events(vec![(
                lab(0),
                Symbol::pitch(Yul::Im, 0).with_ornament("nire"),
            )])])],
        );
        let stream = encode_jg(&part);
        assert_eq!(stream.tokens[2], Token::Pitch(crate::notation::PitchSymbol { yul: Yul::Im, octave: 0 }));
        assert_eq!(stream.tokens[3], Token::Ornament("nire".into()));
    }

    #[test]
    fn round_trip_reproduces_parts_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let score = random_score(&mut rng, &SynthConfig::default());
            for part in &score.parts {
                let decoded =
                    decode_jg(&encode_jg(part), part.instrument, DecodeMode::Strict).unwrap();
                assert_eq!(&decoded.part, part);
                assert!(decoded.fixes.is_empty());
            }
        }
    }

    #[test]
    fn non_monotonic_position_rejected_strictly() {
        let stream = TokenStream::new(
            Scheme::Jg,
            vec![
                Token::Bar,
                Token::Position(lab(2)),
                Token::Pitch(crate::notation::PitchSymbol { yul: Yul::Jung, octave: 0 }),
                Token::Position(lab(1)),
                Token::Pitch(crate::notation::PitchSymbol { yul: Yul::Im, octave: 0 }),
                Token::LineBreak,
            ],
        );
        match decode_jg(&stream, Instrument::Piri, DecodeMode::Strict) {
            Err(CodecError::NonMonotonicPosition { label: 1, .. }) => {}
            other => panic!("expected NonMonotonicPosition, got {:?}", other),
        }
    }

    #[test]
    fn recovery_drops_bad_event_and_flags() {
        let stream = TokenStream::new(
            Scheme::Jg,
            vec![
                Token::Bar,
                Token::Position(lab(2)),
                Token::Pitch(crate::notation::PitchSymbol { yul: Yul::Jung, octave: 0 }),
                Token::Position(lab(1)),
                Token::Pitch(crate::notation::PitchSymbol { yul: Yul::Im, octave: 0 }),
                Token::LineBreak,
            ],
        );
        let decoded = decode_jg(&stream, Instrument::Piri, DecodeMode::Recover).unwrap();
        assert_eq!(decoded.fixes.len(), 2); // dropped position + orphaned symbol
        assert_eq!(decoded.part.gaks[0].jeonggans[0].events.len(), 1);
    }

    #[test]
    fn empty_stream_is_an_error() {
        let stream = TokenStream::new(Scheme::Jg, vec![]);
        assert_eq!(
            decode_jg(&stream, Instrument::Piri, DecodeMode::Strict),
            Err(CodecError::EmptyStream)
        );
    }
}
