//! The beat-position encoding and the canonical onset-to-label assignment.
//!
//! The stream shape is identical to the position-label encoding; only the
//! position payload differs, so token counts match exactly. Decoding has to
//! pick labels for bare onsets, which is many-to-one in reverse: the
//! canonicalizer below fixes one deterministic layout per onset set.

use crate::notation::{
    frac, onset_of, subbeat_index, Frac, Gak, Instrument, Jeonggan, Part, PositionLabel, Symbol,
};

use super::jg::{symbol_to_token, token_to_base};
use super::{no_layout_err, CodecError, DecodeMode, Decoded, Scheme, Token, TokenStream};

pub fn encode_remi(part: &Part) -> TokenStream {
    let mut tokens = Vec::new();
    for gak in &part.gaks {
        for jg in &gak.jeonggans {
            tokens.push(Token::Bar);
            for (label, symbol) in &jg.events {
                tokens.push(Token::BeatPos(onset_of(*label)));
                tokens.push(symbol_to_token(symbol));
                for orn in &symbol.ornaments {
                    tokens.push(Token::Ornament(orn.glyph_id.clone()));
                }
            }
        }
        tokens.push(Token::LineBreak);
    }
    TokenStream::new(Scheme::Remi, tokens)
}

/// Deterministic label assignment for one jeonggan's onsets.
///
/// Onsets must be strictly increasing and drawn from the 8-value vocabulary.
/// Preference order: the whole-box label, the half family, the 1-2-3 family
/// for exactly {0, 1/2, 3/4}, the sixth grid, then the quarter grid. The
/// output always satisfies the jeonggan invariants.
pub fn canonical_labels(onsets: &[Frac]) -> Result<Vec<PositionLabel>, CodecError> {
    for w in onsets.windows(2) {
        if w[1] <= w[0] {
            return Err(no_layout_err(onsets));
        }
    }
    for onset in onsets {
        if subbeat_index(*onset).is_none() {
            return Err(CodecError::UnalignedOnset {
                index: 0,
                onset: crate::notation::frac_text(*onset),
            });
        }
    }

    let lab = |v: u8| PositionLabel::new(v).unwrap();
    let halves = [frac(0, 1), frac(1, 2)];
    let sixths = [frac(0, 1), frac(1, 6), frac(1, 3), frac(1, 2), frac(2, 3), frac(5, 6)];
    let quarters = [frac(0, 1), frac(1, 4), frac(1, 2), frac(3, 4)];

    if onsets == [frac(0, 1)] {
        return Ok(vec![lab(0)]);
    }
    if onsets.iter().all(|o| halves.contains(o)) {
        return Ok(onsets
            .iter()
            .map(|o| if *o == frac(0, 1) { lab(10) } else { lab(11) })
            .collect());
    }
    if onsets == [frac(0, 1), frac(1, 2), frac(3, 4)] {
        return Ok(vec![lab(1), lab(2), lab(3)]);
    }
    if onsets.iter().all(|o| sixths.contains(o)) {
        return Ok(onsets
            .iter()
            .map(|o| lab(4 + sixths.iter().position(|s| s == o).unwrap() as u8))
            .collect());
    }
    if onsets.iter().all(|o| quarters.contains(o)) {
        return Ok(onsets
            .iter()
            .map(|o| lab(12 + quarters.iter().position(|q| q == o).unwrap() as u8))
            .collect());
    }
    Err(no_layout_err(onsets))
}

pub fn decode_remi(
    stream: &TokenStream,
    instrument: Instrument,
    mode: DecodeMode,
) -> Result<Decoded, CodecError> {
    if stream.scheme != Scheme::Remi {
        return Err(CodecError::WrongScheme { expected: Scheme::Remi, found: stream.scheme });
    }
    if stream.tokens.is_empty() {
        return Err(CodecError::EmptyStream);
    }

    let mut fixes = Vec::new();
    let mut gaks: Vec<Gak> = Vec::new();
    let mut jeonggans: Vec<Jeonggan> = Vec::new();
    // events of the open jeonggan, labelled at close time
    let mut current: Option<Vec<(Frac, Symbol)>> = None;
    let mut pending_onset: Option<Frac> = None;

    macro_rules! bail_or_flag {
        ($err:expr) => {{
            let err = $err;
            if mode == DecodeMode::Strict {
                return Err(err);
            }
            fixes.push(err.to_string());
        }};
    }

    macro_rules! close_jeonggan {
        () => {
            if let Some(events) = current.take() {
                let onsets: Vec<Frac> = events.iter().map(|(o, _)| *o).collect();
                match canonical_labels(&onsets) {
                    Ok(labels) => {
                        jeonggans.push(Jeonggan::with_events(
                            labels
                                .into_iter()
                                .zip(events.into_iter().map(|(_, s)| s))
                                .collect(),
                        ));
                    }
                    Err(err) => {
                        if mode == DecodeMode::Strict {
                            return Err(err);
                        }
                        fixes.push(format!("dropped jeonggan: {}", err));
                        jeonggans.push(Jeonggan::empty());
                    }
                }
            }
        };
    }

    for (index, token) in stream.tokens.iter().enumerate() {
        match token {
            Token::Bar | Token::LineBreak => {
                if pending_onset.take().is_some() {
                    bail_or_flag!(CodecError::DanglingPosition { index });
                }
                close_jeonggan!();
                if matches!(token, Token::Bar) {
                    current = Some(Vec::new());
                } else {
                    gaks.push(Gak::new(std::mem::take(&mut jeonggans)));
                }
            }
            Token::BeatPos(onset) => {
                if pending_onset.is_some() {
                    bail_or_flag!(CodecError::DanglingPosition { index: index - 1 });
                }
                let Some(events) = current.as_ref() else {
                    bail_or_flag!(CodecError::UnexpectedToken {
                        index,
                        what: "beat position before any bar".into(),
                        scheme: Scheme::Remi,
                    });
                    continue;
                };
                if subbeat_index(*onset).is_none() {
                    bail_or_flag!(CodecError::BadBeatPos(crate::notation::frac_text(*onset)));
                    continue;
                }
                if events.last().map_or(false, |(prev, _)| onset <= prev) {
                    bail_or_flag!(CodecError::NonMonotonicOnset {
                        index,
                        onset: crate::notation::frac_text(*onset),
                    });
                    pending_onset = None;
                    continue;
                }
                pending_onset = Some(*onset);
            }
            Token::Pitch(_) | Token::Rest | Token::TimedSigimsae(_) => {
                let base = token_to_base(token).unwrap();
                match pending_onset.take() {
                    Some(onset) => current
                        .as_mut()
                        .unwrap()
                        .push((onset, Symbol { base, ornaments: Vec::new() })),
                    None => bail_or_flag!(CodecError::UnexpectedToken {
                        index,
                        what: "symbol without beat position".into(),
                        scheme: Scheme::Remi,
                    }),
                }
            }
            Token::Ornament(id) => {
                let attached = current
                    .as_mut()
                    .and_then(|evs| evs.last_mut())
                    .filter(|_| pending_onset.is_none());
                match attached {
                    Some((_, symbol)) => {
                        symbol.ornaments.push(crate::notation::OrnamentSymbol::new(id.clone()))
                    }
                    None => bail_or_flag!(CodecError::OrphanOrnament { index, id: id.clone() }),
                }
            }
            Token::Special(_) => continue,
            other => {
                bail_or_flag!(CodecError::UnexpectedToken {
                    index,
                    what: format!("{:?}", other),
                    scheme: Scheme::Remi,
                });
            }
        }
    }

    if pending_onset.is_some() {
        bail_or_flag!(CodecError::DanglingPosition { index: stream.tokens.len() - 1 });
    }
    close_jeonggan!();
    if !jeonggans.is_empty() {
        if mode == DecodeMode::Strict {
            return Err(CodecError::UnexpectedToken {
                index: stream.tokens.len().saturating_sub(1),
                what: "gak not closed by linebreak".into(),
                scheme: Scheme::Remi,
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
