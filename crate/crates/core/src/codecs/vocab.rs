//! Vocabulary construction: token <-> dense integer id, per scheme.
//!
//! Specials, the six instrument tokens and the full position or beat-position
//! alphabets are always present regardless of corpus content; pitches,
//! sigimsae ids and durations come from the corpus.

use std::collections::{BTreeSet, HashMap};

use crate::notation::{Frac, Instrument, Part, PitchSymbol, PositionLabel, SymbolBase};

use super::{encode_abc, Scheme, Special, Token};

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    scheme: Scheme,
    tokens: Vec<Token>,
    ids: HashMap<Token, u32>,
}

/// Token counts by kind, for vocabulary reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KindCounts {
    pub specials: usize,
    pub structural: usize,
    pub positions: usize,
    pub beat_positions: usize,
    pub durations: usize,
    pub pitches: usize,
    pub rests: usize,
    pub timed_sigimsae: usize,
    pub ornaments: usize,
}

impl Vocabulary {
    pub fn from_tokens(scheme: Scheme, tokens: Vec<Token>) -> Vocabulary {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { scheme, tokens, ids }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &Token) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&Token> {
        self.tokens.get(id as usize)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn counts(&self) -> KindCounts {
        let mut c = KindCounts::default();
        for t in &self.tokens {
            match t {
                Token::Special(_) => c.specials += 1,
                Token::Bar | Token::LineBreak => c.structural += 1,
                Token::Position(_) => c.positions += 1,
                Token::BeatPos(_) => c.beat_positions += 1,
                Token::Duration(_) => c.durations += 1,
                Token::Pitch(_) => c.pitches += 1,
                Token::Rest => c.rests += 1,
                Token::TimedSigimsae(_) => c.timed_sigimsae += 1,
                Token::Ornament(_) => c.ornaments += 1,
            }
        }
        c
    }
}

/// Builds the vocabulary for `scheme` over a set of parts.
pub fn build_vocab<'a>(parts: impl IntoIterator<Item = &'a Part>, scheme: Scheme) -> Vocabulary {
    let mut pitches: BTreeSet<(i8, usize)> = BTreeSet::new();
    let mut sigimsae: BTreeSet<String> = BTreeSet::new();
    let mut ornaments: BTreeSet<String> = BTreeSet::new();
    let mut durations: BTreeSet<Frac> = BTreeSet::new();

    for part in parts {
        for gak in &part.gaks {
            for jg in &gak.jeonggans {
                for (_, symbol) in &jg.events {
                    match &symbol.base {
                        SymbolBase::Pitch(p) => {
                            pitches.insert((p.octave, p.yul.index()));
                        }
                        SymbolBase::TimedSigimsae(id) => {
                            sigimsae.insert(id.clone());
                        }
                        SymbolBase::Rest => {}
                    }
                    for orn in &symbol.ornaments {
                        ornaments.insert(orn.glyph_id.clone());
                    }
                }
            }
        }
        if scheme == Scheme::Abc {
            // durations are part-dependent; collect them off the encoding
            if let Ok(stream) = encode_abc(part) {
                for token in stream.tokens {
                    if let Token::Duration(d) = token {
                        durations.insert(d);
                    }
                }
            }
        }
    }

    let mut tokens = Vec::new();
    tokens.push(Token::Special(Special::Start));
    tokens.push(Token::Special(Special::End));
    tokens.push(Token::Special(Special::Pad));
    tokens.push(Token::Special(Special::Mask));
    for instrument in Instrument::ALL {
        tokens.push(Token::Special(Special::Instrument(instrument)));
    }
    match scheme {
        Scheme::Jg | Scheme::Remi => {
            tokens.push(Token::Bar);
            tokens.push(Token::LineBreak);
        }
        Scheme::Abc => {}
    }
    tokens.push(Token::Rest);
    match scheme {
        Scheme::Jg => {
            for label in PositionLabel::all() {
                tokens.push(Token::Position(label));
            }
        }
        Scheme::Remi => {
            for onset in crate::notation::subbeat_onsets() {
                tokens.push(Token::BeatPos(onset));
            }
        }
        Scheme::Abc => {
            for d in durations {
                tokens.push(Token::Duration(d));
            }
        }
    }
    for (octave, yul_idx) in pitches {
        tokens.push(Token::Pitch(PitchSymbol {
            yul: crate::notation::Yul::from_index(yul_idx),
            octave,
        }));
    }
    for id in sigimsae {
        tokens.push(Token::TimedSigimsae(id));
    }
    for id in ornaments {
        tokens.push(Token::Ornament(id));
    }
    Vocabulary::from_tokens(scheme, tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_parts() -> Vec<Part> {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut parts = Vec::new();
        for _ in 0..10 {
            parts.extend(random_score(&mut rng, &SynthConfig::default()).parts);
        }
        parts
    }

    #[test]
    fn jg_has_sixteen_position_tokens() {
        let vocab = build_vocab(&sample_parts(), Scheme::Jg);
        assert_eq!(vocab.counts().positions, 16);
        assert_eq!(vocab.counts().beat_positions, 0);
    }

    #[test]
    fn remi_has_eight_beat_positions() {
        let vocab = build_vocab(&sample_parts(), Scheme::Remi);
        assert_eq!(vocab.counts().beat_positions, 8);
        assert_eq!(vocab.counts().positions, 0);
    }

    #[test]
    fn abc_reports_duration_tokens() {
        let vocab = build_vocab(&sample_parts(), Scheme::Abc);
        assert!(vocab.counts().durations > 8, "{:?}", vocab.counts());
        assert_eq!(vocab.counts().structural, 0);
    }

    #[test]
    fn specials_and_instruments_always_present() {
        for scheme in [Scheme::Jg, Scheme::Remi, Scheme::Abc] {
            let vocab = build_vocab([] as [&Part; 0], scheme);
            assert_eq!(vocab.counts().specials, 10);
            for instrument in Instrument::ALL {
                assert!(vocab.id(&Token::Special(Special::Instrument(instrument))).is_some());
            }
        }
    }

    #[test]
    fn ids_are_dense_and_bijective() {
        let vocab = build_vocab(&sample_parts(), Scheme::Jg);
        for (i, token) in vocab.tokens().iter().enumerate() {
            assert_eq!(vocab.id(token), Some(i as u32));
            assert_eq!(vocab.token(i as u32), Some(token));
        }
        assert_eq!(vocab.token(vocab.len() as u32), None);
    }
}
