//! The sequence-completion interface the pipeline drives, with two
//! implementations: a deterministic transposing echo for tests and plumbing
//! checks, and the trained transformer pair.

use std::cell::RefCell;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jgb_core::codecs::{decode_jg, decode_remi, DecodeMode, Scheme, Token, Vocabulary};
use jgb_core::notation::{Gak, Instrument, Part, Symbol, SymbolBase};
use jgb_core::pianoroll::{Frame, FrameGrid, FrameVocab, OrnamentFeature, SymbolFeature};
use jgb_neural::mlm::{mlm_infill, Mlm};
use jgb_neural::seq2seq::{
    decode_stream, encode_for_scheme, part_to_seq_input, Sampling, Seq2Seq, SeqInput,
};

use crate::HarnessError;

/// Abstract sequence completion. `inputs` are window-aligned part fragments;
/// `prefix` is already-accepted output from the window start; implementations
/// emit `gaks_to_emit` further gaks. `greedy` asks for the deterministic
/// decoding path on a retry.
pub trait Predictor {
    fn complete(
        &self,
        inputs: &[Part],
        target: Instrument,
        prefix: &[Gak],
        gaks_to_emit: usize,
        greedy: bool,
    ) -> Result<Vec<Gak>, HarnessError>;

    /// Fills every masked feature of a piano-roll grid.
    fn infill(&self, grid: &FrameGrid) -> Result<FrameGrid, HarnessError>;
}

/// Copies the first input, transposed along the yul cycle by the difference
/// of the per-instrument offsets. Masked frames infill to sustain. A fixed
/// point of the refinement pass by construction.
#[derive(Debug, Clone)]
pub struct EchoPredictor {
    offsets: [i32; 6],
}

impl EchoPredictor {
    pub fn new(offsets: [i32; 6]) -> EchoPredictor {
        EchoPredictor { offsets }
    }

    pub fn identity() -> EchoPredictor {
        EchoPredictor { offsets: [0; 6] }
    }

    fn transpose_symbol(symbol: &Symbol, steps: i32) -> Symbol {
        let base = match &symbol.base {
            SymbolBase::Pitch(p) => SymbolBase::Pitch(p.transposed(steps)),
            other => other.clone(),
        };
        Symbol { base, ornaments: symbol.ornaments.clone() }
    }

    fn transpose_gak(gak: &Gak, steps: i32) -> Gak {
        Gak::new(
            gak.jeonggans
                .iter()
                .map(|jg| jgb_core::notation::Jeonggan::with_events(
                    jg.events
                        .iter()
                        .map(|(l, s)| (*l, Self::transpose_symbol(s, steps)))
                        .collect(),
                ))
                .collect(),
        )
    }
}

impl Predictor for EchoPredictor {
    fn complete(
        &self,
        inputs: &[Part],
        target: Instrument,
        prefix: &[Gak],
        gaks_to_emit: usize,
        _greedy: bool,
    ) -> Result<Vec<Gak>, HarnessError> {
        let src = inputs.first().ok_or(HarnessError::EmptyInputs)?;
        let steps = self.offsets[target.index()] - self.offsets[src.instrument.index()];
        let start = prefix.len();
        let end = start + gaks_to_emit;
        if end > src.gaks.len() {
            return Err(HarnessError::BadShape(format!(
                "window of {} gaks cannot emit {}..{}",
                src.gaks.len(),
                start,
                end
            )));
        }
        Ok(src.gaks[start..end].iter().map(|g| Self::transpose_gak(g, steps)).collect())
    }

    fn infill(&self, grid: &FrameGrid) -> Result<FrameGrid, HarnessError> {
        let frames = grid
            .frames
            .iter()
            .map(|f| Frame {
                symbol: if f.symbol == SymbolFeature::Mask {
                    SymbolFeature::Continue
                } else {
                    f.symbol.clone()
                },
                ornament: if f.ornament == OrnamentFeature::Mask {
                    OrnamentFeature::None
                } else {
                    f.ornament.clone()
                },
            })
            .collect();
        Ok(FrameGrid { frames, gak_shape: grid.gak_shape.clone() })
    }
}

/// Trained-model predictor: the orchestration transformer for completion and
/// optionally the masked-infill model.
pub struct NeuralPredictor {
    model: Seq2Seq,
    vocab: Vocabulary,
    mlm: Option<(Mlm, FrameVocab)>,
    sampling: Sampling,
    max_len: usize,
    rng: RefCell<ChaCha8Rng>,
}

impl NeuralPredictor {
    pub fn new(model: Seq2Seq, vocab: Vocabulary, sampling: Sampling, seed: u64) -> NeuralPredictor {
        let max_len = model.cfg.max_len;
        NeuralPredictor {
            model,
            vocab,
            mlm: None,
            sampling,
            max_len,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn with_mlm(mut self, mlm: Mlm, vocab: FrameVocab) -> NeuralPredictor {
        self.mlm = Some((mlm, vocab));
        self
    }

    pub fn load(
        seq2seq_path: &Path,
        mlm_path: Option<&Path>,
        sampling: Sampling,
        seed: u64,
    ) -> Result<NeuralPredictor, HarnessError> {
        let (model, vocab) = jgb_neural::checkpoint::load_seq2seq(seq2seq_path)?;
        let mut predictor = NeuralPredictor::new(model, vocab, sampling, seed);
        if let Some(path) = mlm_path {
            let (mlm, frame_vocab) = jgb_neural::checkpoint::load_mlm(path)?;
            predictor.mlm = Some((mlm, frame_vocab));
        }
        Ok(predictor)
    }

    fn decode_fragment(&self, tokens: Vec<Token>, target: Instrument) -> Option<Part> {
        if tokens.is_empty() {
            return None;
        }
        let stream = jgb_core::codecs::TokenStream::new(self.vocab.scheme(), tokens);
        let decoded = match self.vocab.scheme() {
            Scheme::Jg => decode_jg(&stream, target, DecodeMode::Recover),
            Scheme::Remi => decode_remi(&stream, target, DecodeMode::Recover),
            Scheme::Abc => return None,
        };
        decoded.ok().map(|d| d.part)
    }
}

impl Predictor for NeuralPredictor {
    fn complete(
        &self,
        inputs: &[Part],
        target: Instrument,
        prefix: &[Gak],
        gaks_to_emit: usize,
        greedy: bool,
    ) -> Result<Vec<Gak>, HarnessError> {
        if inputs.is_empty() {
            return Err(HarnessError::EmptyInputs);
        }
        let encoded: Vec<SeqInput> = inputs
            .iter()
            .map(|p| part_to_seq_input(p, &self.vocab))
            .collect::<Result<_, _>>()?;
        let encoder_input = SeqInput::concat(&encoded);

        let prefix_tokens = if prefix.is_empty() {
            Vec::new()
        } else {
            let prefix_part = Part::new(target, prefix.to_vec());
            encode_for_scheme(&prefix_part, self.vocab.scheme())?.tokens
        };

        let sampling = if greedy { Sampling::Greedy } else { self.sampling };
        let mut rng = self.rng.borrow_mut();
        let outcome = decode_stream(
            &self.model,
            &self.vocab,
            &encoder_input,
            target,
            &prefix_tokens,
            sampling,
            &mut rng,
            self.max_len,
            Some(gaks_to_emit),
        )?;

        let generated = outcome.stream.tokens[outcome.generated_from..].to_vec();
        let part = self.decode_fragment(generated, target);
        Ok(part.map(|p| p.gaks).unwrap_or_default())
    }

    fn infill(&self, grid: &FrameGrid) -> Result<FrameGrid, HarnessError> {
        let Some((mlm, vocab)) = &self.mlm else {
            return Err(HarnessError::Predictor(
                "no masked-infill checkpoint configured".into(),
            ));
        };
        Ok(mlm_infill(mlm, vocab, grid)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use jgb_core::notation::{Jeonggan, PositionLabel, Yul};

    fn lab(v: u8) -> PositionLabel {
        PositionLabel::new(v).unwrap()
    }

    fn simple_part(instrument: Instrument) -> Part {
        let gak = Gak::new(vec![
            Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Hwang, 0))]),
            Jeonggan::with_events(vec![(lab(10), Symbol::pitch(Yul::Jung, 0)), (lab(11), Symbol::pitch(Yul::Im, 0))]),
            Jeonggan::empty(),
            Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Nam, 0))]),
        ]);
        Part::new(instrument, vec![gak.clone(), gak.clone(), gak.clone(), gak])
    }

    #[test]
    fn zero_offsets_copy_exactly() {
        let echo = EchoPredictor::identity();
        let piri = simple_part(Instrument::Piri);
        let gaks = echo.complete(&[piri.clone()], Instrument::Geomungo, &[], 4, false).unwrap();
        assert_eq!(gaks, piri.gaks);
    }

    #[test]
    fn transposition_preserves_onsets_and_counts() {
        let mut offsets = [0i32; 6];
        offsets[Instrument::Geomungo.index()] = 3;
        let echo = EchoPredictor::new(offsets);
        let piri = simple_part(Instrument::Piri);
        let gaks = echo.complete(&[piri.clone()], Instrument::Geomungo, &[], 4, false).unwrap();
        for (orig, out) in piri.gaks.iter().zip(&gaks) {
            assert_eq!(orig.len(), out.len());
            for (a, b) in orig.jeonggans.iter().zip(&out.jeonggans) {
                let la: Vec<_> = a.events.iter().map(|(l, _)| *l).collect();
                let lb: Vec<_> = b.events.iter().map(|(l, _)| *l).collect();
                assert_eq!(la, lb);
            }
        }
        // pitch actually moved
        let before = &piri.gaks[0].jeonggans[0].events[0].1;
        let after = &gaks[0].jeonggans[0].events[0].1;
        assert_ne!(before, after);
    }

    #[test]
    fn echo_respects_prefix_offset() {
        let echo = EchoPredictor::identity();
        let piri = simple_part(Instrument::Piri);
        let prefix = piri.gaks[..2].to_vec();
        let gaks = echo.complete(&[piri.clone()], Instrument::Haegeum, &prefix, 1, false).unwrap();
        assert_eq!(gaks, vec![piri.gaks[2].clone()]);
    }

    #[test]
    fn echo_infill_replaces_masks_with_sustain() {
        let echo = EchoPredictor::identity();
        let mut grid = FrameGrid {
            frames: vec![
                Frame { symbol: SymbolFeature::Mask, ornament: OrnamentFeature::Mask };
                24
            ],
            gak_shape: vec![4],
        };
        grid.frames[0].symbol = SymbolFeature::Rest;
        let filled = echo.infill(&grid).unwrap();
        assert_eq!(filled.frames[0].symbol, SymbolFeature::Rest);
        for f in &filled.frames[1..] {
            assert_eq!(f.symbol, SymbolFeature::Continue);
            assert_eq!(f.ornament, OrnamentFeature::None);
        }
    }
}
