//! Bidirectional transformer over piano-roll frames with two output heads,
//! trained to restore masked symbol and ornament features.

use rand_chacha::ChaCha8Rng;

use jgb_core::codecs::BeatTriple;
use jgb_core::pianoroll::{
    Frame, FrameGrid, FrameVocab, MaskTarget, OrnamentFeature, Strategy, SymbolFeature,
};

use crate::config::{ModelConfig, PositionalMode};
use crate::seq2seq::{Binding, ParamStore};
use crate::tensor::{AttnMask, KernelError, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct Mlm {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl Mlm {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Mlm, KernelError> {
        use rand::SeedableRng;
        cfg.validate()?;
        if cfg.ornament_vocab == 0 {
            return Err(KernelError::ShapeMismatch {
                op: "mlm",
                detail: "ornament vocabulary must be non-empty".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden;
        let bound = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
            Tensor::uniform(r, c, 1.0 / (d as f64).sqrt(), rng)
        };
        let mut params = ParamStore::new();
        params.insert("sym_emb", bound(cfg.vocab, d, &mut rng));
        params.insert("orn_emb", bound(cfg.ornament_vocab, d, &mut rng));
        match cfg.positional {
            PositionalMode::BeatCounter => {
                params.insert("gak_emb", bound(cfg.max_gak, d, &mut rng));
                params.insert("jeonggan_emb", bound(cfg.max_jeonggan, d, &mut rng));
                params.insert("subbeat_emb", bound(cfg.max_subbeat, d, &mut rng));
            }
            PositionalMode::Absolute => {
                params.insert("pos_emb", bound(cfg.max_len, d, &mut rng));
            }
        }
        for l in 0..cfg.layers {
            for w in ["wq", "wk", "wv", "wo"] {
                params.insert(format!("blk{}.attn.{}", l, w), bound(d, d, &mut rng));
            }
            params.insert(format!("blk{}.ln1.g", l), Tensor::from_vec(1, d, vec![1.0; d]));
            params.insert(format!("blk{}.ln1.b", l), Tensor::zeros(1, d));
            params.insert(format!("blk{}.ffn.w1", l), bound(d, 4 * d, &mut rng));
            params.insert(format!("blk{}.ffn.b1", l), Tensor::zeros(1, 4 * d));
            params.insert(
                format!("blk{}.ffn.w2", l),
                Tensor::uniform(4 * d, d, 1.0 / (4.0 * d as f64).sqrt(), &mut rng),
            );
            params.insert(format!("blk{}.ffn.b2", l), Tensor::zeros(1, d));
            params.insert(format!("blk{}.ln2.g", l), Tensor::from_vec(1, d, vec![1.0; d]));
            params.insert(format!("blk{}.ln2.b", l), Tensor::zeros(1, d));
        }
        params.insert("sym_head.w", bound(d, cfg.vocab, &mut rng));
        params.insert("sym_head.b", Tensor::zeros(1, cfg.vocab));
        params.insert("orn_head.w", bound(d, cfg.ornament_vocab, &mut rng));
        params.insert("orn_head.b", Tensor::zeros(1, cfg.ornament_vocab));
        Ok(Mlm { cfg, params })
    }
}

/// One masked-grid training example. Targets are per-frame original ids,
/// present only where masking altered that channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmExample {
    pub symbol_ids: Vec<u32>,
    pub ornament_ids: Vec<u32>,
    pub triples: Vec<BeatTriple>,
    pub symbol_targets: Vec<Option<u32>>,
    pub ornament_targets: Vec<Option<u32>>,
}

fn feature_ids(
    grid: &FrameGrid,
    vocab: &FrameVocab,
) -> Result<(Vec<u32>, Vec<u32>), KernelError> {
    let mut symbol_ids = Vec::with_capacity(grid.frames.len());
    let mut ornament_ids = Vec::with_capacity(grid.frames.len());
    for frame in &grid.frames {
        symbol_ids.push(vocab.symbol_id(&frame.symbol).ok_or_else(|| {
            KernelError::Checkpoint(format!("symbol {:?} missing from frame vocab", frame.symbol))
        })?);
        ornament_ids.push(vocab.ornament_id(&frame.ornament).ok_or_else(|| {
            KernelError::Checkpoint(format!(
                "ornament {:?} missing from frame vocab",
                frame.ornament
            ))
        })?);
    }
    Ok((symbol_ids, ornament_ids))
}

/// Which channels a masking strategy supervises.
fn strategy_channels(strategy: Strategy) -> (bool, bool) {
    match strategy {
        Strategy::FrameMask | Strategy::JeongganMask => (true, true),
        Strategy::OrnamentMask => (false, true),
        _ => (true, false),
    }
}

pub fn example_from_masked(
    masked: &FrameGrid,
    targets: &[MaskTarget],
    vocab: &FrameVocab,
) -> Result<MlmExample, KernelError> {
    let (symbol_ids, ornament_ids) = feature_ids(masked, vocab)?;
    let mut symbol_targets = vec![None; masked.frames.len()];
    let mut ornament_targets = vec![None; masked.frames.len()];
    for target in targets {
        let (sym, orn) = strategy_channels(target.strategy);
        if sym {
            symbol_targets[target.frame] = vocab.symbol_id(&target.original.symbol);
        }
        if orn {
            ornament_targets[target.frame] = vocab.ornament_id(&target.original.ornament);
        }
    }
    Ok(MlmExample {
        symbol_ids,
        ornament_ids,
        triples: masked.beat_triples(),
        symbol_targets,
        ornament_targets,
    })
}

pub fn mlm_forward(
    model: &Mlm,
    tape: &mut Tape,
    bind: &Binding,
    example: &MlmExample,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, Var), KernelError> {
    let params = &model.params;
    let cfg = &model.cfg;
    let sym_ids: Vec<usize> = example.symbol_ids.iter().map(|v| *v as usize).collect();
    let orn_ids: Vec<usize> = example.ornament_ids.iter().map(|v| *v as usize).collect();

    let mut x = tape.embedding(bind.var(params, "sym_emb"), &sym_ids)?;
    let e = tape.embedding(bind.var(params, "orn_emb"), &orn_ids)?;
    x = tape.add(x, e)?;
    match cfg.positional {
        PositionalMode::BeatCounter => {
            let gak: Vec<usize> = example.triples.iter().map(|t| t.gak.min(cfg.max_gak - 1)).collect();
            let jg: Vec<usize> =
                example.triples.iter().map(|t| t.jeonggan.min(cfg.max_jeonggan - 1)).collect();
            let sub: Vec<usize> =
                example.triples.iter().map(|t| t.subbeat.min(cfg.max_subbeat - 1)).collect();
            let e = tape.embedding(bind.var(params, "gak_emb"), &gak)?;
            x = tape.add(x, e)?;
            let e = tape.embedding(bind.var(params, "jeonggan_emb"), &jg)?;
            x = tape.add(x, e)?;
            let e = tape.embedding(bind.var(params, "subbeat_emb"), &sub)?;
            x = tape.add(x, e)?;
        }
        PositionalMode::Absolute => {
            let pos: Vec<usize> = (0..sym_ids.len()).collect();
            let e = tape.embedding(bind.var(params, "pos_emb"), &pos)?;
            x = tape.add(x, e)?;
        }
    }
    if train {
        x = tape.dropout(x, cfg.dropout, rng);
    }

    for l in 0..cfg.layers {
        let q = tape.matmul(x, bind.var(params, &format!("blk{}.attn.wq", l)))?;
        let k = tape.matmul(x, bind.var(params, &format!("blk{}.attn.wk", l)))?;
        let v = tape.matmul(x, bind.var(params, &format!("blk{}.attn.wv", l)))?;
        // bidirectional: no causal mask
        let a = tape.attention(q, k, v, cfg.heads, &AttnMask::None)?;
        let o = tape.matmul(a, bind.var(params, &format!("blk{}.attn.wo", l)))?;
        let o = if train { tape.dropout(o, cfg.dropout, rng) } else { o };
        let r = tape.add(x, o)?;
        x = tape.layer_norm(
            r,
            bind.var(params, &format!("blk{}.ln1.g", l)),
            bind.var(params, &format!("blk{}.ln1.b", l)),
        )?;
        let h = tape.matmul(x, bind.var(params, &format!("blk{}.ffn.w1", l)))?;
        let h = tape.add_row(h, bind.var(params, &format!("blk{}.ffn.b1", l)))?;
        let h = tape.relu(h);
        let o = tape.matmul(h, bind.var(params, &format!("blk{}.ffn.w2", l)))?;
        let o = tape.add_row(o, bind.var(params, &format!("blk{}.ffn.b2", l)))?;
        let o = if train { tape.dropout(o, cfg.dropout, rng) } else { o };
        let r = tape.add(x, o)?;
        x = tape.layer_norm(
            r,
            bind.var(params, &format!("blk{}.ln2.g", l)),
            bind.var(params, &format!("blk{}.ln2.b", l)),
        )?;
    }

    let sym_logits = tape.matmul(x, bind.var(params, "sym_head.w"))?;
    let sym_logits = tape.add_row(sym_logits, bind.var(params, "sym_head.b"))?;
    let orn_logits = tape.matmul(x, bind.var(params, "orn_head.w"))?;
    let orn_logits = tape.add_row(orn_logits, bind.var(params, "orn_head.b"))?;
    Ok((sym_logits, orn_logits))
}

/// Loss over masked slots of both channels plus (correct, counted) across
/// them.
pub fn mlm_loss(
    model: &Mlm,
    tape: &mut Tape,
    bind: &Binding,
    example: &MlmExample,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, usize, usize), KernelError> {
    let (sym_logits, orn_logits) = mlm_forward(model, tape, bind, example, train, rng)?;
    let sym_targets: Vec<Option<usize>> =
        example.symbol_targets.iter().map(|t| t.map(|v| v as usize)).collect();
    let orn_targets: Vec<Option<usize>> =
        example.ornament_targets.iter().map(|t| t.map(|v| v as usize)).collect();

    let (mut correct, mut counted) = (0usize, 0usize);
    for (logits, targets, width) in [
        (sym_logits, &sym_targets, model.cfg.vocab),
        (orn_logits, &orn_targets, model.cfg.ornament_vocab),
    ] {
        let values = tape.value(logits);
        for (i, target) in targets.iter().enumerate() {
            if let Some(t) = target {
                counted += 1;
                let row = &values.data[i * width..(i + 1) * width];
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap();
                if argmax == *t {
                    correct += 1;
                }
            }
        }
    }

    let sym_loss = tape.cross_entropy(sym_logits, &sym_targets)?;
    let orn_loss = tape.cross_entropy(orn_logits, &orn_targets)?;
    let loss = tape.add(sym_loss, orn_loss)?;
    Ok((loss, correct, counted))
}

/// Single-pass infilling: every masked slot is replaced by the head argmax
/// from one bidirectional forward.
pub fn mlm_infill(
    model: &Mlm,
    vocab: &FrameVocab,
    grid: &FrameGrid,
) -> Result<FrameGrid, KernelError> {
    use rand::SeedableRng;
    let (symbol_ids, ornament_ids) = feature_ids(grid, vocab)?;
    let example = MlmExample {
        symbol_ids,
        ornament_ids,
        triples: grid.beat_triples(),
        symbol_targets: vec![None; grid.frames.len()],
        ornament_targets: vec![None; grid.frames.len()],
    };
    let mut tape = Tape::new();
    let bind = model.params.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (sym_logits, orn_logits) = mlm_forward(model, &mut tape, &bind, &example, false, &mut rng)?;

    let mask_sym = vocab.symbol_id(&SymbolFeature::Mask);
    let mask_orn = vocab.ornament_id(&OrnamentFeature::Mask);
    let sym_values = tape.value(sym_logits).clone();
    let orn_values = tape.value(orn_logits).clone();

    let mut frames: Vec<Frame> = grid.frames.clone();
    for (i, frame) in frames.iter_mut().enumerate() {
        if frame.symbol == SymbolFeature::Mask {
            let row = &sym_values.data[i * model.cfg.vocab..(i + 1) * model.cfg.vocab];
            let pick = best_excluding(row, mask_sym.map(|v| v as usize));
            frame.symbol = vocab
                .symbol(pick as u32)
                .cloned()
                .ok_or_else(|| KernelError::Checkpoint("symbol id out of vocab".into()))?;
        }
        if frame.ornament == OrnamentFeature::Mask {
            let row =
                &orn_values.data[i * model.cfg.ornament_vocab..(i + 1) * model.cfg.ornament_vocab];
            let pick = best_excluding(row, mask_orn.map(|v| v as usize));
            frame.ornament = vocab
                .ornament(pick as u32)
                .cloned()
                .ok_or_else(|| KernelError::Checkpoint("ornament id out of vocab".into()))?;
        }
    }
    Ok(FrameGrid { frames, gak_shape: grid.gak_shape.clone() })
}

fn best_excluding(row: &[f64], banned: Option<usize>) -> usize {
    row.iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != banned)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use jgb_core::pianoroll::{apply_masking, to_frames, MaskingPolicy};
    use jgb_core::synth::{random_score, SynthConfig};
    use rand::SeedableRng;

    fn setup() -> (Mlm, FrameVocab, MlmExample, FrameGrid) {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let score = random_score(
            &mut rng,
            &SynthConfig { avoid_quarters: true, ornament_prob: 0.4, ..SynthConfig::default() },
        );
        let vocab = FrameVocab::build(&score.parts);
        let grid = to_frames(&score.parts[0]).unwrap();
        let policy = MaskingPolicy { seed: 3, ..MaskingPolicy::default() };
        let (masked, targets, _) = apply_masking(&grid, &policy, &vocab);
        let example = example_from_masked(&masked, &targets, &vocab).unwrap();
        let mut cfg = ModelConfig::desk(vocab.symbols().len());
        cfg.ornament_vocab = vocab.ornaments().len();
        cfg.layers = 1;
        cfg.hidden = 16;
        cfg.heads = 2;
        cfg.max_subbeat = 6;
        let model = Mlm::new(cfg, 4).unwrap();
        (model, vocab, example, masked)
    }

    #[test]
    fn forward_emits_two_normalized_heads() {
        let (model, _, example, _) = setup();
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (s, o) = mlm_forward(&model, &mut tape, &bind, &example, false, &mut rng).unwrap();
        let sp = tape.softmax_rows(s);
        let op = tape.softmax_rows(o);
        for (probs, width) in [(sp, model.cfg.vocab), (op, model.cfg.ornament_vocab)] {
            let v = tape.value(probs);
            for i in 0..example.symbol_ids.len() {
                let sum: f64 = (0..width).map(|j| v.at(i, j)).sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bidirectional_context_flows_backwards() {
        // changing a later frame must be able to change earlier outputs
        let (model, _, example, _) = setup();
        let run = |ex: &MlmExample| {
            let mut tape = Tape::new();
            let bind = model.params.bind(&mut tape);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (s, _) = mlm_forward(&model, &mut tape, &bind, ex, false, &mut rng).unwrap();
            tape.value(s).data.clone()
        };
        let a = run(&example);
        let mut altered = example.clone();
        let last = altered.symbol_ids.len() - 1;
        altered.symbol_ids[last] = (altered.symbol_ids[last] + 1) % model.cfg.vocab as u32;
        let b = run(&altered);
        assert_ne!(a[..model.cfg.vocab], b[..model.cfg.vocab]);
    }

    #[test]
    fn infill_clears_every_mask() {
        let (model, vocab, _, masked) = setup();
        let filled = mlm_infill(&model, &vocab, &masked).unwrap();
        for frame in &filled.frames {
            assert_ne!(frame.symbol, SymbolFeature::Mask);
            assert_ne!(frame.ornament, OrnamentFeature::Mask);
        }
        assert_eq!(filled.gak_shape, masked.gak_shape);
    }

    #[test]
    fn loss_counts_only_masked_slots() {
        let (model, _, example, _) = setup();
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, _, counted) = mlm_loss(&model, &mut tape, &bind, &example, false, &mut rng).unwrap();
        let want = example.symbol_targets.iter().flatten().count()
            + example.ornament_targets.iter().flatten().count();
        assert_eq!(counted, want);
        assert!(want > 0);
    }
}
