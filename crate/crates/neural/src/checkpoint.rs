//! Checkpoint format: versioned header, key=value config block, vocabulary
//! block(s), then a named tensor table with raw little-endian f32 data.
//!
//! ```text
//! magic "JGBNN\0"  u32 version  u8 kind (1 seq2seq, 2 mlm)
//! u32 len + config kv bytes
//! kind 1: u32 count + (u32 len + token text)*            (token vocabulary)
//! kind 2: two such blocks                                 (symbol, ornament)
//! u32 tensor count + (u32 len + name, u32 ndim, u32 dims.., f32 data..)*
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use jgb_core::codecs::{token_text, vocab_from_text, vocab_to_text, Vocabulary};
use jgb_core::pianoroll::{FrameVocab, OrnamentFeature, SymbolFeature};
use jgb_core::notation::PitchSymbol;

use crate::config::ModelConfig;
use crate::mlm::Mlm;
use crate::seq2seq::{ParamStore, Seq2Seq};
use crate::tensor::{KernelError, Tensor};

const MAGIC: &[u8; 6] = b"JGBNN\0";
const VERSION: u32 = 1;
pub const KIND_SEQ2SEQ: u8 = 1;
pub const KIND_MLM: u8 = 2;

fn err(msg: impl Into<String>) -> KernelError {
    KernelError::Checkpoint(msg.into())
}

fn write_block(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32, KernelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| err(format!("truncated checkpoint: {}", e)))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_block(r: &mut Cursor<&[u8]>) -> Result<Vec<u8>, KernelError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| err(format!("truncated checkpoint: {}", e)))?;
    Ok(buf)
}

fn write_tensors(out: &mut Vec<u8>, params: &ParamStore) {
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        write_block(out, name.as_bytes());
        out.extend_from_slice(&(tensor.shape.len() as u32).to_le_bytes());
        for dim in &tensor.shape {
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        for value in &tensor.data {
            out.extend_from_slice(&(*value as f32).to_le_bytes());
        }
    }
}

fn read_tensors(r: &mut Cursor<&[u8]>) -> Result<ParamStore, KernelError> {
    let count = read_u32(r)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name = String::from_utf8(read_block(r)?).map_err(|_| err("bad tensor name"))?;
        let ndim = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf).map_err(|e| err(format!("truncated tensor: {}", e)))?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        if shape.len() != 2 {
            return Err(err(format!("tensor {} has rank {}", name, shape.len())));
        }
        params.insert(name, Tensor::from_vec(shape[0], shape[1], data));
    }
    Ok(params)
}

fn header(kind: u8, cfg: &ModelConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    write_block(&mut out, cfg.to_kv().as_bytes());
    out
}

fn read_header(r: &mut Cursor<&[u8]>) -> Result<(u8, ModelConfig), KernelError> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| err("not a checkpoint file"))?;
    if &magic != MAGIC {
        return Err(err("bad magic"));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(err(format!("unsupported checkpoint version {}", version)));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).map_err(|_| err("truncated header"))?;
    let cfg_text = String::from_utf8(read_block(r)?).map_err(|_| err("bad config block"))?;
    Ok((kind[0], ModelConfig::from_kv(&cfg_text)?))
}

pub fn save_seq2seq(path: &Path, model: &Seq2Seq, vocab: &Vocabulary) -> Result<(), KernelError> {
    let mut out = header(KIND_SEQ2SEQ, &model.cfg);
    write_block(&mut out, vocab_to_text(vocab).as_bytes());
    write_tensors(&mut out, &model.params);
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| err(format!("{}: {}", path.display(), e)))
}

pub fn load_seq2seq(path: &Path) -> Result<(Seq2Seq, Vocabulary), KernelError> {
    let bytes = fs::read(path).map_err(|e| err(format!("{}: {}", path.display(), e)))?;
    let mut r = Cursor::new(bytes.as_slice());
    let (kind, cfg) = read_header(&mut r)?;
    if kind != KIND_SEQ2SEQ {
        return Err(err("checkpoint holds a different model kind"));
    }
    let vocab_text = String::from_utf8(read_block(&mut r)?).map_err(|_| err("bad vocab block"))?;
    let vocab = vocab_from_text(&vocab_text)?;
    let params = read_tensors(&mut r)?;
    Ok((Seq2Seq { cfg, params }, vocab))
}

fn frame_vocab_to_text(vocab: &FrameVocab) -> (String, String) {
    let sym = vocab
        .symbols()
        .iter()
        .map(|s| match s {
            SymbolFeature::Continue => "_".to_string(),
            SymbolFeature::Mask => "<mask>".to_string(),
            SymbolFeature::Rest => "x".to_string(),
            SymbolFeature::Pitch(p) => p.token(),
            SymbolFeature::TimedSigimsae(id) => format!("s:{}", id),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let orn = vocab
        .ornaments()
        .iter()
        .map(|o| match o {
            OrnamentFeature::None => "_".to_string(),
            OrnamentFeature::Mask => "<mask>".to_string(),
            OrnamentFeature::Ornament(id) => format!("~{}", id),
        })
        .collect::<Vec<_>>()
        .join("\n");
    (sym, orn)
}

fn frame_vocab_from_text(sym: &str, orn: &str) -> Result<FrameVocab, KernelError> {
    let mut symbols = Vec::new();
    for line in sym.lines() {
        symbols.push(match line {
            "_" => SymbolFeature::Continue,
            "<mask>" => SymbolFeature::Mask,
            "x" => SymbolFeature::Rest,
            other => {
                if let Some(id) = other.strip_prefix("s:") {
                    SymbolFeature::TimedSigimsae(id.to_string())
                } else if let Some(p) = PitchSymbol::parse_token(other) {
                    SymbolFeature::Pitch(p)
                } else {
                    return Err(err(format!("bad symbol feature '{}'", other)));
                }
            }
        });
    }
    let mut ornaments = Vec::new();
    for line in orn.lines() {
        ornaments.push(match line {
            "_" => OrnamentFeature::None,
            "<mask>" => OrnamentFeature::Mask,
            other => match other.strip_prefix('~') {
                Some(id) => OrnamentFeature::Ornament(id.to_string()),
                None => return Err(err(format!("bad ornament feature '{}'", other))),
            },
        });
    }
    Ok(FrameVocab::from_lists(symbols, ornaments))
}

pub fn save_mlm(path: &Path, model: &Mlm, vocab: &FrameVocab) -> Result<(), KernelError> {
    let mut out = header(KIND_MLM, &model.cfg);
    let (sym, orn) = frame_vocab_to_text(vocab);
    write_block(&mut out, sym.as_bytes());
    write_block(&mut out, orn.as_bytes());
    write_tensors(&mut out, &model.params);
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| err(format!("{}: {}", path.display(), e)))
}

pub fn load_mlm(path: &Path) -> Result<(Mlm, FrameVocab), KernelError> {
    let bytes = fs::read(path).map_err(|e| err(format!("{}: {}", path.display(), e)))?;
    let mut r = Cursor::new(bytes.as_slice());
    let (kind, cfg) = read_header(&mut r)?;
    if kind != KIND_MLM {
        return Err(err("checkpoint holds a different model kind"));
    }
    let sym = String::from_utf8(read_block(&mut r)?).map_err(|_| err("bad symbol vocab"))?;
    let orn = String::from_utf8(read_block(&mut r)?).map_err(|_| err("bad ornament vocab"))?;
    let vocab = frame_vocab_from_text(&sym, &orn)?;
    let params = read_tensors(&mut r)?;
    Ok((Mlm { cfg, params }, vocab))
}

/// Identifies the model kind without loading tensors.
pub fn checkpoint_kind(path: &Path) -> Result<u8, KernelError> {
    let bytes = fs::read(path).map_err(|e| err(format!("{}: {}", path.display(), e)))?;
    let mut r = Cursor::new(bytes.as_slice());
    let (kind, _) = read_header(&mut r)?;
    Ok(kind)
}

/// Token-text spelling used in error messages.
pub fn describe_token(t: &jgb_core::codecs::Token) -> String {
    token_text(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use jgb_core::codecs::{build_vocab, Scheme};
    use jgb_core::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seq2seq_checkpoint_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(400);
        let score = random_score(&mut rng, &SynthConfig::default());
        let vocab = build_vocab(&score.parts, Scheme::Jg);
        let mut cfg = ModelConfig::desk(vocab.len());
        cfg.layers = 1;
        cfg.hidden = 16;
        let model = Seq2Seq::new(cfg, 5).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_seq2seq(&path, &model, &vocab).unwrap();
        assert_eq!(checkpoint_kind(&path).unwrap(), KIND_SEQ2SEQ);

        let (loaded, loaded_vocab) = load_seq2seq(&path).unwrap();
        assert_eq!(loaded.cfg, model.cfg);
        assert_eq!(loaded_vocab, vocab);
        for ((na, ta), (nb, tb)) in model.params.iter().zip(loaded.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.shape, tb.shape);
            for (a, b) in ta.data.iter().zip(&tb.data) {
                assert_eq!(*a as f32, *b as f32, "f32 storage must be exact");
            }
        }

        // a second save of the loaded model is byte-identical
        let path2 = dir.path().join("model2.ckpt");
        save_seq2seq(&path2, &loaded, &loaded_vocab).unwrap();
        let (reloaded, _) = load_seq2seq(&path2).unwrap();
        for ((_, ta), (_, tb)) in loaded.params.iter().zip(reloaded.params.iter()) {
            assert_eq!(ta.data, tb.data);
        }
    }

    #[test]
    fn mlm_checkpoint_round_trips() {
        use jgb_core::pianoroll::FrameVocab;
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        let score = random_score(
            &mut rng,
            &SynthConfig { ornament_prob: 0.5, ..SynthConfig::default() },
        );
        let vocab = FrameVocab::build(&score.parts);
        let mut cfg = ModelConfig::desk(vocab.symbols().len());
        cfg.ornament_vocab = vocab.ornaments().len();
        cfg.layers = 1;
        cfg.hidden = 16;
        cfg.max_subbeat = 6;
        let model = Mlm::new(cfg, 6).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlm.ckpt");
        save_mlm(&path, &model, &vocab).unwrap();
        assert_eq!(checkpoint_kind(&path).unwrap(), KIND_MLM);
        let (loaded, loaded_vocab) = load_mlm(&path).unwrap();
        assert_eq!(loaded.cfg, model.cfg);
        assert_eq!(loaded_vocab, vocab);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_seq2seq(&path).is_err());
    }
}
