//! Encoder-decoder transformer for orchestral part generation.
//!
//! Encoder tokens sum three embeddings: token id, instrument id and the beat
//! counter (gak, jeonggan, sub-beat), standing in for positional encoding.
//! The decoder is conditioned on the target instrument through its start
//! token and keeps its own beat counter, computed online from the tokens it
//! has emitted so far. An absolute-position mode replaces the three counters
//! with one learned position table for ablation runs.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use jgb_core::codecs::{
    annotate_beats, encode_jg, encode_remi, BeatCursor, BeatTriple, Scheme, Special, Token,
    TokenStream, Vocabulary,
};
use jgb_core::corpus::Chunk;
use jgb_core::notation::{Instrument, Part};

use crate::config::{ModelConfig, PositionalMode};
use crate::tensor::{AttnMask, KernelError, Tape, Tensor, Var};

/// Named parameter tensors with stable iteration order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {}", name);
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.entries[self.index[name]].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Leafs every parameter onto a fresh tape.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        let vars = self.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
        Binding { vars }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore::new()
    }
}

/// Tape handles for every parameter of a store, in store order.
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, store: &ParamStore, name: &str) -> Var {
        self.vars[store.index[name]]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

fn uniform_fan_in(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(rows, cols, 1.0 / (fan_in as f64).sqrt(), rng)
}

fn insert_layer_norm(params: &mut ParamStore, name: &str, d: usize) {
    params.insert(format!("{}.g", name), Tensor::from_vec(1, d, vec![1.0; d]));
    params.insert(format!("{}.b", name), Tensor::zeros(1, d));
}

fn insert_attention(params: &mut ParamStore, name: &str, d: usize, rng: &mut ChaCha8Rng) {
    for w in ["wq", "wk", "wv", "wo"] {
        params.insert(format!("{}.{}", name, w), uniform_fan_in(d, d, d, rng));
    }
}

fn insert_ffn(params: &mut ParamStore, name: &str, d: usize, rng: &mut ChaCha8Rng) {
    params.insert(format!("{}.w1", name), uniform_fan_in(d, 4 * d, d, rng));
    params.insert(format!("{}.b1", name), Tensor::zeros(1, 4 * d));
    params.insert(format!("{}.w2", name), uniform_fan_in(4 * d, d, 4 * d, rng));
    params.insert(format!("{}.b2", name), Tensor::zeros(1, d));
}

fn insert_positional(params: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    let d = cfg.hidden;
    match cfg.positional {
        PositionalMode::BeatCounter => {
            params.insert("gak_emb", uniform_fan_in(cfg.max_gak, d, d, rng));
            params.insert("jeonggan_emb", uniform_fan_in(cfg.max_jeonggan, d, d, rng));
            params.insert("subbeat_emb", uniform_fan_in(cfg.max_subbeat, d, d, rng));
        }
        PositionalMode::Absolute => {
            params.insert("pos_emb", uniform_fan_in(cfg.max_len, d, d, rng));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Seq2Seq {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl Seq2Seq {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Seq2Seq, KernelError> {
        use rand::SeedableRng;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden;
        let mut params = ParamStore::new();
        params.insert("tok_emb", uniform_fan_in(cfg.vocab, d, d, &mut rng));
        params.insert("instr_emb", uniform_fan_in(Instrument::ALL.len(), d, d, &mut rng));
        insert_positional(&mut params, &cfg, &mut rng);
        for l in 0..cfg.layers {
            insert_attention(&mut params, &format!("enc{}.attn", l), d, &mut rng);
            insert_layer_norm(&mut params, &format!("enc{}.ln1", l), d);
            insert_ffn(&mut params, &format!("enc{}.ffn", l), d, &mut rng);
            insert_layer_norm(&mut params, &format!("enc{}.ln2", l), d);
        }
        for l in 0..cfg.layers {
            insert_attention(&mut params, &format!("dec{}.self", l), d, &mut rng);
            insert_layer_norm(&mut params, &format!("dec{}.ln1", l), d);
            insert_attention(&mut params, &format!("dec{}.cross", l), d, &mut rng);
            insert_layer_norm(&mut params, &format!("dec{}.ln2", l), d);
            insert_ffn(&mut params, &format!("dec{}.ffn", l), d, &mut rng);
            insert_layer_norm(&mut params, &format!("dec{}.ln3", l), d);
        }
        params.insert("out.w", uniform_fan_in(d, cfg.vocab, d, &mut rng));
        params.insert("out.b", Tensor::zeros(1, cfg.vocab));
        Ok(Seq2Seq { cfg, params })
    }
}

/// One tokenized input sequence: ids aligned with instrument ids and triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqInput {
    pub tokens: Vec<u32>,
    pub instruments: Vec<u32>,
    pub triples: Vec<BeatTriple>,
}

impl SeqInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn concat(inputs: &[SeqInput]) -> SeqInput {
        let mut out = SeqInput { tokens: Vec::new(), instruments: Vec::new(), triples: Vec::new() };
        for input in inputs {
            out.tokens.extend_from_slice(&input.tokens);
            out.instruments.extend_from_slice(&input.instruments);
            out.triples.extend_from_slice(&input.triples);
        }
        out
    }
}

/// Encodes a part for the encoder side under the vocabulary's scheme.
/// Structural schemes only; the barless scheme has no counter anchors.
pub fn part_to_seq_input(part: &Part, vocab: &Vocabulary) -> Result<SeqInput, KernelError> {
    let stream = encode_for_scheme(part, vocab.scheme())?;
    let triples = annotate_beats(&stream)?;
    let tokens = stream_ids(&stream, vocab)?;
    let instrument_id = part.instrument.index() as u32;
    Ok(SeqInput {
        instruments: vec![instrument_id; tokens.len()],
        tokens,
        triples,
    })
}

pub fn encode_for_scheme(part: &Part, scheme: Scheme) -> Result<TokenStream, KernelError> {
    match scheme {
        Scheme::Jg => Ok(encode_jg(part)),
        Scheme::Remi => Ok(encode_remi(part)),
        Scheme::Abc => Err(KernelError::Checkpoint(
            "the barless scheme has no structural tokens to count beats with".into(),
        )),
    }
}

fn stream_ids(stream: &TokenStream, vocab: &Vocabulary) -> Result<Vec<u32>, KernelError> {
    stream
        .tokens
        .iter()
        .map(|t| {
            vocab.id(t).ok_or_else(|| {
                KernelError::Checkpoint(format!(
                    "token {} missing from vocabulary",
                    jgb_core::codecs::token_text(t)
                ))
            })
        })
        .collect()
}

/// One teacher-forcing example. Decoder tokens start with the target
/// instrument special and end with the end token.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqExample {
    pub encoder: SeqInput,
    pub decoder_tokens: Vec<u32>,
    pub decoder_triples: Vec<BeatTriple>,
}

pub fn example_from_chunk(chunk: &Chunk, vocab: &Vocabulary) -> Result<Seq2SeqExample, KernelError> {
    let inputs: Vec<SeqInput> = chunk
        .inputs
        .iter()
        .map(|p| part_to_seq_input(p, vocab))
        .collect::<Result<_, _>>()?;
    let encoder = SeqInput::concat(&inputs);

    let target_stream = encode_for_scheme(&chunk.target, vocab.scheme())?;
    let mut tokens = vec![Token::Special(Special::Instrument(chunk.target.instrument))];
    tokens.extend(target_stream.tokens.iter().cloned());
    tokens.push(Token::Special(Special::End));

    let mut cursor = BeatCursor::new();
    let mut triples = Vec::with_capacity(tokens.len());
    for token in &tokens {
        triples.push(cursor.observe(token)?);
    }
    let stream = TokenStream::new(vocab.scheme(), tokens);
    Ok(Seq2SeqExample {
        encoder,
        decoder_tokens: stream_ids(&stream, vocab)?,
        decoder_triples: triples,
    })
}

/// Sum of token/instrument/counter embeddings for a whole sequence; the
/// model's replacement for positional encoding.
pub fn note_embedding(
    tape: &mut Tape,
    params: &ParamStore,
    bind: &Binding,
    cfg: &ModelConfig,
    tokens: &[u32],
    instruments: Option<&[u32]>,
    triples: &[BeatTriple],
) -> Result<Var, KernelError> {
    let ids: Vec<usize> = tokens.iter().map(|t| *t as usize).collect();
    let mut x = tape.embedding(bind.var(params, "tok_emb"), &ids)?;
    if let Some(instruments) = instruments {
        let ids: Vec<usize> = instruments.iter().map(|i| *i as usize).collect();
        let e = tape.embedding(bind.var(params, "instr_emb"), &ids)?;
        x = tape.add(x, e)?;
    }
    match cfg.positional {
        PositionalMode::BeatCounter => {
            let gak: Vec<usize> = triples.iter().map(|t| t.gak).collect();
            let jeonggan: Vec<usize> = triples.iter().map(|t| t.jeonggan).collect();
            let subbeat: Vec<usize> = triples.iter().map(|t| t.subbeat).collect();
            let e = tape.embedding(bind.var(params, "gak_emb"), &gak)?;
            x = tape.add(x, e)?;
            let e = tape.embedding(bind.var(params, "jeonggan_emb"), &jeonggan)?;
            x = tape.add(x, e)?;
            let e = tape.embedding(bind.var(params, "subbeat_emb"), &subbeat)?;
            x = tape.add(x, e)?;
        }
        PositionalMode::Absolute => {
            let pos: Vec<usize> = (0..tokens.len()).collect();
            let e = tape.embedding(bind.var(params, "pos_emb"), &pos)?;
            x = tape.add(x, e)?;
        }
    }
    Ok(x)
}

struct LayerCtx<'a> {
    params: &'a ParamStore,
    bind: &'a Binding,
    heads: usize,
    dropout: f64,
}

impl<'a> LayerCtx<'a> {
    fn v(&self, name: &str) -> Var {
        self.bind.var(self.params, name)
    }

    fn attn_block(
        &self,
        tape: &mut Tape,
        name: &str,
        x: Var,
        kv: Var,
        mask: &AttnMask,
        rng: &mut ChaCha8Rng,
        train: bool,
    ) -> Result<Var, KernelError> {
        let q = tape.matmul(x, self.v(&format!("{}.wq", name)))?;
        let k = tape.matmul(kv, self.v(&format!("{}.wk", name)))?;
        let v = tape.matmul(kv, self.v(&format!("{}.wv", name)))?;
        let a = tape.attention(q, k, v, self.heads, mask)?;
        let o = tape.matmul(a, self.v(&format!("{}.wo", name)))?;
        Ok(if train { tape.dropout(o, self.dropout, rng) } else { o })
    }

    fn ffn_block(
        &self,
        tape: &mut Tape,
        name: &str,
        x: Var,
        rng: &mut ChaCha8Rng,
        train: bool,
    ) -> Result<Var, KernelError> {
        let h = tape.matmul(x, self.v(&format!("{}.w1", name)))?;
        let h = tape.add_row(h, self.v(&format!("{}.b1", name)))?;
        let h = tape.relu(h);
        let o = tape.matmul(h, self.v(&format!("{}.w2", name)))?;
        let o = tape.add_row(o, self.v(&format!("{}.b2", name)))?;
        Ok(if train { tape.dropout(o, self.dropout, rng) } else { o })
    }

    fn norm(&self, tape: &mut Tape, name: &str, x: Var) -> Result<Var, KernelError> {
        tape.layer_norm(x, self.v(&format!("{}.g", name)), self.v(&format!("{}.b", name)))
    }
}

pub fn encoder_forward(
    model: &Seq2Seq,
    tape: &mut Tape,
    bind: &Binding,
    input: &SeqInput,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var, KernelError> {
    let ctx = LayerCtx {
        params: &model.params,
        bind,
        heads: model.cfg.heads,
        dropout: model.cfg.dropout,
    };
    let mut x = note_embedding(
        tape,
        &model.params,
        bind,
        &model.cfg,
        &input.tokens,
        Some(&input.instruments),
        &input.triples,
    )?;
    if train {
        x = tape.dropout(x, model.cfg.dropout, rng);
    }
    for l in 0..model.cfg.layers {
        let sa = ctx.attn_block(tape, &format!("enc{}.attn", l), x, x, &AttnMask::None, rng, train)?;
        let r = tape.add(x, sa)?;
        x = ctx.norm(tape, &format!("enc{}.ln1", l), r)?;
        let ff = ctx.ffn_block(tape, &format!("enc{}.ffn", l), x, rng, train)?;
        let r = tape.add(x, ff)?;
        x = ctx.norm(tape, &format!("enc{}.ln2", l), r)?;
    }
    Ok(x)
}

pub fn decoder_forward(
    model: &Seq2Seq,
    tape: &mut Tape,
    bind: &Binding,
    memory: Var,
    tokens: &[u32],
    triples: &[BeatTriple],
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var, KernelError> {
    let ctx = LayerCtx {
        params: &model.params,
        bind,
        heads: model.cfg.heads,
        dropout: model.cfg.dropout,
    };
    let mut x =
        note_embedding(tape, &model.params, bind, &model.cfg, tokens, None, triples)?;
    if train {
        x = tape.dropout(x, model.cfg.dropout, rng);
    }
    for l in 0..model.cfg.layers {
        let sa =
            ctx.attn_block(tape, &format!("dec{}.self", l), x, x, &AttnMask::Causal, rng, train)?;
        let r = tape.add(x, sa)?;
        x = ctx.norm(tape, &format!("dec{}.ln1", l), r)?;
        let ca =
            ctx.attn_block(tape, &format!("dec{}.cross", l), x, memory, &AttnMask::None, rng, train)?;
        let r = tape.add(x, ca)?;
        x = ctx.norm(tape, &format!("dec{}.ln2", l), r)?;
        let ff = ctx.ffn_block(tape, &format!("dec{}.ffn", l), x, rng, train)?;
        let r = tape.add(x, ff)?;
        x = ctx.norm(tape, &format!("dec{}.ln3", l), r)?;
    }
    let logits = tape.matmul(x, ctx.v("out.w"))?;
    tape.add_row(logits, ctx.v("out.b"))
}

/// Teacher-forced loss over one example, plus (correct, counted) next-token
/// prediction counts.
pub fn loss_on_example(
    model: &Seq2Seq,
    tape: &mut Tape,
    bind: &Binding,
    example: &Seq2SeqExample,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, usize, usize), KernelError> {
    let n = example.decoder_tokens.len();
    if n < 2 {
        return Err(KernelError::ShapeMismatch {
            op: "loss_on_example",
            detail: "decoder needs at least two tokens".into(),
        });
    }
    let memory = encoder_forward(model, tape, bind, &example.encoder, train, rng)?;
    let inputs = &example.decoder_tokens[..n - 1];
    let triples = &example.decoder_triples[..n - 1];
    let logits = decoder_forward(model, tape, bind, memory, inputs, triples, train, rng)?;
    let targets: Vec<Option<usize>> =
        example.decoder_tokens[1..].iter().map(|t| Some(*t as usize)).collect();

    let mut correct = 0;
    let values = tape.value(logits);
    for (i, target) in targets.iter().enumerate() {
        let row = &values.data[i * model.cfg.vocab..(i + 1) * model.cfg.vocab];
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .unwrap();
        if Some(argmax) == *target {
            correct += 1;
        }
    }
    let loss = tape.cross_entropy(logits, &targets)?;
    Ok((loss, correct, targets.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    Greedy,
    TopP { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Content stream: teacher-forced prefix followed by generated tokens.
    pub stream: TokenStream,
    /// Index into `stream.tokens` where generation started.
    pub generated_from: usize,
    pub hit_max_len: bool,
}

/// Autoregressive decoding. The decoder's beat counter advances online from
/// each emitted token, exactly mirroring offline annotation. Decoding stops
/// at the end token, after `stop_after_linebreaks` generated linebreaks, or
/// at `max_len` (flagged).
#[allow(clippy::too_many_arguments)]
pub fn decode_stream(
    model: &Seq2Seq,
    vocab: &Vocabulary,
    encoder_input: &SeqInput,
    target: Instrument,
    prefix: &[Token],
    sampling: Sampling,
    rng: &mut ChaCha8Rng,
    max_len: usize,
    stop_after_linebreaks: Option<usize>,
) -> Result<DecodeOutcome, KernelError> {
    let max_len = max_len.min(model.cfg.max_len);
    let banned: Vec<u32> = vocab
        .tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            matches!(
                t,
                Token::Special(Special::Start)
                    | Token::Special(Special::Pad)
                    | Token::Special(Special::Mask)
                    | Token::Special(Special::Instrument(_))
            )
        })
        .map(|(i, _)| i as u32)
        .collect();

    let mut tokens: Vec<Token> = vec![Token::Special(Special::Instrument(target))];
    tokens.extend(prefix.iter().cloned());
    let mut ids: Vec<u32> = Vec::with_capacity(tokens.len());
    let mut triples: Vec<BeatTriple> = Vec::with_capacity(tokens.len());
    let mut cursor = BeatCursor::new();
    for token in &tokens {
        let id = vocab.id(token).ok_or_else(|| {
            KernelError::Checkpoint(format!(
                "prefix token {} missing from vocabulary",
                jgb_core::codecs::token_text(token)
            ))
        })?;
        ids.push(id);
        triples.push(clamp_triple(cursor.observe(token)?, &model.cfg));
    }

    let generated_from = prefix.len();
    let mut generated_linebreaks = 0usize;
    let mut hit_max_len = false;
    let mut dummy_rng = {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(0)
    };

    loop {
        if ids.len() >= max_len {
            hit_max_len = true;
            break;
        }
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape);
        let memory = encoder_forward(model, &mut tape, &bind, encoder_input, false, &mut dummy_rng)?;
        let logits =
            decoder_forward(model, &mut tape, &bind, memory, &ids, &triples, false, &mut dummy_rng)?;
        let values = tape.value(logits);
        let last = ids.len() - 1;
        let mut row: Vec<f64> =
            values.data[last * model.cfg.vocab..(last + 1) * model.cfg.vocab].to_vec();
        for b in &banned {
            row[*b as usize] = f64::NEG_INFINITY;
        }
        let next_id = match sampling {
            Sampling::Greedy => argmax(&row) as u32,
            Sampling::TopP { p } => sample_top_p(&row, p, rng) as u32,
        };
        let next = vocab
            .token(next_id)
            .ok_or_else(|| KernelError::Checkpoint(format!("sampled id {} out of vocab", next_id)))?
            .clone();
        if matches!(next, Token::Special(Special::End)) {
            break;
        }
        let is_linebreak = matches!(next, Token::LineBreak);
        ids.push(next_id);
        triples.push(clamp_triple(cursor.observe(&next)?, &model.cfg));
        tokens.push(next);
        if is_linebreak {
            generated_linebreaks += 1;
            if let Some(stop) = stop_after_linebreaks {
                if generated_linebreaks >= stop {
                    break;
                }
            }
        }
    }

    // drop the instrument start token; keep prefix + generated content
    let content = tokens.split_off(1);
    Ok(DecodeOutcome {
        stream: TokenStream::new(vocab.scheme(), content),
        generated_from,
        hit_max_len,
    })
}

fn clamp_triple(t: BeatTriple, cfg: &ModelConfig) -> BeatTriple {
    BeatTriple {
        gak: t.gak.min(cfg.max_gak - 1),
        jeonggan: t.jeonggan.min(cfg.max_jeonggan - 1),
        subbeat: t.subbeat.min(cfg.max_subbeat - 1),
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}

fn sample_top_p(logits: &[f64], p: f64, rng: &mut ChaCha8Rng) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<(usize, f64)> =
        logits.iter().enumerate().map(|(i, x)| (i, (x - max).exp())).collect();
    let total: f64 = probs.iter().map(|(_, v)| v).sum();
    for (_, v) in probs.iter_mut() {
        *v /= total;
    }
    probs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let mut kept = 0;
    let mut mass = 0.0;
    for (i, (_, v)) in probs.iter().enumerate() {
        mass += v;
        kept = i + 1;
        if mass >= p {
            break;
        }
    }
    let slice = &probs[..kept];
    let mut dart: f64 = rng.gen_range(0.0..mass);
    for (i, v) in slice {
        dart -= v;
        if dart <= 0.0 {
            return *i;
        }
    }
    slice.last().map(|(i, _)| *i).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use jgb_core::codecs::build_vocab;
    use jgb_core::synth::{random_score, SynthConfig};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tiny_setup() -> (Seq2Seq, Vocabulary, Seq2SeqExample) {
        let mut r = rng(100);
        let score = random_score(
            &mut r,
            &SynthConfig { parts: 3, gaks_min: 4, gaks_max: 4, ..SynthConfig::default() },
        );
        let vocab = build_vocab(&score.parts, Scheme::Jg);
        let chunk = jgb_core::corpus::sample_chunk(&score, &mut r).unwrap();
        let example = example_from_chunk(&chunk, &vocab).unwrap();
        let mut cfg = ModelConfig::desk(vocab.len());
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.hidden = 16;
        let model = Seq2Seq::new(cfg, 1).unwrap();
        (model, vocab, example)
    }

    #[test]
    fn zero_tables_embed_to_zero() {
        let vocab_size = 12;
        let mut cfg = ModelConfig::desk(vocab_size);
        cfg.hidden = 8;
        cfg.heads = 2;
        let mut model = Seq2Seq::new(cfg.clone(), 0).unwrap();
        for (_, t) in model.params.iter_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape);
        let triples = vec![BeatTriple::zero(); 3];
        let x = note_embedding(
            &mut tape,
            &model.params,
            &bind,
            &cfg,
            &[0, 1, 2],
            Some(&[0, 0, 0]),
            &triples,
        )
        .unwrap();
        assert!(tape.value(x).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn changing_only_the_subbeat_shifts_by_the_table_delta() {
        let mut cfg = ModelConfig::desk(12);
        cfg.hidden = 8;
        cfg.heads = 2;
        let model = Seq2Seq::new(cfg.clone(), 3).unwrap();
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape);
        let t0 = BeatTriple { gak: 1, jeonggan: 2, subbeat: 0 };
        let t4 = BeatTriple { gak: 1, jeonggan: 2, subbeat: 4 };
        let a = note_embedding(&mut tape, &model.params, &bind, &cfg, &[5], None, &[t0]).unwrap();
        let b = note_embedding(&mut tape, &model.params, &bind, &cfg, &[5], None, &[t4]).unwrap();
        let table = model.params.get("subbeat_emb");
        for j in 0..cfg.hidden {
            let delta = tape.value(b).at(0, j) - tape.value(a).at(0, j);
            let want = table.at(4, j) - table.at(0, j);
            assert!((delta - want).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_beat_index_errors() {
        let cfg = ModelConfig { max_gak: 2, ..ModelConfig::desk(12) };
        let model = Seq2Seq::new(cfg.clone(), 0).unwrap();
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape);
        let t = BeatTriple { gak: 7, jeonggan: 0, subbeat: 0 };
        assert!(matches!(
            note_embedding(&mut tape, &model.params, &bind, &cfg, &[0], None, &[t]),
            Err(KernelError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn decoder_distributions_normalize() {
        let (model, _vocab, example) = tiny_setup();
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape);
        let mut r = rng(0);
        let memory =
            encoder_forward(&model, &mut tape, &bind, &example.encoder, false, &mut r).unwrap();
        let n = example.decoder_tokens.len() - 1;
        let logits = decoder_forward(
            &model,
            &mut tape,
            &bind,
            memory,
            &example.decoder_tokens[..n],
            &example.decoder_triples[..n],
            false,
            &mut r,
        )
        .unwrap();
        let probs = tape.softmax_rows(logits);
        let v = tape.value(probs);
        for i in 0..n {
            let sum: f64 = (0..model.cfg.vocab).map(|j| v.at(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn causality_future_decoder_inputs_do_not_leak_backwards() {
        let (model, _vocab, example) = tiny_setup();
        let n = example.decoder_tokens.len() - 1;
        assert!(n >= 3);
        let run = |tokens: &[u32]| -> Vec<f64> {
            let mut tape = Tape::new();
            let bind = model.params.bind(&mut tape);
            let mut r = rng(0);
            let memory =
                encoder_forward(&model, &mut tape, &bind, &example.encoder, false, &mut r).unwrap();
            let logits = decoder_forward(
                &model,
                &mut tape,
                &bind,
                memory,
                tokens,
                &example.decoder_triples[..tokens.len()],
                false,
                &mut r,
            )
            .unwrap();
            tape.value(logits).data.clone()
        };
        let base: Vec<u32> = example.decoder_tokens[..n].to_vec();
        let mut altered = base.clone();
        let last = altered.len() - 1;
        altered[last] = (altered[last] + 1) % model.cfg.vocab as u32;
        let a = run(&base);
        let b = run(&altered);
        let width = model.cfg.vocab;
        // all positions before the perturbed one are bit-identical
        for i in 0..last {
            assert_eq!(a[i * width..(i + 1) * width], b[i * width..(i + 1) * width]);
        }
        assert_ne!(a[last * width..], b[last * width..]);
    }

    #[test]
    fn greedy_decoding_is_deterministic_and_counts_gaks() {
        let (model, vocab, example) = tiny_setup();
        let mut r1 = rng(5);
        let mut r2 = rng(5);
        let a = decode_stream(
            &model, &vocab, &example.encoder, Instrument::Daegeum, &[], Sampling::Greedy, &mut r1,
            80, Some(2),
        )
        .unwrap();
        let b = decode_stream(
            &model, &vocab, &example.encoder, Instrument::Daegeum, &[], Sampling::Greedy, &mut r2,
            80, Some(2),
        )
        .unwrap();
        assert_eq!(a, b);
        let breaks =
            a.stream.tokens.iter().filter(|t| matches!(t, Token::LineBreak)).count();
        assert!(breaks <= 2);
        assert!(a.hit_max_len || breaks == 2 || !a.stream.tokens.is_empty());
    }

    #[test]
    fn online_triples_match_offline_annotation() {
        let (model, vocab, example) = tiny_setup();
        let mut r = rng(6);
        let outcome = decode_stream(
            &model, &vocab, &example.encoder, Instrument::Haegeum, &[], Sampling::TopP { p: 0.9 },
            &mut r, 60, Some(3),
        )
        .unwrap();
        // replay the emitted stream offline; the online counter must agree
        let offline = annotate_beats(&outcome.stream).unwrap();
        let mut cursor = BeatCursor::new();
        // account for the swallowed instrument start token
        cursor.observe(&Token::Special(Special::Instrument(Instrument::Haegeum))).unwrap();
        let online: Vec<BeatTriple> = outcome
            .stream
            .tokens
            .iter()
            .map(|t| cursor.observe(t).unwrap())
            .collect();
        assert_eq!(online, offline);
    }
}
