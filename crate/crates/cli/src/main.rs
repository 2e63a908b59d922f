//! `jgb` — command-line tools for machine-readable Jeongganbo: corpus
//! validation and statistics, tokenization and scheme conversion, masking,
//! metrics, desk-scale model training, kernel verification and the
//! end-to-end generation pipeline.
//!
//! Every subcommand is deterministic for a fixed `--seed`.

mod render;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jgb_core::codecs::{
    annotate_beats, build_vocab, convert, encode_abc, encode_jg, encode_remi, stream_from_text,
    stream_to_text, token_text, vocab_to_text, write_stream_binary, Scheme, TokenStream,
    Vocabulary,
};
use jgb_core::corpus::{
    corpus_stats, load_corpus, load_piece, make_split, sample_chunk, serialize_piece, GlyphTable,
};
use jgb_core::metrics::{
    f1_report_kv, length_match_rate, note_f1, render_reference_table,
};
use jgb_core::notation::{validate, Instrument, Part, Score};
use jgb_core::pianoroll::{
    apply_masking, grid_to_table, to_frames, FrameVocab, MaskingPolicy, OrnamentFeature, Strategy,
    SymbolFeature,
};
use jgb_harness::manifest::PipelineManifest;
use jgb_harness::pipeline::{orchestrate, preprocess_15c, refine, transform_melody};
use jgb_neural::config::{parse_kv, ModelConfig, TrainConfig};
use jgb_neural::gradcheck::run_standard_suite;
use jgb_neural::mlm::{example_from_masked, Mlm, MlmExample};
use jgb_neural::seq2seq::{example_from_chunk, Seq2Seq, Seq2SeqExample};
use jgb_neural::train::{train_mlm, train_seq2seq};

/// Published corpus statistics used by `stats --expect-published`.
const PUBLISHED_PIECES: usize = 85;
const PUBLISHED_JEONGGANS: usize = 28_010;
const PUBLISHED_COMBINED: usize = 141_820;

#[derive(Parser)]
#[command(name = "jgb", version, about = "Jeongganbo corpus, codec and generation tools")]
struct Cli {
    /// Seed for every random choice the subcommand makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse pieces and list every invariant violation.
    Validate {
        /// Directory of .jgb files.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Individual piece files.
        files: Vec<PathBuf>,
    },
    /// Corpus statistics: pieces, grid jeonggans, per-instrument total.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Compare against the published dataset numbers.
        #[arg(long)]
        expect_published: bool,
    },
    /// Tokenize one part of a piece.
    Tokenize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "jg")]
        scheme: String,
        /// Instrument to tokenize (default: first part).
        #[arg(long)]
        part: Option<String>,
        /// Print one `token gak jeonggan subbeat` line per token.
        #[arg(long)]
        beats: bool,
        /// Write little-endian u32 ids here as well.
        #[arg(long)]
        binary_out: Option<PathBuf>,
        /// Write the vocabulary sidecar here.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Convert a token-stream text file between schemes.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Jeonggans per gak, comma-separated; required when converting from
        /// the barless scheme.
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Deterministic piece-level train/valid/test split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Apply the masking policy to one part and write the masked grid.
    Mask {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        part: Option<String>,
        /// key=value rates file; defaults to the published rates.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out_prefix: Option<PathBuf>,
    },
    /// Score generated output against a reference.
    Eval {
        /// `lenmatch` or `f1`.
        #[arg(long)]
        metric: String,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Instrument to compare for f1 (default: first part pair).
        #[arg(long)]
        part: Option<String>,
        /// Also print the published full-scale reference table.
        #[arg(long)]
        show_reference: bool,
    },
    /// Train a model on a corpus directory at desk scale.
    Train {
        /// `seq2seq` or `mlm`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        corpus: PathBuf,
        /// key=value file with model and training settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "jg")]
        scheme: String,
        #[arg(long)]
        out: PathBuf,
        /// Write one loss per line here.
        #[arg(long)]
        loss_curve: Option<PathBuf>,
        /// Training chunks sampled per piece.
        #[arg(long, default_value_t = 16)]
        chunks_per_piece: usize,
    },
    /// Verify every differentiable kernel op against finite differences.
    Gradcheck,
    /// Stretch an 8-beat melody to the 10-beat pattern and infill it into a
    /// piri part.
    Transform15c {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate the remaining five instrument parts from a piri melody.
    Orchestrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Regenerate each part of a six-part score against the other five.
    Refine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Horizontal text-grid rendering of a piece.
    Render {
        #[arg(long)]
        input: PathBuf,
        /// TSV glyph table for original characters.
        #[arg(long)]
        glyph_table: Option<PathBuf>,
        #[arg(long)]
        part: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {:#}", err);
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Validate { corpus, files } => cmd_validate(corpus, files),
        Command::Stats { corpus, expect_published } => cmd_stats(&corpus, expect_published),
        Command::Tokenize { input, scheme, part, beats, binary_out, vocab_out, output } => {
            cmd_tokenize(&input, &scheme, part.as_deref(), beats, binary_out, vocab_out, output)
        }
        Command::Convert { input, from, to, shape, output } => {
            cmd_convert(&input, &from, &to, shape.as_deref(), output)
        }
        Command::Split { corpus } => cmd_split(&corpus, seed.unwrap_or(0)),
        Command::Mask { input, part, policy, out_prefix } => {
            cmd_mask(&input, part.as_deref(), policy, out_prefix, seed)
        }
        Command::Eval { metric, generated, reference, part, show_reference } => {
            cmd_eval(&metric, &generated, &reference, part.as_deref(), show_reference)
        }
        Command::Train { model, corpus, config, scheme, out, loss_curve, chunks_per_piece } => {
            cmd_train(&model, &corpus, config, &scheme, &out, loss_curve, chunks_per_piece, seed)
        }
        Command::Gradcheck => cmd_gradcheck(),
        Command::Transform15c { input, manifest, output } => {
            cmd_transform15c(&input, manifest, output, seed)
        }
        Command::Orchestrate { input, manifest, output } => {
            cmd_orchestrate(&input, manifest, output, seed)
        }
        Command::Refine { input, manifest, output } => cmd_refine(&input, manifest, output, seed),
        Command::Render { input, glyph_table, part } => {
            cmd_render(&input, glyph_table, part.as_deref())
        }
    }
}

fn parse_scheme(name: &str) -> Result<Scheme> {
    Scheme::from_name(name).ok_or_else(|| anyhow!("unknown scheme '{}'", name))
}

fn parse_instrument(name: &str) -> Result<Instrument> {
    Instrument::from_name(name).ok_or_else(|| anyhow!("unknown instrument '{}'", name))
}

fn select_part<'a>(score: &'a Score, name: Option<&str>) -> Result<&'a Part> {
    match name {
        None => score.parts.first().ok_or_else(|| anyhow!("piece has no parts")),
        Some(name) => {
            let instrument = parse_instrument(name)?;
            score
                .parts
                .iter()
                .find(|p| p.instrument == instrument)
                .ok_or_else(|| anyhow!("piece has no {} part", instrument))
        }
    }
}

fn write_or_print(output: Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn cmd_validate(corpus: Option<PathBuf>, files: Vec<PathBuf>) -> Result<()> {
    let mut targets: Vec<(String, Score)> = Vec::new();
    if let Some(dir) = corpus {
        targets.extend(load_corpus(&dir)?);
    }
    for file in files {
        let score = load_piece(&file)?;
        targets.push((file.display().to_string(), score));
    }
    if targets.is_empty() {
        bail!("nothing to validate; pass --corpus or piece files");
    }
    let mut violations = 0usize;
    for (id, score) in &targets {
        for v in validate(score) {
            violations += 1;
            println!("{}: {}", id, v);
        }
    }
    if violations == 0 {
        println!("ok: {} piece(s), no violations", targets.len());
        Ok(())
    } else {
        bail!("{} violation(s)", violations);
    }
}

fn cmd_stats(corpus: &Path, expect_published: bool) -> Result<()> {
    let stats = corpus_stats(corpus)?;
    println!("pieces={}", stats.pieces);
    println!("jeonggans={}", stats.jeonggans);
    println!("combined={}", stats.combined);
    if expect_published {
        let expected = (PUBLISHED_PIECES, PUBLISHED_JEONGGANS, PUBLISHED_COMBINED);
        let got = (stats.pieces, stats.jeonggans, stats.combined);
        if got == expected {
            println!("published-stats: match");
        } else {
            bail!(
                "published-stats: mismatch, expected pieces={} jeonggans={} combined={}",
                expected.0,
                expected.1,
                expected.2
            );
        }
    }
    Ok(())
}

fn encode_part(part: &Part, scheme: Scheme) -> Result<TokenStream> {
    Ok(match scheme {
        Scheme::Jg => encode_jg(part),
        Scheme::Remi => encode_remi(part),
        Scheme::Abc => encode_abc(part)?,
    })
}

fn cmd_tokenize(
    input: &Path,
    scheme: &str,
    part: Option<&str>,
    beats: bool,
    binary_out: Option<PathBuf>,
    vocab_out: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<()> {
    let scheme = parse_scheme(scheme)?;
    let score = load_piece(input)?;
    let selected = select_part(&score, part)?;
    let stream = encode_part(selected, scheme)?;

    if beats {
        let triples = annotate_beats(&stream)
            .map_err(|e| anyhow!("beat annotation needs a structural scheme: {}", e))?;
        let mut text = String::new();
        for (token, t) in stream.tokens.iter().zip(&triples) {
            text.push_str(&format!("{} {} {} {}\n", token_text(token), t.gak, t.jeonggan, t.subbeat));
        }
        write_or_print(output, &text)?;
    } else {
        let mut text = stream_to_text(&stream);
        if !text.ends_with('\n') {
            text.push('\n');
        }
        write_or_print(output, &text)?;
    }

    if binary_out.is_some() || vocab_out.is_some() {
        let vocab = build_vocab(&score.parts, scheme);
        if let Some(path) = binary_out {
            let bytes = write_stream_binary(&stream, &vocab)?;
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        if let Some(path) = vocab_out {
            fs::write(&path, vocab_to_text(&vocab))
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn parse_shape(shape: Option<&str>) -> Result<Option<Vec<usize>>> {
    match shape {
        None => Ok(None),
        Some(text) => {
            let shape: Vec<usize> = text
                .split(',')
                .map(|w| w.trim().parse().map_err(|_| anyhow!("bad shape entry '{}'", w)))
                .collect::<Result<_>>()?;
            Ok(Some(shape))
        }
    }
}

fn cmd_convert(
    input: &Path,
    from: &str,
    to: &str,
    shape: Option<&str>,
    output: Option<PathBuf>,
) -> Result<()> {
    let from = parse_scheme(from)?;
    let to = parse_scheme(to)?;
    let shape = parse_shape(shape)?;
    if from == Scheme::Abc && shape.is_none() {
        bail!("converting from the barless scheme needs --shape");
    }
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let stream = stream_from_text(&text, from)?;
    let converted = convert(&stream, to, shape.as_deref())?;
    let mut out = stream_to_text(&converted);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    write_or_print(output, &out)
}

fn cmd_split(corpus: &Path, seed: u64) -> Result<()> {
    let pieces = load_corpus(corpus)?;
    let ids: Vec<String> = pieces.iter().map(|(id, _)| id.clone()).collect();
    let split = make_split(&ids, seed)?;
    println!("train: {}", split.train.join(" "));
    println!("valid: {}", split.valid.join(" "));
    println!("test: {}", split.test.join(" "));
    Ok(())
}

fn load_policy(path: Option<PathBuf>, seed: Option<u64>) -> Result<MaskingPolicy> {
    let mut policy = MaskingPolicy::default();
    if let Some(path) = path {
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let kv = parse_kv(&text);
        let rate = |key: &str, slot: &mut f64| -> Result<()> {
            if let Some(v) = kv.get(key) {
                *slot = v.parse().map_err(|_| anyhow!("bad rate '{}' for {}", v, key))?;
            }
            Ok(())
        };
        rate("frame_mask", &mut policy.frame_mask)?;
        rate("frame_replace", &mut policy.frame_replace)?;
        rate("onset_mask", &mut policy.onset_mask)?;
        rate("onset_replace", &mut policy.onset_replace)?;
        rate("onset_erase", &mut policy.onset_erase)?;
        rate("jeonggan_mask", &mut policy.jeonggan_mask)?;
        rate("ornament_mask", &mut policy.ornament_mask)?;
        if let Some(v) = kv.get("seed") {
            policy.seed = v.parse().map_err(|_| anyhow!("bad seed '{}'", v))?;
        }
    }
    if let Some(seed) = seed {
        policy.seed = seed;
    }
    policy.validate().map_err(|e| anyhow!(e))?;
    Ok(policy)
}

fn feature_name(symbol: &SymbolFeature) -> String {
    match symbol {
        SymbolFeature::Continue => "_".into(),
        SymbolFeature::Mask => "<mask>".into(),
        SymbolFeature::Rest => "x".into(),
        SymbolFeature::Pitch(p) => p.token(),
        SymbolFeature::TimedSigimsae(id) => format!("s:{}", id),
    }
}

fn ornament_name(orn: &OrnamentFeature) -> String {
    match orn {
        OrnamentFeature::None => "_".into(),
        OrnamentFeature::Mask => "<mask>".into(),
        OrnamentFeature::Ornament(id) => format!("~{}", id),
    }
}

fn cmd_mask(
    input: &Path,
    part: Option<&str>,
    policy: Option<PathBuf>,
    out_prefix: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let score = load_piece(input)?;
    let selected = select_part(&score, part)?;
    let policy = load_policy(policy, seed)?;
    let vocab = FrameVocab::build(&score.parts);
    let grid = to_frames(selected)?;
    let (masked, targets, report) = apply_masking(&grid, &policy, &vocab);

    for strategy in Strategy::ALL {
        let eligible = report.eligible.get(&strategy).copied().unwrap_or(0);
        let applied = report.applied.get(&strategy).copied().unwrap_or(0);
        let rate = report.rate(strategy).unwrap_or(0.0);
        println!("{}: applied {}/{} ({:.4})", strategy, applied, eligible, rate);
    }
    println!("targets={}", targets.len());

    if let Some(prefix) = out_prefix {
        let grid_path = prefix.with_extension("grid");
        fs::write(&grid_path, grid_to_table(&masked, &vocab)?)
            .with_context(|| format!("writing {}", grid_path.display()))?;
        let mut target_text = String::new();
        for t in &targets {
            target_text.push_str(&format!(
                "{} {} {} {}\n",
                t.frame,
                t.strategy,
                feature_name(&t.original.symbol),
                ornament_name(&t.original.ornament)
            ));
        }
        let targets_path = prefix.with_extension("targets");
        fs::write(&targets_path, target_text)
            .with_context(|| format!("writing {}", targets_path.display()))?;
        println!("wrote {} and {}", grid_path.display(), targets_path.display());
    }
    Ok(())
}

fn cmd_eval(
    metric: &str,
    generated: &Path,
    reference: &Path,
    part: Option<&str>,
    show_reference: bool,
) -> Result<()> {
    let generated = load_piece(generated)?;
    let reference = load_piece(reference)?;
    match metric {
        "lenmatch" => {
            if generated.parts.len() != reference.parts.len() {
                bail!(
                    "part count mismatch: {} vs {}",
                    generated.parts.len(),
                    reference.parts.len()
                );
            }
            let pairs: Vec<(&Part, &Part)> =
                generated.parts.iter().zip(reference.parts.iter()).collect();
            let rate = length_match_rate(&pairs)?;
            println!("length_match_rate={}", rate);
        }
        "f1" => {
            let gen_part = select_part(&generated, part)?;
            let ref_part = match part {
                Some(name) => select_part(&reference, Some(name))?,
                None => reference.parts.first().ok_or_else(|| anyhow!("reference has no parts"))?,
            };
            let report = note_f1(gen_part, ref_part)?;
            println!(
                "{:<10} {:>10} {:>10} {:>10}",
                "precision", "recall", "f1", "matched"
            );
            println!(
                "{:<10.4} {:>10.4} {:>10.4} {:>10}",
                report.precision, report.recall, report.f1, report.matched
            );
            print!("{}", f1_report_kv(&report, 0));
        }
        other => bail!("unknown metric '{}'; use lenmatch or f1", other),
    }
    if show_reference {
        println!();
        print!("{}", render_reference_table());
    }
    Ok(())
}

struct TrainSetup {
    model_cfg_text: String,
    train_cfg: TrainConfig,
}

fn load_train_setup(config: Option<PathBuf>, seed: Option<u64>) -> Result<TrainSetup> {
    let text = match config {
        Some(path) => {
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?
        }
        None => String::new(),
    };
    let mut train_cfg = TrainConfig::from_kv(&text)?;
    if let Some(seed) = seed {
        train_cfg.seed = seed;
    }
    Ok(TrainSetup { model_cfg_text: text, train_cfg })
}

fn training_scores(corpus: &Path, seed: u64) -> Result<Vec<Score>> {
    let pieces = load_corpus(corpus)?;
    if pieces.is_empty() {
        bail!("no .jgb pieces under {}", corpus.display());
    }
    if pieces.len() < 3 {
        // too small to split; train on everything
        return Ok(pieces.into_iter().map(|(_, s)| s).collect());
    }
    let ids: Vec<String> = pieces.iter().map(|(id, _)| id.clone()).collect();
    let split = make_split(&ids, seed)?;
    let by_id: HashMap<String, Score> = pieces.into_iter().collect();
    Ok(split.train.iter().map(|id| by_id[id].clone()).collect())
}

fn build_seq2seq_dataset(
    scores: &[Score],
    vocab: &Vocabulary,
    chunks_per_piece: usize,
    seed: u64,
) -> Result<Vec<Seq2SeqExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DATASET_SALT);
    let mut out = Vec::new();
    for score in scores {
        if score.gak_shape().len() < 4 || score.parts.len() < 2 {
            continue;
        }
        for _ in 0..chunks_per_piece {
            let chunk = sample_chunk(score, &mut rng)?;
            out.push(example_from_chunk(&chunk, vocab)?);
        }
    }
    if out.is_empty() {
        bail!("no trainable chunks: pieces need at least 4 gaks and 2 parts");
    }
    Ok(out)
}

// fixed salt so dataset sampling never collides with the training stream
const DATASET_SALT: u64 = 0x6a67_622d_7365_7131;

fn build_mlm_dataset(scores: &[Score], vocab: &FrameVocab, seed: u64) -> Result<Vec<MlmExample>> {
    let mut out = Vec::new();
    let mut counter = 0u64;
    for score in scores {
        for part in &score.parts {
            let total = part.gaks.len();
            let mut start = 0;
            while start < total {
                let end = (start + 4).min(total);
                let fragment = part.slice_gaks(start..end);
                match to_frames(&fragment) {
                    Ok(grid) => {
                        counter += 1;
                        let policy =
                            MaskingPolicy { seed: seed ^ counter, ..MaskingPolicy::default() };
                        let (masked, targets, _) = apply_masking(&grid, &policy, vocab);
                        out.push(example_from_masked(&masked, &targets, vocab)?);
                    }
                    // quarter-grid collisions cannot be framed; skip them
                    Err(jgb_core::pianoroll::PianorollError::Collision { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
                start = end;
            }
        }
    }
    if out.is_empty() {
        bail!("no trainable grids in the corpus");
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    model: &str,
    corpus: &Path,
    config: Option<PathBuf>,
    scheme: &str,
    out: &Path,
    loss_curve: Option<PathBuf>,
    chunks_per_piece: usize,
    seed: Option<u64>,
) -> Result<()> {
    let setup = load_train_setup(config, seed)?;
    let scores = training_scores(corpus, setup.train_cfg.seed)?;
    let all_parts: Vec<Part> = scores.iter().flat_map(|s| s.parts.clone()).collect();

    let losses = match model {
        "seq2seq" => {
            let scheme = parse_scheme(scheme)?;
            let vocab = build_vocab(&all_parts, scheme);
            let mut cfg = ModelConfig::from_kv(&setup.model_cfg_text)?;
            cfg.vocab = vocab.len();
            cfg.ornament_vocab = 0;
            let mut net = Seq2Seq::new(cfg, setup.train_cfg.seed)?;
            let data = build_seq2seq_dataset(
                &scores,
                &vocab,
                chunks_per_piece,
                setup.train_cfg.seed,
            )?;
            println!("training seq2seq on {} examples, vocab {}", data.len(), vocab.len());
            let stats = train_seq2seq(&mut net, &data, &setup.train_cfg)?;
            jgb_neural::checkpoint::save_seq2seq(out, &net, &vocab)?;
            println!("final_accuracy={}", stats.final_accuracy);
            stats.losses
        }
        "mlm" => {
            let vocab = FrameVocab::build(&all_parts);
            let mut cfg = ModelConfig::from_kv(&setup.model_cfg_text)?;
            cfg.vocab = vocab.symbols().len();
            cfg.ornament_vocab = vocab.ornaments().len();
            cfg.max_subbeat = 6;
            let mut net = Mlm::new(cfg, setup.train_cfg.seed)?;
            let data = build_mlm_dataset(&scores, &vocab, setup.train_cfg.seed)?;
            println!(
                "training mlm on {} grids, {} symbols / {} ornaments",
                data.len(),
                vocab.symbols().len(),
                vocab.ornaments().len()
            );
            let stats = train_mlm(&mut net, &data, &setup.train_cfg)?;
            jgb_neural::checkpoint::save_mlm(out, &net, &vocab)?;
            println!("final_accuracy={}", stats.final_accuracy);
            stats.losses
        }
        other => bail!("unknown model '{}'; use seq2seq or mlm", other),
    };

    println!("wrote {}", out.display());
    if let Some(path) = loss_curve {
        let text: String = losses.iter().map(|l| format!("{}\n", l)).collect();
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_gradcheck() -> Result<()> {
    let results = run_standard_suite(1e-5)?;
    let mut failed = 0;
    for check in &results {
        println!(
            "{:<18} max-rel-error {:>12.3e}  threshold {:>8.0e}  {}",
            check.name,
            check.max_rel_error,
            check.threshold,
            if check.passed() { "pass" } else { "FAIL" }
        );
        if !check.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{} gradient check(s) failed", failed);
    }
    Ok(())
}

fn load_manifest(path: Option<PathBuf>, seed: Option<u64>) -> Result<PipelineManifest> {
    let mut manifest = match path {
        Some(path) => PipelineManifest::load(&path)?,
        None => PipelineManifest::default(),
    };
    if let Some(seed) = seed {
        manifest.seed = seed;
    }
    Ok(manifest)
}

fn cmd_transform15c(
    input: &Path,
    manifest: Option<PathBuf>,
    output: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let manifest = load_manifest(manifest, seed)?;
    let predictor = manifest.build_predictor()?;
    let score = load_piece(input)?;
    let melody = score.parts.first().ok_or_else(|| anyhow!("piece has no parts"))?;
    let preprocessed = preprocess_15c(melody)?;
    let piri = transform_melody(&preprocessed, predictor.as_ref(), &manifest.plan())?;
    let out_score = Score::new(format!("{} (piri)", score.title), vec![piri]);
    write_or_print(output, &serialize_piece(&out_score))
}

fn cmd_orchestrate(
    input: &Path,
    manifest: Option<PathBuf>,
    output: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let manifest = load_manifest(manifest, seed)?;
    let predictor = manifest.build_predictor()?;
    let score = load_piece(input)?;
    let piri = score.parts.first().ok_or_else(|| anyhow!("piece has no parts"))?;
    let (orchestrated, flags) = orchestrate(piri, predictor.as_ref(), &manifest.plan())?;
    for flag in &flags {
        eprintln!("note: {}", flag);
    }
    let titled = Score::new(format!("{} (orchestrated)", score.title), orchestrated.parts);
    write_or_print(output, &serialize_piece(&titled))
}

fn cmd_refine(
    input: &Path,
    manifest: Option<PathBuf>,
    output: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let manifest = load_manifest(manifest, seed)?;
    let predictor = manifest.build_predictor()?;
    let score = load_piece(input)?;
    let (refined, flags) = refine(&score, predictor.as_ref(), &manifest.plan())?;
    for flag in &flags {
        eprintln!("note: {}", flag);
    }
    write_or_print(output, &serialize_piece(&refined))
}

fn cmd_render(input: &Path, glyph_table: Option<PathBuf>, part: Option<&str>) -> Result<()> {
    let score = load_piece(input)?;
    let glyphs = match glyph_table {
        Some(path) => Some(GlyphTable::load(&path)?),
        None => None,
    };
    match part {
        Some(name) => {
            let part = select_part(&score, Some(name))?;
            print!("{}", render::render_part(part, glyphs.as_ref()));
        }
        None => print!("{}", render::render_score(&score, glyphs.as_ref())),
    }
    Ok(())
}
