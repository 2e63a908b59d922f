//! Plain-text corpus format (`.jgb`), dataset statistics, splits and the
//! 4-gak training chunk sampler.
//!
//! File grammar (UTF-8):
//!
//! ```text
//! file        := header-line+ section+
//! header-line := "#" key ":" value NL        (required keys: title, instruments)
//! section     := "@" instrument NL gak-line+
//! gak-line    := jeonggan (" | " jeonggan)* NL
//! jeonggan    := "-" | event (" " event)*
//! event       := position " " symbol orn*
//! position    := 0..15
//! symbol      := pitch | "x" | "s:"id
//! orn         := " ~"id
//! pitch       := ("-"|"--"|"+"|"++")? yul-name
//! ```
//!
//! Serialization is canonical: single spaces between tokens, ` | ` between
//! jeonggans, one gak per line.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::notation::{
    validate, Gak, Instrument, Jeonggan, Part, PitchSymbol, PositionLabel, Score, Symbol,
    SymbolBase, Violation,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("too few pieces: {0}, need at least 3")]
    TooFewPieces(usize),
    #[error("score too short: {got} gaks, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("too few parts: {0}, need at least 2")]
    TooFewParts(usize),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

fn parse_err<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T, CorpusError> {
    Err(CorpusError::Parse { line, col, msg: msg.into() })
}

/// Parses one piece file into a validated score.
pub fn parse_piece(text: &str) -> Result<Score, CorpusError> {
    let mut title: Option<String> = None;
    let mut declared: Option<Vec<Instrument>> = None;
    let mut sections: Vec<(Instrument, Vec<Gak>, usize)> = Vec::new();
    let mut in_header = true;

    for (li, raw) in text.lines().enumerate() {
        let line_no = li + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if !in_header {
                return parse_err(line_no, 1, "header line after first section");
            }
            let (key, value) = match rest.split_once(':') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => return parse_err(line_no, 1, "header line missing ':'"),
            };
            match key {
                "title" => title = Some(value.to_string()),
                "instruments" => {
                    let mut list = Vec::new();
                    for name in value.split_whitespace() {
                        match Instrument::from_name(name) {
                            Some(i) => list.push(i),
                            None => {
                                return parse_err(line_no, 1, format!("unknown instrument '{}'", name))
                            }
                        }
                    }
                    declared = Some(list);
                }
                _ => return parse_err(line_no, 1, format!("unknown header key '{}'", key)),
            }
        } else if let Some(name) = line.strip_prefix('@') {
            in_header = false;
            match Instrument::from_name(name.trim()) {
                Some(i) => sections.push((i, Vec::new(), line_no)),
                None => return parse_err(line_no, 2, format!("unknown instrument '{}'", name.trim())),
            }
        } else {
            let Some(section) = sections.last_mut() else {
                return parse_err(line_no, 1, "gak line before any '@instrument' section");
            };
            section.1.push(parse_gak_line(line, line_no)?);
        }
    }

    let Some(title) = title else {
        return parse_err(1, 1, "missing '#title:' header");
    };
    let Some(declared) = declared else {
        return parse_err(1, 1, "missing '#instruments:' header");
    };
    let found: Vec<Instrument> = sections.iter().map(|(i, _, _)| *i).collect();
    if declared != found {
        return parse_err(
            1,
            1,
            format!(
                "header instruments {:?} do not match sections {:?}",
                declared.iter().map(|i| i.name()).collect::<Vec<_>>(),
                found.iter().map(|i| i.name()).collect::<Vec<_>>()
            ),
        );
    }
    for (_, gaks, line_no) in &sections {
        if gaks.is_empty() {
            return parse_err(*line_no, 1, "section has no gak lines");
        }
    }

    let score = Score::new(
        title,
        sections
            .into_iter()
            .map(|(instrument, gaks, _)| Part::new(instrument, gaks))
            .collect(),
    );
    let violations = validate(&score);
    if !violations.is_empty() {
        return Err(CorpusError::Validation(violations));
    }
    Ok(score)
}

fn parse_gak_line(line: &str, line_no: usize) -> Result<Gak, CorpusError> {
    let mut jeonggans = Vec::new();
    let mut col = 1usize;
    for cell in line.split(" | ") {
        jeonggans.push(parse_jeonggan(cell.trim(), line_no, col)?);
        col += cell.len() + 3;
    }
    Ok(Gak::new(jeonggans))
}

fn parse_jeonggan(cell: &str, line_no: usize, col: usize) -> Result<Jeonggan, CorpusError> {
    if cell == "-" {
        return Ok(Jeonggan::empty());
    }
    if cell.is_empty() {
        return parse_err(line_no, col, "empty jeonggan cell; use '-' for sustain");
    }
    let mut events: Vec<(PositionLabel, Symbol)> = Vec::new();
    let mut tokens = cell.split_whitespace().peekable();
    while let Some(tok) = tokens.next() {
        let value: u8 = match tok.parse() {
            Ok(v) => v,
            Err(_) => return parse_err(line_no, col, format!("expected position label, got '{}'", tok)),
        };
        let label = PositionLabel::new(value)
            .map_err(|e| CorpusError::Parse { line: line_no, col, msg: e.to_string() })?;
        let Some(sym_tok) = tokens.next() else {
            return parse_err(line_no, col, format!("position {} has no symbol", value));
        };
        let mut symbol = parse_symbol_token(sym_tok, line_no, col)?;
        while let Some(peek) = tokens.peek() {
            if let Some(id) = peek.strip_prefix('~') {
                symbol = symbol.with_ornament(id);
                tokens.next();
            } else {
                break;
            }
        }
        events.push((label, symbol));
    }
    Ok(Jeonggan::with_events(events))
}

fn parse_symbol_token(tok: &str, line_no: usize, col: usize) -> Result<Symbol, CorpusError> {
    if tok == "x" {
        return Ok(Symbol::rest());
    }
    if let Some(id) = tok.strip_prefix("s:") {
        if id.is_empty() {
            return parse_err(line_no, col, "timed sigimsae with empty id");
        }
        return Ok(Symbol::timed_sigimsae(id));
    }
    match PitchSymbol::parse_token(tok) {
        Some(p) => Ok(Symbol { base: SymbolBase::Pitch(p), ornaments: Vec::new() }),
        None => parse_err(line_no, col, format!("unknown symbol '{}'", tok)),
    }
}

/// Canonical serialization; `parse_piece(serialize_piece(s)) == s`.
pub fn serialize_piece(score: &Score) -> String {
    let mut out = String::new();
    out.push_str(&format!("#title: {}\n", score.title));
    let names: Vec<&str> = score.parts.iter().map(|p| p.instrument.name()).collect();
    out.push_str(&format!("#instruments: {}\n", names.join(" ")));
    for part in &score.parts {
        out.push_str(&format!("@{}\n", part.instrument.name()));
        for gak in &part.gaks {
            let cells: Vec<String> = gak.jeonggans.iter().map(serialize_jeonggan).collect();
            out.push_str(&cells.join(" | "));
            out.push('\n');
        }
    }
    out
}

fn serialize_jeonggan(jg: &Jeonggan) -> String {
    if jg.is_empty() {
        return "-".to_string();
    }
    let mut parts = Vec::new();
    for (label, symbol) in &jg.events {
        let mut s = format!("{} {}", label, symbol_token(symbol));
        for orn in &symbol.ornaments {
            s.push_str(&format!(" ~{}", orn.glyph_id));
        }
        parts.push(s);
    }
    parts.join(" ")
}

pub fn symbol_token(symbol: &Symbol) -> String {
    match &symbol.base {
        SymbolBase::Pitch(p) => p.token(),
        SymbolBase::Rest => "x".to_string(),
        SymbolBase::TimedSigimsae(id) => format!("s:{}", id),
    }
}

pub fn load_piece(path: &Path) -> Result<Score, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_piece(&text)
}

/// Loads every `.jgb` file in a directory, sorted by file stem.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, Score)>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("jgb") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let score = load_piece(&path)?;
        out.push((id, score));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusStats {
    pub pieces: usize,
    /// Jeonggans per piece, counted on the shared grid (part 0).
    pub jeonggans: usize,
    /// Jeonggans counting every instrument part separately.
    pub combined: usize,
}

pub fn corpus_stats(dir: &Path) -> Result<CorpusStats, CorpusError> {
    let corpus = load_corpus(dir)?;
    Ok(stats_of(corpus.iter().map(|(_, s)| s)))
}

pub fn stats_of<'a>(scores: impl Iterator<Item = &'a Score>) -> CorpusStats {
    let mut stats = CorpusStats { pieces: 0, jeonggans: 0, combined: 0 };
    for score in scores {
        stats.pieces += 1;
        stats.jeonggans += score.parts.first().map(|p| p.total_jeonggans()).unwrap_or(0);
        stats.combined += score.parts.iter().map(|p| p.total_jeonggans()).sum::<usize>();
    }
    stats
}

/// Piece-level train/valid/test split. Splitting whole pieces avoids leaking
/// chunk overlap across subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

/// Deterministic split with 75/5/5 proportions scaled to the corpus size
/// (floored, minimum one piece each for valid and test).
pub fn make_split(ids: &[String], seed: u64) -> Result<CorpusSplit, CorpusError> {
    use rand::SeedableRng;
    let n = ids.len();
    if n < 3 {
        return Err(CorpusError::TooFewPieces(n));
    }
    let valid_n = ((n * 5) / 85).max(1);
    let test_n = ((n * 5) / 85).max(1);

    let mut shuffled: Vec<String> = ids.to_vec();
    shuffled.sort();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let test = shuffled.split_off(n - test_n);
    let valid = shuffled.split_off(n - test_n - valid_n);
    Ok(CorpusSplit { train: shuffled, valid, test })
}

/// One training example: a shared 4-gak window with 1-5 input parts and a
/// target part drawn from the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub inputs: Vec<Part>,
    pub target: Part,
    pub start_gak: usize,
}

pub const CHUNK_GAKS: usize = 4;
pub const CHUNK_MAX_INPUTS: usize = 5;

pub fn sample_chunk(score: &Score, rng: &mut impl Rng) -> Result<Chunk, CorpusError> {
    let gaks = score.gak_shape().len();
    if gaks < CHUNK_GAKS {
        return Err(CorpusError::TooShort { got: gaks, need: CHUNK_GAKS });
    }
    let parts = score.parts.len();
    if parts < 2 {
        return Err(CorpusError::TooFewParts(parts));
    }
    let start = rng.gen_range(0..=gaks - CHUNK_GAKS);
    let input_count = rng.gen_range(1..=(parts - 1).min(CHUNK_MAX_INPUTS));

    let mut indices: Vec<usize> = (0..parts).collect();
    indices.shuffle(rng);
    let window = start..start + CHUNK_GAKS;
    let inputs = indices[..input_count]
        .iter()
        .map(|&i| score.parts[i].slice_gaks(window.clone()))
        .collect();
    let target = score.parts[indices[input_count]].slice_gaks(window);
    Ok(Chunk { inputs, target, start_gak: start })
}

/// Glyph classes in the rendering table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlyphClass {
    Pitch,
    PitchPrefix,
    Ornament,
    TimedSigimsae,
}

impl GlyphClass {
    fn parse(s: &str) -> Option<GlyphClass> {
        match s {
            "pitch" => Some(GlyphClass::Pitch),
            "pitch-prefix" => Some(GlyphClass::PitchPrefix),
            "ornament" => Some(GlyphClass::Ornament),
            "timed-sigimsae" => Some(GlyphClass::TimedSigimsae),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlyphEntry {
    pub glyph: String,
    pub ascii_id: String,
    pub class: GlyphClass,
}

/// TSV table mapping original glyphs to the ASCII ids used in piece files.
#[derive(Debug, Clone, Default)]
pub struct GlyphTable {
    entries: Vec<GlyphEntry>,
    by_ascii: HashMap<String, usize>,
}

impl GlyphTable {
    pub fn parse(text: &str) -> Result<GlyphTable, CorpusError> {
        let mut table = GlyphTable::default();
        for (li, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return parse_err(li + 1, 1, format!("expected 3 tab-separated columns, got {}", cols.len()));
            }
            let Some(class) = GlyphClass::parse(cols[2].trim()) else {
                return parse_err(li + 1, 1, format!("unknown glyph class '{}'", cols[2]));
            };
            let entry = GlyphEntry {
                glyph: cols[0].to_string(),
                ascii_id: cols[1].to_string(),
                class,
            };
            table.by_ascii.insert(entry.ascii_id.clone(), table.entries.len());
            table.entries.push(entry);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<GlyphTable, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        GlyphTable::parse(&text)
    }

    pub fn glyph_for(&self, ascii_id: &str) -> Option<&str> {
        self.by_ascii.get(ascii_id).map(|i| self.entries[*i].glyph.as_str())
    }

    pub fn entries(&self) -> &[GlyphEntry] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_score, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const MINIMAL: &str = "#title: test\n#instruments: piri\n@piri\n0 hwang | 2 jung | - | 0 nam\n";

    #[test]
    fn parses_minimal_piece() {
        let score = parse_piece(MINIMAL).unwrap();
        assert_eq!(score.title, "test");
        assert_eq!(score.parts.len(), 1);
        let gak = &score.parts[0].gaks[0];
        assert_eq!(gak.len(), 4);
        assert!(gak.jeonggans[2].is_empty());
        assert_eq!(gak.jeonggans[1].events[0].0.value(), 2);
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let score = parse_piece(MINIMAL).unwrap();
        assert_eq!(serialize_piece(&score), MINIMAL);
    }

    #[test]
    fn mismatched_part_lengths_fail_validation() {
        let text = "#title: t\n#instruments: piri daegeum\n@piri\n0 hwang | - | - | -\n@daegeum\n0 hwang | - | - | -\n0 jung | - | - | -\n";
        match parse_piece(text) {
            Err(CorpusError::Validation(vs)) => {
                assert!(vs.iter().any(|v| v.rule == crate::notation::rules::PART_LENGTH_MISMATCH));
            }
            other => panic!("expected validation error, got {:?}", other),
        }
    }

    #[test]
    fn parse_error_carries_location() {
        let text = "#title: t\n#instruments: piri\n@piri\n0 zzz | - | - | -\n";
        match parse_piece(text) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn round_trip_over_random_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let score = random_score(&mut rng, &SynthConfig::default());
            let text = serialize_piece(&score);
            let reparsed = parse_piece(&text).unwrap();
            assert_eq!(reparsed, score);
            assert_eq!(serialize_piece(&reparsed), text);
        }
    }

    #[test]
    fn stats_on_synthetic_corpus() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            corpus_stats(dir.path()).unwrap(),
            CorpusStats { pieces: 0, jeonggans: 0, combined: 0 }
        );

        // one 2-part piece, 3 gaks x 4 jeonggans
        let mut lines = String::from("#title: t\n#instruments: piri daegeum\n");
        for name in ["piri", "daegeum"] {
            lines.push_str(&format!("@{}\n", name));
            for _ in 0..3 {
                lines.push_str("0 hwang | - | - | -\n");
            }
        }
        fs::write(dir.path().join("a.jgb"), &lines).unwrap();
        assert_eq!(
            corpus_stats(dir.path()).unwrap(),
            CorpusStats { pieces: 1, jeonggans: 12, combined: 24 }
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ids: Vec<String> = (0..85).map(|i| format!("p{:03}", i)).collect();
        let split = make_split(&ids, 7).unwrap();
        assert_eq!(split.train.len(), 75);
        assert_eq!(split.valid.len(), 5);
        assert_eq!(split.test.len(), 5);
        assert_eq!(split, make_split(&ids, 7).unwrap());

        let mut all: Vec<String> = split
            .train
            .iter()
            .chain(&split.valid)
            .chain(&split.test)
            .cloned()
            .collect();
        all.sort();
        let mut want = ids.clone();
        want.sort();
        assert_eq!(all, want);

        let tiny: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let split = make_split(&tiny, 0).unwrap();
        assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (1, 1, 1));

        assert!(matches!(make_split(&tiny[..2], 0), Err(CorpusError::TooFewPieces(2))));
    }

    #[test]
    fn chunk_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SynthConfig { parts: 6, gaks_min: 6, gaks_max: 9, ..SynthConfig::default() };
        let score = random_score(&mut rng, &cfg);
        for _ in 0..500 {
            let chunk = sample_chunk(&score, &mut rng).unwrap();
            assert!((1..=5).contains(&chunk.inputs.len()));
            for input in &chunk.inputs {
                assert_eq!(input.gaks.len(), CHUNK_GAKS);
                assert_eq!(input.gak_shape(), chunk.target.gak_shape());
                assert_ne!(input.instrument, chunk.target.instrument);
            }
        }
    }

    #[test]
    fn chunk_input_size_forced_for_two_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let score = random_score(&mut rng, &SynthConfig { parts: 2, ..SynthConfig::default() });
        for _ in 0..50 {
            let chunk = sample_chunk(&score, &mut rng).unwrap();
            assert_eq!(chunk.inputs.len(), 1);
        }
    }

    #[test]
    fn chunk_sampler_is_seed_reproducible() {
        let mut build = ChaCha8Rng::seed_from_u64(8);
        let score = random_score(&mut build, &SynthConfig { parts: 4, ..SynthConfig::default() });
        let mut a = ChaCha8Rng::seed_from_u64(21);
        let mut b = ChaCha8Rng::seed_from_u64(21);
        assert_eq!(sample_chunk(&score, &mut a).unwrap(), sample_chunk(&score, &mut b).unwrap());
    }

    #[test]
    fn glyph_table_parses() {
        let table = GlyphTable::parse("黃\thwang\tpitch\n亻\t-\tpitch-prefix\n").unwrap();
        assert_eq!(table.glyph_for("hwang"), Some("黃"));
        assert_eq!(table.entries().len(), 2);
        assert!(GlyphTable::parse("a\tb\n").is_err());
    }
}
