//! Piano-roll frame representation for masked infilling.
//!
//! Each jeonggan becomes six frames. A frame carries a symbol feature (a note
//! onset, a rest, a timed sigimsae, or `continue` for sustain) and an
//! ornament feature. Six frames represent halves, thirds and sixths exactly;
//! quarter onsets round down to the nearest sixth, an error of at most 1/12
//! jeonggan.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codecs::{canonical_labels, BeatTriple, CodecError};
use crate::notation::{
    frac, Frac, Gak, Instrument, Jeonggan, NotationError, Part, PitchSymbol, Symbol, SymbolBase,
};

pub const FRAMES_PER_JEONGGAN: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolFeature {
    /// Sustain of whatever came before (or leading silence).
    Continue,
    Pitch(PitchSymbol),
    Rest,
    TimedSigimsae(String),
    /// Reserved masking marker; never appears in grids built from parts.
    Mask,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrnamentFeature {
    None,
    Ornament(String),
    Mask,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub symbol: SymbolFeature,
    pub ornament: OrnamentFeature,
}

impl Frame {
    pub fn sustain() -> Frame {
        Frame { symbol: SymbolFeature::Continue, ornament: OrnamentFeature::None }
    }
}

/// A part flattened onto the six-frames-per-jeonggan grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    pub frames: Vec<Frame>,
    /// Jeonggans per gak; total * 6 == frames.len().
    pub gak_shape: Vec<usize>,
}

impl FrameGrid {
    pub fn jeonggan_count(&self) -> usize {
        self.gak_shape.iter().sum()
    }

    /// Beat triple of a frame: (gak, jeonggan within gak, frame 0-5).
    pub fn beat_triple(&self, frame_index: usize) -> BeatTriple {
        let jeonggan_abs = frame_index / FRAMES_PER_JEONGGAN;
        let mut remaining = jeonggan_abs;
        for (gak, len) in self.gak_shape.iter().enumerate() {
            if remaining < *len {
                return BeatTriple {
                    gak,
                    jeonggan: remaining,
                    subbeat: frame_index % FRAMES_PER_JEONGGAN,
                };
            }
            remaining -= len;
        }
        BeatTriple {
            gak: self.gak_shape.len(),
            jeonggan: 0,
            subbeat: frame_index % FRAMES_PER_JEONGGAN,
        }
    }

    pub fn beat_triples(&self) -> Vec<BeatTriple> {
        (0..self.frames.len()).map(|i| self.beat_triple(i)).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PianorollError {
    #[error("onsets {a} and {b} collide in frame {frame} of jeonggan {jeonggan}")]
    Collision { jeonggan: usize, frame: usize, a: String, b: String },
    #[error("no room for ornament '{id}' of the note in jeonggan {jeonggan}")]
    OrnamentOverflow { jeonggan: usize, id: String },
    #[error("ornament in frame {frame} has no governing note")]
    OrphanOrnament { frame: usize },
    #[error("masked feature in frame {frame}; infill before decoding")]
    MaskedFrame { frame: usize },
    #[error("frame count {frames} is not 6 x {jeonggans} jeonggans")]
    BadFrameCount { frames: usize, jeonggans: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Notation(#[from] NotationError),
}

/// Frame index for an in-jeonggan onset: floor(6 * onset).
pub fn frame_of_onset(onset: Frac) -> usize {
    let scaled = onset * Frac::from(FRAMES_PER_JEONGGAN as i64);
    scaled.to_integer() as usize
}

pub fn to_frames(part: &Part) -> Result<FrameGrid, PianorollError> {
    let gak_shape = part.gak_shape();
    let total = part.total_jeonggans();
    let mut frames = vec![Frame::sustain(); total * FRAMES_PER_JEONGGAN];

    let mut jeonggan_abs = 0usize;
    for gak in &part.gaks {
        for jg in &gak.jeonggans {
            let base = jeonggan_abs * FRAMES_PER_JEONGGAN;
            let mut used: Option<(usize, String)> = None;
            for (label, symbol) in &jg.events {
                let onset = crate::notation::onset_of(*label);
                let idx = frame_of_onset(onset);
                if let Some((prev_idx, prev_name)) = &used {
                    if *prev_idx == idx {
                        return Err(PianorollError::Collision {
                            jeonggan: jeonggan_abs,
                            frame: idx,
                            a: prev_name.clone(),
                            b: symbol_name(symbol),
                        });
                    }
                }
                used = Some((idx, symbol_name(symbol)));
                frames[base + idx].symbol = symbol_feature(symbol);
                // first ornament sits on the onset frame, the rest spill into
                // the note's sustain frames
                let mut slot = base + idx;
                for orn in &symbol.ornaments {
                    if slot > base + idx
                        && (slot >= frames.len()
                            || frames[slot].symbol != SymbolFeature::Continue)
                    {
                        return Err(PianorollError::OrnamentOverflow {
                            jeonggan: jeonggan_abs,
                            id: orn.glyph_id.clone(),
                        });
                    }
                    frames[slot].ornament = OrnamentFeature::Ornament(orn.glyph_id.clone());
                    slot += 1;
                }
            }
            jeonggan_abs += 1;
        }
    }
    Ok(FrameGrid { frames, gak_shape })
}

fn symbol_feature(symbol: &Symbol) -> SymbolFeature {
    match &symbol.base {
        SymbolBase::Pitch(p) => SymbolFeature::Pitch(*p),
        SymbolBase::Rest => SymbolFeature::Rest,
        SymbolBase::TimedSigimsae(id) => SymbolFeature::TimedSigimsae(id.clone()),
    }
}

fn symbol_name(symbol: &Symbol) -> String {
    crate::corpus::symbol_token(symbol)
}

pub fn from_frames(grid: &FrameGrid, instrument: Instrument) -> Result<Part, PianorollError> {
    let jeonggans = grid.jeonggan_count();
    if grid.frames.len() != jeonggans * FRAMES_PER_JEONGGAN {
        return Err(PianorollError::BadFrameCount { frames: grid.frames.len(), jeonggans });
    }

    // collect events per jeonggan; ornaments attach to the governing note
    let mut events: Vec<Vec<(Frac, Symbol)>> = vec![Vec::new(); jeonggans];
    let mut governing: Option<(usize, usize)> = None; // (jeonggan, event index)
    for (i, frame) in grid.frames.iter().enumerate() {
        let jeonggan = i / FRAMES_PER_JEONGGAN;
        let within = frac((i % FRAMES_PER_JEONGGAN) as i64, FRAMES_PER_JEONGGAN as i64);
        match &frame.symbol {
            SymbolFeature::Mask => return Err(PianorollError::MaskedFrame { frame: i }),
            SymbolFeature::Continue => {}
            SymbolFeature::Pitch(p) => {
                events[jeonggan].push((within, Symbol::pitch(p.yul, p.octave)));
                governing = Some((jeonggan, events[jeonggan].len() - 1));
            }
            SymbolFeature::Rest => {
                events[jeonggan].push((within, Symbol::rest()));
                governing = Some((jeonggan, events[jeonggan].len() - 1));
            }
            SymbolFeature::TimedSigimsae(id) => {
                events[jeonggan].push((within, Symbol::timed_sigimsae(id.clone())));
                governing = Some((jeonggan, events[jeonggan].len() - 1));
            }
        }
        match &frame.ornament {
            OrnamentFeature::Mask => return Err(PianorollError::MaskedFrame { frame: i }),
            OrnamentFeature::None => {}
            OrnamentFeature::Ornament(id) => match governing {
                Some((jg, ev)) => events[jg][ev]
                    .1
                    .ornaments
                    .push(crate::notation::OrnamentSymbol::new(id.clone())),
                None => return Err(PianorollError::OrphanOrnament { frame: i }),
            },
        }
    }

    let mut jeonggan_list = Vec::with_capacity(jeonggans);
    for evs in events {
        if evs.is_empty() {
            jeonggan_list.push(Jeonggan::empty());
            continue;
        }
        let onsets: Vec<Frac> = evs.iter().map(|(o, _)| *o).collect();
        let labels = canonical_labels(&onsets)?;
        jeonggan_list.push(Jeonggan::with_events(
            labels.into_iter().zip(evs.into_iter().map(|(_, s)| s)).collect(),
        ));
    }

    let mut gaks = Vec::with_capacity(grid.gak_shape.len());
    let mut it = jeonggan_list.into_iter();
    for len in &grid.gak_shape {
        gaks.push(Gak::new(it.by_ref().take(*len).collect()));
    }
    Ok(Part::new(instrument, gaks))
}

/// Rates for the seven masking strategies, applied in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingPolicy {
    pub frame_mask: f64,
    pub frame_replace: f64,
    pub onset_mask: f64,
    pub onset_replace: f64,
    pub onset_erase: f64,
    pub jeonggan_mask: f64,
    pub ornament_mask: f64,
    pub seed: u64,
}

impl Default for MaskingPolicy {
    fn default() -> MaskingPolicy {
        MaskingPolicy {
            frame_mask: 0.05,
            frame_replace: 0.05,
            onset_mask: 0.20,
            onset_replace: 0.10,
            onset_erase: 0.10,
            jeonggan_mask: 0.15,
            ornament_mask: 0.50,
            seed: 0,
        }
    }
}

impl MaskingPolicy {
    pub fn zero(seed: u64) -> MaskingPolicy {
        MaskingPolicy {
            frame_mask: 0.0,
            frame_replace: 0.0,
            onset_mask: 0.0,
            onset_replace: 0.0,
            onset_erase: 0.0,
            jeonggan_mask: 0.0,
            ornament_mask: 0.0,
            seed,
        }
    }

    pub fn rates(&self) -> [(Strategy, f64); 7] {
        [
            (Strategy::FrameMask, self.frame_mask),
            (Strategy::FrameReplace, self.frame_replace),
            (Strategy::OnsetMask, self.onset_mask),
            (Strategy::OnsetReplace, self.onset_replace),
            (Strategy::OnsetErase, self.onset_erase),
            (Strategy::JeongganMask, self.jeonggan_mask),
            (Strategy::OrnamentMask, self.ornament_mask),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (s, r) in self.rates() {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("rate {} for {} outside [0, 1]", r, s));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    FrameMask,
    FrameReplace,
    OnsetMask,
    OnsetReplace,
    OnsetErase,
    JeongganMask,
    OrnamentMask,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::FrameMask,
        Strategy::FrameReplace,
        Strategy::OnsetMask,
        Strategy::OnsetReplace,
        Strategy::OnsetErase,
        Strategy::JeongganMask,
        Strategy::OrnamentMask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FrameMask => "frame-mask",
            Strategy::FrameReplace => "frame-replace",
            Strategy::OnsetMask => "onset-mask",
            Strategy::OnsetReplace => "onset-replace",
            Strategy::OnsetErase => "onset-erase",
            Strategy::JeongganMask => "jeonggan-mask",
            Strategy::OrnamentMask => "ornament-mask",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// One altered frame with its pre-masking content.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTarget {
    pub frame: usize,
    pub original: Frame,
    pub strategy: Strategy,
}

/// Unit-level bookkeeping: how many units each strategy saw and hit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskingReport {
    pub eligible: HashMap<Strategy, usize>,
    pub applied: HashMap<Strategy, usize>,
}

impl MaskingReport {
    fn record(&mut self, strategy: Strategy, eligible: usize, applied: usize) {
        *self.eligible.entry(strategy).or_default() += eligible;
        *self.applied.entry(strategy).or_default() += applied;
    }

    pub fn rate(&self, strategy: Strategy) -> Option<f64> {
        let e = *self.eligible.get(&strategy)?;
        if e == 0 {
            return None;
        }
        Some(*self.applied.get(&strategy).unwrap_or(&0) as f64 / e as f64)
    }

    pub fn merge(&mut self, other: &MaskingReport) {
        for s in Strategy::ALL {
            self.record(
                s,
                other.eligible.get(&s).copied().unwrap_or(0),
                other.applied.get(&s).copied().unwrap_or(0),
            );
        }
    }
}

/// The symbol alphabet used by masking replacement draws. Build it from the
/// training corpus so replacements stay in-distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameVocab {
    symbols: Vec<SymbolFeature>,
    ornaments: Vec<OrnamentFeature>,
    symbol_ids: HashMap<SymbolFeature, u32>,
    ornament_ids: HashMap<OrnamentFeature, u32>,
}

impl FrameVocab {
    pub fn build<'a>(parts: impl IntoIterator<Item = &'a Part>) -> FrameVocab {
        let mut symbols = std::collections::BTreeSet::new();
        let mut ornaments = std::collections::BTreeSet::new();
        for part in parts {
            for gak in &part.gaks {
                for jg in &gak.jeonggans {
                    for (_, symbol) in &jg.events {
                        symbols.insert(symbol_feature(symbol));
                        for orn in &symbol.ornaments {
                            ornaments.insert(OrnamentFeature::Ornament(orn.glyph_id.clone()));
                        }
                    }
                }
            }
        }
        let mut symbol_list = vec![SymbolFeature::Continue, SymbolFeature::Mask, SymbolFeature::Rest];
        symbol_list.extend(symbols.into_iter().filter(|s| *s != SymbolFeature::Rest));
        let mut ornament_list = vec![OrnamentFeature::None, OrnamentFeature::Mask];
        ornament_list.extend(ornaments);
        FrameVocab::from_lists(symbol_list, ornament_list)
    }

    pub fn from_lists(symbols: Vec<SymbolFeature>, ornaments: Vec<OrnamentFeature>) -> FrameVocab {
        let symbol_ids = symbols.iter().cloned().zip(0u32..).collect();
        let ornament_ids = ornaments.iter().cloned().zip(0u32..).collect();
        FrameVocab { symbols, ornaments, symbol_ids, ornament_ids }
    }

    pub fn symbols(&self) -> &[SymbolFeature] {
        &self.symbols
    }

    pub fn ornaments(&self) -> &[OrnamentFeature] {
        &self.ornaments
    }

    pub fn symbol_id(&self, s: &SymbolFeature) -> Option<u32> {
        self.symbol_ids.get(s).copied()
    }

    pub fn ornament_id(&self, o: &OrnamentFeature) -> Option<u32> {
        self.ornament_ids.get(o).copied()
    }

    pub fn symbol(&self, id: u32) -> Option<&SymbolFeature> {
        self.symbols.get(id as usize)
    }

    pub fn ornament(&self, id: u32) -> Option<&OrnamentFeature> {
        self.ornaments.get(id as usize)
    }

    /// Real note symbols (no continue/mask), for onset replacement.
    fn note_symbols(&self) -> Vec<SymbolFeature> {
        self.symbols
            .iter()
            .filter(|s| !matches!(s, SymbolFeature::Continue | SymbolFeature::Mask))
            .cloned()
            .collect()
    }

    /// Everything except the mask marker, for whole-frame replacement.
    fn replace_symbols(&self) -> Vec<SymbolFeature> {
        self.symbols
            .iter()
            .filter(|s| !matches!(s, SymbolFeature::Mask))
            .cloned()
            .collect()
    }
}

/// Applies the seven strategies in order. Frames already altered by an
/// earlier strategy are skipped by later ones, so `targets` never repeats a
/// frame and the loss target stays unambiguous.
pub fn apply_masking(
    grid: &FrameGrid,
    policy: &MaskingPolicy,
    vocab: &FrameVocab,
) -> (FrameGrid, Vec<MaskTarget>, MaskingReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut out = grid.clone();
    let mut targeted = vec![false; grid.frames.len()];
    let mut targets: Vec<MaskTarget> = Vec::new();
    let mut report = MaskingReport::default();

    let onset_frames: Vec<usize> = grid
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| !matches!(f.symbol, SymbolFeature::Continue | SymbolFeature::Mask))
        .map(|(i, _)| i)
        .collect();
    let ornament_frames: Vec<usize> = grid
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f.ornament, OrnamentFeature::Ornament(_)))
        .map(|(i, _)| i)
        .collect();
    let note_pool = vocab.note_symbols();
    let replace_pool = vocab.replace_symbols();

    let hit =
        |i: usize, strategy: Strategy, out: &mut FrameGrid, targets: &mut Vec<MaskTarget>,
         targeted: &mut Vec<bool>, edit: &dyn Fn(&mut Frame, &mut ChaCha8Rng), rng: &mut ChaCha8Rng| {
            targets.push(MaskTarget { frame: i, original: grid.frames[i].clone(), strategy });
            targeted[i] = true;
            edit(&mut out.frames[i], rng);
        };

    // i) mask whole frames
    {
        let (mut eligible, mut applied) = (0usize, 0usize);
        for i in 0..grid.frames.len() {
            if targeted[i] {
                continue;
            }
            eligible += 1;
            if rng.gen_bool(policy.frame_mask) {
                applied += 1;
                hit(i, Strategy::FrameMask, &mut out, &mut targets, &mut targeted, &|f, _| {
                    f.symbol = SymbolFeature::Mask;
                    f.ornament = OrnamentFeature::Mask;
                }, &mut rng);
            }
        }
        report.record(Strategy::FrameMask, eligible, applied);
    }

    // ii) replace whole frames with random symbols
    {
        let (mut eligible, mut applied) = (0usize, 0usize);
        for i in 0..grid.frames.len() {
            if targeted[i] {
                continue;
            }
            eligible += 1;
            if rng.gen_bool(policy.frame_replace) {
                applied += 1;
                let pool = replace_pool.clone();
                hit(i, Strategy::FrameReplace, &mut out, &mut targets, &mut targeted, &move |f, r| {
                    f.symbol = pool.choose(r).cloned().unwrap_or(SymbolFeature::Continue);
                }, &mut rng);
            }
        }
        report.record(Strategy::FrameReplace, eligible, applied);
    }

    // iii-v) note-onset strategies
    for (strategy, rate) in [
        (Strategy::OnsetMask, policy.onset_mask),
        (Strategy::OnsetReplace, policy.onset_replace),
        (Strategy::OnsetErase, policy.onset_erase),
    ] {
        let (mut eligible, mut applied) = (0usize, 0usize);
        for &i in &onset_frames {
            if targeted[i] {
                continue;
            }
            eligible += 1;
            if rng.gen_bool(rate) {
                applied += 1;
                let pool = note_pool.clone();
                hit(i, strategy, &mut out, &mut targets, &mut targeted, &move |f, r| match strategy {
                    Strategy::OnsetMask => f.symbol = SymbolFeature::Mask,
                    Strategy::OnsetReplace => {
                        f.symbol = pool.choose(r).cloned().unwrap_or(SymbolFeature::Continue)
                    }
                    _ => f.symbol = SymbolFeature::Continue,
                }, &mut rng);
            }
        }
        report.record(strategy, eligible, applied);
    }

    // vi) mask whole jeonggans; partially-targeted jeonggans still count as
    // units, only their untouched frames change
    {
        let jeonggans = grid.jeonggan_count();
        let mut applied = 0usize;
        for j in 0..jeonggans {
            if rng.gen_bool(policy.jeonggan_mask) {
                applied += 1;
                for k in 0..FRAMES_PER_JEONGGAN {
                    let i = j * FRAMES_PER_JEONGGAN + k;
                    if targeted[i] {
                        continue;
                    }
                    hit(i, Strategy::JeongganMask, &mut out, &mut targets, &mut targeted, &|f, _| {
                        f.symbol = SymbolFeature::Mask;
                        f.ornament = OrnamentFeature::Mask;
                    }, &mut rng);
                }
            }
        }
        report.record(Strategy::JeongganMask, jeonggans, applied);
    }

    // vii) mask ornaments on ornament-bearing frames
    {
        let (mut eligible, mut applied) = (0usize, 0usize);
        for &i in &ornament_frames {
            if targeted[i] {
                continue;
            }
            eligible += 1;
            if rng.gen_bool(policy.ornament_mask) {
                applied += 1;
                hit(i, Strategy::OrnamentMask, &mut out, &mut targets, &mut targeted, &|f, _| {
                    f.ornament = OrnamentFeature::Mask;
                }, &mut rng);
            }
        }
        report.record(Strategy::OrnamentMask, eligible, applied);
    }

    (out, targets, report)
}

/// Grid table format: a `#shape:` header then one `symbol-id ornament-id`
/// row per frame, six rows per jeonggan.
pub fn grid_to_table(grid: &FrameGrid, vocab: &FrameVocab) -> Result<String, PianorollError> {
    let mut out = String::from("#shape:");
    for len in &grid.gak_shape {
        out.push_str(&format!(" {}", len));
    }
    out.push('\n');
    for (i, frame) in grid.frames.iter().enumerate() {
        let s = vocab
            .symbol_id(&frame.symbol)
            .ok_or(PianorollError::MaskedFrame { frame: i })?;
        let o = vocab
            .ornament_id(&frame.ornament)
            .ok_or(PianorollError::MaskedFrame { frame: i })?;
        out.push_str(&format!("{} {}\n", s, o));
    }
    Ok(out)
}

pub fn grid_from_table(text: &str, vocab: &FrameVocab) -> Result<FrameGrid, PianorollError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let shape: Vec<usize> = header
        .strip_prefix("#shape:")
        .map(|rest| rest.split_whitespace().filter_map(|w| w.parse().ok()).collect())
        .unwrap_or_default();
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let parse = |w: Option<&str>| w.and_then(|w| w.parse::<u32>().ok());
        let (s, o) = (parse(cols.next()), parse(cols.next()));
        let (Some(s), Some(o)) = (s, o) else {
            return Err(PianorollError::BadFrameCount { frames: i, jeonggans: 0 });
        };
        let symbol = vocab.symbol(s).ok_or(PianorollError::MaskedFrame { frame: i })?.clone();
        let ornament = vocab.ornament(o).ok_or(PianorollError::MaskedFrame { frame: i })?.clone();
        frames.push(Frame { symbol, ornament });
    }
    let grid = FrameGrid { frames, gak_shape: shape };
    let want = grid.jeonggan_count() * FRAMES_PER_JEONGGAN;
    if grid.frames.len() != want {
        return Err(PianorollError::BadFrameCount {
            frames: grid.frames.len(),
            jeonggans: grid.jeonggan_count(),
        });
    }
    Ok(grid)
}

/// Quantization error bound: a part round-tripped through the grid moves each
/// onset by at most this much (quarter onsets land on the nearest lower
/// sixth).
pub fn quantization_bound() -> Frac {
    frac(1, 12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::{resolve_durations, PositionLabel, Yul};
    use crate::synth::{random_score, SynthConfig};

    fn lab(v: u8) -> PositionLabel {
        PositionLabel::new(v).unwrap()
    }

    fn grid_part(jeonggans: Vec<Jeonggan>) -> Part {
        Part::new(Instrument::Piri, vec![Gak::new(jeonggans)])
    }

    #[test]
    fn single_note_fills_head_frame() {
        let part = grid_part(vec![Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Hwang, 0))])]);
        let grid = to_frames(&part).unwrap();
        assert_eq!(grid.frames.len(), 6);
        assert_eq!(grid.frames[0].symbol, SymbolFeature::Pitch(PitchSymbol { yul: Yul::Hwang, octave: 0 }));
        for f in &grid.frames[1..] {
            assert_eq!(f.symbol, SymbolFeature::Continue);
        }
    }

    #[test]
    fn thirds_land_on_even_frames() {
        let part = grid_part(vec![Jeonggan::with_events(vec![
            (lab(4), Symbol::pitch(Yul::Im, 0)),
            (lab(6), Symbol::pitch(Yul::Nam, 0)),
            (lab(8), Symbol::pitch(Yul::Im, 0)),
        ])]);
        let grid = to_frames(&part).unwrap();
        let onsets: Vec<usize> = grid
            .frames
            .iter()
            .enumerate()
            .filter(|(_, f)| !matches!(f.symbol, SymbolFeature::Continue))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(onsets, vec![0, 2, 4]);
    }

    #[test]
    fn quarter_onset_rounds_down_to_frame_one() {
        assert_eq!(frame_of_onset(frac(1, 4)), 1);
        assert_eq!(frame_of_onset(frac(3, 4)), 4);
        assert_eq!(frame_of_onset(frac(1, 2)), 3);
    }

    #[test]
    fn colliding_onsets_are_rejected() {
        // 1/6 and 1/4 both quantize to frame 1
        let part = grid_part(vec![Jeonggan::with_events(vec![
            (lab(5), Symbol::pitch(Yul::Im, 0)),
            (lab(13), Symbol::pitch(Yul::Nam, 0)),
        ])]);
        assert!(matches!(to_frames(&part), Err(PianorollError::Collision { .. })));
    }

    #[test]
    fn all_continue_grid_decodes_to_empty_jeonggans() {
        let grid = FrameGrid { frames: vec![Frame::sustain(); 24], gak_shape: vec![4] };
        let part = from_frames(&grid, Instrument::Piri).unwrap();
        assert_eq!(part.gaks.len(), 1);
        assert!(part.gaks[0].jeonggans.iter().all(|j| j.is_empty()));
    }

    #[test]
    fn half_onsets_decode_to_half_labels() {
        let mut frames = vec![Frame::sustain(); 6];
        frames[0].symbol = SymbolFeature::Pitch(PitchSymbol { yul: Yul::Hwang, octave: 0 });
        frames[3].symbol = SymbolFeature::Pitch(PitchSymbol { yul: Yul::Jung, octave: 0 });
        let grid = FrameGrid { frames, gak_shape: vec![1] };
        let part = from_frames(&grid, Instrument::Piri).unwrap();
        let labels: Vec<u8> =
            part.gaks[0].jeonggans[0].events.iter().map(|(l, _)| l.value()).collect();
        assert_eq!(labels, vec![10, 11]);
    }

    #[test]
    fn round_trip_on_sixth_aligned_canonical_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let cfg = SynthConfig {
            canonical_labels: true,
            avoid_quarters: true,
            ..SynthConfig::default()
        };
        for _ in 0..200 {
            let score = random_score(&mut rng, &cfg);
            for part in &score.parts {
                let grid = to_frames(part).unwrap();
                let back = from_frames(&grid, part.instrument).unwrap();
                assert_eq!(&back, part);
                assert_eq!(to_frames(&back).unwrap(), grid);
            }
        }
    }

    #[test]
    fn quarter_onsets_move_by_at_most_one_twelfth() {
        let part = grid_part(vec![Jeonggan::with_events(vec![
            (lab(12), Symbol::pitch(Yul::Hwang, 0)),
            (lab(13), Symbol::pitch(Yul::Jung, 0)),
            (lab(14), Symbol::pitch(Yul::Im, 0)),
            (lab(15), Symbol::pitch(Yul::Nam, 0)),
        ])]);
        let grid = to_frames(&part).unwrap();
        let back = from_frames(&grid, part.instrument).unwrap();
        let orig = resolve_durations(&part).unwrap();
        let round = resolve_durations(&back).unwrap();
        assert_eq!(orig.len(), round.len());
        for (a, b) in orig.iter().zip(&round) {
            let diff = if a.onset > b.onset { a.onset - b.onset } else { b.onset - a.onset };
            assert!(diff <= quantization_bound());
        }
    }

    #[test]
    fn note_count_preserved_by_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let cfg = SynthConfig { ornament_prob: 0.3, ..SynthConfig::default() };
        for _ in 0..100 {
            let score = random_score(&mut rng, &cfg);
            for part in &score.parts {
                let grid = match to_frames(part) {
                    Ok(g) => g,
                    // quarter/sixth collisions are legitimately rejected
                    Err(PianorollError::Collision { .. }) => continue,
                    Err(e) => panic!("{e}"),
                };
                let events = resolve_durations(part).unwrap().len();
                let onsets = grid
                    .frames
                    .iter()
                    .filter(|f| !matches!(f.symbol, SymbolFeature::Continue))
                    .count();
                // the leading rest is synthesized by resolve_durations, not a frame
                let leading_rest = part
                    .gaks
                    .first()
                    .and_then(|g| g.jeonggans.first())
                    .map(|j| j.is_empty() || crate::notation::onset_of(j.events[0].0) > frac(0, 1))
                    .unwrap_or(false)
                    && part.gaks.iter().flat_map(|g| &g.jeonggans).any(|j| !j.is_empty());
                assert_eq!(onsets + usize::from(leading_rest), events);
            }
        }
    }

    #[test]
    fn zero_policy_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let score = random_score(&mut rng, &SynthConfig { avoid_quarters: true, ..SynthConfig::default() });
        let grid = to_frames(&score.parts[0]).unwrap();
        let vocab = FrameVocab::build(&score.parts);
        let (masked, targets, _) = apply_masking(&grid, &MaskingPolicy::zero(1), &vocab);
        assert_eq!(masked, grid);
        assert!(targets.is_empty());
    }

    #[test]
    fn masked_grid_differs_exactly_at_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let cfg = SynthConfig { avoid_quarters: true, ornament_prob: 0.4, ..SynthConfig::default() };
        for seed in 0..20 {
            let score = random_score(&mut rng, &cfg);
            let grid = to_frames(&score.parts[0]).unwrap();
            let vocab = FrameVocab::build(&score.parts);
            let policy = MaskingPolicy { seed, ..MaskingPolicy::default() };
            let (masked, targets, _) = apply_masking(&grid, &policy, &vocab);
            let mut hit: Vec<usize> = targets.iter().map(|t| t.frame).collect();
            hit.sort_unstable();
            hit.dedup();
            assert_eq!(hit.len(), targets.len(), "duplicate targets");
            for (i, (a, b)) in grid.frames.iter().zip(&masked.frames).enumerate() {
                if hit.binary_search(&i).is_ok() {
                    assert_eq!(&targets.iter().find(|t| t.frame == i).unwrap().original, a);
                } else {
                    assert_eq!(a, b, "frame {} changed without a target", i);
                }
            }
        }
    }

    #[test]
    fn masking_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let score = random_score(&mut rng, &SynthConfig { avoid_quarters: true, ..SynthConfig::default() });
        let grid = to_frames(&score.parts[0]).unwrap();
        let vocab = FrameVocab::build(&score.parts);
        let policy = MaskingPolicy { seed: 9, ..MaskingPolicy::default() };
        assert_eq!(apply_masking(&grid, &policy, &vocab), apply_masking(&grid, &policy, &vocab));
    }

    #[test]
    fn table_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let score = random_score(&mut rng, &SynthConfig { avoid_quarters: true, ..SynthConfig::default() });
        let grid = to_frames(&score.parts[0]).unwrap();
        let vocab = FrameVocab::build(&score.parts);
        let table = grid_to_table(&grid, &vocab).unwrap();
        let back = grid_from_table(&table, &vocab).unwrap();
        assert_eq!(back, grid);
    }
}
