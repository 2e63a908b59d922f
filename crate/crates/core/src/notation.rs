//! Score data model for Jeongganbo and rational-time duration resolution.
//!
//! Jeongganbo writes music into a grid of boxes. One box (a *jeonggan*) is one
//! beat; the placement of characters inside the box subdivides the beat. A row
//! of boxes is a *gak* (the phrase unit, 4 to 20 beats), and every instrument
//! of a piece carries the same box grid. Durations are never written: a note
//! lasts until the next written note, and empty boxes sustain.
//!
//! All timing here is exact rational arithmetic in jeonggan units. The in-box
//! subdivisions are sixths and quarters, so every denominator divides 12.

use std::fmt;

use num_rational::Ratio;
use num_traits::Zero;
use thiserror::Error;

/// Exact time value in jeonggan units.
pub type Frac = Ratio<i64>;

/// Shorthand constructor; reduces automatically.
pub fn frac(numer: i64, denom: i64) -> Frac {
    Ratio::new(numer, denom)
}

/// Renders `0`, `2`, `1/2`, `5/6`, ...
pub fn frac_text(f: Frac) -> String {
    if f.denom() == &1 {
        f.numer().to_string()
    } else {
        format!("{}/{}", f.numer(), f.denom())
    }
}

/// Parses the output of [`frac_text`].
pub fn parse_frac(s: &str) -> Option<Frac> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.parse().ok()?;
            let d: i64 = d.parse().ok()?;
            if d == 0 {
                None
            } else {
                Some(frac(n, d))
            }
        }
        None => s.parse::<i64>().ok().map(Frac::from),
    }
}

/// The twelve yul (pitch-class) names, in cycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Yul {
    Hwang,
    Dae,
    Tae,
    Hyeop,
    Go,
    Jung,
    Yu,
    Im,
    I,
    Nam,
    Mu,
    Eung,
}

impl Yul {
    pub const ALL: [Yul; 12] = [
        Yul::Hwang,
        Yul::Dae,
        Yul::Tae,
        Yul::Hyeop,
        Yul::Go,
        Yul::Jung,
        Yul::Yu,
        Yul::Im,
        Yul::I,
        Yul::Nam,
        Yul::Mu,
        Yul::Eung,
    ];

    pub fn index(self) -> usize {
        Yul::ALL.iter().position(|y| *y == self).unwrap()
    }

    pub fn from_index(i: usize) -> Yul {
        Yul::ALL[i % 12]
    }

    pub fn name(self) -> &'static str {
        match self {
            Yul::Hwang => "hwang",
            Yul::Dae => "dae",
            Yul::Tae => "tae",
            Yul::Hyeop => "hyeop",
            Yul::Go => "go",
            Yul::Jung => "jung",
            Yul::Yu => "yu",
            Yul::Im => "im",
            Yul::I => "i",
            Yul::Nam => "nam",
            Yul::Mu => "mu",
            Yul::Eung => "eung",
        }
    }

    pub fn from_name(s: &str) -> Option<Yul> {
        Yul::ALL.iter().copied().find(|y| y.name() == s)
    }
}

/// Octaves run from two below the central octave to two above it, matching the
/// single and doubled low/high glyph prefixes of the notation.
pub const OCTAVE_MIN: i8 = -2;
pub const OCTAVE_MAX: i8 = 2;

/// A pitch: yul name plus octave displacement from the central octave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PitchSymbol {
    pub yul: Yul,
    pub octave: i8,
}

impl PitchSymbol {
    pub fn new(yul: Yul, octave: i8) -> Result<PitchSymbol, NotationError> {
        if !(OCTAVE_MIN..=OCTAVE_MAX).contains(&octave) {
            return Err(NotationError::OctaveOutOfRange(octave));
        }
        Ok(PitchSymbol { yul, octave })
    }

    /// ASCII spelling: `-`/`--` prefix one/two octaves down, `+`/`++` up.
    pub fn token(&self) -> String {
        let prefix = match self.octave {
            -2 => "--",
            -1 => "-",
            0 => "",
            1 => "+",
            2 => "++",
            _ => unreachable!("octave out of range"),
        };
        format!("{}{}", prefix, self.yul.name())
    }

    pub fn parse_token(s: &str) -> Option<PitchSymbol> {
        let (octave, rest) = if let Some(r) = s.strip_prefix("--") {
            (-2, r)
        } else if let Some(r) = s.strip_prefix("++") {
            (2, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (-1, r)
        } else if let Some(r) = s.strip_prefix('+') {
            (1, r)
        } else {
            (0, s)
        };
        Yul::from_name(rest).map(|yul| PitchSymbol { yul, octave })
    }

    /// Transposes by `steps` along the 12-yul cycle; the octave absorbs the
    /// wrap-around and is clamped into the representable range.
    pub fn transposed(&self, steps: i32) -> PitchSymbol {
        let abs = self.octave as i32 * 12 + self.yul.index() as i32 + steps;
        let octave = abs.div_euclid(12).clamp(OCTAVE_MIN as i32, OCTAVE_MAX as i32) as i8;
        let yul = Yul::from_index(abs.rem_euclid(12) as usize);
        PitchSymbol { yul, octave }
    }
}

impl fmt::Display for PitchSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.token())
    }
}

/// An attached ornament (sigimsae without duration), written at the side of a
/// pitch. Glyph ids are opaque keys into a configurable table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrnamentSymbol {
    pub glyph_id: String,
}

impl OrnamentSymbol {
    pub fn new(glyph_id: impl Into<String>) -> OrnamentSymbol {
        OrnamentSymbol { glyph_id: glyph_id.into() }
    }
}

/// What occupies a position: a pitch, an explicit rest, or a timed sigimsae
/// (a playing instruction that takes up time like a note).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymbolBase {
    Pitch(PitchSymbol),
    Rest,
    TimedSigimsae(String),
}

/// A positioned character plus any attached ornaments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub base: SymbolBase,
    pub ornaments: Vec<OrnamentSymbol>,
}

impl Symbol {
    pub fn pitch(yul: Yul, octave: i8) -> Symbol {
        Symbol {
            base: SymbolBase::Pitch(PitchSymbol { yul, octave }),
            ornaments: Vec::new(),
        }
    }

    pub fn rest() -> Symbol {
        Symbol { base: SymbolBase::Rest, ornaments: Vec::new() }
    }

    pub fn timed_sigimsae(glyph_id: impl Into<String>) -> Symbol {
        Symbol {
            base: SymbolBase::TimedSigimsae(glyph_id.into()),
            ornaments: Vec::new(),
        }
    }

    pub fn with_ornament(mut self, glyph_id: impl Into<String>) -> Symbol {
        self.ornaments.push(OrnamentSymbol::new(glyph_id));
        self
    }
}

/// In-box position, 0..=15. The value picks both a box layout family and a
/// cell within it; see [`onset_of`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PositionLabel(u8);

impl PositionLabel {
    pub const COUNT: usize = 16;

    pub fn new(value: u8) -> Result<PositionLabel, NotationError> {
        if value > 15 {
            return Err(NotationError::LabelOutOfRange(value));
        }
        Ok(PositionLabel(value))
    }

    pub const fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = PositionLabel> {
        (0u8..16).map(PositionLabel)
    }
}

impl fmt::Display for PositionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Onset fraction of a position label within its jeonggan.
///
/// Layout families: 0 fills the box; 1 takes the top half with 2/3 splitting
/// the bottom half in two; 4-9 form a 3x2 grid of sixths; 10/11 halve the box;
/// 12-15 quarter it. Labels 0, 1, 4, 10 and 12 all start the beat.
pub fn onset_of(label: PositionLabel) -> Frac {
    match label.value() {
        0 => frac(0, 1),
        1 => frac(0, 1),
        2 => frac(1, 2),
        3 => frac(3, 4),
        4 => frac(0, 1),
        5 => frac(1, 6),
        6 => frac(1, 3),
        7 => frac(1, 2),
        8 => frac(2, 3),
        9 => frac(5, 6),
        10 => frac(0, 1),
        11 => frac(1, 2),
        12 => frac(0, 1),
        13 => frac(1, 4),
        14 => frac(1, 2),
        15 => frac(3, 4),
        _ => unreachable!("label out of range"),
    }
}

/// Number of distinct in-jeonggan onsets across all label families.
pub const SUBBEAT_COUNT: usize = 8;

/// The sorted onset vocabulary: 0, 1/6, 1/4, 1/3, 1/2, 2/3, 3/4, 5/6.
pub fn subbeat_onsets() -> [Frac; SUBBEAT_COUNT] {
    [
        frac(0, 1),
        frac(1, 6),
        frac(1, 4),
        frac(1, 3),
        frac(1, 2),
        frac(2, 3),
        frac(3, 4),
        frac(5, 6),
    ]
}

/// Index of an onset in the sorted vocabulary, if it is representable.
pub fn subbeat_index(onset: Frac) -> Option<usize> {
    subbeat_onsets().iter().position(|o| *o == onset)
}

/// One grid box: an ordered list of positioned symbols. Empty means the
/// previous note sustains through this beat.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Jeonggan {
    pub events: Vec<(PositionLabel, Symbol)>,
}

impl Jeonggan {
    pub fn empty() -> Jeonggan {
        Jeonggan { events: Vec::new() }
    }

    pub fn with_events(events: Vec<(PositionLabel, Symbol)>) -> Jeonggan {
        Jeonggan { events }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn onsets(&self) -> Vec<Frac> {
        self.events.iter().map(|(l, _)| onset_of(*l)).collect()
    }
}

/// A line of jeonggans; the phrase unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Gak {
    pub jeonggans: Vec<Jeonggan>,
}

impl Gak {
    pub fn new(jeonggans: Vec<Jeonggan>) -> Gak {
        Gak { jeonggans }
    }

    pub fn empty(len: usize) -> Gak {
        Gak { jeonggans: vec![Jeonggan::empty(); len] }
    }

    pub fn len(&self) -> usize {
        self.jeonggans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jeonggans.is_empty()
    }
}

pub const GAK_MIN_LEN: usize = 4;
pub const GAK_MAX_LEN: usize = 20;

/// The six court-ensemble instruments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instrument {
    Piri,
    Daegeum,
    Haegeum,
    Ajaeng,
    Gayageum,
    Geomungo,
}

impl Instrument {
    pub const ALL: [Instrument; 6] = [
        Instrument::Piri,
        Instrument::Daegeum,
        Instrument::Haegeum,
        Instrument::Ajaeng,
        Instrument::Gayageum,
        Instrument::Geomungo,
    ];

    pub fn index(self) -> usize {
        Instrument::ALL.iter().position(|i| *i == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Instrument::Piri => "piri",
            Instrument::Daegeum => "daegeum",
            Instrument::Haegeum => "haegeum",
            Instrument::Ajaeng => "ajaeng",
            Instrument::Gayageum => "gayageum",
            Instrument::Geomungo => "geomungo",
        }
    }

    pub fn from_name(s: &str) -> Option<Instrument> {
        Instrument::ALL.iter().copied().find(|i| i.name() == s)
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// One instrument's melody: an ordered list of gaks.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub instrument: Instrument,
    pub gaks: Vec<Gak>,
}

impl Part {
    pub fn new(instrument: Instrument, gaks: Vec<Gak>) -> Part {
        Part { instrument, gaks }
    }

    pub fn total_jeonggans(&self) -> usize {
        self.gaks.iter().map(Gak::len).sum()
    }

    /// Jeonggan count of each gak in order.
    pub fn gak_shape(&self) -> Vec<usize> {
        self.gaks.iter().map(Gak::len).collect()
    }

    /// Clones a window of gaks as a standalone part.
    pub fn slice_gaks(&self, range: std::ops::Range<usize>) -> Part {
        Part {
            instrument: self.instrument,
            gaks: self.gaks[range].to_vec(),
        }
    }
}

/// A complete piece: all instrument parts over one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub title: String,
    pub parts: Vec<Part>,
}

impl Score {
    pub fn new(title: impl Into<String>, parts: Vec<Part>) -> Score {
        Score { title: title.into(), parts }
    }

    /// Grid shape taken from the first part.
    pub fn gak_shape(&self) -> Vec<usize> {
        self.parts.first().map(|p| p.gak_shape()).unwrap_or_default()
    }
}

/// A resolved timed event: absolute rational onset and duration in jeonggan
/// units from the start of the part.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteEvent {
    pub onset: Frac,
    pub duration: Frac,
    pub symbol: Symbol,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotationError {
    #[error("position label {0} out of range 0..=15")]
    LabelOutOfRange(u8),
    #[error("octave {0} outside [-2, 2]")]
    OctaveOutOfRange(i8),
    #[error("onsets not strictly increasing in gak {gak}, jeonggan {jeonggan}")]
    InvalidOrder { gak: usize, jeonggan: usize },
}

/// Resolves positioned symbols into timed events.
///
/// A symbol lasts until the next symbol in the flattened part; empty jeonggans
/// contribute a whole beat of sustain each; the final event runs to the end of
/// the last jeonggan. Leading empty jeonggans become an explicit rest event.
pub fn resolve_durations(part: &Part) -> Result<Vec<NoteEvent>, NotationError> {
    let total = Frac::from(part.total_jeonggans() as i64);
    let mut placed: Vec<(Frac, Symbol)> = Vec::new();
    let mut beat = 0i64;
    for (gi, gak) in part.gaks.iter().enumerate() {
        for (ji, jg) in gak.jeonggans.iter().enumerate() {
            let mut prev: Option<Frac> = None;
            for (label, symbol) in &jg.events {
                let within = onset_of(*label);
                if let Some(p) = prev {
                    if within <= p {
                        return Err(NotationError::InvalidOrder { gak: gi, jeonggan: ji });
                    }
                }
                prev = Some(within);
                placed.push((Frac::from(beat) + within, symbol.clone()));
            }
            beat += 1;
        }
    }

    if placed.is_empty() {
        if total.is_zero() {
            return Ok(Vec::new());
        }
        return Ok(vec![NoteEvent {
            onset: Frac::zero(),
            duration: total,
            symbol: Symbol::rest(),
        }]);
    }

    let mut events = Vec::with_capacity(placed.len() + 1);
    if placed[0].0 > Frac::zero() {
        events.push(NoteEvent {
            onset: Frac::zero(),
            duration: placed[0].0,
            symbol: Symbol::rest(),
        });
    }
    for i in 0..placed.len() {
        let end = if i + 1 < placed.len() { placed[i + 1].0 } else { total };
        events.push(NoteEvent {
            onset: placed[i].0,
            duration: end - placed[i].0,
            symbol: placed[i].1.clone(),
        });
    }
    Ok(events)
}

/// Rule identifiers carried by [`Violation`].
pub mod rules {
    pub const PART_LENGTH_MISMATCH: &str = "part-length-mismatch";
    pub const GAK_LENGTH_RANGE: &str = "gak-length-range";
    pub const LABEL_0_NOT_SOLE: &str = "label-0-not-sole";
    pub const LABEL_1_NO_FOLLOWER: &str = "label-1-no-follower";
    pub const NON_INCREASING_ONSET: &str = "non-increasing-onset";
    pub const EMPTY_PART: &str = "empty-part";
    pub const OCTAVE_RANGE: &str = "octave-range";
}

/// A broken invariant with its location. Violations are data, not faults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub part: Option<usize>,
    pub gak: Option<usize>,
    pub jeonggan: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)?;
        if let Some(p) = self.part {
            write!(f, " part={}", p)?;
        }
        if let Some(g) = self.gak {
            write!(f, " gak={}", g)?;
        }
        if let Some(j) = self.jeonggan {
            write!(f, " jeonggan={}", j)?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

fn violation(
    rule: &'static str,
    part: Option<usize>,
    gak: Option<usize>,
    jeonggan: Option<usize>,
    detail: String,
) -> Violation {
    Violation { rule, part, gak, jeonggan, detail }
}

/// Checks every structural invariant of a score. Returns an empty list iff
/// the score is well-formed; an empty list guarantees [`resolve_durations`]
/// succeeds on every part.
pub fn validate(score: &Score) -> Vec<Violation> {
    let mut out = Vec::new();

    let shape = score.gak_shape();
    for (pi, part) in score.parts.iter().enumerate() {
        if part.gaks.is_empty() {
            out.push(violation(rules::EMPTY_PART, Some(pi), None, None, String::new()));
        }
        if part.gak_shape() != shape {
            out.push(violation(
                rules::PART_LENGTH_MISMATCH,
                Some(pi),
                None,
                None,
                format!(
                    "part {} has {} gaks of shape {:?}, part 0 has {:?}",
                    part.instrument,
                    part.gaks.len(),
                    part.gak_shape(),
                    shape
                ),
            ));
        }

        for (gi, gak) in part.gaks.iter().enumerate() {
            if !(GAK_MIN_LEN..=GAK_MAX_LEN).contains(&gak.len()) {
                out.push(violation(
                    rules::GAK_LENGTH_RANGE,
                    Some(pi),
                    Some(gi),
                    None,
                    format!("{} jeonggans", gak.len()),
                ));
            }
            for (ji, jg) in gak.jeonggans.iter().enumerate() {
                check_jeonggan(jg, pi, gi, ji, &mut out);
            }
        }
    }
    out
}

fn check_jeonggan(jg: &Jeonggan, pi: usize, gi: usize, ji: usize, out: &mut Vec<Violation>) {
    let has_zero = jg.events.iter().any(|(l, _)| l.value() == 0);
    if has_zero && jg.events.len() > 1 {
        out.push(violation(
            rules::LABEL_0_NOT_SOLE,
            Some(pi),
            Some(gi),
            Some(ji),
            format!("{} events alongside label 0", jg.events.len()),
        ));
    }
    if let Some((first, _)) = jg.events.first() {
        if first.value() == 1 {
            let follower = jg.events[1..]
                .iter()
                .any(|(l, _)| matches!(l.value(), 2 | 3 | 6 | 7 | 8 | 9));
            if !follower {
                out.push(violation(
                    rules::LABEL_1_NO_FOLLOWER,
                    Some(pi),
                    Some(gi),
                    Some(ji),
                    String::new(),
                ));
            }
        }
    }
    let mut prev: Option<Frac> = None;
    for (label, symbol) in &jg.events {
        let onset = onset_of(*label);
        if let Some(p) = prev {
            if onset <= p {
                out.push(violation(
                    rules::NON_INCREASING_ONSET,
                    Some(pi),
                    Some(gi),
                    Some(ji),
                    format!("label {} does not advance past {}", label, frac_text(p)),
                ));
            }
        }
        prev = Some(onset);
        if let SymbolBase::Pitch(p) = &symbol.base {
            if !(OCTAVE_MIN..=OCTAVE_MAX).contains(&p.octave) {
                out.push(violation(
                    rules::OCTAVE_RANGE,
                    Some(pi),
                    Some(gi),
                    Some(ji),
                    format!("octave {}", p.octave),
                ));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(v: u8) -> PositionLabel {
        PositionLabel::new(v).unwrap()
    }

    fn one_gak_part(jeonggans: Vec<Jeonggan>) -> Part {
        Part::new(Instrument::Piri, vec![Gak::new(jeonggans)])
    }

    #[test]
    fn onset_table_pinned_values() {
        assert_eq!(onset_of(lab(8)), frac(2, 3));
        assert_eq!(onset_of(lab(0)), frac(0, 1));
        assert_eq!(onset_of(lab(13)), frac(1, 4));
    }

    #[test]
    fn onset_table_image_and_zero_preimage() {
        let mut image: Vec<Frac> = PositionLabel::all().map(onset_of).collect();
        image.sort();
        image.dedup();
        assert_eq!(image, subbeat_onsets().to_vec());

        let zeros: Vec<u8> = PositionLabel::all()
            .filter(|l| onset_of(*l).is_zero())
            .map(|l| l.value())
            .collect();
        assert_eq!(zeros, vec![0, 1, 4, 10, 12]);
    }

    #[test]
    fn subbeat_index_round_trips() {
        for (i, o) in subbeat_onsets().iter().enumerate() {
            assert_eq!(subbeat_index(*o), Some(i));
        }
        assert_eq!(subbeat_index(frac(1, 12)), None);
    }

    #[test]
    fn sustain_extends_into_empty_jeonggan() {
        let part = one_gak_part(vec![
            Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Hwang, 0))]),
            Jeonggan::empty(),
        ]);
        let events = resolve_durations(&part).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].onset, frac(0, 1));
        assert_eq!(events[0].duration, frac(2, 1));
    }

    #[test]
    fn half_split_jeonggan() {
        let part = one_gak_part(vec![Jeonggan::with_events(vec![
            (lab(10), Symbol::pitch(Yul::Tae, 0)),
            (lab(11), Symbol::pitch(Yul::Jung, 0)),
        ])]);
        let events = resolve_durations(&part).unwrap();
        assert_eq!(events[0].onset, frac(0, 1));
        assert_eq!(events[1].onset, frac(1, 2));
        assert_eq!(events[0].duration, frac(1, 2));
        assert_eq!(events[1].duration, frac(1, 2));
    }

    #[test]
    fn sixth_grid_durations() {
        let part = one_gak_part(vec![Jeonggan::with_events(vec![
            (lab(4), Symbol::pitch(Yul::Im, 0)),
            (lab(5), Symbol::pitch(Yul::Nam, 0)),
            (lab(6), Symbol::pitch(Yul::Im, 0)),
        ])]);
        let events = resolve_durations(&part).unwrap();
        let durations: Vec<Frac> = events.iter().map(|e| e.duration).collect();
        assert_eq!(durations, vec![frac(1, 6), frac(1, 6), frac(2, 3)]);
    }

    #[test]
    fn leading_empty_jeonggans_become_a_rest() {
        let part = one_gak_part(vec![
            Jeonggan::empty(),
            Jeonggan::with_events(vec![(lab(0), Symbol::pitch(Yul::Nam, 0))]),
        ]);
        let events = resolve_durations(&part).unwrap();
        assert_eq!(events[0].symbol, Symbol::rest());
        assert_eq!(events[0].duration, frac(1, 1));
        assert_eq!(events[1].onset, frac(1, 1));
    }

    #[test]
    fn non_increasing_onsets_rejected() {
        let part = one_gak_part(vec![Jeonggan::with_events(vec![
            (lab(2), Symbol::pitch(Yul::Jung, 0)),
            (lab(1), Symbol::pitch(Yul::Im, 0)),
        ])]);
        assert_eq!(
            resolve_durations(&part),
            Err(NotationError::InvalidOrder { gak: 0, jeonggan: 0 })
        );
    }

    #[test]
    fn duration_conservation() {
        // every event duration plus the leading rest must add up to the grid
        let part = Part::new(
            Instrument::Daegeum,
            vec![
                Gak::new(vec![
                    Jeonggan::empty(),
                    Jeonggan::with_events(vec![(lab(10), Symbol::pitch(Yul::Hwang, 0)), (lab(11), Symbol::pitch(Yul::Dae, 1))]),
                    Jeonggan::with_events(vec![(lab(0), Symbol::rest())]),
                    Jeonggan::empty(),
                ]),
                Gak::new(vec![
                    Jeonggan::with_events(vec![(lab(4), Symbol::pitch(Yul::Im, 0)), (lab(8), Symbol::pitch(Yul::Nam, 0))]),
                    Jeonggan::empty(),
                    Jeonggan::empty(),
                    Jeonggan::with_events(vec![(lab(0), Symbol::timed_sigimsae("ka"))]),
                ]),
            ],
        );
        let events = resolve_durations(&part).unwrap();
        let sum: Frac = events.iter().map(|e| e.duration).sum();
        assert_eq!(sum, Frac::from(part.total_jeonggans() as i64));
        for w in events.windows(2) {
            assert_eq!(w[0].onset + w[0].duration, w[1].onset);
        }
    }

    #[test]
    fn validate_part_length_mismatch() {
        let a = Part::new(Instrument::Piri, vec![Gak::empty(4); 3]);
        let b = Part::new(Instrument::Daegeum, vec![Gak::empty(4); 2]);
        let score = Score::new("t", vec![a, b]);
        let v = validate(&score);
        assert!(v.iter().any(|v| v.rule == rules::PART_LENGTH_MISMATCH));
    }

    #[test]
    fn validate_label_zero_must_be_sole() {
        let jg = Jeonggan::with_events(vec![
            (lab(0), Symbol::pitch(Yul::Hwang, 0)),
            (lab(2), Symbol::pitch(Yul::Jung, 0)),
        ]);
        let score = Score::new("t", vec![Part::new(Instrument::Piri, vec![Gak::new(vec![
            jg,
            Jeonggan::empty(),
            Jeonggan::empty(),
            Jeonggan::empty(),
        ])])]);
        let v = validate(&score);
        assert!(v.iter().any(|v| v.rule == rules::LABEL_0_NOT_SOLE));
    }

    #[test]
    fn validate_clean_score_is_empty() {
        let score = Score::new(
            "t",
            vec![Part::new(Instrument::Piri, vec![Gak::empty(4); 4])],
        );
        assert!(validate(&score).is_empty());
    }

    #[test]
    fn validate_label_one_needs_follower() {
        let jg = Jeonggan::with_events(vec![(lab(1), Symbol::pitch(Yul::Hwang, 0))]);
        let score = Score::new("t", vec![Part::new(Instrument::Piri, vec![Gak::new(vec![
            jg,
            Jeonggan::empty(),
            Jeonggan::empty(),
            Jeonggan::empty(),
        ])])]);
        let v = validate(&score);
        assert!(v.iter().any(|v| v.rule == rules::LABEL_1_NO_FOLLOWER));
    }

    #[test]
    fn transposition_wraps_the_cycle() {
        let p = PitchSymbol { yul: Yul::Nam, octave: 0 };
        let up = p.transposed(4);
        assert_eq!(up.yul, Yul::Dae);
        assert_eq!(up.octave, 1);
        let back = up.transposed(-4);
        assert_eq!(back, p);
    }

    #[test]
    fn pitch_token_round_trip() {
        for yul in Yul::ALL {
            for octave in OCTAVE_MIN..=OCTAVE_MAX {
                let p = PitchSymbol { yul, octave };
                assert_eq!(PitchSymbol::parse_token(&p.token()), Some(p));
            }
        }
        assert_eq!(PitchSymbol::parse_token("hwong"), None);
    }
}
