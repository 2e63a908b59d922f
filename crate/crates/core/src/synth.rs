//! Random well-formed score generation for fuzzing and desk-scale corpora.
//!
//! Generated jeonggans always stay inside a single layout family, which is
//! exactly what the notation itself can express; mixing families in one box
//! has no printable form.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::notation::{
    frac, Frac, Gak, Instrument, Jeonggan, Part, PositionLabel, Score, Symbol, Yul,
};

/// Knobs for the generator. Defaults produce small but varied pieces.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub parts: usize,
    pub gaks_min: usize,
    pub gaks_max: usize,
    pub jeonggans_min: usize,
    pub jeonggans_max: usize,
    /// Probability that a jeonggan is left empty (sustain).
    pub empty_prob: f64,
    pub rest_prob: f64,
    pub sigimsae_prob: f64,
    pub ornament_prob: f64,
    /// Restrict labels to what the canonicalizer emits, so label-level
    /// round-trips through onset-only encodings hold.
    pub canonical_labels: bool,
    /// Skip the quarter-grid families (labels 1-3 and 12-15), whose onsets a
    /// six-frame grid cannot represent exactly.
    pub avoid_quarters: bool,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            parts: 2,
            gaks_min: 4,
            gaks_max: 6,
            jeonggans_min: 4,
            jeonggans_max: 8,
            empty_prob: 0.25,
            rest_prob: 0.05,
            sigimsae_prob: 0.05,
            ornament_prob: 0.2,
            canonical_labels: false,
            avoid_quarters: false,
        }
    }
}

pub fn random_score(rng: &mut impl Rng, cfg: &SynthConfig) -> Score {
    let gak_count = rng.gen_range(cfg.gaks_min..=cfg.gaks_max);
    let shape: Vec<usize> = (0..gak_count)
        .map(|_| rng.gen_range(cfg.jeonggans_min..=cfg.jeonggans_max))
        .collect();
    let mut instruments = Instrument::ALL.to_vec();
    instruments.shuffle(rng);
    let parts = instruments
        .into_iter()
        .take(cfg.parts.min(6))
        .map(|instrument| random_part(rng, cfg, instrument, &shape))
        .collect();
    Score::new(format!("synthetic-{}", rng.gen_range(0u32..1_000_000)), parts)
}

pub fn random_part(
    rng: &mut impl Rng,
    cfg: &SynthConfig,
    instrument: Instrument,
    shape: &[usize],
) -> Part {
    let gaks = shape
        .iter()
        .map(|len| Gak::new((0..*len).map(|_| random_jeonggan(rng, cfg)).collect()))
        .collect();
    Part::new(instrument, gaks)
}

pub fn random_jeonggan(rng: &mut impl Rng, cfg: &SynthConfig) -> Jeonggan {
    if rng.gen_bool(cfg.empty_prob) {
        return Jeonggan::empty();
    }
    let labels = random_labels(rng, cfg);
    let events = labels
        .into_iter()
        .map(|l| (l, random_symbol(rng, cfg)))
        .collect();
    Jeonggan::with_events(events)
}

fn random_labels(rng: &mut impl Rng, cfg: &SynthConfig) -> Vec<PositionLabel> {
    // each entry is one label family's valid subsets, as label values
    // family ids: 0 whole box, 1 top/bottom split, 2 sixths, 3 halves, 4 quarters
    let family: u8 = if cfg.avoid_quarters {
        [0u8, 2, 3].choose(rng).copied().unwrap()
    } else {
        rng.gen_range(0..5)
    };
    let picked: Vec<u8> = match family {
        // whole box
        0 => vec![0],
        // top half + split bottom half; label 1 needs a follower
        1 => [
            vec![1, 2],
            vec![1, 3],
            vec![1, 2, 3],
            vec![2],
            vec![3],
            vec![2, 3],
        ]
        .choose(rng)
        .cloned()
        .unwrap(),
        // 3x2 sixth grid: any non-empty increasing subset
        2 => {
            let mut labels: Vec<u8> = (4..=9).filter(|_| rng.gen_bool(0.4)).collect();
            if labels.is_empty() {
                labels.push(rng.gen_range(4..=9));
            }
            labels
        }
        // halves
        3 => [vec![10], vec![11], vec![10, 11]].choose(rng).cloned().unwrap(),
        // quarters
        _ => {
            let mut labels: Vec<u8> = (12..=15).filter(|_| rng.gen_bool(0.4)).collect();
            if labels.is_empty() {
                labels.push(rng.gen_range(12..=15));
            }
            labels
        }
    };
    let labels: Vec<PositionLabel> = picked
        .into_iter()
        .map(|v| PositionLabel::new(v).unwrap())
        .collect();
    if cfg.canonical_labels {
        let onsets: Vec<Frac> = labels.iter().map(|l| crate::notation::onset_of(*l)).collect();
        canonical_label_values(&onsets)
            .expect("family subsets always have a layout")
            .into_iter()
            .map(|v| PositionLabel::new(v).unwrap())
            .collect()
    } else {
        labels
    }
}

// Mirrors the codec canonicalizer; kept here so synth has no codec dependency.
fn canonical_label_values(onsets: &[Frac]) -> Option<Vec<u8>> {
    let halves = [frac(0, 1), frac(1, 2)];
    let sixths = [frac(0, 1), frac(1, 6), frac(1, 3), frac(1, 2), frac(2, 3), frac(5, 6)];
    let quarters = [frac(0, 1), frac(1, 4), frac(1, 2), frac(3, 4)];
    if onsets == [frac(0, 1)] {
        return Some(vec![0]);
    }
    if onsets.iter().all(|o| halves.contains(o)) {
        return Some(onsets.iter().map(|o| if *o == frac(0, 1) { 10 } else { 11 }).collect());
    }
    if onsets == [frac(0, 1), frac(1, 2), frac(3, 4)] {
        return Some(vec![1, 2, 3]);
    }
    if onsets.iter().all(|o| sixths.contains(o)) {
        return Some(
            onsets
                .iter()
                .map(|o| 4 + sixths.iter().position(|s| s == o).unwrap() as u8)
                .collect(),
        );
    }
    if onsets.iter().all(|o| quarters.contains(o)) {
        return Some(
            onsets
                .iter()
                .map(|o| 12 + quarters.iter().position(|q| q == o).unwrap() as u8)
                .collect(),
        );
    }
    None
}

fn random_symbol(rng: &mut impl Rng, cfg: &SynthConfig) -> Symbol {
    let roll: f64 = rng.gen();
    let mut symbol = if roll < cfg.rest_prob {
        Symbol::rest()
    } else if roll < cfg.rest_prob + cfg.sigimsae_prob {
        let id = ["ka", "ni", "neo", "re"].choose(rng).unwrap();
        Symbol::timed_sigimsae(*id)
    } else {
        let yul = *Yul::ALL.choose(rng).unwrap();
        let octave = rng.gen_range(-1i8..=1);
        Symbol::pitch(yul, octave)
    };
    if rng.gen_bool(cfg.ornament_prob) {
        let id = ["nire", "push", "bend", "roll"].choose(rng).unwrap();
        symbol = symbol.with_ornament(*id);
    }
    symbol
}
