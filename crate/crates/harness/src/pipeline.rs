//! The end-to-end generation procedure: 8-beat melody preprocessing, masked
//! transformation into a piri part, moving-window part generation for the
//! six instruments, and the refinement pass.

use jgb_core::notation::{Gak, Instrument, Jeonggan, Part, Score};
use jgb_core::pianoroll::{to_frames, FrameGrid, OrnamentFeature, SymbolFeature, FRAMES_PER_JEONGGAN};

use crate::predictor::Predictor;
use crate::HarnessError;

/// Windowing parameters and the instrument order of the sequential pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePlan {
    pub order: [Instrument; 6],
    pub window: usize,
    /// Teacher-forced gaks per sliding step.
    pub context: usize,
    pub stride: usize,
    pub refinement_passes: usize,
}

impl Default for PipelinePlan {
    fn default() -> PipelinePlan {
        PipelinePlan {
            order: [
                Instrument::Piri,
                Instrument::Geomungo,
                Instrument::Gayageum,
                Instrument::Ajaeng,
                Instrument::Haegeum,
                Instrument::Daegeum,
            ],
            window: 4,
            context: 2,
            stride: 1,
            refinement_passes: 1,
        }
    }
}

impl PipelinePlan {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.context >= self.window {
            return Err(HarnessError::BadShape(format!(
                "context {} must be smaller than window {}",
                self.context, self.window
            )));
        }
        if self.stride == 0 || self.window == 0 {
            return Err(HarnessError::BadShape("window and stride must be positive".into()));
        }
        Ok(())
    }
}

/// Positions (0-indexed, within each output gak) of the jeonggans that the
/// 8-to-10 beat preprocessing inserts.
pub const INSERTED_POSITIONS: [usize; 2] = [4, 6];

/// Stretches an 8-jeonggan-per-gak melody to 10 jeonggans per gak by
/// inserting empty jeonggans at the 5th and 7th positions (1-indexed),
/// matching the target rhythmic pattern. Sustains absorb the inserted beats;
/// the note multiset is unchanged.
pub fn preprocess_15c(melody: &Part) -> Result<Part, HarnessError> {
    let mut gaks = Vec::with_capacity(melody.gaks.len());
    for (gi, gak) in melody.gaks.iter().enumerate() {
        if gak.len() != 8 {
            return Err(HarnessError::BadShape(format!(
                "gak {} has {} jeonggans, preprocessing needs exactly 8",
                gi,
                gak.len()
            )));
        }
        let mut jeonggans: Vec<Jeonggan> = Vec::with_capacity(10);
        for (ji, jg) in gak.jeonggans.iter().enumerate() {
            jeonggans.push(jg.clone());
            // after the 4th original beat and after the 5th
            if ji == 3 || ji == 4 {
                jeonggans.push(Jeonggan::empty());
            }
        }
        debug_assert_eq!(jeonggans.len(), 10);
        gaks.push(Gak::new(jeonggans));
    }
    Ok(Part::new(melody.instrument, gaks))
}

fn mask_for_transform(grid: &mut FrameGrid) {
    // inserted jeonggans lose their frames entirely; every ornament slot is
    // up for re-prediction
    let mut abs = 0usize;
    for gak_len in grid.gak_shape.clone() {
        for ji in 0..gak_len {
            if INSERTED_POSITIONS.contains(&ji) {
                for k in 0..FRAMES_PER_JEONGGAN {
                    grid.frames[(abs + ji) * FRAMES_PER_JEONGGAN + k].symbol = SymbolFeature::Mask;
                }
            }
        }
        abs += gak_len;
    }
    for frame in grid.frames.iter_mut() {
        frame.ornament = OrnamentFeature::Mask;
    }
}

/// Transforms a preprocessed melody into a piri part by masked infilling over
/// sliding windows. Original notes stay as unmasked context; overlapping
/// window regions keep the earlier window's output.
pub fn transform_melody(
    melody: &Part,
    predictor: &dyn Predictor,
    plan: &PipelinePlan,
) -> Result<Part, HarnessError> {
    plan.validate()?;
    for (gi, gak) in melody.gaks.iter().enumerate() {
        if gak.len() != 10 {
            return Err(HarnessError::BadShape(format!(
                "gak {} has {} jeonggans; transformation expects the 10-beat preprocessed form",
                gi,
                gak.len()
            )));
        }
        for pos in INSERTED_POSITIONS {
            if !gak.jeonggans[pos].is_empty() {
                return Err(HarnessError::BadShape(format!(
                    "gak {} position {} should be an inserted empty jeonggan",
                    gi, pos
                )));
            }
        }
    }

    let total = melody.gaks.len();
    let window = plan.window.min(total);
    let mut out_gaks: Vec<Gak> = Vec::with_capacity(total);
    let mut committed = 0usize;
    let mut start = 0usize;
    while committed < total {
        start = start.min(total - window);
        let end = start + window;
        let fragment = melody.slice_gaks(start..end);
        let mut grid = to_frames(&fragment)?;
        mask_for_transform(&mut grid);
        let filled = predictor.infill(&grid)?;
        let part = jgb_core::pianoroll::from_frames(&filled, Instrument::Piri)?;
        if part.gaks.len() != window {
            return Err(HarnessError::Predictor(format!(
                "infill changed the window shape: {} gaks for {}",
                part.gaks.len(),
                window
            )));
        }
        for local in (committed - start)..window {
            out_gaks.push(part.gaks[local].clone());
            committed += 1;
            if committed == total {
                break;
            }
        }
        start += window.saturating_sub(plan.context).max(1);
    }
    Ok(Part::new(Instrument::Piri, out_gaks))
}

/// Generation outcome with recovery flags (empty when nothing went wrong).
#[derive(Debug, Clone, PartialEq)]
pub struct GenOutcome {
    pub part: Part,
    pub flags: Vec<String>,
}

fn window_slices(inputs: &[Part], range: std::ops::Range<usize>) -> Vec<Part> {
    inputs.iter().map(|p| p.slice_gaks(range.clone())).collect()
}

/// Asks the predictor for `emit` gaks; retries greedily and then pads or
/// truncates against the window shape if the gak count drifts.
fn complete_with_recovery(
    predictor: &dyn Predictor,
    windows: &[Part],
    target: Instrument,
    prefix: &[Gak],
    emit: usize,
    flags: &mut Vec<String>,
) -> Result<Vec<Gak>, HarnessError> {
    let mut gaks = predictor.complete(windows, target, prefix, emit, false)?;
    if gaks.len() != emit {
        flags.push(format!(
            "shape drift: got {} gaks for {}, retrying greedily",
            gaks.len(),
            emit
        ));
        gaks = predictor.complete(windows, target, prefix, emit, true)?;
    }
    if gaks.len() != emit {
        flags.push(format!(
            "shape drift persisted ({} for {}); padding/truncating to the window shape",
            gaks.len(),
            emit
        ));
        gaks.truncate(emit);
        while gaks.len() < emit {
            // align the pad with the corresponding input gak
            let local = prefix.len() + gaks.len();
            let len = windows[0].gaks.get(local).map(|g| g.len()).unwrap_or(4);
            gaks.push(Gak::empty(len));
        }
    }
    Ok(gaks)
}

/// Moving-window generation of one part against fixed input parts.
///
/// The bootstrap window yields `context + 1` gaks without teacher forcing;
/// each further step slides the window by one gak, teacher-forces the
/// already-generated tail and appends one gak. Once the window hits the end
/// of the inputs it stays pinned there and the remaining gaks come from its
/// spare decoder capacity.
pub fn generate_part(
    inputs: &[Part],
    target: Instrument,
    predictor: &dyn Predictor,
    plan: &PipelinePlan,
) -> Result<GenOutcome, HarnessError> {
    plan.validate()?;
    let first = inputs.first().ok_or(HarnessError::EmptyInputs)?;
    let shape = first.gak_shape();
    for input in inputs {
        if input.gak_shape() != shape {
            return Err(HarnessError::BadShape("input parts differ in gak shape".into()));
        }
    }
    let total = shape.len();
    let mut flags = Vec::new();

    if total <= plan.window {
        let windows = window_slices(inputs, 0..total);
        let gaks =
            complete_with_recovery(predictor, &windows, target, &[], total, &mut flags)?;
        return Ok(GenOutcome { part: Part::new(target, gaks), flags });
    }

    let bootstrap = plan.context + 1;
    let windows = window_slices(inputs, 0..plan.window);
    let mut generated =
        complete_with_recovery(predictor, &windows, target, &[], bootstrap, &mut flags)?;

    for next in bootstrap..total {
        let start = (next - plan.context).min(total - plan.window);
        let windows = window_slices(inputs, start..start + plan.window);
        let prefix = &generated[start..next];
        let gaks =
            complete_with_recovery(predictor, &windows, target, prefix, 1, &mut flags)?;
        generated.extend(gaks);
    }

    Ok(GenOutcome { part: Part::new(target, generated), flags })
}

/// Sequentially generates the remaining five parts from a piri melody, each
/// step conditioning on every previously generated part.
pub fn orchestrate(
    piri: &Part,
    predictor: &dyn Predictor,
    plan: &PipelinePlan,
) -> Result<(Score, Vec<String>), HarnessError> {
    plan.validate()?;
    if piri.instrument != plan.order[0] {
        return Err(HarnessError::InstrumentMismatch {
            expected: plan.order[0],
            found: piri.instrument,
        });
    }
    let mut flags = Vec::new();
    let mut parts = vec![piri.clone()];
    for target in &plan.order[1..] {
        let outcome = generate_part(&parts, *target, predictor, plan)?;
        flags.extend(outcome.flags.into_iter().map(|f| format!("{}: {}", target, f)));
        parts.push(outcome.part);
    }
    Ok((Score::new("orchestration", parts), flags))
}

/// Regenerates every part conditioned on the other five, using the
/// pre-refinement score for all six regenerations so the pass is
/// order-independent.
pub fn refine(
    score: &Score,
    predictor: &dyn Predictor,
    plan: &PipelinePlan,
) -> Result<(Score, Vec<String>), HarnessError> {
    plan.validate()?;
    if score.parts.len() != 6 {
        return Err(HarnessError::BadShape(format!(
            "refinement needs a 6-part score, got {}",
            score.parts.len()
        )));
    }
    let mut refined = score.clone();
    let mut flags = Vec::new();
    for _ in 0..plan.refinement_passes {
        let reference = refined.clone();
        let mut next_parts = Vec::with_capacity(6);
        for (i, part) in reference.parts.iter().enumerate() {
            let others: Vec<Part> = reference
                .parts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect();
            let outcome = generate_part(&others, part.instrument, predictor, plan)?;
            flags.extend(
                outcome.flags.into_iter().map(|f| format!("refine {}: {}", part.instrument, f)),
            );
            next_parts.push(outcome.part);
        }
        refined = Score::new(reference.title.clone(), next_parts);
    }
    Ok((refined, flags))
}
