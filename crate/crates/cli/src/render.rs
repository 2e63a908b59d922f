//! Horizontal text-grid rendering of a score: one boxed row of jeonggans per
//! gak, characters placed by their position-label cell.

use jgb_core::corpus::GlyphTable;
use jgb_core::notation::{Part, PositionLabel, Score, Symbol, SymbolBase};

const CELL_WIDTH: usize = 14;
const CELL_ROWS: usize = 3;

/// (row, col, family rows, family cols) of a label's cell in its box layout.
fn cell_of(label: PositionLabel) -> (usize, usize, usize, usize) {
    match label.value() {
        0 => (0, 0, 1, 1),
        1 => (0, 0, 2, 1),
        2 => (1, 0, 2, 2),
        3 => (1, 1, 2, 2),
        v @ 4..=9 => (((v - 4) / 2) as usize, ((v - 4) % 2) as usize, 3, 2),
        v @ 10..=11 => ((v - 10) as usize, 0, 2, 1),
        v => (((v - 12) / 2) as usize, ((v - 12) % 2) as usize, 2, 2),
    }
}

fn display_row(row: usize, family_rows: usize) -> usize {
    match family_rows {
        1 => 1,
        2 => row * 2,
        _ => row,
    }
}

fn symbol_text(symbol: &Symbol, glyphs: Option<&GlyphTable>) -> String {
    let base = match &symbol.base {
        SymbolBase::Pitch(p) => p.token(),
        SymbolBase::Rest => "x".to_string(),
        SymbolBase::TimedSigimsae(id) => id.clone(),
    };
    let mut text = glyphs
        .and_then(|t| t.glyph_for(&base))
        .map(|g| g.to_string())
        .unwrap_or(base);
    for orn in &symbol.ornaments {
        let orn_text = glyphs
            .and_then(|t| t.glyph_for(&orn.glyph_id))
            .map(|g| g.to_string())
            .unwrap_or_else(|| format!("~{}", orn.glyph_id));
        text.push_str(&orn_text);
    }
    text
}

fn place(cell: &mut [String], text: &str, row: usize, col: usize, cols: usize) {
    let slot = &mut cell[row];
    let width = char_width(slot);
    let target = if cols == 1 {
        (CELL_WIDTH / 2).saturating_sub(char_width(text) / 2)
    } else if col == 0 {
        1
    } else {
        CELL_WIDTH / 2 + 1
    };
    if target > width {
        slot.push_str(&" ".repeat(target - width));
    } else if width > 0 {
        slot.push(' ');
    }
    slot.push_str(text);
}

// display width: wide glyphs count double so the grid stays aligned
fn char_width(s: &str) -> usize {
    s.chars().map(|c| if (c as u32) > 0x2e7f { 2 } else { 1 }).sum()
}

fn pad(s: &str) -> String {
    let w = char_width(s);
    if w >= CELL_WIDTH {
        return s.to_string();
    }
    format!("{}{}", s, " ".repeat(CELL_WIDTH - w))
}

pub fn render_part(part: &Part, glyphs: Option<&GlyphTable>) -> String {
    let mut out = String::new();
    out.push_str(&format!("== {} ==\n", part.instrument.name()));
    for gak in &part.gaks {
        let rule = format!("+{}\n", format!("{}+", "-".repeat(CELL_WIDTH)).repeat(gak.len()));
        out.push_str(&rule);
        let mut rows = vec![Vec::with_capacity(gak.len()); CELL_ROWS];
        for jg in &gak.jeonggans {
            let mut cell = vec![String::new(); CELL_ROWS];
            for (label, symbol) in &jg.events {
                let (row, col, frows, fcols) = cell_of(*label);
                place(&mut cell, &symbol_text(symbol, glyphs), display_row(row, frows), col, fcols);
            }
            for (r, line) in cell.into_iter().enumerate() {
                rows[r].push(pad(&line));
            }
        }
        for row in rows {
            out.push_str(&format!("|{}|\n", row.join("|")));
        }
    }
    out.push_str(&format!(
        "+{}\n",
        format!("{}+", "-".repeat(CELL_WIDTH)).repeat(part.gaks.last().map(|g| g.len()).unwrap_or(0))
    ));
    out
}

pub fn render_score(score: &Score, glyphs: Option<&GlyphTable>) -> String {
    let mut out = format!("# {}\n", score.title);
    for part in &score.parts {
        out.push_str(&render_part(part, glyphs));
        out.push('\n');
    }
    out
}
