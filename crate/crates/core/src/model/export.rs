//! CSV and raster exports of the tensor and its analyses.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::entropy::EntropyMatrix;
use super::similarity::SimilaritySet;
use super::tensor::Probabilities;
use crate::codebook::CodebookSet;
use crate::error::{Error, Result};
use crate::retina::{FieldId, Saccade};

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn save_rgb(img: &RgbImage, path: &Path) -> Result<PathBuf> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(path.to_path_buf())
}

/// Blue-to-red ramp for values in [0, 1].
pub fn colormap(v: f64) -> Rgb<u8> {
    const STOPS: [(f64, [f64; 3]); 6] = [
        (0.0, [0.0, 0.0, 128.0]),
        (0.15, [0.0, 0.0, 255.0]),
        (0.4, [0.0, 255.0, 255.0]),
        (0.6, [255.0, 255.0, 0.0]),
        (0.85, [255.0, 0.0, 0.0]),
        (1.0, [128.0, 0.0, 0.0]),
    ];
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let k = STOPS
        .iter()
        .position(|s| s.0 >= v)
        .unwrap_or(STOPS.len() - 1)
        .max(1);
    let (t0, c0) = STOPS[k - 1];
    let (t1, c1) = STOPS[k];
    let t = (v - t0) / (t1 - t0);
    Rgb(std::array::from_fn(|i| {
        (c0[i] + t * (c1[i] - c0[i])).round() as u8
    }))
}

const UNOBSERVED: Rgb<u8> = Rgb([160, 160, 160]);
const SEPARATOR: Rgb<u8> = Rgb([255, 255, 255]);

pub fn entropy_csv(entropy: &EntropyMatrix, q: Saccade) -> String {
    let mut out = String::from("a\\b");
    for b in FieldId::all() {
        let _ = write!(out, ",{b}");
    }
    out.push('\n');
    for a in FieldId::all() {
        let _ = write!(out, "{a}");
        for b in FieldId::all() {
            match entropy.get(a, b, q) {
                Some(h) => {
                    let _ = write!(out, ",{h:.9}");
                }
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// One CSV per saccade: rows a, columns b.
pub fn write_entropy_csvs(dir: &Path, entropy: &EntropyMatrix) -> Result<Vec<PathBuf>> {
    Saccade::all()
        .map(|q| {
            write(
                &dir.join(format!("entropy_q{}.csv", q.get())),
                &entropy_csv(entropy, q),
            )
        })
        .collect()
}

/// All eight entropy pages side by side, each a 9x9 grid of blocks.
pub fn render_entropy(entropy: &EntropyMatrix) -> RgbImage {
    const CELL: u32 = 16;
    const GAP: u32 = 8;
    let page = 9 * CELL;
    let mut img = RgbImage::from_pixel(8 * page + 9 * GAP, page + 2 * GAP, SEPARATOR);
    for q in Saccade::all() {
        let x0 = GAP + q.index() as u32 * (page + GAP);
        for a in FieldId::all() {
            for b in FieldId::all() {
                let color = entropy.get(a, b, q).map_or(UNOBSERVED, colormap);
                for dy in 0..CELL {
                    for dx in 0..CELL {
                        img.put_pixel(
                            x0 + b.index() as u32 * CELL + dx,
                            GAP + a.index() as u32 * CELL + dy,
                            color,
                        );
                    }
                }
            }
        }
    }
    img
}

/// Page q of the probability tensor: header row of `b:j` labels, then one
/// row per `a:i`. Unobserved rows are written as `NA`.
pub fn page_csv(probs: &Probabilities, q: Saccade) -> String {
    let layout = probs.layout();
    let mut out = String::from("row");
    for b in FieldId::all() {
        for j in 0..layout.size(b) {
            let _ = write!(out, ",{b}:{}", j + 1);
        }
    }
    out.push('\n');
    for a in FieldId::all() {
        for i in 0..layout.size(a) {
            let _ = write!(out, "{a}:{}", i + 1);
            for b in FieldId::all() {
                match probs.row(q, a, i, b) {
                    Some(row) => {
                        for p in row {
                            if *p == 0.0 {
                                out.push_str(",0");
                            } else {
                                let _ = write!(out, ",{p:.6}");
                            }
                        }
                    }
                    None => {
                        for _ in 0..layout.size(b) {
                            out.push_str(",NA");
                        }
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Heatmap of page q, laid out in (a, b) blocks separated by white lines.
pub fn render_page(probs: &Probabilities, q: Saccade) -> RgbImage {
    const CELL: u32 = 3;
    const GAP: u32 = 2;
    let layout = probs.layout();
    let side = layout.side() as u32 * CELL + 10 * GAP;
    let mut img = RgbImage::from_pixel(side, side, SEPARATOR);
    let origin =
        |field: FieldId| GAP * (field.index() as u32 + 1) + layout.offset(field) as u32 * CELL;
    for a in FieldId::all() {
        for i in 0..layout.size(a) {
            let y0 = origin(a) + i as u32 * CELL;
            for b in FieldId::all() {
                let row = probs.row(q, a, i, b);
                for j in 0..layout.size(b) {
                    let color = row.map_or(UNOBSERVED, |r| colormap(r[j]));
                    let x0 = origin(b) + j as u32 * CELL;
                    for dy in 0..CELL {
                        for dx in 0..CELL {
                            img.put_pixel(x0 + dx, y0 + dy, color);
                        }
                    }
                }
            }
        }
    }
    img
}

pub fn write_pages(dir: &Path, probs: &Probabilities) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for q in Saccade::all() {
        out.push(write(
            &dir.join(format!("tpage_q{}.csv", q.get())),
            &page_csv(probs, q),
        )?);
        out.push(save_rgb(
            &render_page(probs, q),
            &dir.join(format!("tpage_q{}.png", q.get())),
        )?);
    }
    Ok(out)
}

pub fn similarity_csv(sets: &[SimilaritySet]) -> String {
    let mut out = String::from(
        "anchor_field,anchor_state,epsilon,member_field,member_state,saccade,dx,dy,probability\n",
    );
    for set in sets {
        for m in &set.members {
            let (dx, dy) = m.saccade.vector();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.6}",
                set.anchor.field,
                set.anchor.index + 1,
                set.epsilon,
                m.state.field,
                m.state.index + 1,
                m.saccade.get(),
                dx,
                dy,
                m.probability
            );
        }
    }
    out
}

/// Human-readable summary: one line per anchor listing the fields covered.
pub fn similarity_summary(sets: &[SimilaritySet]) -> String {
    let mut out = String::new();
    for set in sets {
        let fields: Vec<String> = set
            .members
            .iter()
            .map(|m| format!("{}(q{},p={:.2})", m.state, m.saccade.get(), m.probability))
            .collect();
        let covered = FieldId::all()
            .filter(|&b| b != set.anchor.field && set.members_in(b).next().is_some())
            .count();
        let _ = writeln!(
            out,
            "{}: {} members, {}/8 other fields: {}",
            set.anchor,
            set.members.len(),
            covered,
            if fields.is_empty() {
                "-".to_string()
            } else {
                fields.join(" ")
            }
        );
    }
    out
}

/// One row per anchor: its prototype, a gap, then the best member of each
/// field (blank where none), all tiles at the same physical extent.
pub fn render_similarity_gallery(sets: &[SimilaritySet], codebooks: &CodebookSet) -> RgbImage {
    const TILE: u32 = 20;
    const GAP: u32 = 3;
    let width = GAP + (TILE + GAP) * 10 + GAP;
    let height = GAP + (TILE + GAP) * sets.len().max(1) as u32;
    let mut img = RgbImage::from_pixel(width, height, Rgb([40, 40, 90]));
    let mut blit = |x0: u32, y0: u32, field: FieldId, index: usize| {
        let book = codebooks.get(field);
        let tile = book.render_tile(index, TILE as usize / book.tile_side());
        for y in 0..TILE {
            for x in 0..TILE {
                let v = tile.get(x as usize, y as usize);
                img.put_pixel(x0 + x, y0 + y, Rgb([v, v, v]));
            }
        }
    };
    for (row, set) in sets.iter().enumerate() {
        let y0 = GAP + row as u32 * (TILE + GAP);
        blit(GAP, y0, set.anchor.field, set.anchor.index);
        for b in FieldId::all() {
            let best = set
                .members_in(b)
                .reduce(|x, y| if y.probability > x.probability { y } else { x });
            if let Some(m) = best {
                let x0 = GAP + (TILE + GAP) * (b.index() as u32 + 1) + GAP;
                blit(x0, y0, b, m.state.index);
            }
        }
    }
    img
}

pub fn write_similarity(
    dir: &Path,
    sets: &[SimilaritySet],
    codebooks: Option<&CodebookSet>,
) -> Result<Vec<PathBuf>> {
    let mut out = vec![
        write(&dir.join("similarity_sets.csv"), &similarity_csv(sets))?,
        write(&dir.join("similarity_sets.txt"), &similarity_summary(sets))?,
    ];
    if let Some(books) = codebooks {
        out.push(save_rgb(
            &render_similarity_gallery(sets, books),
            &dir.join("similarity_gallery.png"),
        )?);
    }
    Ok(out)
}
