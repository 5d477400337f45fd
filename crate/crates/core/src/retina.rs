//! Sensor geometry: a 30x30 field of view split into a 3x3 grid of 10x10
//! receptive fields. The central field (the fovea) keeps full resolution;
//! the eight peripheral fields keep every second row and column.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::GrayImage;

pub const FOV: usize = 30;
pub const FIELD_SIZE: usize = 10;
pub const MASK_STRIDE: usize = 2;
pub const FIELD_COUNT: usize = 9;
pub const SACCADE_COUNT: usize = 8;
pub const FOVEA_DIM: usize = FIELD_SIZE * FIELD_SIZE;
pub const PERIPHERAL_SIDE: usize = FIELD_SIZE / MASK_STRIDE;
pub const PERIPHERAL_DIM: usize = PERIPHERAL_SIDE * PERIPHERAL_SIDE;
/// Sensels retained over the whole field of view.
pub const RETAINED_SENSELS: usize = FOVEA_DIM + (FIELD_COUNT - 1) * PERIPHERAL_DIM;

/// Receptive field, numbered row-major 1..=9 with 5 the fovea.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId(u8);

impl FieldId {
    pub const FOVEA: FieldId = FieldId(5);

    pub fn new(id: u8) -> Result<Self> {
        if (1..=FIELD_COUNT as u8).contains(&id) {
            Ok(Self(id))
        } else {
            Err(Error::InvalidArgument(format!(
                "field id {id} outside 1..=9"
            )))
        }
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < FIELD_COUNT, "field index {index} out of range");
        Self(index as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = FieldId> {
        (1..=FIELD_COUNT as u8).map(FieldId)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based index, for array storage.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn grid_row(self) -> usize {
        self.index() / 3
    }

    pub fn grid_col(self) -> usize {
        self.index() % 3
    }

    pub fn is_fovea(self) -> bool {
        self == Self::FOVEA
    }

    /// Number of sensels the field reports (d^a).
    pub fn dim(self) -> usize {
        if self.is_fovea() {
            FOVEA_DIM
        } else {
            PERIPHERAL_DIM
        }
    }

    /// Field center relative to the fovea center, in pixels.
    pub fn center_offset(self) -> (i32, i32) {
        (
            (self.grid_col() as i32 - 1) * FIELD_SIZE as i32,
            (self.grid_row() as i32 - 1) * FIELD_SIZE as i32,
        )
    }

    pub fn from_center_offset(offset: (i32, i32)) -> Option<Self> {
        let step = FIELD_SIZE as i32;
        let (dx, dy) = offset;
        if dx % step != 0 || dy % step != 0 {
            return None;
        }
        let (col, row) = (dx / step + 1, dy / step + 1);
        if (0..3).contains(&col) && (0..3).contains(&row) {
            Some(Self::from_index((row * 3 + col) as usize))
        } else {
            None
        }
    }

    /// Patch coordinates (row, col) of the retained sensels, in the order
    /// they appear in the field's input vector.
    pub fn retained_sensels(self) -> Vec<(usize, usize)> {
        let (r0, c0) = (self.grid_row() * FIELD_SIZE, self.grid_col() * FIELD_SIZE);
        let stride = if self.is_fovea() { 1 } else { MASK_STRIDE };
        let mut out = Vec::with_capacity(self.dim());
        for r in (0..FIELD_SIZE).step_by(stride) {
            for c in (0..FIELD_SIZE).step_by(stride) {
                out.push((r0 + r, c0 + c));
            }
        }
        out
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One of the eight discrete sensor translations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Saccade(u8);

const STEP: i32 = FIELD_SIZE as i32;

/// Canonical ordering q = 1..=8: E, NE, N, NW, W, SW, S, SE (y grows downward).
const SACCADE_VECTORS: [(i32, i32); SACCADE_COUNT] = [
    (STEP, 0),
    (STEP, -STEP),
    (0, -STEP),
    (-STEP, -STEP),
    (-STEP, 0),
    (-STEP, STEP),
    (0, STEP),
    (STEP, STEP),
];

const SACCADE_NAMES: [&str; SACCADE_COUNT] = ["E", "NE", "N", "NW", "W", "SW", "S", "SE"];

impl Saccade {
    pub fn new(q: u8) -> Result<Self> {
        if (1..=SACCADE_COUNT as u8).contains(&q) {
            Ok(Self(q))
        } else {
            Err(Error::InvalidArgument(format!(
                "saccade index {q} outside 1..=8"
            )))
        }
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < SACCADE_COUNT, "saccade index {index} out of range");
        Self(index as u8 + 1)
    }

    pub fn from_vector(v: (i32, i32)) -> Option<Self> {
        SACCADE_VECTORS
            .iter()
            .position(|&s| s == v)
            .map(Self::from_index)
    }

    pub fn all() -> impl Iterator<Item = Saccade> {
        (1..=SACCADE_COUNT as u8).map(Saccade)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn vector(self) -> (i32, i32) {
        SACCADE_VECTORS[self.index()]
    }

    pub fn name(self) -> &'static str {
        SACCADE_NAMES[self.index()]
    }

    pub fn opposite(self) -> Self {
        let (dx, dy) = self.vector();
        Self::from_vector((-dx, -dy)).expect("saccade set is symmetric")
    }

    pub fn is_diagonal(self) -> bool {
        let (dx, dy) = self.vector();
        dx != 0 && dy != 0
    }
}

impl fmt::Display for Saccade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (dx, dy) = self.vector();
        write!(f, "q{}({}:{:+},{:+})", self.0, self.name(), dx, dy)
    }
}

/// Top-left corner of the field of view in scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Position {
    pub x: usize,
    pub y: usize,
}

impl Position {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Position that centers the field of view in a scene.
    pub fn center_of(width: usize, height: usize) -> Self {
        Self {
            x: width.saturating_sub(FOV) / 2,
            y: height.saturating_sub(FOV) / 2,
        }
    }

    pub fn fits(self, width: usize, height: usize) -> bool {
        self.x + FOV <= width && self.y + FOV <= height
    }
}

/// Fixed sensor description, recorded in run metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetinaGeometry {
    pub fov: usize,
    pub field: usize,
    pub mask_stride: usize,
}

impl Default for RetinaGeometry {
    fn default() -> Self {
        Self {
            fov: FOV,
            field: FIELD_SIZE,
            mask_stride: MASK_STRIDE,
        }
    }
}

impl RetinaGeometry {
    pub fn descriptor(&self) -> String {
        let saccades: Vec<String> = Saccade::all()
            .map(|s| {
                let (dx, dy) = s.vector();
                format!("{dx},{dy}")
            })
            .collect();
        format!(
            "fov={};field={};mask_stride={};numbering=row-major;saccades={}",
            self.fov,
            self.field,
            self.mask_stride,
            saccades.join("/")
        )
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.descriptor().as_bytes()))
    }
}

/// The 30x30 sub-raster under the field of view, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Patch(pub [u8; FOV * FOV]);

impl fmt::Debug for Patch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Patch(30x30)")
    }
}

impl Patch {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = [0u8; FOV * FOV];
        for r in 0..FOV {
            for c in 0..FOV {
                data[r * FOV + c] = f(r, c);
            }
        }
        Self(data)
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[row * FOV + col]
    }
}

pub fn extract_patch(image: &GrayImage, position: Position) -> Result<Patch> {
    if !position.fits(image.width(), image.height()) {
        return Err(Error::Bounds(format!(
            "field of view at ({}, {}) exceeds the {}x{} scene",
            position.x,
            position.y,
            image.width(),
            image.height()
        )));
    }
    let mut data = [0u8; FOV * FOV];
    for r in 0..FOV {
        let row = image.row(position.y + r);
        data[r * FOV..(r + 1) * FOV].copy_from_slice(&row[position.x..position.x + FOV]);
    }
    Ok(Patch(data))
}

/// Raw inputs of the nine receptive fields, stored contiguously.
#[derive(Clone, PartialEq, Eq)]
pub struct FieldInputs([u8; RETAINED_SENSELS]);

impl fmt::Debug for FieldInputs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(FieldId::all().map(|a| self.field(a)))
            .finish()
    }
}

fn field_offset(field: FieldId) -> usize {
    let i = field.index();
    if i <= FieldId::FOVEA.index() {
        i * PERIPHERAL_DIM
    } else {
        (i - 1) * PERIPHERAL_DIM + FOVEA_DIM
    }
}

impl FieldInputs {
    pub fn field(&self, field: FieldId) -> &[u8] {
        let start = field_offset(field);
        &self.0[start..start + field.dim()]
    }
}

pub fn split_fields(patch: &Patch) -> FieldInputs {
    let mut out = [0u8; RETAINED_SENSELS];
    for field in FieldId::all() {
        let start = field_offset(field);
        let (r0, c0) = (field.grid_row() * FIELD_SIZE, field.grid_col() * FIELD_SIZE);
        let stride = if field.is_fovea() { 1 } else { MASK_STRIDE };
        let mut k = start;
        for r in (r0..r0 + FIELD_SIZE).step_by(stride) {
            for c in (c0..c0 + FIELD_SIZE).step_by(stride) {
                out[k] = patch.get(r, c);
                k += 1;
            }
        }
    }
    FieldInputs(out)
}

/// Field inputs observed with the field of view at `position`.
pub fn sense(image: &GrayImage, position: Position) -> Result<FieldInputs> {
    Ok(split_fields(&extract_patch(image, position)?))
}

pub fn apply_saccade(
    position: Position,
    saccade: Saccade,
    width: usize,
    height: usize,
) -> Result<Position> {
    let (dx, dy) = saccade.vector();
    let x = position.x as i64 + i64::from(dx);
    let y = position.y as i64 + i64::from(dy);
    if x < 0 || y < 0 || !Position::new(x as usize, y as usize).fits(width, height) {
        return Err(Error::Bounds(format!(
            "saccade {saccade} from ({}, {}) leaves the {width}x{height} scene",
            position.x, position.y
        )));
    }
    Ok(Position::new(x as usize, y as usize))
}

/// Field pairs (a, b) such that the visual feature seen by `a` before the
/// saccade is seen by `b` after it. Ground truth for verification only.
pub fn coupling_oracle(saccade: Saccade) -> Vec<(FieldId, FieldId)> {
    let (dx, dy) = saccade.vector();
    FieldId::all()
        .filter_map(|a| {
            let (ax, ay) = a.center_offset();
            FieldId::from_center_offset((ax - dx, ay - dy)).map(|b| (a, b))
        })
        .collect()
}

pub fn is_coupled(a: FieldId, b: FieldId, saccade: Saccade) -> bool {
    let (dx, dy) = saccade.vector();
    let (ax, ay) = a.center_offset();
    let (bx, by) = b.center_offset();
    (bx, by) == (ax - dx, ay - dy)
}
