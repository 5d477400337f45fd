//! Per-field vector quantization: K-Means prototypes learned from a
//! preliminary random exploration, and winner-takes-all encoding.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::explorer::draw_saccade;
use crate::retina::{apply_saccade, sense, FieldId, FieldInputs, Position, FIELD_COUNT, FOVEA_DIM};
use crate::scene::{GrayImage, SceneSchedule};
use crate::seed::{derive_seed, rng};

pub const FOVEA_CODEBOOK_SIZE: usize = 50;
pub const PERIPHERAL_CODEBOOK_SIZE: usize = 20;

/// Prototype count N^a used by the standard sensor.
pub fn default_codebook_size(field: FieldId) -> usize {
    if field.is_fovea() {
        FOVEA_CODEBOOK_SIZE
    } else {
        PERIPHERAL_CODEBOOK_SIZE
    }
}

/// Prototype index within a field's codebook. Stored zero-based; printed
/// one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SensoryState {
    pub field: FieldId,
    pub index: usize,
}

impl fmt::Display for SensoryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}_{}", self.field, self.index + 1)
    }
}

/// Raw inputs gathered for one receptive field, row-major `len x dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub field: FieldId,
    pub dim: usize,
    pub data: Vec<u8>,
}

impl SampleSet {
    pub fn new(field: FieldId, dim: usize) -> Self {
        Self {
            field,
            dim,
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[u8] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Random-walk over the scene stream recording every field's raw input at
/// each step, until `samples_per_field` samples per field are gathered.
pub fn collect_training_samples(
    schedule: &SceneSchedule,
    samples_per_field: usize,
    seed: u64,
) -> Result<Vec<SampleSet>> {
    let mut sets: Vec<SampleSet> = FieldId::all().map(|a| SampleSet::new(a, a.dim())).collect();
    for set in &mut sets {
        set.data.reserve_exact(samples_per_field * set.dim);
    }
    let mut walk_rng = rng(seed);
    let per_scene = schedule.saccades_per_scene();
    let mut scene: Option<GrayImage> = None;
    let mut position = Position::new(0, 0);
    for step in 0..samples_per_field {
        if step % per_scene == 0 {
            let index = (step / per_scene) % schedule.scene_count();
            let img = schedule.next_scene(index)?;
            position = Position::center_of(img.width(), img.height());
            scene = Some(img);
        }
        let img = scene.as_ref().expect("scene loaded at step 0");
        let inputs = sense(img, position)?;
        for set in &mut sets {
            set.data.extend_from_slice(inputs.field(set.field));
        }
        let saccade = draw_saccade(position, img.width(), img.height(), &mut walk_rng)?;
        position = apply_saccade(position, saccade, img.width(), img.height())?;
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub samples: usize,
    pub iterations: usize,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    field: FieldId,
    dim: usize,
    prototypes: Vec<f32>,
    meta: TrainingMeta,
}

/// Squared Euclidean distance. Eight independent accumulators keep the loop
/// vectorizable while fixing the summation order.
#[inline]
pub fn squared_distance(x: &[f32], c: &[f32]) -> f32 {
    debug_assert_eq!(x.len(), c.len());
    let mut acc = [0f32; 8];
    let mut xs = x.chunks_exact(8);
    let mut cs = c.chunks_exact(8);
    for (xa, ca) in (&mut xs).zip(&mut cs) {
        for l in 0..8 {
            let d = xa[l] - ca[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0f32;
    for (a, b) in xs.remainder().iter().zip(cs.remainder()) {
        let d = a - b;
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Index and distance of the closest prototype; ties go to the lowest index.
#[inline]
fn nearest(prototypes: &[f32], dim: usize, x: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (i, c) in prototypes.chunks_exact(dim).enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[inline]
fn widen(input: &[u8], buf: &mut [f32]) {
    for (dst, &src) in buf.iter_mut().zip(input) {
        *dst = f32::from(src);
    }
}

impl Codebook {
    pub fn new(field: FieldId, prototypes: Vec<Vec<f32>>, meta: TrainingMeta) -> Result<Self> {
        let dim = field.dim();
        if prototypes.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "codebook for field {field} has no prototypes"
            )));
        }
        if let Some(p) = prototypes.iter().find(|p| p.len() != dim) {
            return Err(Error::InvalidArgument(format!(
                "field {field} prototypes need dimension {dim}, got {}",
                p.len()
            )));
        }
        Ok(Self {
            field,
            dim,
            prototypes: prototypes.concat(),
            meta,
        })
    }

    pub fn field(&self) -> FieldId {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.prototypes.len() / self.dim
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn prototype(&self, index: usize) -> &[f32] {
        &self.prototypes[index * self.dim..(index + 1) * self.dim]
    }

    pub fn prototypes(&self) -> impl Iterator<Item = &[f32]> {
        self.prototypes.chunks_exact(self.dim)
    }

    /// Winner-takes-all encoding of a raw field input.
    pub fn encode(&self, input: &[u8]) -> Result<SensoryState> {
        if input.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "field {} expects {} values, got {}",
                self.field,
                self.dim,
                input.len()
            )));
        }
        let mut buf = [0f32; FOVEA_DIM];
        widen(input, &mut buf[..self.dim]);
        Ok(self.encode_real(&buf[..self.dim]))
    }

    /// Encoding of a real-valued input (e.g. a prototype); `input` must have
    /// the codebook's dimension.
    pub fn encode_real(&self, input: &[f32]) -> SensoryState {
        assert_eq!(input.len(), self.dim, "dimension mismatch");
        SensoryState {
            field: self.field,
            index: nearest(&self.prototypes, self.dim, input).0,
        }
    }

    /// Sum of squared distances from each sample to its nearest prototype.
    pub fn inertia(&self, samples: &SampleSet) -> f64 {
        let mut buf = vec![0f32; self.dim];
        (0..samples.len())
            .map(|i| {
                widen(samples.sample(i), &mut buf);
                f64::from(nearest(&self.prototypes, self.dim, &buf).1)
            })
            .sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# fovea codebook v1");
        let _ = writeln!(out, "field={}", self.field);
        let _ = writeln!(out, "k={}", self.k());
        let _ = writeln!(out, "dim={}", self.dim);
        let _ = writeln!(out, "seed={}", self.meta.seed);
        let _ = writeln!(out, "samples={}", self.meta.samples);
        let _ = writeln!(out, "iterations={}", self.meta.iterations);
        let _ = writeln!(out, "inertia={}", self.meta.inertia);
        let _ = writeln!(out, "---");
        for p in self.prototypes() {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format("codebook", path, msg);
        let mut lines = text.lines();
        let mut header = std::collections::BTreeMap::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "---" {
                break;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header line {line:?}")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            header.get(key).ok_or_else(|| bad(format!("missing {key}")))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?.parse().map_err(|e| bad(format!("{key}: {e}")))
        };
        let field = FieldId::new(num("field")? as u8).map_err(|e| bad(e.to_string()))?;
        let k = num("k")? as usize;
        let dim = num("dim")? as usize;
        if dim != field.dim() {
            return Err(bad(format!(
                "field {field} has dimension {}, header says {dim}",
                field.dim()
            )));
        }
        let meta = TrainingMeta {
            seed: num("seed")?,
            samples: num("samples")? as usize,
            iterations: num("iterations")? as usize,
            inertia: get("inertia")?
                .parse()
                .map_err(|e| bad(format!("inertia: {e}")))?,
        };
        let mut prototypes = Vec::with_capacity(k);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("prototype {}: {e}", prototypes.len() + 1)))?;
            prototypes.push(row);
        }
        if prototypes.len() != k {
            return Err(bad(format!(
                "header declares {k} prototypes, found {}",
                prototypes.len()
            )));
        }
        Self::new(field, prototypes, meta).map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let text = self.to_text();
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
        Ok(hash_bytes(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Content hash of the persisted form.
    pub fn hash(&self) -> String {
        hash_bytes(self.to_text().as_bytes())
    }

    /// Side of the square tile a prototype is drawn as (10 for the fovea, 5 otherwise).
    pub fn tile_side(&self) -> usize {
        (self.dim as f64).sqrt() as usize
    }

    /// Rasterizes prototype `index` at `scale` pixels per sensel.
    pub fn render_tile(&self, index: usize, scale: usize) -> GrayImage {
        let side = self.tile_side();
        let proto = self.prototype(index);
        GrayImage::from_fn(side * scale, side * scale, |x, y| {
            proto[(y / scale) * side + x / scale]
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .expect("non-empty tile")
    }

    /// All prototypes laid out in a grid, each tile covering the same 20x20
    /// pixel extent whatever the field's resolution.
    pub fn gallery(&self) -> GrayImage {
        const COLS: usize = 10;
        const GAP: usize = 2;
        let scale = 20 / self.tile_side();
        let tile = self.tile_side() * scale;
        let rows = self.k().div_ceil(COLS);
        let cols = self.k().min(COLS);
        let width = cols * tile + (cols + 1) * GAP;
        let height = rows * tile + (rows + 1) * GAP;
        let mut pixels = vec![0u8; width * height];
        for i in 0..self.k() {
            let t = self.render_tile(i, scale);
            let x0 = GAP + (i % COLS) * (tile + GAP);
            let y0 = GAP + (i / COLS) * (tile + GAP);
            for y in 0..tile {
                let dst = (y0 + y) * width + x0;
                pixels[dst..dst + tile].copy_from_slice(t.row(y));
            }
        }
        GrayImage::new(width, height, pixels).expect("gallery dimensions")
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop when the relative inertia improvement drops below this value.
    pub tolerance: f64,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iterations: 300,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub prototypes: Vec<Vec<f32>>,
    /// Inertia after each assignment step; entry 0 is the k-means++ seeding.
    pub inertia_history: Vec<f64>,
}

impl KMeansOutcome {
    pub fn inertia(&self) -> f64 {
        *self
            .inertia_history
            .last()
            .expect("at least one assignment")
    }

    pub fn iterations(&self) -> usize {
        self.inertia_history.len()
    }
}

const CHUNK: usize = 8192;

struct Partial {
    sums: Vec<f64>,
    counts: Vec<u64>,
    inertia: f64,
}

/// Assigns every sample to its nearest center, filling `labels`/`dists`, and
/// returns per-cluster sums and counts. Chunk results are reduced in order so
/// the outcome does not depend on the thread count.
fn assign(
    data: &[u8],
    dim: usize,
    centers: &[f32],
    labels: &mut [u32],
    dists: &mut [f32],
) -> Partial {
    let k = centers.len() / dim;
    let partials: Vec<Partial> = data
        .par_chunks(CHUNK * dim)
        .zip(labels.par_chunks_mut(CHUNK))
        .zip(dists.par_chunks_mut(CHUNK))
        .map(|((chunk, labels), dists)| {
            let mut p = Partial {
                sums: vec![0.0; k * dim],
                counts: vec![0; k],
                inertia: 0.0,
            };
            let mut buf = vec![0f32; dim];
            for ((x, label), dist) in chunk.chunks_exact(dim).zip(labels).zip(dists) {
                widen(x, &mut buf);
                let (best, d) = nearest(centers, dim, &buf);
                *label = best as u32;
                *dist = d;
                p.inertia += f64::from(d);
                p.counts[best] += 1;
                for (s, &v) in p.sums[best * dim..(best + 1) * dim].iter_mut().zip(x) {
                    *s += f64::from(v);
                }
            }
            p
        })
        .collect();
    let mut total = Partial {
        sums: vec![0.0; k * dim],
        counts: vec![0; k],
        inertia: 0.0,
    };
    for p in partials {
        total.inertia += p.inertia;
        for (t, s) in total.sums.iter_mut().zip(&p.sums) {
            *t += s;
        }
        for (t, c) in total.counts.iter_mut().zip(&p.counts) {
            *t += c;
        }
    }
    total
}

fn update_min_distances(data: &[u8], dim: usize, center: &[f32], min_d: &mut [f32]) {
    data.par_chunks(CHUNK * dim)
        .zip(min_d.par_chunks_mut(CHUNK))
        .for_each(|(chunk, min_d)| {
            let mut buf = vec![0f32; dim];
            for (x, m) in chunk.chunks_exact(dim).zip(min_d) {
                widen(x, &mut buf);
                let d = squared_distance(&buf, center);
                if d < *m {
                    *m = d;
                }
            }
        });
}

fn to_f32(x: &[u8]) -> Vec<f32> {
    x.iter().map(|&v| f32::from(v)).collect()
}

fn count_distinct_up_to(data: &[u8], dim: usize, limit: usize) -> usize {
    let mut seen: HashSet<&[u8]> = HashSet::with_capacity(limit);
    for x in data.chunks_exact(dim) {
        seen.insert(x);
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

/// k-means++ seeding followed by Lloyd iterations on squared Euclidean distortion.
pub fn kmeans(data: &[u8], dim: usize, params: &KMeansParams, seed: u64) -> Result<KMeansOutcome> {
    let k = params.k;
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument(format!(
            "sample buffer of {} bytes is not a multiple of dimension {dim}",
            data.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let n = data.len() / dim;
    let distinct = count_distinct_up_to(data, dim, k);
    if distinct < k {
        return Err(Error::DegenerateData(format!(
            "{k} clusters requested but only {distinct} distinct samples among {n}"
        )));
    }

    let mut rng = rng(seed);
    let sample = |i: usize| &data[i * dim..(i + 1) * dim];

    // k-means++ seeding.
    let mut centers: Vec<f32> = Vec::with_capacity(k * dim);
    centers.extend(to_f32(sample(rng.random_range(0..n))));
    let mut min_d = vec![f32::INFINITY; n];
    update_min_distances(data, dim, &centers[..dim], &mut min_d);
    for _ in 1..k {
        let total: f64 = min_d.iter().map(|&d| f64::from(d)).sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &d) in min_d.iter().enumerate() {
            if d > 0.0 {
                acc += f64::from(d);
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let chosen = chosen.expect("distinct samples remain");
        let c = to_f32(sample(chosen));
        update_min_distances(data, dim, &c, &mut min_d);
        centers.extend(c);
    }

    let mut labels = vec![0u32; n];
    let mut dists = vec![0f32; n];
    let mut history = Vec::new();
    let mut finished = false;
    for iteration in 0..params.max_iterations {
        let partial = assign(data, dim, &centers, &mut labels, &mut dists);
        let empty: Vec<usize> = (0..k).filter(|&c| partial.counts[c] == 0).collect();
        let converged = match history.last() {
            Some(&prev) if empty.is_empty() => {
                partial.inertia == 0.0 || (prev - partial.inertia) / prev < params.tolerance
            }
            _ => empty.is_empty() && partial.inertia == 0.0,
        };
        history.push(partial.inertia);
        if converged || (iteration + 1 == params.max_iterations && empty.is_empty()) {
            finished = true;
            break;
        }

        for c in 0..k {
            if partial.counts[c] > 0 {
                let inv = 1.0 / partial.counts[c] as f64;
                for (dst, &s) in centers[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&partial.sums[c * dim..(c + 1) * dim])
                {
                    *dst = (s * inv) as f32;
                }
            }
        }
        // Empty clusters take over the sample farthest from its prototype.
        for c in empty {
            let (far, _) =
                dists
                    .iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |best, (i, &d)| {
                        if d > best.1 {
                            (i, d)
                        } else {
                            best
                        }
                    });
            dists[far] = 0.0;
            centers[c * dim..(c + 1) * dim].copy_from_slice(&to_f32(sample(far)));
        }
    }
    if !finished {
        // Iteration budget ran out right after a reseed; report the final assignment.
        history.push(assign(data, dim, &centers, &mut labels, &mut dists).inertia);
    }

    Ok(KMeansOutcome {
        prototypes: centers.chunks_exact(dim).map(<[f32]>::to_vec).collect(),
        inertia_history: history,
    })
}

pub fn train_codebook(samples: &SampleSet, k: usize, seed: u64) -> Result<Codebook> {
    let outcome = kmeans(&samples.data, samples.dim, &KMeansParams::new(k), seed)?;
    let meta = TrainingMeta {
        seed,
        samples: samples.len(),
        iterations: outcome.iterations(),
        inertia: outcome.inertia(),
    };
    Codebook::new(samples.field, outcome.prototypes, meta)
}

/// The nine per-field codebooks of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    books: Vec<Codebook>,
}

/// Encoded state index of every field, zero-based.
pub type StateVector = [u16; FIELD_COUNT];

impl CodebookSet {
    pub fn new(books: Vec<Codebook>) -> Result<Self> {
        if books.len() != FIELD_COUNT {
            return Err(Error::InvalidArgument(format!(
                "expected 9 codebooks, got {}",
                books.len()
            )));
        }
        for (i, b) in books.iter().enumerate() {
            if b.field().index() != i {
                return Err(Error::InvalidArgument(format!(
                    "codebook {} is for field {}, expected field {}",
                    i + 1,
                    b.field(),
                    i + 1
                )));
            }
            if b.k() > usize::from(u16::MAX) {
                return Err(Error::InvalidArgument(format!(
                    "codebook {} too large",
                    b.field()
                )));
            }
        }
        Ok(Self { books })
    }

    /// Trains all nine codebooks, one task per field, with per-field seeds
    /// derived from `seed`.
    pub fn train(samples: &[SampleSet], sizes: [usize; FIELD_COUNT], seed: u64) -> Result<Self> {
        let books = samples
            .par_iter()
            .map(|set| {
                train_codebook(
                    set,
                    sizes[set.field.index()],
                    derive_seed(seed, set.field.index() as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(books)
    }

    pub fn get(&self, field: FieldId) -> &Codebook {
        &self.books[field.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Codebook> {
        self.books.iter()
    }

    pub fn sizes(&self) -> [usize; FIELD_COUNT] {
        std::array::from_fn(|i| self.books[i].k())
    }

    pub fn hashes(&self) -> Vec<String> {
        self.books.iter().map(Codebook::hash).collect()
    }

    pub fn encode_all(&self, inputs: &FieldInputs) -> StateVector {
        let mut buf = [0f32; FOVEA_DIM];
        std::array::from_fn(|i| {
            let book = &self.books[i];
            let input = inputs.field(book.field());
            widen(input, &mut buf[..book.dim]);
            nearest(&book.prototypes, book.dim, &buf[..book.dim]).0 as u16
        })
    }

    pub fn file_name(field: FieldId) -> String {
        format!("codebook_f{field}.txt")
    }

    pub fn gallery_name(field: FieldId) -> String {
        format!("gallery_f{field}.png")
    }

    /// Writes codebooks and galleries into `dir`, returning the codebook hashes.
    pub fn save(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.books
            .iter()
            .map(|b| {
                let hash = b.save(&dir.join(Self::file_name(b.field())))?;
                b.gallery()
                    .save_png(&dir.join(Self::gallery_name(b.field())))?;
                Ok(hash)
            })
            .collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let books = FieldId::all()
            .map(|a| Codebook::load(&dir.join(Self::file_name(a))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(books)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;
    use rand_distr_free::normal;

    use super::*;
    use crate::scene::SceneSource;

    // Box-Muller; avoids pulling a distributions crate into the library for tests.
    mod rand_distr_free {
        use rand::Rng;
        pub fn normal(rng: &mut impl Rng, mean: f64, sigma: f64) -> f64 {
            let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.random();
            mean + sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }

    fn periph_book(prototypes: Vec<Vec<f32>>) -> Codebook {
        Codebook::new(
            FieldId::new(1).unwrap(),
            prototypes,
            TrainingMeta {
                seed: 0,
                samples: 0,
                iterations: 0,
                inertia: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn encode_exact_prototype() {
        let protos: Vec<Vec<f32>> = (0..20).map(|i| vec![i as f32 * 10.0; 25]).collect();
        let book = periph_book(protos);
        let input = vec![70u8; 25];
        assert_eq!(book.encode(&input).unwrap().index, 7);
    }

    #[test]
    fn encode_ties_go_to_lowest_index() {
        let mut protos: Vec<Vec<f32>> = (0..20).map(|i| vec![200.0 + i as f32; 25]).collect();
        protos[3] = vec![10.0; 25];
        protos[9] = vec![30.0; 25];
        let book = periph_book(protos);
        assert_eq!(book.encode(&[20u8; 25]).unwrap().index, 3);
    }

    #[test]
    fn encode_dimension_mismatch() {
        let book = periph_book((0..20).map(|i| vec![i as f32; 25]).collect());
        assert!(matches!(
            book.encode(&[0u8; 24]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn k_distinct_samples_become_the_prototypes() {
        let field = FieldId::new(2).unwrap();
        let mut set = SampleSet::new(field, 25);
        for i in 0..20u8 {
            set.data.extend(std::iter::repeat_n(i * 12, 25));
        }
        let book = train_codebook(&set, 20, 1).unwrap();
        assert_eq!(book.meta().inertia, 0.0);
        let mut protos: Vec<u8> = book.prototypes().map(|p| p[0] as u8).collect();
        protos.sort_unstable();
        let expected: Vec<u8> = (0..20).map(|i| i * 12).collect();
        assert_eq!(protos, expected);
    }

    #[test]
    fn too_few_distinct_samples() {
        let field = FieldId::new(2).unwrap();
        let mut set = SampleSet::new(field, 25);
        for i in 0..100u8 {
            set.data.extend(std::iter::repeat_n(i % 3, 25));
        }
        assert!(matches!(
            train_codebook(&set, 4, 1),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn two_blobs_recover_their_means() {
        let mut r = rng(17);
        let dim = 25;
        let centers = [60.0, 160.0];
        let mut data = Vec::new();
        let mut sums = [vec![0.0f64; dim], vec![0.0f64; dim]];
        let mut counts = [0usize; 2];
        for i in 0..10_000 {
            let blob = i % 2;
            counts[blob] += 1;
            for sum in sums[blob].iter_mut() {
                let v = normal(&mut r, centers[blob], 1.0).round().clamp(0.0, 255.0);
                *sum += v;
                data.push(v as u8);
            }
        }
        // Sample-mean oracle of each blob, computed independently of k-means.
        let means: Vec<Vec<f64>> = (0..2)
            .map(|b| sums[b].iter().map(|s| s / counts[b] as f64).collect())
            .collect();
        let out = kmeans(&data, dim, &KMeansParams::new(2), 5).unwrap();
        for proto in &out.prototypes {
            let blob = if proto[0] < 110.0 { 0 } else { 1 };
            for d in 0..dim {
                assert!((f64::from(proto[d]) - means[blob][d]).abs() < 1.0);
            }
        }
        assert_ne!(out.prototypes[0][0] < 110.0, out.prototypes[1][0] < 110.0);
    }

    fn noisy_samples(seed: u64, n: usize, dim: usize) -> Vec<u8> {
        let mut r = rng(seed);
        (0..n * dim).map(|_| r.random::<u8>()).collect()
    }

    #[test]
    fn inertia_is_non_increasing_and_below_seeding() {
        let data = noisy_samples(3, 4000, 25);
        let out = kmeans(&data, 25, &KMeansParams::new(20), 9).unwrap();
        for w in out.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", out.inertia_history);
        }
        assert!(out.inertia() <= out.inertia_history[0]);
        assert!(out.iterations() <= 300);
    }

    #[test]
    fn training_is_deterministic_and_prototypes_distinct() {
        let field = FieldId::new(4).unwrap();
        let set = SampleSet {
            field,
            dim: 25,
            data: noisy_samples(8, 3000, 25),
        };
        let a = train_codebook(&set, 20, 42).unwrap();
        let b = train_codebook(&set, 20, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.k(), 20);
        let protos: Vec<&[f32]> = a.prototypes().collect();
        for i in 0..protos.len() {
            for j in i + 1..protos.len() {
                assert_ne!(protos[i], protos[j]);
            }
        }
        // No empty cells at convergence.
        let mut used = [false; 20];
        for i in 0..set.len() {
            used[a.encode(set.sample(i)).unwrap().index] = true;
        }
        assert!(used.iter().all(|&u| u));
    }

    #[test]
    fn codebook_text_round_trip() {
        let field = FieldId::FOVEA;
        let set = SampleSet {
            field,
            dim: 100,
            data: noisy_samples(2, 600, 100),
        };
        let book = train_codebook(&set, 50, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.txt");
        let hash = book.save(&path).unwrap();
        let back = Codebook::load(&path).unwrap();
        assert_eq!(back, book);
        assert_eq!(back.hash(), hash);
    }

    #[test]
    fn malformed_codebook_is_rejected() {
        let text = "field=1\nk=2\ndim=25\nseed=0\nsamples=0\niterations=0\ninertia=0\n---\n1 2 3\n";
        assert!(matches!(
            Codebook::parse(text, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn gallery_dimensions() {
        let book = periph_book((0..20).map(|i| vec![i as f32 * 12.0; 25]).collect());
        let g = book.gallery();
        assert_eq!(g.width(), 10 * 20 + 11 * 2);
        assert_eq!(g.height(), 2 * 20 + 3 * 2);
        // Prototype 1 occupies the second tile of the first row.
        assert_eq!(g.get(2 + 22 + 5, 5), 12);
    }

    #[test]
    fn collecting_one_sample_reads_the_first_patch() {
        let schedule = SceneSchedule::new(
            2,
            10,
            SceneSource::Random {
                width: 64,
                height: 64,
                seed: 4,
            },
        )
        .unwrap();
        let sets = collect_training_samples(&schedule, 1, 0).unwrap();
        let first = schedule.next_scene(0).unwrap();
        let expected = sense(&first, Position::center_of(64, 64)).unwrap();
        for set in &sets {
            assert_eq!(set.len(), 1);
            assert_eq!(set.sample(0), expected.field(set.field));
        }
    }

    #[test]
    fn collected_sample_counts_and_dimensions() {
        let schedule = SceneSchedule::new(
            3,
            50,
            SceneSource::Random {
                width: 80,
                height: 80,
                seed: 4,
            },
        )
        .unwrap();
        let sets = collect_training_samples(&schedule, 1000, 7).unwrap();
        for set in &sets {
            assert_eq!(set.len(), 1000);
            assert_eq!(set.dim, if set.field.is_fovea() { 100 } else { 25 });
        }
        assert_eq!(sets, collect_training_samples(&schedule, 1000, 7).unwrap());
    }
}
