//! Acceptance suite: exact oracles, the tile world, and statistical
//! reproductions on random and natural scenes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore};

use crate::codebook::{Codebook, CodebookSet, SensoryState, StateVector, TrainingMeta};
use crate::error::{Error, Result};
use crate::explorer::{explore, ExplorationConfig, TransitionEvent};
use crate::model::{
    block_report, conditional_entropy, normalize, similarity_set, BlockReport, EntropyMatrix,
    TransitionTensor,
};
use crate::pipeline::{
    self, AnalyzeOptions, Config, PipelineRun, RunManifest, RunPaths, SourceKind,
};
use crate::retina::{
    coupling_oracle, sense, FieldId, Position, Saccade, FIELD_COUNT, FIELD_SIZE, FOVEA_DIM,
};
use crate::scene::{list_scene_files, load_natural_scene, GrayImage, SceneSchedule, SceneSource};
use crate::seed::{derive_seed_str, rng};
use crate::stats::rank_sum_greater;

/// Wall-clock budget of a full full-scale run.
pub const FULL_TIME_BUDGET: Duration = Duration::from_secs(20 * 60);
pub const RANK_SUM_ALPHA: f64 = 0.01;
pub const MIN_NATURAL_SCENES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 10⁵ saccades over 100 scenes of 256×256.
    Desk,
    /// 10⁶ saccades over 100 scenes of 1024×1024.
    Full,
}

impl Scale {
    pub fn config(self, source: SourceKind) -> Config {
        let (per_scene, side, samples) = match self {
            Scale::Desk => (1_000, 256, 100_000),
            Scale::Full => (10_000, 1024, 1_000_000),
        };
        Config {
            scene_source: source,
            scene_count: 100,
            saccades_per_scene: per_scene,
            scene_size: side,
            samples_per_field: samples,
            ..Config::default()
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        })
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::InvalidArgument(format!(
                "scale must be desk or full, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub checks: Vec<(bool, String)>,
}

impl CriterionOutcome {
    fn new(id: &'static str, title: &'static str) -> Self {
        Self {
            id,
            title,
            passed: true,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.passed &= ok;
        self.checks.push((ok, detail.into()));
    }

    fn fail_with(mut self, err: &Error) -> Self {
        self.check(false, format!("error: {err}"));
        self
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title
        )
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.line())?;
        for (ok, detail) in &self.checks {
            writeln!(f, "    [{}] {detail}", if *ok { "ok" } else { "FAILED" })?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- tile world

pub const TILE_SYMBOLS: usize = 12;
pub const TILE_WORLD_SIDE: usize = 250;
pub const TILE_WORLD_SACCADES: usize = 10_000;

/// Scene made of aligned 10×10 tiles drawn from a small symbol alphabet,
/// with codebooks whose prototypes are exactly those symbols.
#[derive(Debug, Clone)]
pub struct TileWorld {
    pub symbols: Vec<[u8; FOVEA_DIM]>,
    pub scene: GrayImage,
    pub codebooks: CodebookSet,
    /// Codebook index of each symbol, per field.
    pub symbol_index: Vec<[usize; TILE_SYMBOLS]>,
}

/// Peripheral view of a tile: every peripheral field keeps the same
/// tile-local sensels.
fn subsample(symbol: &[u8; FOVEA_DIM]) -> Vec<f32> {
    FieldId::new(1)
        .expect("field 1")
        .retained_sensels()
        .into_iter()
        .map(|(r, c)| f32::from(symbol[(r % FIELD_SIZE) * FIELD_SIZE + c % FIELD_SIZE]))
        .collect()
}

impl TileWorld {
    pub fn build(seed: u64) -> Result<Self> {
        let mut r = rng(seed);
        let symbols = loop {
            let symbols: Vec<[u8; FOVEA_DIM]> = (0..TILE_SYMBOLS)
                .map(|_| {
                    let mut s = [0u8; FOVEA_DIM];
                    r.fill_bytes(&mut s);
                    s
                })
                .collect();
            let distinct: BTreeSet<Vec<u32>> = symbols
                .iter()
                .map(|s| subsample(s).iter().map(|v| *v as u32).collect())
                .collect();
            if distinct.len() == TILE_SYMBOLS {
                break symbols;
            }
        };
        let tiles = TILE_WORLD_SIDE / FIELD_SIZE;
        let layout: Vec<usize> = (0..tiles * tiles)
            .map(|_| r.random_range(0..TILE_SYMBOLS))
            .collect();
        let scene = GrayImage::from_fn(TILE_WORLD_SIDE, TILE_WORLD_SIDE, |x, y| {
            let symbol = layout[(y / FIELD_SIZE) * tiles + x / FIELD_SIZE];
            symbols[symbol][(y % FIELD_SIZE) * FIELD_SIZE + x % FIELD_SIZE]
        })?;

        let mut books = Vec::with_capacity(FIELD_COUNT);
        let mut symbol_index = Vec::with_capacity(FIELD_COUNT);
        for a in FieldId::all() {
            let k = crate::codebook::default_codebook_size(a);
            let mut prototypes: Vec<Vec<f32>> = symbols
                .iter()
                .map(|s| {
                    if a.is_fovea() {
                        s.iter().map(|&v| f32::from(v)).collect()
                    } else {
                        subsample(s)
                    }
                })
                .collect();
            // Fillers sit at mid-grey levels no symbol reproduces exactly.
            for f in 0..k - TILE_SYMBOLS {
                prototypes.push(vec![100.5 + f as f32; a.dim()]);
            }
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(&mut r);
            let shuffled: Vec<Vec<f32>> = order.iter().map(|&o| prototypes[o].clone()).collect();
            let mut index = [0usize; TILE_SYMBOLS];
            for (pos, &o) in order.iter().enumerate() {
                if o < TILE_SYMBOLS {
                    index[o] = pos;
                }
            }
            symbol_index.push(index);
            let meta = TrainingMeta {
                seed,
                samples: 0,
                iterations: 0,
                inertia: 0.0,
            };
            books.push(Codebook::new(a, shuffled, meta)?);
        }
        Ok(Self {
            symbols,
            scene,
            codebooks: CodebookSet::new(books)?,
            symbol_index,
        })
    }

    pub fn schedule(&self, saccades: usize) -> Result<SceneSchedule> {
        SceneSchedule::new(
            1,
            saccades,
            SceneSource::InMemory(Arc::new(vec![self.scene.clone()])),
        )
    }

    /// Explores the tile world; with `dir`, writes codebooks, manifests and
    /// the tensor in the layout `analyze` expects.
    pub fn explore(
        &self,
        saccades: usize,
        seed: u64,
        dir: Option<&Path>,
    ) -> Result<TransitionTensor> {
        let config = ExplorationConfig {
            schedule: self.schedule(saccades)?,
            seed,
        };
        let mut tensor = TransitionTensor::new(self.codebooks.sizes());
        let log = explore(&config, &self.codebooks, |e| tensor.accumulate(e))?;
        if let Some(dir) = dir {
            let mut manifest = RunManifest::default();
            manifest.set("toolkit.version", pipeline::VERSION);
            manifest.set("command", "tile-world");
            manifest.set("tile_world.symbols", TILE_SYMBOLS);
            manifest.set("tile_world.side", TILE_WORLD_SIDE);
            manifest.set("seed.tile_world", seed);
            pipeline::write_codebook_dir(&self.codebooks, &dir.join("codebooks"), manifest)?;
            self.scene.save_png(&dir.join("scene.png"))?;
            let mut header = pipeline::tensor_header(&self.codebooks);
            header.push(("scene.description".into(), "tile world".into()));
            header.push(("explore.events".into(), log.events.to_string()));
            tensor.save(&dir.join(pipeline::TENSOR_FILE), &header)?;
        }
        Ok(tensor)
    }
}

pub fn a1_tile_world(dir: Option<&Path>) -> CriterionOutcome {
    let out = CriterionOutcome::new("A1", "deterministic tile world");
    match a1_inner(out.clone(), dir) {
        Ok(o) => o,
        Err(e) => out.fail_with(&e),
    }
}

fn a1_inner(mut out: CriterionOutcome, dir: Option<&Path>) -> Result<CriterionOutcome> {
    let seed = 0x711E;
    let world = TileWorld::build(seed)?;
    let tensor = world.explore(TILE_WORLD_SACCADES, derive_seed_str(seed, "walk"), dir)?;
    let probs = normalize(&tensor);

    let mut worst_h: f64 = 0.0;
    let mut nondeterministic_rows = 0;
    let mut blocks = 0;
    for q in Saccade::all() {
        for (a, b) in coupling_oracle(q) {
            if a.is_fovea() || b.is_fovea() {
                continue;
            }
            blocks += 1;
            worst_h = worst_h.max(conditional_entropy(&tensor, a, b, q)?);
            for i in 0..tensor.layout().size(a) {
                if let Some(row) = probs.row(q, a, i, b) {
                    if row.iter().cloned().fold(0.0, f64::max) != 1.0 {
                        nondeterministic_rows += 1;
                    }
                }
            }
        }
    }
    out.check(
        worst_h <= 1e-9,
        format!(
            "max H over {blocks} coupled peripheral-peripheral blocks = {worst_h:.3e} (<= 1e-9)"
        ),
    );
    out.check(
        nondeterministic_rows == 0,
        format!("{nondeterministic_rows} observed rows in those blocks with max probability < 1"),
    );

    let mut bad_sets = Vec::new();
    let mut checked = 0;
    for a in FieldId::all() {
        let coupled: BTreeSet<FieldId> = Saccade::all()
            .flat_map(coupling_oracle)
            .filter(|(x, _)| *x == a)
            .map(|(_, b)| b)
            .collect();
        for symbol in 0..TILE_SYMBOLS {
            let anchor = SensoryState {
                field: a,
                index: world.symbol_index[a.index()][symbol],
            };
            if !Saccade::all().any(|q| probs.is_observed(q, a, anchor.index, a)) {
                continue;
            }
            checked += 1;
            let set = similarity_set(&probs, anchor, 0.5)?;
            for &b in &coupled {
                let members: Vec<usize> = set.members_in(b).map(|m| m.state.index).collect();
                let expected = world.symbol_index[b.index()][symbol];
                if members != [expected] {
                    bad_sets.push(format!(
                        "{anchor} -> field {b}: {members:?}, expected [{expected}]"
                    ));
                }
            }
        }
    }
    out.check(
        bad_sets.is_empty() && checked > 0,
        format!(
            "{checked} observed anchors: similarity sets (eps=0.5) hold exactly the matching symbol in every coupled field{}",
            bad_sets.first().map(|s| format!("; first mismatch {s}")).unwrap_or_default()
        ),
    );
    let report = block_report(&EntropyMatrix::compute(&tensor));
    out.check(
        report.rank_agreement(),
        "coupled blocks hold the lowest entropies for every saccade",
    );
    Ok(out)
}

// ------------------------------------------------------------ random scenes

/// Checks shared by the random- and natural-scene criteria.
fn ranking_checks(out: &mut CriterionOutcome, label: &str, report: &BlockReport) {
    let failing: Vec<String> = report
        .rankings
        .iter()
        .filter(|r| !r.lowest_are_coupled())
        .map(|r| {
            format!(
                "{} ({}/{})",
                r.saccade,
                r.coupled_in_lowest(),
                r.coupled_count
            )
        })
        .collect();
    out.check(
        failing.is_empty(),
        format!(
            "{label}: k lowest-entropy blocks are the coupled ones for every saccade{}",
            if failing.is_empty() {
                String::new()
            } else {
                format!("; violated for {}", failing.join(", "))
            }
        ),
    );
}

/// Outputs of the random-scene reproduction, reused by later criteria.
#[derive(Debug)]
pub struct RandomRuns {
    pub main: PipelineRun,
    pub desk: Option<PipelineRun>,
}

pub fn a2_random(scale: Scale, work: &Path) -> (CriterionOutcome, Option<RandomRuns>) {
    let out = CriterionOutcome::new("A2", "random-scene structure discovery");
    match a2_inner(out.clone(), scale, work) {
        Ok((o, runs)) => (o, Some(runs)),
        Err(e) => (out.fail_with(&e), None),
    }
}

fn a2_inner(
    mut out: CriterionOutcome,
    scale: Scale,
    work: &Path,
) -> Result<(CriterionOutcome, RandomRuns)> {
    let options = AnalyzeOptions::default();
    let main = pipeline::run_all(
        &scale.config(SourceKind::Random),
        &RunPaths::new(work.join(format!("random-{scale}"))),
        &options,
    )?;
    let report = &main.analyze.report;
    let label = format!("{scale} scale");
    ranking_checks(&mut out, &label, report);
    let gap = report.mean_uncoupled - report.mean_coupled;
    out.check(
        gap >= 0.05,
        format!(
            "{label}: mean H coupled {:.4} vs uncoupled {:.4}, gap {gap:.4} (>= 0.05)",
            report.mean_coupled, report.mean_uncoupled
        ),
    );
    out.check(
        report.min_uncoupled >= 0.9,
        format!(
            "{label}: min uncoupled H {:.4} (>= 0.9)",
            report.min_uncoupled
        ),
    );
    let desk = if scale == Scale::Full {
        let desk = pipeline::run_all(
            &Scale::Desk.config(SourceKind::Random),
            &RunPaths::new(work.join("random-desk")),
            &options,
        )?;
        ranking_checks(&mut out, "desk variant", &desk.analyze.report);
        Some(desk)
    } else {
        None
    };
    Ok((out, RandomRuns { main, desk }))
}

// ----------------------------------------------------------- natural scenes

/// The eight symmetries of the square applied to a square image.
pub fn dihedral(img: &GrayImage, variant: u8) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if variant >= 4 && w != h {
        return Err(Error::InvalidArgument(
            "transposing variants need a square image".into(),
        ));
    }
    let (ow, oh) = if variant % 2 == 1 { (h, w) } else { (w, h) };
    GrayImage::from_fn(ow, oh, |x, y| {
        let (sx, sy) = match variant {
            0 => (x, y),
            1 => (y, h - 1 - x),
            2 => (w - 1 - x, h - 1 - y),
            3 => (w - 1 - y, x),
            4 => (w - 1 - x, y),
            5 => (y, x),
            6 => (x, h - 1 - y),
            _ => (w - 1 - y, h - 1 - x),
        };
        img.get(sx, sy)
    })
}

/// Directory with at least `min_count` natural scenes. Smaller collections
/// are expanded with the eight dihedral variants of each normalized image,
/// written as `d{variant}_{name}.png` under `scratch`.
pub fn prepare_natural_scenes(
    source: &Path,
    scratch: &Path,
    min_count: usize,
) -> Result<(PathBuf, usize)> {
    let files = list_scene_files(source)?;
    if files.len() >= min_count {
        return Ok((source.to_path_buf(), files.len()));
    }
    if files.len() * 8 < min_count {
        return Err(Error::InsufficientScenes(format!(
            "{} holds {} images; even with 8 variants each fewer than {min_count}",
            source.display(),
            files.len()
        )));
    }
    std::fs::create_dir_all(scratch).map_err(|e| Error::io(scratch, e))?;
    for path in &files {
        let scene = load_natural_scene(path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for v in 0..8u8 {
            let target = scratch.join(format!("d{v}_{stem}.png"));
            if !target.exists() {
                dihedral(&scene, v)?.save_png(&target)?;
            }
        }
    }
    Ok((scratch.to_path_buf(), files.len() * 8))
}

pub fn a3_natural(
    scale: Scale,
    natural_dir: &Path,
    random: Option<&EntropyMatrix>,
    work: &Path,
) -> CriterionOutcome {
    let out = CriterionOutcome::new("A3", "natural-scene comparison");
    match a3_inner(out.clone(), scale, natural_dir, random, work) {
        Ok(o) => o,
        Err(e) => out.fail_with(&e),
    }
}

fn all_values(entropy: &EntropyMatrix) -> Vec<f64> {
    Saccade::all()
        .flat_map(|q| FieldId::all().flat_map(move |a| FieldId::all().map(move |b| (a, b, q))))
        .filter_map(|(a, b, q)| entropy.get(a, b, q))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn a3_inner(
    mut out: CriterionOutcome,
    scale: Scale,
    natural_dir: &Path,
    random: Option<&EntropyMatrix>,
    work: &Path,
) -> Result<CriterionOutcome> {
    let (dir, available) = prepare_natural_scenes(
        natural_dir,
        &work.join("natural-scenes"),
        MIN_NATURAL_SCENES,
    )?;
    let mut config = scale.config(SourceKind::Directory);
    config.scene_path = Some(dir);
    out.check(
        available >= MIN_NATURAL_SCENES,
        format!(
            "{available} natural scenes available, {} explored",
            config.scene_count
        ),
    );
    let run = pipeline::run_all(
        &config,
        &RunPaths::new(work.join(format!("natural-{scale}"))),
        &AnalyzeOptions::default(),
    )?;
    let natural = &run.analyze.entropy;

    let random_owned;
    let random = match random {
        Some(r) => r,
        None => {
            let r = pipeline::run_all(
                &scale.config(SourceKind::Random),
                &RunPaths::new(work.join(format!("random-{scale}"))),
                &AnalyzeOptions::default(),
            )?;
            random_owned = r.analyze.entropy;
            &random_owned
        }
    };
    let (nat, rnd) = (all_values(natural), all_values(random));
    let (_, p) = rank_sum_greater(&rnd, &nat);
    out.check(
        mean(&nat) < mean(&rnd) && p < RANK_SUM_ALPHA,
        format!(
            "(i) mean H natural {:.4} < random {:.4}, rank-sum p = {p:.2e} (< {RANK_SUM_ALPHA})",
            mean(&nat),
            mean(&rnd)
        ),
    );
    ranking_checks(&mut out, "(ii) natural scenes", &run.analyze.report);
    let report = &run.analyze.report;
    let fovea_target = report.coupled_entropies(|_, b| b.is_fovea());
    let peripheral = report.coupled_entropies(|a, b| !a.is_fovea() && !b.is_fovea());
    let (_, p) = rank_sum_greater(&fovea_target, &peripheral);
    out.check(
        mean(&fovea_target) > mean(&peripheral) && p < RANK_SUM_ALPHA,
        format!(
            "(iii) coupled b=5 mean H {:.4} > peripheral-peripheral {:.4}, rank-sum p = {p:.2e} (< {RANK_SUM_ALPHA})",
            mean(&fovea_target),
            mean(&peripheral)
        ),
    );
    Ok(out)
}

// ------------------------------------------------------------ exact oracles

/// Plain transcription of the normalized conditional entropy over a dense
/// `rows x cols` joint count table.
fn entropy_oracle(table: &[Vec<u64>], n_b: usize) -> f64 {
    let n: u64 = table.iter().flatten().sum();
    let mut h = 0.0;
    for row in table {
        let r: u64 = row.iter().sum();
        for &c in row {
            if c > 0 {
                let joint = c as f64 / n as f64;
                let marginal = r as f64 / n as f64;
                h -= joint / (n_b as f64).ln() * (joint / marginal).ln();
            }
        }
    }
    h
}

/// Tensor whose (a=1, b=2, q=1) block follows `table`, other fields fixed at 0.
fn tensor_from_table(table: &[Vec<u64>]) -> Result<TransitionTensor> {
    let mut tensor = TransitionTensor::new([20, 20, 20, 20, 50, 20, 20, 20, 20]);
    let q = Saccade::from_index(0);
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let mut pre: StateVector = [0; FIELD_COUNT];
            let mut post: StateVector = [0; FIELD_COUNT];
            pre[0] = i as u16;
            post[1] = j as u16;
            for _ in 0..c {
                tensor.accumulate(&TransitionEvent {
                    pre,
                    saccade: q,
                    post,
                })?;
            }
        }
    }
    Ok(tensor)
}

fn random_tensor(
    r: &mut crate::seed::Rng,
    sizes: [usize; FIELD_COUNT],
    events: usize,
    skew: usize,
) -> Result<TransitionTensor> {
    let mut tensor = TransitionTensor::new(sizes);
    for _ in 0..events {
        let draw = |r: &mut crate::seed::Rng, n: usize| -> u16 {
            // Minimum of `skew` draws concentrates mass on low indices.
            (0..skew).map(|_| r.random_range(0..n)).min().unwrap_or(0) as u16
        };
        let pre: StateVector = std::array::from_fn(|i| draw(r, sizes[i]));
        let post: StateVector = std::array::from_fn(|i| draw(r, sizes[i]));
        let saccade = Saccade::from_index(r.random_range(0..8));
        tensor.accumulate(&TransitionEvent { pre, saccade, post })?;
    }
    Ok(tensor)
}

pub fn a4_oracles() -> CriterionOutcome {
    let out = CriterionOutcome::new("A4", "estimator and formula oracles");
    match a4_inner(out.clone()) {
        Ok(o) => o,
        Err(e) => out.fail_with(&e),
    }
}

fn a4_inner(mut out: CriterionOutcome) -> Result<CriterionOutcome> {
    let (a, b, q) = (FieldId::new(1)?, FieldId::new(2)?, Saccade::from_index(0));
    let cases: [(&str, Vec<Vec<u64>>, f64); 3] = [
        (
            "deterministic block",
            (0..20)
                .map(|i| {
                    (0..20)
                        .map(|j| u64::from(j == (7 * i + 3) % 20) * 5)
                        .collect()
                })
                .collect(),
            0.0,
        ),
        ("uniform independent block", vec![vec![3; 20]; 20], 1.0),
        (
            "two-outcome block",
            (0..20)
                .map(|_| (0..20).map(|j| u64::from(j < 2) * 4).collect())
                .collect(),
            2f64.ln() / 20f64.ln(),
        ),
    ];
    for (name, table, expected) in cases {
        let tensor = tensor_from_table(&table)?;
        let h = conditional_entropy(&tensor, a, b, q)?;
        let oracle = entropy_oracle(&table, 20);
        out.check(
            (h - expected).abs() <= 1e-12 && (oracle - expected).abs() <= 1e-12,
            format!("{name}: H = {h:.15}, oracle {oracle:.15}, expected {expected:.15}"),
        );
    }

    let mut r = rng(0xA4);
    let sizes = [20, 20, 20, 20, 50, 20, 20, 20, 20];
    let events = 20_000;
    let tensor = random_tensor(&mut r, sizes, events, 2)?;
    out.check(
        tensor.total() == 81 * events as u64,
        format!(
            "count conservation: total {} = 81 x {events}",
            tensor.total()
        ),
    );
    let probs = normalize(&tensor);
    let layout = tensor.layout();
    let mut worst = 0f64;
    let mut observed = 0;
    let mut flagged_ok = true;
    let mut marginal_ok = true;
    for q in Saccade::all() {
        for a in FieldId::all() {
            for b in FieldId::all() {
                let mut from_rows = 0u64;
                for i in 0..layout.size(a) {
                    let total: u64 = tensor.row(q, a, i, b).iter().sum();
                    from_rows += total;
                    match probs.row(q, a, i, b) {
                        Some(row) => {
                            observed += 1;
                            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                        }
                        None => flagged_ok &= total == 0,
                    }
                }
                marginal_ok &= from_rows == tensor.block_total(a, b, q);
            }
        }
    }
    out.check(
        worst <= 1e-9 && flagged_ok,
        format!("row-stochasticity: max |sum - 1| = {worst:.2e} over {observed} observed rows; empty rows flagged"),
    );
    out.check(marginal_ok, "block totals equal the sum of row totals");

    let mut violations = 0;
    let trials = 1000;
    for t in 0..trials {
        let sizes: [usize; FIELD_COUNT] = std::array::from_fn(|_| r.random_range(2..6));
        let events = r.random_range(1..60);
        let tensor = random_tensor(&mut r, sizes, events, 1 + t % 3)?;
        let probs = normalize(&tensor);
        let a = FieldId::from_index(r.random_range(0..FIELD_COUNT));
        let anchor = SensoryState {
            field: a,
            index: r.random_range(0..sizes[a.index()]),
        };
        let e1: f64 = r.random_range(0.01..1.0);
        let e2: f64 = r.random_range(e1..=1.0);
        let loose = similarity_set(&probs, anchor, e1)?;
        let strict = similarity_set(&probs, anchor, e2)?;
        if !strict.members.iter().all(|m| loose.contains(m.state)) {
            violations += 1;
        }
    }
    out.check(
        violations == 0,
        format!("similarity-set monotonicity in epsilon: {violations} violations in {trials} randomized trials"),
    );
    Ok(out)
}

// ---------------------------------------------------------- coupling oracle

/// Pixel coordinates seen by each field, recovered by sensing two images
/// whose pixels encode their own coordinates.
fn tagged_fields(
    hi: &GrayImage,
    lo: &GrayImage,
    pos: Position,
    width: usize,
) -> Result<Vec<BTreeSet<(usize, usize)>>> {
    let (h, l) = (sense(hi, pos)?, sense(lo, pos)?);
    Ok(FieldId::all()
        .map(|a| {
            h.field(a)
                .iter()
                .zip(l.field(a))
                .map(|(&hv, &lv)| {
                    let tag = usize::from(hv) * 256 + usize::from(lv);
                    (tag % width, tag / width)
                })
                .collect()
        })
        .collect())
}

/// Coupled (a, b) field numbers keyed by saccade vector.
pub type CouplingTable = BTreeMap<(i32, i32), BTreeSet<(u8, u8)>>;

/// Coupled pairs per saccade found by pixel tagging: (a, b) is coupled when
/// the pixels seen by one field before the move and the other after it are
/// nested (the fovea sees a superset of a peripheral field's sensels).
pub fn brute_force_coupling() -> Result<CouplingTable> {
    let side = 50;
    let hi = GrayImage::from_fn(side, side, |x, y| ((y * side + x) / 256) as u8)?;
    let lo = GrayImage::from_fn(side, side, |x, y| ((y * side + x) % 256) as u8)?;
    let start = Position::new(10, 10);
    let before = tagged_fields(&hi, &lo, start, side)?;
    let mut out = BTreeMap::new();
    for dy in [-10i32, 0, 10] {
        for dx in [-10i32, 0, 10] {
            if (dx, dy) == (0, 0) {
                continue;
            }
            let pos = Position::new((10 + dx) as usize, (10 + dy) as usize);
            let after = tagged_fields(&hi, &lo, pos, side)?;
            let mut pairs = BTreeSet::new();
            for (ia, pa) in before.iter().enumerate() {
                for (ib, pb) in after.iter().enumerate() {
                    if pa.is_subset(pb) || pb.is_subset(pa) {
                        pairs.insert((ia as u8 + 1, ib as u8 + 1));
                    }
                }
            }
            out.insert((dx, dy), pairs);
        }
    }
    Ok(out)
}

pub fn a5_coupling() -> CriterionOutcome {
    let out = CriterionOutcome::new("A5", "coupling oracle equivalence");
    match a5_inner(out.clone()) {
        Ok(o) => o,
        Err(e) => out.fail_with(&e),
    }
}

fn a5_inner(mut out: CriterionOutcome) -> Result<CriterionOutcome> {
    let brute = brute_force_coupling()?;
    let oracle: CouplingTable = Saccade::all()
        .map(|q| {
            (
                q.vector(),
                coupling_oracle(q)
                    .into_iter()
                    .map(|(a, b)| (a.get(), b.get()))
                    .collect(),
            )
        })
        .collect();
    let mismatched: Vec<String> = brute
        .iter()
        .filter(|(v, pairs)| oracle.get(v) != Some(pairs))
        .map(|(v, _)| format!("{v:?}"))
        .collect();
    out.check(
        mismatched.is_empty() && brute.len() == 8 && oracle.len() == 8,
        format!(
            "coupling oracle equals the pixel-tagging oracle for all 8 saccade vectors{}",
            if mismatched.is_empty() {
                String::new()
            } else {
                format!("; differs for {}", mismatched.join(", "))
            }
        ),
    );
    let right = &oracle[&(10, 0)];
    let cited = [(2, 1), (8, 7), (5, 4), (6, 5)];
    out.check(
        cited.iter().all(|p| right.contains(p)),
        format!("rightward saccade couples {cited:?}"),
    );
    for pair in [(2u8, 4u8), (8, 4)] {
        let vectors: Vec<(i32, i32)> = oracle
            .iter()
            .filter(|(_, s)| s.contains(&pair))
            .map(|(v, _)| *v)
            .collect();
        out.check(
            vectors.len() == 1,
            format!("block {pair:?} is coupled under exactly one saccade vector: {vectors:?}"),
        );
    }
    Ok(out)
}

// ------------------------------------------------------- reproducibility

/// Hashes of every file under `root`, keyed by relative path.
pub fn tree_hashes(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, pipeline::file_hash(&path)?);
            }
        }
    }
    Ok(out)
}

pub fn a6_reproducibility(
    scale: Scale,
    full_run: Option<Duration>,
    work: &Path,
) -> CriterionOutcome {
    let out = CriterionOutcome::new("A6", "reproducibility and performance");
    match a6_inner(out.clone(), scale, full_run, work) {
        Ok(o) => o,
        Err(e) => out.fail_with(&e),
    }
}

fn a6_inner(
    mut out: CriterionOutcome,
    scale: Scale,
    full_run: Option<Duration>,
    work: &Path,
) -> Result<CriterionOutcome> {
    let first = RunPaths::new(work.join("repro-1"));
    let second = RunPaths::new(work.join("repro-2"));
    let options = AnalyzeOptions::default();
    pipeline::run_all(&Scale::Desk.config(SourceKind::Random), &first, &options)?;
    let manifest = RunManifest::load(&first.codebooks().join(pipeline::CODEBOOK_MANIFEST))?;
    pipeline::run_all(&manifest.config()?, &second, &options)?;
    let (h1, h2) = (tree_hashes(&first.root)?, tree_hashes(&second.root)?);
    let differing: Vec<&String> = h1
        .keys()
        .chain(h2.keys())
        .filter(|k| h1.get(*k) != h2.get(*k))
        .collect();
    out.check(
        differing.is_empty() && h1.contains_key(pipeline::TENSOR_FILE),
        format!(
            "second run from the first run's manifest: {} files byte-identical{}",
            h1.len(),
            differing
                .first()
                .map(|k| format!("; {k} differs"))
                .unwrap_or_default()
        ),
    );
    match (scale, full_run) {
        (Scale::Full, Some(elapsed)) => out.check(
            elapsed < FULL_TIME_BUDGET,
            format!(
                "full-scale random run (train + explore + analyze) took {:.1} s on {} thread(s) (< {} s)",
                elapsed.as_secs_f64(),
                rayon::current_num_threads(),
                FULL_TIME_BUDGET.as_secs()
            ),
        ),
        (Scale::Full, None) => out.check(false, "full-scale run unavailable for timing"),
        (Scale::Desk, _) => out.check(true, "full-scale timing not measured at desk scale"),
    }
    Ok(out)
}

// ------------------------------------------------------------------- suite

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub scale: Scale,
    pub natural_dir: Option<PathBuf>,
    pub work_dir: PathBuf,
}

/// Runs A1–A6 in order, invoking `report` as each criterion completes.
pub fn run_suite(
    options: &SuiteOptions,
    mut report: impl FnMut(&CriterionOutcome),
) -> Vec<CriterionOutcome> {
    let work = &options.work_dir;
    let mut outcomes = Vec::new();
    let mut emit = |o: CriterionOutcome| {
        report(&o);
        outcomes.push(o);
    };
    emit(a1_tile_world(Some(&work.join("tile-world"))));
    let (a2, runs) = a2_random(options.scale, work);
    let random_entropy = runs.as_ref().map(|r| &r.main.analyze.entropy);
    let full_elapsed = runs
        .as_ref()
        .filter(|_| options.scale == Scale::Full)
        .map(|r| r.main.elapsed());
    emit(a2);
    match &options.natural_dir {
        Some(dir) => emit(a3_natural(options.scale, dir, random_entropy, work)),
        None => {
            let mut o = CriterionOutcome::new("A3", "natural-scene comparison");
            o.check(false, "no natural-scene directory given");
            emit(o);
        }
    }
    emit(a4_oracles());
    emit(a5_coupling());
    emit(a6_reproducibility(options.scale, full_elapsed, work));
    outcomes
}
