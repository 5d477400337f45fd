//! End-to-end pipeline: codebook training, exploration and analysis, with
//! line-oriented configuration files and run manifests that pin every seed
//! and upstream hash.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::codebook::{
    collect_training_samples, default_codebook_size, hash_bytes, CodebookSet, SensoryState,
};
use crate::error::{Error, Result};
use crate::explorer::{explore, EventLogReader, EventLogWriter, ExplorationConfig, RunLog};
use crate::model::{
    block_report, export, normalize, similarity_set, BlockReport, EntropyMatrix, TransitionTensor,
};
use crate::retina::{FieldId, RetinaGeometry, FIELD_COUNT, FIELD_SIZE, FOV, MASK_STRIDE};
use crate::scene::{SceneSchedule, SceneSource, SCENE_SIDE};
use crate::seed::derive_seed_str;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Random,
    Directory,
}

/// Run configuration. Keys follow the `section.name` scheme of config files.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scene_source: SourceKind,
    pub scene_count: usize,
    pub saccades_per_scene: usize,
    pub scene_seed: u64,
    pub scene_path: Option<PathBuf>,
    /// Side of generated random scenes.
    pub scene_size: usize,
    pub samples_per_field: usize,
    pub codebook_seed: u64,
    pub explore_seed: u64,
    pub event_log: bool,
    pub epsilon: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scene_source: SourceKind::Random,
            scene_count: 100,
            saccades_per_scene: 10_000,
            scene_seed: 1,
            scene_path: None,
            scene_size: SCENE_SIDE,
            samples_per_field: 1_000_000,
            codebook_seed: 2,
            explore_seed: 3,
            event_log: false,
            epsilon: 0.5,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("{key}={value}: {e}")))
}

impl Config {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "scene.source" => {
                self.scene_source = match value {
                    "random" => SourceKind::Random,
                    "directory" => SourceKind::Directory,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "scene.source must be random or directory, got {other}"
                        )))
                    }
                }
            }
            "scene.count" => self.scene_count = parse(key, value)?,
            "scene.saccades_per_scene" => self.saccades_per_scene = parse(key, value)?,
            "scene.seed" => self.scene_seed = parse(key, value)?,
            "scene.path" => self.scene_path = Some(PathBuf::from(value)),
            "scene.size" => self.scene_size = parse(key, value)?,
            "codebook.samples_per_field" => self.samples_per_field = parse(key, value)?,
            "codebook.seed" => self.codebook_seed = parse(key, value)?,
            "explore.seed" => self.explore_seed = parse(key, value)?,
            "explore.event_log" => self.event_log = parse(key, value)?,
            "analyze.epsilon" => self.epsilon = parse(key, value)?,
            "retina.fov" | "retina.field" | "retina.mask_stride" => {
                let expected = match key {
                    "retina.fov" => FOV,
                    "retina.field" => FIELD_SIZE,
                    _ => MASK_STRIDE,
                };
                if parse::<usize>(key, value)? != expected {
                    return Err(Error::InvalidArgument(format!(
                        "{key} is fixed at {expected} for this sensor"
                    )));
                }
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {other}"
                )))
            }
        }
        Ok(())
    }

    /// Parses a config file body: `key=value` lines, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("expected key=value, got {line:?}"))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config.apply_text(&text)?;
        Ok(config)
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            (
                "scene.source",
                match self.scene_source {
                    SourceKind::Random => "random".to_string(),
                    SourceKind::Directory => "directory".to_string(),
                },
            ),
            ("scene.count", self.scene_count.to_string()),
            (
                "scene.saccades_per_scene",
                self.saccades_per_scene.to_string(),
            ),
            ("scene.seed", self.scene_seed.to_string()),
            ("scene.size", self.scene_size.to_string()),
            (
                "codebook.samples_per_field",
                self.samples_per_field.to_string(),
            ),
            ("codebook.seed", self.codebook_seed.to_string()),
            ("explore.seed", self.explore_seed.to_string()),
            ("explore.event_log", self.event_log.to_string()),
            ("analyze.epsilon", self.epsilon.to_string()),
            ("retina.fov", FOV.to_string()),
            ("retina.field", FIELD_SIZE.to_string()),
            ("retina.mask_stride", MASK_STRIDE.to_string()),
        ];
        if let Some(p) = &self.scene_path {
            out.push(("scene.path", p.display().to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn total_saccades(&self) -> usize {
        self.scene_count * self.saccades_per_scene
    }

    /// Scene stream of the main exploration.
    pub fn schedule(&self) -> Result<SceneSchedule> {
        let source = match self.scene_source {
            SourceKind::Random => SceneSource::Random {
                width: self.scene_size,
                height: self.scene_size,
                seed: self.scene_seed,
            },
            SourceKind::Directory => SceneSource::Directory {
                path: self.scene_path.clone().ok_or_else(|| {
                    Error::InvalidArgument("scene.path is required for directory scenes".into())
                })?,
            },
        };
        SceneSchedule::new(self.scene_count, self.saccades_per_scene, source)
    }

    /// Scene stream of the codebook-training walk: independent random scenes
    /// of the same type, or the same image directory.
    pub fn codebook_schedule(&self) -> Result<SceneSchedule> {
        Ok(self
            .schedule()?
            .reseeded(derive_seed_str(self.scene_seed, "codebook-scenes")))
    }
}

/// Ordered `key=value` record of a command's inputs and outputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunManifest {
    pub entries: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// Config snapshot recorded under `config.*`.
    pub fn config(&self) -> Result<Config> {
        let mut config = Config::default();
        for (k, v) in &self.entries {
            if let Some(key) = k.strip_prefix("config.") {
                config.set(key, v)?;
            }
        }
        Ok(config)
    }

    fn base(command: &str, config: &Config) -> Self {
        let mut m = Self::default();
        m.set("toolkit.version", VERSION);
        m.set("command", command);
        m.set("status", "running");
        for (k, v) in config.entries() {
            m.set(format!("config.{k}"), v);
        }
        let geometry = RetinaGeometry::default();
        m.set("geometry.descriptor", geometry.descriptor());
        m.set("geometry.hash", geometry.hash());
        m
    }
}

pub const CODEBOOK_MANIFEST: &str = "manifest.txt";
pub const TENSOR_FILE: &str = "tensor.bin";
pub const EXPLORE_MANIFEST: &str = "explore_manifest.txt";
pub const EVENT_LOG_FILE: &str = "events.bin";
pub const ANALYZE_MANIFEST: &str = "analyze_manifest.txt";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hash_bytes(
        &std::fs::read(path).map_err(|e| Error::io(path, e))?,
    ))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub codebooks: CodebookSet,
    pub hashes: Vec<String>,
    pub elapsed: Duration,
}

/// Collects training samples on an independent walk and trains the nine
/// codebooks into `dir`, alongside galleries and a manifest.
pub fn cmd_train(config: &Config, dir: &Path) -> Result<TrainOutcome> {
    let start = Instant::now();
    create_dir(dir)?;
    let schedule = config.codebook_schedule()?;
    let mut manifest = RunManifest::base("train", config);
    manifest.set("codebook.scene_source", schedule.source());
    manifest.set(
        "codebook.scene_stream",
        match config.scene_source {
            SourceKind::Random => "independent random scenes (scene.seed-derived)",
            SourceKind::Directory => "same image directory as exploration",
        },
    );
    let walk_seed = derive_seed_str(config.codebook_seed, "walk");
    let kmeans_seed = derive_seed_str(config.codebook_seed, "kmeans");
    manifest.set("seed.codebook_walk", walk_seed);
    manifest.set("seed.kmeans", kmeans_seed);
    manifest.save(&dir.join(CODEBOOK_MANIFEST))?;

    let samples = collect_training_samples(&schedule, config.samples_per_field, walk_seed)?;
    let sizes: [usize; FIELD_COUNT] =
        std::array::from_fn(|i| default_codebook_size(FieldId::from_index(i)));
    let codebooks = CodebookSet::train(&samples, sizes, kmeans_seed)?;
    drop(samples);
    let hashes = write_codebook_dir(&codebooks, dir, manifest)?;
    Ok(TrainOutcome {
        codebooks,
        hashes,
        elapsed: start.elapsed(),
    })
}

/// Writes codebooks and galleries into `dir` and completes `manifest` with
/// their hashes.
pub fn write_codebook_dir(
    codebooks: &CodebookSet,
    dir: &Path,
    mut manifest: RunManifest,
) -> Result<Vec<String>> {
    create_dir(dir)?;
    let manifest_path = dir.join(CODEBOOK_MANIFEST);
    manifest.set("status", "running");
    manifest.save(&manifest_path)?;
    let hashes = codebooks.save(dir)?;
    for (a, h) in FieldId::all().zip(&hashes) {
        manifest.set(format!("codebook.hash.f{a}"), h);
        manifest.set(format!("output.codebook.f{a}"), CodebookSet::file_name(a));
        manifest.set(format!("output.gallery.f{a}"), CodebookSet::gallery_name(a));
        let book = codebooks.get(a);
        manifest.set(format!("codebook.k.f{a}"), book.k());
        manifest.set(format!("codebook.iterations.f{a}"), book.meta().iterations);
        manifest.set(format!("codebook.inertia.f{a}"), book.meta().inertia);
    }
    manifest.set("status", "complete");
    manifest.save(&manifest_path)?;
    Ok(hashes)
}

/// Tensor header entries binding a tensor to its codebooks and sensor.
pub fn tensor_header(codebooks: &CodebookSet) -> Vec<(String, String)> {
    let mut header = vec![(
        "geometry.hash".to_string(),
        RetinaGeometry::default().hash(),
    )];
    for (a, h) in FieldId::all().zip(codebooks.hashes()) {
        header.push((format!("codebook.hash.f{a}"), h));
    }
    header
}

/// Loads codebooks from `dir`, checking their hashes against its manifest.
pub fn load_verified_codebooks(dir: &Path) -> Result<(CodebookSet, RunManifest)> {
    let manifest = RunManifest::load(&dir.join(CODEBOOK_MANIFEST))?;
    if manifest.get("status") != Some("complete") {
        return Err(Error::Integrity(format!(
            "codebook training in {} did not complete",
            dir.display()
        )));
    }
    for a in FieldId::all() {
        let path = dir.join(CodebookSet::file_name(a));
        let expected = manifest
            .get(&format!("codebook.hash.f{a}"))
            .ok_or_else(|| Error::Integrity(format!("manifest lacks a hash for field {a}")))?;
        let actual = file_hash(&path)?;
        if actual != expected {
            return Err(Error::Integrity(format!(
                "{} hash {actual} does not match manifest {expected}",
                path.display()
            )));
        }
    }
    Ok((CodebookSet::load(dir)?, manifest))
}

#[derive(Debug)]
pub struct ExploreOutcome {
    pub tensor: TransitionTensor,
    pub log: RunLog,
    pub elapsed: Duration,
}

/// Explores with verified codebooks and writes the tensor (and optionally
/// the event log) into `out`.
pub fn cmd_explore(config: &Config, codebook_dir: &Path, out: &Path) -> Result<ExploreOutcome> {
    let start = Instant::now();
    let (codebooks, train_manifest) = load_verified_codebooks(codebook_dir)?;
    create_dir(out)?;
    let schedule = config.schedule()?;
    let mut manifest = RunManifest::base("explore", config);
    manifest.set("scene.description", schedule.source());
    for (a, h) in FieldId::all().zip(codebooks.hashes()) {
        manifest.set(format!("codebook.hash.f{a}"), h);
    }
    for key in ["seed.codebook_walk", "seed.kmeans"] {
        if let Some(v) = train_manifest.get(key) {
            manifest.set(key, v);
        }
    }
    let walk_seed = derive_seed_str(config.explore_seed, "walk");
    manifest.set("seed.explore_walk", walk_seed);
    manifest.set("policy.border", "uniform over feasible saccades");
    manifest.set(
        "policy.scene_change",
        "re-center, suppress straddling transition",
    );
    manifest.set("output.tensor", TENSOR_FILE);
    if config.event_log {
        manifest.set("output.event_log", EVENT_LOG_FILE);
    }
    let manifest_path = out.join(EXPLORE_MANIFEST);
    manifest.save(&manifest_path)?;

    let mut header = tensor_header(&codebooks);
    header.extend(
        manifest
            .entries
            .iter()
            .filter(|(k, _)| k.starts_with("seed."))
            .map(|(k, v)| (k.clone(), v.clone())),
    );
    header.push(("scene.description".into(), schedule.source().to_string()));

    let exploration = ExplorationConfig {
        schedule,
        seed: walk_seed,
    };
    let mut tensor = TransitionTensor::new(codebooks.sizes());
    let mut event_log = if config.event_log {
        let path = out.join(EVENT_LOG_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Some(EventLogWriter::new(BufWriter::new(file), &header).map_err(|e| Error::io(&path, e))?)
    } else {
        None
    };
    let log = explore(&exploration, &codebooks, |event| {
        if let Some(w) = event_log.as_mut() {
            w.write(event)
                .map_err(|e| Error::io(out.join(EVENT_LOG_FILE), e))?;
        }
        tensor.accumulate(event)
    })?;
    if let Some(w) = event_log {
        w.finish()
            .map_err(|e| Error::io(out.join(EVENT_LOG_FILE), e))?;
    }

    header.push((
        "explore.suppressed_boundaries".into(),
        log.suppressed_boundaries.to_string(),
    ));
    tensor.save(&out.join(TENSOR_FILE), &header)?;
    manifest.set("explore.events", log.events);
    manifest.set("explore.suppressed_boundaries", log.suppressed_boundaries);
    manifest.set("explore.scenes_visited", log.scenes_visited);
    manifest.set("tensor.hash", file_hash(&out.join(TENSOR_FILE))?);
    manifest.set("status", "complete");
    manifest.save(&manifest_path)?;
    Ok(ExploreOutcome {
        tensor,
        log,
        elapsed: start.elapsed(),
    })
}

/// Rebuilds a tensor from an event log.
pub fn replay_event_log(path: &Path, sizes: [usize; FIELD_COUNT]) -> Result<TransitionTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = EventLogReader::new(BufReader::new(file))?;
    let mut tensor = TransitionTensor::new(sizes);
    while let Some(event) = reader.next_event()? {
        tensor.accumulate(&event)?;
    }
    Ok(tensor)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub epsilon: f64,
    /// Field whose states anchor the similarity sets; all fields when `None`.
    pub anchor_field: Option<FieldId>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            anchor_field: Some(FieldId::FOVEA),
        }
    }
}

#[derive(Debug)]
pub struct AnalyzeOutcome {
    pub entropy: EntropyMatrix,
    pub report: BlockReport,
    pub warnings: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub elapsed: Duration,
}

impl AnalyzeOutcome {
    /// Coupled-block ranking agrees with the geometric ground truth.
    pub fn verified(&self) -> bool {
        self.report.rank_agreement()
    }
}

/// Computes entropies, similarity sets and the block report for a tensor,
/// writing every export into `out`.
pub fn cmd_analyze(
    tensor_path: &Path,
    codebook_dir: &Path,
    out: &Path,
    options: &AnalyzeOptions,
) -> Result<AnalyzeOutcome> {
    let start = Instant::now();
    let (tensor, header) = TransitionTensor::load(tensor_path)?;
    let (codebooks, _) = load_verified_codebooks(codebook_dir)?;
    for (a, h) in FieldId::all().zip(codebooks.hashes()) {
        let key = format!("codebook.hash.f{a}");
        match header.iter().find(|(k, _)| *k == key) {
            Some((_, v)) if *v == h => {}
            Some((_, v)) => {
                return Err(Error::Integrity(format!(
                    "tensor was built with codebook {a} hash {v}, found {h}"
                )))
            }
            None => return Err(Error::Integrity(format!("tensor header lacks {key}"))),
        }
    }
    if tensor.layout().sizes() != codebooks.sizes() {
        return Err(Error::Integrity("tensor and codebook sizes differ".into()));
    }
    create_dir(out)?;
    let mut manifest = RunManifest::default();
    manifest.set("toolkit.version", VERSION);
    manifest.set("command", "analyze");
    manifest.set("status", "running");
    manifest.set("input.tensor.hash", file_hash(tensor_path)?);
    manifest.set("analyze.epsilon", options.epsilon);
    let manifest_path = out.join(ANALYZE_MANIFEST);
    manifest.save(&manifest_path)?;

    let mut warnings = Vec::new();
    let entropy = EntropyMatrix::compute(&tensor);
    let unobserved = entropy.unobserved_blocks();
    if !unobserved.is_empty() {
        warnings.push(format!("{} unobserved blocks", unobserved.len()));
    }
    let probs = normalize(&tensor);
    if probs.unobserved_rows() > 0 {
        warnings.push(format!(
            "{} unobserved rows flagged",
            probs.unobserved_rows()
        ));
    }
    let report = block_report(&entropy);

    let mut outputs = export::write_entropy_csvs(out, &entropy)?;
    let entropy_png = out.join("entropy.png");
    export::render_entropy(&entropy)
        .save(&entropy_png)
        .map_err(|e| Error::Decode {
            path: entropy_png.clone(),
            message: e.to_string(),
        })?;
    outputs.push(entropy_png);
    outputs.extend(export::write_pages(out, &probs)?);

    let anchors: Vec<FieldId> = match options.anchor_field {
        Some(a) => vec![a],
        None => FieldId::all().collect(),
    };
    let mut sets = Vec::new();
    for a in anchors {
        for i in 0..tensor.layout().size(a) {
            sets.push(similarity_set(
                &probs,
                SensoryState { field: a, index: i },
                options.epsilon,
            )?);
        }
    }
    if sets.iter().all(|s| s.is_empty()) {
        warnings.push(format!(
            "all similarity sets are empty at epsilon={}",
            options.epsilon
        ));
    }
    outputs.extend(export::write_similarity(out, &sets, Some(&codebooks))?);

    let report_path = out.join("block_report.txt");
    std::fs::write(&report_path, report.to_text()).map_err(|e| Error::io(&report_path, e))?;
    outputs.push(report_path);

    for (n, p) in outputs.iter().enumerate() {
        manifest.set(
            format!("output.{n:02}"),
            p.file_name()
                .map(|f| f.to_string_lossy())
                .unwrap_or_default(),
        );
    }
    manifest.set("verify.rank_agreement", report.rank_agreement());
    manifest.set("status", "complete");
    manifest.save(&manifest_path)?;
    Ok(AnalyzeOutcome {
        entropy,
        report,
        warnings,
        outputs,
        elapsed: start.elapsed(),
    })
}

/// Output locations of a full pipeline run under one root.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn codebooks(&self) -> PathBuf {
        self.root.join("codebooks")
    }

    pub fn tensor(&self) -> PathBuf {
        self.root.join(TENSOR_FILE)
    }

    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }
}

#[derive(Debug)]
pub struct PipelineRun {
    pub train: TrainOutcome,
    pub explore: ExploreOutcome,
    pub analyze: AnalyzeOutcome,
}

impl PipelineRun {
    pub fn elapsed(&self) -> Duration {
        self.train.elapsed + self.explore.elapsed + self.analyze.elapsed
    }
}

/// train -> explore -> analyze under `paths.root`.
pub fn run_all(config: &Config, paths: &RunPaths, options: &AnalyzeOptions) -> Result<PipelineRun> {
    let train = cmd_train(config, &paths.codebooks())?;
    let explore = cmd_explore(config, &paths.codebooks(), &paths.root)?;
    let analyze = cmd_analyze(
        &paths.tensor(),
        &paths.codebooks(),
        &paths.analysis(),
        options,
    )?;
    Ok(PipelineRun {
        train,
        explore,
        analyze,
    })
}
