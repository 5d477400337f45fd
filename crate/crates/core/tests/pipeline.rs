use std::path::Path;

use fovea_core::codebook::StateVector;
use fovea_core::explorer::TransitionEvent;
use fovea_core::model::{normalize, EntropyMatrix, TransitionTensor};
use fovea_core::pipeline::{self, AnalyzeOptions, Config, RunManifest, RunPaths, SourceKind};
use fovea_core::retina::{FieldId, Saccade, FIELD_COUNT};
use fovea_core::scene::{list_scene_files, load_natural_scene, SCENE_SIDE};
use fovea_core::Error;
use proptest::prelude::*;

fn small_config() -> Config {
    Config {
        scene_count: 3,
        saccades_per_scene: 400,
        scene_size: 128,
        samples_per_field: 3_000,
        event_log: true,
        ..Config::default()
    }
}

#[test]
fn replayed_event_log_equals_online_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::new(dir.path());
    let config = small_config();
    pipeline::cmd_train(&config, &paths.codebooks()).unwrap();
    let run = pipeline::cmd_explore(&config, &paths.codebooks(), dir.path()).unwrap();
    assert_eq!(run.log.events, 3 * 400 - 2);
    assert_eq!(run.log.suppressed_boundaries, 2);
    let sizes = run.tensor.layout().sizes();
    let replayed =
        pipeline::replay_event_log(&dir.path().join(pipeline::EVENT_LOG_FILE), sizes).unwrap();
    assert_eq!(replayed.counts(), run.tensor.counts());
    let (loaded, header) = TransitionTensor::load(&paths.tensor()).unwrap();
    assert_eq!(loaded.counts(), run.tensor.counts());
    assert!(header.iter().any(|(k, _)| k == "geometry.hash"));
}

#[test]
fn single_scene_run_suppresses_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::new(dir.path());
    let config = Config {
        scene_count: 1,
        saccades_per_scene: 100,
        ..small_config()
    };
    pipeline::cmd_train(&config, &paths.codebooks()).unwrap();
    let run = pipeline::cmd_explore(&config, &paths.codebooks(), dir.path()).unwrap();
    assert_eq!(run.log.events, 100);
    assert_eq!(run.log.suppressed_boundaries, 0);
    assert_eq!(run.tensor.total(), 81 * 100);
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn runs_from_one_manifest_are_byte_identical() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = small_config();
    pipeline::run_all(
        &config,
        &RunPaths::new(d1.path()),
        &AnalyzeOptions::default(),
    )
    .unwrap();
    let manifest = RunManifest::load(&d1.path().join(pipeline::EXPLORE_MANIFEST)).unwrap();
    assert_eq!(manifest.get("status"), Some("complete"));
    let replayed = manifest.config().unwrap();
    assert_eq!(replayed, config);
    pipeline::run_all(
        &replayed,
        &RunPaths::new(d2.path()),
        &AnalyzeOptions::default(),
    )
    .unwrap();
    assert_eq!(tree(d1.path()), tree(d2.path()));
}

#[test]
fn tensor_from_other_codebooks_is_refused() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = Config {
        event_log: false,
        ..small_config()
    };
    pipeline::cmd_train(&config, &d1.path().join("codebooks")).unwrap();
    pipeline::cmd_explore(&config, &d1.path().join("codebooks"), d1.path()).unwrap();
    let other = Config {
        codebook_seed: 99,
        ..config
    };
    pipeline::cmd_train(&other, &d2.path().join("codebooks")).unwrap();
    let err = pipeline::cmd_analyze(
        &d1.path().join(pipeline::TENSOR_FILE),
        &d2.path().join("codebooks"),
        &d2.path().join("analysis"),
        &AnalyzeOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
}

#[test]
fn epsilon_above_one_empties_every_set() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::new(dir.path());
    let config = Config {
        event_log: false,
        ..small_config()
    };
    pipeline::cmd_train(&config, &paths.codebooks()).unwrap();
    pipeline::cmd_explore(&config, &paths.codebooks(), dir.path()).unwrap();
    let options = AnalyzeOptions {
        epsilon: 1.01,
        ..AnalyzeOptions::default()
    };
    let out = pipeline::cmd_analyze(
        &paths.tensor(),
        &paths.codebooks(),
        &paths.analysis(),
        &options,
    )
    .unwrap();
    assert!(out.warnings.iter().any(|w| w.contains("empty")));
    let csv = std::fs::read_to_string(paths.analysis().join("similarity_sets.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "header only");
}

#[test]
fn fixture_images_normalize_to_square_scenes() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/natural");
    let files = list_scene_files(&dir).unwrap();
    assert_eq!(files.len(), 19);
    for f in files.iter().take(3) {
        let scene = load_natural_scene(f).unwrap();
        assert_eq!((scene.width(), scene.height()), (SCENE_SIDE, SCENE_SIDE));
    }
}

#[test]
fn directory_source_requires_a_path() {
    let config = Config {
        scene_source: SourceKind::Directory,
        ..small_config()
    };
    assert!(matches!(config.schedule(), Err(Error::InvalidArgument(_))));
}

const SIZES: [usize; FIELD_COUNT] = [20, 20, 20, 20, 50, 20, 20, 20, 20];

fn event_strategy() -> impl Strategy<Value = TransitionEvent> {
    let states = || {
        proptest::array::uniform9(0u16..20).prop_map(|mut s: StateVector| {
            s[4] = s[4] * 2 + 1;
            s
        })
    };
    (states(), 0usize..8, states()).prop_map(|(pre, q, post)| TransitionEvent {
        pre,
        saccade: Saccade::from_index(q),
        post,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn counts_are_conserved_and_rows_stochastic(events in proptest::collection::vec(event_strategy(), 1..200)) {
        let mut tensor = TransitionTensor::new(SIZES);
        for e in &events {
            tensor.accumulate(e).unwrap();
        }
        prop_assert_eq!(tensor.total(), 81 * events.len() as u64);
        let probs = normalize(&tensor);
        for q in Saccade::all() {
            for a in FieldId::all() {
                for i in 0..SIZES[a.index()] {
                    for b in FieldId::all() {
                        let total: u64 = tensor.row(q, a, i, b).iter().sum();
                        match probs.row(q, a, i, b) {
                            Some(row) => prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9),
                            None => prop_assert_eq!(total, 0),
                        }
                    }
                }
            }
        }
        let entropy = EntropyMatrix::compute(&tensor);
        for q in Saccade::all() {
            for a in FieldId::all() {
                for b in FieldId::all() {
                    if let Some(h) = entropy.get(a, b, q) {
                        prop_assert!((0.0..=1.0).contains(&h));
                    }
                }
            }
        }
    }
}
