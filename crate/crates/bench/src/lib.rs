//! Fixtures shared by the pipeline benchmarks.

use fovea_core::codebook::{
    collect_training_samples, default_codebook_size, CodebookSet, SampleSet, StateVector,
};
use fovea_core::explorer::TransitionEvent;
use fovea_core::retina::{FieldId, Saccade, FIELD_COUNT};
use fovea_core::scene::{SceneSchedule, SceneSource};

pub fn sizes() -> [usize; FIELD_COUNT] {
    std::array::from_fn(|i| default_codebook_size(FieldId::from_index(i)))
}

pub fn random_schedule(scenes: usize, per_scene: usize, side: usize) -> SceneSchedule {
    SceneSchedule::new(
        scenes,
        per_scene,
        SceneSource::Random {
            width: side,
            height: side,
            seed: 1,
        },
    )
    .expect("valid schedule")
}

pub fn samples(per_field: usize) -> Vec<SampleSet> {
    collect_training_samples(&random_schedule(4, 1_000, 256), per_field, 2).expect("samples")
}

pub fn codebooks(per_field: usize) -> CodebookSet {
    CodebookSet::train(&samples(per_field), sizes(), 3).expect("codebooks")
}

/// Deterministic pseudo-random events covering every saccade.
pub fn events(n: usize) -> Vec<TransitionEvent> {
    let sizes = sizes();
    let mut x: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = move |m: usize| {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x % m as u64) as u16
    };
    (0..n)
        .map(|k| {
            let pre: StateVector = std::array::from_fn(|i| next(sizes[i]));
            let post: StateVector = std::array::from_fn(|i| next(sizes[i]));
            TransitionEvent {
                pre,
                saccade: Saccade::from_index(k % 8),
                post,
            }
        })
        .collect()
}
