use super::tensor::Probabilities;
use crate::codebook::SensoryState;
use crate::error::{Error, Result};
use crate::retina::{FieldId, Saccade};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarMember {
    pub state: SensoryState,
    /// Saccade with the highest transition probability (lowest q on ties).
    pub saccade: Saccade,
    pub probability: f64,
    /// Every saccade meeting the threshold, with its probability.
    pub witnesses: Vec<(Saccade, f64)>,
}

/// States reachable from an anchor with probability at least epsilon under
/// some saccade.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilaritySet {
    pub anchor: SensoryState,
    pub epsilon: f64,
    pub members: Vec<SimilarMember>,
}

impl SimilaritySet {
    pub fn members_in(&self, field: FieldId) -> impl Iterator<Item = &SimilarMember> {
        self.members.iter().filter(move |m| m.state.field == field)
    }

    pub fn contains(&self, state: SensoryState) -> bool {
        self.members.iter().any(|m| m.state == state)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn similarity_set(
    probs: &Probabilities,
    anchor: SensoryState,
    epsilon: f64,
) -> Result<SimilaritySet> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let layout = probs.layout();
    if anchor.index >= layout.size(anchor.field) {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} outside its codebook"
        )));
    }
    let mut members = Vec::new();
    for b in FieldId::all() {
        for j in 0..layout.size(b) {
            let witnesses: Vec<(Saccade, f64)> = Saccade::all()
                .filter_map(|q| {
                    probs
                        .probability(q, anchor.field, anchor.index, b, j)
                        .filter(|&p| p >= epsilon)
                        .map(|p| (q, p))
                })
                .collect();
            if let Some(&(saccade, probability)) =
                witnesses
                    .iter()
                    .reduce(|best, w| if w.1 > best.1 { w } else { best })
            {
                members.push(SimilarMember {
                    state: SensoryState { field: b, index: j },
                    saccade,
                    probability,
                    witnesses,
                });
            }
        }
    }
    Ok(SimilaritySet {
        anchor,
        epsilon,
        members,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::explorer::TransitionEvent;
    use crate::model::{normalize, TransitionTensor};
    use crate::seed::rng;

    const SIZES: [usize; 9] = [20, 20, 20, 20, 50, 20, 20, 20, 20];

    #[test]
    fn one_certain_transition_per_saccade() {
        // From state 0 of the fovea, saccade q always lands field b(q) on state q.
        let mut t = TransitionTensor::new(SIZES);
        let targets: Vec<FieldId> = FieldId::all().filter(|f| !f.is_fovea()).collect();
        for q in Saccade::all() {
            for rep in 0..4u16 {
                let mut post = [0u16; 9];
                for (idx, p) in post.iter_mut().enumerate() {
                    // Fields other than the target vary so they stay below threshold.
                    *p = (rep * 5 + idx as u16) % 4 + 10;
                }
                post[targets[q.index()].index()] = q.get() as u16;
                t.accumulate(&TransitionEvent {
                    pre: [0; 9],
                    saccade: q,
                    post,
                })
                .unwrap();
            }
        }
        let probs = normalize(&t);
        let anchor = SensoryState {
            field: FieldId::FOVEA,
            index: 0,
        };
        let set = similarity_set(&probs, anchor, 0.5).unwrap();
        assert_eq!(set.members.len(), 8);
        for q in Saccade::all() {
            let target = SensoryState {
                field: targets[q.index()],
                index: q.get() as usize,
            };
            assert!(set.contains(target), "{target} missing");
        }
        assert!(similarity_set(&probs, anchor, 1.0 + 1e-9)
            .unwrap()
            .is_empty());
        assert!(similarity_set(&probs, anchor, 0.0).is_err());
    }

    fn random_tensor(seed: u64, events: usize) -> TransitionTensor {
        let mut r = rng(seed);
        let mut t = TransitionTensor::new(SIZES);
        for _ in 0..events {
            let pre = std::array::from_fn(|i| r.random_range(0..3.min(SIZES[i])) as u16);
            let post = std::array::from_fn(|i| r.random_range(0..4.min(SIZES[i])) as u16);
            let saccade = Saccade::from_index(r.random_range(0..8));
            t.accumulate(&TransitionEvent { pre, saccade, post })
                .unwrap();
        }
        t
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn threshold_monotonicity(seed in any::<u64>(), e1 in 0.05f64..1.0, e2 in 0.05f64..1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let probs = normalize(&random_tensor(seed, 60));
            for a in FieldId::all() {
                let anchor = SensoryState { field: a, index: 0 };
                let loose = similarity_set(&probs, anchor, lo).unwrap();
                let strict = similarity_set(&probs, anchor, hi).unwrap();
                for m in &strict.members {
                    prop_assert!(loose.contains(m.state));
                }
                if hi > 0.5 {
                    for b in FieldId::all() {
                        for q in Saccade::all() {
                            let n = strict.members_in(b)
                                .filter(|m| m.witnesses.iter().any(|w| w.0 == q))
                                .count();
                            prop_assert!(n <= 1);
                        }
                    }
                }
            }
        }
    }
}
