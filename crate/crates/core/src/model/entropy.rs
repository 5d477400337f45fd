use rayon::prelude::*;

use super::tensor::TransitionTensor;
use crate::error::{Error, Result};
use crate::retina::{FieldId, Saccade, FIELD_COUNT, SACCADE_COUNT};

/// Normalized conditional entropy of a joint count table (row-major, `cols`
/// columns): `-sum_ij P(i,j) ln(P(i,j) / P(i)) / ln(n_b)`, with zero cells
/// contributing nothing. `None` for an empty table.
pub fn block_entropy(counts: &[u64], cols: usize, n_b: usize) -> Option<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    if n_b <= 1 {
        return Some(0.0);
    }
    let n = total as f64;
    let mut h = 0.0;
    for row in counts.chunks_exact(cols) {
        let r: u64 = row.iter().sum();
        if r == 0 {
            continue;
        }
        let r = r as f64;
        for &c in row.iter().filter(|&&c| c > 0) {
            let c = c as f64;
            h -= (c / n) * (c / r).ln();
        }
    }
    Some((h / (n_b as f64).ln()).max(0.0))
}

/// H(a|b,q) for one block of the tensor.
pub fn conditional_entropy(
    tensor: &TransitionTensor,
    a: FieldId,
    b: FieldId,
    q: Saccade,
) -> Result<f64> {
    let n_b = tensor.layout().size(b);
    block_entropy(&tensor.block(a, b, q), n_b, n_b).ok_or(Error::UnobservedBlock {
        a: a.get(),
        b: b.get(),
        q: q.get(),
    })
}

/// H(a|b,q) over all 81 field pairs and 8 saccades.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMatrix {
    values: Vec<Option<f64>>,
    observations: Vec<u64>,
}

fn slot(a: FieldId, b: FieldId, q: Saccade) -> usize {
    (q.index() * FIELD_COUNT + a.index()) * FIELD_COUNT + b.index()
}

impl EntropyMatrix {
    pub fn compute(tensor: &TransitionTensor) -> Self {
        let blocks: Vec<(Option<f64>, u64)> = (0..SACCADE_COUNT * FIELD_COUNT * FIELD_COUNT)
            .into_par_iter()
            .map(|s| {
                let q = Saccade::from_index(s / (FIELD_COUNT * FIELD_COUNT));
                let a = FieldId::from_index((s / FIELD_COUNT) % FIELD_COUNT);
                let b = FieldId::from_index(s % FIELD_COUNT);
                let counts = tensor.block(a, b, q);
                let n_b = tensor.layout().size(b);
                (block_entropy(&counts, n_b, n_b), counts.iter().sum())
            })
            .collect();
        let (values, observations) = blocks.into_iter().unzip();
        Self {
            values,
            observations,
        }
    }

    /// `None` when the block has no observations.
    pub fn get(&self, a: FieldId, b: FieldId, q: Saccade) -> Option<f64> {
        self.values[slot(a, b, q)]
    }

    pub fn observations(&self, a: FieldId, b: FieldId, q: Saccade) -> u64 {
        self.observations[slot(a, b, q)]
    }

    /// Mean over all observed blocks.
    pub fn mean(&self) -> f64 {
        let observed: Vec<f64> = self.values.iter().flatten().copied().collect();
        observed.iter().sum::<f64>() / observed.len().max(1) as f64
    }

    pub fn unobserved_blocks(&self) -> Vec<(FieldId, FieldId, Saccade)> {
        let mut out = Vec::new();
        for q in Saccade::all() {
            for a in FieldId::all() {
                for b in FieldId::all() {
                    if self.get(a, b, q).is_none() {
                        out.push((a, b, q));
                    }
                }
            }
        }
        out
    }
}
