use std::fmt::Write as _;

use super::entropy::EntropyMatrix;
use crate::retina::{is_coupled, FieldId, Saccade};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedBlock {
    pub a: FieldId,
    pub b: FieldId,
    pub entropy: Option<f64>,
    pub observations: u64,
    pub coupled: bool,
}

/// Blocks of one saccade sorted by entropy, unobserved blocks last.
#[derive(Debug, Clone, PartialEq)]
pub struct SaccadeRanking {
    pub saccade: Saccade,
    pub blocks: Vec<RankedBlock>,
    pub coupled_count: usize,
}

impl SaccadeRanking {
    /// Oracle-coupled blocks found among the `coupled_count` lowest-entropy blocks.
    pub fn coupled_in_lowest(&self) -> usize {
        self.blocks[..self.coupled_count]
            .iter()
            .filter(|b| b.coupled && b.entropy.is_some())
            .count()
    }

    pub fn lowest_are_coupled(&self) -> bool {
        self.coupled_in_lowest() == self.coupled_count
    }

    /// Entropy gap between the best uncoupled block and the worst coupled one;
    /// positive when the ranking separates them.
    pub fn margin(&self) -> Option<f64> {
        let worst_coupled = self
            .blocks
            .iter()
            .filter(|b| b.coupled)
            .map(|b| b.entropy)
            .try_fold(f64::NEG_INFINITY, |m, h| h.map(|h| m.max(h)))?;
        let best_uncoupled = self
            .blocks
            .iter()
            .filter(|b| !b.coupled)
            .filter_map(|b| b.entropy)
            .fold(f64::INFINITY, f64::min);
        Some(best_uncoupled - worst_coupled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub rankings: Vec<SaccadeRanking>,
    pub mean_coupled: f64,
    pub mean_uncoupled: f64,
    pub min_uncoupled: f64,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

impl BlockReport {
    /// True when, for every saccade, the lowest-entropy blocks are exactly the
    /// coupled ones.
    pub fn rank_agreement(&self) -> bool {
        self.rankings.iter().all(SaccadeRanking::lowest_are_coupled)
    }

    /// Entropies of coupled blocks matching `filter(a, b)`, over all saccades.
    pub fn coupled_entropies(&self, filter: impl Fn(FieldId, FieldId) -> bool) -> Vec<f64> {
        self.rankings
            .iter()
            .flat_map(|r| r.blocks.iter())
            .filter(|b| b.coupled && filter(b.a, b.b))
            .filter_map(|b| b.entropy)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mean H coupled   = {:.6}", self.mean_coupled);
        let _ = writeln!(out, "mean H uncoupled = {:.6}", self.mean_uncoupled);
        let _ = writeln!(out, "min H uncoupled  = {:.6}", self.min_uncoupled);
        let _ = writeln!(out, "rank agreement   = {}", self.rank_agreement());
        for r in &self.rankings {
            let _ = writeln!(
                out,
                "\n{}: {}/{} coupled blocks among the lowest, margin {}",
                r.saccade,
                r.coupled_in_lowest(),
                r.coupled_count,
                r.margin().map_or("n/a".to_string(), |m| format!("{m:+.6}"))
            );
            for (rank, b) in r.blocks.iter().enumerate() {
                let h = b
                    .entropy
                    .map_or("unobserved".to_string(), |h| format!("{h:.6}"));
                let _ = writeln!(
                    out,
                    "  {:>2}. a={} b={} H={} n={}{}",
                    rank + 1,
                    b.a,
                    b.b,
                    h,
                    b.observations,
                    if b.coupled { "  [coupled]" } else { "" }
                );
            }
        }
        out
    }
}

/// Ranks every saccade's blocks by entropy and annotates them with the
/// geometric coupling ground truth.
pub fn block_report(entropy: &EntropyMatrix) -> BlockReport {
    let mut coupled_h = Vec::new();
    let mut uncoupled_h = Vec::new();
    let rankings = Saccade::all()
        .map(|q| {
            let mut blocks: Vec<RankedBlock> = FieldId::all()
                .flat_map(|a| FieldId::all().map(move |b| (a, b)))
                .map(|(a, b)| RankedBlock {
                    a,
                    b,
                    entropy: entropy.get(a, b, q),
                    observations: entropy.observations(a, b, q),
                    coupled: is_coupled(a, b, q),
                })
                .collect();
            for b in &blocks {
                if let Some(h) = b.entropy {
                    if b.coupled {
                        coupled_h.push(h);
                    } else {
                        uncoupled_h.push(h);
                    }
                }
            }
            blocks.sort_by(|x, y| match (x.entropy, y.entropy) {
                (Some(hx), Some(hy)) => hx.total_cmp(&hy).then((x.a, x.b).cmp(&(y.a, y.b))),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => (x.a, x.b).cmp(&(y.a, y.b)),
            });
            let coupled_count = blocks.iter().filter(|b| b.coupled).count();
            SaccadeRanking {
                saccade: q,
                blocks,
                coupled_count,
            }
        })
        .collect();
    BlockReport {
        rankings,
        mean_coupled: mean(&coupled_h),
        mean_uncoupled: mean(&uncoupled_h),
        min_uncoupled: uncoupled_h.iter().copied().fold(f64::INFINITY, f64::min),
    }
}
