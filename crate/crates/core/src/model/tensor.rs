use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::explorer::TransitionEvent;
use crate::retina::{FieldId, Saccade, FIELD_COUNT, SACCADE_COUNT};

/// Index arithmetic of the dense tensor, stored q-major, then a, i, b, j.
/// Each page is the matrix whose rows are the concatenated pre-saccadic
/// states of fields 1..9 and whose columns are the post-saccadic ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorLayout {
    sizes: [usize; FIELD_COUNT],
    offsets: [usize; FIELD_COUNT],
    side: usize,
}

impl TensorLayout {
    pub fn new(sizes: [usize; FIELD_COUNT]) -> Self {
        let mut offsets = [0; FIELD_COUNT];
        let mut acc = 0;
        for (o, &s) in offsets.iter_mut().zip(&sizes) {
            *o = acc;
            acc += s;
        }
        Self {
            sizes,
            offsets,
            side: acc,
        }
    }

    pub fn sizes(&self) -> [usize; FIELD_COUNT] {
        self.sizes
    }

    pub fn size(&self, field: FieldId) -> usize {
        self.sizes[field.index()]
    }

    /// Offset of a field's states along either page axis.
    pub fn offset(&self, field: FieldId) -> usize {
        self.offsets[field.index()]
    }

    /// Rows (equivalently columns) of one page.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn page_len(&self) -> usize {
        self.side * self.side
    }

    pub fn len(&self) -> usize {
        SACCADE_COUNT * self.page_len()
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    #[inline]
    pub fn row_start(&self, q: Saccade, a: FieldId, i: usize, b: FieldId) -> usize {
        q.index() * self.page_len()
            + (self.offsets[a.index()] + i) * self.side
            + self.offsets[b.index()]
    }

    #[inline]
    pub fn index(&self, q: Saccade, a: FieldId, i: usize, b: FieldId, j: usize) -> usize {
        self.row_start(q, a, i, b) + j
    }
}

/// Transition counts for every (q, a, i, b, j).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTensor {
    layout: TensorLayout,
    counts: Vec<u64>,
    events: u64,
}

impl TransitionTensor {
    pub fn new(sizes: [usize; FIELD_COUNT]) -> Self {
        let layout = TensorLayout::new(sizes);
        Self {
            counts: vec![0; layout.len()],
            layout,
            events: 0,
        }
    }

    pub fn layout(&self) -> &TensorLayout {
        &self.layout
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds the 81 atomic transitions of one event.
    pub fn accumulate(&mut self, event: &TransitionEvent) -> Result<()> {
        for (i, (&pre, &post)) in event.pre.iter().zip(&event.post).enumerate() {
            let n = self.layout.sizes[i];
            if usize::from(pre) >= n || usize::from(post) >= n {
                return Err(Error::CorruptEvent(format!(
                    "field {} state out of range: pre {pre}, post {post}, codebook size {n}",
                    i + 1
                )));
            }
        }
        let l = &self.layout;
        let page = event.saccade.index() * l.page_len();
        for (a, &pre) in event.pre.iter().enumerate() {
            let row = page + (l.offsets[a] + usize::from(pre)) * l.side;
            for (b, &post) in event.post.iter().enumerate() {
                self.counts[row + l.offsets[b] + usize::from(post)] += 1;
            }
        }
        self.events += 1;
        Ok(())
    }

    pub fn count(&self, q: Saccade, a: FieldId, i: usize, b: FieldId, j: usize) -> u64 {
        self.counts[self.layout.index(q, a, i, b, j)]
    }

    /// Counts of row (q, a, i, b) over the post-saccadic states j of field b.
    pub fn row(&self, q: Saccade, a: FieldId, i: usize, b: FieldId) -> &[u64] {
        let start = self.layout.row_start(q, a, i, b);
        &self.counts[start..start + self.layout.size(b)]
    }

    /// Joint count table of block (a, b, q), row-major `N^a x N^b`.
    pub fn block(&self, a: FieldId, b: FieldId, q: Saccade) -> Vec<u64> {
        (0..self.layout.size(a))
            .flat_map(|i| self.row(q, a, i, b).iter().copied())
            .collect()
    }

    pub fn block_total(&self, a: FieldId, b: FieldId, q: Saccade) -> u64 {
        (0..self.layout.size(a))
            .map(|i| self.row(q, a, i, b).iter().sum::<u64>())
            .sum()
    }

    /// Writes the tensor with a `key=value` header; counts follow as
    /// little-endian u64 in layout order.
    pub fn save(&self, path: &Path, metadata: &[(String, String)]) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{TENSOR_MAGIC}").map_err(io)?;
        let sizes: Vec<String> = self.layout.sizes.iter().map(usize::to_string).collect();
        writeln!(w, "sizes={}", sizes.join(",")).map_err(io)?;
        writeln!(w, "events={}", self.events).map_err(io)?;
        writeln!(w, "layout=q,a,i,b,j").map_err(io)?;
        for (k, v) in metadata {
            writeln!(w, "{k}={v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for &c in &self.counts {
            w.write_all(&c.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a tensor file, returning the tensor and every header entry.
    pub fn load(path: &Path) -> Result<(Self, Vec<(String, String)>)> {
        let bad = |m: String| Error::format("tensor", path, m);
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if line.trim_end() != TENSOR_MAGIC {
            return Err(bad("missing magic line".into()));
        }
        let mut header = Vec::new();
        loop {
            line.clear();
            if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
                return Err(bad("unterminated header".into()));
            }
            let l = line.trim_end_matches(['\n', '\r']);
            if l.is_empty() {
                break;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header line {l:?}")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let lookup = |key: &str| {
            header
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| bad(format!("missing {key}")))
        };
        let sizes_vec = lookup("sizes")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("sizes: {e}")))?;
        let sizes: [usize; FIELD_COUNT] = sizes_vec
            .try_into()
            .map_err(|_| bad("sizes must list 9 fields".into()))?;
        let events = lookup("events")?
            .parse()
            .map_err(|e| bad(format!("events: {e}")))?;
        let mut tensor = Self::new(sizes);
        tensor.events = events;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != tensor.counts.len() * 8 {
            return Err(bad(format!(
                "expected {} count bytes, found {}",
                tensor.counts.len() * 8,
                bytes.len()
            )));
        }
        for (c, chunk) in tensor.counts.iter_mut().zip(bytes.chunks_exact(8)) {
            *c = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok((tensor, header))
    }
}

const TENSOR_MAGIC: &str = "FOVEA-TENSOR 1";

/// Row-normalized view P(s^b_j | s^a_i, m_q). Rows without observations are
/// flagged and carry no distribution.
#[derive(Debug, Clone)]
pub struct Probabilities {
    layout: TensorLayout,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl Probabilities {
    pub fn layout(&self) -> &TensorLayout {
        &self.layout
    }

    fn row_id(&self, q: Saccade, a: FieldId, i: usize, b: FieldId) -> usize {
        (q.index() * self.layout.side() + self.layout.offset(a) + i) * FIELD_COUNT + b.index()
    }

    /// Distribution over field b's states, or `None` for an unobserved row.
    pub fn row(&self, q: Saccade, a: FieldId, i: usize, b: FieldId) -> Option<&[f64]> {
        if !self.observed[self.row_id(q, a, i, b)] {
            return None;
        }
        let start = self.layout.row_start(q, a, i, b);
        Some(&self.values[start..start + self.layout.size(b)])
    }

    pub fn is_observed(&self, q: Saccade, a: FieldId, i: usize, b: FieldId) -> bool {
        self.observed[self.row_id(q, a, i, b)]
    }

    pub fn probability(
        &self,
        q: Saccade,
        a: FieldId,
        i: usize,
        b: FieldId,
        j: usize,
    ) -> Option<f64> {
        self.row(q, a, i, b).map(|r| r[j])
    }

    pub fn unobserved_rows(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }
}

pub fn normalize(tensor: &TransitionTensor) -> Probabilities {
    let layout = tensor.layout().clone();
    let mut values = vec![0.0; layout.len()];
    let mut observed = vec![false; SACCADE_COUNT * layout.side() * FIELD_COUNT];
    let mut row_id = 0;
    for q in Saccade::all() {
        for a in FieldId::all() {
            for i in 0..layout.size(a) {
                for b in FieldId::all() {
                    let start = layout.row_start(q, a, i, b);
                    let counts = tensor.row(q, a, i, b);
                    let total: u64 = counts.iter().sum();
                    if total > 0 {
                        observed[row_id] = true;
                        let total = total as f64;
                        for (dst, &c) in values[start..start + counts.len()].iter_mut().zip(counts)
                        {
                            *dst = c as f64 / total;
                        }
                    }
                    row_id += 1;
                }
            }
        }
    }
    Probabilities {
        layout,
        values,
        observed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes() -> [usize; 9] {
        [20, 20, 20, 20, 50, 20, 20, 20, 20]
    }

    fn event(pre: [u16; 9], q: u8, post: [u16; 9]) -> TransitionEvent {
        TransitionEvent {
            pre,
            saccade: Saccade::new(q).unwrap(),
            post,
        }
    }

    #[test]
    fn layout_matches_page_geometry() {
        let l = TensorLayout::new(sizes());
        assert_eq!(l.side(), 210);
        assert_eq!(l.len(), 8 * 210 * 210);
        let q2 = Saccade::new(2).unwrap();
        let f5 = FieldId::FOVEA;
        let f6 = FieldId::new(6).unwrap();
        assert_eq!(l.index(q2, f5, 3, f6, 7), 44100 + (80 + 3) * 210 + 130 + 7);
    }

    #[test]
    fn one_event_touches_81_cells() {
        let mut t = TransitionTensor::new(sizes());
        t.accumulate(&event(
            [1, 2, 3, 4, 49, 5, 6, 7, 8],
            4,
            [0, 1, 2, 3, 10, 4, 5, 6, 7],
        ))
        .unwrap();
        assert_eq!(t.total(), 81);
        assert_eq!(t.counts().iter().filter(|&&c| c == 1).count(), 81);
        for _ in 0..9 {
            t.accumulate(&event(
                [1, 2, 3, 4, 49, 5, 6, 7, 8],
                4,
                [0, 1, 2, 3, 10, 4, 5, 6, 7],
            ))
            .unwrap();
        }
        assert_eq!(t.counts().iter().filter(|&&c| c == 10).count(), 81);
        let q = Saccade::new(4).unwrap();
        assert_eq!(
            t.count(q, FieldId::FOVEA, 49, FieldId::new(1).unwrap(), 0),
            10
        );
        assert_eq!(t.events(), 10);
    }

    #[test]
    fn out_of_range_event_is_corrupt() {
        let mut t = TransitionTensor::new(sizes());
        let err = t
            .accumulate(&event([20, 0, 0, 0, 0, 0, 0, 0, 0], 1, [0; 9]))
            .unwrap_err();
        assert!(matches!(err, Error::CorruptEvent(_)));
        assert_eq!(t.total(), 0);
        assert!(t
            .accumulate(&event([0; 9], 1, [0, 0, 0, 0, 50, 0, 0, 0, 0]))
            .is_err());
    }

    #[test]
    fn normalized_rows() {
        let mut t = TransitionTensor::new(sizes());
        let base = [0u16; 9];
        let mut post_a = base;
        post_a[0] = 0;
        let mut post_b = base;
        post_b[0] = 1;
        for _ in 0..3 {
            t.accumulate(&event(base, 1, post_a)).unwrap();
        }
        t.accumulate(&event(base, 1, post_b)).unwrap();
        let p = normalize(&t);
        let q = Saccade::new(1).unwrap();
        let f1 = FieldId::new(1).unwrap();
        let row = p.row(q, f1, 0, f1).unwrap();
        assert_eq!(&row[..3], &[0.75, 0.25, 0.0]);
        assert!(p.row(q, f1, 1, f1).is_none());
        assert!(!p.is_observed(Saccade::new(2).unwrap(), f1, 0, f1));
    }

    #[test]
    fn save_load_round_trip() {
        let mut t = TransitionTensor::new(sizes());
        t.accumulate(&event(
            [1, 2, 3, 4, 5, 6, 7, 8, 9],
            6,
            [9, 8, 7, 6, 5, 4, 3, 2, 1],
        ))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let meta = vec![("seed".to_string(), "3".to_string())];
        t.save(&path, &meta).unwrap();
        let (back, header) = TransitionTensor::load(&path).unwrap();
        assert_eq!(back, t);
        assert!(header.contains(&meta[0]));

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            TransitionTensor::load(&path),
            Err(Error::Format { .. })
        ));
    }
}
