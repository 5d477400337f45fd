//! Random-saccade exploration of a scene stream, producing the transition
//! events the predictive model learns from.

use std::io::{BufRead, Write};

use rand::Rng as _;

use crate::codebook::{CodebookSet, StateVector};
use crate::error::{Error, Result};
use crate::retina::{apply_saccade, sense, Position, Saccade, FIELD_COUNT, SACCADE_COUNT};
use crate::scene::{GrayImage, SceneSchedule};
use crate::seed::{rng, Rng};

/// Saccades that keep the field of view inside a `width x height` scene.
pub fn feasible_saccades(position: Position, width: usize, height: usize) -> Result<Vec<Saccade>> {
    let out: Vec<Saccade> = Saccade::all()
        .filter(|&s| apply_saccade(position, s, width, height).is_ok())
        .collect();
    if out.is_empty() {
        return Err(Error::ImpossibleGeometry {
            x: position.x,
            y: position.y,
            width,
            height,
        });
    }
    Ok(out)
}

/// Uniform draw over the feasible saccades.
pub(crate) fn draw_saccade(
    position: Position,
    width: usize,
    height: usize,
    rng: &mut Rng,
) -> Result<Saccade> {
    let feasible = feasible_saccades(position, width, height)?;
    Ok(feasible[rng.random_range(0..feasible.len())])
}

#[derive(Debug, Clone)]
pub struct ExplorationConfig {
    pub schedule: SceneSchedule,
    pub seed: u64,
}

impl ExplorationConfig {
    pub fn total_saccades(&self) -> usize {
        self.schedule.total_saccades()
    }

    /// Events a run emits: one per saccade, minus the suppressed
    /// transition at each of the `scene_count - 1` scene changes.
    pub fn expected_events(&self) -> usize {
        self.total_saccades() - (self.schedule.scene_count() - 1)
    }
}

/// Encoded states of all fields before and after one saccade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionEvent {
    pub pre: StateVector,
    pub saccade: Saccade,
    pub post: StateVector,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLog {
    pub events: usize,
    pub suppressed_boundaries: usize,
    pub scenes_visited: usize,
    pub saccade_counts: [u64; SACCADE_COUNT],
    /// Saccades drawn while all eight were feasible.
    pub interior_counts: [u64; SACCADE_COUNT],
}

/// Runs the exploration, handing every event to `sink` in order.
///
/// The agent starts at the center of the first scene. Every
/// `saccades_per_scene` steps the scene changes, the sensor is re-centered
/// and the step that straddles the change produces no event.
pub fn explore(
    config: &ExplorationConfig,
    codebooks: &CodebookSet,
    mut sink: impl FnMut(&TransitionEvent) -> Result<()>,
) -> Result<RunLog> {
    let schedule = &config.schedule;
    let per_scene = schedule.saccades_per_scene();
    let mut walk_rng = rng(config.seed);
    let mut log = RunLog::default();
    let mut scene: GrayImage = schedule.next_scene(0)?;
    log.scenes_visited = 1;
    let mut position = Position::center_of(scene.width(), scene.height());
    let mut state = codebooks.encode_all(&sense(&scene, position)?);

    for step in 0..config.total_saccades() {
        if step > 0 && step % per_scene == 0 {
            scene = schedule.next_scene(step / per_scene)?;
            log.scenes_visited += 1;
            log.suppressed_boundaries += 1;
            position = Position::center_of(scene.width(), scene.height());
            state = codebooks.encode_all(&sense(&scene, position)?);
            continue;
        }
        let (w, h) = (scene.width(), scene.height());
        let feasible = feasible_saccades(position, w, h)?;
        let saccade = feasible[walk_rng.random_range(0..feasible.len())];
        position = apply_saccade(position, saccade, w, h)?;
        assert!(position.fits(w, h), "field of view left the scene");
        let post = codebooks.encode_all(&sense(&scene, position)?);
        log.saccade_counts[saccade.index()] += 1;
        if feasible.len() == SACCADE_COUNT {
            log.interior_counts[saccade.index()] += 1;
        }
        sink(&TransitionEvent {
            pre: state,
            saccade,
            post,
        })?;
        log.events += 1;
        state = post;
    }
    Ok(log)
}

const EVENT_MAGIC: &str = "FOVEA-EVENTS 1";
/// 9 pre-saccadic indices, saccade index (1..=8), 9 post-saccadic indices.
pub const EVENT_RECORD_LEN: usize = 2 * FIELD_COUNT + 1;

/// Binary event log: a text header of `key=value` lines closed by an empty
/// line, followed by fixed-width records. State indices are zero-based bytes.
pub struct EventLogWriter<W: Write> {
    out: W,
}

impl<W: Write> EventLogWriter<W> {
    pub fn new(mut out: W, header: &[(String, String)]) -> std::io::Result<Self> {
        writeln!(out, "{EVENT_MAGIC}")?;
        for (k, v) in header {
            writeln!(out, "{k}={v}")?;
        }
        writeln!(out)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, event: &TransitionEvent) -> std::io::Result<()> {
        let mut rec = [0u8; EVENT_RECORD_LEN];
        for (dst, &s) in rec[..FIELD_COUNT].iter_mut().zip(&event.pre) {
            *dst = s as u8;
        }
        rec[FIELD_COUNT] = event.saccade.get();
        for (dst, &s) in rec[FIELD_COUNT + 1..].iter_mut().zip(&event.post) {
            *dst = s as u8;
        }
        self.out.write_all(&rec)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub struct EventLogReader<R: BufRead> {
    input: R,
    header: Vec<(String, String)>,
}

impl<R: BufRead> EventLogReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let bad = |m: &str| Error::CorruptEvent(format!("event log header: {m}"));
        let mut line = String::new();
        input
            .read_line(&mut line)
            .map_err(|e| bad(&e.to_string()))?;
        if line.trim_end() != EVENT_MAGIC {
            return Err(bad("missing magic line"));
        }
        let mut header = Vec::new();
        loop {
            line.clear();
            if input
                .read_line(&mut line)
                .map_err(|e| bad(&e.to_string()))?
                == 0
            {
                return Err(bad("unterminated header"));
            }
            let l = line.trim_end_matches(['\n', '\r']);
            if l.is_empty() {
                break;
            }
            let (k, v) = l.split_once('=').ok_or_else(|| bad(l))?;
            header.push((k.to_string(), v.to_string()));
        }
        Ok(Self { input, header })
    }

    pub fn header(&self) -> &[(String, String)] {
        &self.header
    }

    /// Next event, or `None` at a clean end of file.
    pub fn next_event(&mut self) -> Result<Option<TransitionEvent>> {
        let mut rec = [0u8; EVENT_RECORD_LEN];
        let mut filled = 0;
        while filled < EVENT_RECORD_LEN {
            let n = self
                .input
                .read(&mut rec[filled..])
                .map_err(|e| Error::CorruptEvent(e.to_string()))?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        match filled {
            0 => Ok(None),
            EVENT_RECORD_LEN => {
                let saccade = Saccade::new(rec[FIELD_COUNT])
                    .map_err(|e| Error::CorruptEvent(e.to_string()))?;
                Ok(Some(TransitionEvent {
                    pre: std::array::from_fn(|i| u16::from(rec[i])),
                    saccade,
                    post: std::array::from_fn(|i| u16::from(rec[FIELD_COUNT + 1 + i])),
                }))
            }
            n => Err(Error::CorruptEvent(format!(
                "truncated record ({n} of {EVENT_RECORD_LEN} bytes)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Codebook, TrainingMeta};
    use crate::retina::FieldId;
    use crate::scene::SceneSource;

    pub(crate) fn constant_codebooks() -> CodebookSet {
        let books = FieldId::all()
            .map(|a| {
                let k = if a.is_fovea() { 50 } else { 20 };
                let protos = (0..k).map(|i| vec![i as f32 * 5.0; a.dim()]).collect();
                let meta = TrainingMeta {
                    seed: 0,
                    samples: 0,
                    iterations: 0,
                    inertia: 0.0,
                };
                Codebook::new(a, protos, meta).unwrap()
            })
            .collect();
        CodebookSet::new(books).unwrap()
    }

    fn random_schedule(count: usize, per: usize, side: usize) -> SceneSchedule {
        SceneSchedule::new(
            count,
            per,
            SceneSource::Random {
                width: side,
                height: side,
                seed: 77,
            },
        )
        .unwrap()
    }

    #[test]
    fn all_saccades_feasible_at_center() {
        let p = Position::center_of(1024, 1024);
        assert_eq!(feasible_saccades(p, 1024, 1024).unwrap().len(), 8);
    }

    #[test]
    fn corner_allows_three_saccades() {
        let got: Vec<(i32, i32)> = feasible_saccades(Position::new(0, 0), 1024, 1024)
            .unwrap()
            .iter()
            .map(|s| s.vector())
            .collect();
        let mut got = got;
        got.sort_unstable();
        assert_eq!(got, vec![(0, 10), (10, 0), (10, 10)]);
    }

    #[test]
    fn small_scene_interior() {
        assert_eq!(
            feasible_saccades(Position::new(10, 10), 50, 50)
                .unwrap()
                .len(),
            8
        );
        assert!(feasible_saccades(Position::new(0, 0), 30, 30).is_err());
    }

    #[test]
    fn event_count_contract() {
        let config = ExplorationConfig {
            schedule: random_schedule(5, 40, 64),
            seed: 1,
        };
        let books = constant_codebooks();
        let mut n = 0;
        let log = explore(&config, &books, |_| {
            n += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(n, 200 - 4);
        assert_eq!(log.events, config.expected_events());
        assert_eq!(log.suppressed_boundaries, 4);
        assert_eq!(log.scenes_visited, 5);

        let single = ExplorationConfig {
            schedule: random_schedule(1, 100, 64),
            seed: 1,
        };
        assert_eq!(explore(&single, &books, |_| Ok(())).unwrap().events, 100);
    }

    #[test]
    fn constant_scene_events_are_stationary() {
        let dir = tempfile::tempdir().unwrap();
        GrayImage::filled(90, 90, 37)
            .unwrap()
            .save_png(&dir.path().join("c.png"))
            .unwrap();
        // Directory scenes are normalized to 1024x1024; a constant image stays constant.
        let schedule = SceneSchedule::new(
            1,
            300,
            SceneSource::Directory {
                path: dir.path().to_path_buf(),
            },
        )
        .unwrap();
        let config = ExplorationConfig { schedule, seed: 3 };
        explore(&config, &constant_codebooks(), |e| {
            assert_eq!(e.pre, e.post);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn exploration_is_deterministic() {
        let config = ExplorationConfig {
            schedule: random_schedule(3, 200, 100),
            seed: 9,
        };
        let books = constant_codebooks();
        let run = || {
            let mut buf = Vec::new();
            let mut w = EventLogWriter::new(&mut buf, &[]).unwrap();
            explore(&config, &books, |e| {
                w.write(e).map_err(|e| Error::CorruptEvent(e.to_string()))
            })
            .unwrap();
            w.finish().unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn event_log_round_trip() {
        let events = [
            TransitionEvent {
                pre: [1, 2, 3, 4, 49, 5, 6, 7, 19],
                saccade: Saccade::new(3).unwrap(),
                post: [0; 9],
            },
            TransitionEvent {
                pre: [0; 9],
                saccade: Saccade::new(8).unwrap(),
                post: [19, 18, 17, 16, 15, 14, 13, 12, 11],
            },
        ];
        let header = vec![("seed".to_string(), "5".to_string())];
        let mut w = EventLogWriter::new(Vec::new(), &header).unwrap();
        for e in &events {
            w.write(e).unwrap();
        }
        let bytes = w.finish().unwrap();
        let mut r = EventLogReader::new(std::io::Cursor::new(bytes.clone())).unwrap();
        assert_eq!(r.header(), header.as_slice());
        assert_eq!(r.next_event().unwrap(), Some(events[0]));
        assert_eq!(r.next_event().unwrap(), Some(events[1]));
        assert_eq!(r.next_event().unwrap(), None);

        let truncated = &bytes[..bytes.len() - 3];
        let mut r = EventLogReader::new(std::io::Cursor::new(truncated.to_vec())).unwrap();
        r.next_event().unwrap();
        assert!(matches!(r.next_event(), Err(Error::CorruptEvent(_))));
    }

    #[test]
    fn interior_saccade_draws_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let config = ExplorationConfig {
            schedule: random_schedule(1, 20_000, 4096),
            seed: 12,
        };
        let log = explore(&config, &constant_codebooks(), |_| Ok(())).unwrap();
        let counts = log.interior_counts;
        let n: u64 = counts.iter().sum();
        assert!(n > 15_000, "walk should stay mostly interior, got {n}");
        let expected = n as f64 / 8.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(7.0).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi-square {stat} over {counts:?}");
    }
}
