//! Simulation and analysis toolkit for a naive agent with a foveated,
//! retina-like sensor.
//!
//! The agent explores gray-scale scenes with eight discrete saccades,
//! quantizes what each of its nine receptive fields sees, counts the
//! resulting sensorimotor transitions and, from those counts alone,
//! recovers which receptive fields exchange visual features under which
//! saccade.
//!
//! - [`scene`]: random and natural scenes, and the order a run visits them
//! - [`retina`]: sensor geometry, field extraction, saccades, coupling ground truth
//! - [`codebook`]: per-field K-Means prototypes and winner-takes-all encoding
//! - [`explorer`]: the random saccade walk emitting transition events
//! - [`model`]: transition tensor, conditional entropy, similarity sets, reports
//! - [`pipeline`]: configuration, manifests and the train/explore/analyze commands
//! - [`verify`]: the acceptance checks, runnable from tests or the CLI

pub mod codebook;
pub mod error;
pub mod explorer;
pub mod model;
pub mod pipeline;
pub mod retina;
pub mod scene;
pub mod seed;
pub mod stats;
pub mod verify;

pub use codebook::{Codebook, CodebookSet, SensoryState};
pub use error::{Error, Result};
pub use explorer::{explore, ExplorationConfig, TransitionEvent};
pub use model::{EntropyMatrix, TransitionTensor};
pub use retina::{FieldId, Position, RetinaGeometry, Saccade};
pub use scene::{GrayImage, SceneSchedule, SceneSource};
