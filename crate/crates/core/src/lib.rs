//! Beat and downbeat annotations derived from osu! beatmap timing data.
//!
//! The pipeline unpacks `.osz` archives, picks one difficulty per audio
//! track, expands its timing points into a metered beat grid, partitions
//! tracks by how their tempo changes, and scores beat trackers or other
//! annotations against the result.

pub mod agreement;
pub mod audio_probe;
pub mod beat_eval;
pub mod beat_grid;
pub mod corpus_ingest;
pub mod dataset_export;
pub mod osu_format;
pub mod partition;
pub mod pipeline;
pub mod synth;

pub use agreement::{AgreementReport, MetricalRelation, RelationKind};
pub use audio_probe::{AudioInfo, ProbeError, ProbeMethod};
pub use beat_eval::{EvalConfig, EvalScores, PredictionSet, SummaryRow};
pub use beat_grid::{BeatAnnotation, BeatEvent};
pub use corpus_ingest::{CatalogRecord, CorpusEntry, FilterCriteria};
pub use dataset_export::{ExportRecord, TimeUnit};
pub use osu_format::{BeatmapDifficulty, TimingPoint};
pub use partition::{SubsetClass, SubsetKind};
pub use pipeline::{PipelineConfig, PipelineError};
