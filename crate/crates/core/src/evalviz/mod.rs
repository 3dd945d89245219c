//! Evaluation against reference labels and the data behind the usual plots:
//! co-occurrence maps, granularity grids and speaker/token intensity maps.

mod grid;
mod maps;
mod metrics;

pub use grid::{emit_grid, GridSummary};
pub use maps::{cooccurrence, speaker_token_map, write_pgm, CooccurrenceMatrix, SpeakerTokenMap, FREQUENT_COUNT};
pub use metrics::{boundary_prf, cluster_purity_nmi, corpus_boundary_prf, corpus_purity_nmi, Prf};
