//! Clustering metrics, the assignment solver behind CP/CR, and character
//! co-occurrence analysis.

mod cooccur;
mod hungarian;
mod metrics;

pub use cooccur::{
    cooccurrence, dataset_characters, frame_span, majority_names, CharacterSource,
    CoOccurrenceMatrix, RelativeMatrix,
};
pub use hungarian::{hungarian, Matching};
pub use metrics::{
    character_pr, evaluate, nmi, wcp, CharacterScore, Contingency, MetricsReport, Weighting,
};
