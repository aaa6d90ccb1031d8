//! Multi-modal clustering of person-tracks in video.
//!
//! Tracks carry pre-computed face, body and voice embeddings. The pipeline
//! groups them by identity in three stages: face-based first-NN
//! agglomeration under temporal cannot-link constraints, bridging of face
//! clusters through agreeing face and voice evidence, and attachment of
//! face-less backs through body similarity in neighbouring shots.
//!
//! ```
//! use muhpc::synth::{generate, GeneratorParams};
//! use muhpc::{evaluate, run_pipeline, ClusteringConfig, Weighting};
//!
//! let (dataset, _) = generate(&GeneratorParams {
//!     n_characters: 4,
//!     n_tracks: 40,
//!     ..Default::default()
//! })
//! .unwrap();
//! let result = run_pipeline(&dataset, &ClusteringConfig::default()).unwrap();
//! let report = evaluate(&result.assignment, &dataset, Weighting::Track).unwrap();
//! assert!(report.wcp > 0.9);
//! ```

pub mod config;
pub mod constraints;
pub mod distance;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod synth;
pub mod threshold;

pub use config::{ClusteringConfig, Protocol};
pub use constraints::{build_cannot_links, CannotLinkSet};
pub use distance::{cosine_distance, knn, ratio_distinctive, NeighborList};
pub use error::{Error, Result};
pub use eval::{evaluate, MetricsReport, Weighting};
pub use model::{
    validate_dataset, ClusterId, Dataset, Embedding, FrameSet, Modality, Track, TrackId,
};
pub use partition::{Cluster, Partition};
pub use pipeline::{run_pipeline, run_pipeline_with, Execution, PipelineResult, Stage};
pub use threshold::{collect_voice_negatives, filter_voice_tracks, learn_voice_threshold};
