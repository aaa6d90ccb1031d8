use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Protocol;
use crate::error::Result;
use crate::model::{ClusterId, Dataset, TrackId};
use crate::partition::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    Stage3,
    Oracle,
}

/// Snapshot of one partition level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub level: usize,
    pub stage: Stage,
    pub num_clusters: usize,
    pub assignment: BTreeMap<TrackId, ClusterId>,
}

impl HistoryEntry {
    pub(crate) fn new(stage: Stage, partition: &Partition) -> Self {
        HistoryEntry {
            level: partition.level(),
            stage,
            num_clusters: partition.num_clusters(),
            assignment: partition.assignment().clone(),
        }
    }
}

/// A Stage-2 merge and the track pair that justified it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeMerge {
    pub clusters: (ClusterId, ClusterId),
    pub tracks: (TrackId, TrackId),
    pub d_face: f64,
    pub d_voice: f64,
}

/// A back attached to a cluster in Stage 3, with its NN evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackAssignment {
    pub track: TrackId,
    pub cluster: ClusterId,
    pub neighbor: TrackId,
    pub d1: f64,
    /// Second NN distance; absent when the candidate pool had one member.
    pub d2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackSkip {
    /// No clustered body in the shot window.
    EmptyPool,
    /// Failed the ratio test.
    NonDistinctive,
    /// First NN farther than `tau_b_back`.
    TooFar,
    /// The NN's cluster holds a track that overlaps the back in time.
    CannotLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnassignedBack {
    pub track: TrackId,
    pub reason: BackSkip,
}

/// Everything produced by one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub protocol: Protocol,
    /// Final track → cluster assignment. Backs left unassigned by Stage 3
    /// are absent.
    pub assignment: BTreeMap<TrackId, ClusterId>,
    pub history: Vec<HistoryEntry>,
    pub bridges: Vec<BridgeMerge>,
    pub back_assignments: Vec<BackAssignment>,
    pub unassigned_backs: Vec<UnassignedBack>,
    pub usable_voice_tracks: usize,
    /// Voice threshold learnt from negatives, when none was configured.
    pub learned_tau_v_loose: Option<f64>,
    /// Voice threshold actually used by Stage 2.
    pub tau_v_loose: Option<f64>,
    /// Cannot-linked pairs placed together by oracle reduction.
    pub oracle_violations: Vec<(TrackId, TrackId)>,
}

impl PipelineResult {
    /// Rebuilds the final partition (with centroids) against `dataset`.
    pub fn partition(&self, dataset: &Dataset) -> Result<Partition> {
        let level = self.history.last().map_or(0, |h| h.level);
        Partition::from_assignment(dataset, &self.assignment, level)
    }

    pub fn num_clusters(&self) -> usize {
        let mut ids: Vec<_> = self.assignment.values().collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Cluster count at the end of `stage`, if that stage ran.
    pub fn clusters_after(&self, stage: Stage) -> Option<usize> {
        self.history
            .iter()
            .rev()
            .find(|h| h.stage == stage)
            .map(|h| h.num_clusters)
    }
}
