//! The three clustering stages, oracle-count reduction, and the driver that
//! chains them.
//!
//! Stage 1 agglomerates face tracks by first-nearest-neighbour relations
//! under a tight distance threshold and the temporal cannot-link constraint.
//! Stage 2 bridges the resulting clusters when a pair of speaking tracks
//! agrees on both face (loosened threshold) and voice. Stage 3 attaches
//! face-less backs to clusters through body features from the same or
//! neighbouring shots. Under the oracle protocol the result is finally
//! reduced to a known cluster count.

mod oracle;
mod result;
mod stage1;
mod stage2;
mod stage3;

use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;

pub use oracle::{oracle_violations, reduce_to_oracle};
pub use result::{
    BackAssignment, BackSkip, BridgeMerge, HistoryEntry, PipelineResult, Stage, UnassignedBack,
};
pub use stage1::{stage1_cluster, stage1_step};
pub use stage2::stage2_bridge;
pub use stage3::{stage3_assign_backs, Stage3Outcome};

use crate::config::{ClusteringConfig, Protocol};
use crate::constraints::build_cannot_links;
use crate::error::{Error, Result};
use crate::model::{ClusterId, Dataset};
use crate::threshold::{collect_voice_negatives, filter_voice_tracks, learn_voice_threshold};

/// Whether distance evaluation inside a stage may run on the rayon pool.
/// Both modes produce identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

impl Execution {
    /// Maps `f` over `0..n`, preserving index order in the output.
    pub(crate) fn map_indices<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }
}

/// Runs the full pipeline sequentially.
pub fn run_pipeline(dataset: &Dataset, config: &ClusteringConfig) -> Result<PipelineResult> {
    run_pipeline_with(dataset, config, Execution::Sequential)
}

pub fn run_pipeline_with(
    dataset: &Dataset,
    config: &ClusteringConfig,
    exec: Execution,
) -> Result<PipelineResult> {
    config.validate()?;

    let usable = filter_voice_tracks(dataset, config.voice_overlap_max, config.voice_min_seconds);
    let masked = dataset.with_voice_mask(&usable);
    let cannot = build_cannot_links(&masked);
    debug!(
        "{} tracks, {} usable voices, {} cannot-link pairs",
        masked.len(),
        usable.len(),
        cannot.len()
    );

    let stage1 = stage1_cluster(&masked, config, &cannot, exec)?;
    let mut history: Vec<HistoryEntry> = stage1
        .iter()
        .map(|p| HistoryEntry::new(Stage::Stage1, p))
        .collect();
    let stage1_final = stage1.last().expect("stage 1 history is never empty");

    let learned = if config.tau_v_loose.is_none() {
        let negatives = collect_voice_negatives(stage1_final, &cannot, &masked);
        match learn_voice_threshold(&negatives, config.voice_percentile) {
            Ok(t) => Some(t),
            Err(Error::InsufficientNegatives) => {
                warn!("no negative voice pairs found; skipping multi-modal bridging");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let tau_v = config.tau_v_loose.or(learned);

    let (stage2, bridges) = match tau_v {
        Some(_) => stage2_bridge(stage1_final, &masked, config, &cannot, tau_v, exec)?,
        None => (
            stage1_final.merged(&masked, &BTreeMap::new(), stage1_final.level() + 1)?,
            Vec::new(),
        ),
    };
    history.push(HistoryEntry::new(Stage::Stage2, &stage2));

    let stage3 = stage3_assign_backs(&stage2, &masked, config, &cannot, exec)?;
    history.push(HistoryEntry::new(Stage::Stage3, &stage3.partition));

    let mut final_partition = stage3.partition;
    let mut violations = Vec::new();
    if let Protocol::OracleClusters(c) = config.protocol {
        final_partition = reduce_to_oracle(&final_partition, &masked, c)?;
        violations = oracle_violations(&final_partition, &cannot);
        if !violations.is_empty() {
            warn!(
                "oracle reduction co-clustered {} cannot-linked pairs",
                violations.len()
            );
        }
        history.push(HistoryEntry::new(Stage::Oracle, &final_partition));
    }

    Ok(PipelineResult {
        protocol: config.protocol,
        assignment: final_partition.assignment().clone(),
        history,
        bridges,
        back_assignments: stage3.assignments,
        unassigned_backs: stage3.unassigned,
        usable_voice_tracks: usable.len(),
        learned_tau_v_loose: learned,
        tau_v_loose: tau_v,
        oracle_violations: violations,
    })
}

/// Relabels union-find components: every member maps to the smallest cluster
/// id in its component.
pub(crate) fn component_targets(
    ids: &[ClusterId],
    components: &[usize],
) -> BTreeMap<ClusterId, ClusterId> {
    let mut smallest: BTreeMap<usize, ClusterId> = BTreeMap::new();
    for (&id, &root) in ids.iter().zip(components) {
        smallest
            .entry(root)
            .and_modify(|m| *m = (*m).min(id))
            .or_insert(id);
    }
    ids.iter()
        .zip(components)
        .map(|(&id, root)| (id, smallest[root]))
        .collect()
}
