use std::collections::{BTreeMap, HashSet};

use crate::config::ClusteringConfig;
use crate::constraints::CannotLinkSet;
use crate::distance::{knn, ratio_distinctive, NeighborList};
use crate::error::Result;
use crate::model::{ClusterId, Dataset, Modality, TrackId};
use crate::partition::Partition;

use super::{BackAssignment, BackSkip, Execution, UnassignedBack};

#[derive(Debug, Clone)]
pub struct Stage3Outcome {
    pub partition: Partition,
    pub assignments: Vec<BackAssignment>,
    pub unassigned: Vec<UnassignedBack>,
}

/// Attaches face-less backs to existing clusters by body similarity.
///
/// For each back, the candidates are clustered tracks with a body embedding
/// whose shot is within `shot_window` of the back's shot. The back joins the
/// cluster of its first body NN unless the pool is empty, the ratio test
/// fails, the NN is farther than `tau_b_back`, or that cluster already holds
/// a track overlapping the back in time. The number of clusters is unchanged.
pub fn stage3_assign_backs(
    partition: &Partition,
    dataset: &Dataset,
    config: &ClusteringConfig,
    cannot: &CannotLinkSet,
    exec: Execution,
) -> Result<Stage3Outcome> {
    let mut by_shot: BTreeMap<i64, Vec<TrackId>> = BTreeMap::new();
    for &t in partition.assignment().keys() {
        let track = dataset.track(t).expect("partition tracks come from the dataset");
        if track.body.is_some() {
            by_shot.entry(track.shot).or_default().push(t);
        }
    }
    let backs: Vec<TrackId> = dataset
        .tracks()
        .iter()
        .filter(|t| t.is_back() && partition.cluster_of(t.id).is_none())
        .map(|t| t.id)
        .collect();

    let window = i64::from(config.shot_window);
    let neighbours: Vec<Result<NeighborList>> = exec.map_indices(backs.len(), |i| {
        let back = dataset.track(backs[i]).expect("back is in the dataset");
        let pool = by_shot
            .range(back.shot.saturating_sub(window)..=back.shot.saturating_add(window))
            .flat_map(|(_, ids)| ids.iter().copied());
        knn(dataset, back.id, pool, Modality::Body, 2)
    });

    let mut members: BTreeMap<ClusterId, HashSet<TrackId>> = partition
        .clusters()
        .iter()
        .map(|(&c, cl)| (c, cl.members.iter().copied().collect()))
        .collect();
    let mut assignments = Vec::new();
    let mut unassigned = Vec::new();
    for (&back, nl) in backs.iter().zip(neighbours) {
        let nl = nl?;
        let skip = |reason| UnassignedBack { track: back, reason };
        let Some((nn, d1)) = nl.first() else {
            unassigned.push(skip(BackSkip::EmptyPool));
            continue;
        };
        let d2 = nl.second().map(|(_, d)| d);
        if !ratio_distinctive(d1, d2.unwrap_or(f64::INFINITY), config.rho)? {
            unassigned.push(skip(BackSkip::NonDistinctive));
            continue;
        }
        if d1 > config.tau_b_back {
            unassigned.push(skip(BackSkip::TooFar));
            continue;
        }
        let cluster = partition.cluster_of(nn).expect("pool holds clustered tracks only");
        let target = members.get_mut(&cluster).expect("cluster exists");
        if cannot.neighbors(back).any(|n| target.contains(&n)) {
            unassigned.push(skip(BackSkip::CannotLink));
            continue;
        }
        target.insert(back);
        assignments.push(BackAssignment {
            track: back,
            cluster,
            neighbor: nn,
            d1,
            d2,
        });
    }

    let additions: Vec<(TrackId, ClusterId)> =
        assignments.iter().map(|a| (a.track, a.cluster)).collect();
    let partition = partition.with_added(dataset, &additions, partition.level() + 1)?;
    Ok(Stage3Outcome {
        partition,
        assignments,
        unassigned,
    })
}
