use std::collections::BTreeMap;

use crate::config::ClusteringConfig;
use crate::constraints::{CannotLinkSet, ConstrainedUnionFind, Union};
use crate::distance::unchecked_distance;
use crate::error::{Error, Result};
use crate::model::{ClusterId, Dataset, TrackId};
use crate::partition::Partition;

use super::{component_targets, BridgeMerge, Execution};

struct Speaker<'a> {
    track: TrackId,
    cluster: usize,
    face: &'a [f64],
    voice: &'a [f64],
}

/// Multi-modal bridging of Stage-1 clusters.
///
/// Two clusters are bridged when some track pair across them, both with face
/// and voice, has face distance below `tau_f_loose` and voice distance below
/// `tau_v_loose`. Bridges are tried in ascending order of `d_face + d_voice`
/// of their best witness; unions that would co-cluster a cannot-linked pair
/// are refused. Runs a single pass.
pub fn stage2_bridge(
    partition: &Partition,
    dataset: &Dataset,
    config: &ClusteringConfig,
    cannot: &CannotLinkSet,
    tau_v_loose: Option<f64>,
    exec: Execution,
) -> Result<(Partition, Vec<BridgeMerge>)> {
    let tau_v = tau_v_loose.ok_or(Error::VoiceThresholdUnavailable)?;
    let tau_f = config.tau_f_loose();

    let ids: Vec<ClusterId> = partition.clusters().keys().copied().collect();
    let mut speakers = Vec::new();
    for (idx, cluster) in partition.clusters().values().enumerate() {
        for &t in &cluster.members {
            let track = dataset.track(t).expect("partition tracks come from the dataset");
            if let (Some(f), Some(v)) = (&track.face, &track.voice) {
                speakers.push(Speaker {
                    track: t,
                    cluster: idx,
                    face: f.values(),
                    voice: v.values(),
                });
            }
        }
    }

    // every witnessing pair, then the best witness per cluster pair
    let witnesses: Vec<Vec<(usize, usize, f64, f64)>> = exec.map_indices(speakers.len(), |a| {
        let sa = &speakers[a];
        speakers[a + 1..]
            .iter()
            .enumerate()
            .filter(|(_, sb)| sb.cluster != sa.cluster)
            .filter_map(|(off, sb)| {
                let d_f = unchecked_distance(sa.face, sb.face);
                if d_f >= tau_f {
                    return None;
                }
                let d_v = unchecked_distance(sa.voice, sb.voice);
                (d_v < tau_v).then_some((a, a + 1 + off, d_f, d_v))
            })
            .collect()
    });
    let mut best: BTreeMap<(usize, usize), (f64, TrackId, TrackId, f64, f64)> = BTreeMap::new();
    for (a, b, d_f, d_v) in witnesses.into_iter().flatten() {
        let (sa, sb) = (&speakers[a], &speakers[b]);
        let (ca, cb, ta, tb) = if sa.cluster < sb.cluster {
            (sa.cluster, sb.cluster, sa.track, sb.track)
        } else {
            (sb.cluster, sa.cluster, sb.track, sa.track)
        };
        let candidate = (d_f + d_v, ta, tb, d_f, d_v);
        best.entry((ca, cb))
            .and_modify(|cur| {
                let better = candidate
                    .0
                    .total_cmp(&cur.0)
                    .then_with(|| (candidate.1, candidate.2).cmp(&(cur.1, cur.2)));
                if better.is_lt() {
                    *cur = candidate;
                }
            })
            .or_insert(candidate);
    }
    let mut bridges: Vec<_> = best.into_iter().collect();
    bridges.sort_by(|(ka, a), (kb, b)| a.0.total_cmp(&b.0).then_with(|| ka.cmp(kb)));

    let groups = partition
        .clusters()
        .values()
        .map(|c| c.members.clone())
        .collect();
    let mut uf = ConstrainedUnionFind::new(groups, cannot);
    let mut merges = Vec::new();
    for ((ca, cb), (_, ta, tb, d_f, d_v)) in bridges {
        if uf.try_union(ca, cb) == Union::Merged {
            merges.push(BridgeMerge {
                clusters: (ids[ca], ids[cb]),
                tracks: (ta, tb),
                d_face: d_f,
                d_voice: d_v,
            });
        }
    }
    let targets = component_targets(&ids, &uf.components());
    let next = partition.merged(dataset, &targets, partition.level() + 1)?;
    Ok((next, merges))
}
