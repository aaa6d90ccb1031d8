use std::cmp::Ordering;

use crate::config::ClusteringConfig;
use crate::constraints::{CannotLinkSet, ConstrainedUnionFind, Union};
use crate::distance::unchecked_distance;
use crate::error::Result;
use crate::model::{ClusterId, Dataset, Modality, TrackId};
use crate::partition::Partition;

use super::{component_targets, Execution};

/// One first-NN agglomeration step over face centroids.
///
/// Each NN link `i -> nn(i)` is valid only when `d(i, nn(i)) <= tau`. Two
/// clusters are joined by an edge when one is the valid NN of the other, or
/// when both have valid links to a shared NN. Edges between cannot-linked
/// clusters are dropped, and the rest are unioned in ascending distance
/// order, refusing any union that would co-cluster a cannot-linked pair.
///
/// Returns the input partition unchanged (same level) when nothing merges.
pub fn stage1_step(
    partition: &Partition,
    dataset: &Dataset,
    cannot: &CannotLinkSet,
    tau: f64,
    exec: Execution,
) -> Result<Partition> {
    let (ids, centroids): (Vec<ClusterId>, Vec<&[f64]>) = partition
        .clusters()
        .iter()
        .filter_map(|(&id, c)| c.face.as_ref().map(|f| (id, f.values())))
        .unzip();
    let n = ids.len();
    if n < 2 {
        return Ok(partition.clone());
    }

    let nearest: Vec<(usize, f64)> = exec.map_indices(n, |i| {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in (0..n).filter(|&j| j != i) {
            let d = unchecked_distance(centroids[i], centroids[j]);
            // ids are ascending, so the first minimum has the lowest id
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    });
    let valid = |i: usize| nearest[i].1 <= tau;

    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in (0..n).filter(|&i| valid(i)) {
        let j = nearest[i].0;
        edges.push((nearest[i].1, i.min(j), i.max(j)));
    }
    // shared nearest neighbours
    let mut by_target: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in (0..n).filter(|&i| valid(i)) {
        by_target[nearest[i].0].push(i);
    }
    for group in by_target.iter().filter(|g| g.len() > 1) {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                edges.push((unchecked_distance(centroids[i], centroids[j]), i, j));
            }
        }
    }
    edges.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    edges.dedup_by(|a, b| a.1 == b.1 && a.2 == b.2);

    let groups: Vec<Vec<TrackId>> = ids
        .iter()
        .map(|id| partition.clusters()[id].members.clone())
        .collect();
    let mut uf = ConstrainedUnionFind::new(groups, cannot);
    let mut merged_any = false;
    for &(_, i, j) in &edges {
        merged_any |= uf.try_union(i, j) == Union::Merged;
    }
    if !merged_any {
        return Ok(partition.clone());
    }
    let targets = component_targets(&ids, &uf.components());
    partition.merged(dataset, &targets, partition.level() + 1)
}

/// Repeats [`stage1_step`] from singleton face tracks until no step merges.
///
/// Tracks without a face embedding are left out. The returned history starts
/// with the singleton partition (level 0) and ends with the final Stage-1
/// partition.
pub fn stage1_cluster(
    dataset: &Dataset,
    config: &ClusteringConfig,
    cannot: &CannotLinkSet,
    exec: Execution,
) -> Result<Vec<Partition>> {
    let faces: Vec<TrackId> = dataset
        .tracks()
        .iter()
        .filter(|t| t.embedding(Modality::Face).is_some())
        .map(|t| t.id)
        .collect();
    let mut history = vec![Partition::singletons(dataset, &faces)?];
    loop {
        let current = history.last().expect("history starts non-empty");
        let next = stage1_step(current, dataset, cannot, config.tau_f_tight, exec)?;
        match next.num_clusters().cmp(&current.num_clusters()) {
            Ordering::Less => history.push(next),
            _ => break,
        }
    }
    Ok(history)
}
