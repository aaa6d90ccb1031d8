use std::collections::BTreeMap;

use crate::constraints::CannotLinkSet;
use crate::error::{Error, Result};
use crate::model::{ClusterId, Dataset, TrackId};
use crate::partition::Partition;

/// Reduces the partition to exactly `target` clusters by repeatedly merging
/// the smallest cluster into the largest one.
///
/// Sizes are member-track counts recomputed after every merge. Ties pick the
/// lowest cluster id on both sides. Cannot-links are not consulted; see
/// [`oracle_violations`].
pub fn reduce_to_oracle(partition: &Partition, dataset: &Dataset, target: usize) -> Result<Partition> {
    let available = partition.num_clusters();
    if target > available {
        return Err(Error::CannotSplit {
            requested: target,
            available,
        });
    }
    if target == 0 {
        return Err(Error::InvalidConfig {
            key: "protocol".into(),
            reason: "oc requires a positive cluster count".into(),
        });
    }
    let mut groups: BTreeMap<ClusterId, Vec<TrackId>> = partition
        .clusters()
        .iter()
        .map(|(&id, c)| (id, c.members.clone()))
        .collect();
    while groups.len() > target {
        // iteration is in ascending id, so strict comparisons keep the lowest id
        let mut smallest: Option<(ClusterId, usize)> = None;
        for (&id, members) in &groups {
            if smallest.is_none_or(|(_, n)| members.len() < n) {
                smallest = Some((id, members.len()));
            }
        }
        let (small_id, _) = smallest.expect("at least two groups");
        let mut largest: Option<(ClusterId, usize)> = None;
        for (&id, members) in groups.iter().filter(|(&id, _)| id != small_id) {
            if largest.is_none_or(|(_, n)| members.len() > n) {
                largest = Some((id, members.len()));
            }
        }
        let (large_id, _) = largest.expect("at least two groups");
        let moved = groups.remove(&small_id).expect("present");
        groups.get_mut(&large_id).expect("present").extend(moved);
    }
    Partition::from_groups(dataset, groups, partition.level() + 1)
}

/// Cannot-linked pairs that share a cluster.
pub fn oracle_violations(partition: &Partition, cannot: &CannotLinkSet) -> Vec<(TrackId, TrackId)> {
    cannot
        .pairs()
        .filter(|&(a, b)| match (partition.cluster_of(a), partition.cluster_of(b)) {
            (Some(ca), Some(cb)) => ca == cb,
            _ => false,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Embedding, Track};

    fn sized(sizes: &[usize]) -> (Dataset, Partition) {
        let mut tracks = Vec::new();
        let mut groups = Vec::new();
        let mut next = 0u64;
        for (c, &n) in sizes.iter().enumerate() {
            let mut members = Vec::new();
            for _ in 0..n {
                let mut t = Track::new(next, next as i64, next as i64 * 10, next as i64 * 10 + 5);
                t.face = Some(Embedding::new(vec![1.0, c as f64]).unwrap());
                members.push(t.id);
                tracks.push(t);
                next += 1;
            }
            groups.push((ClusterId(c as u64), members));
        }
        let ds = Dataset::new(tracks, 25.0);
        let p = Partition::from_groups(&ds, groups, 0).unwrap();
        (ds, p)
    }

    fn sizes(p: &Partition) -> Vec<(u64, usize)> {
        p.clusters().iter().map(|(id, c)| (id.0, c.len())).collect()
    }

    #[test]
    fn smallest_merges_into_largest() {
        let (ds, p) = sized(&[10, 3, 1]);
        let r = reduce_to_oracle(&p, &ds, 2).unwrap();
        assert_eq!(sizes(&r), vec![(0, 11), (1, 3)]);
        assert!(r.check(&ds).is_empty());
    }

    #[test]
    fn equal_target_is_identity() {
        let (ds, p) = sized(&[10, 3, 1]);
        let r = reduce_to_oracle(&p, &ds, 3).unwrap();
        assert_eq!(r.assignment(), p.assignment());
    }

    #[test]
    fn ties_prefer_lower_cluster_id() {
        let (ds, p) = sized(&[5, 5, 1]);
        let r = reduce_to_oracle(&p, &ds, 2).unwrap();
        assert_eq!(sizes(&r), vec![(0, 6), (1, 5)]);
    }

    #[test]
    fn sizes_are_recomputed_each_round() {
        let (ds, p) = sized(&[4, 2, 2, 1]);
        // 1 -> c0 (5), then 2 (c1) -> c0 (7), leaving {7, 2}
        let r = reduce_to_oracle(&p, &ds, 2).unwrap();
        assert_eq!(sizes(&r), vec![(0, 7), (2, 2)]);
    }

    #[test]
    fn cannot_split() {
        let (ds, p) = sized(&[2, 2]);
        assert!(matches!(
            reduce_to_oracle(&p, &ds, 3),
            Err(Error::CannotSplit { requested: 3, available: 2 })
        ));
    }
}
