use std::collections::BTreeMap;

use crate::distance::FeatureSource;
use crate::error::Result;
use crate::model::{ClusterId, Dataset, Embedding, Modality, TrackId};

/// Tolerance used by [`Partition::check`] when comparing stored centroids to
/// freshly recomputed means.
const CENTROID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Member track ids, ascending.
    pub members: Vec<TrackId>,
    pub face: Option<Embedding>,
    pub body: Option<Embedding>,
    pub voice: Option<Embedding>,
}

impl Cluster {
    /// Builds a cluster whose centroids are the re-normalized mean of the raw
    /// member features, per modality.
    fn from_members(dataset: &Dataset, mut members: Vec<TrackId>) -> Result<Cluster> {
        members.sort_unstable();
        members.dedup();
        let centroid = |m: Modality| -> Result<Option<Embedding>> {
            let feats = members.iter().filter_map(|&id| dataset.feature(id, m));
            Embedding::mean(feats).transpose()
        };
        Ok(Cluster {
            face: centroid(Modality::Face)?,
            body: centroid(Modality::Body)?,
            voice: centroid(Modality::Voice)?,
            members,
        })
    }

    pub fn centroid(&self, modality: Modality) -> Option<&Embedding> {
        match modality {
            Modality::Face => self.face.as_ref(),
            Modality::Body => self.body.as_ref(),
            Modality::Voice => self.voice.as_ref(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A disjoint assignment of tracks to clusters at one agglomeration level.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    level: usize,
    assignment: BTreeMap<TrackId, ClusterId>,
    clusters: BTreeMap<ClusterId, Cluster>,
}

impl Partition {
    /// Builds a partition from explicit cluster memberships. Groups must be
    /// disjoint; empty groups are dropped.
    pub fn from_groups<I>(dataset: &Dataset, groups: I, level: usize) -> Result<Partition>
    where
        I: IntoIterator<Item = (ClusterId, Vec<TrackId>)>,
    {
        let mut clusters = BTreeMap::new();
        let mut assignment = BTreeMap::new();
        for (cid, members) in groups {
            if members.is_empty() {
                continue;
            }
            let cluster = Cluster::from_members(dataset, members)?;
            for &t in &cluster.members {
                assignment.insert(t, cid);
            }
            clusters.insert(cid, cluster);
        }
        Ok(Partition {
            level,
            assignment,
            clusters,
        })
    }

    /// One singleton cluster per track; cluster ids follow the order of
    /// `tracks`.
    pub fn singletons(dataset: &Dataset, tracks: &[TrackId]) -> Result<Partition> {
        Self::from_groups(
            dataset,
            tracks
                .iter()
                .enumerate()
                .map(|(i, &t)| (ClusterId(i as u64), vec![t])),
            0,
        )
    }

    /// Rebuilds a partition from a stored track → cluster assignment.
    pub fn from_assignment(
        dataset: &Dataset,
        assignment: &BTreeMap<TrackId, ClusterId>,
        level: usize,
    ) -> Result<Partition> {
        let mut groups: BTreeMap<ClusterId, Vec<TrackId>> = BTreeMap::new();
        for (&t, &c) in assignment {
            groups.entry(c).or_default().push(t);
        }
        Self::from_groups(dataset, groups, level)
    }

    /// Merges clusters according to `target`, which maps an existing cluster
    /// id to the id of the cluster it joins. Unmapped clusters stay put.
    pub fn merged(
        &self,
        dataset: &Dataset,
        target: &BTreeMap<ClusterId, ClusterId>,
        level: usize,
    ) -> Result<Partition> {
        let mut groups: BTreeMap<ClusterId, Vec<TrackId>> = BTreeMap::new();
        for (&cid, cluster) in &self.clusters {
            let to = target.get(&cid).copied().unwrap_or(cid);
            groups.entry(to).or_default().extend(&cluster.members);
        }
        Self::from_groups(dataset, groups, level)
    }

    /// Adds previously unclustered tracks to existing clusters.
    pub fn with_added(
        &self,
        dataset: &Dataset,
        additions: &[(TrackId, ClusterId)],
        level: usize,
    ) -> Result<Partition> {
        let mut groups: BTreeMap<ClusterId, Vec<TrackId>> = self
            .clusters
            .iter()
            .map(|(&c, cl)| (c, cl.members.clone()))
            .collect();
        for &(t, c) in additions {
            groups.entry(c).or_default().push(t);
        }
        Self::from_groups(dataset, groups, level)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn assignment(&self) -> &BTreeMap<TrackId, ClusterId> {
        &self.assignment
    }

    pub fn clusters(&self) -> &BTreeMap<ClusterId, Cluster> {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub fn cluster_of(&self, track: TrackId) -> Option<ClusterId> {
        self.assignment.get(&track).copied()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn num_tracks(&self) -> usize {
        self.assignment.len()
    }

    /// Checks the disjoint-cover and centroid-mean invariants against the
    /// dataset the partition was built from. Returns one message per problem.
    pub fn check(&self, dataset: &Dataset) -> Vec<String> {
        let mut problems = Vec::new();
        let mut covered = 0usize;
        for (&cid, cluster) in &self.clusters {
            if cluster.members.is_empty() {
                problems.push(format!("cluster {cid} is empty"));
            }
            covered += cluster.members.len();
            for &t in &cluster.members {
                if self.assignment.get(&t) != Some(&cid) {
                    problems.push(format!("track {t} listed in cluster {cid} but assigned elsewhere"));
                }
                if dataset.track(t).is_none() {
                    problems.push(format!("track {t} not in dataset"));
                }
            }
            for m in Modality::ALL {
                let expected = Embedding::mean(
                    cluster.members.iter().filter_map(|&t| dataset.feature(t, m)),
                )
                .transpose();
                match (expected, cluster.centroid(m)) {
                    (Ok(None), None) => {}
                    (Ok(Some(e)), Some(c)) => {
                        let off = e
                            .values()
                            .iter()
                            .zip(c.values())
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        if e.dim() != c.dim() || off > CENTROID_TOLERANCE {
                            problems.push(format!("cluster {cid} {m} centroid is not the member mean"));
                        }
                    }
                    _ => problems.push(format!("cluster {cid} {m} centroid presence mismatch")),
                }
            }
        }
        if covered != self.assignment.len() {
            problems.push(format!(
                "clusters cover {covered} tracks but {} are assigned",
                self.assignment.len()
            ));
        }
        problems
    }
}

impl FeatureSource for Partition {
    type Id = ClusterId;

    fn feature(&self, id: ClusterId, modality: Modality) -> Option<&Embedding> {
        self.clusters.get(&id).and_then(|c| c.centroid(modality))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Track;

    fn dataset() -> Dataset {
        let mk = |id, face: Option<[f64; 2]>, body: [f64; 2]| {
            let mut t = Track::new(id, 0, id as i64 * 10, id as i64 * 10 + 5);
            t.face = face.map(|f| Embedding::new(f.to_vec()).unwrap());
            t.body = Some(Embedding::new(body.to_vec()).unwrap());
            t
        };
        Dataset::new(
            vec![
                mk(1, Some([1.0, 0.0]), [1.0, 0.0]),
                mk(2, Some([0.0, 1.0]), [1.0, 0.0]),
                mk(3, None, [0.0, 1.0]),
            ],
            25.0,
        )
    }

    #[test]
    fn centroid_is_renormalized_mean() {
        let ds = dataset();
        let p = Partition::from_groups(&ds, [(ClusterId(0), vec![TrackId(2), TrackId(1)])], 0).unwrap();
        let c = p.cluster(ClusterId(0)).unwrap();
        assert_eq!(c.members, vec![TrackId(1), TrackId(2)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let face = c.face.as_ref().unwrap().values();
        assert!((face[0] - h).abs() < 1e-15 && (face[1] - h).abs() < 1e-15);
        assert_eq!(c.body.as_ref().unwrap().values(), &[1.0, 0.0]);
        assert!(c.voice.is_none());
        assert!(p.check(&ds).is_empty());
    }

    #[test]
    fn merge_and_add_keep_invariants() {
        let ds = dataset();
        let p = Partition::singletons(&ds, &[TrackId(1), TrackId(2)]).unwrap();
        assert_eq!(p.num_clusters(), 2);
        let merged = p
            .merged(&ds, &BTreeMap::from([(ClusterId(1), ClusterId(0))]), 1)
            .unwrap();
        assert_eq!(merged.num_clusters(), 1);
        assert_eq!(merged.level(), 1);
        let added = merged.with_added(&ds, &[(TrackId(3), ClusterId(0))], 2).unwrap();
        assert_eq!(added.cluster(ClusterId(0)).unwrap().len(), 3);
        assert!(added.check(&ds).is_empty());
        // body centroid now averages (1,0),(1,0),(0,1)
        let body = added.cluster(ClusterId(0)).unwrap().body.as_ref().unwrap();
        let n = (4.0f64 + 1.0).sqrt();
        assert!((body.values()[0] - 2.0 / n).abs() < 1e-15);
    }

    #[test]
    fn check_flags_stale_centroids() {
        let ds = dataset();
        let mut p = Partition::singletons(&ds, &[TrackId(1), TrackId(2)]).unwrap();
        p.clusters.get_mut(&ClusterId(0)).unwrap().face =
            Some(Embedding::new(vec![0.0, 1.0]).unwrap());
        assert_eq!(p.check(&ds).len(), 1);
    }
}
