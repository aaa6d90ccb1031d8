//! Temporal cannot-link constraints and a union-find that refuses to join
//! cannot-linked groups.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::model::{Dataset, TrackId};

/// Unordered pairs of tracks that share at least one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CannotLinkSet {
    pairs: BTreeSet<(TrackId, TrackId)>,
    neighbors: HashMap<TrackId, BTreeSet<TrackId>>,
}

impl CannotLinkSet {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (TrackId, TrackId)>,
    {
        let mut set = CannotLinkSet::default();
        for (a, b) in pairs {
            set.insert(a, b);
        }
        set
    }

    fn insert(&mut self, a: TrackId, b: TrackId) {
        if a == b {
            return;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if self.pairs.insert(key) {
            self.neighbors.entry(a).or_default().insert(b);
            self.neighbors.entry(b).or_default().insert(a);
        }
    }

    pub fn contains(&self, a: TrackId, b: TrackId) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pairs.contains(&key)
    }

    /// Pairs in ascending order, lower id first.
    pub fn pairs(&self) -> impl Iterator<Item = (TrackId, TrackId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn neighbors(&self, track: TrackId) -> impl Iterator<Item = TrackId> + '_ {
        self.neighbors.get(&track).into_iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Cluster-level constraint: true iff any cross pair is cannot-linked.
    pub fn groups_linked(&self, a: &[TrackId], b: &[TrackId]) -> bool {
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let large: HashSet<TrackId> = large.iter().copied().collect();
        small
            .iter()
            .any(|t| self.neighbors(*t).any(|n| large.contains(&n)))
    }
}

/// All pairs of distinct tracks whose frame sets intersect.
pub fn build_cannot_links(dataset: &Dataset) -> CannotLinkSet {
    let mut intervals: Vec<(i64, i64, TrackId)> = dataset
        .tracks()
        .iter()
        .flat_map(|t| t.frames.intervals().iter().map(move |&(s, e)| (s, e, t.id)))
        .collect();
    intervals.sort_unstable();

    let mut set = CannotLinkSet::default();
    let mut active: Vec<(i64, TrackId)> = Vec::new();
    for (start, end, id) in intervals {
        active.retain(|&(e, _)| e >= start);
        for &(_, other) in &active {
            set.insert(id, other);
        }
        active.push((end, id));
    }
    set
}

/// Outcome of [`ConstrainedUnionFind::try_union`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Union {
    Merged,
    AlreadyJoined,
    Refused,
}

/// Union-find over groups of tracks that never joins two groups containing a
/// cannot-linked pair.
pub(crate) struct ConstrainedUnionFind {
    parent: Vec<usize>,
    members: Vec<Vec<TrackId>>,
    forbidden: Vec<HashSet<TrackId>>,
}

impl ConstrainedUnionFind {
    pub fn new(groups: Vec<Vec<TrackId>>, cannot: &CannotLinkSet) -> Self {
        let forbidden = groups
            .iter()
            .map(|g| g.iter().flat_map(|&t| cannot.neighbors(t)).collect())
            .collect();
        ConstrainedUnionFind {
            parent: (0..groups.len()).collect(),
            members: groups,
            forbidden,
        }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[i] != root {
            let next = self.parent[i];
            self.parent[i] = root;
            i = next;
        }
        root
    }

    fn roots_linked(&self, ra: usize, rb: usize) -> bool {
        let (small, large) = if self.members[ra].len() <= self.members[rb].len() {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.members[small]
            .iter()
            .any(|t| self.forbidden[large].contains(t))
    }

    pub fn try_union(&mut self, a: usize, b: usize) -> Union {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Union::AlreadyJoined;
        }
        if self.roots_linked(ra, rb) {
            return Union::Refused;
        }
        let (keep, gone) = if self.members[ra].len() >= self.members[rb].len() {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[gone] = keep;
        let moved = std::mem::take(&mut self.members[gone]);
        self.members[keep].extend(moved);
        let moved = std::mem::take(&mut self.forbidden[gone]);
        self.forbidden[keep].extend(moved);
        Union::Merged
    }

    /// Component index of every element.
    pub fn components(&mut self) -> Vec<usize> {
        (0..self.parent.len()).map(|i| self.find(i)).collect()
    }
}
