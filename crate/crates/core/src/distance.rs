//! Cosine distances, exact nearest-neighbour queries and the ratio test.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{Dataset, Embedding, Modality, TrackId};

/// `1 - cos(a, b)` for unit vectors, in `[0, 2]`.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::IncompatibleEmbeddings {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(unchecked_distance(a.values(), b.values()))
}

/// Distance on raw slices of equal length; callers guarantee the dimensions.
#[inline]
pub(crate) fn unchecked_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot).clamp(0.0, 2.0)
}

/// Ascending by distance, then by id.
pub(crate) fn by_distance_then_id<I: Ord>(a: &(I, f64), b: &(I, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
}

/// Anything that can hand out per-modality features by id: tracks of a
/// [`Dataset`] or cluster centroids of a [`crate::Partition`].
pub trait FeatureSource {
    type Id: Copy + Ord + Into<u64>;

    fn feature(&self, id: Self::Id, modality: Modality) -> Option<&Embedding>;
}

impl FeatureSource for Dataset {
    type Id = TrackId;

    fn feature(&self, id: TrackId, modality: Modality) -> Option<&Embedding> {
        self.track(id).and_then(|t| t.embedding(modality))
    }
}

/// Ranked neighbours of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList<I = TrackId> {
    pub query: I,
    pub neighbors: Vec<(I, f64)>,
}

impl<I: Copy> NeighborList<I> {
    pub fn first(&self) -> Option<(I, f64)> {
        self.neighbors.first().copied()
    }

    pub fn second(&self) -> Option<(I, f64)> {
        self.neighbors.get(1).copied()
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Exact k nearest neighbours of `query` among `candidates`.
///
/// The query itself and repeated candidates are skipped. Results are sorted
/// ascending by distance with ties broken by ascending id.
pub fn knn<S, I>(
    source: &S,
    query: S::Id,
    candidates: I,
    modality: Modality,
    k: usize,
) -> Result<NeighborList<S::Id>>
where
    S: FeatureSource + ?Sized,
    I: IntoIterator<Item = S::Id>,
{
    let missing = |id: S::Id| Error::MissingModality {
        id: id.into(),
        modality,
    };
    let q = source.feature(query, modality).ok_or_else(|| missing(query))?;
    let mut ranked = Vec::new();
    for c in candidates {
        if c == query {
            continue;
        }
        let e = source.feature(c, modality).ok_or_else(|| missing(c))?;
        ranked.push((c, cosine_distance(q, e)?));
    }
    ranked.sort_by(by_distance_then_id);
    ranked.dedup_by_key(|n| n.0);
    ranked.truncate(k);
    Ok(NeighborList {
        query,
        neighbors: ranked,
    })
}

/// Distinctiveness ratio test on the first and second NN distances.
///
/// Distinctive when `d1 / d2 <= rho`. A zero second distance is only
/// distinctive when the first is zero as well.
pub fn ratio_distinctive(d1: f64, d2: f64, rho: f64) -> Result<bool> {
    if d1 > d2 {
        return Err(Error::NnOutOfOrder { d1, d2 });
    }
    if d2 == 0.0 {
        return Ok(d1 == 0.0);
    }
    Ok(d1 / d2 <= rho)
}
