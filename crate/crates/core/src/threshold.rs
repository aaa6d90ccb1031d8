//! Voice-track filtering and per-dataset learning of the voice bridging
//! threshold.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::constraints::CannotLinkSet;
use crate::distance::unchecked_distance;
use crate::error::{Error, Result};
use crate::model::{ClusterId, Dataset, TrackId};
use crate::partition::Partition;

/// Tracks whose voice embedding is usable for bridging.
///
/// A voice is usable when its span covers at least `min_seconds * fps` frames
/// and at most `overlap_max` of those frames are also covered by another
/// track's voice span. Spans of every track take part in the overlap count,
/// even when the track's voice embedding is missing or masked, which makes
/// the filter idempotent under [`Dataset::with_voice_mask`].
pub fn filter_voice_tracks(dataset: &Dataset, overlap_max: f64, min_seconds: f64) -> BTreeSet<TrackId> {
    let spans: Vec<(TrackId, &[(i64, i64)])> = dataset
        .tracks()
        .iter()
        .filter_map(|t| t.voice_span.as_ref().map(|s| (t.id, s.intervals())))
        .collect();

    // coverage count over elementary segments between interval boundaries
    let mut bounds: Vec<i64> = spans
        .iter()
        .flat_map(|(_, ivs)| ivs.iter().flat_map(|&(s, e)| [s, e + 1]))
        .collect();
    bounds.sort_unstable();
    bounds.dedup();
    let slot = |x: i64| bounds.binary_search(&x).expect("boundary was inserted");
    let mut delta = vec![0i64; bounds.len() + 1];
    for (_, ivs) in &spans {
        for &(s, e) in ivs.iter() {
            delta[slot(s)] += 1;
            delta[slot(e + 1)] -= 1;
        }
    }
    // shared[k] = frames before bounds[k] covered by two or more spans
    let mut shared = vec![0u64; bounds.len()];
    let mut depth = 0i64;
    for k in 0..bounds.len().saturating_sub(1) {
        depth += delta[k];
        let width = (bounds[k + 1] - bounds[k]) as u64;
        shared[k + 1] = shared[k] + if depth >= 2 { width } else { 0 };
    }

    let min_frames = min_seconds * dataset.fps();
    spans
        .iter()
        .filter(|(id, _)| dataset.track(*id).is_some_and(|t| t.voice.is_some()))
        .filter_map(|&(id, ivs)| {
            let total: u64 = ivs.iter().map(|&(s, e)| (e - s + 1) as u64).sum();
            if (total as f64) < min_frames || total == 0 {
                return None;
            }
            let overlapped: u64 = ivs
                .iter()
                .map(|&(s, e)| shared[slot(e + 1)] - shared[slot(s)])
                .sum();
            (overlapped as f64 / total as f64 <= overlap_max).then_some(id)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSource {
    /// The two tracks overlap in time.
    CannotLink,
    /// The tracks lie in two Stage-1 clusters joined by a cannot-link.
    CrossCluster,
}

/// Voice distance between two tracks believed to be different people.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeDistanceSample {
    pub tracks: (TrackId, TrackId),
    pub d_voice: f64,
    pub source: NegativeSource,
}

/// Negative voice pairs for threshold learning.
///
/// Directly cannot-linked speaking tracks are negatives. Stage-1 clusters are
/// high-precision, so a cannot-link between two clusters marks the whole
/// clusters as different people: every speaking pair across such a cluster
/// pair is a negative too. Only clustered tracks with a (usable) voice count.
/// Each unordered pair appears once, sorted by track ids; pairs found both
/// ways keep [`NegativeSource::CannotLink`].
pub fn collect_voice_negatives(
    partition: &Partition,
    cannot: &CannotLinkSet,
    dataset: &Dataset,
) -> Vec<NegativeDistanceSample> {
    let voice = |t: TrackId| dataset.track(t).and_then(|t| t.voice.as_ref());
    let mut speakers: BTreeMap<ClusterId, Vec<TrackId>> = BTreeMap::new();
    for (&t, &c) in partition.assignment() {
        if voice(t).is_some() {
            speakers.entry(c).or_default().push(t);
        }
    }

    let mut found: BTreeMap<(TrackId, TrackId), NegativeSource> = BTreeMap::new();
    let mut linked_clusters: BTreeSet<(ClusterId, ClusterId)> = BTreeSet::new();
    for (a, b) in cannot.pairs() {
        let (Some(ca), Some(cb)) = (partition.cluster_of(a), partition.cluster_of(b)) else {
            continue;
        };
        if ca != cb {
            linked_clusters.insert((ca.min(cb), ca.max(cb)));
        }
        if voice(a).is_some() && voice(b).is_some() {
            found.insert((a, b), NegativeSource::CannotLink);
        }
    }
    for (ca, cb) in linked_clusters {
        let (Some(sa), Some(sb)) = (speakers.get(&ca), speakers.get(&cb)) else {
            continue;
        };
        for &a in sa {
            for &b in sb {
                found
                    .entry((a.min(b), a.max(b)))
                    .or_insert(NegativeSource::CrossCluster);
            }
        }
    }

    found
        .into_iter()
        .map(|((a, b), source)| {
            let (va, vb) = (voice(a).expect("speaker"), voice(b).expect("speaker"));
            NegativeDistanceSample {
                tracks: (a, b),
                d_voice: unchecked_distance(va.values(), vb.values()),
                source,
            }
        })
        .collect()
}

/// Voice threshold admitting at most `100 - percentile` percent of negatives:
/// the `(100 - percentile)`-th percentile of the negative distances.
pub fn learn_voice_threshold(samples: &[NegativeDistanceSample], percentile: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientNegatives);
    }
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::InvalidConfig {
            key: "voice_percentile".into(),
            reason: format!("{percentile} outside (0, 100)"),
        });
    }
    let mut d: Vec<f64> = samples.iter().map(|s| s.d_voice).collect();
    d.sort_by(f64::total_cmp);
    Ok(percentile_of_sorted(&d, 100.0 - percentile))
}

/// Linear interpolation between order statistics with inclusive endpoints:
/// rank `p / 100 * (n - 1)` over ascending `sorted`.
pub fn percentile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
