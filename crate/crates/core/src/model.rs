//! Domain types shared by every clustering stage.
//!
//! Types here are plain immutable values. Structural invariants are not
//! enforced at construction time so that a [`Dataset`] read from disk can be
//! inspected and reported on by [`validate_dataset`]; the loader in
//! [`crate::io`] refuses anything that produces a violation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms within this distance of 1 are treated as already unit length and left
/// untouched, which keeps load/save round trips bit-exact.
const UNIT_NORM_EPS: f64 = 1e-12;

/// Tolerance of the unit-norm invariant checked by validation.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TrackId(pub u64);

impl From<TrackId> for u64 {
    fn from(id: TrackId) -> u64 {
        id.0
    }
}

impl From<ClusterId> for u64 {
    fn from(id: ClusterId) -> u64 {
        id.0
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Face,
    Body,
    Voice,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Face, Modality::Body, Modality::Voice];
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Face => "face",
            Modality::Body => "body",
            Modality::Voice => "voice",
        })
    }
}

/// An L2-normalized feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit length. Vectors already within 1e-12 of
    /// unit norm are kept bit-for-bit.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_input_norm(values).map(|(e, _)| e)
    }

    /// Like [`Embedding::new`], also returning the norm of the raw input.
    pub fn with_input_norm(mut values: Vec<f64>) -> Result<(Self, f64)> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if (norm - 1.0).abs() > UNIT_NORM_EPS {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok((Embedding(values), norm))
    }

    /// Wraps values without normalizing. Used when the caller has already
    /// guaranteed unit length or wants validation to see the raw vector.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Embedding(values)
    }

    /// Arithmetic mean of `members`, re-normalized.
    ///
    /// Returns `None` for an empty input. If the mean vanishes (antipodal
    /// members) the first member is used as the representative.
    pub fn mean<'a, I>(members: I) -> Option<Result<Self>>
    where
        I: IntoIterator<Item = &'a Embedding>,
    {
        let mut iter = members.into_iter();
        let first = iter.next()?;
        let mut sum = first.0.clone();
        for e in iter {
            if e.dim() != sum.len() {
                return Some(Err(Error::IncompatibleEmbeddings {
                    left: sum.len(),
                    right: e.dim(),
                }));
            }
            sum.iter_mut().zip(&e.0).for_each(|(s, v)| *s += v);
        }
        if l2_norm(&sum) <= f64::EPSILON {
            return Some(Ok(first.clone()));
        }
        Some(Embedding::new(sum))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A set of frame indices stored as sorted, disjoint, inclusive intervals.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameSet(Vec<(i64, i64)>);

impl FrameSet {
    /// Wraps intervals as given. Use [`FrameSet::check`] to validate.
    pub fn from_intervals(intervals: Vec<(i64, i64)>) -> Self {
        FrameSet(intervals)
    }

    pub fn single(start: i64, end: i64) -> Self {
        FrameSet(vec![(start, end)])
    }

    /// Builds a valid set from arbitrary intervals by sorting and coalescing.
    pub fn union_of<I>(intervals: I) -> Self
    where
        I: IntoIterator<Item = (i64, i64)>,
    {
        let mut all: Vec<(i64, i64)> = intervals.into_iter().filter(|(s, e)| s <= e).collect();
        all.sort_unstable();
        let mut out: Vec<(i64, i64)> = Vec::with_capacity(all.len());
        for (s, e) in all {
            match out.last_mut() {
                Some(last) if s <= last.1.saturating_add(1) => last.1 = last.1.max(e),
                _ => out.push((s, e)),
            }
        }
        FrameSet(out)
    }

    pub fn intervals(&self) -> &[(i64, i64)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First broken structural rule, if any.
    pub fn check(&self) -> Option<Rule> {
        if self.0.is_empty() {
            return Some(Rule::EmptyFrames);
        }
        if self.0.iter().any(|(s, e)| s > e) {
            return Some(Rule::InvertedInterval);
        }
        if self.0.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Some(Rule::UnsortedIntervals);
        }
        None
    }

    /// Number of frames in the set.
    pub fn len(&self) -> u64 {
        self.0.iter().map(|(s, e)| (e - s + 1) as u64).sum()
    }

    pub fn first(&self) -> Option<i64> {
        self.0.first().map(|iv| iv.0)
    }

    pub fn last(&self) -> Option<i64> {
        self.0.last().map(|iv| iv.1)
    }

    /// Lower median frame index.
    pub fn median(&self) -> Option<i64> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let mut rank = (n - 1) / 2;
        for &(s, e) in &self.0 {
            let len = (e - s + 1) as u64;
            if rank < len {
                return Some(s + rank as i64);
            }
            rank -= len;
        }
        None
    }

    /// Number of frames shared with `other`, by interval sweep.
    pub fn intersection_len(&self, other: &FrameSet) -> u64 {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut total) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo <= hi {
                total += (hi - lo + 1) as u64;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    pub fn intersects(&self, other: &FrameSet) -> bool {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i].0.max(b[j].0) <= a[i].1.min(b[j].1) {
                return true;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        false
    }

    pub fn shifted(&self, offset: i64) -> FrameSet {
        FrameSet(self.0.iter().map(|(s, e)| (s + offset, e + offset)).collect())
    }
}

/// One person-track.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub frames: FrameSet,
    pub shot: i64,
    pub face: Option<Embedding>,
    pub body: Option<Embedding>,
    pub voice: Option<Embedding>,
    pub voice_span: Option<FrameSet>,
    pub label: Option<String>,
}

impl Track {
    /// Minimal track with the given frame interval and no modalities.
    pub fn new(id: u64, shot: i64, start: i64, end: i64) -> Self {
        Track {
            id: TrackId(id),
            frames: FrameSet::single(start, end),
            shot,
            face: None,
            body: None,
            voice: None,
            voice_span: None,
            label: None,
        }
    }

    pub fn embedding(&self, modality: Modality) -> Option<&Embedding> {
        match modality {
            Modality::Face => self.face.as_ref(),
            Modality::Body => self.body.as_ref(),
            Modality::Voice => self.voice.as_ref(),
        }
    }

    /// A face-less back: body present, face absent.
    pub fn is_back(&self) -> bool {
        self.face.is_none() && self.body.is_some()
    }
}

/// A contiguous run of tracks that came from one program set or episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSet {
    pub name: String,
    pub first_track: usize,
    pub track_count: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    tracks: Vec<Track>,
    fps: f64,
    program_sets: Vec<ProgramSet>,
    index: HashMap<TrackId, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.tracks == other.tracks
            && self.fps == other.fps
            && self.program_sets == other.program_sets
    }
}

impl Dataset {
    pub fn new(tracks: Vec<Track>, fps: f64) -> Self {
        let mut index = HashMap::with_capacity(tracks.len());
        for (i, t) in tracks.iter().enumerate() {
            index.entry(t.id).or_insert(i);
        }
        Dataset {
            tracks,
            fps,
            program_sets: Vec::new(),
            index,
        }
    }

    pub fn with_program_sets(mut self, program_sets: Vec<ProgramSet>) -> Self {
        self.program_sets = program_sets;
        self
    }

    /// Concatenates several program sets into one dataset. Frame indices and
    /// shot indices of each part are offset past the end of the previous part
    /// so that no temporal overlap (and thus no cannot-link) crosses parts.
    pub fn concat<I>(parts: I) -> Result<Dataset>
    where
        I: IntoIterator<Item = (String, Dataset)>,
    {
        let mut tracks = Vec::new();
        let mut sets = Vec::new();
        let mut fps = None;
        let (mut frame_offset, mut shot_offset) = (0i64, 0i64);
        for (name, part) in parts {
            match fps {
                None => fps = Some(part.fps),
                Some(f) if f != part.fps => {
                    return Err(Error::Format(format!(
                        "program set {name:?} has fps {} but earlier parts use {f}",
                        part.fps
                    )))
                }
                _ => {}
            }
            let first_frame = part.tracks.iter().filter_map(|t| t.frames.first()).min();
            let last_frame = part.tracks.iter().filter_map(|t| t.frames.last()).max();
            let first_shot = part.tracks.iter().map(|t| t.shot).min();
            let last_shot = part.tracks.iter().map(|t| t.shot).max();
            let df = frame_offset - first_frame.unwrap_or(0);
            let ds = shot_offset - first_shot.unwrap_or(0);
            sets.push(ProgramSet {
                name,
                first_track: tracks.len(),
                track_count: part.tracks.len(),
            });
            for mut t in part.tracks {
                t.frames = t.frames.shifted(df);
                t.voice_span = t.voice_span.map(|v| v.shifted(df));
                t.shot += ds;
                tracks.push(t);
            }
            if let (Some(lf), Some(ls)) = (last_frame, last_shot) {
                frame_offset = lf + df + 1;
                shot_offset = ls + ds + 1;
            }
        }
        Ok(Dataset::new(tracks, fps.unwrap_or(25.0)).with_program_sets(sets))
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.index.get(&id).map(|&i| &self.tracks[i])
    }

    pub fn position(&self, id: TrackId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn program_sets(&self) -> &[ProgramSet] {
        &self.program_sets
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn into_tracks(self) -> Vec<Track> {
        self.tracks
    }

    /// Copy of the dataset with the voice embedding removed from every track
    /// not in `usable`. Voice spans are kept so that filtering stays
    /// idempotent.
    pub fn with_voice_mask(&self, usable: &std::collections::BTreeSet<TrackId>) -> Dataset {
        let tracks = self
            .tracks
            .iter()
            .map(|t| {
                let mut t = t.clone();
                if !usable.contains(&t.id) {
                    t.voice = None;
                }
                t
            })
            .collect();
        Dataset::new(tracks, self.fps).with_program_sets(self.program_sets.clone())
    }

    /// Ground-truth labels of every labelled track.
    pub fn labels(&self) -> BTreeMap<TrackId, &str> {
        self.tracks
            .iter()
            .filter_map(|t| t.label.as_deref().map(|l| (t.id, l)))
            .collect()
    }
}

/// A structural rule broken by a track or dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    NoVisualModality,
    DuplicateId,
    EmptyFrames,
    InvertedInterval,
    UnsortedIntervals,
    VoiceWithoutSpan,
    InvalidVoiceSpan,
    DimensionMismatch(Modality),
    NotNormalized(Modality),
    ShotOrder,
    NonPositiveFps,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::NoVisualModality => f.write_str("no visual modality"),
            Rule::DuplicateId => f.write_str("duplicate id"),
            Rule::EmptyFrames => f.write_str("empty frames"),
            Rule::InvertedInterval => f.write_str("inverted interval"),
            Rule::UnsortedIntervals => f.write_str("intervals not sorted and disjoint"),
            Rule::VoiceWithoutSpan => f.write_str("voice without voice_span"),
            Rule::InvalidVoiceSpan => f.write_str("invalid voice_span"),
            Rule::DimensionMismatch(m) => write!(f, "{m} dimension mismatch"),
            Rule::NotNormalized(m) => write!(f, "{m} embedding not unit norm"),
            Rule::ShotOrder => f.write_str("shot order inconsistent with frame order"),
            Rule::NonPositiveFps => f.write_str("fps must be positive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub track: Option<TrackId>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.track {
            Some(id) => write!(f, "track {id}: {}", self.rule),
            None => write!(f, "dataset: {}", self.rule),
        }
    }
}

/// Checks every track and dataset invariant. An empty report means the
/// dataset is valid.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |track: Option<TrackId>, rule| out.push(Violation { track, rule });

    if !(dataset.fps > 0.0) || !dataset.fps.is_finite() {
        push(None, Rule::NonPositiveFps);
    }

    let mut seen = HashSet::new();
    let mut dims: HashMap<Modality, usize> = HashMap::new();
    for t in &dataset.tracks {
        if !seen.insert(t.id) {
            push(Some(t.id), Rule::DuplicateId);
        }
        if t.face.is_none() && t.body.is_none() {
            push(Some(t.id), Rule::NoVisualModality);
        }
        if let Some(rule) = t.frames.check() {
            push(Some(t.id), rule);
        }
        match (&t.voice, &t.voice_span) {
            (Some(_), None) => push(Some(t.id), Rule::VoiceWithoutSpan),
            (_, Some(span)) if span.check().is_some() => push(Some(t.id), Rule::InvalidVoiceSpan),
            _ => {}
        }
        for m in Modality::ALL {
            if let Some(e) = t.embedding(m) {
                let dim = *dims.entry(m).or_insert(e.dim());
                if e.dim() != dim || dim == 0 {
                    push(Some(t.id), Rule::DimensionMismatch(m));
                }
                if (e.norm() - 1.0).abs() > NORM_TOLERANCE {
                    push(Some(t.id), Rule::NotNormalized(m));
                }
            }
        }
    }

    // Shots follow video order: sorting by median frame must leave shot
    // indices non-decreasing.
    let mut order: Vec<(i64, i64, TrackId)> = dataset
        .tracks
        .iter()
        .filter_map(|t| t.frames.median().map(|m| (m, t.shot, t.id)))
        .collect();
    order.sort_unstable();
    let mut earlier_max = i64::MIN;
    for group in order.chunk_by(|a, b| a.0 == b.0) {
        for &(_, shot, id) in group {
            if shot < earlier_max {
                push(Some(id), Rule::ShotOrder);
            }
        }
        earlier_max = earlier_max.max(group.iter().map(|g| g.1).max().unwrap_or(i64::MIN));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn face_track(id: u64, start: i64, end: i64) -> Track {
        let mut t = Track::new(id, 0, start, end);
        t.face = Some(Embedding::new(vec![1.0, 0.0]).unwrap());
        t
    }

    #[test]
    fn minimal_valid_dataset_has_empty_report() {
        let ds = Dataset::new(vec![face_track(1, 1, 10)], 25.0);
        assert!(validate_dataset(&ds).is_empty());
    }

    #[test]
    fn track_without_face_or_body_is_reported() {
        let ds = Dataset::new(vec![Track::new(3, 0, 1, 10)], 25.0);
        let report = validate_dataset(&ds);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].track, Some(TrackId(3)));
        assert_eq!(report[0].rule.to_string(), "no visual modality");
    }

    #[test]
    fn duplicate_ids_are_reported() {
        let ds = Dataset::new(vec![face_track(7, 1, 10), face_track(7, 20, 30)], 25.0);
        let report = validate_dataset(&ds);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].to_string(), "track 7: duplicate id");
    }

    #[test]
    fn interval_rules() {
        assert_eq!(FrameSet::from_intervals(vec![]).check(), Some(Rule::EmptyFrames));
        assert_eq!(
            FrameSet::from_intervals(vec![(10, 5)]).check(),
            Some(Rule::InvertedInterval)
        );
        assert_eq!(
            FrameSet::from_intervals(vec![(1, 5), (5, 8)]).check(),
            Some(Rule::UnsortedIntervals)
        );
        assert_eq!(FrameSet::from_intervals(vec![(1, 5), (6, 8)]).check(), None);
    }

    #[test]
    fn voice_requires_span() {
        let mut t = face_track(1, 0, 9);
        t.voice = Some(Embedding::new(vec![0.0, 1.0]).unwrap());
        let report = validate_dataset(&Dataset::new(vec![t], 25.0));
        assert_eq!(report[0].rule, Rule::VoiceWithoutSpan);
    }

    #[test]
    fn dimension_and_norm_checks() {
        let mut a = face_track(1, 0, 9);
        a.body = Some(Embedding::from_raw(vec![2.0, 0.0]));
        let mut b = face_track(2, 20, 29);
        b.face = Some(Embedding::new(vec![1.0, 0.0, 0.0]).unwrap());
        let report = validate_dataset(&Dataset::new(vec![a, b], 25.0));
        let rules: Vec<_> = report.iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::NotNormalized(Modality::Body)));
        assert!(rules.contains(&Rule::DimensionMismatch(Modality::Face)));
    }

    #[test]
    fn shot_order_must_follow_frames() {
        let mut a = face_track(1, 0, 9);
        a.shot = 2;
        let mut b = face_track(2, 20, 29);
        b.shot = 1;
        let report = validate_dataset(&Dataset::new(vec![a, b], 25.0));
        assert_eq!(report, vec![Violation { track: Some(TrackId(2)), rule: Rule::ShotOrder }]);
    }

    #[test]
    fn frame_set_sweeps() {
        let a = FrameSet::from_intervals(vec![(1, 10), (20, 30)]);
        let b = FrameSet::from_intervals(vec![(5, 8), (9, 22)]);
        assert_eq!(a.intersection_len(&b), 4 + 2 + 3);
        assert!(a.intersects(&b));
        assert!(!a.intersects(&FrameSet::single(11, 19)));
        assert_eq!(a.len(), 21);
        assert_eq!(a.median(), Some(20));
        assert_eq!(
            FrameSet::union_of([(5, 8), (1, 4), (10, 12), (11, 20)]).intervals(),
            &[(1, 8), (10, 20)]
        );
    }

    #[test]
    fn embedding_normalizes_and_keeps_unit_vectors_exact() {
        let e = Embedding::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.values(), &[0.6, 0.8]);
        let again = Embedding::new(e.values().to_vec()).unwrap();
        assert_eq!(again, e);
        assert!(matches!(Embedding::new(vec![0.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(matches!(Embedding::new(vec![f64::NAN]), Err(Error::NonFinite)));
    }

    #[test]
    fn concat_offsets_frames_and_shots() {
        let a = Dataset::new(vec![face_track(1, 0, 9), face_track(2, 5, 20)], 25.0);
        let b = Dataset::new(vec![face_track(3, 0, 4)], 25.0);
        let joined = Dataset::concat([("a".into(), a), ("b".into(), b)]).unwrap();
        let t3 = joined.track(TrackId(3)).unwrap();
        assert_eq!(t3.frames.intervals(), &[(21, 25)]);
        assert_eq!(t3.shot, 1);
        assert_eq!(joined.program_sets()[1].first_track, 2);
    }
}
