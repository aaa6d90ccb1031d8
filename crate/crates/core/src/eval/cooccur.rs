use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterId, Dataset, FrameSet, TrackId};

/// Who each track is taken to be.
#[derive(Debug, Clone, Copy)]
pub enum CharacterSource<'a> {
    /// The track's own ground-truth label.
    GroundTruth,
    /// The majority ground-truth label of the track's predicted cluster.
    /// Tracks outside the assignment are ignored.
    Predicted(&'a BTreeMap<TrackId, ClusterId>),
}

/// Fraction of all frames in which each pair of characters appears together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrenceMatrix {
    pub characters: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub total_frames: u64,
}

impl CoOccurrenceMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.characters.iter().position(|c| c == a)?;
        let j = self.characters.iter().position(|c| c == b)?;
        Some(self.values[i][j])
    }

    /// Tab-separated table with a header row.
    pub fn to_text(&self) -> String {
        matrix_text(&self.characters, &self.values, |x| x.to_string())
    }
}

fn matrix_text<T>(names: &[String], values: &[Vec<T>], cell: impl Fn(&T) -> String) -> String {
    let mut out = String::from("character");
    for n in names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (n, row) in names.iter().zip(values) {
        out.push_str(n);
        for x in row {
            out.push('\t');
            out.push_str(&cell(x));
        }
        out.push('\n');
    }
    out
}

/// Number of frames from the first to the last frame of any track.
pub fn frame_span(dataset: &Dataset) -> u64 {
    let first = dataset.tracks().iter().filter_map(|t| t.frames.first()).min();
    let last = dataset.tracks().iter().filter_map(|t| t.frames.last()).max();
    match (first, last) {
        (Some(a), Some(b)) => (b - a + 1) as u64,
        _ => 0,
    }
}

/// Labelled characters of the dataset in sorted order.
pub fn dataset_characters(dataset: &Dataset) -> Vec<String> {
    let set: BTreeSet<&str> = dataset.labels().into_values().collect();
    set.into_iter().map(str::to_string).collect()
}

/// Majority label of each predicted cluster; ties go to the smallest label.
pub fn majority_names(
    assignment: &BTreeMap<TrackId, ClusterId>,
    dataset: &Dataset,
) -> Result<BTreeMap<ClusterId, String>> {
    let mut votes: BTreeMap<ClusterId, BTreeMap<&str, usize>> = BTreeMap::new();
    for (&t, &c) in assignment {
        let track = dataset
            .track(t)
            .ok_or_else(|| Error::InvalidInput(format!("track {t} is not in the dataset")))?;
        let label = track.label.as_deref().ok_or(Error::Unlabeled(t))?;
        *votes.entry(c).or_default().entry(label).or_default() += 1;
    }
    Ok(votes
        .into_iter()
        .map(|(c, v)| {
            // max_by_key keeps the last maximum, so iterate labels in reverse
            let (name, _) = v.iter().rev().max_by_key(|(_, &n)| n).expect("non-empty");
            (c, name.to_string())
        })
        .collect())
}

/// Co-occurrence of `characters` over `total_frames` frames.
pub fn cooccurrence(
    dataset: &Dataset,
    characters: &[String],
    source: CharacterSource<'_>,
    total_frames: u64,
) -> Result<CoOccurrenceMatrix> {
    let known: BTreeSet<&str> = dataset.labels().into_values().collect();
    if let Some(unknown) = characters.iter().find(|c| !known.contains(c.as_str())) {
        return Err(Error::UnknownCharacter(unknown.clone()));
    }
    if total_frames == 0 {
        return Err(Error::InvalidInput("total frame count must be positive".into()));
    }

    let mut intervals: BTreeMap<String, Vec<(i64, i64)>> = BTreeMap::new();
    match source {
        CharacterSource::GroundTruth => {
            for t in dataset.tracks() {
                if let Some(l) = t.label.as_deref() {
                    intervals.entry(l.to_string()).or_default().extend_from_slice(t.frames.intervals());
                }
            }
        }
        CharacterSource::Predicted(assignment) => {
            let names = majority_names(assignment, dataset)?;
            for (t, c) in assignment {
                let track = dataset.track(*t).expect("checked by majority_names");
                intervals
                    .entry(names[c].clone())
                    .or_default()
                    .extend_from_slice(track.frames.intervals());
            }
        }
    }
    let frames: Vec<FrameSet> = characters
        .iter()
        .map(|c| FrameSet::union_of(intervals.get(c).into_iter().flatten().copied()))
        .collect();
    if let Some((c, f)) = characters.iter().zip(&frames).find(|(_, f)| f.len() > total_frames) {
        return Err(Error::InvalidInput(format!(
            "{c} appears in {} frames, more than the total of {total_frames}",
            f.len()
        )));
    }

    let n = characters.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let shared = frames[i].intersection_len(&frames[j]);
            let x = shared as f64 / total_frames as f64;
            values[i][j] = x;
            values[j][i] = x;
        }
    }
    Ok(CoOccurrenceMatrix {
        characters: characters.to_vec(),
        values,
        total_frames,
    })
}

/// Predicted entries divided by ground-truth entries. `0 / 0` is 1; a
/// nonzero prediction over a zero ground truth has no ratio and is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeMatrix {
    pub characters: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl RelativeMatrix {
    pub fn new(predicted: &CoOccurrenceMatrix, ground_truth: &CoOccurrenceMatrix) -> Result<Self> {
        if predicted.characters != ground_truth.characters {
            return Err(Error::InvalidInput("matrices cover different characters".into()));
        }
        let values = predicted
            .values
            .iter()
            .zip(&ground_truth.values)
            .map(|(p, g)| {
                p.iter()
                    .zip(g)
                    .map(|(&p, &g)| match (p == 0.0, g == 0.0) {
                        (true, true) => Some(1.0),
                        (false, true) => None,
                        _ => Some(p / g),
                    })
                    .collect()
            })
            .collect();
        Ok(RelativeMatrix {
            characters: predicted.characters.clone(),
            values,
        })
    }

    pub fn to_text(&self) -> String {
        matrix_text(&self.characters, &self.values, |x| {
            x.map_or_else(|| "inf".to_string(), |v| v.to_string())
        })
    }
}
