use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterId, Dataset, TrackId};

use super::hungarian::hungarian;

/// What one evaluated track contributes to a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every track counts once.
    #[default]
    Track,
    /// Every track counts by its number of frames.
    Frame,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Track => "track",
            Weighting::Frame => "frame",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "track" => Ok(Weighting::Track),
            "frame" => Ok(Weighting::Frame),
            other => Err(Error::InvalidInput(format!(
                "unknown weighting {other:?} (expected track or frame)"
            ))),
        }
    }
}

/// Character × cluster weight table over the evaluated tracks.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub characters: Vec<String>,
    pub clusters: Vec<ClusterId>,
    /// `counts[y][c]`: weight of character `y` inside cluster `c`.
    pub counts: Vec<Vec<u64>>,
}

impl Contingency {
    /// Builds the table for every track in `assignment`. Each track needs a
    /// label in `dataset`.
    pub fn new(
        assignment: &BTreeMap<TrackId, ClusterId>,
        dataset: &Dataset,
        weighting: Weighting,
    ) -> Result<Contingency> {
        let mut cells: BTreeMap<(&str, ClusterId), u64> = BTreeMap::new();
        for (&t, &c) in assignment {
            let track = dataset
                .track(t)
                .ok_or_else(|| Error::InvalidInput(format!("track {t} is not in the dataset")))?;
            let label = track.label.as_deref().ok_or(Error::Unlabeled(t))?;
            let w = match weighting {
                Weighting::Track => 1,
                Weighting::Frame => track.frames.len(),
            };
            *cells.entry((label, c)).or_default() += w;
        }
        if cells.is_empty() {
            return Err(Error::InvalidInput("no clustered tracks to evaluate".into()));
        }
        let mut characters: Vec<String> = cells.keys().map(|(l, _)| l.to_string()).collect();
        characters.dedup();
        let mut clusters: Vec<ClusterId> = cells.keys().map(|&(_, c)| c).collect();
        clusters.sort_unstable();
        clusters.dedup();
        let mut counts = vec![vec![0u64; clusters.len()]; characters.len()];
        for ((label, c), w) in cells {
            let y = characters.binary_search_by(|x| x.as_str().cmp(label)).expect("collected");
            let k = clusters.binary_search(&c).expect("collected");
            counts[y][k] = w;
        }
        Ok(Contingency {
            characters,
            clusters,
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn character_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn cluster_totals(&self) -> Vec<u64> {
        (0..self.clusters.len())
            .map(|k| self.counts.iter().map(|r| r[k]).sum())
            .collect()
    }
}

/// Weighted cluster purity.
pub fn wcp(table: &Contingency) -> f64 {
    let majority: u64 = (0..table.clusters.len())
        .map(|k| table.counts.iter().map(|r| r[k]).max().unwrap_or(0))
        .sum();
    majority as f64 / table.total() as f64
}

/// Entropy in nats of the distribution given by `counts`. Counts are summed
/// in sorted order so equal multisets give bit-identical entropies.
fn entropy(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    let mut c: Vec<u64> = counts.filter(|&n| n > 0).collect();
    c.sort_unstable();
    let n = total as f64;
    c.into_iter()
        .map(|k| {
            let p = k as f64 / n;
            p * (n / k as f64).ln()
        })
        .sum()
}

/// Normalized mutual information `2 I(Y;C) / (H(Y) + H(C))`.
///
/// Two zero entropies give 1, exactly one gives 0.
pub fn nmi(table: &Contingency) -> f64 {
    let total = table.total();
    let h_y = entropy(table.character_totals().into_iter(), total);
    let h_c = entropy(table.cluster_totals().into_iter(), total);
    match (h_y == 0.0, h_c == 0.0) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let h_joint = entropy(table.counts.iter().flatten().copied(), total);
    let mutual = (h_y + h_c - h_joint).max(0.0);
    (2.0 * mutual / (h_y + h_c)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterScore {
    pub character: String,
    pub cluster: Option<ClusterId>,
    pub cp: f64,
    pub cr: f64,
}

/// Character precision and recall after the one-to-one assignment of
/// characters to clusters maximizing total recall. Returns the unweighted
/// means over all characters and the per-character rows.
pub fn character_pr(table: &Contingency) -> Result<(f64, f64, Vec<CharacterScore>)> {
    let char_totals = table.character_totals();
    let cluster_totals = table.cluster_totals();
    let neg_recall: Vec<Vec<f64>> = table
        .counts
        .iter()
        .zip(&char_totals)
        .map(|(row, &n)| row.iter().map(|&w| -(w as f64 / n as f64)).collect())
        .collect();
    let matching = hungarian(&neg_recall)?;
    let rows: Vec<CharacterScore> = table
        .characters
        .iter()
        .enumerate()
        .map(|(y, name)| {
            let (cluster, cp, cr) = match matching.row_to_col[y] {
                Some(k) => {
                    let w = table.counts[y][k] as f64;
                    (
                        Some(table.clusters[k]),
                        w / cluster_totals[k] as f64,
                        w / char_totals[y] as f64,
                    )
                }
                None => (None, 0.0, 0.0),
            };
            CharacterScore {
                character: name.clone(),
                cluster,
                cp,
                cr,
            }
        })
        .collect();
    let n = rows.len() as f64;
    let cp = rows.iter().map(|r| r.cp).sum::<f64>() / n;
    let cr = rows.iter().map(|r| r.cr).sum::<f64>() / n;
    Ok((cp, cr, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub weighting: Weighting,
    pub wcp: f64,
    pub nmi: f64,
    pub cp: f64,
    pub cr: f64,
    pub predicted_clusters: usize,
    pub ground_truth_clusters: usize,
    pub evaluated_tracks: usize,
    pub characters: Vec<CharacterScore>,
}

impl MetricsReport {
    /// Line-oriented `key: value` text, characters last.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "weighting: {}\nwcp: {}\nnmi: {}\ncp: {}\ncr: {}\npredicted_clusters: {}\nground_truth_clusters: {}\nevaluated_tracks: {}\n",
            self.weighting,
            self.wcp,
            self.nmi,
            self.cp,
            self.cr,
            self.predicted_clusters,
            self.ground_truth_clusters,
            self.evaluated_tracks
        );
        for c in &self.characters {
            let cluster = c.cluster.map_or_else(|| "none".to_string(), |k| k.to_string());
            out.push_str(&format!(
                "character: {} cluster={} cp={} cr={}\n",
                c.character, cluster, c.cp, c.cr
            ));
        }
        out
    }
}

/// All metrics for the tracks in `assignment`.
pub fn evaluate(
    assignment: &BTreeMap<TrackId, ClusterId>,
    dataset: &Dataset,
    weighting: Weighting,
) -> Result<MetricsReport> {
    let table = Contingency::new(assignment, dataset, weighting)?;
    let (cp, cr, characters) = character_pr(&table)?;
    Ok(MetricsReport {
        weighting,
        wcp: wcp(&table),
        nmi: nmi(&table),
        cp,
        cr,
        predicted_clusters: table.clusters.len(),
        ground_truth_clusters: table.characters.len(),
        evaluated_tracks: assignment.len(),
        characters,
    })
}
