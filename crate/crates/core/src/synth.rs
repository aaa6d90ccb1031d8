//! Seeded generator of labelled synthetic track datasets.
//!
//! Every character has a face anchor and a voice anchor, and one body anchor
//! per scene (clothes change between scenes). A track's embedding is its
//! anchor plus isotropic Gaussian noise, re-normalized. With noise scale
//! `sigma` in `d` dimensions and `s² = sigma² d`, two draws around the same
//! anchor have expected cosine distance close to `s² / (1 + s²)`, and draws
//! around anchors at cosine distance `D` are at about `1 - (1 - D) / (1 + s²)`.
//! The approximation error is of order `1 / d`.
//!
//! The timeline is a sequence of frame windows. A window holds one track, or
//! with probability `p_concurrent` two or three tracks of distinct characters
//! that overlap in time (planting cannot-links). Within a window speakers
//! take disjoint turns, so voice spans never overlap. Windows are spread
//! evenly over `scenes * shots_per_scene` shots in time order.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Embedding, FrameSet, Track, TrackId};

const MIN_WINDOW_PER_TRACK: i64 = 60;
const WINDOW_SLACK: i64 = 100;
const MAX_JITTER: i64 = 5;
const TURN_MARGIN: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityParams {
    pub dims: usize,
    /// Per-coordinate standard deviation of the noise added to the anchor.
    pub sigma: f64,
    /// Cosine distance between anchors of different characters, in (0, 1].
    pub separation: f64,
}

impl ModalityParams {
    /// Parameters whose expected intra-identity distance is `intra`.
    pub fn with_intra_distance(dims: usize, intra: f64) -> Self {
        ModalityParams {
            dims,
            sigma: sigma_for_intra_distance(intra, dims),
            separation: 1.0,
        }
    }

    pub fn expected_intra_distance(&self) -> f64 {
        expected_intra_distance(self.sigma, self.dims)
    }

    pub fn expected_inter_distance(&self) -> f64 {
        expected_inter_distance(self.sigma, self.dims, self.separation)
    }
}

/// Noise scale giving expected intra-identity distance `target` in `dims`
/// dimensions.
pub fn sigma_for_intra_distance(target: f64, dims: usize) -> f64 {
    let s2 = target / (1.0 - target);
    (s2 / dims as f64).sqrt()
}

pub fn expected_intra_distance(sigma: f64, dims: usize) -> f64 {
    let s2 = sigma * sigma * dims as f64;
    s2 / (1.0 + s2)
}

pub fn expected_inter_distance(sigma: f64, dims: usize, separation: f64) -> f64 {
    let s2 = sigma * sigma * dims as f64;
    1.0 - (1.0 - separation) / (1.0 + s2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub n_characters: usize,
    pub n_tracks: usize,
    pub face: ModalityParams,
    pub body: ModalityParams,
    pub voice: ModalityParams,
    /// Distinct face appearances per character (e.g. with and without
    /// glasses). Face tracks cycle through the modes in time order.
    pub face_modes: usize,
    /// Cosine distance between two face modes of one character.
    pub mode_separation: f64,
    pub p_speaking: f64,
    /// When set, exactly this many face tracks per (character, face mode)
    /// speak, the earliest ones, and `p_speaking` is ignored.
    pub speakers_per_mode: Option<usize>,
    pub p_back: f64,
    pub shots_per_scene: usize,
    pub scenes: usize,
    pub p_concurrent: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n_characters: 20,
            n_tracks: 400,
            face: ModalityParams::with_intra_distance(128, 0.1),
            body: ModalityParams::with_intra_distance(128, 0.05),
            voice: ModalityParams::with_intra_distance(64, 0.05),
            face_modes: 1,
            mode_separation: 0.49,
            p_speaking: 0.3,
            speakers_per_mode: None,
            p_back: 0.1,
            shots_per_scene: 8,
            scenes: 10,
            p_concurrent: 0.2,
            fps: 25.0,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n_characters == 0 {
            return bad("n_characters must be positive".into());
        }
        if self.face_modes == 0 {
            return bad("face_modes must be positive".into());
        }
        if self.n_characters * self.face_modes > self.n_tracks {
            return bad(format!(
                "{} characters with {} face modes need at least {} tracks, got {}",
                self.n_characters,
                self.face_modes,
                self.n_characters * self.face_modes,
                self.n_tracks
            ));
        }
        for (name, m) in [("face", &self.face), ("body", &self.body), ("voice", &self.voice)] {
            if m.dims == 0 {
                return bad(format!("{name}.dims must be positive"));
            }
            if !(m.sigma >= 0.0 && m.sigma.is_finite()) {
                return bad(format!("{name}.sigma must be finite and non-negative"));
            }
            if !(m.separation > 0.0 && m.separation <= 1.0) {
                return bad(format!("{name}.separation must lie in (0, 1]"));
            }
        }
        if !(self.mode_separation > 0.0 && self.mode_separation <= 1.0) {
            return bad("mode_separation must lie in (0, 1]".into());
        }
        for (name, p) in [
            ("p_speaking", self.p_speaking),
            ("p_back", self.p_back),
            ("p_concurrent", self.p_concurrent),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.shots_per_scene == 0 || self.scenes == 0 {
            return bad("scenes and shots_per_scene must be positive".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive".into());
        }
        Ok(())
    }
}

pub fn character_name(index: usize) -> String {
    format!("char_{index:03}")
}

/// Ground truth of one generated track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackTruth {
    pub id: TrackId,
    pub character: usize,
    pub scene: usize,
    /// Face mode, absent for backs.
    pub face_mode: Option<usize>,
    pub speaking: bool,
    /// Index of the frame window; tracks sharing a window overlap in time.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    /// `face[character][mode]`.
    pub face: Vec<Vec<Vec<f64>>>,
    /// `body[character][scene]`.
    pub body: Vec<Vec<Vec<f64>>>,
    pub voice: Vec<Vec<f64>>,
}

/// Planted structure of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub params: GeneratorParams,
    pub characters: Vec<String>,
    pub tracks: Vec<TrackTruth>,
    /// Pairs of tracks placed in the same window, smaller id first.
    pub cannot_links: Vec<(TrackId, TrackId)>,
    pub anchors: Anchors,
}

/// `count` unit vectors in `dims` dimensions: orthonormal when they fit,
/// independent random directions otherwise.
fn directions(rng: &mut ChaCha8Rng, count: usize, dims: usize) -> Vec<Vec<f64>> {
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    if count > dims {
        warn!("{count} anchor directions do not fit in {dims} dimensions; using random ones");
        for _ in 0..count {
            let mut v = gaussian(rng);
            normalize(&mut v);
            out.push(v);
        }
        return out;
    }
    while out.len() < count {
        let mut v = gaussian(rng);
        // two Gram-Schmidt passes keep the basis orthogonal to rounding
        for _ in 0..2 {
            for b in &out {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            normalize(&mut v);
            out.push(v);
        }
    }
    out
}

/// `n` anchors at pairwise cosine distance `separation`: a shared component
/// plus one private direction each.
fn separated(dirs: &[Vec<f64>], n: usize, separation: f64) -> Vec<Vec<f64>> {
    let c = 1.0 - separation;
    let (shared, private) = dirs.split_first().expect("one shared direction");
    (0..n)
        .map(|i| {
            shared
                .iter()
                .zip(&private[i])
                .map(|(u, e)| c.sqrt() * u + (1.0 - c).sqrt() * e)
                .collect()
        })
        .collect()
}

fn noisy(rng: &mut ChaCha8Rng, anchor: &[f64], sigma: f64) -> Result<Embedding> {
    if sigma == 0.0 {
        return Embedding::new(anchor.to_vec());
    }
    let v = anchor
        .iter()
        .map(|a| a + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Embedding::new(v)
}

/// Generates a dataset and its manifest. The same params always give the
/// same output.
pub fn generate(params: &GeneratorParams) -> Result<(Dataset, Manifest)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n_characters;
    let modes = params.face_modes;

    let face_dirs = directions(
        &mut rng,
        1 + n + if modes > 1 { n * modes } else { 0 },
        params.face.dims,
    );
    let identity = separated(&face_dirs[..=n], n, params.face.separation);
    let face_anchors: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            if modes == 1 {
                return vec![identity[i].clone()];
            }
            let c = 1.0 - params.mode_separation;
            (0..modes)
                .map(|k| {
                    let f = &face_dirs[1 + n + i * modes + k];
                    identity[i]
                        .iter()
                        .zip(f)
                        .map(|(a, f)| c.sqrt() * a + (1.0 - c).sqrt() * f)
                        .collect()
                })
                .collect()
        })
        .collect();
    let body_dirs = directions(&mut rng, 1 + n * params.scenes, params.body.dims);
    let body_flat = separated(&body_dirs, n * params.scenes, params.body.separation);
    let body_anchors: Vec<Vec<Vec<f64>>> = body_flat.chunks(params.scenes).map(<[_]>::to_vec).collect();
    let voice_dirs = directions(&mut rng, 1 + n, params.voice.dims);
    let voice_anchors = separated(&voice_dirs, n, params.voice.separation);

    // every character appears at least once per face mode
    let mut pool: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, modes)).collect();
    while pool.len() < params.n_tracks {
        pool.push(rng.random_range(0..n));
    }
    pool.shuffle(&mut rng);

    let mut windows: Vec<Vec<usize>> = Vec::new();
    let mut i = 0;
    while i < pool.len() {
        let mut size = 1;
        if rng.random::<f64>() < params.p_concurrent {
            let want = rng.random_range(2..=3usize);
            let mut j = i + 1;
            while size < want && j < pool.len() {
                if !pool[i..i + size].contains(&pool[j]) {
                    pool.swap(i + size, j);
                    size += 1;
                }
                j += 1;
            }
        }
        windows.push(pool[i..i + size].to_vec());
        i += size;
    }

    let total_shots = params.scenes * params.shots_per_scene;
    let mut tracks = Vec::with_capacity(params.n_tracks);
    let mut truth = Vec::with_capacity(params.n_tracks);
    let mut cannot_links = Vec::new();
    let mut faces_seen = vec![0usize; n];
    let mut speakers_seen = vec![vec![0usize; modes]; n];
    let mut cursor: i64 = 0;
    for (w, members) in windows.iter().enumerate() {
        let g = members.len() as i64;
        let length = rng.random_range(MIN_WINDOW_PER_TRACK * g..=MIN_WINDOW_PER_TRACK * g + WINDOW_SLACK);
        let (start, end) = (cursor, cursor + length - 1);
        let shot = w * total_shots / windows.len();
        let scene = shot / params.shots_per_scene;
        let first_id = tracks.len() as u64;
        for (slot, &character) in members.iter().enumerate() {
            let id = tracks.len() as u64;
            let (lead, tail) = if g > 1 {
                (rng.random_range(0..=MAX_JITTER), rng.random_range(0..=MAX_JITTER))
            } else {
                (0, 0)
            };
            let mut track = Track::new(id, shot as i64, start + lead, end - tail);
            track.label = Some(character_name(character));
            track.body = Some(noisy(&mut rng, &body_anchors[character][scene], params.body.sigma)?);

            let is_back = rng.random::<f64>() < params.p_back;
            let mut face_mode = None;
            let mut speaking = false;
            if !is_back {
                let mode = faces_seen[character] % modes;
                faces_seen[character] += 1;
                face_mode = Some(mode);
                track.face = Some(noisy(&mut rng, &face_anchors[character][mode], params.face.sigma)?);
                speaking = match params.speakers_per_mode {
                    Some(k) => speakers_seen[character][mode] < k,
                    None => rng.random::<f64>() < params.p_speaking,
                };
                if speaking {
                    speakers_seen[character][mode] += 1;
                    track.voice = Some(noisy(&mut rng, &voice_anchors[character], params.voice.sigma)?);
                    let turn = length / g;
                    let s = (start + slot as i64 * turn + TURN_MARGIN).max(start + lead);
                    let e = (start + (slot as i64 + 1) * turn - 1 - TURN_MARGIN).min(end - tail);
                    track.voice_span = Some(if g > 1 {
                        FrameSet::single(s, e)
                    } else {
                        track.frames.clone()
                    });
                }
            }
            for other in first_id..id {
                cannot_links.push((TrackId(other), TrackId(id)));
            }
            truth.push(TrackTruth {
                id: TrackId(id),
                character,
                scene,
                face_mode,
                speaking,
                window: w,
            });
            tracks.push(track);
        }
        cursor = end + 1 + rng.random_range(5..=30);
    }

    let dataset = Dataset::new(tracks, params.fps);
    let manifest = Manifest {
        params: params.clone(),
        characters: (0..n).map(character_name).collect(),
        tracks: truth,
        cannot_links,
        anchors: Anchors {
            face: face_anchors,
            body: body_anchors,
            voice: voice_anchors,
        },
    };
    Ok((dataset, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::build_cannot_links;
    use crate::distance::cosine_distance;
    use crate::model::{validate_dataset, Modality};
    use crate::threshold::filter_voice_tracks;

    fn small(seed: u64) -> GeneratorParams {
        GeneratorParams {
            n_characters: 6,
            n_tracks: 80,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_output() {
        let (a, ma) = generate(&small(3)).unwrap();
        let (b, mb) = generate(&small(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let (c, _) = generate(&small(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn output_is_valid() {
        for seed in 0..5 {
            let (ds, m) = generate(&small(seed)).unwrap();
            assert!(validate_dataset(&ds).is_empty(), "{:?}", validate_dataset(&ds));
            assert_eq!(ds.len(), 80);
            assert_eq!(m.tracks.len(), 80);
        }
    }

    #[test]
    fn no_backs_means_every_track_has_a_face() {
        let (ds, _) = generate(&GeneratorParams {
            p_back: 0.0,
            ..small(1)
        })
        .unwrap();
        assert!(ds.tracks().iter().all(|t| t.face.is_some()));
    }

    #[test]
    fn noiseless_distances_equal_anchor_separations() {
        let p = GeneratorParams {
            n_characters: 4,
            n_tracks: 30,
            face: ModalityParams {
                dims: 16,
                sigma: 0.0,
                separation: 0.7,
            },
            p_back: 0.0,
            ..Default::default()
        };
        let (ds, m) = generate(&p).unwrap();
        let faces: Vec<_> = ds.tracks().iter().map(|t| t.face.as_ref().unwrap()).collect();
        for (i, a) in faces.iter().enumerate() {
            for (j, b) in faces.iter().enumerate() {
                let d = cosine_distance(a, b).unwrap();
                let expected = if m.tracks[i].character == m.tracks[j].character { 0.0 } else { 0.7 };
                assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
            }
        }
    }

    #[test]
    fn planted_cannot_links_are_real_and_complete() {
        let (ds, m) = generate(&GeneratorParams {
            p_concurrent: 0.5,
            ..small(7)
        })
        .unwrap();
        assert!(!m.cannot_links.is_empty());
        let built = build_cannot_links(&ds);
        let planted: Vec<_> = built.pairs().collect();
        assert_eq!(planted, m.cannot_links);
        for (a, b) in &m.cannot_links {
            let (ta, tb) = (ds.track(*a).unwrap(), ds.track(*b).unwrap());
            assert_ne!(ta.label, tb.label);
            assert!(ta.frames.intersects(&tb.frames));
        }
    }

    #[test]
    fn every_generated_voice_is_usable() {
        let (ds, _) = generate(&GeneratorParams {
            p_concurrent: 0.6,
            p_speaking: 0.8,
            ..small(2)
        })
        .unwrap();
        let speaking = ds.tracks().iter().filter(|t| t.voice.is_some()).count();
        assert!(speaking > 0);
        assert_eq!(filter_voice_tracks(&ds, 0.2, 1.0).len(), speaking);
    }

    #[test]
    fn speakers_per_mode_is_exact() {
        let (_, m) = generate(&GeneratorParams {
            n_characters: 5,
            n_tracks: 60,
            face_modes: 2,
            speakers_per_mode: Some(1),
            p_back: 0.0,
            ..Default::default()
        })
        .unwrap();
        for c in 0..5 {
            for mode in 0..2 {
                let n = m
                    .tracks
                    .iter()
                    .filter(|t| t.speaking && t.character == c && t.face_mode == Some(mode))
                    .count();
                assert_eq!(n, 1);
            }
        }
    }

    #[test]
    fn infeasible_params() {
        let p = GeneratorParams {
            n_characters: 10,
            n_tracks: 5,
            ..Default::default()
        };
        assert!(matches!(generate(&p), Err(Error::InvalidParams(_))));
        let p = GeneratorParams {
            p_back: 1.5,
            ..Default::default()
        };
        assert!(generate(&p).is_err());
    }

    fn mean_distances(ds: &Dataset, m: &Manifest, modality: Modality) -> (f64, f64) {
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
        let tracks = ds.tracks();
        for i in 0..tracks.len() {
            for j in i + 1..tracks.len() {
                let (Some(a), Some(b)) = (tracks[i].embedding(modality), tracks[j].embedding(modality)) else {
                    continue;
                };
                let d = cosine_distance(a, b).unwrap();
                if m.tracks[i].character == m.tracks[j].character {
                    intra += d;
                    ni += 1;
                } else {
                    inter += d;
                    nx += 1;
                }
            }
        }
        (intra / ni as f64, inter / nx as f64)
    }

    #[test]
    fn empirical_distances_match_calibration() {
        let p = GeneratorParams {
            n_characters: 30,
            n_tracks: 1000,
            face: ModalityParams {
                separation: 0.8,
                ..ModalityParams::with_intra_distance(128, 0.15)
            },
            p_back: 0.0,
            ..Default::default()
        };
        let (ds, m) = generate(&p).unwrap();
        let (intra, inter) = mean_distances(&ds, &m, Modality::Face);
        let (ei, ex) = (p.face.expected_intra_distance(), p.face.expected_inter_distance());
        assert!((ei - 0.15).abs() < 1e-12);
        assert!((intra - ei).abs() / ei < 0.05, "intra {intra} vs {ei}");
        assert!((inter - ex).abs() / ex < 0.05, "inter {inter} vs {ex}");
    }
}
