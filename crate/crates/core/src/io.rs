//! File formats: line-delimited track datasets, TOML configs, and versioned
//! JSON documents for results, reports, and manifests.
//!
//! A dataset file holds one JSON object per line:
//!
//! ```text
//! {"id":7,"shot":2,"frames":[[120,168]],"label":"penny","face":[...],"voice":[...],"voice_span":[[130,160]]}
//! ```
//!
//! `label`, `face`, `body`, `voice` and `voice_span` may be omitted. Unknown
//! keys are rejected. Reals are written in their shortest round-trip form,
//! so saving a loaded file reproduces it byte for byte once embeddings are
//! unit length.

use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{voice_preset, ClusteringConfig, Protocol};
use crate::error::{Error, Result};
use crate::model::{validate_dataset, Dataset, Embedding, FrameSet, Rule, Track, TrackId};

/// Schema version written into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// Input norms further than this from 1 are reported when normalizing.
const NORM_WARN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub id: u64,
    pub shot: i64,
    pub frames: Vec<(i64, i64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice_span: Option<Vec<(i64, i64)>>,
}

impl From<&Track> for TrackRecord {
    fn from(t: &Track) -> Self {
        let values = |e: &Option<Embedding>| e.as_ref().map(|e| e.values().to_vec());
        TrackRecord {
            id: t.id.0,
            shot: t.shot,
            frames: t.frames.intervals().to_vec(),
            label: t.label.clone(),
            face: values(&t.face),
            body: values(&t.body),
            voice: values(&t.voice),
            voice_span: t.voice_span.as_ref().map(|s| s.intervals().to_vec()),
        }
    }
}

impl TrackRecord {
    /// Converts to a track, normalizing embeddings. Structural problems of
    /// the record itself are reported as messages.
    fn into_track(self) -> std::result::Result<Track, String> {
        let frames = FrameSet::from_intervals(self.frames);
        if let Some(rule) = frames.check() {
            return Err(rule.to_string());
        }
        let voice_span = self.voice_span.map(FrameSet::from_intervals);
        if voice_span.as_ref().is_some_and(|s| s.check().is_some()) {
            return Err(Rule::InvalidVoiceSpan.to_string());
        }
        let id = self.id;
        let embed = |name: &str, v: Option<Vec<f64>>| -> std::result::Result<Option<Embedding>, String> {
            let Some(v) = v else { return Ok(None) };
            let (e, norm) = Embedding::with_input_norm(v).map_err(|e| format!("{name}: {e}"))?;
            if (norm - 1.0).abs() > NORM_WARN_TOLERANCE {
                warn!("track {id}: {name} embedding had norm {norm}, normalized");
            }
            Ok(Some(e))
        };
        Ok(Track {
            id: TrackId(id),
            frames,
            shot: self.shot,
            face: embed("face", self.face)?,
            body: embed("body", self.body)?,
            voice: embed("voice", self.voice)?,
            voice_span,
            label: self.label,
        })
    }
}

/// Parses dataset text. Blank lines are skipped; line numbers in errors are
/// 1-based.
pub fn parse_dataset(text: &str, fps: f64) -> Result<Dataset> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let tracks: Vec<Result<Track>> = lines
        .par_iter()
        .map(|&(line, l)| {
            let record: TrackRecord = serde_json::from_str(l).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            record.into_track().map_err(|msg| Error::Parse { line, msg })
        })
        .collect();
    let tracks = tracks.into_iter().collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(tracks, fps);
    let violations = validate_dataset(&dataset);
    if !violations.is_empty() {
        return Err(Error::InvalidDataset(violations));
    }
    Ok(dataset)
}

pub fn load_dataset(path: impl AsRef<Path>, fps: f64) -> Result<Dataset> {
    parse_dataset(&fs::read_to_string(path)?, fps)
}

pub fn dataset_to_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    for t in dataset.tracks() {
        out.push_str(&serde_json::to_string(&TrackRecord::from(t)).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_string(dataset))?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    tau_f_tight: Option<f64>,
    delta: Option<f64>,
    /// Derived from `tau_f_tight + delta`; accepted so old files still load.
    tau_f_loose: Option<toml::Value>,
    tau_v_loose: Option<f64>,
    voice_preset: Option<String>,
    rho: Option<f64>,
    tau_b_back: Option<f64>,
    shot_window: Option<u32>,
    voice_overlap_max: Option<f64>,
    voice_min_seconds: Option<f64>,
    voice_percentile: Option<f64>,
    protocol: Option<Protocol>,
}

/// Parses a TOML config. Missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<ClusteringConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.tau_f_loose.is_some() {
        warn!("config key tau_f_loose is ignored; it is always tau_f_tight + delta");
    }
    let d = ClusteringConfig::default();
    let tau_v_loose = match (file.tau_v_loose, file.voice_preset) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig {
                key: "voice_preset".into(),
                reason: "conflicts with tau_v_loose".into(),
            })
        }
        (Some(v), None) => Some(v),
        (None, Some(name)) => Some(voice_preset(&name).ok_or_else(|| Error::InvalidConfig {
            key: "voice_preset".into(),
            reason: format!("unknown preset {name:?}"),
        })?),
        (None, None) => None,
    };
    let config = ClusteringConfig {
        tau_f_tight: file.tau_f_tight.unwrap_or(d.tau_f_tight),
        delta: file.delta.unwrap_or(d.delta),
        tau_v_loose,
        rho: file.rho.unwrap_or(d.rho),
        tau_b_back: file.tau_b_back.unwrap_or(d.tau_b_back),
        shot_window: file.shot_window.unwrap_or(d.shot_window),
        voice_overlap_max: file.voice_overlap_max.unwrap_or(d.voice_overlap_max),
        voice_min_seconds: file.voice_min_seconds.unwrap_or(d.voice_min_seconds),
        voice_percentile: file.voice_percentile.unwrap_or(d.voice_percentile),
        protocol: file.protocol.unwrap_or(d.protocol),
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ClusteringConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Pretty JSON with a leading `version` field and a trailing newline.
pub fn to_versioned_json<T: Serialize>(value: &T) -> Result<String> {
    let body = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    let serde_json::Value::Object(fields) = body else {
        return Err(Error::Format("document must be an object".into()));
    };
    let mut doc = serde_json::Map::new();
    doc.insert("version".into(), SCHEMA_VERSION.into());
    doc.extend(fields);
    let mut text =
        serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("values serialize");
    text.push('\n');
    Ok(text)
}

/// Inverse of [`to_versioned_json`]; the version must match exactly.
pub fn from_versioned_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let serde_json::Value::Object(mut fields) = value else {
        return Err(Error::Format("document must be an object".into()));
    };
    let found = fields
        .remove("version")
        .ok_or_else(|| Error::Format("missing field `version`".into()))?;
    let found = found
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::Format("`version` must be a non-negative integer".into()))?;
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(serde_json::Value::Object(fields)).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_versioned_json(value)?)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    from_versioned_json(&fs::read_to_string(path)?)
}

pub fn save_result(result: &crate::pipeline::PipelineResult, path: impl AsRef<Path>) -> Result<()> {
    save_json(result, path)
}

pub fn load_result(path: impl AsRef<Path>) -> Result<crate::pipeline::PipelineResult> {
    load_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::run_pipeline;

    const TWO: &str = concat!(
        r#"{"id":1,"shot":0,"frames":[[0,9]],"label":"a","face":[1.0,0.0],"voice":[0.6,0.8],"voice_span":[[0,9]]}"#,
        "\n",
        r#"{"id":2,"shot":1,"frames":[[20,29],[40,49]],"body":[0.0,1.0]}"#,
        "\n",
    );

    #[test]
    fn empty_text_is_empty_dataset() {
        assert!(parse_dataset("", 25.0).unwrap().is_empty());
    }

    #[test]
    fn face_only_record() {
        let ds = parse_dataset(r#"{"id":3,"shot":0,"frames":[[0,4]],"face":[0.0,1.0]}"#, 25.0).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.tracks()[0].body.is_none());
    }

    #[test]
    fn inverted_interval_names_line() {
        let text = format!("{TWO}{}\n", r#"{"id":3,"shot":2,"frames":[[10,5]],"face":[1.0,0.0]}"#);
        let err = parse_dataset(&text, 25.0).unwrap_err();
        assert_eq!(err.to_string(), "inverted interval, line 3");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_dataset(r#"{"id":3,"shot":0,"frames":[[0,4]],"face":[1.0],"pose":1}"#, 25.0)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn invariant_violation_names_track() {
        let text = format!("{TWO}{}\n", r#"{"id":1,"shot":3,"frames":[[60,65]],"face":[1.0,0.0]}"#);
        let err = parse_dataset(&text, 25.0).unwrap_err();
        assert!(err.to_string().contains("track 1: duplicate id"), "{err}");
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let ds = parse_dataset(TWO, 25.0).unwrap();
        assert_eq!(dataset_to_string(&ds), TWO);
    }

    #[test]
    fn off_norm_input_is_normalized() {
        let ds = parse_dataset(r#"{"id":3,"shot":0,"frames":[[0,4]],"face":[3.0,4.0]}"#, 25.0).unwrap();
        assert_eq!(ds.tracks()[0].face.as_ref().unwrap().values(), &[0.6, 0.8]);
        let again = dataset_to_string(&ds);
        assert_eq!(dataset_to_string(&parse_dataset(&again, 25.0).unwrap()), again);
    }

    #[test]
    fn zero_embedding_names_line() {
        let err = parse_dataset(r#"{"id":3,"shot":0,"frames":[[0,4]],"face":[0.0,0.0]}"#, 25.0)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_config_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), ClusteringConfig::default());
    }

    #[test]
    fn derived_loose_threshold() {
        let c = parse_config("tau_f_tight = 0.3\ntau_f_loose = 0.9\n").unwrap();
        assert!((c.tau_f_loose() - 0.325).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_rho_names_key() {
        let err = parse_config("rho = 1.5").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref key, .. } if key == "rho"));
    }

    #[test]
    fn presets_and_protocol() {
        let c = parse_config("voice_preset = \"Friends\"\nprotocol = \"oc:12\"").unwrap();
        assert_eq!(c.tau_v_loose, Some(0.31));
        assert_eq!(c.protocol, Protocol::OracleClusters(12));
        assert!(parse_config("voice_preset = \"nope\"").is_err());
        assert!(parse_config("voice_preset = \"buffy\"\ntau_v_loose = 0.2").is_err());
        assert!(parse_config("shoe_size = 3").is_err());
    }

    fn sample_result() -> crate::pipeline::PipelineResult {
        let ds = parse_dataset(TWO, 25.0).unwrap();
        run_pipeline(&ds, &ClusteringConfig::default()).unwrap()
    }

    #[test]
    fn result_round_trip() {
        let r = sample_result();
        let text = to_versioned_json(&r).unwrap();
        assert!(text.starts_with("{\n  \"version\": 1,"));
        assert!(text.contains("\"bridges\": []"));
        let back: crate::pipeline::PipelineResult = from_versioned_json(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(to_versioned_json(&back).unwrap(), text);
    }

    #[test]
    fn result_without_assignment_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&to_versioned_json(&sample_result()).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("assignment");
        let err = from_versioned_json::<crate::pipeline::PipelineResult>(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("assignment"), "{err}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let text = to_versioned_json(&sample_result()).unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(
            from_versioned_json::<crate::pipeline::PipelineResult>(&text),
            Err(Error::SchemaVersion { found: 2, expected: 1 })
        ));
    }
}
