use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shipped table of per-program-set voice thresholds.
pub const VOICE_PRESETS_TOML: &str = include_str!("../presets/voice_thresholds.toml");

/// Termination protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Protocol {
    /// Stop when thresholds and constraints forbid further merges.
    #[default]
    AutomaticTermination,
    /// Reduce to a known number of clusters.
    OracleClusters(usize),
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::AutomaticTermination => f.write_str("at"),
            Protocol::OracleClusters(c) => write!(f, "oc:{c}"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidConfig {
            key: "protocol".into(),
            reason: format!("{reason} (got {s:?}, expected \"at\" or \"oc:<C>\")"),
        };
        match s.trim().to_ascii_lowercase().as_str() {
            "at" => Ok(Protocol::AutomaticTermination),
            other => {
                let count = other.strip_prefix("oc:").ok_or_else(|| bad("unknown protocol"))?;
                match count.parse::<usize>() {
                    Ok(c) if c > 0 => Ok(Protocol::OracleClusters(c)),
                    _ => Err(bad("oc requires a positive cluster count")),
                }
            }
        }
    }
}

impl Serialize for Protocol {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Protocol {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every threshold and switch used by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    /// Stage-1 face NN distance threshold.
    pub tau_f_tight: f64,
    /// Margin added to `tau_f_tight` for Stage-2 face agreement.
    pub delta: f64,
    /// Stage-2 voice threshold; learnt per dataset when absent.
    pub tau_v_loose: Option<f64>,
    /// Ratio-test threshold for back assignment.
    pub rho: f64,
    /// Maximum body distance for back assignment.
    pub tau_b_back: f64,
    /// Backs only look at bodies whose shot differs by at most this much.
    pub shot_window: u32,
    /// Voice tracks overlapping others by more than this fraction are ignored.
    pub voice_overlap_max: f64,
    /// Voice tracks shorter than this are ignored.
    pub voice_min_seconds: f64,
    /// Voice threshold = the `(100 - voice_percentile)`-th percentile of
    /// negative voice distances.
    pub voice_percentile: f64,
    pub protocol: Protocol,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            tau_f_tight: 0.48,
            delta: 0.025,
            tau_v_loose: None,
            rho: 0.9,
            tau_b_back: 0.4,
            shot_window: 1,
            voice_overlap_max: 0.20,
            voice_min_seconds: 1.0,
            voice_percentile: 99.9,
            protocol: Protocol::AutomaticTermination,
        }
    }
}

impl ClusteringConfig {
    /// Loosened face threshold used when voice agrees.
    pub fn tau_f_loose(&self) -> f64 {
        self.tau_f_tight + self.delta
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::InvalidConfig {
                key: key.into(),
                reason,
            })
        };
        let distance = |key: &str, v: f64| {
            if !(0.0..=2.0).contains(&v) {
                return bad(key, format!("distance threshold {v} outside [0, 2]"));
            }
            Ok(())
        };
        distance("tau_f_tight", self.tau_f_tight)?;
        distance("tau_b_back", self.tau_b_back)?;
        if let Some(v) = self.tau_v_loose {
            distance("tau_v_loose", v)?;
        }
        if !(self.delta >= 0.0) {
            return bad("delta", format!("margin {} must be non-negative", self.delta));
        }
        distance("delta", self.tau_f_loose()).or_else(|_| {
            bad(
                "delta",
                format!("tau_f_tight + delta = {} outside [0, 2]", self.tau_f_loose()),
            )
        })?;
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho", format!("ratio threshold {} must lie in (0, 1]", self.rho));
        }
        if !(0.0..=1.0).contains(&self.voice_overlap_max) {
            return bad(
                "voice_overlap_max",
                format!("fraction {} outside [0, 1]", self.voice_overlap_max),
            );
        }
        if !(self.voice_min_seconds > 0.0 && self.voice_min_seconds.is_finite()) {
            return bad(
                "voice_min_seconds",
                format!("{} must be positive", self.voice_min_seconds),
            );
        }
        if !(self.voice_percentile > 0.0 && self.voice_percentile < 100.0) {
            return bad(
                "voice_percentile",
                format!("{} outside (0, 100)", self.voice_percentile),
            );
        }
        if self.protocol == Protocol::OracleClusters(0) {
            return bad("protocol", "oc requires a positive cluster count".into());
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    version: u32,
    voice_thresholds: BTreeMap<String, f64>,
}

/// Named voice thresholds shipped with the crate.
pub fn voice_presets() -> BTreeMap<String, f64> {
    let file: PresetFile =
        toml::from_str(VOICE_PRESETS_TOML).expect("bundled preset table is valid");
    debug_assert_eq!(file.version, 1);
    file.voice_thresholds
}

pub fn voice_preset(name: &str) -> Option<f64> {
    voice_presets().get(&name.to_ascii_lowercase()).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ClusteringConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tau_f_tight, 0.48);
        assert_eq!(c.tau_f_loose(), 0.48 + 0.025);
    }

    #[test]
    fn protocol_round_trips_through_text() {
        assert_eq!("at".parse::<Protocol>().unwrap(), Protocol::AutomaticTermination);
        assert_eq!("oc:10".parse::<Protocol>().unwrap(), Protocol::OracleClusters(10));
        assert_eq!(Protocol::OracleClusters(7).to_string(), "oc:7");
        assert!("oc:0".parse::<Protocol>().is_err());
        assert!("oc:".parse::<Protocol>().is_err());
        assert!("hac".parse::<Protocol>().is_err());
    }

    #[test]
    fn range_checks_name_the_key() {
        let c = ClusteringConfig {
            rho: 1.5,
            ..Default::default()
        };
        match c.validate() {
            Err(Error::InvalidConfig { key, .. }) => assert_eq!(key, "rho"),
            other => panic!("unexpected {other:?}"),
        }
        let c = ClusteringConfig {
            tau_b_back: 2.5,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { key, .. }) if key == "tau_b_back"));
    }

    #[test]
    fn presets_contain_every_program_set() {
        let p = voice_presets();
        assert_eq!(p.len(), 6);
        assert_eq!(voice_preset("TBBT"), Some(0.36));
        assert_eq!(voice_preset("buffy"), Some(0.17));
        assert_eq!(voice_preset("sherlock"), Some(0.19));
        assert_eq!(voice_preset("friends"), Some(0.31));
        assert_eq!(voice_preset("hidden_figures"), Some(0.19));
        assert_eq!(voice_preset("about_last_night"), Some(0.33));
    }
}
