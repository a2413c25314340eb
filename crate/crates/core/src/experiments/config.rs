//! Run configuration, read from TOML with one section per concern.
//!
//! ```toml
//! [input]
//! spec = "+H"
//!
//! [sources]
//! ideal = true          # or: epsilon = 0.1
//!
//! [distinguishability]  # optional
//! pump_fs = 200.0
//! coherence_fs = 700.0
//! delay_fs = 0.0
//!
//! [herald]
//! b3_angle = 0.0
//! b3_outcome = "H"
//! b4_angle = 0.0
//! b4_outcome = "H"
//! detector = "threshold"
//! threshold_inference = false
//!
//! [analysis]
//! b1 = 0.0
//! b2 = 0.0
//! ```

use serde::{Deserialize, Serialize};

use crate::elements::DistinguishabilityModel;
use crate::error::{Error, Result};
use crate::fock::Polarization;
use crate::measurement::{DetectorKind, HeraldDetector, HeraldRule};
use crate::sources::{InputSpec, PairAmplitude, SourceModel};

/// Pump pulse duration used when a delay is requested without a model.
pub const DEFAULT_PUMP_FS: f64 = 200.0;
/// Filtered coherence time used when a delay is requested without a model.
pub const DEFAULT_COHERENCE_FS: f64 = 700.0;

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    input: Option<RawInput>,
    sources: Option<RawSources>,
    distinguishability: Option<RawDistinguishability>,
    herald: Option<RawHerald>,
    analysis: Option<RawAnalysis>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    spec: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSources {
    ideal: Option<bool>,
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawDistinguishability {
    pump_fs: f64,
    coherence_fs: f64,
    #[serde(default)]
    delay_fs: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawHerald {
    #[serde(default)]
    b3_angle: f64,
    b3_outcome: String,
    #[serde(default)]
    b4_angle: f64,
    b4_outcome: String,
    #[serde(default = "default_detector")]
    detector: String,
    #[serde(default)]
    threshold_inference: bool,
}

fn default_detector() -> String {
    DetectorKind::Threshold.as_str().into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    b1: f64,
    b2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitConfig {
    pub input: InputSpec,
    pub sources: SourceModel,
    pub distinguishability: Option<DistinguishabilityModel>,
    pub herald: HeraldRule,
    /// Linear-polarization analysis angles (degrees) for b1 and b2.
    pub analysis: [f64; 2],
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self::ideal()
    }
}

fn parse_outcome(s: &str) -> Result<Polarization> {
    match s {
        "H" => Ok(Polarization::H),
        "V" => Ok(Polarization::V),
        _ => Err(Error::Config(format!("herald outcome must be H or V, got `{s}`"))),
    }
}

impl CircuitConfig {
    /// Ideal sources, passive herald, H/V analysis, input |HH⟩.
    pub fn ideal() -> Self {
        CircuitConfig {
            input: InputSpec::computational(Polarization::H, Polarization::H),
            sources: SourceModel::Ideal,
            distinguishability: None,
            herald: HeraldRule::passive(),
            analysis: [0.0, 0.0],
        }
    }

    pub fn with_input(mut self, input: InputSpec) -> Self {
        self.input = input;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.sources = SourceModel::Spdc {
            epsilon: PairAmplitude::new(epsilon)?,
        };
        Ok(self)
    }

    pub fn with_distinguishability(mut self, model: DistinguishabilityModel) -> Result<Self> {
        model.validate()?;
        self.distinguishability = Some(model);
        Ok(self)
    }

    pub fn with_threshold_inference(mut self, on: bool) -> Self {
        self.herald = self.herald.with_threshold_inference(on);
        self
    }

    pub fn epsilon(&self) -> Option<PairAmplitude> {
        match self.sources {
            SourceModel::Spdc { epsilon } => Some(epsilon),
            SourceModel::Ideal => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let input = match raw.input {
            Some(i) => InputSpec::parse(&i.spec)?,
            None => InputSpec::computational(Polarization::H, Polarization::H),
        };
        let s = raw
            .sources
            .ok_or_else(|| Error::Config("missing [sources] section".into()))?;
        let sources = match (s.ideal.unwrap_or(false), s.epsilon) {
            (true, None) => SourceModel::Ideal,
            (false, Some(e)) => SourceModel::Spdc {
                epsilon: PairAmplitude::new(e)?,
            },
            _ => {
                return Err(Error::Config(
                    "exactly one of sources.ideal = true or sources.epsilon is required".into(),
                ))
            }
        };
        let distinguishability = raw
            .distinguishability
            .map(|d| DistinguishabilityModel::new(d.pump_fs, d.coherence_fs, d.delay_fs))
            .transpose()?;
        let h = raw
            .herald
            .ok_or_else(|| Error::Config("missing [herald] section".into()))?;
        let kind = DetectorKind::parse(&h.detector).map_err(|e| Error::Config(e.to_string()))?;
        let herald = HeraldRule::new(
            vec![
                HeraldDetector::new("b3", h.b3_angle, parse_outcome(&h.b3_outcome)?, kind),
                HeraldDetector::new("b4", h.b4_angle, parse_outcome(&h.b4_outcome)?, kind),
            ],
            ["b1", "b2"],
            h.threshold_inference,
        )?;
        let analysis = raw.analysis.map(|a| [a.b1, a.b2]).unwrap_or([0.0, 0.0]);
        if analysis.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("analysis angles must be finite".into()));
        }
        Ok(CircuitConfig {
            input,
            sources,
            distinguishability,
            herald,
            analysis,
        })
    }

    pub fn to_toml(&self) -> String {
        let det = |l: &str| {
            self.herald
                .detectors()
                .iter()
                .find(|d| d.label == l)
                .cloned()
                .unwrap_or_else(|| HeraldDetector::new(l, 0.0, Polarization::H, DetectorKind::Threshold))
        };
        let (b3, b4) = (det("b3"), det("b4"));
        let raw = RawConfig {
            input: Some(RawInput {
                spec: self.input.to_string(),
            }),
            sources: Some(match self.sources {
                SourceModel::Ideal => RawSources {
                    ideal: Some(true),
                    epsilon: None,
                },
                SourceModel::Spdc { epsilon } => RawSources {
                    ideal: None,
                    epsilon: Some(epsilon.value()),
                },
            }),
            distinguishability: self.distinguishability.map(|d| RawDistinguishability {
                pump_fs: d.pump_duration_fs,
                coherence_fs: d.coherence_time_fs,
                delay_fs: d.delay_fs,
            }),
            herald: Some(RawHerald {
                b3_angle: b3.angle_deg,
                b3_outcome: b3.outcome.to_string(),
                b4_angle: b4.angle_deg,
                b4_outcome: b4.outcome.to_string(),
                detector: b3.kind.as_str().into(),
                threshold_inference: self.herald.threshold_inference(),
            }),
            analysis: Some(RawAnalysis {
                b1: self.analysis[0],
                b2: self.analysis[1],
            }),
        };
        toml::to_string(&raw).expect("config serializes")
    }

    /// Flat `key = value` lines for report headers.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = vec![("input".to_string(), self.input.to_string())];
        out.push((
            "sources".into(),
            match self.sources {
                SourceModel::Ideal => "ideal".into(),
                SourceModel::Spdc { epsilon } => format!("spdc epsilon={}", epsilon.value()),
            },
        ));
        if let Some(d) = &self.distinguishability {
            out.push((
                "distinguishability".into(),
                format!(
                    "pump_fs={} coherence_fs={} delay_fs={}",
                    d.pump_duration_fs, d.coherence_time_fs, d.delay_fs
                ),
            ));
        }
        for d in self.herald.detectors() {
            out.push((
                format!("herald.{}", d.label),
                format!("angle={} outcome={} kind={}", d.angle_deg, d.outcome, d.kind.as_str()),
            ));
        }
        out.push((
            "herald.threshold_inference".into(),
            self.herald.threshold_inference().to_string(),
        ));
        out.push((
            "analysis".into(),
            format!("b1={} b2={}", self.analysis[0], self.analysis[1]),
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
[input]
spec = "+H"

[sources]
epsilon = 0.1

[distinguishability]
pump_fs = 200.0
coherence_fs = 700.0
delay_fs = 100.0

[herald]
b3_outcome = "H"
b4_outcome = "V"
threshold_inference = true

[analysis]
b1 = 45.0
b2 = 45.0
"#;

    #[test]
    fn parses_full_config() {
        let c = CircuitConfig::from_toml(FULL).unwrap();
        assert_eq!(c.input, InputSpec::from_tokens("+H").unwrap());
        assert_eq!(c.epsilon().unwrap().value(), 0.1);
        assert_eq!(c.distinguishability.unwrap().delay_fs, 100.0);
        assert_eq!(c.herald.outcomes(), vec![Polarization::H, Polarization::V]);
        assert!(c.herald.threshold_inference());
        assert_eq!(c.analysis, [45.0, 45.0]);
    }

    #[test]
    fn toml_round_trip() {
        let c = CircuitConfig::from_toml(FULL).unwrap();
        assert_eq!(CircuitConfig::from_toml(&c.to_toml()).unwrap(), c);
        let i = CircuitConfig::ideal();
        assert_eq!(CircuitConfig::from_toml(&i.to_toml()).unwrap(), i);
    }

    #[test]
    fn rejects_bad_configs() {
        let both = "[sources]\nideal = true\nepsilon = 0.1\n[herald]\nb3_outcome = \"H\"\nb4_outcome = \"H\"\n";
        let neither = "[sources]\n[herald]\nb3_outcome = \"H\"\nb4_outcome = \"H\"\n";
        let no_herald = "[sources]\nideal = true\n";
        let big_eps = "[sources]\nepsilon = 2.0\n[herald]\nb3_outcome = \"H\"\nb4_outcome = \"H\"\n";
        let unknown = "[sources]\nideal = true\nfoo = 1\n";
        for bad in [both, neither, unknown] {
            assert!(matches!(CircuitConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
        assert!(matches!(CircuitConfig::from_toml(no_herald), Err(Error::Config(m)) if m.contains("herald")));
        assert_eq!(CircuitConfig::from_toml(big_eps), Err(Error::EpsilonOutOfRange(2.0)));
    }
}
