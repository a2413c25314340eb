//! An ordered list of elements on one registry, together with everything
//! needed to run it: source model, herald rule, output analysis bases and
//! the positions of delay-dependent elements.

use std::sync::Arc;

use crate::elements::{DistinguishabilityModel, Element};
use crate::error::{Error, Result};
use crate::fock::{FockState, ModeRegistry, Polarization};
use crate::measurement::{herald, DetectorKind, HeraldDetector, HeraldRule, Heralded};
use crate::sources::{prepare, InputSpec, Member, PairAmplitude, PairConfig, SourceModel};

#[derive(Debug, Clone, PartialEq)]
struct DelaySlots {
    model: DistinguishabilityModel,
    slots: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    registry: Arc<ModeRegistry>,
    elements: Vec<Element>,
    herald: HeraldRule,
    analysis: [f64; 2],
    sources: SourceModel,
    delay: Option<DelaySlots>,
}

impl Circuit {
    pub fn new(registry: Arc<ModeRegistry>, herald: HeraldRule) -> Self {
        Circuit {
            registry,
            elements: Vec::new(),
            herald,
            analysis: [0.0, 0.0],
            sources: SourceModel::Ideal,
            delay: None,
        }
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn herald(&self) -> &HeraldRule {
        &self.herald
    }

    pub fn analysis(&self) -> [f64; 2] {
        self.analysis
    }

    pub fn sources(&self) -> &SourceModel {
        &self.sources
    }

    pub fn distinguishability(&self) -> Option<&DistinguishabilityModel> {
        self.delay.as_ref().map(|d| &d.model)
    }

    /// Current wavepacket overlap, if a delay model is installed.
    pub fn overlap(&self) -> Option<f64> {
        self.distinguishability().map(|m| m.overlap())
    }

    pub fn push(&mut self, element: Element) -> Result<()> {
        for m in element.modes() {
            self.registry.mode_index(m)?;
        }
        self.elements.push(element);
        Ok(())
    }

    /// Appends a delay element on `label` whose overlap follows `model`.
    /// All delay slots share one model.
    pub fn push_delay(&mut self, label: &str, model: DistinguishabilityModel) -> Result<()> {
        let e = Element::delay_mix(&self.registry, label, &model)?;
        let slot = (self.elements.len(), label.to_string());
        match &mut self.delay {
            Some(d) if d.model != model => {
                return Err(Error::InvalidDistinguishability(
                    "delay slots must share one model".into(),
                ))
            }
            Some(d) => d.slots.push(slot),
            None => {
                self.delay = Some(DelaySlots {
                    model,
                    slots: vec![slot],
                })
            }
        }
        self.elements.push(e);
        Ok(())
    }

    pub fn with_herald(mut self, rule: HeraldRule) -> Self {
        self.herald = rule;
        self
    }

    pub fn with_analysis(mut self, angles: [f64; 2]) -> Self {
        self.analysis = angles;
        self
    }

    pub fn with_sources(mut self, sources: SourceModel) -> Self {
        self.sources = sources;
        self
    }

    /// Replaces element `index`, keeping everything else.
    pub fn with_element(mut self, index: usize, element: Element) -> Result<Self> {
        if index >= self.elements.len() {
            return Err(Error::Config(format!("no element at position {index}")));
        }
        for m in element.modes() {
            self.registry.mode_index(m)?;
        }
        self.elements[index] = element;
        Ok(self)
    }

    /// Same circuit with every delay slot rebuilt for `delay_fs`.
    pub fn with_delay(&self, delay_fs: f64) -> Result<Self> {
        let d = self
            .delay
            .as_ref()
            .ok_or(Error::TooFewTimeBins(self.registry.tbins()))?;
        let model = d.model.with_delay(delay_fs);
        let mut c = self.clone();
        for (i, label) in &d.slots {
            c.elements[*i] = Element::delay_mix(&self.registry, label, &model)?;
        }
        c.delay.as_mut().expect("checked").model = model;
        Ok(c)
    }

    pub fn evolve(&self, state: &FockState) -> Result<FockState> {
        if state.registry().as_ref() != self.registry.as_ref() {
            return Err(Error::RegistryMismatch);
        }
        self.elements.iter().try_fold(state.clone(), |s, e| e.apply(&s))
    }

    pub fn prepare(&self, spec: &InputSpec) -> Result<Vec<Member>> {
        prepare(&self.registry, spec, &self.sources)
    }

    /// Evolves and heralds every member of the source ensemble.
    pub fn heralded(&self, spec: &InputSpec) -> Result<Vec<(PairConfig, Heralded)>> {
        self.prepare(spec)?
            .into_iter()
            .map(|m| Ok((m.config, herald(&self.evolve(&m.state)?, &self.herald)?)))
            .collect()
    }

    /// Text form that [`Circuit::parse`] reads back exactly.
    pub fn dump(&self) -> String {
        let mut s = String::from("format: 1\ncircuit\n");
        s.push_str(&format!("registry {}\n", self.registry.header()));
        match self.sources {
            SourceModel::Ideal => s.push_str("sources ideal\n"),
            SourceModel::Spdc { epsilon } => {
                s.push_str(&format!("sources spdc epsilon={}\n", epsilon.value()))
            }
        }
        let [o1, o2] = self.herald.outputs();
        s.push_str(&format!(
            "herald outputs={o1},{o2} threshold_inference={}\n",
            self.herald.threshold_inference()
        ));
        for d in self.herald.detectors() {
            s.push_str(&format!(
                "detector {} angle={} outcome={} kind={}\n",
                d.label,
                d.angle_deg,
                d.outcome,
                d.kind.as_str()
            ));
        }
        s.push_str(&format!("analysis {} {}\n", self.analysis[0], self.analysis[1]));
        if let Some(d) = &self.delay {
            let slots: Vec<String> = d.slots.iter().map(|(i, l)| format!("{i}:{l}")).collect();
            s.push_str(&format!(
                "distinguishability pump_fs={} coherence_fs={} delay_fs={} slots={}\n",
                d.model.pump_duration_fs,
                d.model.coherence_time_fs,
                d.model.delay_fs,
                slots.join(",")
            ));
        }
        for e in &self.elements {
            s.push_str(&e.dump());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Circuit> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |i: usize, m: String| Error::Parse {
            line: i + 1,
            message: m,
        };
        if lines.first().map(|l| l.trim()) != Some("format: 1") {
            return Err(err(0, "expected `format: 1`".into()));
        }
        if lines.get(1).map(|l| l.trim()) != Some("circuit") {
            return Err(err(1, "expected `circuit`".into()));
        }
        let mut registry = None;
        let mut sources = SourceModel::Ideal;
        let mut outputs = None;
        let mut inference = false;
        let mut detectors = Vec::new();
        let mut analysis = [0.0, 0.0];
        let mut delay = None;
        let mut elements = Vec::new();
        let mut i = 2;
        while i < lines.len() {
            let line = lines[i];
            if line.trim().is_empty() {
                i += 1;
                continue;
            }
            if line.starts_with("element ") {
                let (e, used) = Element::parse_dump(&lines[i..], i + 1)?;
                elements.push(e);
                i += used;
                continue;
            }
            let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
            let fields = key_values(rest);
            let get = |k: &str| {
                fields
                    .iter()
                    .find(|(kk, _)| *kk == k)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| err(i, format!("missing `{k}`")))
            };
            let num = |k: &str| -> Result<f64> {
                get(k)?.parse::<f64>().map_err(|_| err(i, format!("bad number for `{k}`")))
            };
            match head {
                "registry" => {
                    registry = Some(
                        ModeRegistry::parse_header(rest).map_err(|e| err(i, e.to_string()))?,
                    )
                }
                "sources" => {
                    sources = match rest.split_whitespace().next() {
                        Some("ideal") => SourceModel::Ideal,
                        Some("spdc") => SourceModel::Spdc {
                            epsilon: PairAmplitude::new(num("epsilon")?)?,
                        },
                        _ => return Err(err(i, "unknown source model".into())),
                    }
                }
                "herald" => {
                    let o: Vec<String> = get("outputs")?.split(',').map(str::to_string).collect();
                    if o.len() != 2 {
                        return Err(err(i, "need two outputs".into()));
                    }
                    outputs = Some([o[0].clone(), o[1].clone()]);
                    inference = get("threshold_inference")? == "true";
                }
                "detector" => {
                    let label = rest.split_whitespace().next().unwrap_or_default();
                    let outcome = match get("outcome")? {
                        "H" => Polarization::H,
                        "V" => Polarization::V,
                        o => return Err(err(i, format!("bad outcome `{o}`"))),
                    };
                    detectors.push(HeraldDetector::new(
                        label,
                        num("angle")?,
                        outcome,
                        DetectorKind::parse(get("kind")?)?,
                    ));
                }
                "analysis" => {
                    let v: Vec<f64> = rest
                        .split_whitespace()
                        .map(|x| x.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(i, "bad analysis angle".into()))?;
                    if v.len() != 2 {
                        return Err(err(i, "need two analysis angles".into()));
                    }
                    analysis = [v[0], v[1]];
                }
                "distinguishability" => {
                    let model = DistinguishabilityModel::new(
                        num("pump_fs")?,
                        num("coherence_fs")?,
                        num("delay_fs")?,
                    )?;
                    let slots = get("slots")?
                        .split(',')
                        .map(|s| {
                            let (n, l) = s.split_once(':')?;
                            Some((n.parse::<usize>().ok()?, l.to_string()))
                        })
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| err(i, "bad slot list".into()))?;
                    delay = Some(DelaySlots { model, slots });
                }
                _ => return Err(err(i, format!("unknown line `{head}`"))),
            }
            i += 1;
        }
        let registry = Arc::new(registry.ok_or_else(|| err(0, "missing registry".into()))?);
        let outputs = outputs.ok_or_else(|| err(0, "missing herald".into()))?;
        let rule = HeraldRule::new(detectors, [&outputs[0], &outputs[1]], inference)?;
        let mut c = Circuit::new(registry, rule)
            .with_analysis(analysis)
            .with_sources(sources);
        for e in elements {
            c.push(e)?;
        }
        if let Some(d) = &delay {
            if d.slots.iter().any(|(n, _)| *n >= c.elements.len()) {
                return Err(err(0, "delay slot past the element list".into()));
            }
        }
        c.delay = delay;
        Ok(c)
    }
}

fn key_values(s: &str) -> Vec<(&str, &str)> {
    s.split_whitespace().filter_map(|f| f.split_once('=')).collect()
}
