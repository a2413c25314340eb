//! Detectors, heralding, qubit read-out and the derived gate diagnostics.
//!
//! Heralding rotates each herald label by minus its analysis angle, so the
//! required outcome is always read in the H/V frame afterwards, then keeps
//! the Fock terms that match the rule. Exact projection demands one and only
//! one photon on every herald and output label. With `threshold_inference`
//! the rule instead mimics the lab's four-fold coincidence: a click (≥ 1
//! photon) in the required port of each herald and anywhere on each output.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::circuit::Circuit;
use crate::elements::{Element, ElementKind};
use crate::error::{Error, Result};
use crate::fock::{FockState, ModeRegistry, Occupation, Polarization, C64};
use crate::sources::{InputSpec, PairConfig};

/// Accepted deviation from unit norm for qubit-level inputs.
pub const NORM_TOL: f64 = 1e-9;

/// Amplitude tolerance used when matching conditional maps to CNOT.
pub const MAP_TOL: f64 = 1e-10;

/// Labels that may carry herald detectors.
pub const HERALD_LABELS: [&str; 2] = ["b3", "b4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Threshold,
    NumberResolving,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Threshold => "threshold",
            DetectorKind::NumberResolving => "number_resolving",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(DetectorKind::Threshold),
            "number_resolving" => Ok(DetectorKind::NumberResolving),
            _ => Err(Error::InvalidHerald(format!("unknown detector kind `{s}`"))),
        }
    }
}

/// Polarization analysis plus detector on one herald label.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldDetector {
    pub label: String,
    /// Linear polarization (degrees) read as the H-like outcome.
    pub angle_deg: f64,
    pub outcome: Polarization,
    pub kind: DetectorKind,
}

impl HeraldDetector {
    pub fn new(label: &str, angle_deg: f64, outcome: Polarization, kind: DetectorKind) -> Self {
        HeraldDetector {
            label: label.to_string(),
            angle_deg,
            outcome,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeraldRule {
    detectors: Vec<HeraldDetector>,
    outputs: [String; 2],
    threshold_inference: bool,
}

impl HeraldRule {
    pub fn new(
        detectors: Vec<HeraldDetector>,
        outputs: [&str; 2],
        threshold_inference: bool,
    ) -> Result<Self> {
        if detectors.is_empty() {
            return Err(Error::InvalidHerald("no herald detectors".into()));
        }
        for (i, d) in detectors.iter().enumerate() {
            if !HERALD_LABELS.contains(&d.label.as_str()) {
                return Err(Error::InvalidHerald(format!(
                    "herald label `{}` not in {{b3, b4}}",
                    d.label
                )));
            }
            if detectors[..i].iter().any(|e| e.label == d.label) {
                return Err(Error::InvalidHerald(format!("label `{}` heralded twice", d.label)));
            }
            if !d.angle_deg.is_finite() {
                return Err(Error::InvalidHerald("analysis angle must be finite".into()));
            }
        }
        if outputs[0] == outputs[1] {
            return Err(Error::InvalidHerald("output labels must differ".into()));
        }
        if let Some(o) = outputs.iter().find(|o| HERALD_LABELS.contains(o)) {
            return Err(Error::InvalidHerald(format!("output `{o}` overlaps the herald labels")));
        }
        Ok(HeraldRule {
            detectors,
            outputs: [outputs[0].to_string(), outputs[1].to_string()],
            threshold_inference,
        })
    }

    /// One H-polarized photon on each of b3 and b4, outputs on b1/b2.
    pub fn passive() -> Self {
        HeraldRule {
            detectors: HERALD_LABELS
                .iter()
                .map(|l| HeraldDetector::new(l, 0.0, Polarization::H, DetectorKind::Threshold))
                .collect(),
            outputs: ["b1".into(), "b2".into()],
            threshold_inference: false,
        }
    }

    pub fn detectors(&self) -> &[HeraldDetector] {
        &self.detectors
    }

    pub fn outputs(&self) -> [&str; 2] {
        [&self.outputs[0], &self.outputs[1]]
    }

    pub fn threshold_inference(&self) -> bool {
        self.threshold_inference
    }

    pub fn with_threshold_inference(mut self, on: bool) -> Self {
        self.threshold_inference = on;
        self
    }

    /// Same detectors with the required outcomes replaced, in detector order.
    pub fn with_outcomes(&self, outcomes: &[Polarization]) -> Result<Self> {
        if outcomes.len() != self.detectors.len() {
            return Err(Error::InvalidHerald(format!(
                "{} outcomes for {} detectors",
                outcomes.len(),
                self.detectors.len()
            )));
        }
        let mut r = self.clone();
        for (d, &o) in r.detectors.iter_mut().zip(outcomes) {
            d.outcome = o;
        }
        Ok(r)
    }

    pub fn outcomes(&self) -> Vec<Polarization> {
        self.detectors.iter().map(|d| d.outcome).collect()
    }

    fn check_registry(&self, reg: &ModeRegistry) -> Result<()> {
        for l in self.detectors.iter().map(|d| d.label.as_str()).chain(self.outputs()) {
            if !reg.contains_label(l) {
                return Err(Error::InvalidHerald(format!("label `{l}` not in registry")));
            }
        }
        Ok(())
    }
}

/// Photons per polarization on one label, summed over temporal bins.
fn port_counts(reg: &ModeRegistry, occ: &Occupation, label: &str) -> Result<[usize; 2]> {
    let mut out = [0usize; 2];
    for p in Polarization::ALL {
        for t in 0..reg.tbins() {
            out[p.index()] += occ.get(reg.index_of(label, p, t)?) as usize;
        }
    }
    Ok(out)
}

/// Rotates `label` so that linear polarization `angle_deg` reads as H.
pub fn analyze(state: &FockState, label: &str, angle_deg: f64) -> Result<FockState> {
    if angle_deg == 0.0 {
        return Ok(state.clone());
    }
    Element::rotate_pol(state.registry(), label, -angle_deg)?.apply(state)
}

#[derive(Debug, Clone)]
pub struct Heralded {
    /// Conditional state on the full registry, unit norm, tracking 1.
    pub state: FockState,
    pub probability: f64,
}

/// Post-selects `state` on `rule`.
pub fn herald(state: &FockState, rule: &HeraldRule) -> Result<Heralded> {
    let reg = state.registry().clone();
    rule.check_registry(&reg)?;
    let mut s = state.clone();
    for d in &rule.detectors {
        s = analyze(&s, &d.label, d.angle_deg)?;
    }
    let mut kept = BTreeMap::new();
    'terms: for (occ, amp) in s.terms() {
        for d in &rule.detectors {
            let c = port_counts(&reg, occ, &d.label)?;
            let hit = c[d.outcome.index()];
            let ok = if rule.threshold_inference {
                match d.kind {
                    DetectorKind::Threshold => hit >= 1,
                    DetectorKind::NumberResolving => hit == 1,
                }
            } else {
                hit == 1 && c[0] + c[1] == 1
            };
            if !ok {
                continue 'terms;
            }
        }
        for o in rule.outputs() {
            let c = port_counts(&reg, occ, o)?;
            let n = c[0] + c[1];
            if !(if rule.threshold_inference { n >= 1 } else { n == 1 }) {
                continue 'terms;
            }
        }
        kept.insert(occ.clone(), *amp);
    }
    let raw = FockState::from_map_unchecked(&reg, kept, 1.0);
    let w = raw.norm_sqr();
    if w == 0.0 {
        return Ok(Heralded {
            state: FockState::zero(&reg).with_norm_tracking(0.0),
            probability: 0.0,
        });
    }
    Ok(Heralded {
        state: raw.scaled(C64::new(1.0 / w.sqrt(), 0.0)),
        probability: w * state.norm_tracking(),
    })
}

/// Probability of every photon-count pattern on `labels`, each analyzed at
/// its angle. Keys list (H count, V count) per label in the given order.
pub fn detection_patterns(
    state: &FockState,
    labels: &[(&str, f64)],
) -> Result<BTreeMap<Vec<[usize; 2]>, f64>> {
    let reg = state.registry().clone();
    let mut s = state.clone();
    for &(l, a) in labels {
        s = analyze(&s, l, a)?;
    }
    let mut out = BTreeMap::new();
    for (occ, amp) in s.terms() {
        let key = labels
            .iter()
            .map(|&(l, _)| port_counts(&reg, occ, l))
            .collect::<Result<Vec<_>>>()?;
        *out.entry(key).or_insert(0.0) += amp.norm_sqr() * s.norm_tracking();
    }
    Ok(out)
}

/// Outcome weights on the two outputs analyzed at `angles`, ordered
/// (H-like, H-like), (H-like, V-like), (V-like, H-like), (V-like, V-like).
/// A term counts only if each output fires exactly one of its two ports;
/// under exact heralding that is every term.
pub fn output_weights(state: &FockState, outputs: [&str; 2], angles: [f64; 2]) -> Result<[f64; 4]> {
    let reg = state.registry().clone();
    let s = analyze(&analyze(state, outputs[0], angles[0])?, outputs[1], angles[1])?;
    let mut w = [0.0; 4];
    'terms: for (occ, amp) in s.terms() {
        let mut idx = 0;
        for o in outputs {
            let c = port_counts(&reg, occ, o)?;
            let bit = match (c[0] > 0, c[1] > 0) {
                (true, false) => 0,
                (false, true) => 1,
                _ => continue 'terms,
            };
            idx = 2 * idx + bit;
        }
        w[idx] += amp.norm_sqr() * s.norm_tracking();
    }
    Ok(w)
}

/// Groups terms of `state` by everything except the polarizations of the
/// single photon on each output. Errors unless each output holds exactly
/// one photon in every term.
fn qubit_blocks(state: &FockState, outputs: [&str; 2]) -> Result<BTreeMap<Vec<u8>, [C64; 4]>> {
    let reg = state.registry().clone();
    let out_modes = [reg.label_modes(outputs[0])?, reg.label_modes(outputs[1])?];
    let mut blocks: BTreeMap<Vec<u8>, [C64; 4]> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let mut env = occ.counts().to_vec();
        let mut idx = 0;
        let mut tags = Vec::with_capacity(2);
        for modes in &out_modes {
            if occ.count_in(modes) != 1 {
                return Err(Error::NotQubitState(format!(
                    "term {occ} does not hold one photon per output"
                )));
            }
            let m = *modes.iter().find(|&&m| occ.get(m) == 1).expect("one photon");
            let mode = reg.mode(m);
            idx = 2 * idx + mode.pol.index();
            tags.push(mode.tbin as u8);
            env[m] = 0;
        }
        env.extend(tags);
        blocks.entry(env).or_insert([C64::default(); 4])[idx] += amp;
    }
    Ok(blocks)
}

/// Pure two-qubit amplitudes (HH, HV, VH, VV) of the outputs. Fails if the
/// outputs are entangled with anything else in the state.
pub fn two_qubit_state(state: &FockState, outputs: [&str; 2]) -> Result<[C64; 4]> {
    let blocks = qubit_blocks(state, outputs)?;
    let mut nonzero = blocks.into_values().filter(|b| b.iter().any(|a| a.norm() > 0.0));
    let first = nonzero.next().unwrap_or([C64::default(); 4]);
    if nonzero.next().is_some() {
        return Err(Error::NotQubitState(
            "outputs are correlated with other degrees of freedom".into(),
        ));
    }
    Ok(first)
}

/// Reduced 4×4 density matrix of the outputs, tracing out temporal bins and
/// every other label.
pub fn two_qubit_density(state: &FockState, outputs: [&str; 2]) -> Result<[[C64; 4]; 4]> {
    let mut rho = [[C64::default(); 4]; 4];
    for b in qubit_blocks(state, outputs)?.values() {
        for i in 0..4 {
            for j in 0..4 {
                rho[i][j] += b[i] * b[j].conj();
            }
        }
    }
    Ok(rho)
}

fn qnorm(a: &[C64; 4]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

fn qinner(a: &[C64; 4], b: &[C64; 4]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `|⟨target|out⟩|²` for unit-norm two-qubit states.
pub fn fidelity(out: &[C64; 4], target: &[C64; 4]) -> Result<f64> {
    for s in [out, target] {
        let n = qnorm(s);
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NonNormalizedState(n));
        }
    }
    Ok(qinner(target, out).norm_sqr())
}

/// `⟨target|ρ|target⟩` for a unit-trace density matrix.
pub fn fidelity_mixed(rho: &[[C64; 4]; 4], target: &[C64; 4]) -> Result<f64> {
    let tr: f64 = (0..4).map(|i| rho[i][i].re).sum();
    if (tr - 1.0).abs() > NORM_TOL {
        return Err(Error::NonNormalizedState(tr));
    }
    let n = qnorm(target);
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NonNormalizedState(n));
    }
    let mut f = C64::default();
    for i in 0..4 {
        for j in 0..4 {
            f += target[i].conj() * rho[i][j] * target[j];
        }
    }
    Ok(f.re)
}

/// Largest amplitude difference between `a` and `b` after the global phase
/// of `a` is chosen to best match `b`.
pub fn phase_aligned_distance(a: &[C64], b: &[C64]) -> f64 {
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let ph = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x * ph - y).norm())
        .fold(0.0, f64::max)
}

pub fn equal_up_to_phase(a: &[C64], b: &[C64], tol: f64) -> bool {
    a.len() == b.len() && phase_aligned_distance(a, b) <= tol
}

/// CNOT image of basis state `i` (control is the high bit).
pub fn cnot_index(i: usize) -> usize {
    if i >= 2 {
        i ^ 1
    } else {
        i
    }
}

pub fn cnot_apply(a: &[C64; 4]) -> [C64; 4] {
    let mut out = [C64::default(); 4];
    for (i, x) in a.iter().enumerate() {
        out[cnot_index(i)] = *x;
    }
    out
}

/// Corrections available to the feed-forward stage, realized by wave plates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Z,
    /// X·Z, i.e. Z first.
    XZ,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Z, Pauli::XZ];

    pub fn matrix(self) -> [[C64; 2]; 2] {
        let (o, z) = (C64::new(1.0, 0.0), C64::default());
        match self {
            Pauli::I => [[o, z], [z, o]],
            Pauli::X => [[z, o], [o, z]],
            Pauli::Z => [[o, z], [z, -o]],
            Pauli::XZ => [[z, -o], [o, z]],
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Z => "Z",
            Pauli::XZ => "XZ",
        }
    }

    /// Wave-plate element on `label`: X is a HWP at 45°, Z a HWP at 0°, XZ a
    /// 90° rotation.
    pub fn element(self, reg: &ModeRegistry, label: &str) -> Result<Element> {
        let e = match self {
            Pauli::I => Element::polarization(reg, label, self.matrix(), ElementKind::Unitary, "id")?,
            Pauli::X => Element::hwp(reg, label, 45.0)?,
            Pauli::Z => Element::hwp(reg, label, 0.0)?,
            Pauli::XZ => Element::rotate_pol(reg, label, 90.0)?,
        };
        Ok(e)
    }

    fn apply_pair(c: Pauli, t: Pauli, m: &[[C64; 4]; 4]) -> [[C64; 4]; 4] {
        let (pc, pt) = (c.matrix(), t.matrix());
        let mut out = [[C64::default(); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let kron = pc[i >> 1][j >> 1] * pt[i & 1][j & 1];
                if kron == C64::default() {
                    continue;
                }
                for k in 0..4 {
                    out[i][k] += kron * m[j][k];
                }
            }
        }
        out
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedForwardEntry {
    pub control: Pauli,
    pub target: Pauli,
    /// Herald probability of this outcome, averaged over basis inputs.
    pub probability: f64,
    /// Largest per-amplitude deviation of the corrected map from CNOT.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardTable {
    entries: BTreeMap<Vec<Polarization>, FeedForwardEntry>,
}

impl FeedForwardTable {
    pub fn entries(&self) -> impl Iterator<Item = (&[Polarization], &FeedForwardEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn correction(&self, outcome: &[Polarization]) -> Option<&FeedForwardEntry> {
        self.entries.get(outcome)
    }

    pub fn total_success_probability(&self) -> f64 {
        self.entries.values().map(|e| e.probability).sum()
    }
}

/// Every assignment of H/V outcomes to `n` herald detectors.
pub fn herald_outcomes(n: usize) -> Vec<Vec<Polarization>> {
    (0..1usize << n)
        .map(|bits| {
            (0..n)
                .map(|k| Polarization::from_index((bits >> (n - 1 - k)) & 1))
                .collect()
        })
        .collect()
}

/// Unnormalized conditional map `M[out][in]` of the circuit with ideal
/// sources, for one herald outcome.
pub fn conditional_map(circuit: &Circuit, outcome: &[Polarization]) -> Result<[[C64; 4]; 4]> {
    let rule = circuit.herald().with_outcomes(outcome)?;
    let mut m = [[C64::default(); 4]; 4];
    for (j, (c, t)) in basis_pairs().into_iter().enumerate() {
        let input = crate::sources::ideal_initial_state(
            circuit.registry(),
            &InputSpec::computational(c, t),
        )?;
        let h = herald(&circuit.evolve(&input)?, &rule)?;
        if h.probability == 0.0 {
            continue;
        }
        let col = two_qubit_state(&h.state, rule.outputs())?;
        let scale = h.probability.sqrt();
        for i in 0..4 {
            m[i][j] = col[i] * scale;
        }
    }
    Ok(m)
}

fn basis_pairs() -> [(Polarization, Polarization); 4] {
    use Polarization::{H, V};
    [(H, H), (H, V), (V, H), (V, V)]
}

fn cnot_residual(m: &[[C64; 4]; 4]) -> Option<f64> {
    let c = m[0][0];
    if c.norm() < MAP_TOL {
        return None;
    }
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == cnot_index(j) { 1.0 } else { 0.0 };
            worst = worst.max((m[i][j] / c - want).norm());
        }
    }
    Some(worst)
}

/// Brute-force search for the Pauli pair that turns each herald outcome's
/// conditional map into CNOT (up to a global factor).
pub fn derive_feed_forward(circuit: &Circuit) -> Result<FeedForwardTable> {
    let mut entries = BTreeMap::new();
    for outcome in herald_outcomes(circuit.herald().detectors().len()) {
        let m = conditional_map(circuit, &outcome)?;
        let probability = m.iter().flatten().map(|a| a.norm_sqr()).sum::<f64>() / 4.0;
        let mut found = None;
        'search: for c in Pauli::ALL {
            for t in Pauli::ALL {
                let corrected = Pauli::apply_pair(c, t, &m);
                if let Some(r) = cnot_residual(&corrected) {
                    if r <= MAP_TOL {
                        found = Some(FeedForwardEntry {
                            control: c,
                            target: t,
                            probability,
                            residual: r,
                        });
                        break 'search;
                    }
                }
            }
        }
        let name: String = outcome.iter().map(|p| p.symbol()).collect();
        let entry = found.ok_or(Error::NoFeedForward(name))?;
        entries.insert(outcome, entry);
    }
    Ok(FeedForwardTable { entries })
}

/// Applies the table's wave plates to a heralded state.
pub fn apply_correction(
    state: &FockState,
    outputs: [&str; 2],
    entry: &FeedForwardEntry,
) -> Result<FockState> {
    let reg = state.registry().clone();
    let s = entry.control.element(&reg, outputs[0])?.apply(state)?;
    entry.target.element(&reg, outputs[1])?.apply(&s)
}

/// Names of the two outcomes of an analysis at `angle_deg`.
pub fn basis_symbols(angle_deg: f64) -> [String; 2] {
    let a = angle_deg.rem_euclid(180.0);
    if a == 0.0 {
        ["H".into(), "V".into()]
    } else if a == 45.0 {
        ["+".into(), "-".into()]
    } else {
        [format!("{a}"), format!("{}", (a + 90.0).rem_euclid(180.0))]
    }
}

/// Conditional output statistics for a list of inputs (rows) over the
/// output outcomes in the analysis bases (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceTable {
    pub inputs: Vec<String>,
    pub columns: [String; 4],
    pub rows: Vec<[f64; 4]>,
    /// Herald probability per row, summed over the source ensemble.
    pub herald_probabilities: Vec<f64>,
}

impl CoincidenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("input,{}\n", self.columns.join(","));
        for (name, row) in self.inputs.iter().zip(&self.rows) {
            s.push_str(&csv_cell(name));
            for p in row {
                s.push(',');
                s.push_str(&sig12(*p));
            }
            s.push('\n');
        }
        s
    }
}

/// Quotes a CSV field when it holds a delimiter or quote.
pub fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// 12 significant digits, shortest form; scientific outside [1e-4, 1e12).
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let v: f64 = format!("{x:.11e}").parse().expect("formatted float");
    if (1e-4..1e12).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Herald-weighted output weights of one input, summed over the source
/// ensemble and broken down by pair configuration.
pub fn output_weights_by_config(
    circuit: &Circuit,
    spec: &InputSpec,
    angles: [f64; 2],
) -> Result<Vec<(PairConfig, f64, [f64; 4])>> {
    let outputs = circuit.herald().outputs();
    circuit
        .heralded(spec)?
        .into_iter()
        .map(|(cfg, h)| {
            let w = if h.probability > 0.0 {
                output_weights(&h.state, outputs, angles)?.map(|x| x * h.probability)
            } else {
                [0.0; 4]
            };
            Ok((cfg, h.probability, w))
        })
        .collect()
}

pub fn coincidence_table(circuit: &Circuit, inputs: &[InputSpec]) -> Result<CoincidenceTable> {
    let angles = circuit.analysis();
    let rows = inputs
        .par_iter()
        .map(|spec| {
            let parts = output_weights_by_config(circuit, spec, angles)?;
            let mut w = [0.0; 4];
            let mut p = 0.0;
            for (_, prob, pw) in parts {
                p += prob;
                for k in 0..4 {
                    w[k] += pw[k];
                }
            }
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                w.iter_mut().for_each(|x| *x /= total);
            }
            Ok((w, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let [b0, b1] = [basis_symbols(angles[0]), basis_symbols(angles[1])];
    let columns = [
        format!("{}{}", b0[0], b1[0]),
        format!("{}{}", b0[0], b1[1]),
        format!("{}{}", b0[1], b1[0]),
        format!("{}{}", b0[1], b1[1]),
    ];
    Ok(CoincidenceTable {
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        columns,
        rows: rows.iter().map(|r| r.0).collect(),
        herald_probabilities: rows.iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint {
    pub delay_fs: f64,
    pub overlap: f64,
    /// Branch probability of the (+, +) outcome.
    pub desired: f64,
    /// Branch probability of the (+, −) outcome.
    pub spurious: f64,
    /// `(desired − spurious) / (desired + spurious)`.
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomScan {
    pub points: Vec<HomPoint>,
    /// `(max − min) / (max + min)` of the spurious rate over the scan.
    pub dip_visibility: f64,
}

impl HomScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delay_fs,overlap,desired,spurious,visibility\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                sig12(p.delay_fs),
                sig12(p.overlap),
                sig12(p.desired),
                sig12(p.spurious),
                sig12(p.visibility)
            ));
        }
        s
    }
}

/// Delay scan of the entangler: input |+⟩|H⟩, both outputs analyzed at
/// 45°, comparing the (+, −) coincidences against (+, +).
pub fn hom_scan(circuit: &Circuit, delays: &[f64]) -> Result<HomScan> {
    if circuit.registry().tbins() < 2 {
        return Err(Error::TooFewTimeBins(circuit.registry().tbins()));
    }
    let spec = InputSpec::from_tokens("+H")?;
    let points = delays
        .par_iter()
        .map(|&d| {
            let c = circuit.with_delay(d)?;
            let mut w = [0.0; 4];
            for (_, _, pw) in output_weights_by_config(&c, &spec, [45.0, 45.0])? {
                for k in 0..4 {
                    w[k] += pw[k];
                }
            }
            let (desired, spurious) = (w[0], w[1]);
            let visibility = if desired + spurious > 0.0 {
                (desired - spurious) / (desired + spurious)
            } else {
                0.0
            };
            Ok(HomPoint {
                delay_fs: d,
                overlap: c.overlap().unwrap_or(1.0),
                desired,
                spurious,
                visibility,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.spurious), hi.max(p.spurious))
        });
    let dip_visibility = if hi + lo > 0.0 { (hi - lo) / (hi + lo) } else { 0.0 };
    Ok(HomScan {
        points,
        dip_visibility,
    })
}
