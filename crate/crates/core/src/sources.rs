//! Initial states: the φ⁺ ancilla pair, two-qubit inputs, and perturbative
//! SPDC emission up to two pairs.
//!
//! Emission weights are perturbative and relative to vacuum: one pair has
//! weight ε², two pairs ε⁴. The two-pair term is `(P†)²|0⟩` normalized,
//! where `P† = (a†_{xH} a†_{yH} + a†_{xV} a†_{yV})/√2`, which puts equal
//! amplitude 1/√3 on |2H,2H⟩, |HV,HV⟩ and |2V,2V⟩.

use std::fmt;
use std::sync::Arc;

use crate::elements::Element;
use crate::error::{Error, Result};
use crate::fock::{FockState, ModeRegistry, PolState, Polarization, C64};

/// Largest pair amplitude for which the two-pair truncation stays accurate.
pub const MAX_EPSILON: f64 = 0.3;

const NORM_TOL: f64 = 1e-12;

/// Per-pass pair-emission amplitude ε.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PairAmplitude(f64);

impl PairAmplitude {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && (0.0..=MAX_EPSILON).contains(&epsilon) {
            Ok(PairAmplitude(epsilon))
        } else {
            Err(Error::EpsilonOutOfRange(epsilon))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Relative weight of emitting exactly `pairs` pairs in one pass.
    pub fn pair_weight(self, pairs: usize) -> f64 {
        self.0.powi(2 * pairs as i32)
    }
}

/// General two-qubit input α₁|HH⟩ + α₂|HV⟩ + α₃|VH⟩ + α₄|VV⟩ on (a1, a2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSpec {
    amps: [C64; 4],
    label: Option<[char; 2]>,
}

impl InputSpec {
    pub fn new(amps: [C64; 4]) -> Result<Self> {
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NonNormalizedInput(n));
        }
        Ok(InputSpec { amps, label: None })
    }

    pub fn real(amps: [f64; 4]) -> Result<Self> {
        Self::new(amps.map(|a| C64::new(a, 0.0)))
    }

    pub fn product(control: PolState, target: PolState) -> Result<Self> {
        let a = [
            control.h * target.h,
            control.h * target.v,
            control.v * target.h,
            control.v * target.v,
        ];
        Self::new(a)
    }

    /// Shorthand such as `HH`, `+H`, `RL`: one token per qubit from
    /// {H, V, +, -, R, L}.
    pub fn from_tokens(tokens: &str) -> Result<Self> {
        let chars: Vec<char> = tokens.trim().chars().collect();
        if chars.len() != 2 {
            return Err(Error::InputParse(tokens.to_string()));
        }
        let pol = |c: char| match c {
            'H' | 'h' => Ok(PolState::horizontal()),
            'V' | 'v' => Ok(PolState::vertical()),
            '+' | 'P' => Ok(PolState::plus()),
            '-' | 'M' => Ok(PolState::minus()),
            'R' | 'r' => Ok(PolState::right()),
            'L' | 'l' => Ok(PolState::left()),
            _ => Err(Error::InputParse(tokens.to_string())),
        };
        let mut spec = Self::product(pol(chars[0])?, pol(chars[1])?)?;
        spec.label = Some([canonical_token(chars[0]), canonical_token(chars[1])]);
        Ok(spec)
    }

    /// Either a two-token shorthand or four complex amplitudes written as
    /// `re,im; re,im; re,im; re,im` (a bare real is also accepted).
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.chars().count() == 2 && !t.contains(';') {
            return Self::from_tokens(t);
        }
        let parts: Vec<&str> = t.split(';').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InputParse(text.to_string()));
        }
        let mut amps = [C64::default(); 4];
        for (slot, p) in amps.iter_mut().zip(&parts) {
            let bad = || Error::InputParse(text.to_string());
            *slot = match p.split_once(',') {
                Some((re, im)) => C64::new(
                    re.trim().parse().map_err(|_| bad())?,
                    im.trim().parse().map_err(|_| bad())?,
                ),
                None => C64::new(p.parse().map_err(|_| bad())?, 0.0),
            };
        }
        Self::new(amps)
    }

    pub fn computational(control: Polarization, target: Polarization) -> Self {
        let mut amps = [C64::default(); 4];
        amps[control.index() * 2 + target.index()] = C64::new(1.0, 0.0);
        InputSpec {
            amps,
            label: Some([control.symbol(), target.symbol()]),
        }
    }

    pub fn amplitudes(&self) -> [C64; 4] {
        self.amps
    }

    pub fn amplitude(&self, control: Polarization, target: Polarization) -> C64 {
        self.amps[control.index() * 2 + target.index()]
    }

    /// Factorizes into (control, target) single-photon states when the
    /// input is a product state.
    pub fn as_product(&self) -> Option<(PolState, PolState)> {
        let [a, b, c, d] = self.amps;
        if (a * d - b * c).norm() > 1e-9 {
            return None;
        }
        let row0 = (a, b);
        let row1 = (c, d);
        let n0 = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let n1 = (c.norm_sqr() + d.norm_sqr()).sqrt();
        let (rh, rv) = if n0 >= n1 {
            (row0.0 / n0, row0.1 / n0)
        } else {
            (row1.0 / n1, row1.1 / n1)
        };
        let target = PolState::new(rh, rv);
        let control = PolState::new(
            rh.conj() * row0.0 + rv.conj() * row0.1,
            rh.conj() * row1.0 + rv.conj() * row1.1,
        );
        Some((control, target))
    }
}

fn canonical_token(c: char) -> char {
    match c {
        'h' => 'H',
        'v' => 'V',
        'P' => '+',
        'M' => '-',
        'r' => 'R',
        'l' => 'L',
        other => other,
    }
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some([c, t]) = self.label {
            return write!(f, "{c}{t}");
        }
        let parts: Vec<String> = self
            .amps
            .iter()
            .map(|a| format!("{},{}", a.re, a.im))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn idx(reg: &ModeRegistry, label: &str, pol: Polarization) -> Result<usize> {
    reg.index_of(label, pol, 0)
}

/// (|H⟩_x|H⟩_y + |V⟩_x|V⟩_y)/√2 on two spatial labels.
pub fn phi_plus(reg: &Arc<ModeRegistry>, x: &str, y: &str) -> Result<FockState> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    FockState::vacuum(reg).create(&[
        (C64::new(r, 0.0), vec![idx(reg, x, Polarization::H)?, idx(reg, y, Polarization::H)?]),
        (C64::new(r, 0.0), vec![idx(reg, x, Polarization::V)?, idx(reg, y, Polarization::V)?]),
    ])
}

/// The ancilla pair on a3, a4.
pub fn bell_phi_plus(reg: &Arc<ModeRegistry>) -> Result<FockState> {
    phi_plus(reg, "a3", "a4")
}

/// Deterministic single photons on a1 (control) and a2 (target).
pub fn product_input(reg: &Arc<ModeRegistry>, spec: &InputSpec) -> Result<FockState> {
    let mut poly = Vec::with_capacity(4);
    for c in Polarization::ALL {
        for t in Polarization::ALL {
            let a = spec.amplitude(c, t);
            if a.norm() > 0.0 {
                poly.push((a, vec![idx(reg, "a1", c)?, idx(reg, "a2", t)?]));
            }
        }
    }
    FockState::vacuum(reg).create(&poly)
}

/// Normalized `n`-pair φ⁺ emission on (x, y); `n = 0` is the vacuum.
pub fn pair_term(reg: &Arc<ModeRegistry>, x: &str, y: &str, pairs: usize) -> Result<FockState> {
    let creation = [
        (
            C64::new(1.0, 0.0),
            vec![idx(reg, x, Polarization::H)?, idx(reg, y, Polarization::H)?],
        ),
        (
            C64::new(1.0, 0.0),
            vec![idx(reg, x, Polarization::V)?, idx(reg, y, Polarization::V)?],
        ),
    ];
    let mut s = FockState::vacuum(reg);
    for _ in 0..pairs {
        s = s.create(&creation)?;
    }
    Ok(s.normalized())
}

/// `|0⟩ + ε·φ⁺ + ε²·(two-pair)` truncated after `max_pairs`; not normalized.
pub fn spdc_emission(
    reg: &Arc<ModeRegistry>,
    labels: (&str, &str),
    epsilon: f64,
    max_pairs: usize,
) -> Result<FockState> {
    let eps = PairAmplitude::new(epsilon)?;
    if !(1..=2).contains(&max_pairs) {
        return Err(Error::InvalidPairCount(max_pairs));
    }
    let mut s = FockState::vacuum(reg);
    for n in 1..=max_pairs {
        let term = pair_term(reg, labels.0, labels.1, n)?;
        let amp = eps.value().powi(n as i32);
        s = FockState::superpose(C64::new(1.0, 0.0), &s, C64::new(amp, 0.0), &term)?;
    }
    Ok(s)
}

/// `pairs` SPDC pairs emitted into (a1, a2), filtered by H polarizers on
/// both arms, then rotated onto the two input qubits by wave plates. The
/// result carries `ε^{2·pairs} × (filter transmission)` in `norm_tracking`.
///
/// Filtering at H keeps the |HH⟩ part of every emitted pair, so the
/// transmission (1/2 for one pair, 1/3 for two) does not depend on the
/// requested input.
pub fn filtered_input_pairs(
    reg: &Arc<ModeRegistry>,
    spec: &InputSpec,
    epsilon: f64,
    pairs: usize,
) -> Result<FockState> {
    let eps = PairAmplitude::new(epsilon)?;
    let (control, target) = spec.as_product().ok_or(Error::NotProductInput)?;
    let weight = eps.pair_weight(pairs);
    if weight == 0.0 {
        return Ok(FockState::zero(reg).with_norm_tracking(0.0));
    }
    let emitted = pair_term(reg, "a1", "a2", pairs)?.with_norm_tracking(weight);
    let s = Element::polarizer(reg, "a1", 0.0)?.apply(&emitted)?;
    let s = Element::polarizer(reg, "a2", 0.0)?.apply(&s)?;
    let s = Element::prepare(reg, "a1", control)?.apply(&s)?;
    Element::prepare(reg, "a2", target)?.apply(&s)
}

/// The double-pair component of the polarizer-prepared input.
pub fn double_pair_input(
    reg: &Arc<ModeRegistry>,
    spec: &InputSpec,
    epsilon: f64,
) -> Result<FockState> {
    filtered_input_pairs(reg, spec, epsilon, 2)
}

/// Applies `pairs` normalized φ⁺ pair creations on (x, y) to an existing
/// state whose photons live on other modes.
pub fn add_pairs(state: &FockState, x: &str, y: &str, pairs: usize) -> Result<FockState> {
    let reg = state.registry();
    let creation = [
        (
            C64::new(1.0, 0.0),
            vec![idx(reg, x, Polarization::H)?, idx(reg, y, Polarization::H)?],
        ),
        (
            C64::new(1.0, 0.0),
            vec![idx(reg, x, Polarization::V)?, idx(reg, y, Polarization::V)?],
        ),
    ];
    // ‖(P†)^n|0⟩‖ with P† unnormalized: n!·√(n+1).
    let norm = crate::fock::factorial(pairs) * ((pairs + 1) as f64).sqrt();
    let mut s = state.clone();
    for _ in 0..pairs {
        s = s.create(&creation)?;
    }
    Ok(s.scaled(C64::new(1.0 / norm, 0.0)))
}

/// Deterministic input photons on a1/a2 plus the φ⁺ ancilla on a3/a4.
pub fn ideal_initial_state(reg: &Arc<ModeRegistry>, spec: &InputSpec) -> Result<FockState> {
    add_pairs(&product_input(reg, spec)?, "a3", "a4", 1)
}

/// How the four photons entering the gate are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    /// Deterministic single-photon inputs and a single ancilla pair.
    Ideal,
    /// Two SPDC passes with the same ε, truncated at two pairs per pass and
    /// at the registry's photon cutoff.
    Spdc { epsilon: PairAmplitude },
}

/// Pair numbers emitted by the input pass and the ancilla pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairConfig {
    pub input_pairs: usize,
    pub ancilla_pairs: usize,
}

impl PairConfig {
    pub const SIGNAL: PairConfig = PairConfig {
        input_pairs: 1,
        ancilla_pairs: 1,
    };

    pub fn photons(&self) -> usize {
        2 * (self.input_pairs + self.ancilla_pairs)
    }
}

impl fmt::Display for PairConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.input_pairs, self.ancilla_pairs)
    }
}

/// One component of the emitted ensemble; its `norm_tracking` is the
/// probability of this pair configuration times the filter transmission.
#[derive(Debug, Clone)]
pub struct Member {
    pub config: PairConfig,
    pub state: FockState,
}

/// State of a single SPDC pass configuration: `input_pairs` filtered pairs
/// on a1/a2 and `ancilla_pairs` φ⁺ pairs on a3/a4, weighted by the
/// normalized per-pass emission probabilities.
pub fn spdc_member(
    reg: &Arc<ModeRegistry>,
    spec: &InputSpec,
    epsilon: PairAmplitude,
    config: PairConfig,
) -> Result<FockState> {
    let z = 1.0 + epsilon.pair_weight(1) + epsilon.pair_weight(2);
    let input = if config.input_pairs == 0 {
        FockState::vacuum(reg)
    } else {
        filtered_input_pairs(reg, spec, epsilon.value(), config.input_pairs)?
    };
    let tracking = input.norm_tracking() * epsilon.pair_weight(config.ancilla_pairs) / (z * z);
    Ok(add_pairs(&input, "a3", "a4", config.ancilla_pairs)?.with_norm_tracking(tracking))
}

/// The incoherent ensemble of pair configurations that feeds the gate.
///
/// Different pair numbers from the two passes pick up different powers of
/// the relative pump phase, which is not stabilized, so they are mixed
/// rather than superposed.
pub fn prepare(reg: &Arc<ModeRegistry>, spec: &InputSpec, model: &SourceModel) -> Result<Vec<Member>> {
    match model {
        SourceModel::Ideal => Ok(vec![Member {
            config: PairConfig::SIGNAL,
            state: ideal_initial_state(reg, spec)?,
        }]),
        SourceModel::Spdc { epsilon } => {
            let mut out = Vec::new();
            for input_pairs in 0..=2 {
                for ancilla_pairs in 0..=2 {
                    let config = PairConfig {
                        input_pairs,
                        ancilla_pairs,
                    };
                    if config.photons() > reg.cutoff() {
                        continue;
                    }
                    out.push(Member {
                        config,
                        state: spdc_member(reg, spec, *epsilon, config)?,
                    });
                }
            }
            Ok(out)
        }
    }
}
