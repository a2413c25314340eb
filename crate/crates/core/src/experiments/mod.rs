//! The canonical gate network and the three studies run on it.
//!
//! Canonical element list, applied in order after the sources:
//!
//! | # | element      | labels                | angle  | role                                  |
//! |---|--------------|-----------------------|--------|---------------------------------------|
//! | 0 | `delay_mix`  | a3                    |        | only with a distinguishability model  |
//! | 1 | `delay_mix`  | a4                    |        | only with a distinguishability model  |
//! | 2 | `rotate_pol` | a2                    | −45°   | target enters the ± frame             |
//! | 3 | `rotate_pol` | a4                    | −45°   | ancilla photon enters the ± frame     |
//! | 4 | `pbs_hv`     | a1, a3 → b1, b3       |        | destructive parity check on control   |
//! | 5 | `pbs_hv`     | a2, a4 → b2, b4       |        | second PBS, acting in the ± frame     |
//! | 6 | `rotate_pol` | b2                    | +45°   | back to H/V on the target output      |
//! | 7 | `rotate_pol` | b4                    | +45°   | back to H/V on the b4 herald          |
//! | 8 | `rotate_pol` | b3                    | −45°   | b3 herald reads +45° as H             |
//!
//! Rows 3, 5 and 7 together are `pbs_45` on (a2, a4). With the herald
//! (b3 = H, b4 = H) the conditional map on (b1, b2) is exactly CNOT with
//! amplitude 1/4 per basis input; the other three herald outcomes need a
//! Pauli correction.

pub mod cli;
pub mod config;
pub mod report;

use std::sync::Arc;

pub use config::CircuitConfig;
pub use report::{ExperimentReport, Table};

use crate::circuit::Circuit;
use crate::elements::{DistinguishabilityModel, Element};
use crate::error::{Error, Result};
use crate::fock::{ModeRegistry, PolState, Polarization, C64, DEFAULT_CUTOFF, PRUNE_TOL};
use crate::measurement::{
    cnot_apply, coincidence_table, derive_feed_forward, fidelity_mixed, hom_scan,
    output_weights_by_config, two_qubit_density, MAP_TOL, NORM_TOL,
};
use crate::sources::{spdc_member, InputSpec, PairAmplitude, PairConfig, SourceModel};

/// Spatial labels of the gate, inputs first.
pub const LABELS: [&str; 8] = ["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4"];

/// Paths whose arrival time the translation stage shifts.
pub const DELAY_PATHS: [&str; 2] = ["a3", "a4"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    Rotate(&'static str, f64),
    PbsHv([&'static str; 4]),
}

/// Rows 2 to 8 of the table above.
pub const CANONICAL_STAGES: [Stage; 7] = [
    Stage::Rotate("a2", -45.0),
    Stage::Rotate("a4", -45.0),
    Stage::PbsHv(["a1", "a3", "b1", "b3"]),
    Stage::PbsHv(["a2", "a4", "b2", "b4"]),
    Stage::Rotate("b2", 45.0),
    Stage::Rotate("b4", 45.0),
    Stage::Rotate("b3", -45.0),
];

impl Stage {
    pub fn element(&self, reg: &ModeRegistry) -> Result<Element> {
        match *self {
            Stage::Rotate(l, a) => Element::rotate_pol(reg, l, a),
            Stage::PbsHv([i1, i2, o1, o2]) => Element::pbs_hv(reg, i1, i2, o1, o2),
        }
    }
}

pub fn canonical_registry(tbins: usize) -> Result<Arc<ModeRegistry>> {
    Ok(Arc::new(
        ModeRegistry::new(&LABELS, tbins)?.with_cutoff(DEFAULT_CUTOFF),
    ))
}

pub fn build_canonical_circuit(config: &CircuitConfig) -> Result<Circuit> {
    let tbins = if config.distinguishability.is_some() { 2 } else { 1 };
    let reg = canonical_registry(tbins)?;
    let mut c = Circuit::new(reg.clone(), config.herald.clone())
        .with_analysis(config.analysis)
        .with_sources(config.sources);
    if let Some(model) = config.distinguishability {
        for l in DELAY_PATHS {
            c.push_delay(l, model)?;
        }
    }
    for s in CANONICAL_STAGES {
        c.push(s.element(&reg)?)?;
    }
    Ok(c)
}

/// Delay (fs) at which the Gaussian overlap of `model` equals `v`.
pub fn delay_for_overlap(model: &DistinguishabilityModel, v: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::InvalidDistinguishability(format!(
            "overlap {v} outside (0, 1]"
        )));
    }
    Ok(model.sigma_fs() * (-2.0 * v.ln()).sqrt())
}

pub fn default_model() -> DistinguishabilityModel {
    DistinguishabilityModel {
        pump_duration_fs: config::DEFAULT_PUMP_FS,
        coherence_time_fs: config::DEFAULT_COHERENCE_FS,
        delay_fs: 0.0,
    }
}

pub fn truth_table_inputs() -> [InputSpec; 4] {
    use Polarization::{H, V};
    [
        InputSpec::computational(H, H),
        InputSpec::computational(H, V),
        InputSpec::computational(V, H),
        InputSpec::computational(V, V),
    ]
}

/// Outcome distribution of the ideal CNOT image of `spec` in the analysis
/// bases, in coincidence-table column order.
pub fn ideal_distribution(spec: &InputSpec, analysis: [f64; 2]) -> [f64; 4] {
    let out = cnot_apply(&spec.amplitudes());
    let basis = |a: f64| {
        let p = PolState::linear(a);
        [p, p.orthogonal()]
    };
    let (b1, b2) = (basis(analysis[0]), basis(analysis[1]));
    let mut d = [0.0; 4];
    for (k, dk) in d.iter_mut().enumerate() {
        let (x, y) = (b1[k >> 1], b2[k & 1]);
        let mut amp = C64::default();
        for (i, a) in out.iter().enumerate() {
            let (pc, pt) = (Polarization::from_index(i >> 1), Polarization::from_index(i & 1));
            amp += (x.amplitude(pc) * y.amplitude(pt)).conj() * a;
        }
        *dk = amp.norm_sqr();
    }
    d
}

pub fn run_truth_table(config: &CircuitConfig) -> Result<ExperimentReport> {
    let circuit = build_canonical_circuit(config)?;
    let inputs = truth_table_inputs();
    let table = coincidence_table(&circuit, &inputs)?;
    let mut report = ExperimentReport::new("truth-table", config.echo());
    let mut t = Table::new("coincidences", "input", table.columns.to_vec());
    for (name, row) in table.inputs.iter().zip(&table.rows) {
        t.push_numbers(name.clone(), row);
    }
    report.tables.push(t);
    for (i, spec) in inputs.iter().enumerate() {
        let ideal = ideal_distribution(spec, config.analysis);
        let f: f64 = table.rows[i].iter().zip(&ideal).map(|(a, b)| a * b).sum();
        report.scalar(&format!("logical_fidelity.{}", table.inputs[i]), f, NORM_TOL);
    }
    for (name, p) in table.inputs.iter().zip(&table.herald_probabilities) {
        report.scalar(&format!("herald_probability.{name}"), *p, PRUNE_TOL);
    }
    if let Some(v) = circuit.overlap() {
        report.scalar("overlap", v, 0.0);
    }
    Ok(report)
}

/// Everything the entangling run reports, in numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglerMetrics {
    pub herald_probability: f64,
    /// HH, HV, VH, VV.
    pub populations: [f64; 4],
    pub population_fidelity: f64,
    /// ⟨σx σx⟩ from the ± basis coincidences.
    pub pm_correlation: f64,
    /// Two-basis estimate `(population_fidelity + pm_correlation) / 2`.
    pub coherence_fidelity: f64,
    /// Exact ⟨Φ⁺|ρ|Φ⁺⟩; `None` under threshold inference.
    pub state_fidelity: Option<f64>,
}

fn phi_plus_qubits() -> [C64; 4] {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [h, C64::default(), C64::default(), h]
}

fn summed_weights(circuit: &Circuit, spec: &InputSpec, angles: [f64; 2]) -> Result<(f64, [f64; 4])> {
    let mut w = [0.0; 4];
    let mut p = 0.0;
    for (_, prob, pw) in output_weights_by_config(circuit, spec, angles)? {
        p += prob;
        for k in 0..4 {
            w[k] += pw[k];
        }
    }
    Ok((p, w))
}

pub fn entangler_metrics(circuit: &Circuit, spec: &InputSpec) -> Result<EntanglerMetrics> {
    let (herald_probability, w) = summed_weights(circuit, spec, [0.0, 0.0])?;
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Invariant("entangler never heralds".into()));
    }
    let populations = w.map(|x| x / total);
    let population_fidelity = populations[0] + populations[3];
    let (_, pm) = summed_weights(circuit, spec, [45.0, 45.0])?;
    let pm_total: f64 = pm.iter().sum();
    let pm_correlation = (pm[0] + pm[3] - pm[1] - pm[2]) / pm_total;
    let state_fidelity = if circuit.herald().threshold_inference() {
        None
    } else {
        let mut rho = [[C64::default(); 4]; 4];
        for (_, h) in circuit.heralded(spec)? {
            if h.probability == 0.0 {
                continue;
            }
            let r = two_qubit_density(&h.state, circuit.herald().outputs())?;
            for i in 0..4 {
                for j in 0..4 {
                    rho[i][j] += r[i][j] * (h.probability / herald_probability);
                }
            }
        }
        Some(fidelity_mixed(&rho, &phi_plus_qubits())?)
    };
    Ok(EntanglerMetrics {
        herald_probability,
        populations,
        population_fidelity,
        pm_correlation,
        coherence_fidelity: (population_fidelity + pm_correlation) / 2.0,
        state_fidelity,
    })
}

/// Symmetric delay grid of `points` values spanning ±`span` coherence times.
pub fn scan_delays(model: &DistinguishabilityModel, points: usize, span: f64) -> Vec<f64> {
    let reach = span * model.coherence_time_fs;
    if points < 2 {
        return vec![0.0];
    }
    (0..points)
        .map(|k| -reach + 2.0 * reach * k as f64 / (points - 1) as f64)
        .collect()
}

fn push_hom(report: &mut ExperimentReport, circuit: &Circuit, delays: &[f64]) -> Result<()> {
    let scan = hom_scan(circuit, delays)?;
    let mut t = Table::new(
        "hom_scan",
        "delay_fs",
        ["overlap", "desired", "spurious", "visibility"]
            .map(String::from)
            .to_vec(),
    );
    for p in &scan.points {
        t.push_numbers(
            crate::measurement::sig12(p.delay_fs),
            &[p.overlap, p.desired, p.spurious, p.visibility],
        );
    }
    report.tables.push(t);
    report.scalar("dip_visibility", scan.dip_visibility, NORM_TOL);
    Ok(())
}

pub fn run_entangler(config: &CircuitConfig) -> Result<ExperimentReport> {
    let circuit = build_canonical_circuit(config)?;
    let m = entangler_metrics(&circuit, &config.input)?;
    let mut report = ExperimentReport::new("entangle", config.echo());
    let mut t = Table::new("populations", "basis", ["HH", "HV", "VH", "VV"].map(String::from).to_vec());
    t.push_numbers("fraction", &m.populations);
    report.tables.push(t);
    report.scalar("herald_probability", m.herald_probability, PRUNE_TOL);
    report.scalar("population_fidelity", m.population_fidelity, NORM_TOL);
    report.scalar("pm_correlation", m.pm_correlation, NORM_TOL);
    report.scalar("coherence_fidelity", m.coherence_fidelity, NORM_TOL);
    match m.state_fidelity {
        Some(f) => report.scalar("state_fidelity", f, NORM_TOL),
        None => report
            .notes
            .push("state_fidelity skipped: threshold inference admits multi-photon outputs".into()),
    }
    if let Some(model) = circuit.distinguishability().copied() {
        report.scalar("overlap", model.overlap(), 0.0);
        report.scalar("filtering_ratio", model.filtering_ratio(), 0.0);
        push_hom(&mut report, &circuit, &scan_delays(&model, 21, 5.0))?;
    }
    Ok(report)
}

/// Delay scan on its own; installs the default 200 fs / 700 fs model when
/// the config has none.
pub fn run_hom_scan(config: &CircuitConfig, points: usize, span: f64) -> Result<ExperimentReport> {
    let mut config = config.clone();
    if config.distinguishability.is_none() {
        config.distinguishability = Some(default_model());
    }
    let circuit = build_canonical_circuit(&config)?;
    let model = circuit.distinguishability().copied().expect("installed above");
    let mut report = ExperimentReport::new("hom-scan", config.echo());
    push_hom(&mut report, &circuit, &scan_delays(&model, points, span))?;
    report.scalar("filtering_ratio", model.filtering_ratio(), 0.0);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStudy {
    /// (i) four-fold probability from two ancilla pairs, inputs blocked.
    pub ancilla_only: f64,
    /// (ii) four-fold probability from two input pairs, ancilla blocked.
    pub input_only: f64,
    /// (iii) full ensemble: one pair per pass.
    pub signal: f64,
    /// (iii) full ensemble: every other pair configuration.
    pub noise: f64,
    pub by_config: Vec<(PairConfig, f64)>,
}

impl NoiseStudy {
    pub fn noise_fraction(&self) -> f64 {
        let t = self.signal + self.noise;
        if t > 0.0 {
            self.noise / t
        } else {
            0.0
        }
    }

    pub fn signal_to_noise(&self) -> f64 {
        if self.noise > 0.0 {
            self.signal / self.noise
        } else {
            f64::INFINITY
        }
    }
}

fn member_probability(circuit: &Circuit, spec: &InputSpec, eps: PairAmplitude, cfg: PairConfig) -> Result<f64> {
    let s = spdc_member(circuit.registry(), spec, eps, cfg)?;
    Ok(crate::measurement::herald(&circuit.evolve(&s)?, circuit.herald())?.probability)
}

pub fn noise_study(config: &CircuitConfig) -> Result<NoiseStudy> {
    let eps = config
        .epsilon()
        .ok_or_else(|| Error::Config("noise study needs an epsilon".into()))?;
    let circuit = build_canonical_circuit(config)?;
    let spec = &config.input;
    let cfg = |i, a| PairConfig {
        input_pairs: i,
        ancilla_pairs: a,
    };
    let ancilla_only = member_probability(&circuit, spec, eps, cfg(0, 2))?;
    let input_only = member_probability(&circuit, spec, eps, cfg(2, 0))?;
    let mut signal = 0.0;
    let mut noise = 0.0;
    let mut by_config = Vec::new();
    for (c, h) in circuit.heralded(spec)? {
        if c == PairConfig::SIGNAL {
            signal += h.probability;
        } else {
            noise += h.probability;
        }
        by_config.push((c, h.probability));
    }
    Ok(NoiseStudy {
        ancilla_only,
        input_only,
        signal,
        noise,
        by_config,
    })
}

pub fn run_noise_study(config: &CircuitConfig) -> Result<ExperimentReport> {
    let full = noise_study(config)?;
    let eps = config.epsilon().expect("checked by noise_study").value();
    let half = noise_study(&config.clone().with_epsilon(eps / 2.0)?)?;
    let mut report = ExperimentReport::new("noise", config.echo());
    let mut t = Table::new(
        "pair_configurations",
        "pairs",
        vec!["fourfold_probability".into()],
    );
    for (c, p) in &full.by_config {
        t.push_numbers(c.to_string(), &[*p]);
    }
    report.tables.push(t);
    report.scalar("ancilla_two_pair_probability", full.ancilla_only, PRUNE_TOL);
    report.scalar("input_two_pair_probability", full.input_only, PRUNE_TOL);
    report.scalar("signal_probability", full.signal, PRUNE_TOL);
    report.scalar("noise_probability", full.noise, PRUNE_TOL);
    report.scalar("noise_fraction", full.noise_fraction(), NORM_TOL);
    report.scalar("signal_to_noise", full.signal_to_noise(), NORM_TOL);
    report.scalar("noise_fraction_half_epsilon", half.noise_fraction(), NORM_TOL);
    let ratio = if half.noise_fraction() > 0.0 {
        full.noise_fraction() / half.noise_fraction()
    } else {
        f64::NAN
    };
    report.scalar("noise_fraction_ratio", ratio, NORM_TOL);
    Ok(report)
}

pub fn run_feed_forward(config: &CircuitConfig) -> Result<ExperimentReport> {
    let mut ideal = config.clone();
    ideal.sources = SourceModel::Ideal;
    ideal.distinguishability = None;
    let circuit = build_canonical_circuit(&ideal)?;
    let table = derive_feed_forward(&circuit)?;
    let mut report = ExperimentReport::new("feed-forward", ideal.echo());
    let mut t = Table::new(
        "corrections",
        "herald",
        ["control", "target", "probability", "residual"]
            .map(String::from)
            .to_vec(),
    );
    for (outcome, e) in table.entries() {
        let name: String = outcome.iter().map(|p| p.symbol()).collect();
        t.push_cells(
            name,
            vec![
                e.control.to_string(),
                e.target.to_string(),
                crate::measurement::sig12(e.probability),
                crate::measurement::sig12(e.residual),
            ],
        );
    }
    report.tables.push(t);
    report.scalar("total_success_probability", table.total_success_probability(), NORM_TOL);
    report.scalar("map_tolerance", MAP_TOL, 0.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_overlap(v: f64) -> CircuitConfig {
        let m = default_model();
        CircuitConfig::ideal()
            .with_distinguishability(m.with_delay(delay_for_overlap(&m, v).unwrap()))
            .unwrap()
    }

    #[test]
    fn ideal_truth_table_is_cnot() {
        let r = run_truth_table(&CircuitConfig::ideal()).unwrap();
        assert_eq!(
            r.to_csv(),
            "input,HH,HV,VH,VV\nHH,1,0,0,0\nHV,0,1,0,0\nVH,0,0,0,1\nVV,0,0,1,0\n"
        );
        for k in ["HH", "HV", "VH", "VV"] {
            assert!((r.get(&format!("logical_fidelity.{k}")).unwrap() - 1.0).abs() < 1e-9);
            assert!((r.get(&format!("herald_probability.{k}")).unwrap() - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_overlap_matches_ideal() {
        let a = run_truth_table(&CircuitConfig::ideal()).unwrap();
        let b = run_truth_table(&with_overlap(1.0)).unwrap();
        assert_eq!(a.tables, b.tables);
    }

    #[test]
    fn logical_fidelity_falls_with_distinguishability() {
        let mean = |v: f64| {
            let r = run_truth_table(&with_overlap(v)).unwrap();
            ["HH", "HV", "VH", "VV"]
                .iter()
                .map(|k| r.get(&format!("logical_fidelity.{k}")).unwrap())
                .sum::<f64>()
                / 4.0
        };
        let f = [mean(1.0), mean(0.9), mean(0.8)];
        assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
    }

    #[test]
    fn delay_for_overlap_inverts_model() {
        let m = default_model();
        for v in [1.0, 0.9, 0.5, 0.01] {
            let d = delay_for_overlap(&m, v).unwrap();
            assert!((m.with_delay(d).overlap() - v).abs() < 1e-12);
        }
        assert!(delay_for_overlap(&m, 0.0).is_err());
    }

    #[test]
    fn structural_delay_insertion() {
        let plain = build_canonical_circuit(&CircuitConfig::ideal()).unwrap();
        let delayed = build_canonical_circuit(&with_overlap(0.7)).unwrap();
        assert_eq!(delayed.elements().len(), plain.elements().len() + 2);
        assert!(delayed.elements()[0].name().starts_with("delay_mix(a3"));
        assert!(delayed.elements()[1].name().starts_with("delay_mix(a4"));
        assert_eq!(delayed.registry().tbins(), 2);
    }

    #[test]
    fn entangler_ideal_and_degraded() {
        let spec = InputSpec::from_tokens("+H").unwrap();
        let c = build_canonical_circuit(&CircuitConfig::ideal()).unwrap();
        let m = entangler_metrics(&c, &spec).unwrap();
        assert!((m.populations[0] - 0.5).abs() < 1e-12 && (m.populations[3] - 0.5).abs() < 1e-12);
        assert!((m.state_fidelity.unwrap() - 1.0).abs() < 1e-9);
        for v in [0.9, 0.6, 0.3] {
            let c = build_canonical_circuit(&with_overlap(v)).unwrap();
            let m = entangler_metrics(&c, &spec).unwrap();
            assert!((m.population_fidelity - (1.0 + v * v) / 2.0).abs() < 1e-9);
            assert!((m.coherence_fidelity - (1.0 + 3.0 * v * v) / 4.0).abs() < 1e-9);
            assert!(m.coherence_fidelity < m.population_fidelity);
        }
    }

    #[test]
    fn noise_conditions() {
        let cfg = |s: &str| {
            CircuitConfig::ideal()
                .with_input(InputSpec::from_tokens(s).unwrap())
                .with_epsilon(0.1)
                .unwrap()
        };
        for s in ["HH", "HV", "VH", "VV"] {
            let n = noise_study(&cfg(s)).unwrap();
            assert!(n.ancilla_only.abs() < 1e-12);
            assert!(n.input_only.abs() < 1e-12, "{s}");
        }
        let n = noise_study(&cfg("+H")).unwrap();
        assert!(n.ancilla_only.abs() < 1e-12);
        assert!(n.input_only > 0.0);
        assert!(n.signal > 0.0 && n.noise > 0.0);
        assert!(matches!(noise_study(&CircuitConfig::ideal()), Err(Error::Config(_))));
    }

    #[test]
    fn ideal_distribution_in_rotated_bases() {
        let plus_h = InputSpec::from_tokens("+H").unwrap();
        let d = ideal_distribution(&plus_h, [45.0, 45.0]);
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[3] - 0.5).abs() < 1e-12);
        let d = ideal_distribution(&plus_h, [0.0, 0.0]);
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = with_overlap(0.8).with_epsilon(0.05).unwrap().with_input(InputSpec::from_tokens("+H").unwrap());
        assert_eq!(run_entangler(&cfg).unwrap().to_text(), run_entangler(&cfg).unwrap().to_text());
        assert_eq!(run_noise_study(&cfg).unwrap().to_text(), run_noise_study(&cfg).unwrap().to_text());
    }
}
