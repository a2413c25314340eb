//! Linear-optical elements as rewrite rules on creation operators.
//!
//! An element holds a square matrix `M` over a list of modes with the
//! convention `a†_{mode[j]} → Σ_i M[i][j] a†_{mode[i]}`: column `j` is the
//! image of mode `j`. Modes not listed are untouched. Applying an element
//! to a Fock term expands every occupied creation operator and collects the
//! resulting monomials, then restores the bosonic normalization
//! `√(Π m_i!) / √(Π n_j!)`.
//!
//! Phase conventions:
//!
//! | element       | action on creation operators                                  |
//! |---------------|---------------------------------------------------------------|
//! | `rotate_pol`  | H → cos θ H + sin θ V, V → −sin θ H + cos θ V                 |
//! | `hwp`         | `rotate_pol(2θ)` after a sign flip of V                       |
//! | `pbs_hv`      | in1 H → out1 H, in2 H → out2 H, in1 V → out2 V, in2 V → out1 V |
//! | `pbs_45`      | `rotate_pol(−45)` on inputs, `pbs_hv`, `rotate_pol(+45)` on outputs |
//! | `delay_mix`   | tbin 0 → v·tbin 0 + √(1−v²)·tbin 1                             |
//!
//! All PBS coefficients are +1; the PBS matrices also send the output
//! labels back to the input labels so that they are permutations.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fock::{FockState, Mode, ModeRegistry, Occupation, PolState, Polarization, C64};

/// Tolerance for the unitarity/idempotence checks.
pub const KIND_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Unitary,
    Projector,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Unitary => "unitary",
            ElementKind::Projector => "projector",
        }
    }
}

/// Square complex matrix, row-major.
pub type Matrix = Vec<Vec<C64>>;

fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { C64::new(1.0, 0.0) } else { C64::default() })
                .collect()
        })
        .collect()
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![C64::default(); n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == C64::default() {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn adjoint(a: &Matrix) -> Matrix {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| a[j][i].conj()).collect())
        .collect()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).norm()))
        .fold(0.0, f64::max)
}

/// Gaussian temporal-overlap model for the translation-stage delay.
///
/// The coherence time is read as a FWHM, so σ = τ_c / √(8 ln 2) and the
/// overlap of the delayed and reference wavepackets is
/// `exp(−delay² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistinguishabilityModel {
    pub pump_duration_fs: f64,
    pub coherence_time_fs: f64,
    pub delay_fs: f64,
}

impl DistinguishabilityModel {
    pub fn new(pump_duration_fs: f64, coherence_time_fs: f64, delay_fs: f64) -> Result<Self> {
        let m = DistinguishabilityModel {
            pump_duration_fs,
            coherence_time_fs,
            delay_fs,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pump_duration_fs.is_finite() && self.pump_duration_fs > 0.0) {
            return Err(Error::InvalidDistinguishability(format!(
                "pump duration must be positive, got {}",
                self.pump_duration_fs
            )));
        }
        if !(self.coherence_time_fs.is_finite() && self.coherence_time_fs > 0.0) {
            return Err(Error::InvalidDistinguishability(format!(
                "coherence time must be positive, got {}",
                self.coherence_time_fs
            )));
        }
        if !self.delay_fs.is_finite() {
            return Err(Error::InvalidDistinguishability("delay must be finite".into()));
        }
        Ok(())
    }

    pub fn with_delay(&self, delay_fs: f64) -> Self {
        DistinguishabilityModel { delay_fs, ..*self }
    }

    pub fn sigma_fs(&self) -> f64 {
        self.coherence_time_fs / (8.0 * std::f64::consts::LN_2).sqrt()
    }

    /// Wavepacket overlap `v ∈ [0, 1]`.
    pub fn overlap(&self) -> f64 {
        let s = self.sigma_fs();
        (-(self.delay_fs * self.delay_fs) / (2.0 * s * s)).exp()
    }

    /// Ratio of filtered coherence time to pump duration.
    pub fn filtering_ratio(&self) -> f64 {
        self.coherence_time_fs / self.pump_duration_fs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    name: String,
    kind: ElementKind,
    modes: Vec<Mode>,
    matrix: Matrix,
}

impl Element {
    /// Validated constructor from an explicit matrix.
    pub fn from_matrix(
        name: impl Into<String>,
        kind: ElementKind,
        modes: Vec<Mode>,
        matrix: Matrix,
    ) -> Result<Self> {
        let name = name.into();
        let n = modes.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidElement {
                name,
                check: "shape",
                deviation: f64::NAN,
            });
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(Error::RepeatedElementMode(name));
            }
        }
        let e = Element {
            name,
            kind,
            modes,
            matrix,
        };
        e.check_kind()?;
        Ok(e)
    }

    fn check_kind(&self) -> Result<()> {
        let n = self.modes.len();
        match self.kind {
            ElementKind::Unitary => {
                let dev = max_abs_diff(&matmul(&adjoint(&self.matrix), &self.matrix), &identity(n));
                if dev > KIND_TOL {
                    return Err(Error::InvalidElement {
                        name: self.name.clone(),
                        check: "unitarity",
                        deviation: dev,
                    });
                }
            }
            ElementKind::Projector => {
                let idem = max_abs_diff(&matmul(&self.matrix, &self.matrix), &self.matrix);
                let herm = max_abs_diff(&adjoint(&self.matrix), &self.matrix);
                let dev = idem.max(herm);
                if dev > KIND_TOL {
                    return Err(Error::InvalidElement {
                        name: self.name.clone(),
                        check: "idempotent-hermitian",
                        deviation: dev,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Deviation from the kind's defining property (‖U†U − I‖ or
    /// max(‖P² − P‖, ‖P† − P‖)).
    pub fn kind_deviation(&self) -> f64 {
        let n = self.modes.len();
        match self.kind {
            ElementKind::Unitary => {
                max_abs_diff(&matmul(&adjoint(&self.matrix), &self.matrix), &identity(n))
            }
            ElementKind::Projector => max_abs_diff(&matmul(&self.matrix, &self.matrix), &self.matrix)
                .max(max_abs_diff(&adjoint(&self.matrix), &self.matrix)),
        }
    }

    /// Matrix entry `M[out][in]` by mode, zero when either mode is absent
    /// (or the identity on the diagonal of an untouched mode).
    pub fn coefficient(&self, out: &Mode, input: &Mode) -> C64 {
        let i = self.modes.iter().position(|m| m == out);
        let j = self.modes.iter().position(|m| m == input);
        match (i, j) {
            (Some(i), Some(j)) => self.matrix[i][j],
            (None, None) if out == input => C64::new(1.0, 0.0),
            _ => C64::default(),
        }
    }

    /// Inverse of a unitary element (its adjoint).
    pub fn inverse(&self) -> Result<Element> {
        if self.kind != ElementKind::Unitary {
            return Err(Error::InvalidElement {
                name: self.name.clone(),
                check: "invertibility",
                deviation: f64::NAN,
            });
        }
        Ok(Element {
            name: format!("inverse({})", self.name),
            kind: ElementKind::Unitary,
            modes: self.modes.clone(),
            matrix: adjoint(&self.matrix),
        })
    }

    /// Composite element: `self` first, then `next`, over the union of modes.
    pub fn then(&self, next: &Element, name: impl Into<String>) -> Result<Element> {
        let mut modes = self.modes.clone();
        for m in &next.modes {
            if !modes.contains(m) {
                modes.push(m.clone());
            }
        }
        let embed = |e: &Element| -> Matrix {
            modes
                .iter()
                .map(|o| modes.iter().map(|i| e.coefficient(o, i)).collect())
                .collect()
        };
        let kind = if self.kind == ElementKind::Unitary && next.kind == ElementKind::Unitary {
            ElementKind::Unitary
        } else {
            ElementKind::Projector
        };
        let matrix = matmul(&embed(next), &embed(self));
        Element::from_matrix(name, kind, modes, matrix)
    }

    /// Same 2×2 polarization matrix on every temporal bin of `spatial`.
    pub fn polarization(
        registry: &ModeRegistry,
        spatial: &str,
        jones: [[C64; 2]; 2],
        kind: ElementKind,
        name: impl Into<String>,
    ) -> Result<Self> {
        registry.label_index(spatial)?;
        let tb = registry.tbins();
        let mut modes = Vec::with_capacity(2 * tb);
        for t in 0..tb {
            for p in Polarization::ALL {
                modes.push(Mode::new(spatial, p, t));
            }
        }
        let n = modes.len();
        let mut matrix = vec![vec![C64::default(); n]; n];
        for t in 0..tb {
            for i in 0..2 {
                for j in 0..2 {
                    matrix[2 * t + i][2 * t + j] = jones[i][j];
                }
            }
        }
        Element::from_matrix(name, kind, modes, matrix)
    }

    /// Polarization rotation by `angle_deg` on every bin of `spatial`.
    pub fn rotate_pol(registry: &ModeRegistry, spatial: &str, angle_deg: f64) -> Result<Self> {
        let t = angle_deg.to_radians();
        let (c, s) = (C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0));
        Element::polarization(
            registry,
            spatial,
            [[c, -s], [s, c]],
            ElementKind::Unitary,
            format!("rotate_pol({spatial},{angle_deg})"),
        )
    }

    /// Half-wave plate with its axis at `axis_deg`: reflects the
    /// polarization about the axis.
    pub fn hwp(registry: &ModeRegistry, spatial: &str, axis_deg: f64) -> Result<Self> {
        let t = (2.0 * axis_deg).to_radians();
        let (c, s) = (C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0));
        Element::polarization(
            registry,
            spatial,
            [[c, s], [s, -c]],
            ElementKind::Unitary,
            format!("hwp({spatial},{axis_deg})"),
        )
    }

    /// Projector onto linear polarization at `angle_deg`.
    pub fn polarizer(registry: &ModeRegistry, spatial: &str, angle_deg: f64) -> Result<Self> {
        Self::polarizer_onto(registry, spatial, PolState::linear(angle_deg))
            .map(|e| e.renamed(format!("polarizer({spatial},{angle_deg})")))
    }

    /// Projector onto an arbitrary (unit-norm) polarization state.
    pub fn polarizer_onto(registry: &ModeRegistry, spatial: &str, pol: PolState) -> Result<Self> {
        let n = pol.norm_sqr().sqrt();
        let (h, v) = (pol.h / n, pol.v / n);
        Element::polarization(
            registry,
            spatial,
            [[h * h.conj(), h * v.conj()], [v * h.conj(), v * v.conj()]],
            ElementKind::Projector,
            format!("polarizer({spatial},{:.6}{:+.6}i,{:.6}{:+.6}i)", h.re, h.im, v.re, v.im),
        )
    }

    /// Unitary taking H to `pol` (and V to its orthogonal complement).
    pub fn prepare(registry: &ModeRegistry, spatial: &str, pol: PolState) -> Result<Self> {
        let n = pol.norm_sqr().sqrt();
        let p = PolState::new(pol.h / n, pol.v / n);
        let q = p.orthogonal();
        Element::polarization(
            registry,
            spatial,
            [[p.h, q.h], [p.v, q.v]],
            ElementKind::Unitary,
            format!("prepare({spatial})"),
        )
    }

    fn renamed(mut self, name: String) -> Self {
        self.name = name;
        self
    }

    fn distinct_ports(labels: [&str; 4]) -> Result<()> {
        for i in 0..4 {
            for j in 0..i {
                if labels[i] == labels[j] {
                    return Err(Error::LabelCollision(
                        labels.iter().map(|s| s.to_string()).collect(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn port_modes(registry: &ModeRegistry, labels: [&str; 4]) -> Result<Vec<Mode>> {
        let mut modes = Vec::new();
        for l in labels {
            registry.label_index(l)?;
            for t in 0..registry.tbins() {
                for p in Polarization::ALL {
                    modes.push(Mode::new(l, p, t));
                }
            }
        }
        Ok(modes)
    }

    /// Polarizing beam splitter transmitting H and reflecting V.
    pub fn pbs_hv(
        registry: &ModeRegistry,
        in1: &str,
        in2: &str,
        out1: &str,
        out2: &str,
    ) -> Result<Self> {
        use Polarization::{H, V};
        Self::distinct_ports([in1, in2, out1, out2])?;
        let modes = Self::port_modes(registry, [in1, in2, out1, out2])?;
        let pos = |l: &str, p: Polarization, t: usize| {
            modes
                .iter()
                .position(|m| m.spatial == l && m.pol == p && m.tbin == t)
                .expect("port mode listed")
        };
        let n = modes.len();
        let mut matrix = vec![vec![C64::default(); n]; n];
        let one = C64::new(1.0, 0.0);
        for t in 0..registry.tbins() {
            // Involution: each pair is swapped both ways.
            let pairs = [
                ((in1, H), (out1, H)),
                ((in2, H), (out2, H)),
                ((in1, V), (out2, V)),
                ((in2, V), (out1, V)),
            ];
            for ((la, pa), (lb, pb)) in pairs {
                let a = pos(la, pa, t);
                let b = pos(lb, pb, t);
                matrix[b][a] = one;
                matrix[a][b] = one;
            }
        }
        Element::from_matrix(
            format!("pbs_hv({in1},{in2}->{out1},{out2})"),
            ElementKind::Unitary,
            modes,
            matrix,
        )
    }

    /// PBS rotated by 45°: transmits |+⟩, reflects |−⟩. Built as the
    /// composite `rotate_pol(−45)` on both inputs, `pbs_hv`, then
    /// `rotate_pol(+45)` on both outputs.
    pub fn pbs_45(
        registry: &ModeRegistry,
        in1: &str,
        in2: &str,
        out1: &str,
        out2: &str,
    ) -> Result<Self> {
        let core = Self::pbs_hv(registry, in1, in2, out1, out2)?;
        let composite = Self::rotate_pol(registry, in1, -45.0)?
            .then(&Self::rotate_pol(registry, in2, -45.0)?, "pre")?
            .then(&core, "mid")?
            .then(&Self::rotate_pol(registry, out1, 45.0)?, "post")?
            .then(&Self::rotate_pol(registry, out2, 45.0)?, "pbs_45")?;
        // Reorder onto the same mode list as the H/V splitter.
        let modes = core.modes.clone();
        let matrix = modes
            .iter()
            .map(|o| modes.iter().map(|i| composite.coefficient(o, i)).collect())
            .collect();
        Element::from_matrix(
            format!("pbs_45({in1},{in2}->{out1},{out2})"),
            ElementKind::Unitary,
            modes,
            matrix,
        )
    }

    /// Symmetric lossless splitter between two spatial labels, acting
    /// identically on each polarization and bin:
    /// a† → (a† + i b†)/√2, b† → (i a† + b†)/√2.
    pub fn beam_splitter(registry: &ModeRegistry, l1: &str, l2: &str) -> Result<Self> {
        if l1 == l2 {
            return Err(Error::LabelCollision(vec![l1.into(), l2.into()]));
        }
        registry.label_index(l1)?;
        registry.label_index(l2)?;
        let mut modes = Vec::new();
        for t in 0..registry.tbins() {
            for p in Polarization::ALL {
                modes.push(Mode::new(l1, p, t));
                modes.push(Mode::new(l2, p, t));
            }
        }
        let n = modes.len();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut matrix = vec![vec![C64::default(); n]; n];
        for k in (0..n).step_by(2) {
            matrix[k][k] = C64::new(r, 0.0);
            matrix[k + 1][k + 1] = C64::new(r, 0.0);
            matrix[k + 1][k] = C64::new(0.0, r);
            matrix[k][k + 1] = C64::new(0.0, r);
        }
        Element::from_matrix(
            format!("beam_splitter({l1},{l2})"),
            ElementKind::Unitary,
            modes,
            matrix,
        )
    }

    /// Moves a fraction of the reference wavepacket into temporal bin 1:
    /// `a†_{p,0} → v a†_{p,0} + √(1−v²) a†_{p,1}`, completed to a rotation
    /// on the two-bin subspace. Higher bins are untouched.
    pub fn delay_mix(
        registry: &ModeRegistry,
        spatial: &str,
        model: &DistinguishabilityModel,
    ) -> Result<Self> {
        model.validate()?;
        Self::time_bin_mix(registry, spatial, model.overlap())
            .map(|e| e.renamed(format!("delay_mix({spatial},{})", model.delay_fs)))
    }

    /// `delay_mix` parameterized directly by the overlap `v`.
    pub fn time_bin_mix(registry: &ModeRegistry, spatial: &str, overlap: f64) -> Result<Self> {
        if registry.tbins() < 2 {
            return Err(Error::TooFewTimeBins(registry.tbins()));
        }
        if !(0.0..=1.0).contains(&overlap) {
            return Err(Error::InvalidDistinguishability(format!(
                "overlap {overlap} outside [0, 1]"
            )));
        }
        registry.label_index(spatial)?;
        let v = overlap;
        let w = (1.0 - v * v).max(0.0).sqrt();
        let mut modes = Vec::new();
        for p in Polarization::ALL {
            modes.push(Mode::new(spatial, p, 0));
            modes.push(Mode::new(spatial, p, 1));
        }
        let mut matrix = vec![vec![C64::default(); 4]; 4];
        for k in [0, 2] {
            matrix[k][k] = C64::new(v, 0.0);
            matrix[k + 1][k] = C64::new(w, 0.0);
            matrix[k][k + 1] = C64::new(-w, 0.0);
            matrix[k + 1][k + 1] = C64::new(v, 0.0);
        }
        Element::from_matrix(
            format!("time_bin_mix({spatial},{v})"),
            ElementKind::Unitary,
            modes,
            matrix,
        )
    }

    /// Applies the element; projectors go through [`Element::project`].
    pub fn apply(&self, state: &FockState) -> Result<FockState> {
        match self.kind {
            ElementKind::Unitary => self.apply_linear(state),
            ElementKind::Projector => self.project(state),
        }
    }

    /// Projective application: the surviving amplitudes are rescaled to
    /// the incoming Σ|amp|², and `norm_tracking` is multiplied by the
    /// surviving fraction.
    pub fn project(&self, state: &FockState) -> Result<FockState> {
        let before = state.norm_sqr();
        let raw = self.apply_linear(state)?;
        let after = raw.norm_sqr();
        if before == 0.0 || after == 0.0 {
            return Ok(FockState::zero(state.registry()).with_norm_tracking(0.0));
        }
        let kept = after / before;
        Ok(raw
            .scaled(C64::new((before / after).sqrt(), 0.0))
            .with_norm_tracking(state.norm_tracking() * kept))
    }

    /// Multinomial expansion of the creation operators without any
    /// renormalization.
    pub fn apply_linear(&self, state: &FockState) -> Result<FockState> {
        let reg = state.registry();
        let n_photons = state.max_photons();
        if n_photons > reg.cutoff() {
            return Err(Error::CutoffExceeded {
                photons: n_photons,
                cutoff: reg.cutoff(),
            });
        }
        let idx: Vec<usize> = self
            .modes
            .iter()
            .map(|m| reg.mode_index(m))
            .collect::<Result<_>>()?;
        let k = idx.len();
        // Sparse columns: image of each local mode.
        let columns: Vec<Vec<(usize, C64)>> = (0..k)
            .map(|j| {
                (0..k)
                    .filter(|&i| self.matrix[i][j].norm() > 0.0)
                    .map(|i| (i, self.matrix[i][j]))
                    .collect()
            })
            .collect();

        let mut cache: HashMap<Vec<u8>, Vec<(Vec<u8>, C64)>> = HashMap::new();
        let mut out: BTreeMap<Occupation, C64> = BTreeMap::new();
        for (occ, amp) in state.terms() {
            let local: Vec<u8> = idx.iter().map(|&i| occ.get(i)).collect();
            let images = cache
                .entry(local.clone())
                .or_insert_with(|| expand(&columns, &local));
            for (img, coef) in images.iter() {
                let mut o = occ.clone();
                for (slot, &i) in idx.iter().enumerate() {
                    o.counts_mut()[i] = img[slot];
                }
                *out.entry(o).or_default() += amp * coef;
            }
        }
        Ok(FockState::from_map_unchecked(reg, out, state.norm_tracking()))
    }

    /// Text dump: header line, mode line, then one row per output mode with
    /// `re,im` entries at 15 significant digits.
    pub fn dump(&self) -> String {
        let mut s = format!("element {} {}\n", self.kind.as_str(), self.name);
        let names: Vec<String> = self.modes.iter().map(Mode::to_string).collect();
        let _ = writeln!(s, "modes {}", names.join(" "));
        for (i, row) in self.matrix.iter().enumerate() {
            let _ = write!(s, "{}", names[i]);
            for a in row {
                let _ = write!(s, "\t{},{}", sig15(a.re), sig15(a.im));
            }
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }

    /// Parses one block written by [`Element::dump`]. Returns the element
    /// and the number of lines consumed.
    pub fn parse_dump(lines: &[&str], first_line: usize) -> Result<(Element, usize)> {
        let err = |off: usize, m: &str| Error::Parse {
            line: first_line + off,
            message: m.to_string(),
        };
        let head = lines.first().ok_or_else(|| err(0, "missing element header"))?;
        let rest = head
            .strip_prefix("element ")
            .ok_or_else(|| err(0, "expected `element`"))?;
        let (kind, name) = rest.split_once(' ').ok_or_else(|| err(0, "missing name"))?;
        let kind = match kind {
            "unitary" => ElementKind::Unitary,
            "projector" => ElementKind::Projector,
            _ => return Err(err(0, "unknown element kind")),
        };
        let mode_line = lines
            .get(1)
            .and_then(|l| l.strip_prefix("modes "))
            .ok_or_else(|| err(1, "expected `modes`"))?;
        let modes = mode_line
            .split_whitespace()
            .map(Mode::parse)
            .collect::<Result<Vec<_>>>()?;
        let n = modes.len();
        let mut matrix = Vec::with_capacity(n);
        for r in 0..n {
            let line = lines.get(2 + r).ok_or_else(|| err(2 + r, "missing row"))?;
            let mut cols = line.split('\t');
            let label = cols.next().unwrap_or_default();
            if Mode::parse(label)? != modes[r] {
                return Err(err(2 + r, "row label does not match mode order"));
            }
            let row = cols
                .map(|c| {
                    let (re, im) = c.split_once(',').ok_or_else(|| err(2 + r, "bad entry"))?;
                    let re = re.parse::<f64>().map_err(|_| err(2 + r, "bad real part"))?;
                    let im = im.parse::<f64>().map_err(|_| err(2 + r, "bad imaginary part"))?;
                    Ok(C64::new(re, im))
                })
                .collect::<Result<Vec<_>>>()?;
            matrix.push(row);
        }
        if lines.get(2 + n).map(|l| l.trim()) != Some("end") {
            return Err(err(2 + n, "expected `end`"));
        }
        Ok((Element::from_matrix(name, kind, modes, matrix)?, 3 + n))
    }
}

/// Scientific notation with 15 significant digits.
pub fn sig15(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.14e}")
    }
}

/// Expands `Π_j (Σ_i M_ij a†_i)^{n_j}` acting on vacuum into normalized
/// output occupations of the local modes.
fn expand(columns: &[Vec<(usize, C64)>], input: &[u8]) -> Vec<(Vec<u8>, C64)> {
    let k = input.len();
    let mut monomials: HashMap<Vec<u8>, C64> = HashMap::new();
    monomials.insert(vec![0; k], C64::new(1.0, 0.0));
    for (j, &n) in input.iter().enumerate() {
        for _ in 0..n {
            let mut next: HashMap<Vec<u8>, C64> = HashMap::with_capacity(monomials.len() * 2);
            for (occ, c) in &monomials {
                for &(i, m) in &columns[j] {
                    let mut o = occ.clone();
                    o[i] += 1;
                    *next.entry(o).or_default() += c * m;
                }
            }
            monomials = next;
        }
    }
    let in_norm: f64 = input
        .iter()
        .map(|&n| crate::fock::factorial(n as usize))
        .product::<f64>()
        .sqrt();
    let mut out: Vec<(Vec<u8>, C64)> = monomials
        .into_iter()
        .map(|(o, c)| {
            let out_norm: f64 = o
                .iter()
                .map(|&n| crate::fock::factorial(n as usize))
                .product::<f64>()
                .sqrt();
            (o, c * (out_norm / in_norm))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::PRUNE_TOL;
    use proptest::prelude::*;
    use std::sync::Arc;
    use Polarization::{H, V};

    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn gate_registry(tbins: usize) -> Arc<ModeRegistry> {
        Arc::new(
            ModeRegistry::new(&["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4"], tbins).unwrap(),
        )
    }

    fn single(reg: &Arc<ModeRegistry>, l: &str, p: Polarization) -> FockState {
        FockState::single(reg, &Mode::at(l, p)).unwrap()
    }

    fn amp(s: &FockState, modes: &[(&str, Polarization)]) -> C64 {
        let ms: Vec<Mode> = modes.iter().map(|(l, p)| Mode::at(*l, *p)).collect();
        s.amplitude_of(&ms).unwrap()
    }

    #[test]
    fn rotation_zero_is_identity() {
        let reg = gate_registry(2);
        let e = Element::rotate_pol(&reg, "a1", 0.0).unwrap();
        assert_eq!(e.matrix(), &identity(4));
        assert!(matches!(
            Element::rotate_pol(&reg, "zz", 10.0),
            Err(Error::UnregisteredLabel(_))
        ));
    }

    #[test]
    fn minus_45_rotation_maps_h_to_minus() {
        let reg = gate_registry(1);
        let out = Element::rotate_pol(&reg, "a2", -45.0)
            .unwrap()
            .apply(&single(&reg, "a2", H))
            .unwrap();
        assert!((amp(&out, &[("a2", H)]) - C64::new(R, 0.0)).norm() < 1e-15);
        assert!((amp(&out, &[("a2", V)]) - C64::new(-R, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn two_45_rotations_flip_h_to_v() {
        let reg = gate_registry(1);
        let r = Element::rotate_pol(&reg, "a1", 45.0).unwrap();
        let out = r.apply(&r.apply(&single(&reg, "a1", H)).unwrap()).unwrap();
        assert!((amp(&out, &[("a1", V)]).norm() - 1.0).abs() < 1e-12);
        assert!(amp(&out, &[("a1", H)]).norm() < 1e-12);
    }

    #[test]
    fn hwp_is_rotation_after_v_flip() {
        let reg = gate_registry(1);
        for axis in [0.0, 22.5, 45.0, -30.0, 67.5] {
            let flip = Element::polarization(
                &reg,
                "a1",
                [[C64::new(1.0, 0.0), C64::default()], [C64::default(), C64::new(-1.0, 0.0)]],
                ElementKind::Unitary,
                "flip",
            )
            .unwrap();
            let composite = flip
                .then(&Element::rotate_pol(&reg, "a1", 2.0 * axis).unwrap(), "c")
                .unwrap();
            let hwp = Element::hwp(&reg, "a1", axis).unwrap();
            assert!(max_abs_diff(hwp.matrix(), composite.matrix()) < 1e-15);
        }
        // HWP at 22.5° takes H to +.
        let out = Element::hwp(&reg, "a1", 22.5)
            .unwrap()
            .apply(&single(&reg, "a1", H))
            .unwrap();
        assert!((amp(&out, &[("a1", H)]) - C64::new(R, 0.0)).norm() < 1e-15);
        assert!((amp(&out, &[("a1", V)]) - C64::new(R, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pbs_hv_routes_polarizations() {
        let reg = gate_registry(1);
        let pbs = Element::pbs_hv(&reg, "a1", "a3", "b1", "b3").unwrap();
        let h = pbs.apply(&single(&reg, "a1", H)).unwrap();
        assert_eq!(amp(&h, &[("b1", H)]), C64::new(1.0, 0.0));
        let v = pbs.apply(&single(&reg, "a1", V)).unwrap();
        assert_eq!(amp(&v, &[("b3", V)]), C64::new(1.0, 0.0));
        let v3 = pbs.apply(&single(&reg, "a3", V)).unwrap();
        assert_eq!(amp(&v3, &[("b1", V)]), C64::new(1.0, 0.0));

        let hh = single(&reg, "a1", H)
            .create(&[(C64::new(1.0, 0.0), vec![reg.index_of("a3", H, 0).unwrap()])])
            .unwrap();
        let out = pbs.apply(&hh).unwrap();
        assert_eq!(amp(&out, &[("b1", H), ("b3", H)]), C64::new(1.0, 0.0));

        assert!(matches!(
            Element::pbs_hv(&reg, "a1", "a1", "b1", "b3"),
            Err(Error::LabelCollision(_))
        ));
    }

    #[test]
    fn pbs_45_composite_matches_direct_definition() {
        let reg = gate_registry(2);
        let e = Element::pbs_45(&reg, "a2", "a4", "b2", "b4").unwrap();
        let plus = PolState::plus();
        let minus = PolState::minus();
        // Direct: in1 ± → out1 + / out2 −, in2 + → out2 +, in2 − → out1 −;
        // outputs route back through the H/V involution.
        let basis = |p: Polarization| PolState::basis(p);
        let rows: Vec<(Mode, Mode, C64)> = {
            let mut v = Vec::new();
            for t in 0..2 {
                for (i_lab, o_plus, o_minus) in [("a2", "b2", "b4"), ("a4", "b4", "b2")] {
                    for pin in [H, V] {
                        for pout in [H, V] {
                            // ⟨pin|+⟩⟨+|... expansions in the H/V basis.
                            let c_plus = basis(pin).h * plus.h.conj() + basis(pin).v * plus.v.conj();
                            let c_minus =
                                basis(pin).h * minus.h.conj() + basis(pin).v * minus.v.conj();
                            v.push((
                                Mode::new(o_plus, pout, t),
                                Mode::new(i_lab, pin, t),
                                c_plus * plus.amplitude(pout),
                            ));
                            v.push((
                                Mode::new(o_minus, pout, t),
                                Mode::new(i_lab, pin, t),
                                c_minus * minus.amplitude(pout),
                            ));
                        }
                    }
                }
            }
            v
        };
        let mut direct: BTreeMap<(Mode, Mode), C64> = BTreeMap::new();
        for (o, i, c) in rows {
            *direct.entry((o, i)).or_default() += c;
        }
        let hv = Element::pbs_hv(&reg, "a2", "a4", "b2", "b4").unwrap();
        for o in e.modes() {
            for i in e.modes() {
                let expected = if i.spatial.starts_with('a') {
                    direct.get(&(o.clone(), i.clone())).copied().unwrap_or_default()
                } else {
                    hv.coefficient(o, i)
                };
                assert!(
                    (e.coefficient(o, i) - expected).norm() < 1e-12,
                    "{o} <- {i}: {} vs {}",
                    e.coefficient(o, i),
                    expected
                );
            }
        }
    }

    #[test]
    fn pbs_45_transmits_plus_and_reflects_minus() {
        let reg = gate_registry(1);
        let e = Element::pbs_45(&reg, "a2", "a4", "b2", "b4").unwrap();
        let prep = |p: PolState| {
            Element::prepare(&reg, "a2", p)
                .unwrap()
                .apply(&single(&reg, "a2", H))
                .unwrap()
        };
        let out = e.apply(&prep(PolState::plus())).unwrap();
        assert!((amp(&out, &[("b2", H)]) - C64::new(R, 0.0)).norm() < 1e-12);
        assert!((amp(&out, &[("b2", V)]) - C64::new(R, 0.0)).norm() < 1e-12);
        let out = e.apply(&prep(PolState::minus())).unwrap();
        assert!((amp(&out, &[("b4", H)]) - C64::new(R, 0.0)).norm() < 1e-12);
        assert!((amp(&out, &[("b4", V)]) - C64::new(-R, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pbs_45_on_hh_passes_both_photons_half_the_time() {
        let reg = gate_registry(1);
        let e = Element::pbs_45(&reg, "a2", "a4", "b2", "b4").unwrap();
        let hh = single(&reg, "a2", H)
            .create(&[(C64::new(1.0, 0.0), vec![reg.index_of("a4", H, 0).unwrap()])])
            .unwrap();
        let out = e.apply(&hh).unwrap();
        let b2 = reg.label_modes("b2").unwrap();
        let b4 = reg.label_modes("b4").unwrap();
        let both: f64 = out
            .terms()
            .filter(|(o, _)| o.count_in(&b2) == 1 && o.count_in(&b4) == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!((both - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polarizer_cases() {
        let reg = gate_registry(1);
        let p0 = Element::polarizer(&reg, "a1", 0.0).unwrap();
        let out = p0.apply(&single(&reg, "a1", H)).unwrap();
        assert_eq!(out.probability(), 1.0);
        assert_eq!(amp(&out, &[("a1", H)]), C64::new(1.0, 0.0));
        let out = p0.apply(&single(&reg, "a1", V)).unwrap();
        assert!(out.is_zero());
        assert_eq!(out.probability(), 0.0);
        let p45 = Element::polarizer(&reg, "a1", 45.0).unwrap();
        let out = p45.apply(&single(&reg, "a1", H)).unwrap();
        assert!((out.probability() - 0.5).abs() < 1e-15);
        assert!((out.norm_tracking() - 0.5).abs() < 1e-15);
        assert!((amp(&out, &[("a1", H)]) - C64::new(R, 0.0)).norm() < 1e-15);
        assert!((amp(&out, &[("a1", V)]) - C64::new(R, 0.0)).norm() < 1e-15);
        assert!(matches!(
            Element::polarizer(&reg, "q", 0.0),
            Err(Error::UnregisteredLabel(_))
        ));
    }

    #[test]
    fn non_projector_is_rejected() {
        let reg = gate_registry(1);
        let half = C64::new(0.5, 0.0);
        let err = Element::polarization(
            &reg,
            "a1",
            [[half, C64::default()], [C64::default(), half]],
            ElementKind::Projector,
            "bad",
        );
        assert!(matches!(err, Err(Error::InvalidElement { .. })));
        let err = Element::polarization(
            &reg,
            "a1",
            [[half, C64::default()], [C64::default(), half]],
            ElementKind::Unitary,
            "bad",
        );
        assert!(matches!(err, Err(Error::InvalidElement { .. })));
    }

    #[test]
    fn overlap_model_limits() {
        let m = DistinguishabilityModel::new(200.0, 700.0, 0.0).unwrap();
        assert_eq!(m.overlap(), 1.0);
        let s = 700.0 / (8.0 * std::f64::consts::LN_2).sqrt();
        let d = 350.0;
        assert!((m.with_delay(d).overlap() - (-(d * d) / (2.0 * s * s)).exp()).abs() < 1e-15);
        assert!(m.with_delay(1e6).overlap() < 1e-300);
        let mut last = 1.0;
        for k in 1..50 {
            let v = m.with_delay(k as f64 * 50.0).overlap();
            assert!(v < last);
            assert_eq!(v, m.with_delay(-(k as f64) * 50.0).overlap());
            last = v;
        }
        assert!(DistinguishabilityModel::new(0.0, 700.0, 0.0).is_err());
        assert!(DistinguishabilityModel::new(200.0, -1.0, 0.0).is_err());
        assert!(DistinguishabilityModel::new(200.0, 700.0, f64::NAN).is_err());
        assert_eq!(m.filtering_ratio(), 3.5);
    }

    #[test]
    fn delay_mix_limits() {
        let reg = gate_registry(2);
        let m = DistinguishabilityModel::new(200.0, 700.0, 0.0).unwrap();
        let e = Element::delay_mix(&reg, "a3", &m).unwrap();
        assert!(max_abs_diff(e.matrix(), &identity(4)) < 1e-15);
        let far = Element::delay_mix(&reg, "a3", &m.with_delay(1e5)).unwrap();
        let out = far.apply(&single(&reg, "a3", V)).unwrap();
        let late = out.amplitude_of(&[Mode::new("a3", V, 1)]).unwrap();
        assert!((late.norm() - 1.0).abs() < 1e-15);
        let one_bin = gate_registry(1);
        assert_eq!(
            Element::delay_mix(&one_bin, "a3", &m),
            Err(Error::TooFewTimeBins(1))
        );
    }

    #[test]
    fn hong_ou_mandel_bunching() {
        let reg = Arc::new(ModeRegistry::new(&["x", "y"], 1).unwrap());
        let bs = Element::beam_splitter(&reg, "x", "y").unwrap();
        let s = single(&reg, "x", H)
            .create(&[(C64::new(1.0, 0.0), vec![reg.index_of("y", H, 0).unwrap()])])
            .unwrap();
        let out = bs.apply(&s).unwrap();
        assert!(amp(&out, &[("x", H), ("y", H)]).norm() < PRUNE_TOL);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((amp(&out, &[("x", H), ("x", H)]).norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_element_leaves_state() {
        let reg = gate_registry(1);
        let e = Element::rotate_pol(&reg, "a1", 0.0).unwrap();
        let s = single(&reg, "a1", H);
        assert_eq!(e.apply(&s).unwrap(), s);
    }

    #[test]
    fn dump_round_trip() {
        let reg = gate_registry(2);
        for e in [
            Element::pbs_45(&reg, "a2", "a4", "b2", "b4").unwrap(),
            Element::polarizer(&reg, "a1", 30.0).unwrap(),
            Element::rotate_pol(&reg, "b3", -45.0).unwrap(),
        ] {
            let text = e.dump();
            let lines: Vec<&str> = text.lines().collect();
            let (back, used) = Element::parse_dump(&lines, 1).unwrap();
            assert_eq!(used, lines.len());
            assert_eq!(back.name(), e.name());
            assert_eq!(back.kind(), e.kind());
            assert!(max_abs_diff(back.matrix(), e.matrix()) < 1e-14);
        }
    }

    #[test]
    fn cutoff_is_enforced() {
        let reg = Arc::new(ModeRegistry::new(&["a1"], 1).unwrap().with_cutoff(2));
        let s = FockState::vacuum(&reg)
            .create(&[(C64::new(1.0, 0.0), vec![0, 1])])
            .unwrap();
        let tight = Arc::new(ModeRegistry::new(&["a1"], 1).unwrap().with_cutoff(1));
        let squeezed = FockState::from_map_unchecked(
            &tight,
            s.terms().map(|(o, a)| (o.clone(), *a)).collect(),
            1.0,
        );
        let e = Element::rotate_pol(&tight, "a1", 10.0).unwrap();
        assert!(matches!(
            e.apply(&squeezed),
            Err(Error::CutoffExceeded { photons: 2, cutoff: 1 })
        ));
    }

    fn arb_angle() -> impl Strategy<Value = f64> {
        -180.0f64..180.0
    }

    fn arb_state(reg: Arc<ModeRegistry>) -> impl Strategy<Value = FockState> {
        let m = reg.len();
        prop::collection::vec(
            (
                prop::collection::vec(0usize..m, 1..=6),
                -1.0f64..1.0,
                -1.0f64..1.0,
            ),
            1..5,
        )
        .prop_map(move |terms| {
            let mut s = FockState::zero(&reg);
            for (ops, re, im) in terms {
                let t = FockState::vacuum(&reg)
                    .create(&[(C64::new(re, im), ops)])
                    .unwrap();
                s = FockState::superpose(C64::new(1.0, 0.0), &s, C64::new(1.0, 0.0), &t).unwrap();
            }
            s
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn unitary_elements_preserve_norm_and_photon_number(
            s in arb_state(gate_registry(2)),
            a in arb_angle(),
            b in arb_angle(),
            v in 0.0f64..1.0,
        ) {
            let reg = s.registry().clone();
            let chain = [
                Element::rotate_pol(&reg, "a1", a).unwrap(),
                Element::hwp(&reg, "a2", b).unwrap(),
                Element::pbs_hv(&reg, "a1", "a3", "b1", "b3").unwrap(),
                Element::pbs_45(&reg, "a2", "a4", "b2", "b4").unwrap(),
                Element::time_bin_mix(&reg, "b1", v).unwrap(),
                Element::beam_splitter(&reg, "b2", "b3").unwrap(),
            ];
            let mut t = s.clone();
            for e in &chain {
                prop_assert!(e.kind_deviation() < KIND_TOL);
                t = e.apply(&t).unwrap();
            }
            let rel = (t.norm_sqr() - s.norm_sqr()).abs() / s.norm_sqr().max(1e-300);
            prop_assert!(rel < 1e-10);
            // Photon number per term is conserved: the photon-number
            // distribution is unchanged.
            for n in 0..=6 {
                let before = s.photon_sector(n).norm_sqr();
                let after = t.photon_sector(n).norm_sqr();
                prop_assert!((before - after).abs() < 1e-10 * s.norm_sqr().max(1.0));
            }
            // And the chain inverts.
            for e in chain.iter().rev() {
                t = e.inverse().unwrap().apply(&t).unwrap();
            }
            let back = FockState::superpose(C64::new(1.0, 0.0), &t, C64::new(-1.0, 0.0), &s).unwrap();
            prop_assert!(back.norm_sqr().sqrt() < 1e-10 * s.norm_sqr().sqrt().max(1.0));
        }

        #[test]
        fn polarization_elements_act_identically_per_time_bin(a in arb_angle()) {
            let reg = gate_registry(3);
            for e in [
                Element::rotate_pol(&reg, "a1", a).unwrap(),
                Element::hwp(&reg, "a1", a).unwrap(),
                Element::polarizer(&reg, "a1", a).unwrap(),
            ] {
                for t in 1..3 {
                    for po in [H, V] {
                        for pi in [H, V] {
                            let c0 = e.coefficient(&Mode::new("a1", po, 0), &Mode::new("a1", pi, 0));
                            let ct = e.coefficient(&Mode::new("a1", po, t), &Mode::new("a1", pi, t));
                            prop_assert_eq!(c0, ct);
                            let cross = e.coefficient(&Mode::new("a1", po, t), &Mode::new("a1", pi, 0));
                            prop_assert_eq!(cross, C64::default());
                        }
                    }
                }
            }
        }
    }
}
