//! Sparse bosonic Fock states over a registry of polarization/time-bin modes.
//!
//! A [`ModeRegistry`] fixes the dense index of every mode as
//! `(label_index * 2 + pol) * tbins + tbin`, i.e. labels in creation order,
//! then H before V, then temporal bins ascending. Occupation vectors follow
//! this order, and a [`FockState`] stores its terms in a `BTreeMap` keyed by
//! occupation, so iteration and serialization order are fully determined by
//! the registry.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Amplitudes with modulus below this are dropped from sparse maps.
pub const PRUNE_TOL: f64 = 1e-12;

/// Default photon-number cutoff: two pairs plus margin.
pub const DEFAULT_CUTOFF: usize = 6;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const ALL: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Polarization::H
        } else {
            Polarization::V
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Polarization::H => 'H',
            Polarization::V => 'V',
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Single-photon polarization state as an (H, V) amplitude pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolState {
    pub h: C64,
    pub v: C64,
}

impl PolState {
    pub const fn new(h: C64, v: C64) -> Self {
        PolState { h, v }
    }

    pub fn horizontal() -> Self {
        Self::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn vertical() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    /// (H + V)/√2
    pub fn plus() -> Self {
        Self::new(C64::new(SQRT_HALF, 0.0), C64::new(SQRT_HALF, 0.0))
    }

    /// (H - V)/√2
    pub fn minus() -> Self {
        Self::new(C64::new(SQRT_HALF, 0.0), C64::new(-SQRT_HALF, 0.0))
    }

    /// (H + iV)/√2
    pub fn right() -> Self {
        Self::new(C64::new(SQRT_HALF, 0.0), C64::new(0.0, SQRT_HALF))
    }

    /// (H - iV)/√2
    pub fn left() -> Self {
        Self::new(C64::new(SQRT_HALF, 0.0), C64::new(0.0, -SQRT_HALF))
    }

    /// Linear polarization at `angle` degrees from H: cos θ H + sin θ V.
    pub fn linear(angle_deg: f64) -> Self {
        let t = angle_deg.to_radians();
        Self::new(C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0))
    }

    pub fn basis(pol: Polarization) -> Self {
        match pol {
            Polarization::H => Self::horizontal(),
            Polarization::V => Self::vertical(),
        }
    }

    pub fn amplitude(&self, pol: Polarization) -> C64 {
        match pol {
            Polarization::H => self.h,
            Polarization::V => self.v,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    /// The orthogonal state with the same handedness convention: (-v*, h*).
    pub fn orthogonal(&self) -> Self {
        Self::new(-self.v.conj(), self.h.conj())
    }
}

/// One bosonic mode: spatial path, polarization and temporal bin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    pub spatial: String,
    pub pol: Polarization,
    pub tbin: usize,
}

impl Mode {
    pub fn new(spatial: impl Into<String>, pol: Polarization, tbin: usize) -> Self {
        Mode {
            spatial: spatial.into(),
            pol,
            tbin,
        }
    }

    /// Reference-bin mode, the common case.
    pub fn at(spatial: impl Into<String>, pol: Polarization) -> Self {
        Self::new(spatial, pol, 0)
    }

    /// Parses the `label.P.tbin` form produced by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.rsplitn(3, '.');
        let (tbin, pol, spatial) = match (parts.next(), parts.next(), parts.next()) {
            (Some(t), Some(p), Some(s)) => (t, p, s),
            _ => return Err(Error::UnregisteredMode(text.to_string())),
        };
        let pol = match pol {
            "H" => Polarization::H,
            "V" => Polarization::V,
            _ => return Err(Error::UnregisteredMode(text.to_string())),
        };
        let tbin = tbin
            .parse()
            .map_err(|_| Error::UnregisteredMode(text.to_string()))?;
        Ok(Mode::new(spatial, pol, tbin))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.spatial, self.pol, self.tbin)
    }
}

fn validate_label(label: &str) -> Result<()> {
    let ok = !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '\'');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidLabel(label.to_string()))
    }
}

/// Dense indexing of every (spatial, polarization, tbin) mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeRegistry {
    labels: Vec<String>,
    tbins: usize,
    cutoff: usize,
}

impl ModeRegistry {
    pub fn new<S: AsRef<str>>(labels: &[S], tbins: usize) -> Result<Self> {
        if labels.is_empty() || tbins == 0 {
            return Err(Error::EmptyRegistry);
        }
        let mut out: Vec<String> = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            validate_label(l)?;
            if out.iter().any(|x| x == l) {
                return Err(Error::DuplicateLabel(l.to_string()));
            }
            out.push(l.to_string());
        }
        Ok(ModeRegistry {
            labels: out,
            tbins,
            cutoff: DEFAULT_CUTOFF,
        })
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tbins(&self) -> usize {
        self.tbins
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Total number of modes.
    pub fn len(&self) -> usize {
        self.labels.len() * 2 * self.tbins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnregisteredLabel(label.to_string()))
    }

    pub fn index_of(&self, label: &str, pol: Polarization, tbin: usize) -> Result<usize> {
        let li = self.label_index(label)?;
        if tbin >= self.tbins {
            return Err(Error::UnregisteredMode(
                Mode::new(label, pol, tbin).to_string(),
            ));
        }
        Ok((li * 2 + pol.index()) * self.tbins + tbin)
    }

    pub fn mode_index(&self, mode: &Mode) -> Result<usize> {
        self.index_of(&mode.spatial, mode.pol, mode.tbin)
            .map_err(|_| Error::UnregisteredMode(mode.to_string()))
    }

    pub fn mode(&self, index: usize) -> Mode {
        let tbin = index % self.tbins;
        let rest = index / self.tbins;
        Mode::new(
            self.labels[rest / 2].clone(),
            Polarization::from_index(rest % 2),
            tbin,
        )
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }

    /// Dense indices of all modes on one spatial label, in registry order.
    pub fn label_modes(&self, label: &str) -> Result<Vec<usize>> {
        let li = self.label_index(label)?;
        let start = li * 2 * self.tbins;
        Ok((start..start + 2 * self.tbins).collect())
    }

    /// Concatenates two registries over disjoint labels (self first).
    pub fn merged(&self, other: &ModeRegistry) -> Result<ModeRegistry> {
        if self.tbins != other.tbins {
            return Err(Error::RegistryMismatch);
        }
        if let Some(l) = other.labels.iter().find(|l| self.contains_label(l)) {
            return Err(Error::OverlappingLabels(l.clone()));
        }
        let labels: Vec<&str> = self
            .labels
            .iter()
            .chain(other.labels.iter())
            .map(String::as_str)
            .collect();
        Ok(ModeRegistry::new(&labels, self.tbins)?.with_cutoff(self.cutoff.max(other.cutoff)))
    }

    /// Header used by the text serialization.
    pub fn header(&self) -> String {
        format!(
            "labels={} tbins={} cutoff={}",
            self.labels.join(","),
            self.tbins,
            self.cutoff
        )
    }

    pub(crate) fn parse_header(text: &str) -> Result<ModeRegistry> {
        let mut labels = None;
        let mut tbins = None;
        let mut cutoff = None;
        for field in text.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or(Error::Parse {
                line: 1,
                message: format!("bad header field `{field}`"),
            })?;
            let bad = |_| Error::Parse {
                line: 1,
                message: format!("bad value in `{field}`"),
            };
            match k {
                "labels" => labels = Some(v.split(',').map(str::to_string).collect::<Vec<_>>()),
                "tbins" => tbins = Some(v.parse::<usize>().map_err(bad)?),
                "cutoff" => cutoff = Some(v.parse::<usize>().map_err(bad)?),
                _ => {}
            }
        }
        match (labels, tbins, cutoff) {
            (Some(l), Some(t), Some(c)) => Ok(ModeRegistry::new(&l, t)?.with_cutoff(c)),
            _ => Err(Error::Parse {
                line: 1,
                message: "header needs labels, tbins and cutoff".into(),
            }),
        }
    }
}

/// Photon counts, one per registered mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(Box<[u8]>);

impl Occupation {
    pub fn vacuum(modes: usize) -> Self {
        Occupation(vec![0; modes].into_boxed_slice())
    }

    pub fn from_counts(counts: Vec<u8>) -> Self {
        Occupation(counts.into_boxed_slice())
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, mode: usize) -> u8 {
        self.0[mode]
    }

    pub fn photons(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Σ n_i over the given dense indices.
    pub fn count_in(&self, modes: &[usize]) -> usize {
        modes.iter().map(|&m| self.0[m] as usize).sum()
    }

    /// `Π n_i!`, used for bosonic normalization.
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&n| factorial(n as usize)).product()
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// A sparse superposition of occupation vectors.
///
/// `norm_tracking` carries the probability weight removed by projective
/// elements and source filtering, so that `norm_tracking * norm_sqr()` is the
/// probability of the branch this state represents.
#[derive(Debug, Clone)]
pub struct FockState {
    registry: Arc<ModeRegistry>,
    terms: BTreeMap<Occupation, C64>,
    norm_tracking: f64,
}

impl PartialEq for FockState {
    fn eq(&self, other: &Self) -> bool {
        self.registry == other.registry
            && self.terms == other.terms
            && self.norm_tracking == other.norm_tracking
    }
}

impl FockState {
    /// The empty superposition (no terms at all).
    pub fn zero(registry: &Arc<ModeRegistry>) -> Self {
        FockState {
            registry: Arc::clone(registry),
            terms: BTreeMap::new(),
            norm_tracking: 1.0,
        }
    }

    pub fn vacuum(registry: &Arc<ModeRegistry>) -> Self {
        let mut s = Self::zero(registry);
        s.terms
            .insert(Occupation::vacuum(registry.len()), C64::new(1.0, 0.0));
        s
    }

    /// One photon in `mode`.
    pub fn single(registry: &Arc<ModeRegistry>, mode: &Mode) -> Result<Self> {
        let idx = registry.mode_index(mode)?;
        let mut occ = Occupation::vacuum(registry.len());
        occ.counts_mut()[idx] = 1;
        Self::from_terms(registry, [(occ, C64::new(1.0, 0.0))])
    }

    /// Builds a state from explicit terms; duplicate occupations add up.
    pub fn from_terms(
        registry: &Arc<ModeRegistry>,
        terms: impl IntoIterator<Item = (Occupation, C64)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<Occupation, C64> = BTreeMap::new();
        for (occ, amp) in terms {
            if occ.len() != registry.len() {
                return Err(Error::RegistryMismatch);
            }
            let n = occ.photons();
            if n > registry.cutoff() {
                return Err(Error::CutoffExceeded {
                    photons: n,
                    cutoff: registry.cutoff(),
                });
            }
            *map.entry(occ).or_default() += amp;
        }
        let mut s = FockState {
            registry: Arc::clone(registry),
            terms: map,
            norm_tracking: 1.0,
        };
        s.prune();
        Ok(s)
    }

    pub(crate) fn from_map_unchecked(
        registry: &Arc<ModeRegistry>,
        terms: BTreeMap<Occupation, C64>,
        norm_tracking: f64,
    ) -> Self {
        let mut s = FockState {
            registry: Arc::clone(registry),
            terms,
            norm_tracking,
        };
        s.prune();
        s
    }

    fn prune(&mut self) {
        self.terms.retain(|_, a| a.norm() >= PRUNE_TOL);
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, occ: &Occupation) -> C64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    /// Amplitude of the term with one photon in each listed mode (repeats
    /// allowed) and nothing else.
    pub fn amplitude_of(&self, modes: &[Mode]) -> Result<C64> {
        let mut occ = Occupation::vacuum(self.registry.len());
        for m in modes {
            let i = self.registry.mode_index(m)?;
            occ.counts_mut()[i] += 1;
        }
        Ok(self.amplitude(&occ))
    }

    pub fn norm_tracking(&self) -> f64 {
        self.norm_tracking
    }

    pub fn with_norm_tracking(mut self, weight: f64) -> Self {
        self.norm_tracking = weight;
        self
    }

    /// Σ|amplitude|².
    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of the branch: `norm_tracking * norm_sqr()`.
    pub fn probability(&self) -> f64 {
        self.norm_tracking * self.norm_sqr()
    }

    /// Rescaled to unit Σ|amplitude|², keeping `norm_tracking`.
    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(C64::new(1.0 / n.sqrt(), 0.0))
    }

    pub fn scaled(&self, c: C64) -> Self {
        FockState::from_map_unchecked(
            &self.registry,
            self.terms.iter().map(|(o, a)| (o.clone(), a * c)).collect(),
            self.norm_tracking,
        )
    }

    /// Largest photon number over all terms.
    pub fn max_photons(&self) -> usize {
        self.terms.keys().map(Occupation::photons).max().unwrap_or(0)
    }

    /// Photon number if every term carries the same number.
    pub fn photon_number(&self) -> Option<usize> {
        let mut it = self.terms.keys().map(Occupation::photons);
        let first = it.next()?;
        it.all(|n| n == first).then_some(first)
    }

    /// Keeps only the terms with exactly `n` photons.
    pub fn photon_sector(&self, n: usize) -> Self {
        FockState::from_map_unchecked(
            &self.registry,
            self.terms
                .iter()
                .filter(|(o, _)| o.photons() == n)
                .map(|(o, a)| (o.clone(), *a))
                .collect(),
            self.norm_tracking,
        )
    }

    fn same_registry(&self, other: &FockState) -> Result<()> {
        if Arc::ptr_eq(&self.registry, &other.registry) || self.registry == other.registry {
            Ok(())
        } else {
            Err(Error::RegistryMismatch)
        }
    }

    /// Termwise `c1·s1 + c2·s2`.
    ///
    /// When the operands carry different `norm_tracking`, each side's weight
    /// is folded into its amplitudes and the result tracks 1.
    pub fn superpose(c1: C64, s1: &FockState, c2: C64, s2: &FockState) -> Result<FockState> {
        s1.same_registry(s2)?;
        let (w1, w2, tracking) = if s1.norm_tracking == s2.norm_tracking {
            (1.0, 1.0, s1.norm_tracking)
        } else {
            (s1.norm_tracking.sqrt(), s2.norm_tracking.sqrt(), 1.0)
        };
        let mut map = BTreeMap::new();
        for (o, a) in &s1.terms {
            *map.entry(o.clone()).or_insert(C64::default()) += c1 * a * w1;
        }
        for (o, a) in &s2.terms {
            *map.entry(o.clone()).or_insert(C64::default()) += c2 * a * w2;
        }
        Ok(FockState::from_map_unchecked(&s1.registry, map, tracking))
    }

    /// ⟨self|other⟩ over amplitudes (tracking weights are not included).
    pub fn inner_product(&self, other: &FockState) -> Result<C64> {
        self.same_registry(other)?;
        let (small, large, conj_small) = if self.terms.len() <= other.terms.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut acc = C64::default();
        for (o, a) in &small.terms {
            if let Some(b) = large.terms.get(o) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        Ok(acc)
    }

    /// Product state over the merged registry (labels of `self` first).
    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        let merged = Arc::new(self.registry.merged(&other.registry)?);
        let total = self.max_photons() + other.max_photons();
        if total > merged.cutoff() {
            return Err(Error::CutoffExceeded {
                photons: total,
                cutoff: merged.cutoff(),
            });
        }
        let mut map = BTreeMap::new();
        for (o1, a1) in &self.terms {
            for (o2, a2) in &other.terms {
                let mut counts = Vec::with_capacity(merged.len());
                counts.extend_from_slice(o1.counts());
                counts.extend_from_slice(o2.counts());
                map.insert(Occupation::from_counts(counts), a1 * a2);
            }
        }
        Ok(FockState::from_map_unchecked(
            &merged,
            map,
            self.norm_tracking * other.norm_tracking,
        ))
    }

    /// Re-expresses the state on a registry that contains all of this
    /// registry's labels (same tbins); new modes are left empty.
    pub fn embed(&self, target: &Arc<ModeRegistry>) -> Result<FockState> {
        if target.tbins() != self.registry.tbins() {
            return Err(Error::RegistryMismatch);
        }
        let map_idx: Vec<usize> = self
            .registry
            .modes()
            .map(|m| target.mode_index(&m))
            .collect::<Result<_>>()?;
        let mut terms = BTreeMap::new();
        for (o, a) in &self.terms {
            let mut occ = Occupation::vacuum(target.len());
            for (i, &n) in o.counts().iter().enumerate() {
                occ.counts_mut()[map_idx[i]] = n;
            }
            if occ.photons() > target.cutoff() {
                return Err(Error::CutoffExceeded {
                    photons: occ.photons(),
                    cutoff: target.cutoff(),
                });
            }
            terms.insert(occ, *a);
        }
        Ok(FockState::from_map_unchecked(target, terms, self.norm_tracking))
    }

    /// Probability distribution of the occupations restricted to the modes
    /// of `labels` (all other modes summed out). Keys list counts in
    /// registry order of the kept modes.
    pub fn marginal_distribution(&self, labels: &[&str]) -> Result<BTreeMap<Vec<u8>, f64>> {
        let mut keep = Vec::new();
        for l in labels {
            keep.extend(self.registry.label_modes(l)?);
        }
        keep.sort_unstable();
        let mut out: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (o, a) in &self.terms {
            let key: Vec<u8> = keep.iter().map(|&i| o.get(i)).collect();
            *out.entry(key).or_default() += a.norm_sqr();
        }
        Ok(out)
    }

    /// Applies a polynomial in creation operators, `Σ_k c_k Π a†_{m}`, with
    /// bosonic factors √(n+1) per creation.
    pub fn create(&self, poly: &[(C64, Vec<usize>)]) -> Result<FockState> {
        let mut map: BTreeMap<Occupation, C64> = BTreeMap::new();
        for (coef, ops) in poly {
            for (o, a) in &self.terms {
                let mut occ = o.clone();
                let mut amp = a * coef;
                for &m in ops {
                    if m >= occ.len() {
                        return Err(Error::UnregisteredMode(format!("index {m}")));
                    }
                    let n = occ.get(m);
                    amp *= ((n as f64) + 1.0).sqrt();
                    occ.counts_mut()[m] = n + 1;
                }
                if occ.photons() > self.registry.cutoff() {
                    return Err(Error::CutoffExceeded {
                        photons: occ.photons(),
                        cutoff: self.registry.cutoff(),
                    });
                }
                *map.entry(occ).or_default() += amp;
            }
        }
        Ok(FockState::from_map_unchecked(
            &self.registry,
            map,
            self.norm_tracking,
        ))
    }

    /// Text form: a header with the registry and tracking weight, then one
    /// `counts<TAB>re<TAB>im` line per term. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} norm_tracking={}\n",
            self.registry.header(),
            self.norm_tracking
        );
        for (o, a) in &self.terms {
            out.push_str(&format!("{}\t{}\t{}\n", o, a.re, a.im));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<FockState> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let registry = Arc::new(ModeRegistry::parse_header(header)?);
        let tracking = header
            .split_whitespace()
            .find_map(|f| f.strip_prefix("norm_tracking="))
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line: 1,
                    message: "bad norm_tracking".into(),
                })
            })
            .transpose()?
            .unwrap_or(1.0);
        let mut terms = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |m: &str| Error::Parse {
                line: i + 2,
                message: m.to_string(),
            };
            let mut cols = line.split('\t');
            let (occ, re, im) = match (cols.next(), cols.next(), cols.next()) {
                (Some(o), Some(r), Some(m)) => (o, r, m),
                _ => return Err(err("expected three tab-separated columns")),
            };
            let counts = occ
                .split(',')
                .map(|c| c.trim().parse::<u8>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| err("bad occupation vector"))?;
            let re = re.trim().parse::<f64>().map_err(|_| err("bad real part"))?;
            let im = im.trim().parse::<f64>().map_err(|_| err("bad imaginary part"))?;
            terms.push((Occupation::from_counts(counts), C64::new(re, im)));
        }
        Ok(FockState::from_terms(&registry, terms)?.with_norm_tracking(tracking))
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (o, a) in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)|", a.re, a.im)?;
            let mut inner = true;
            for (i, &n) in o.counts().iter().enumerate() {
                if n == 0 {
                    continue;
                }
                if !inner {
                    f.write_str(" ")?;
                }
                inner = false;
                let m = self.registry.mode(i);
                if n > 1 {
                    write!(f, "{n}")?;
                }
                write!(f, "{m}")?;
            }
            f.write_str(">")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg(labels: &[&str], tbins: usize) -> Arc<ModeRegistry> {
        Arc::new(ModeRegistry::new(labels, tbins).unwrap())
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn registry_sizes() {
        let r = ModeRegistry::new(&["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4"], 1).unwrap();
        assert_eq!(r.len(), 16);
        assert_eq!(ModeRegistry::new(&["a1"], 2).unwrap().len(), 4);
        assert_eq!(
            ModeRegistry::new(&["a1", "a1"], 1),
            Err(Error::DuplicateLabel("a1".into()))
        );
        assert_eq!(ModeRegistry::new::<&str>(&[], 1), Err(Error::EmptyRegistry));
    }

    #[test]
    fn registry_indexing_is_dense_and_invertible() {
        let r = ModeRegistry::new(&["a1", "b1", "x"], 3).unwrap();
        for i in 0..r.len() {
            assert_eq!(r.mode_index(&r.mode(i)).unwrap(), i);
        }
        assert_eq!(r.index_of("a1", Polarization::H, 0).unwrap(), 0);
        assert_eq!(r.index_of("a1", Polarization::H, 2).unwrap(), 2);
        assert_eq!(r.index_of("a1", Polarization::V, 0).unwrap(), 3);
        assert_eq!(r.index_of("b1", Polarization::H, 0).unwrap(), 6);
        assert!(r.index_of("a1", Polarization::H, 3).is_err());
    }

    #[test]
    fn mode_text_round_trip() {
        let m = Mode::new("b3", Polarization::V, 1);
        assert_eq!(m.to_string(), "b3.V.1");
        assert_eq!(Mode::parse("b3.V.1").unwrap(), m);
        assert!(Mode::parse("b3.X.1").is_err());
    }

    #[test]
    fn single_photon_inner_products() {
        let r = reg(&["a1", "a2"], 1);
        let h = FockState::single(&r, &Mode::at("a1", Polarization::H)).unwrap();
        let v = FockState::single(&r, &Mode::at("a1", Polarization::V)).unwrap();
        assert_eq!(h.term_count(), 1);
        assert_eq!(h.inner_product(&h).unwrap(), c(1.0));
        assert_eq!(h.inner_product(&v).unwrap(), c(0.0));
        assert!(matches!(
            FockState::single(&r, &Mode::at("b9", Polarization::H)),
            Err(Error::UnregisteredMode(_))
        ));
    }

    #[test]
    fn superposition_cases() {
        let r = reg(&["a1"], 1);
        let h = FockState::single(&r, &Mode::at("a1", Polarization::H)).unwrap();
        let v = FockState::single(&r, &Mode::at("a1", Polarization::V)).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = FockState::superpose(c(s), &h, c(s), &v).unwrap();
        assert!((plus.norm_sqr() - 1.0).abs() < 1e-15);
        let zero = FockState::superpose(c(s), &h, c(-s), &h).unwrap();
        assert!(zero.is_zero());
        let id = FockState::superpose(c(1.0), &h, c(0.0), &v).unwrap();
        assert_eq!(id, h);

        let other = reg(&["a2"], 1);
        let w = FockState::single(&other, &Mode::at("a2", Polarization::H)).unwrap();
        assert_eq!(
            FockState::superpose(c(1.0), &h, c(1.0), &w),
            Err(Error::RegistryMismatch)
        );
        assert_eq!(h.inner_product(&w), Err(Error::RegistryMismatch));
    }

    #[test]
    fn tensor_product_of_single_photons() {
        let r1 = reg(&["a1"], 1);
        let r2 = reg(&["a2"], 1);
        let h1 = FockState::single(&r1, &Mode::at("a1", Polarization::H)).unwrap();
        let h2 = FockState::single(&r2, &Mode::at("a2", Polarization::H)).unwrap();
        let hh = h1.tensor(&h2).unwrap();
        assert_eq!(hh.registry().labels(), &["a1", "a2"]);
        let amp = hh
            .amplitude_of(&[Mode::at("a1", Polarization::H), Mode::at("a2", Polarization::H)])
            .unwrap();
        assert_eq!(amp, c(1.0));
        assert_eq!(h1.tensor(&h1), Err(Error::OverlappingLabels("a1".into())));
    }

    #[test]
    fn tensor_respects_cutoff() {
        let r1 = Arc::new(ModeRegistry::new(&["a1"], 1).unwrap().with_cutoff(2));
        let r2 = Arc::new(ModeRegistry::new(&["a2"], 1).unwrap().with_cutoff(2));
        let two = FockState::vacuum(&r1).create(&[(c(1.0), vec![0, 0])]).unwrap();
        let one = FockState::single(&r2, &Mode::at("a2", Polarization::H)).unwrap();
        assert!(matches!(
            two.tensor(&one),
            Err(Error::CutoffExceeded { photons: 3, cutoff: 2 })
        ));
    }

    #[test]
    fn creation_applies_bosonic_factors() {
        let r = reg(&["a1"], 1);
        let s = FockState::vacuum(&r).create(&[(c(1.0), vec![0, 0])]).unwrap();
        let occ = Occupation::from_counts(vec![2, 0]);
        assert!((s.amplitude(&occ) - c(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn display_is_readable() {
        let r = reg(&["a1"], 1);
        let h = FockState::single(&r, &Mode::at("a1", Polarization::H)).unwrap();
        assert_eq!(h.to_string(), "(1.000000+0.000000i)|a1.H.0>");
        assert_eq!(FockState::zero(&r).to_string(), "0");
    }

    #[test]
    fn text_header_carries_registry() {
        let r = reg(&["a1", "b2"], 2);
        let s = FockState::single(&r, &Mode::new("b2", Polarization::V, 1)).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("labels=a1,b2 tbins=2 cutoff=6 norm_tracking=1\n"));
        assert!(text.contains("0,0,0,0,0,0,0,1\t1\t0"));
    }

    fn arb_state() -> impl Strategy<Value = FockState> {
        arb_state_upto(DEFAULT_CUTOFF)
    }

    fn arb_state_upto(max: usize) -> impl Strategy<Value = FockState> {
        let r = reg(&["a1", "a2"], 1);
        prop::collection::vec(
            (prop::collection::vec(0u8..3, 4).prop_filter("cutoff", move |o| o.iter().map(|&n| n as usize).sum::<usize>() <= max), -1.0f64..1.0, -1.0f64..1.0),
            1..8,
        )
        .prop_map(move |terms| {
            FockState::from_terms(
                &r,
                terms
                    .into_iter()
                    .map(|(o, re, im)| (Occupation::from_counts(o), C64::new(re, im))),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(s in arb_state(), w in 0.0f64..1.0) {
            let s = s.with_norm_tracking(w);
            let back = FockState::from_text(&s.to_text()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn self_inner_product_is_real_and_non_negative(s in arb_state()) {
            let ip = s.inner_product(&s).unwrap();
            prop_assert!(ip.im.abs() <= 1e-15 * ip.re.abs().max(1.0));
            prop_assert!(ip.re >= 0.0);
            prop_assert!((ip.re - s.norm_sqr()).abs() < 1e-12);
        }

        #[test]
        fn cauchy_schwarz(s in arb_state(), t in arb_state()) {
            let ip = s.inner_product(&t).unwrap();
            prop_assert!(ip.norm() <= (s.norm_sqr() * t.norm_sqr()).sqrt() + 1e-12);
            let rev = t.inner_product(&s).unwrap();
            prop_assert!((ip - rev.conj()).norm() < 1e-12);
        }

        #[test]
        fn tensor_norm_is_multiplicative_and_marginals_factor(s in arb_state_upto(3), t in arb_state_upto(3)) {
            let r3 = reg(&["a3", "a4"], 1);
            let t = FockState::from_terms(&r3, t.terms().map(|(o, a)| (o.clone(), *a))).unwrap();
            let st = s.tensor(&t).unwrap();
            prop_assert!((st.norm_sqr() - s.norm_sqr() * t.norm_sqr()).abs() < 1e-12);

            // Marginal over the second factor's labels, scaled by the first
            // factor's weight, recovers the second factor's distribution.
            let marg = st.marginal_distribution(&["a3", "a4"]).unwrap();
            let direct = t.marginal_distribution(&["a3", "a4"]).unwrap();
            prop_assert_eq!(marg.len(), direct.len());
            for (k, p) in &direct {
                prop_assert!((marg[k] - p * s.norm_sqr()).abs() < 1e-12);
            }
        }
    }
}
