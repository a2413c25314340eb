use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate spatial label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid spatial label `{0}`")]
    InvalidLabel(String),
    #[error("registry needs at least one spatial label and one temporal bin")]
    EmptyRegistry,
    #[error("mode `{0}` is not registered")]
    UnregisteredMode(String),
    #[error("spatial label `{0}` is not registered")]
    UnregisteredLabel(String),
    #[error("states live on different mode registries")]
    RegistryMismatch,
    #[error("registries share spatial label `{0}`")]
    OverlappingLabels(String),
    #[error("photon number {photons} exceeds the cutoff {cutoff}")]
    CutoffExceeded { photons: usize, cutoff: usize },
    #[error("element `{name}` failed its {check} check (deviation {deviation:e})")]
    InvalidElement {
        name: String,
        check: &'static str,
        deviation: f64,
    },
    #[error("element `{0}` lists a mode twice")]
    RepeatedElementMode(String),
    #[error("beam splitter ports must be four distinct labels, got {0:?}")]
    LabelCollision(Vec<String>),
    #[error("temporal-bin mixing needs at least 2 bins, registry has {0}")]
    TooFewTimeBins(usize),
    #[error("invalid distinguishability model: {0}")]
    InvalidDistinguishability(String),
    #[error("pair amplitude {0} outside the perturbative range [0, 0.3]")]
    EpsilonOutOfRange(f64),
    #[error("max_pairs must be 1 or 2, got {0}")]
    InvalidPairCount(usize),
    #[error("input amplitudes have squared norm {0}, expected 1")]
    NonNormalizedInput(f64),
    #[error("input state is entangled; polarizer preparation needs a product state")]
    NotProductInput,
    #[error("cannot parse input spec `{0}`")]
    InputParse(String),
    #[error("invalid herald rule: {0}")]
    InvalidHerald(String),
    #[error("state is not normalized (squared norm {0})")]
    NonNormalizedState(f64),
    #[error("state has no well-defined two-qubit form on the output labels: {0}")]
    NotQubitState(String),
    #[error("no Pauli correction maps herald outcome {0} onto CNOT")]
    NoFeedForward(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
