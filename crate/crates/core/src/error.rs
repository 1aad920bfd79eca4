use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChemError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown element '{symbol}' at byte {offset}")]
    UnknownElement { symbol: String, offset: usize },
    #[error("unclosed ring bond {label} opened at byte {offset}")]
    UnclosedRing { label: u32, offset: usize },
    #[error("unclosed branch opened at byte {offset}")]
    UnclosedBranch { offset: usize },
    #[error("impossible valence on atom {atom} ({symbol})")]
    Valence { atom: usize, symbol: String },
    #[error("kekulization failed: {0}")]
    Kekulization(String),
    #[error("duplicate atom map {0}")]
    DuplicateMap(u32),
    #[error("invalid bond: {0}")]
    InvalidBond(String),
    #[error("periodic table config: {0}")]
    Config(String),
}

/// Why a BE matrix could not be turned back into molecules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: i32 },
    #[error("asymmetric entries at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("odd number of bond electrons ({value}) between atoms {row} and {col}")]
    OddBondElectrons { row: usize, col: usize, value: i32 },
    #[error("valence violation on atom {atom} ({symbol}): {reason}")]
    ValenceViolation { atom: usize, symbol: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeError {
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error("atom lists differ: {0}")]
    AtomListMismatch(String),
    #[error("negative lone-pair count on atom {atom} ({symbol})")]
    NegativeLonePairs { atom: usize, symbol: String },
    #[error("matrix of size {size} cannot be padded to {padding}")]
    Padding { size: usize, padding: usize },
    #[error("delta does not sum to zero (sum = {0})")]
    NonZeroDelta(f64),
    #[error("malformed matrix dump: {0}")]
    Dump(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoundingError {
    #[error("target sum {target} unreachable from values summing to {sum:.4} over {count} entries")]
    InfeasibleTarget { target: i64, sum: f64, count: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite vector field at Euler step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite activations in layer {layer}")]
    NonFinite { layer: usize },
    #[error("training diverged at step {step}: loss is {loss} (batch records {batch:?})")]
    Diverged { step: usize, loss: f64, batch: Vec<String> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Be(#[from] BeError),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("split needs at least {needed} reactions, found {found}")]
    TooFewReactions { needed: usize, found: usize },
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error("conservation breach after revising pathway: {0}")]
    ConservationBreach(String),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Be(#[from] BeError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing reference for record {0}")]
    MissingReference(usize),
}
