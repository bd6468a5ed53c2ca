use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("inadmissible word: no edge {from} -> {to}")]
    Inadmissible { from: String, to: String },
    #[error("empty word")]
    EmptyWord,
    #[error("no cycle reachable from state {state} within search cap {cap}")]
    NoCycleReachable { state: String, cap: usize },
    #[error("points have different directions")]
    DirectionMismatch,
    #[error("potential is undefined on word [{0}]")]
    MissingWeight(String),
    #[error("operation requires a Markovian potential (range 2), got range {0}")]
    RangeTooLarge(usize),
    #[error("Green series diverges after {n_terms} terms (partial sum {partial:e})")]
    Diverging { n_terms: usize, partial: f64 },
    #[error("no convergence certificate after {n_terms} terms (partial sum {partial:e})")]
    BudgetExhausted { n_terms: usize, partial: f64 },
    #[error("backward layer at depth {depth} has {size} states, over the layer budget")]
    LayerLimit { depth: usize, size: usize },
    #[error("floating-point overflow after {0} operator iterations")]
    Overflow(usize),
    #[error("kernel profiles use different test sets")]
    MismatchedTestSet,
    #[error("orbit `{0}` does not escape the test-set states")]
    NotEscaping(String),
    #[error("orbit `{tag}` is not Cauchy: trailing rho step {step:e} exceeds {tol:e}")]
    NotCauchy { tag: String, step: f64, tol: f64 },
    #[error("measure is not excessive on cylinder [{word}] (slack {slack:e})")]
    NotExcessive { word: String, slack: f64 },
    #[error("conditioning event has zero mass for tail starting at {0}")]
    ZeroMassConditioning(String),
    #[error("function is not harmonic at state {state} (residual {residual:e})")]
    NotHarmonic { state: String, residual: f64 },
    #[error("backward sampler has no admissible extension with positive weight at {0}")]
    SamplerDegenerate(String),
    #[error("state space limit exceeded: {0}")]
    StateOutOfRange(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: field `{field}`: {message}")]
    Parse { line: usize, field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
