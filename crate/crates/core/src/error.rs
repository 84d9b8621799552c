use thiserror::Error;

/// Errors raised by the closed-form model and the cost-optimal search.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("`{name}` must be a non-negative finite number, got {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("performance level {level} is not reachable (zero-shot performance is {a_zs})")]
    InfeasiblePerformance { level: f64, a_zs: f64 },
    #[error("manual-data coefficient is zero: the isoperf is a vertical line in T")]
    DegenerateIsoperf,
    #[error("isoperf slope is singular at t = {t}, m = {m}")]
    SingularSlope { t: f64, m: f64 },
    #[error("translated-data term is inert: the expansion path is the M-axis (T = 0)")]
    DegeneratePath,
    #[error("performance level {level} needs t = {required_t} translated examples but at most {p_max} are realizable")]
    Unrealizable {
        level: f64,
        required_t: f64,
        p_max: f64,
    },
    #[error("performance levels must be strictly increasing (level {index} = {value})")]
    UnorderedLevels { index: usize, value: f64 },
    #[error("root bracket could not be established for level {level}")]
    NoBracket { level: f64 },
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{found} observations is too few to fit {needed} parameters")]
    Underdetermined { found: usize, needed: usize },
    #[error("all observations share the same (t, m) input; the fit is rank deficient")]
    RankDeficient,
    #[error("invalid fit option `{name}`: {reason}")]
    InvalidOption {
        name: &'static str,
        reason: &'static str,
    },
    #[error("kernel matrix is ill-conditioned even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
    #[error("no restart produced a finite objective")]
    NoConvergence,
    #[error("cannot split {0} observations into non-empty train and test sets")]
    SplitTooSmall(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("isoperf at level {level} has no feasible vertex on the requested grid")]
    EmptyContour { level: f64 },
    #[error("no contour vertex at level {level} lies inside the realizable region")]
    Infeasible { level: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One rejected input row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("{} row(s) failed validation; first: {}", .0.len(), .0[0])]
    Validation(Vec<RowError>),
    #[error("observation set is empty")]
    Empty,
    #[error("observations mix experiment contexts ({0} vs {1})")]
    MixedContext(String, String),
    #[error("duplicate observation at t = {t}, m = {m}, seed = {seed:?}")]
    Duplicate { t: f64, m: f64, seed: Option<u64> },
    #[error("invalid observation: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("nothing to draw")]
    EmptySpec,
    #[error("axis range must be positive and finite, got [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("series `{0}` is empty")]
    EmptySeries(String),
    #[error("series `{label}` is not sorted by cost at index {index}")]
    UnsortedSeries { label: String, index: usize },
}
