//! Error types for every stage of the pipeline.
//!
//! Each error category maps to a process-level outcome in the companion
//! CLI crate: data-shaped problems (parsing, empty inputs, coverage gaps)
//! are distinct from backend failures, which are distinct from budget
//! exhaustion, so callers can translate them into the documented exit
//! codes without string-matching messages.

use alloc::string::String;
use core::fmt;

/// Errors raised while ingesting, filtering, or splitting interaction data.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusError {
    /// A line could not be parsed; carries the 1-based line number.
    Parse {
        /// 1-based line number of the offending line.
        line: usize,
        /// Human-readable reason (wrong field count, bad number, bad JSON…).
        reason: String,
    },
    /// A rating fell outside the accepted `[1, 5]` range.
    RatingOutOfRange {
        /// 1-based line number of the offending record.
        line: usize,
        /// The rejected rating value.
        rating: f64,
    },
    /// A dataset cannot be built from an empty interaction log.
    EmptyLog,
    /// No user had enough interactions to populate train, valid, and test.
    NoSplitUsers,
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::Parse { line, reason } => {
                write!(f, "parse error at line {line}: {reason}")
            }
            CorpusError::RatingOutOfRange { line, rating } => {
                write!(f, "rating {rating} out of range [1,5] at line {line}")
            }
            CorpusError::EmptyLog => write!(f, "interaction log is empty"),
            CorpusError::NoSplitUsers => {
                write!(f, "no user has the 3+ interactions required for a split")
            }
        }
    }
}

impl core::error::Error for CorpusError {}

/// Errors raised by evaluation metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    /// The relevant set was empty.
    EmptyRelevant,
    /// The negative pool was empty.
    EmptyNegatives,
    /// A user cannot have interacted with more items than exist.
    TrainCountExceedsCatalog {
        /// Claimed number of train interactions.
        train_count: usize,
        /// Catalog size.
        n_items: usize,
    },
    /// The catalog size must be at least one.
    EmptyCatalog,
    /// Paired samples had different lengths.
    LengthMismatch {
        /// Length of the first sample.
        a: usize,
        /// Length of the second sample.
        b: usize,
    },
    /// Fewer than two pairs: no variance estimate is possible.
    TooFewSamples {
        /// Number of pairs provided.
        n: usize,
    },
    /// All pairwise differences were identical: the t statistic is undefined.
    DegenerateConstantDifference {
        /// The constant difference shared by every pair.
        diff: f64,
    },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::EmptyRelevant => write!(f, "relevant set is empty"),
            MetricsError::EmptyNegatives => write!(f, "negative pool is empty"),
            MetricsError::TrainCountExceedsCatalog { train_count, n_items } => {
                write!(f, "train count {train_count} exceeds catalog size {n_items}")
            }
            MetricsError::EmptyCatalog => write!(f, "catalog size must be >= 1"),
            MetricsError::LengthMismatch { a, b } => {
                write!(f, "paired samples differ in length: {a} vs {b}")
            }
            MetricsError::TooFewSamples { n } => {
                write!(f, "need at least 2 pairs for a paired t-test, got {n}")
            }
            MetricsError::DegenerateConstantDifference { diff } => {
                write!(f, "degenerate: constant difference {diff} between samples")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

/// Errors raised while resolving gate thresholds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateError {
    /// Thresholds cannot be resolved from an empty profile list.
    EmptyProfiles,
    /// A threshold fell outside `[0, 1]` after resolution.
    ThresholdOutOfRange {
        /// Name of the offending threshold (`"t_p"` or `"t_s"`).
        which: &'static str,
    },
}

impl fmt::Display for GateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateError::EmptyProfiles => write!(f, "cannot resolve thresholds: no profiles"),
            GateError::ThresholdOutOfRange { which } => {
                write!(f, "threshold {which} must lie in [0,1]")
            }
        }
    }
}

impl core::error::Error for GateError {}

/// Errors raised by recommender fitting, scoring, or score import.
#[derive(Debug, Clone, PartialEq)]
pub enum RecsysError {
    /// Training data contained no interactions at all.
    EmptyTrain,
    /// An imported score row referenced an unknown external user ID.
    UnknownUser {
        /// 1-based row number in the score file.
        line: usize,
        /// The unresolvable external ID.
        id: String,
    },
    /// An imported score row referenced an unknown external item ID.
    UnknownItem {
        /// 1-based row number in the score file.
        line: usize,
        /// The unresolvable external ID.
        id: String,
    },
    /// The same (user, item) pair appeared twice in a score import.
    DuplicateScore {
        /// 1-based row number of the second occurrence.
        line: usize,
    },
    /// A score lookup hit a user with no imported rows at all.
    UserNotCovered {
        /// Internal index of the uncovered user.
        user: usize,
    },
    /// Persisted model parts have inconsistent dimensions.
    ShapeMismatch {
        /// Which part failed its dimension check.
        what: String,
    },
}

impl fmt::Display for RecsysError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecsysError::EmptyTrain => write!(f, "training data is empty"),
            RecsysError::UnknownUser { line, id } => {
                write!(f, "unknown user '{id}' at line {line}")
            }
            RecsysError::UnknownItem { line, id } => {
                write!(f, "unknown item '{id}' at line {line}")
            }
            RecsysError::DuplicateScore { line } => {
                write!(f, "duplicate (user, item) score at line {line}")
            }
            RecsysError::UserNotCovered { user } => {
                write!(f, "imported scores cover no items for user index {user}")
            }
            RecsysError::ShapeMismatch { what } => {
                write!(f, "model part has inconsistent dimensions: {what}")
            }
        }
    }
}

impl core::error::Error for RecsysError {}

/// Errors raised while profiling users: either the metric itself failed
/// or the recommender could not produce scores.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileError {
    /// A metric computation failed.
    Metrics(MetricsError),
    /// The recommender could not score a user.
    Recsys(RecsysError),
}

impl From<MetricsError> for ProfileError {
    fn from(e: MetricsError) -> Self {
        ProfileError::Metrics(e)
    }
}

impl From<RecsysError> for ProfileError {
    fn from(e: RecsysError) -> Self {
        ProfileError::Recsys(e)
    }
}

impl fmt::Display for ProfileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileError::Metrics(e) => write!(f, "{e}"),
            ProfileError::Recsys(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ProfileError {}

/// Errors raised while building, rendering, or parsing prompts.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptError {
    /// An item had no display title.
    MissingTitle {
        /// Internal index of the title-less item.
        item: usize,
    },
    /// A prompt cannot be rendered from an empty history.
    EmptyHistory,
    /// A prompt needs at least one candidate.
    EmptyCandidates,
    /// No candidate title could be matched anywhere in the response.
    UnparseableResponse,
}

impl fmt::Display for PromptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptError::MissingTitle { item } => {
                write!(f, "no title for item index {item}")
            }
            PromptError::EmptyHistory => write!(f, "cannot render a prompt for an empty history"),
            PromptError::EmptyCandidates => write!(f, "candidate list is empty"),
            PromptError::UnparseableResponse => write!(f, "unparseable response: no candidate title matched"),
        }
    }
}

impl core::error::Error for PromptError {}

/// Errors raised by LLM backends and their budget controls.
#[derive(Debug, Clone, PartialEq)]
pub enum LlmError {
    /// Backend misconfiguration detected before any request was sent.
    Config(String),
    /// Authentication was rejected; retrying cannot help.
    Auth(String),
    /// The backend stayed unreachable or kept failing after all retries.
    Unavailable(String),
    /// A budget limit would be exceeded; the request was never dispatched.
    Budget(BudgetExceeded),
}

/// Which budget dimension ran out, with the numbers that prove it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetExceeded {
    /// The request-count ceiling was hit.
    Requests {
        /// Configured maximum number of requests.
        max: u64,
        /// Requests already spent when the charge was attempted.
        spent: u64,
    },
    /// The cumulative prompt-character ceiling was hit.
    PromptChars {
        /// Configured maximum total prompt characters.
        max: u64,
        /// Characters already spent.
        spent: u64,
        /// Size of the request that did not fit.
        attempted: u64,
    },
}

impl fmt::Display for LlmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmError::Config(msg) => write!(f, "backend configuration error: {msg}"),
            LlmError::Auth(msg) => write!(f, "authentication failed: {msg}"),
            LlmError::Unavailable(msg) => write!(f, "backend unavailable: {msg}"),
            LlmError::Budget(BudgetExceeded::Requests { max, spent }) => {
                write!(f, "request budget exhausted: {spent} of {max} spent")
            }
            LlmError::Budget(BudgetExceeded::PromptChars { max, spent, attempted }) => {
                write!(
                    f,
                    "prompt-character budget exhausted: {spent} of {max} spent, next request needs {attempted}"
                )
            }
        }
    }
}

impl core::error::Error for LlmError {}

/// Errors raised while merging rankings or assembling the report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeError {
    /// The two rankings were not permutations of the same candidate set.
    CandidateSetMismatch,
}

impl fmt::Display for MergeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergeError::CandidateSetMismatch => {
                write!(f, "rankings are not permutations of the same candidate set")
            }
        }
    }
}

impl core::error::Error for MergeError {}

/// Errors raised by report emission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReportError {
    /// Funnel stages must be non-increasing: total >= sparse >= weak.
    FunnelOrdering {
        /// Total user count.
        total: usize,
        /// Sparse user count.
        sparse: usize,
        /// Weak user count.
        weak: usize,
    },
    /// Histograms need at least one bin.
    ZeroBins,
    /// Histograms and scatters need at least one profile.
    EmptyProfiles,
}

impl fmt::Display for ReportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportError::FunnelOrdering { total, sparse, weak } => {
                write!(f, "funnel must be non-increasing, got {total} >= {sparse} >= {weak}")
            }
            ReportError::ZeroBins => write!(f, "histogram needs at least one bin"),
            ReportError::EmptyProfiles => write!(f, "no profiles to emit"),
        }
    }
}

impl core::error::Error for ReportError {}
