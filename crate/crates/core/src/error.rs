use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("probability {value} for {what} is outside [0, 1]")]
    InvalidProbability { what: &'static str, value: f64 },

    #[error("class distribution sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("class distribution is empty")]
    EmptyClassDistribution,

    #[error("invalid scale parameter {value} at position {index}")]
    InvalidScale { index: usize, value: f64 },

    #[error("expected {expected} scale parameters, got {got}")]
    ScaleCount { expected: usize, got: usize },

    #[error("intensity weight {0} must be positive and finite")]
    InvalidWeight(f64),

    #[error("class index {class_id} is outside a vocabulary of {num_classes} classes")]
    ClassOutOfRange { class_id: usize, num_classes: usize },

    #[error("problem too large for exhaustive enumeration: {what}")]
    TooLarge { what: String },

    #[error(
        "Bernoulli component {index} has existence probability 1; \
         its cost entries are -inf (clamp r below 1 to evaluate)"
    )]
    CertainExistence { index: usize },

    #[error("cost matrix entry ({row}, {col}) is {value}; entries must be finite or +inf")]
    InvalidCost { row: usize, col: usize, value: f64 },

    #[error("cost matrix has {got} entries, expected {expected}")]
    CostShape { expected: usize, got: usize },

    #[error("number of assignments q must be at least 1")]
    ZeroQ,

    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),

    #[error("{predictions} predictions cannot cover {objects} objects")]
    TooFewPredictions { predictions: usize, objects: usize },

    #[error("no feasible assignment exists")]
    Infeasible,

    #[error("box family {0:?} is not supported here; expected LaplaceIndependent")]
    UnsupportedFamily(crate::types::BoxFamily),

    #[error("existence probability of prediction {index} is {r}; gradients need r in (0, 1)")]
    ExistenceBoundary { index: usize, r: f64 },

    #[error("prediction {prediction}, coordinate {coordinate}: box mean equals the target, |x| is not differentiable")]
    L1Kink { prediction: usize, coordinate: usize },

    #[error("{0} must be positive")]
    NonPositive(&'static str),

    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Csv(_))
    }
}
