use core::fmt;

/// Errors raised by the diffusion kernels and the machinery built on them.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A real argument is outside its admissible range.
    Domain(&'static str),
    /// A quantity that must be divided by is zero (e.g. `1 - gamma_t` at `t = 0`).
    Singularity(&'static str),
    /// Times or levels given in the wrong order (`s >= t`).
    Ordering(&'static str),
    /// Category index not in `[0, K)`.
    Index { index: usize, categories: usize },
    /// Vector or tensor dimensions disagree.
    Shape(&'static str),
    /// Probability vector failed validation.
    NotASimplex { sum: f64 },
    /// The true distribution has mass where the model has none.
    Support { category: usize },
    /// Enumeration would exceed the supported table size.
    Capacity { states: usize, limit: usize },
    /// A computation produced NaN or infinity.
    NonFinite(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Singularity(msg) => write!(f, "singularity: {msg}"),
            Error::Ordering(msg) => write!(f, "ordering error: {msg}"),
            Error::Index { index, categories } => {
                write!(f, "category index {index} out of range for K = {categories}")
            }
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NotASimplex { sum } => {
                write!(f, "not a probability vector (sum = {sum}, or negative/non-finite entry)")
            }
            Error::Support { category } => write!(
                f,
                "support violation: model assigns zero probability to category {category}"
            ),
            Error::Capacity { states, limit } => {
                write!(f, "capacity exceeded: {states} states, limit {limit}")
            }
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
