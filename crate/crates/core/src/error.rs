use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("continued fraction not certified beyond depth {certified} (requested {requested})")]
    PrecisionHorizon { requested: usize, certified: usize },

    #[error("integer overflow in convergent recurrence at index {index}")]
    IntegerOverflow { index: usize },

    #[error("floating overflow in scale-function products at site {site}")]
    ProductOverflow { site: i64 },

    #[error("site {site} outside table window [-{window}, {window}]")]
    Window { site: i64, window: usize },

    #[error("{q} is not a close return time of the frequency")]
    NotCloseReturn { q: u64 },

    #[error("requested {requested} steps exceeds horizon {horizon}")]
    HorizonExceeded { requested: u64, horizon: u64 },

    #[error("distribution carries absorbed mass {0:e}; projection refused")]
    AbsorbedMass(f64),

    #[error("measure is not normalized")]
    Unnormalized,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),
}

pub type Result<T> = std::result::Result<T, Error>;
