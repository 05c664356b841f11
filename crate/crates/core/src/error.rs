use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("price {price} outside [0, {cost_max}]")]
    PriceOutOfRange { price: f64, cost_max: f64 },

    #[error("negative age {0}")]
    NegativeAge(f64),

    #[error("negative delta {0}")]
    NegativeDelta(f64),

    #[error("slot {t} outside horizon 0..={horizon}")]
    SlotOutOfRange { t: usize, horizon: usize },

    #[error("age {age} at slot {t} leaves the domain [0, {bound}]")]
    DomainViolation { t: usize, age: f64, bound: f64 },

    #[error("no nonnegative delta solves the steady-state equation (residual at delta=0 is {residual_at_zero})")]
    NoNonnegativeRoot { residual_at_zero: f64 },

    #[error("delta iteration did not converge after {iterations} rounds (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("age {age} at slot {t} escapes the oracle grid [{age_min}, {age_max}]")]
    GridEscape {
        t: usize,
        age: f64,
        age_min: f64,
        age_max: f64,
    },

    #[error("comparison needs at least {required} replications, got {got}")]
    TooFewReplications { required: usize, got: usize },

    #[error("{0}")]
    Unsupported(String),
}
