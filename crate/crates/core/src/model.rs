//! Exogenous model parameters and the age dynamics.
//!
//! Three views of the same process live here: the stochastic age
//! (simulated in [`crate::sim`]), its expectation under a uniform sampling
//! cost on `[0, cost_max]`, and the linearized expectation where the
//! state-dependent reduction `age - reset_age` is replaced by a constant
//! estimator `delta`.

use crate::error::{Error, Result};

/// All exogenous scalars of the pricing problem. Ages are in slot units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Probability that one user arrives in a slot.
    pub arrival_prob: f64,
    /// Upper support `b` of the uniform sampling-cost distribution.
    pub cost_max: f64,
    /// Per-slot discount factor, strictly inside (0, 1).
    pub discount: f64,
    /// Age right after a received update (transmission delay), at most one slot.
    pub reset_age: f64,
    /// Age at slot 0.
    pub initial_age: f64,
    /// Number of slots `T`; slots run over `0..=T`.
    pub horizon: usize,
}

impl ModelParams {
    pub fn new(
        arrival_prob: f64,
        cost_max: f64,
        discount: f64,
        reset_age: f64,
        initial_age: f64,
        horizon: usize,
    ) -> Result<Self> {
        let params = Self {
            arrival_prob,
            cost_max,
            discount,
            reset_age,
            initial_age,
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return bad("arrival_prob", "must lie in [0, 1]");
        }
        if !(self.cost_max > 0.0 && self.cost_max.is_finite()) {
            return bad("cost_max", "must be positive and finite");
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount", "must lie strictly inside (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.reset_age) {
            return bad("reset_age", "must lie in [0, 1]");
        }
        if !(self.initial_age >= 0.0 && self.initial_age.is_finite()) {
            return bad("initial_age", "must be nonnegative and finite");
        }
        if self.horizon < 1 {
            return bad("horizon", "must be at least 1");
        }
        Ok(())
    }

    /// Same parameters with a different horizon.
    pub fn with_horizon(self, horizon: usize) -> Self {
        Self { horizon, ..self }
    }

    /// Weight `alpha / b` on the squared price in the stage cost.
    pub fn payment_weight(&self) -> f64 {
        self.arrival_prob / self.cost_max
    }

    /// Probability that a price is offered to an arriving user and accepted.
    pub fn acceptance_prob(&self, price: f64) -> f64 {
        self.arrival_prob * price / self.cost_max
    }

    /// Coupling `k = alpha (delta + 1)^2 / b` shared by all recursions.
    pub fn coupling(&self, delta: f64) -> f64 {
        self.arrival_prob * (delta + 1.0).powi(2) / self.cost_max
    }

    /// Clamp a price into `[0, cost_max]`.
    pub fn clip_price(&self, price: f64) -> f64 {
        price.clamp(0.0, self.cost_max)
    }

    pub(crate) fn check_price(&self, price: f64) -> Result<()> {
        if (0.0..=self.cost_max).contains(&price) {
            Ok(())
        } else {
            Err(Error::PriceOutOfRange {
                price,
                cost_max: self.cost_max,
            })
        }
    }
}

fn check_age(age: f64) -> Result<()> {
    if age >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeAge(age))
    }
}

/// Stage cost `age^2 + (alpha / b) price^2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StageCost(pub f64);

impl StageCost {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Expected age one slot ahead when `price` is offered and costs are uniform.
pub fn true_expected_age_step(params: &ModelParams, age: f64, price: f64) -> Result<f64> {
    params.check_price(price)?;
    check_age(age)?;
    let accept = params.acceptance_prob(price);
    Ok(age - (age - params.reset_age) * accept + (1.0 - accept))
}

/// Expected age one slot ahead with the reduction replaced by `delta`.
pub fn linearized_age_step(params: &ModelParams, age: f64, price: f64, delta: f64) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::NegativeDelta(delta));
    }
    params.check_price(price)?;
    let accept = params.acceptance_prob(price);
    Ok(age - delta * accept + (1.0 - accept))
}

pub fn stage_cost(params: &ModelParams, age: f64, price: f64) -> Result<StageCost> {
    check_age(age)?;
    params.check_price(price)?;
    Ok(StageCost(
        age * age + params.payment_weight() * price * price,
    ))
}

/// Transition rule used when rolling a pricing policy forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    /// Exact expected-age recursion.
    Expected,
    /// Linearized recursion with a fixed reduction estimator.
    Linearized { delta: f64 },
}

impl Dynamics {
    pub fn step(&self, params: &ModelParams, age: f64, price: f64) -> Result<f64> {
        match *self {
            Dynamics::Expected => true_expected_age_step(params, age, price),
            Dynamics::Linearized { delta } => linearized_age_step(params, age, price, delta),
        }
    }
}
