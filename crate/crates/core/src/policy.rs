use crate::error::Result;
use crate::model::ModelParams;
use crate::oracle::ValueTable;
use crate::riccati::{price_at, RiccatiTables};
use crate::steady_state::{steady_price, SteadyState};

/// A rule mapping `(slot, age)` to a price in `[0, cost_max]`.
#[derive(Debug, Clone)]
pub enum PricingPolicy {
    /// Clipped finite-horizon price from the backward tables.
    FiniteHorizon(RiccatiTables),
    /// Clipped stationary price.
    SteadyState(SteadyState),
    /// Same price every slot.
    Constant(f64),
    /// Minimizing price stored at the nearest oracle grid age.
    OracleTable(Box<ValueTable>),
}

impl PricingPolicy {
    pub fn price(&self, params: &ModelParams, t: usize, age: f64) -> Result<f64> {
        match self {
            PricingPolicy::FiniteHorizon(tables) => price_at(params, tables, t, age),
            PricingPolicy::SteadyState(ss) => Ok(steady_price(params, ss, age)),
            PricingPolicy::Constant(price) => {
                params.check_price(*price)?;
                Ok(*price)
            }
            PricingPolicy::OracleTable(table) => Ok(table.nearest_price(t, age)),
        }
    }

    /// Whether the price reacts to the age at all.
    pub fn is_age_dependent(&self) -> bool {
        !matches!(self, PricingPolicy::Constant(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            PricingPolicy::FiniteHorizon(_) => "finite",
            PricingPolicy::SteadyState(_) => "steady",
            PricingPolicy::Constant(_) => "constant",
            PricingPolicy::OracleTable(_) => "oracle",
        }
    }
}
