//! Brute-force dynamic programming on an age grid, used to check the
//! closed-form policy.
//!
//! Values at off-grid successor ages are read with three-point quadratic
//! interpolation, which reproduces the quadratic value function of the
//! linearized problem exactly. Prices are scanned on a uniform grid over
//! `[0, cost_max]`; ties go to the smaller price.
//!
//! Cost is `O(T * ages * prices)`; horizons are capped at
//! [`ORACLE_MAX_HORIZON`]. The default grids at `T = 8` take well under a
//! second in release builds.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Dynamics, ModelParams};
use crate::riccati::{optimal_price_formula, unclipped_price_at, RiccatiTables};

pub const ORACLE_MAX_HORIZON: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub price_step: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub age_step: f64,
}

impl GridSpec {
    /// Price step `1e-3 b`, age step `1e-2`, ages over `[min(A0, A(0)), A(0) + T]`.
    pub fn default_for(params: &ModelParams) -> Self {
        Self {
            price_step: 1e-3 * params.cost_max,
            age_min: params.reset_age.min(params.initial_age),
            age_max: params.initial_age + params.horizon as f64,
            age_step: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidParameter {
                name: "grid",
                reason: reason.to_string(),
            })
        };
        if !(self.price_step > 0.0 && self.age_step > 0.0) {
            return bad("steps must be positive");
        }
        if !(self.age_min >= 0.0 && self.age_max >= self.age_min) {
            return bad("need 0 <= age_min <= age_max");
        }
        if self.age_count() < 3 {
            return bad("age grid needs at least three points");
        }
        Ok(())
    }

    pub fn age_count(&self) -> usize {
        ((self.age_max - self.age_min) / self.age_step - 1e-9)
            .ceil()
            .max(0.0) as usize
            + 1
    }

    pub fn ages(&self) -> Vec<f64> {
        (0..self.age_count())
            .map(|i| self.age_min + i as f64 * self.age_step)
            .collect()
    }

    pub fn prices(&self, cost_max: f64) -> Vec<f64> {
        let n = (cost_max / self.price_step + 1e-9).floor() as usize;
        let mut prices: Vec<f64> = (0..=n).map(|j| j as f64 * self.price_step).collect();
        if let Some(&last) = prices.last() {
            if last < cost_max * (1.0 - 1e-12) {
                prices.push(cost_max);
            } else {
                *prices.last_mut().unwrap() = cost_max;
            }
        }
        prices
    }

    fn upper(&self) -> f64 {
        self.age_min + (self.age_count() - 1) as f64 * self.age_step
    }

    /// Three-point Lagrange interpolation around the nearest grid index.
    /// `None` outside the grid; infinite if any stencil value is.
    fn interpolate(&self, values: &[f64], age: f64) -> Option<f64> {
        let pos = (age - self.age_min) / self.age_step;
        let last = values.len() - 1;
        if pos < -1e-9 || pos > last as f64 + 1e-9 {
            return None;
        }
        let centre = (pos.round() as usize).clamp(1, last - 1);
        let u = pos - centre as f64;
        if u.abs() < 1e-9 {
            return Some(values[centre]);
        }
        let (lo, mid, hi) = (values[centre - 1], values[centre], values[centre + 1]);
        if !(lo.is_finite() && mid.is_finite() && hi.is_finite()) {
            return Some(f64::INFINITY);
        }
        Some(lo * u * (u - 1.0) / 2.0 - mid * (u - 1.0) * (u + 1.0) + hi * u * (u + 1.0) / 2.0)
    }
}

/// Backward-inducted values and minimizing prices on the age grid.
#[derive(Debug, Clone)]
pub struct ValueTable {
    grid: GridSpec,
    dynamics: Dynamics,
    ages: Vec<f64>,
    prices: Vec<f64>,
    /// `values[t][i]`: optimal cost-to-go from grid age `i` at slot `t`.
    values: Vec<Vec<f64>>,
    /// `policy[t][i]`: minimizing price; NaN where no price keeps the
    /// successor on the grid.
    policy: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }

    pub fn value(&self, t: usize, index: usize) -> f64 {
        self.values[t][index]
    }

    pub fn price(&self, t: usize, index: usize) -> f64 {
        self.policy[t][index]
    }

    pub fn values_at(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    /// Interpolated optimal cost-to-go.
    pub fn value_at(&self, t: usize, age: f64) -> Option<f64> {
        self.grid.interpolate(&self.values[t], age)
    }

    /// Stored minimizing price at the grid age nearest to `age`.
    pub fn nearest_price(&self, t: usize, age: f64) -> f64 {
        if t >= self.horizon() {
            return 0.0;
        }
        let pos = ((age - self.grid.age_min) / self.grid.age_step).round();
        let index = (pos.max(0.0) as usize).min(self.ages.len() - 1);
        self.policy[t][index]
    }

    /// Minimize over the price grid at an arbitrary age in slot `t < T`.
    fn greedy(&self, params: &ModelParams, t: usize, age: f64) -> Result<(f64, f64)> {
        greedy(
            params,
            self.dynamics,
            &self.grid,
            &self.prices,
            &self.values[t + 1],
            age,
        )
    }

    /// Follow the greedy policy from the initial age; fails if an age
    /// reached this way leaves the grid.
    pub fn rollout(&self, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
        let escape = |t, age| Error::GridEscape {
            t,
            age,
            age_min: self.grid.age_min,
            age_max: self.grid.upper(),
        };
        let mut age = params.initial_age;
        let mut path = Vec::with_capacity(self.horizon() + 1);
        for t in 0..self.horizon() {
            let (value, price) = self.greedy(params, t, age)?;
            if !value.is_finite() {
                return Err(escape(t, age));
            }
            path.push((age, price));
            age = self.dynamics.step(params, age, price)?;
            if self.grid.interpolate(&self.values[t + 1], age).is_none() {
                return Err(escape(t + 1, age));
            }
        }
        path.push((age, 0.0));
        Ok(path)
    }
}

fn greedy(
    params: &ModelParams,
    dynamics: Dynamics,
    grid: &GridSpec,
    prices: &[f64],
    next_values: &[f64],
    age: f64,
) -> Result<(f64, f64)> {
    let weight = params.payment_weight();
    let mut best = (f64::INFINITY, f64::NAN);
    for &price in prices {
        let next = dynamics.step(params, age, price)?;
        let Some(future) = grid.interpolate(next_values, next) else {
            continue;
        };
        let objective = weight * price * price + params.discount * future;
        if objective < best.0 {
            best = (objective, price);
        }
    }
    Ok((age * age + best.0, best.1))
}

fn solve_dp(params: &ModelParams, grid: &GridSpec, dynamics: Dynamics) -> Result<ValueTable> {
    grid.validate()?;
    let horizon = params.horizon;
    if horizon > ORACLE_MAX_HORIZON {
        return Err(Error::Unsupported(format!(
            "oracle horizon {horizon} exceeds {ORACLE_MAX_HORIZON}"
        )));
    }
    if params.initial_age < grid.age_min || params.initial_age > grid.upper() {
        return Err(Error::GridEscape {
            t: 0,
            age: params.initial_age,
            age_min: grid.age_min,
            age_max: grid.upper(),
        });
    }
    let ages = grid.ages();
    let prices = grid.prices(params.cost_max);
    let mut values = vec![Vec::new(); horizon + 1];
    let mut policy = vec![Vec::new(); horizon + 1];
    values[horizon] = ages.iter().map(|a| a * a).collect();
    policy[horizon] = vec![0.0; ages.len()];
    for t in (0..horizon).rev() {
        let next = &values[t + 1];
        let solved: Vec<(f64, f64)> = ages
            .par_iter()
            .map(|&age| greedy(params, dynamics, grid, &prices, next, age))
            .collect::<Result<_>>()?;
        let (v, p): (Vec<f64>, Vec<f64>) = solved.into_iter().unzip();
        values[t] = v;
        policy[t] = p;
    }
    let table = ValueTable {
        grid: *grid,
        dynamics,
        ages,
        prices,
        values,
        policy,
    };
    table.rollout(params)?;
    Ok(table)
}

/// Grid DP for the original problem with expected-age transitions.
pub fn solve_nonlinear_dp(params: &ModelParams, grid: &GridSpec) -> Result<ValueTable> {
    solve_dp(params, grid, Dynamics::Expected)
}

/// Grid DP for the linearized problem with a fixed estimator.
pub fn solve_linearized_dp(
    params: &ModelParams,
    delta: f64,
    grid: &GridSpec,
) -> Result<ValueTable> {
    if delta < 0.0 {
        return Err(Error::NegativeDelta(delta));
    }
    solve_dp(params, grid, Dynamics::Linearized { delta })
}

/// Price-grid minimizer of one Bellman step with a quadratic next-slot
/// value `q_next A'^2 + m_next A'` (constant term irrelevant).
pub fn one_step_bellman_price(
    params: &ModelParams,
    delta: f64,
    q_next: f64,
    m_next: f64,
    age: f64,
    price_step: f64,
) -> f64 {
    let weight = params.payment_weight();
    let grid = GridSpec {
        price_step,
        age_min: 0.0,
        age_max: 1.0,
        age_step: 0.5,
    };
    let mut best = (f64::INFINITY, 0.0);
    for price in grid.prices(params.cost_max) {
        let accept = params.acceptance_prob(price);
        let next = age - delta * accept + 1.0 - accept;
        let objective =
            weight * price * price + params.discount * (q_next * next * next + m_next * next);
        if objective < best.0 {
            best = (objective, price);
        }
    }
    best.1
}

/// Whether the unconstrained closed-form path from `(t, age)` keeps every
/// remaining price inside `[0, cost_max]` and every age on the grid. On
/// such states the constrained and unconstrained problems coincide.
pub fn stays_unclipped(
    params: &ModelParams,
    tables: &RiccatiTables,
    grid: &GridSpec,
    t: usize,
    age: f64,
) -> bool {
    let k_gain = params.arrival_prob * (tables.delta() + 1.0) / params.cost_max;
    let mut x = age;
    for s in t..tables.horizon() {
        let price =
            optimal_price_formula(params, tables.delta(), tables.q(s + 1), tables.m(s + 1), x);
        if !(0.0..=params.cost_max).contains(&price) {
            return false;
        }
        x = x + 1.0 - k_gain * price;
        if x < grid.age_min || x > grid.upper() {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormComparison {
    /// Number of grid states compared.
    pub states: usize,
    pub max_deviation: f64,
    /// `(t, age)` of the largest deviation.
    pub worst: Option<(usize, f64)>,
}

/// Largest gap between oracle greedy prices and the closed-form price over
/// grid states in the unclipped regime.
pub fn compare_with_closed_form(
    params: &ModelParams,
    table: &ValueTable,
    tables: &RiccatiTables,
) -> Result<ClosedFormComparison> {
    let mut out = ClosedFormComparison {
        states: 0,
        max_deviation: 0.0,
        worst: None,
    };
    for t in 0..table.horizon() {
        for (i, &age) in table.ages.iter().enumerate() {
            if !table.values[t][i].is_finite()
                || !stays_unclipped(params, tables, &table.grid, t, age)
            {
                continue;
            }
            let closed = unclipped_price_at(params, tables, t, age)?;
            let deviation = (table.policy[t][i] - closed).abs();
            out.states += 1;
            if out.worst.is_none() || deviation > out.max_deviation {
                out.max_deviation = deviation;
                out.worst = Some((t, age));
            }
        }
    }
    Ok(out)
}

/// Largest gap between oracle value differences and the quadratic
/// `Q_t A^2 + M_t A` over grid states in the unclipped regime. Values are
/// compared relative to the first such state of each slot, so the
/// slot-dependent constant drops out.
pub fn compare_value_shape(
    params: &ModelParams,
    table: &ValueTable,
    tables: &RiccatiTables,
) -> Result<ClosedFormComparison> {
    let mut out = ClosedFormComparison {
        states: 0,
        max_deviation: 0.0,
        worst: None,
    };
    for t in 0..table.horizon() {
        let quadratic = |a: f64| tables.q(t) * a * a + tables.m(t) * a;
        let mut reference = None;
        for (i, &age) in table.ages.iter().enumerate() {
            let value = table.values[t][i];
            if !value.is_finite() || !stays_unclipped(params, tables, &table.grid, t, age) {
                continue;
            }
            let (ref_age, ref_value) = *reference.get_or_insert((age, value));
            let deviation = ((value - ref_value) - (quadratic(age) - quadratic(ref_age))).abs();
            out.states += 1;
            if out.worst.is_none() || deviation > out.max_deviation {
                out.max_deviation = deviation;
                out.worst = Some((t, age));
            }
        }
    }
    Ok(out)
}
