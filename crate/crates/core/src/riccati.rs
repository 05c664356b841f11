//! Backward coefficient recursion for the linearized problem, the resulting
//! age-linear price, and forward evaluation of pricing policies.
//!
//! For a fixed estimator `delta`, the value function of the linearized
//! problem is quadratic in age with coefficients `Q_t` (curvature) and
//! `M_t` (slope) obtained backward from `Q_T = 1`, `M_T = 0`:
//!
//! ```text
//! Q_t = 1 + rho Q_{t+1} / (1 + rho Q_{t+1} k)
//! M_t = rho (M_{t+1} + 2 Q_{t+1}) / (1 + rho Q_{t+1} k),   k = alpha (delta + 1)^2 / b
//! ```

use crate::error::{Error, Result};
use crate::model::{Dynamics, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiTables {
    delta: f64,
    q: Vec<f64>,
    m: Vec<f64>,
}

impl RiccatiTables {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> usize {
        self.q.len() - 1
    }

    pub fn q(&self, t: usize) -> f64 {
        self.q[t]
    }

    pub fn m(&self, t: usize) -> f64 {
        self.m[t]
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    /// Negative control for the verification report: scales every
    /// non-terminal `Q_t` so the tables no longer satisfy the recursion.
    #[doc(hidden)]
    pub fn corrupted(mut self, factor: f64) -> Self {
        let last = self.q.len() - 1;
        for q in &mut self.q[..last] {
            *q *= factor;
        }
        self
    }
}

pub fn backward_recursion(params: &ModelParams, delta: f64) -> Result<RiccatiTables> {
    if delta < 0.0 {
        return Err(Error::NegativeDelta(delta));
    }
    let horizon = params.horizon;
    let rho = params.discount;
    let k = params.coupling(delta);
    let mut q = vec![0.0; horizon + 1];
    let mut m = vec![0.0; horizon + 1];
    q[horizon] = 1.0;
    m[horizon] = 0.0;
    for t in (0..horizon).rev() {
        let denom = 1.0 + rho * q[t + 1] * k;
        q[t] = 1.0 + rho * q[t + 1] / denom;
        m[t] = rho * (m[t + 1] + 2.0 * q[t + 1]) / denom;
    }
    Ok(RiccatiTables { delta, q, m })
}

/// Stationary point of the one-step Bellman objective, before clipping.
/// `q_next`/`m_next` are the coefficients of the next slot's value.
pub(crate) fn optimal_price_formula(
    params: &ModelParams,
    delta: f64,
    q_next: f64,
    m_next: f64,
    age: f64,
) -> f64 {
    let rho = params.discount;
    let k = params.coupling(delta);
    let gain = delta + 1.0;
    (rho * m_next * gain + 2.0 * rho * gain * q_next * (age + 1.0)) / (2.0 + 2.0 * rho * q_next * k)
}

fn check_slot(tables: &RiccatiTables, t: usize) -> Result<()> {
    if t > tables.horizon() {
        Err(Error::SlotOutOfRange {
            t,
            horizon: tables.horizon(),
        })
    } else {
        Ok(())
    }
}

/// Unconstrained optimal price at slot `t`; zero at the terminal slot.
pub fn unclipped_price_at(
    params: &ModelParams,
    tables: &RiccatiTables,
    t: usize,
    age: f64,
) -> Result<f64> {
    check_slot(tables, t)?;
    if t == tables.horizon() {
        return Ok(0.0);
    }
    Ok(optimal_price_formula(
        params,
        tables.delta,
        tables.q[t + 1],
        tables.m[t + 1],
        age,
    ))
}

/// Finite-horizon price clipped to `[0, cost_max]`.
pub fn price_at(params: &ModelParams, tables: &RiccatiTables, t: usize, age: f64) -> Result<f64> {
    if age < 0.0 {
        return Err(Error::NegativeAge(age));
    }
    unclipped_price_at(params, tables, t, age).map(|p| params.clip_price(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub price: f64,
    pub expected_age: f64,
    pub stage_cost: f64,
    pub discounted_stage_cost: f64,
}

impl TrajectoryRow {
    fn new(params: &ModelParams, t: usize, price: f64, expected_age: f64) -> Self {
        let stage_cost = expected_age * expected_age + params.payment_weight() * price * price;
        Self {
            t,
            price,
            expected_age,
            stage_cost,
            discounted_stage_cost: params.discount.powi(t as i32) * stage_cost,
        }
    }
}

/// Per-slot records for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn ages(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.expected_age).collect()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.price).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Roll a pricing rule forward from the initial age under `dynamics`.
/// The rule receives `(t, age)` and must return a price in `[0, cost_max]`.
pub fn rollout<F>(params: &ModelParams, dynamics: Dynamics, mut policy: F) -> Result<Trajectory>
where
    F: FnMut(usize, f64) -> Result<f64>,
{
    let mut rows = Vec::with_capacity(params.horizon + 1);
    let mut age = params.initial_age;
    for t in 0..=params.horizon {
        let price = policy(t, age)?;
        params.check_price(price)?;
        rows.push(TrajectoryRow::new(params, t, price, age));
        if t < params.horizon {
            age = dynamics.step(params, age, price)?;
        }
    }
    Ok(Trajectory { rows })
}

/// Expected-age trajectory of the clipped finite-horizon policy under the
/// linearized dynamics the tables were built for.
pub fn forward_trajectory(params: &ModelParams, tables: &RiccatiTables) -> Result<Trajectory> {
    let dynamics = Dynamics::Linearized {
        delta: tables.delta,
    };
    rollout(params, dynamics, |t, age| price_at(params, tables, t, age))
}

/// Closed-form expected ages of the unconstrained policy:
///
/// ```text
/// A(t) = prod_{i=1..t} r_i A(0) + sum_{s=1..t} c_s prod_{i=s+1..t} r_i
/// r_i = 1 / (1 + rho Q_i k),   c_s = (2 - rho M_s k) / (2 + 2 rho Q_s k)
/// ```
pub fn closed_form_ages(params: &ModelParams, tables: &RiccatiTables) -> Vec<f64> {
    let rho = params.discount;
    let k = params.coupling(tables.delta);
    let horizon = tables.horizon();
    let ratio: Vec<f64> = tables.q.iter().map(|q| 1.0 / (1.0 + rho * q * k)).collect();
    let offset: Vec<f64> = tables
        .q
        .iter()
        .zip(&tables.m)
        .map(|(q, m)| (2.0 - rho * m * k) / (2.0 + 2.0 * rho * q * k))
        .collect();

    (0..=horizon)
        .map(|t| {
            // walk s = t..1 so `tail` is prod_{i=s+1..t} r_i when offset[s] is added
            let mut tail = 1.0;
            let mut forced = 0.0;
            for s in (1..=t).rev() {
                forced += offset[s] * tail;
                tail *= ratio[s];
            }
            tail * params.initial_age + forced
        })
        .collect()
}

/// Unconstrained policy evaluated along its closed-form ages. Prices may
/// exceed `cost_max`; this is the trajectory the delta fixed point is
/// defined on.
pub fn relaxed_trajectory(params: &ModelParams, tables: &RiccatiTables) -> Result<Trajectory> {
    let ages = closed_form_ages(params, tables);
    let rows = ages
        .iter()
        .enumerate()
        .map(|(t, &age)| {
            unclipped_price_at(params, tables, t, age)
                .map(|p| TrajectoryRow::new(params, t, p, age))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { rows })
}

/// Discounted sum of `age^2 + (alpha / b) price^2` over the rows.
pub fn discounted_cost(trajectory: &Trajectory, params: &ModelParams) -> f64 {
    let weight = params.payment_weight();
    trajectory
        .rows
        .iter()
        .map(|r| {
            params.discount.powi(r.t as i32)
                * (r.expected_age * r.expected_age + weight * r.price * r.price)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base(horizon: usize) -> ModelParams {
        ModelParams::new(0.5, 1.0, 0.9, 0.1, 2.0, horizon).unwrap()
    }

    #[test]
    fn terminal_conditions() {
        let p = base(7);
        let tables = backward_recursion(&p, 0.4).unwrap();
        assert_eq!(tables.q(7), 1.0);
        assert_eq!(tables.m(7), 0.0);
        assert_eq!(price_at(&p, &tables, 7, 3.0).unwrap(), 0.0);
        assert_eq!(unclipped_price_at(&p, &tables, 7, 30.0).unwrap(), 0.0);
    }

    #[test]
    fn one_step_hand_substitution() {
        let p = base(5);
        let tables = backward_recursion(&p, 1.0).unwrap();
        // k = 0.5 * 4 / 1 = 2
        assert!((tables.q(4) - (1.0 + 0.9 / 2.8)).abs() < 1e-15);
        assert!((tables.q(4) - 1.321_428_571_428_571_4).abs() < 1e-12);
        assert!((tables.m(4) - 0.9 * 2.0 / 2.8).abs() < 1e-15);
        assert!((tables.m(4) - 0.642_857_142_857_142_9).abs() < 1e-12);
    }

    #[test]
    fn last_decision_price_clips_to_cost_max() {
        let p = base(5);
        let tables = backward_recursion(&p, 1.0).unwrap();
        let raw = unclipped_price_at(&p, &tables, 4, 1.0).unwrap();
        assert!((raw - 7.2 / 5.6).abs() < 1e-12);
        assert_eq!(price_at(&p, &tables, 4, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn slot_and_delta_errors() {
        let p = base(5);
        assert!(matches!(
            backward_recursion(&p, -0.1),
            Err(Error::NegativeDelta(_))
        ));
        let tables = backward_recursion(&p, 0.3).unwrap();
        assert!(matches!(
            price_at(&p, &tables, 6, 1.0),
            Err(Error::SlotOutOfRange { t: 6, horizon: 5 })
        ));
        assert!(matches!(
            price_at(&p, &tables, 1, -1.0),
            Err(Error::NegativeAge(_))
        ));
    }

    #[test]
    fn zero_prices_age_linearly() {
        let p = base(12);
        let traj = rollout(&p, Dynamics::Linearized { delta: 0.7 }, |_, _| Ok(0.0)).unwrap();
        for row in &traj.rows {
            assert_eq!(row.expected_age, p.initial_age + row.t as f64);
        }
    }

    #[test]
    fn closed_form_matches_unclipped_iteration() {
        for (alpha, b, rho, delta) in [
            (0.5, 1.0, 0.9, 0.33),
            (1.0, 4.0, 0.8, 0.1),
            (0.2, 0.5, 0.95, 2.0),
        ] {
            let p = ModelParams::new(alpha, b, rho, 0.1, 3.0, 60).unwrap();
            let tables = backward_recursion(&p, delta).unwrap();
            let closed = closed_form_ages(&p, &tables);
            let mut age = p.initial_age;
            for (t, &expected) in closed.iter().enumerate() {
                assert!(
                    (age - expected).abs() <= 1e-9 * age.abs().max(1.0),
                    "t={t}: iterated {age} vs closed {expected}"
                );
                let price = unclipped_price_at(&p, &tables, t, age).unwrap();
                let accept = p.acceptance_prob(price);
                age = age - delta * accept + 1.0 - accept;
            }
        }
    }

    #[test]
    fn forward_trajectory_respects_linear_bound_and_contiguity() {
        let p = base(100);
        let tables = backward_recursion(&p, 0.33).unwrap();
        let traj = forward_trajectory(&p, &tables).unwrap();
        assert_eq!(traj.len(), 101);
        for (i, row) in traj.rows.iter().enumerate() {
            assert_eq!(row.t, i);
            assert!(row.expected_age <= p.initial_age + i as f64 + 1e-12);
            assert!((0.0..=p.cost_max).contains(&row.price));
            let disc = p.discount.powi(i as i32) * row.stage_cost;
            assert!((row.discounted_stage_cost - disc).abs() <= 1e-15 * disc.max(1.0));
        }
        assert_eq!(traj.rows[100].price, 0.0);
    }

    #[test]
    fn discounted_cost_examples() {
        let p = ModelParams::new(0.5, 1.0, 0.5, 0.1, 1.0, 1).unwrap();
        let zero = Trajectory {
            rows: vec![
                TrajectoryRow::new(&p, 0, 0.0, 0.0),
                TrajectoryRow::new(&p, 1, 0.0, 0.0),
            ],
        };
        assert_eq!(discounted_cost(&zero, &p), 0.0);
        let single = Trajectory {
            rows: vec![TrajectoryRow::new(&p, 0, 0.0, 1.0)],
        };
        assert_eq!(discounted_cost(&single, &p), 1.0);
        let two = Trajectory {
            rows: vec![
                TrajectoryRow::new(&p, 0, 0.0, 1.0),
                TrajectoryRow::new(&p, 1, 0.0, 2.0),
            ],
        };
        assert!((discounted_cost(&two, &p) - 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn recursion_residuals_and_monotonicity(
            alpha in 0.01..=1.0f64,
            b in 0.1..10.0f64,
            rho in 0.05..0.99f64,
            delta in 0.0..10.0f64,
            horizon in 1usize..200,
        ) {
            let p = ModelParams::new(alpha, b, rho, 0.1, 1.0, horizon).unwrap();
            let tables = backward_recursion(&p, delta).unwrap();
            let k = p.coupling(delta);
            for t in 0..horizon {
                let (qn, mn) = (tables.q(t + 1), tables.m(t + 1));
                let denom = 1.0 + rho * qn * k;
                prop_assert!((tables.q(t) - 1.0 - rho * qn / denom).abs() < 1e-12);
                prop_assert!((tables.m(t) - rho * (mn + 2.0 * qn) / denom).abs() < 1e-12 * tables.m(t).max(1.0));
                prop_assert!(tables.q(t) >= 1.0);
                prop_assert!(tables.m(t) >= 0.0);
                // backward sequences are non-decreasing, up to rounding at the fixed point
                prop_assert!(tables.q(t) >= tables.q(t + 1) * (1.0 - 1e-14));
                prop_assert!(tables.m(t) >= tables.m(t + 1) * (1.0 - 1e-14));
            }
        }

        #[test]
        fn price_increases_with_age(
            delta in 0.0..5.0f64,
            t in 0usize..19,
            age in 0.0..30.0f64,
            bump in 1e-3..5.0f64,
        ) {
            let p = base(20);
            let tables = backward_recursion(&p, delta).unwrap();
            let lo = unclipped_price_at(&p, &tables, t, age).unwrap();
            let hi = unclipped_price_at(&p, &tables, t, age + bump).unwrap();
            prop_assert!(hi > lo);
        }
    }
}
