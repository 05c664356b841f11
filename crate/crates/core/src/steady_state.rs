//! Infinite-horizon analysis: steady coefficients, the stationary policy,
//! limiting age and price, the infinite-horizon estimator, feasibility of
//! the parameter set, and the finite-horizon cost gap of the stationary
//! policy.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixed_point::{solve_delta_finite, SolverSettings};
use crate::model::{Dynamics, ModelParams};
use crate::riccati::{
    backward_recursion, discounted_cost, forward_trajectory, optimal_price_formula, rollout,
    Trajectory,
};

/// Steady curvature: positive root of `rho k Q^2 + (1 - rho - rho k) Q - 1 = 0`.
pub fn steady_q(params: &ModelParams, delta: f64) -> f64 {
    let rho = params.discount;
    let a = rho * params.coupling(delta);
    if a == 0.0 {
        return 1.0 / (1.0 - rho);
    }
    let b = 1.0 - rho - a;
    let disc = (b * b + 4.0 * a).sqrt();
    // pick the cancellation-free form of the same root
    if b >= 0.0 {
        2.0 / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

pub fn steady_m(params: &ModelParams, delta: f64, q: f64) -> f64 {
    let rho = params.discount;
    2.0 * rho * q / (1.0 - rho + rho * q * params.coupling(delta))
}

/// Limiting expected age under the stationary policy.
pub fn limit_age(params: &ModelParams, delta: f64, q: f64) -> f64 {
    let rho = params.discount;
    let gain = delta + 1.0;
    let k = params.coupling(delta);
    let ab = params.payment_weight();
    let slope = params.arrival_prob * gain / params.cost_max;
    (1.0 - rho) * (1.0 + rho * q * k)
        / (rho * q * gain * gain * (ab * (1.0 - rho) + rho * q * slope * slope))
}

/// Expected age at slot `t` under the unclipped stationary policy,
/// starting from the initial age.
pub fn steady_age_at(params: &ModelParams, delta: f64, q: f64, m: f64, t: usize) -> f64 {
    let rho = params.discount;
    let k = params.coupling(delta);
    let ratio = 1.0 / (1.0 + rho * q * k);
    let offset = (2.0 - rho * m * k) / (2.0 + 2.0 * rho * q * k);
    let decay = ratio.powi(t as i32);
    decay * params.initial_age + offset * (1.0 - decay) / (1.0 - ratio)
}

/// Residual of the infinite-horizon estimator equation
/// `limit_age(delta) - reset_age - delta`.
pub fn delta_root_residual(params: &ModelParams, delta: f64) -> f64 {
    let q = steady_q(params, delta);
    limit_age(params, delta, q) - params.reset_age - delta
}

/// Number of sign changes of [`delta_root_residual`] on `points` evenly
/// spaced values over `[lo, hi]`.
pub fn root_sign_changes(params: &ModelParams, lo: f64, hi: f64, points: usize) -> usize {
    let step = (hi - lo) / (points - 1) as f64;
    let signs: Vec<bool> = (0..points)
        .map(|i| delta_root_residual(params, lo + step * i as f64) > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// The two sufficient conditions for a nonnegative estimator and a
/// limiting price within `[0, cost_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feasibility {
    /// `reset_age` is below the delta-zero threshold.
    pub reset_age_ok: bool,
    /// `arrival_prob >= 1 / (delta + 1)`.
    pub price_limit_ok: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.reset_age_ok && self.price_limit_ok
    }
}

/// Largest reset age for which the first condition holds:
/// `2 b (1 - rho) / (alpha rho (x + sqrt(x^2 + 4 b / (rho alpha))))`,
/// `x = 1 - b (1 - rho) / (rho alpha)`, i.e. `b (1 - rho) / (alpha rho Q(0))`.
pub fn reset_age_threshold(params: &ModelParams) -> f64 {
    if params.arrival_prob == 0.0 {
        return f64::INFINITY;
    }
    let rho = params.discount;
    params.cost_max * (1.0 - rho) / (params.arrival_prob * rho * steady_q(params, 0.0))
}

pub fn check_feasibility(params: &ModelParams, delta: f64) -> Feasibility {
    Feasibility {
        reset_age_ok: reset_age_threshold(params) >= params.reset_age,
        price_limit_ok: params.arrival_prob * (delta + 1.0) >= 1.0,
    }
}

/// Stationary quantities for one estimator value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub delta: f64,
    pub q: f64,
    pub m: f64,
    pub limit_age: f64,
    pub limit_price: f64,
    pub feasibility: Feasibility,
    pub feasible: bool,
}

impl SteadyState {
    pub fn at(params: &ModelParams, delta: f64) -> Self {
        let q = steady_q(params, delta);
        let m = steady_m(params, delta, q);
        let feasibility = check_feasibility(params, delta);
        Self {
            delta,
            q,
            m,
            limit_age: limit_age(params, delta, q),
            limit_price: params.cost_max / (params.arrival_prob * (delta + 1.0)),
            feasibility,
            feasible: feasibility.all(),
        }
    }

    /// Stationary price before clipping.
    pub fn unclipped_price(&self, params: &ModelParams, age: f64) -> f64 {
        optimal_price_formula(params, self.delta, self.q, self.m, age)
    }
}

/// Stationary price clipped to `[0, cost_max]`.
pub fn steady_price(params: &ModelParams, ss: &SteadyState, age: f64) -> f64 {
    params.clip_price(ss.unclipped_price(params, age))
}

const ROOT_INTERVAL_TOL: f64 = 1e-12;

/// Solve `limit_age(delta) - reset_age - delta = 0` for `delta >= 0` by
/// bisection. The left side decreases in `delta`, so a nonnegative root
/// exists iff the residual at zero is nonnegative.
pub fn solve_delta_infinite(params: &ModelParams) -> Result<SteadyState> {
    let f = |d: f64| delta_root_residual(params, d);
    let at_zero = f(0.0);
    if at_zero.is_nan() || at_zero < 0.0 {
        return Err(Error::NoNonnegativeRoot {
            residual_at_zero: at_zero,
        });
    }
    if at_zero == 0.0 {
        return Ok(SteadyState::at(params, 0.0));
    }
    let mut lo = 0.0;
    let mut hi = params
        .initial_age
        .max(10.0 * limit_age(params, 0.0, steady_q(params, 0.0)));
    let mut expansions = 0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 || !hi.is_finite() {
            return Err(Error::Unsupported(
                "could not bracket the steady-state estimator".into(),
            ));
        }
    }
    while hi - lo > ROOT_INTERVAL_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    Ok(SteadyState::at(params, delta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub horizon: usize,
    /// Estimator shared by both policies at this horizon.
    pub delta: f64,
    pub finite_cost: f64,
    pub steady_cost: f64,
    pub gap: f64,
}

/// Trajectory of the clipped stationary policy built at `delta`, driven by
/// the linearized dynamics with the same `delta`.
pub fn steady_trajectory(params: &ModelParams, delta: f64) -> Result<Trajectory> {
    let ss = SteadyState::at(params, delta);
    rollout(params, Dynamics::Linearized { delta }, |_, age| {
        Ok(steady_price(params, &ss, age))
    })
}

/// Discounted cost of the finite-horizon policy and of the stationary
/// policy over each horizon. Both use the horizon's own fixed-point
/// estimator and are evaluated on the same linearized dynamics.
pub fn epsilon_gap(
    params: &ModelParams,
    horizons: &[usize],
    settings: &SolverSettings,
) -> Result<Vec<GapRow>> {
    horizons
        .par_iter()
        .map(|&horizon| {
            let p = params.with_horizon(horizon);
            p.validate()?;
            let est = solve_delta_finite(&p, settings)?;
            if !est.converged {
                return Err(Error::NotConverged {
                    iterations: est.iterations,
                    residual: est.residual,
                });
            }
            let tables = backward_recursion(&p, est.value)?;
            let finite_cost = discounted_cost(&forward_trajectory(&p, &tables)?, &p);
            let steady_cost = discounted_cost(&steady_trajectory(&p, est.value)?, &p);
            Ok(GapRow {
                horizon,
                delta: est.value,
                finite_cost,
                steady_cost,
                gap: steady_cost - finite_cost,
            })
        })
        .collect()
}
