//! Finite-horizon estimation of the reduction estimator `delta`.
//!
//! `delta` is the discounted time-average of `A(t) - reset_age` over
//! `t = 0..T-1`, but the ages themselves depend on `delta` through the
//! tables. We iterate: build tables for the current `delta`, evaluate the
//! closed-form expected ages, and re-estimate, until successive estimates
//! agree within the tolerance.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::riccati::{backward_recursion, closed_form_ages, Trajectory};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub initial_delta: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            initial_delta: 0.0,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: "must be positive and finite".into(),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.initial_delta >= 0.0 && self.initial_delta.is_finite()) {
            return Err(Error::NegativeDelta(self.initial_delta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Absolute change between the last two estimates.
    pub residual: f64,
    pub converged: bool,
}

/// Discounted average reduction over slots `0..T`; the terminal age is
/// excluded since it cannot influence earlier slots.
pub fn delta_from_ages(params: &ModelParams, ages: &[f64]) -> f64 {
    let horizon = params.horizon;
    assert!(
        ages.len() >= horizon,
        "need ages for slots 0..{horizon}, got {}",
        ages.len()
    );
    let rho = params.discount;
    let norm = (1.0 - rho) / (1.0 - rho.powi(horizon as i32));
    let mut weight = 1.0;
    let mut sum = 0.0;
    for &age in &ages[..horizon] {
        sum += weight * (age - params.reset_age);
        weight *= rho;
    }
    norm * sum
}

pub fn delta_from_trajectory(params: &ModelParams, trajectory: &Trajectory) -> f64 {
    delta_from_ages(params, &trajectory.ages())
}

/// One round of the fixed-point map: ages produced by `delta`, and the
/// estimate they imply.
pub fn delta_map(params: &ModelParams, delta: f64) -> Result<(Vec<f64>, f64)> {
    let tables = backward_recursion(params, delta)?;
    let ages = closed_form_ages(params, &tables);
    check_domain(params, &ages)?;
    let next = delta_from_ages(params, &ages);
    Ok((ages, next))
}

/// Ages must stay in `[0, A(0) + t]`, the box the fixed point lives in.
fn check_domain(params: &ModelParams, ages: &[f64]) -> Result<()> {
    for (t, &age) in ages.iter().enumerate() {
        let bound = params.initial_age + t as f64;
        let slack = 1e-12 * bound.max(1.0);
        if !(age >= -slack && age <= bound + slack) {
            return Err(Error::DomainViolation { t, age, bound });
        }
    }
    Ok(())
}

pub fn solve_delta_finite(
    params: &ModelParams,
    settings: &SolverSettings,
) -> Result<DeltaEstimate> {
    settings.validate()?;
    let mut delta = settings.initial_delta;
    let mut residual = f64::INFINITY;
    for iteration in 1..=settings.max_iter {
        let (_, next) = delta_map(params, delta)?;
        if next < 0.0 {
            return Err(Error::NegativeDelta(next));
        }
        residual = (next - delta).abs();
        delta = next;
        if residual <= settings.tolerance {
            return Ok(DeltaEstimate {
                value: delta,
                iterations: iteration,
                residual,
                converged: true,
            });
        }
    }
    Ok(DeltaEstimate {
        value: delta,
        iterations: settings.max_iter,
        residual,
        converged: false,
    })
}

/// Re-run the iteration from each seed; distinct fixed points show up as
/// distinct values.
pub fn solve_from_seeds(
    params: &ModelParams,
    seeds: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<DeltaEstimate>> {
    seeds
        .iter()
        .map(|&seed| {
            solve_delta_finite(
                params,
                &SolverSettings {
                    initial_delta: seed,
                    ..*settings
                },
            )
        })
        .collect()
}
