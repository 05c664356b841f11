//! Seeded Monte Carlo simulation of the stochastic age process.
//!
//! Each slot a user arrives with probability `arrival_prob`; an arriving
//! user draws a private cost uniformly from `[0, cost_max)` and accepts iff
//! the cost is at most the offered price. Acceptance resets the age to
//! `reset_age`, otherwise it grows by one slot.
//!
//! Replication `i` draws from stream `i` of a ChaCha generator keyed by the
//! root seed, so adding replications never reshuffles earlier ones.
//! Replications run in fixed-size chunks in parallel and the chunk sums are
//! combined in chunk order, which keeps reports bit-identical regardless of
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{true_expected_age_step, ModelParams};
use crate::policy::PricingPolicy;

const CHUNK: usize = 256;
pub const MIN_COMPARISON_REPLICATIONS: usize = 30;

/// Which age the policy sees when setting the price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceMode {
    /// Price reacts to the realized stochastic age.
    ClosedLoop,
    /// Prices are fixed in advance along the expected-age recursion.
    OpenLoop,
}

impl PriceMode {
    pub fn label(self) -> &'static str {
        match self {
            PriceMode::ClosedLoop => "closed_loop",
            PriceMode::OpenLoop => "open_loop",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub replications: usize,
    pub seed: u64,
    pub policy: PricingPolicy,
    pub mode: PriceMode,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter {
                name: "replications",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// One realized sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationPath {
    pub ages: Vec<f64>,
    pub prices: Vec<f64>,
    pub accepted: Vec<bool>,
    /// `sum_t rho^t (age^2 + payment)`, payment being the price when accepted.
    pub discounted_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub mode: PriceMode,
    pub policy: &'static str,
    pub replications: usize,
    pub mean_age_path: Vec<f64>,
    /// Sample standard deviation of the age per slot.
    pub age_std_path: Vec<f64>,
    pub mean_sq_age_path: Vec<f64>,
    pub acceptance_rate_path: Vec<f64>,
    pub mean_price_path: Vec<f64>,
    pub mean_discounted_cost: f64,
    pub discounted_cost_std_error: f64,
}

/// Prices along the expected-age recursion, with those ages.
pub fn open_loop_prices(
    params: &ModelParams,
    policy: &PricingPolicy,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ages = Vec::with_capacity(params.horizon + 1);
    let mut prices = Vec::with_capacity(params.horizon + 1);
    let mut age = params.initial_age;
    for t in 0..=params.horizon {
        let price = policy.price(params, t, age)?;
        ages.push(age);
        prices.push(price);
        if t < params.horizon {
            age = true_expected_age_step(params, age, price)?;
        }
    }
    Ok((prices, ages))
}

fn replication_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn simulate_path(
    params: &ModelParams,
    config: &SimConfig,
    open_loop: Option<&[f64]>,
    index: usize,
) -> Result<ReplicationPath> {
    let slots = params.horizon + 1;
    let mut rng = replication_rng(config.seed, index);
    let mut path = ReplicationPath {
        ages: Vec::with_capacity(slots),
        prices: Vec::with_capacity(slots),
        accepted: Vec::with_capacity(slots),
        discounted_cost: 0.0,
    };
    let mut age = params.initial_age;
    let mut discount = 1.0;
    for t in 0..slots {
        let price = match open_loop {
            Some(prices) => prices[t],
            None => config.policy.price(params, t, age)?,
        };
        let arrived = rng.random::<f64>() < params.arrival_prob;
        let accepted = arrived && rng.random::<f64>() * params.cost_max <= price;
        let payment = if accepted { price } else { 0.0 };
        path.discounted_cost += discount * (age * age + payment);
        path.ages.push(age);
        path.prices.push(price);
        path.accepted.push(accepted);
        age = if accepted {
            params.reset_age
        } else {
            age + 1.0
        };
        discount *= params.discount;
    }
    Ok(path)
}

/// A single replication, identical to the one [`run`] aggregates at `index`.
pub fn simulate_replication(
    params: &ModelParams,
    config: &SimConfig,
    index: usize,
) -> Result<ReplicationPath> {
    config.validate()?;
    let open = match config.mode {
        PriceMode::OpenLoop => Some(open_loop_prices(params, &config.policy)?.0),
        PriceMode::ClosedLoop => None,
    };
    simulate_path(params, config, open.as_deref(), index)
}

#[derive(Debug, Clone)]
struct Sums {
    age: Vec<f64>,
    age_sq: Vec<f64>,
    accepted: Vec<u64>,
    price: Vec<f64>,
    cost: f64,
    cost_sq: f64,
}

impl Sums {
    fn new(slots: usize) -> Self {
        Self {
            age: vec![0.0; slots],
            age_sq: vec![0.0; slots],
            accepted: vec![0; slots],
            price: vec![0.0; slots],
            cost: 0.0,
            cost_sq: 0.0,
        }
    }

    fn add_path(&mut self, path: &ReplicationPath) {
        for t in 0..path.ages.len() {
            let a = path.ages[t];
            self.age[t] += a;
            self.age_sq[t] += a * a;
            self.accepted[t] += path.accepted[t] as u64;
            self.price[t] += path.prices[t];
        }
        self.cost += path.discounted_cost;
        self.cost_sq += path.discounted_cost * path.discounted_cost;
    }

    fn merge(&mut self, other: &Sums) {
        for t in 0..self.age.len() {
            self.age[t] += other.age[t];
            self.age_sq[t] += other.age_sq[t];
            self.accepted[t] += other.accepted[t];
            self.price[t] += other.price[t];
        }
        self.cost += other.cost;
        self.cost_sq += other.cost_sq;
    }
}

fn sample_std(sum: f64, sum_sq: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n = n as f64;
    let mean = sum / n;
    ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0).sqrt()
}

pub fn run(params: &ModelParams, config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let slots = params.horizon + 1;
    let n = config.replications;
    let open = match config.mode {
        PriceMode::OpenLoop => Some(open_loop_prices(params, &config.policy)?.0),
        PriceMode::ClosedLoop => None,
    };
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Sums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sums = Sums::new(slots);
            for index in c * CHUNK..((c + 1) * CHUNK).min(n) {
                sums.add_path(&simulate_path(params, config, open.as_deref(), index)?);
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let mut total = Sums::new(slots);
    for sums in &partial {
        total.merge(sums);
    }

    let nf = n as f64;
    Ok(SimReport {
        mode: config.mode,
        policy: config.policy.label(),
        replications: n,
        mean_age_path: total.age.iter().map(|s| s / nf).collect(),
        age_std_path: (0..slots)
            .map(|t| sample_std(total.age[t], total.age_sq[t], n))
            .collect(),
        mean_sq_age_path: total.age_sq.iter().map(|s| s / nf).collect(),
        acceptance_rate_path: total.accepted.iter().map(|&c| c as f64 / nf).collect(),
        mean_price_path: total.price.iter().map(|s| s / nf).collect(),
        mean_discounted_cost: total.cost / nf,
        discounted_cost_std_error: sample_std(total.cost, total.cost_sq, n) / nf.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticComparison {
    /// Expected ages from the deterministic recursion under the same prices.
    pub expected_age: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
}

/// Per-slot z-scores of the empirical mean age against the expected-age
/// recursion driven by the open-loop prices of `policy`.
pub fn compare_to_analytic(
    report: &SimReport,
    params: &ModelParams,
    policy: &PricingPolicy,
) -> Result<AnalyticComparison> {
    if report.replications < MIN_COMPARISON_REPLICATIONS {
        return Err(Error::TooFewReplications {
            required: MIN_COMPARISON_REPLICATIONS,
            got: report.replications,
        });
    }
    if report.mode == PriceMode::ClosedLoop && policy.is_age_dependent() {
        return Err(Error::Unsupported(
            "closed-loop reports of age-dependent policies have no expected-age counterpart; simulate open-loop".into(),
        ));
    }
    let (_, expected_age) = open_loop_prices(params, policy)?;
    let root_n = (report.replications as f64).sqrt();
    let z_scores: Vec<f64> = expected_age
        .iter()
        .zip(&report.mean_age_path)
        .zip(&report.age_std_path)
        .map(|((&expected, &mean), &sd)| {
            let diff = mean - expected;
            if sd > 0.0 {
                diff / (sd / root_n)
            } else if diff.abs() <= 1e-9 * expected.abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let max_abs_z = z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    Ok(AnalyticComparison {
        expected_age,
        z_scores,
        max_abs_z,
    })
}
