use std::path::PathBuf;

use crate::fixed_point::{solve_delta_finite, DeltaEstimate};
use crate::oracle::{solve_nonlinear_dp, ORACLE_MAX_HORIZON};
use crate::policy::PricingPolicy;
use crate::riccati::{backward_recursion, discounted_cost, forward_trajectory, relaxed_trajectory};
use crate::sim::{self, compare_to_analytic, PriceMode, SimConfig, SimReport};
use crate::steady_state::{
    delta_root_residual, epsilon_gap, reset_age_threshold, solve_delta_infinite, GapRow,
    SteadyState,
};
use crate::Error;

use super::config::{ModeChoice, PolicyKind, RunConfig};
use super::output::{fmt_num, Artifact};
use super::CliError;

fn flag(b: bool) -> String {
    b.to_string()
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub estimate: DeltaEstimate,
    pub discounted_cost: f64,
    pub files: Vec<PathBuf>,
}

/// Run the fixed-point solver and write the finite-horizon trajectory. On
/// non-convergence both files are still written, flagged in a comment, and
/// the command fails.
pub fn cmd_solve(config: &RunConfig, relaxed: bool) -> Result<SolveOutcome, CliError> {
    let params = config.validate()?;
    let estimate = solve_delta_finite(&params, &config.solver())?;
    let tables = backward_recursion(&params, estimate.value)?;
    let trajectory = if relaxed {
        relaxed_trajectory(&params, &tables)?
    } else {
        forward_trajectory(&params, &tables)?
    };
    let cost = discounted_cost(&trajectory, &params);
    let warning = (!estimate.converged).then(|| {
        format!(
            "WARNING: delta iteration did not converge after {} rounds; outputs are partial",
            estimate.iterations
        )
    });

    let mut csv = Artifact::create(&config.out, "trajectory.csv", "solve", config)?;
    if let Some(w) = &warning {
        csv.comment(w)?;
    }
    csv.row(&[
        "t",
        "price",
        "expected_age",
        "Q_t",
        "M_t",
        "discounted_stage_cost",
    ])?;
    for row in &trajectory.rows {
        csv.row(&[
            row.t.to_string(),
            fmt_num(row.price),
            fmt_num(row.expected_age),
            fmt_num(tables.q(row.t)),
            fmt_num(tables.m(row.t)),
            fmt_num(row.discounted_stage_cost),
        ])?;
    }
    let mut files = vec![csv.finish()?];

    let mut summary = Artifact::create(&config.out, "summary.txt", "solve", config)?;
    if let Some(w) = &warning {
        summary.comment(w)?;
    }
    summary.line(&format!(
        "trajectory = {}",
        if relaxed { "relaxed" } else { "clipped" }
    ))?;
    summary.line(&format!("delta = {}", fmt_num(estimate.value)))?;
    summary.line(&format!("iterations = {}", estimate.iterations))?;
    summary.line(&format!("residual = {}", fmt_num(estimate.residual)))?;
    summary.line(&format!("converged = {}", estimate.converged))?;
    summary.line(&format!("discounted_cost = {}", fmt_num(cost)))?;
    files.push(summary.finish()?);

    if !estimate.converged {
        return Err(Error::NotConverged {
            iterations: estimate.iterations,
            residual: estimate.residual,
        }
        .into());
    }
    Ok(SolveOutcome {
        estimate,
        discounted_cost: cost,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct SteadyOutcome {
    pub state: SteadyState,
    pub root_found: bool,
    pub file: PathBuf,
}

/// Stationary quantities. Infeasibility and a missing nonnegative root are
/// reported in-band; without a root the row is evaluated at `delta = 0`.
pub fn cmd_steady(config: &RunConfig) -> Result<SteadyOutcome, CliError> {
    let params = config.validate()?;
    let (state, root_found) = steady_or_boundary(&params)?;
    let mut csv = Artifact::create(&config.out, "steady.csv", "steady", config)?;
    if !root_found {
        csv.comment("WARNING: no nonnegative root; row evaluated at delta = 0")?;
    }
    if !state.feasible {
        csv.comment("WARNING: feasibility conditions fail; see flag columns")?;
    }
    csv.row(&[
        "delta",
        "Q",
        "M",
        "limit_age",
        "limit_price",
        "root_residual",
        "reset_age_threshold",
        "reset_age_ok",
        "price_limit_ok",
        "feasible",
        "root_found",
    ])?;
    csv.row(&[
        fmt_num(state.delta),
        fmt_num(state.q),
        fmt_num(state.m),
        fmt_num(state.limit_age),
        fmt_num(state.limit_price),
        fmt_num(delta_root_residual(&params, state.delta)),
        fmt_num(reset_age_threshold(&params)),
        flag(state.feasibility.reset_age_ok),
        flag(state.feasibility.price_limit_ok),
        flag(state.feasible),
        flag(root_found),
    ])?;
    Ok(SteadyOutcome {
        state,
        root_found,
        file: csv.finish()?,
    })
}

pub(crate) fn steady_or_boundary(
    params: &crate::ModelParams,
) -> Result<(SteadyState, bool), CliError> {
    match solve_delta_infinite(params) {
        Ok(state) => Ok((state, true)),
        Err(Error::NoNonnegativeRoot { .. }) => Ok((SteadyState::at(params, 0.0), false)),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone)]
pub struct GapOutcome {
    pub rows: Vec<GapRow>,
    pub file: PathBuf,
}

pub fn cmd_gap(config: &RunConfig) -> Result<GapOutcome, CliError> {
    let params = config.validate()?;
    let rows = epsilon_gap(&params, &config.horizons, &config.solver())?;
    let mut csv = Artifact::create(&config.out, "gap.csv", "gap", config)?;
    csv.row(&["T", "U", "U_inf", "gap"])?;
    for row in &rows {
        csv.row(&[
            row.horizon.to_string(),
            fmt_num(row.finite_cost),
            fmt_num(row.steady_cost),
            fmt_num(row.gap),
        ])?;
    }
    Ok(GapOutcome {
        rows,
        file: csv.finish()?,
    })
}

/// Policy named by the configuration, built for `params`.
pub(crate) fn build_policy(
    config: &RunConfig,
    params: &crate::ModelParams,
) -> Result<PricingPolicy, CliError> {
    Ok(match config.policy {
        PolicyKind::Finite => {
            let estimate = solve_delta_finite(params, &config.solver())?;
            if !estimate.converged {
                return Err(Error::NotConverged {
                    iterations: estimate.iterations,
                    residual: estimate.residual,
                }
                .into());
            }
            PricingPolicy::FiniteHorizon(backward_recursion(params, estimate.value)?)
        }
        PolicyKind::Steady => PricingPolicy::SteadyState(steady_or_boundary(params)?.0),
        PolicyKind::Constant => PricingPolicy::Constant(config.constant_price),
        PolicyKind::Oracle => {
            if params.horizon > ORACLE_MAX_HORIZON {
                return Err(CliError::Config(format!(
                    "oracle policy needs horizon <= {ORACLE_MAX_HORIZON}, got {}",
                    params.horizon
                )));
            }
            let table = solve_nonlinear_dp(params, &config.grid(params))?;
            PricingPolicy::OracleTable(Box::new(table))
        }
    })
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub reports: Vec<SimReport>,
    pub files: Vec<PathBuf>,
}

/// Simulate the configured policy in one or both price modes. Writes one
/// per-slot CSV per mode and a `sim_summary.csv` with one row per mode.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulateOutcome, CliError> {
    let params = config.validate()?;
    let policy = build_policy(config, &params)?;
    let modes: &[PriceMode] = match config.mode {
        ModeChoice::Closed => &[PriceMode::ClosedLoop],
        ModeChoice::Open => &[PriceMode::OpenLoop],
        ModeChoice::Both => &[PriceMode::ClosedLoop, PriceMode::OpenLoop],
    };
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for &mode in modes {
        let sim_config = SimConfig {
            replications: config.replications,
            seed: config.seed,
            policy: policy.clone(),
            mode,
        };
        let report = sim::run(&params, &sim_config)?;
        let name = format!("sim_{}.csv", mode.label());
        let mut csv = Artifact::create(&config.out, &name, "simulate", config)?;
        csv.comment(&format!("price_mode = {}", mode.label()))?;
        csv.row(&[
            "t",
            "mean_age",
            "age_std",
            "mean_sq_age",
            "acceptance_rate",
            "mean_price",
        ])?;
        for t in 0..report.mean_age_path.len() {
            csv.row(&[
                t.to_string(),
                fmt_num(report.mean_age_path[t]),
                fmt_num(report.age_std_path[t]),
                fmt_num(report.mean_sq_age_path[t]),
                fmt_num(report.acceptance_rate_path[t]),
                fmt_num(report.mean_price_path[t]),
            ])?;
        }
        files.push(csv.finish()?);
        reports.push(report);
    }

    let mut summary = Artifact::create(&config.out, "sim_summary.csv", "simulate", config)?;
    summary.row(&[
        "price_mode",
        "policy",
        "replications",
        "mean_discounted_cost",
        "std_error",
        "max_abs_z",
    ])?;
    for report in &reports {
        // z-scores only exist where an expected-age counterpart does
        let max_z = compare_to_analytic(report, &params, &policy)
            .map(|c| c.max_abs_z)
            .unwrap_or(f64::NAN);
        summary.row(&[
            report.mode.label().to_string(),
            report.policy.to_string(),
            report.replications.to_string(),
            fmt_num(report.mean_discounted_cost),
            fmt_num(report.discounted_cost_std_error),
            fmt_num(max_z),
        ])?;
    }
    files.push(summary.finish()?);
    Ok(SimulateOutcome { reports, files })
}
