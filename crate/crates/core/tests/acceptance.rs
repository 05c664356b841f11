//! Acceptance criteria 1-9. Runs without the libtest harness so each
//! criterion's PASS/FAIL line always reaches the output; exits nonzero if
//! any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use aoi_pricing::fixed_point::{delta_map, solve_delta_finite, SolverSettings};
use aoi_pricing::oracle::{compare_with_closed_form, solve_linearized_dp, GridSpec};
use aoi_pricing::policy::PricingPolicy;
use aoi_pricing::riccati::{backward_recursion, closed_form_ages, forward_trajectory, price_at};
use aoi_pricing::sim::{self, compare_to_analytic, PriceMode, SimConfig};
use aoi_pricing::steady_state::{
    check_feasibility, delta_root_residual, epsilon_gap, reset_age_threshold, root_sign_changes,
    solve_delta_infinite, steady_m, steady_q,
};
use aoi_pricing::ModelParams;

/// The shared parameter set: alpha 0.5, b 1, rho 0.9, A0 0.1, A(0) 2.
fn criterion_params(horizon: usize) -> ModelParams {
    ModelParams::new(0.5, 1.0, 0.9, 0.1, 2.0, horizon).unwrap()
}

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn closed_form_vs_oracle() -> Verdict {
    let start = Instant::now();
    let p = criterion_params(8);
    let est = solve_delta_finite(&p, &SolverSettings::default()).unwrap();
    let grid = GridSpec {
        price_step: 1e-3,
        age_step: 1e-2,
        ..GridSpec::default_for(&p)
    };
    let table = solve_linearized_dp(&p, est.value, &grid).unwrap();
    let tables = backward_recursion(&p, est.value).unwrap();
    let cmp = compare_with_closed_form(&p, &table, &tables).unwrap();
    let elapsed = start.elapsed();
    verdict(
        cmp.states > 0 && cmp.max_deviation <= 2e-3 && within(elapsed, 60),
        format!(
            "max deviation {:.3e} <= 2e-3 over {} unclipped grid states (worst {:?}); delta {:.6}; {:.2?} <= 60 s",
            cmp.max_deviation, cmp.states, cmp.worst, est.value, elapsed
        ),
    )
}

fn recursion_residuals() -> Verdict {
    let p = criterion_params(100);
    let est = solve_delta_finite(&p, &SolverSettings::default()).unwrap();
    let tables = backward_recursion(&p, est.value).unwrap();
    let rho = p.discount;
    let k = p.coupling(est.value);
    let mut worst = 0.0f64;
    for t in 0..p.horizon {
        let (q1, m1) = (tables.q(t + 1), tables.m(t + 1));
        let d = 1.0 + rho * q1 * k;
        worst = worst
            .max((tables.q(t) - (1.0 + rho * q1 / d)).abs())
            .max((tables.m(t) - rho * (m1 + 2.0 * q1) / d).abs());
    }
    let terminal_price = price_at(&p, &tables, p.horizon, 5.0).unwrap();
    let terminal =
        tables.q(p.horizon) == 1.0 && tables.m(p.horizon) == 0.0 && terminal_price == 0.0;
    verdict(
        worst < 1e-12 && terminal,
        format!("max residual {worst:.3e} < 1e-12; Q_T=1, M_T=0, p(T)=0 exact: {terminal}"),
    )
}

fn steady_consistency() -> Verdict {
    let base = criterion_params(500);
    let rho = base.discount;
    let mut worst_table = 0.0f64;
    let mut worst_fixed = 0.0f64;
    let delta_inf = solve_delta_infinite(&base).unwrap().delta;
    for delta in [0.0, delta_inf, 0.5] {
        let tables = backward_recursion(&base, delta).unwrap();
        let q = steady_q(&base, delta);
        let m = steady_m(&base, delta, q);
        worst_table = worst_table
            .max((tables.q(0) - q).abs())
            .max((tables.m(0) - m).abs());
        let k = base.coupling(delta);
        let d = 1.0 + rho * q * k;
        worst_fixed = worst_fixed
            .max((q - (1.0 + rho * q / d)).abs())
            .max((m - rho * (m + 2.0 * q) / d).abs());
    }
    verdict(
        worst_table < 1e-6 && worst_fixed < 1e-9,
        format!(
            "|Q_0(500)-Q|, |M_0(500)-M| <= {worst_table:.3e} < 1e-6; fixed-point residual {worst_fixed:.3e} < 1e-9 (delta in {{0, delta_inf, 0.5}})"
        ),
    )
}

fn limits() -> Verdict {
    let p = criterion_params(100);
    let ss = solve_delta_infinite(&p).unwrap();
    let gain = p.arrival_prob * (ss.delta + 1.0) / p.cost_max;
    let mut age = p.initial_age;
    for _ in 0..1000 {
        age = age + 1.0 - gain * ss.unclipped_price(&p, age);
    }
    let age_err = (age - ss.limit_age).abs();
    let price_err = (ss.unclipped_price(&p, ss.limit_age)
        - p.cost_max / (p.arrival_prob * (ss.delta + 1.0)))
        .abs();
    verdict(
        age_err < 1e-8 && price_err < 1e-9,
        format!(
            "|A(1000) - limit age| {age_err:.3e} < 1e-8; |p(limit) - b/(alpha(delta+1))| {price_err:.3e} < 1e-9"
        ),
    )
}

fn fixed_point() -> Verdict {
    let p = criterion_params(100);
    let est = solve_delta_finite(&p, &SolverSettings::default()).unwrap();
    let (ages, next) = delta_map(&p, est.value).unwrap();
    let self_gap = (next - est.value).abs();
    let tables = backward_recursion(&p, est.value).unwrap();
    let clipped = forward_trajectory(&p, &tables).unwrap().ages();
    let in_domain = |a: &[f64]| {
        a.iter()
            .enumerate()
            .all(|(t, &x)| (0.0..=p.initial_age + t as f64).contains(&x))
    };
    let domain =
        in_domain(&ages) && in_domain(&clipped) && in_domain(&closed_form_ages(&p, &tables));
    verdict(
        est.converged && est.iterations <= 10_000 && self_gap <= 1e-3 && domain,
        format!(
            "converged in {} rounds to delta {:.6}; |delta - map(delta)| {self_gap:.3e} <= 1e-3; ages in [0, A(0)+t]: {domain}",
            est.iterations, est.value
        ),
    )
}

fn infinite_horizon_delta() -> Verdict {
    let p = criterion_params(100);
    let ss = solve_delta_infinite(&p).unwrap();
    let residual = delta_root_residual(&p, ss.delta).abs();
    let changes = root_sign_changes(&p, 0.0, 1e3, 10_000);
    let ok_low = check_feasibility(&p, ss.delta).reset_age_ok;
    let high = ModelParams {
        reset_age: 0.5,
        ..p
    };
    let high_delta = solve_delta_infinite(&high).map(|s| s.delta).unwrap_or(0.0);
    let ok_high = check_feasibility(&high, high_delta).reset_age_ok;
    let threshold = reset_age_threshold(&p);
    verdict(
        residual < 1e-10 && changes == 1 && ok_low && !ok_high && (threshold - 0.11518).abs() <= 1e-5,
        format!(
            "residual {residual:.3e} < 1e-10; {changes} sign change(s) on 1e4 points of [0, 1e3]; condition1 at A0=0.1: {ok_low}, at A0=0.5: {ok_high}; threshold {threshold:.7} within 1e-5 of quoted 0.11518"
        ),
    )
}

fn epsilon_optimality() -> Verdict {
    let start = Instant::now();
    let p = criterion_params(100);
    let rows = epsilon_gap(&p, &[20, 50, 100, 200], &SolverSettings::default()).unwrap();
    let elapsed = start.elapsed();
    let nonneg = rows.iter().all(|r| r.gap >= -1e-9);
    let first = rows.first().unwrap().gap;
    let last = rows.last().unwrap().gap;
    let gaps: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{:.3e}", r.horizon, r.gap))
        .collect();
    verdict(
        nonneg && last < first && within(elapsed, 30),
        format!(
            "gaps [{}] >= -1e-9 and gap(200) < gap(20); {elapsed:.2?} <= 30 s",
            gaps.join(", ")
        ),
    )
}

fn monte_carlo() -> Verdict {
    let start = Instant::now();
    let p = criterion_params(100);
    let policy = PricingPolicy::Constant(0.6);
    let config = SimConfig {
        replications: 100_000,
        seed: 42,
        policy: policy.clone(),
        mode: PriceMode::ClosedLoop,
    };
    let report = sim::run(&p, &config).unwrap();
    let rate = p.acceptance_prob(0.6);
    let se = (rate * (1.0 - rate) / config.replications as f64).sqrt();
    let rate_z = report
        .acceptance_rate_path
        .iter()
        .map(|r| (r - rate).abs() / se)
        .fold(0.0f64, f64::max);
    let cmp = compare_to_analytic(&report, &p, &policy).unwrap();
    let again = sim::run(&p, &config).unwrap();
    let identical = format!("{report:?}") == format!("{again:?}")
        && report
            .mean_age_path
            .iter()
            .zip(&again.mean_age_path)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    let elapsed = start.elapsed();
    verdict(
        rate_z <= 3.0 && cmp.max_abs_z < 4.0 && identical && within(elapsed, 120),
        format!(
            "max acceptance-rate deviation {rate_z:.3} SE <= 3 over {} slots; max |z| {:.3} < 4; reproducible: {identical}; seed 42; {elapsed:.2?} <= 120 s",
            report.acceptance_rate_path.len(),
            cmp.max_abs_z
        ),
    )
}

fn trajectory_shape() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_aoi-pricing"))
        .args(["solve", "--horizon", "100", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    if !status.success() {
        return verdict(false, format!("solve exited with {status}"));
    }
    let cols = read_columns(&dir.path().join("trajectory.csv"));
    let price = &cols["price"];
    let age = &cols["expected_age"];
    let (q, m) = (&cols["Q_t"], &cols["M_t"]);
    let last = price.len() - 1;
    let price_zero = price[last] == 0.0 && last == 100;
    let rising = age[last - 5..].windows(2).all(|w| w[1] > w[0]);
    let flat = |c: &[f64]| {
        c[..=50]
            .iter()
            .map(|x| (x - c[0]).abs())
            .fold(0.0f64, f64::max)
    };
    let (fq, fm) = (flat(q), flat(m));
    verdict(
        price_zero && rising && fq <= 1e-6 && fm <= 1e-6,
        format!(
            "p(T)=0: {price_zero}; age rising over last 5 slots: {rising}; Q_t, M_t spread over t<=50: {fq:.3e}, {fm:.3e} <= 1e-6"
        ),
    )
}

fn read_columns(path: &Path) -> std::collections::HashMap<String, Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let mut cols: std::collections::HashMap<String, Vec<f64>> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for record in reader.records() {
        for (h, v) in headers.iter().zip(record.unwrap().iter()) {
            cols.get_mut(h).unwrap().push(v.parse().unwrap());
        }
    }
    cols
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("closed form vs linearized oracle", closed_form_vs_oracle),
        ("recursion residuals", recursion_residuals),
        ("steady-state consistency", steady_consistency),
        ("limits", limits),
        ("fixed point", fixed_point),
        ("infinite-horizon delta", infinite_horizon_delta),
        ("epsilon-optimality gap", epsilon_optimality),
        ("Monte Carlo validation", monte_carlo),
        ("trajectory shape", trajectory_shape),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!(
            "criterion {}: {} - {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
