//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

// Reference table values, not constants.
#![allow(clippy::approx_constant)]

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtd_core::analysis::{
    attacker_cost_threshold, attacker_second_derivative, backoff_equilibrium_check, defender_second_derivative,
    existence_margin,
};
use mtd_core::best_response::{
    attacker_best_response, attacker_marginal, attacker_stationarity, defender_best_response, defender_marginal,
    defender_stationarity, ResponseKind,
};
use mtd_core::monte_carlo::{simulate_strategy_pair, strategy_table, TableMode};
use mtd_core::nash::{find_equilibria, verify_epsilon_ne, SolverOptions};
use mtd_core::payoff::{
    expected_attacker_payoff, expected_defender_payoff, expected_payoffs_by_quadrature, payoff_point,
};
use mtd_core::{validate_config, Game, GameConfig};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn linear_game(horizon: f64, tau_min: f64, lambda: (f64, f64), c_d: f64, c_a: f64) -> Game {
    let mut c = GameConfig::linear(horizon, lambda.1, c_d, c_a);
    c.tau_min = tau_min;
    c.lambda_min = lambda.0;
    validate_config(c).expect("valid game")
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Central difference with one Richardson step.
fn d1<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let c = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * c(h / 2.0) - c(h)) / 3.0
}

fn d2<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let c = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    (4.0 * c(h / 2.0) - c(h)) / 3.0
}

fn ne_reproduction() -> Outcome {
    let g = linear_game(1.5, 0.01, (0.01, 5.0), 0.3, 0.5);
    let start = Instant::now();
    let report = find_equilibria(&g, &SolverOptions::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let eqs = &report.equilibria;
    let pass = eqs.len() == 1
        && (eqs[0].tau_d_star - 1.27).abs() <= 0.02
        && (eqs[0].lambda_a_star - 0.61).abs() <= 0.02
        && elapsed < 1.0;
    let detail = match eqs.first() {
        Some(e) => format!(
            "{} equilibria, first ({:.5}, {:.5}), {:.3} s",
            eqs.len(),
            e.tau_d_star,
            e.lambda_a_star,
            elapsed
        ),
        None => "no equilibrium".into(),
    };
    Outcome { pass, detail }
}

fn interior_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut found, mut draws) = (0, 0);
    let (mut worst_identity, mut worst_stationarity) = (0.0f64, 0.0f64);
    while found < 20 && draws < 1000 {
        draws += 1;
        let c_d = rng.random_range(0.05..=1.0);
        let c_a = rng.random_range(0.05..=1.0);
        let g = linear_game(4.0, 0.01, (0.01, 5.0), c_d, c_a);
        let report = find_equilibria(&g, &SolverOptions::default()).unwrap();
        for e in &report.equilibria {
            if e.kind_d != ResponseKind::Interior || e.kind_a != ResponseKind::Interior {
                continue;
            }
            found += 1;
            worst_identity = worst_identity.max((e.lambda_a_star - c_d / c_a).abs());
            let s_a = attacker_stationarity(&g, e.tau_d_star, e.lambda_a_star).unwrap();
            let s_d = defender_stationarity(&g, e.tau_d_star, e.lambda_a_star).unwrap();
            worst_stationarity = worst_stationarity.max(s_a.abs()).max(s_d.abs());
        }
    }
    Outcome {
        pass: found >= 20 && worst_identity <= 1e-6 && worst_stationarity <= 1e-8,
        detail: format!(
            "{found} interior games in {draws} draws, max |lambda* - C_d/C_a| = {worst_identity:.2e}, max stationarity residual = {worst_stationarity:.2e}"
        ),
    }
}

fn threshold_values() -> Outcome {
    let g = linear_game(4.0, 0.01, (1.0, 3.0), 0.3, 0.1);
    let mut pass = true;
    let mut detail = Vec::new();
    for &(tau, expected) in &[(0.1, 0.0369), (2.0, 0.9826)] {
        let th = attacker_cost_threshold(&g, tau).unwrap().threshold;
        let above = g.with_costs(0.3, th + 1e-3).unwrap();
        let br = attacker_best_response(&above, tau).unwrap();
        let ok = (th - expected).abs() <= 5e-4 && br.kind == ResponseKind::LowerBoundary && br.action == 1.0;
        pass &= ok;
        detail.push(format!("tau_d={tau}: {th:.5}, BR above = {}", br.action));
    }
    Outcome {
        pass,
        detail: detail.join("; "),
    }
}

/// `(C_d, C_a, [ne_ud, ne_ua, nodef_ud, nodef_ua, noatk_ud, noatk_ua, aggr_ud, aggr_ua, worst_ud, worst_ua])`.
const TABLE: [(f64, f64, [f64; 10]); 12] = [
    (
        0.0,
        0.0,
        [
            -1.49e-2, 1.49e-2, -0.8893, 0.8893, -5.00e-5, 5.00e-5, -1.49e-2, 1.49e-2, -0.8896, 0.8896,
        ],
    ),
    (
        0.1,
        0.0,
        [
            -0.6672, 0.3894, -0.9229, 0.8896, -0.2796, 0.0018, -0.6672, 0.3894, -0.9229, 0.8896,
        ],
    ),
    (
        0.1,
        0.1,
        [
            -0.4146, 0.0204, -0.72, 0.6532, -0.1986, 5.85e-4, -0.685, -0.1013, -0.9229, 0.7896,
        ],
    ),
    (
        0.0,
        0.1,
        [
            -5.00e-5, -0.1, -0.0149, 0.0146, -5.00e-5, -0.1, -1.49e-2, -30.0851, -0.8896, 0.7896,
        ],
    ),
    (
        0.4,
        0.2,
        [
            -0.9513, 0.4201, -0.968, 0.7015, -0.2724, 0.0062, -1.0472, 0.3836, -1.0225, 0.6896,
        ],
    ),
    (
        0.4,
        0.4,
        [
            -0.7504, 0.1593, -0.8197, 0.5526, -0.3009, 0.0038, -1.0539, -0.1255, -1.0225, 0.4896,
        ],
    ),
    (
        0.4,
        0.6,
        [
            -0.6319, 0.1047, -0.6986, 0.4341, -0.2724, 0.0035, -1.0472, -0.4137, -1.0225, 0.2896,
        ],
    ),
    (
        0.8,
        0.6,
        [
            -0.9984, 0.4914, -0.9984, 0.4914, -0.2807, 0.0129, -1.1554, 0.2896, -1.1554, 0.2896,
        ],
    ),
    (
        0.8,
        1.0,
        [
            -0.8904, 0.2963, -0.8914, 0.3566, -0.3086, 0.0097, -1.1726, -0.2333, -1.1554, -0.1104,
        ],
    ),
    (
        2.0,
        4.0,
        [
            -0.7496, 0.0054, -0.7496, 0.0054, -0.6794, 0.0016, -1.5541, -3.1104, -1.5541, -3.1104,
        ],
    ),
    (
        3.0,
        0.0,
        [
            -1.8889, 0.8889, -1.8859, 0.8893, -1.0149, 0.0149, -1.8893, 0.8893, -1.8863, 0.8896,
        ],
    ),
    (
        0.0,
        6.0,
        [
            -4.9998e-5, -6.0, -0.0149, -0.0050, -4.9998e-5, -6.0, -0.0149, -1.8060e3, -0.8896, -5.1104,
        ],
    ),
];

const COLUMNS: [&str; 10] = [
    "ne_ud", "ne_ua", "nodef_ud", "nodef_ua", "noatk_ud", "noatk_ua", "aggr_ud", "aggr_ua", "worst_ud", "worst_ua",
];

fn cell_tolerance(c_d: f64, c_a: f64, column: usize) -> f64 {
    let closed_form_row = (c_d, c_a) == (3.0, 0.0) || (c_d, c_a) == (0.0, 6.0);
    if closed_form_row || column >= 8 {
        0.002
    } else if (c_d, c_a) == (0.4, 0.4) && column == 1 {
        0.03
    } else {
        0.02
    }
}

fn table_reproduction() -> Outcome {
    let g = linear_game(3.0, 0.01, (0.01, 3.0), 0.0, 0.0);
    let rows: Vec<(f64, f64)> = TABLE.iter().map(|r| (r.0, r.1)).collect();
    let start = Instant::now();
    let table = strategy_table(&g, &rows, TableMode::Analytic).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut misses = Vec::new();
    let mut cells = 0;
    for (row, &(c_d, c_a, reference)) in table.rows.iter().zip(TABLE.iter()) {
        let ours = row.values();
        for (k, &p) in reference.iter().enumerate() {
            cells += 1;
            let diff = (ours[k + 2] - p).abs();
            if diff > cell_tolerance(c_d, c_a, k) {
                misses.push(format!(
                    "({c_d}, {c_a}) {} ours {:.6} reference {p}",
                    COLUMNS[k],
                    ours[k + 2]
                ));
            }
        }
    }
    let pass = misses.is_empty() && elapsed < 5.0;
    let mut detail = format!(
        "{}/{} cells within tolerance, {:.3} s",
        cells - misses.len(),
        cells,
        elapsed
    );
    if !misses.is_empty() {
        detail.push_str("; outside: ");
        detail.push_str(&misses.join("; "));
    }
    Outcome { pass, detail }
}

fn closed_form_equivalence() -> Outcome {
    let g = linear_game(4.5, 0.01, (0.01, 5.5), 0.3, 0.1);
    let (mut payoff_err, mut marginal_err, mut second_err) = (0.0f64, 0.0f64, 0.0f64);
    for &t in &linspace(0.05, 4.0, 40) {
        for &l in &linspace(0.05, 5.0, 40) {
            let p = payoff_point(&g, t, l).unwrap();
            let (qa, qd) = expected_payoffs_by_quadrature(&g, t, l).unwrap();
            payoff_err = payoff_err.max((p.u_a - qa).abs()).max((p.u_d - qd).abs());

            let ua = |x: f64| expected_attacker_payoff(&g, t, x).unwrap();
            let ud = |x: f64| expected_defender_payoff(&g, x, l).unwrap();
            let (hl, ht) = (1e-3 * l, 1e-3 * t);
            let ma = attacker_marginal(&g, t, l).unwrap();
            let md = defender_marginal(&g, t, l).unwrap();
            marginal_err = marginal_err
                .max((ma - d1(ua, l, hl)).abs())
                .max((md - d1(ud, t, ht)).abs());
            let sa = attacker_second_derivative(&g, t, l).unwrap();
            let sd = defender_second_derivative(&g, t, l).unwrap();
            second_err = second_err
                .max((sa - d2(ua, l, hl)).abs())
                .max((sd - d2(ud, t, ht)).abs());
        }
    }
    Outcome {
        pass: payoff_err <= 1e-8 && marginal_err <= 1e-5 && second_err <= 1e-5,
        detail: format!(
            "payoff vs quadrature {payoff_err:.2e}, marginals vs FD {marginal_err:.2e}, second derivatives vs FD {second_err:.2e}"
        ),
    }
}

fn concavity_certificate() -> Outcome {
    let g = linear_game(10.0, 0.01, (0.01, 10.0), 0.3, 0.1);
    let (mut attacker_bad, mut defender_bad, mut positive_margin) = (0, 0, 0);
    for &t in &linspace(0.05, 10.0, 100) {
        for &l in &linspace(0.05, 10.0, 100) {
            if attacker_second_derivative(&g, t, l).unwrap() >= 0.0 {
                attacker_bad += 1;
            }
            if existence_margin(&g, t, l) > 0.0 {
                positive_margin += 1;
                if defender_second_derivative(&g, t, l).unwrap() >= 0.0 {
                    defender_bad += 1;
                }
            }
        }
    }
    Outcome {
        pass: attacker_bad == 0 && defender_bad == 0,
        detail: format!(
            "attacker non-negative at {attacker_bad}/10000, defender non-negative at {defender_bad}/{positive_margin} positive-margin points"
        ),
    }
}

fn monte_carlo_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    let mut worst_z = 0.0f64;
    let mut reproducible = true;
    for i in 0..10 {
        let c_d = rng.random_range(0.0..=1.0);
        let c_a = rng.random_range(0.0..=1.0);
        let tau = rng.random_range(0.05..=4.0);
        let lambda = rng.random_range(0.05..=5.0);
        let g = linear_game(4.0, 0.01, (0.01, 5.0), c_d, c_a);
        let seed = 1000 + i;
        let sim = simulate_strategy_pair(&g, tau, lambda, 1_000_000, seed).unwrap();
        let exact = payoff_point(&g, tau, lambda).unwrap();
        worst_z = worst_z
            .max((sim.mean_u_a - exact.u_a).abs() / sim.stderr_u_a)
            .max((sim.mean_u_d - exact.u_d).abs() / sim.stderr_u_d);
        if i == 0 {
            let again = simulate_strategy_pair(&g, tau, lambda, 1_000_000, seed).unwrap();
            reproducible &= again == sim
                && again.mean_u_a.to_bits() == sim.mean_u_a.to_bits()
                && again.stderr_u_d.to_bits() == sim.stderr_u_d.to_bits();
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        pass: worst_z <= 4.0 && reproducible && elapsed < 10.0,
        detail: format!("max |z| = {worst_z:.3}, bit-identical replay: {reproducible}, {elapsed:.3} s"),
    }
}

fn monotonicity_endpoints() -> Outcome {
    let mut parts = Vec::new();

    let dear_d = linear_game(3.0, 0.01, (0.01, 3.0), 1.5, 0.1);
    let not_t = linspace(0.01, 3.0, 300)
        .into_iter()
        .filter(|&l| defender_best_response(&dear_d, l).unwrap().action != 3.0)
        .count();
    parts.push((not_t == 0, format!("C_d=1.5: BR != T at {not_t}/300 rates")));

    let dear_a = linear_game(4.0, 0.01, (0.01, 5.0), 0.3, 4.0);
    let taus = linspace(0.01, 4.0, 400);
    let off: Vec<f64> = taus
        .iter()
        .copied()
        .filter(|&t| attacker_best_response(&dear_a, t).unwrap().action != 0.01)
        .collect();
    let msg = match off.first() {
        None => "C_a=4: BR = lambda_min on all 400 tau_d".to_string(),
        Some(&t) => {
            let br = attacker_best_response(&dear_a, 4.0).unwrap();
            format!(
                "C_a=4: BR != lambda_min at {}/400 tau_d, from tau_d = {t:.4} on (marginal at lambda_min, tau_d=4: {:.3e}; BR(4) = {:.4})",
                off.len(),
                attacker_marginal(&dear_a, 4.0, 0.01).unwrap(),
                br.action
            )
        }
    };
    parts.push((off.is_empty(), msg));

    let free = linear_game(4.0, 0.01, (0.01, 5.0), 0.0, 0.0);
    let eqs = find_equilibria(&free, &SolverOptions::default()).unwrap().equilibria;
    let corner = eqs.len() == 1 && (eqs[0].tau_d_star, eqs[0].lambda_a_star) == (0.01, 5.0);
    let verified = verify_epsilon_ne(&free, 0.01, 5.0, 1e-6, 2048).unwrap().is_ne;
    parts.push((
        corner && verified,
        format!(
            "zero cost: {} equilibria, (tau_min, lambda_max) verified: {verified}",
            eqs.len()
        ),
    ));

    Outcome {
        pass: parts.iter().all(|p| p.0),
        detail: parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; "),
    }
}

fn backoff_equilibrium() -> Outcome {
    let g = linear_game(1.0, 0.01, (0.0, 5.0), 0.3, 2.0);
    let check = backoff_equilibrium_check(&g).unwrap();
    let ne = verify_epsilon_ne(&g, 1.0, 0.0, 1e-9, 2048).unwrap();
    Outcome {
        pass: check.is_equilibrium && ne.is_ne,
        detail: format!(
            "margin {:.4} at lambda {:.4}, deviation gains d={:.2e} a={:.2e}",
            check.margin, check.worst_lambda, ne.max_gain_d, ne.max_gain_a
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("NE reproduction", ne_reproduction),
        ("interior-NE identity", interior_identity),
        ("threshold values", threshold_values),
        ("strategy table reproduction", table_reproduction),
        ("closed form vs oracles", closed_form_equivalence),
        ("concavity certificate", concavity_certificate),
        ("Monte-Carlo consistency", monte_carlo_consistency),
        ("monotonicity endpoints", monotonicity_endpoints),
        ("back-off equilibrium", backoff_equilibrium),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} ({})",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
