//! Existence certificates and cost thresholds.
//!
//! Everything here is numeric evidence on grids, not a proof. The
//! linear/exponential quantities use the substitution `C_d -> C_d / alpha`
//! (and `C_a -> C_a / alpha`) so that any leakage scale is covered.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::payoff::expected_reward;
use crate::quadrature::{integrate, ABS_TOL};
use crate::special::gamma_p;

/// Default certificate grid per axis.
pub const DEFAULT_GRID: usize = 64;
/// Rates sampled by the back-off check.
pub const BACKOFF_GRID: usize = 256;

const REFINE_ROUNDS: usize = 12;
const REFINE_SIDE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCertificate {
    /// True iff the worst margin is strictly positive.
    pub holds: bool,
    /// `(tau_d, lambda_a)` where the margin is smallest.
    pub worst_point: (f64, f64),
    pub worst_margin: f64,
    pub grid_resolution: (usize, usize),
    /// False when the game is not the linear/exponential instantiation the
    /// inequality is stated for.
    pub applicable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    AttackerMinRate,
    DefenderNoMigrate,
    GeneralAttacker,
    GeneralDefender,
    Backoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub kind: ThresholdKind,
    pub threshold: f64,
    /// The actual cost exceeds the threshold.
    pub satisfied: bool,
    /// False when a closed-form threshold is evaluated outside the
    /// linear/exponential instantiation.
    pub applicable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorollaryCheck {
    /// `lambda_min >= 1 / C_d`.
    pub cor1: bool,
    /// `T <= 5 C_d` (with a strictly positive `lambda_min`).
    pub cor2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub f_concave_in_lambda: bool,
    pub g_over_tau_convex: bool,
    pub existence_guaranteed: bool,
    /// Grid points where `d^2 f / d lambda^2 < 0`, out of `f_points_checked`.
    pub f_concave_points: usize,
    pub f_points_checked: usize,
    /// Grid points where `d^2 (G / tau_d) / d tau_d^2 >= 0`, out of `g_points_checked`.
    pub g_convex_points: usize,
    pub g_points_checked: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffCheck {
    pub is_equilibrium: bool,
    pub worst_lambda: f64,
    /// `min over lambda of lambda * C_a - E[G(T - tau_a)^+]`.
    pub margin: f64,
    /// `(T, 0)` when the back-off profile is an equilibrium.
    pub equilibrium: Option<(f64, f64)>,
}

fn leakage_scale(game: &Game) -> Result<f64> {
    game.closed_form_scale().ok_or(Error::WrongInstantiation)
}

/// `d^2 u_a / d lambda_a^2` for the linear/exponential game.
pub fn attacker_second_derivative(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    let alpha = leakage_scale(game)?;
    positive("tau_d", tau_d)?;
    positive("lambda_a", lambda_a)?;
    // e^{-x}(x^2 + 2x + 2 - 2e^x) = -2 P(3, x)
    let x = lambda_a * tau_d;
    Ok(-2.0 * alpha * gamma_p(3, x) / (lambda_a.powi(3) * tau_d))
}

/// `d^2 u_d / d tau_d^2` for the linear/exponential game.
pub fn defender_second_derivative(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    let alpha = leakage_scale(game)?;
    positive("tau_d", tau_d)?;
    positive("lambda_a", lambda_a)?;
    let x = lambda_a * tau_d;
    let c_d = game.migration_cost();
    Ok(2.0 * (alpha * gamma_p(3, x) - lambda_a * c_d) / (lambda_a * tau_d.powi(3)))
}

fn positive(what: &'static str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            what,
            value: v,
            domain: "(0, inf)".into(),
        })
    }
}

/// `(1 + x + x^2/2) e^{-x} - (1 - lambda * C_d)`, `x = lambda * tau`.
/// Positive margin means the defender's payoff is strictly concave in `tau_d` there.
pub fn existence_margin(game: &Game, tau_d: f64, lambda_a: f64) -> f64 {
    let c = game.migration_cost() / game.closed_form_scale().unwrap_or(1.0);
    lambda_a * c - gamma_p(3, lambda_a * tau_d)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Evaluates the existence margin over `A_d x A_a` (corners included), then
/// zooms in on the worst cell.
pub fn theorem2_certificate(game: &Game, grid: (usize, usize)) -> ExistenceCertificate {
    let (n_tau, n_lambda) = (grid.0.max(2), grid.1.max(2));
    let (t_lo, t_hi) = game.defender_interval();
    let (l_lo, l_hi) = game.attacker_interval();
    let taus = linspace(t_lo, t_hi, n_tau);
    let lambdas = linspace(l_lo, l_hi, n_lambda);
    let (mut worst_m, mut wi, mut wj) = (f64::INFINITY, 0, 0);
    for (i, &t) in taus.iter().enumerate() {
        for (j, &l) in lambdas.iter().enumerate() {
            let m = existence_margin(game, t, l);
            if m < worst_m {
                (worst_m, wi, wj) = (m, i, j);
            }
        }
    }
    let mut worst = (taus[wi], lambdas[wj]);
    let mut box_t = (taus[wi.saturating_sub(1)], taus[(wi + 1).min(n_tau - 1)]);
    let mut box_l = (lambdas[wj.saturating_sub(1)], lambdas[(wj + 1).min(n_lambda - 1)]);
    for _ in 0..REFINE_ROUNDS {
        for t in linspace(box_t.0, box_t.1, REFINE_SIDE) {
            for l in linspace(box_l.0, box_l.1, REFINE_SIDE) {
                let m = existence_margin(game, t, l);
                if m < worst_m {
                    worst_m = m;
                    worst = (t, l);
                }
            }
        }
        let (ht, hl) = ((box_t.1 - box_t.0) / 4.0, (box_l.1 - box_l.0) / 4.0);
        box_t = ((worst.0 - ht).max(t_lo), (worst.0 + ht).min(t_hi));
        box_l = ((worst.1 - hl).max(l_lo), (worst.1 + hl).min(l_hi));
    }
    ExistenceCertificate {
        holds: worst_m > 0.0,
        worst_point: worst,
        worst_margin: worst_m,
        grid_resolution: (n_tau, n_lambda),
        applicable: game.closed_form_scale().is_some(),
    }
}

/// Sufficient conditions on the action intervals alone.
pub fn corollary_check(game: &Game) -> CorollaryCheck {
    let c = game.migration_cost() / game.closed_form_scale().unwrap_or(1.0);
    if c <= 0.0 {
        return CorollaryCheck {
            cor1: false,
            cor2: false,
        };
    }
    CorollaryCheck {
        cor1: game.lambda_min() >= 1.0 / c,
        // At lambda = 0 the margin is exactly zero, so the strict inequality needs lambda_min > 0.
        cor2: game.horizon() <= 5.0 * c && game.lambda_min() > 0.0,
    }
}

/// Pointwise check of the general existence conditions: `f` strictly concave in
/// `lambda_a` and `G / tau_d` convex in `tau_d`.
pub fn general_concavity_report(game: &Game, grid: usize) -> ConcavityReport {
    let n = grid.max(2);
    let law = game.collocation();
    let reward = game.reward();
    let horizon = game.horizon();
    let (l_lo, l_hi) = game.attacker_interval();
    let (t_lo, t_hi) = game.defender_interval();

    let lambdas: Vec<f64> = linspace(l_lo, l_hi, n).into_iter().filter(|&l| l > 0.0).collect();
    let taus_a = linspace(0.0, horizon, n);
    let mut f_ok = 0;
    let mut f_checked = 0;
    for &tau in &taus_a {
        for &lam in &lambdas {
            let h = 1e-4 * lam.max(1.0);
            let d2 = if lam - h > 0.0 {
                (law.pdf_dlambda_unchecked(tau, lam + h) - law.pdf_dlambda_unchecked(tau, lam - h)) / (2.0 * h)
            } else {
                (law.pdf_dlambda_unchecked(tau, lam + h) - law.pdf_dlambda_unchecked(tau, lam)) / h
            };
            f_checked += 1;
            if d2 < 0.0 {
                f_ok += 1;
            }
        }
    }

    let h = 1e-3 * t_hi;
    let phi = |td: f64, ta: f64| reward.value(td, ta) / td;
    let mut g_ok = 0;
    let mut g_checked = 0;
    for &td in &linspace(t_lo, t_hi, n) {
        if td - h <= 0.0 {
            continue;
        }
        for &ta in &taus_a {
            // Skip the kink at tau_a = tau_d.
            if (td - ta).abs() <= 2.0 * h {
                continue;
            }
            let d2 = (phi(td + h, ta) - 2.0 * phi(td, ta) + phi(td - h, ta)) / (h * h);
            let scale = 1.0 + phi(td, ta).abs();
            g_checked += 1;
            if d2 >= -1e-7 * scale {
                g_ok += 1;
            }
        }
    }
    let f_concave = f_checked > 0 && f_ok == f_checked;
    let g_convex = g_checked > 0 && g_ok == g_checked;
    ConcavityReport {
        f_concave_in_lambda: f_concave,
        g_over_tau_convex: g_convex,
        existence_guaranteed: f_concave && g_convex,
        f_concave_points: f_ok,
        f_points_checked: f_checked,
        g_convex_points: g_ok,
        g_points_checked: g_checked,
    }
}

/// Uniform lower bound on `C_a` above which the attacker's best response to
/// `tau_d` is `lambda_min`.
pub fn attacker_cost_threshold(game: &Game, tau_d: f64) -> Result<ThresholdReport> {
    let lambda_min = game.lambda_min();
    if lambda_min <= 0.0 {
        return Err(Error::DegenerateLambdaMin);
    }
    let alpha = game.closed_form_scale().unwrap_or(1.0);
    let threshold = alpha * gamma_p(2, game.lambda_max() * tau_d) / (lambda_min * lambda_min);
    Ok(ThresholdReport {
        kind: ThresholdKind::AttackerMinRate,
        threshold,
        satisfied: game.attack_cost() > threshold,
        applicable: game.closed_form_scale().is_some(),
    })
}

/// Lower bound on `C_d` above which the defender's best response to
/// `lambda_a` is to wait until `T`.
pub fn defender_cost_threshold(game: &Game, lambda_a: f64) -> Result<ThresholdReport> {
    if !(lambda_a >= 0.0) {
        return Err(Error::NegativeInput {
            what: "lambda_a",
            value: lambda_a,
        });
    }
    let alpha = game.closed_form_scale().unwrap_or(1.0);
    let threshold = if lambda_a == 0.0 {
        0.0
    } else {
        alpha * gamma_p(2, lambda_a * game.horizon()) / lambda_a
    };
    Ok(ThresholdReport {
        kind: ThresholdKind::DefenderNoMigrate,
        threshold,
        satisfied: game.migration_cost() > threshold,
        applicable: game.closed_form_scale().is_some(),
    })
}

/// Integral thresholds valid for any reward and collocation law:
/// attacker `int_0^tau_d G df/dlambda(lambda_min)`, defender `T^2 E[d/dtau_d (G / tau_d) at T]`.
pub fn general_monotonicity_thresholds(
    game: &Game,
    tau_d: f64,
    lambda_a: f64,
) -> Result<(ThresholdReport, ThresholdReport)> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    let reward = game.reward();
    let law = game.collocation();
    let lambda_min = game.lambda_min();
    let attacker = integrate(
        |s| reward.value(tau_d, s) * law.pdf_dlambda_unchecked(s, lambda_min),
        0.0,
        tau_d,
        ABS_TOL,
    )?
    .value;
    let horizon = game.horizon();
    // T^2 * (G_tau / T - G / T^2) = T * G_tau - G
    let defender = if lambda_a == 0.0 {
        0.0
    } else {
        integrate(
            |s| {
                (horizon * reward.dvalue_dtau_d(horizon, s) - reward.value(horizon, s)) * law.pdf_unchecked(s, lambda_a)
            },
            0.0,
            horizon,
            ABS_TOL,
        )?
        .value
    };
    Ok((
        ThresholdReport {
            kind: ThresholdKind::GeneralAttacker,
            threshold: attacker,
            satisfied: game.attack_cost() > attacker,
            applicable: true,
        },
        ThresholdReport {
            kind: ThresholdKind::GeneralDefender,
            threshold: defender,
            satisfied: game.migration_cost() > defender,
            applicable: true,
        },
    ))
}

/// Checks `E[G(T - tau_a)^+] <= lambda * C_a` on a rate grid over `(0, lambda_max]`.
pub fn backoff_equilibrium_check(game: &Game) -> Result<BackoffCheck> {
    if game.lambda_min() != 0.0 {
        return Err(Error::RequiresZeroLambdaMin(game.lambda_min()));
    }
    let horizon = game.horizon();
    let lambda_max = game.lambda_max();
    let c_a = game.attack_cost();
    let margins = (1..=BACKOFF_GRID)
        .into_par_iter()
        .map(|k| {
            let lam = lambda_max * k as f64 / BACKOFF_GRID as f64;
            Ok((lam, lam * c_a - expected_reward(game, horizon, lam)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst_lambda, margin) = margins
        .into_iter()
        .fold((0.0, f64::INFINITY), |acc, m| if m.1 < acc.1 { m } else { acc });
    let is_equilibrium = margin >= 0.0;
    Ok(BackoffCheck {
        is_equilibrium,
        worst_lambda,
        margin,
        equilibrium: is_equilibrium.then_some((horizon, 0.0)),
    })
}
