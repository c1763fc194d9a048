//! Realized and expected per-unit-time payoffs.
//!
//! For linear `G` with exponential collocation times the expectations have
//! closed forms; every other combination goes through adaptive quadrature of
//! `int_0^tau_d G(tau_d, s) f(s; lambda) ds`. Beyond `tau_d` the reward is zero,
//! so the tail of the collocation law contributes nothing but its mass.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::Game;
use crate::quadrature::{integrate, ABS_TOL};
use crate::special::exp_defect;

/// Below this attack rate the closed forms switch to their series expansion.
pub const SMALL_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffPoint {
    pub tau_d: f64,
    pub lambda_a: f64,
    /// Attacker's expected payoff per unit time.
    pub u_a: f64,
    /// Defender's expected payoff per unit time.
    pub u_d: f64,
    pub method: PayoffMethod,
}

/// `P(tau_a < tau_d)`.
pub fn collocation_probability(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    game.check_tau_d(tau_d)?;
    if lambda_a < 0.0 || lambda_a.is_nan() {
        return Err(crate::Error::OutOfDomain {
            what: "lambda_a",
            value: lambda_a,
            domain: "[0, inf)".into(),
        });
    }
    Ok(game.collocation().cdf_unchecked(tau_d, lambda_a).clamp(0.0, 1.0))
}

/// Payoff of one realization of the collocation time, attacker side.
pub fn realized_attacker_payoff(game: &Game, tau_d: f64, tau_a: f64, lambda_a: f64) -> Result<f64> {
    check_realization(game, tau_d, tau_a, lambda_a)?;
    Ok(realized_pair(game, tau_d, tau_a, lambda_a).0)
}

/// Payoff of one realization of the collocation time, defender side.
pub fn realized_defender_payoff(game: &Game, tau_d: f64, tau_a: f64, lambda_a: f64) -> Result<f64> {
    check_realization(game, tau_d, tau_a, lambda_a)?;
    Ok(realized_pair(game, tau_d, tau_a, lambda_a).1)
}

fn check_realization(game: &Game, tau_d: f64, tau_a: f64, lambda_a: f64) -> Result<()> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    if !(tau_a >= 0.0) {
        return Err(crate::Error::OutOfDomain {
            what: "tau_a",
            value: tau_a,
            domain: "[0, inf]".into(),
        });
    }
    Ok(())
}

/// `(u_a, u_d)` for one realization; no domain checks.
pub(crate) fn realized_pair(game: &Game, tau_d: f64, tau_a: f64, lambda_a: f64) -> (f64, f64) {
    let leak = if tau_a < tau_d {
        game.reward().value(tau_d, tau_a)
    } else {
        0.0
    };
    let u_a = (leak - lambda_a * game.attack_cost()) / tau_d;
    let u_d = (-leak - game.migration_cost()) / tau_d;
    (u_a, u_d)
}

/// `int_0^tau_d G(tau_d, s) f(s; lambda) ds` by adaptive quadrature.
pub fn quadrature_expected_reward(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    game.check_tau_d(tau_d)?;
    if lambda_a == 0.0 {
        return Ok(0.0);
    }
    expected_reward_unchecked(game, tau_d, lambda_a)
}

pub(crate) fn expected_reward_unchecked(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    if lambda_a == 0.0 || game.reward().is_zero() {
        return Ok(0.0);
    }
    let reward = game.reward();
    let law = game.collocation();
    let q = integrate(
        |s| reward.value(tau_d, s) * law.pdf_unchecked(s, lambda_a),
        0.0,
        tau_d,
        ABS_TOL,
    )?;
    Ok(q.value)
}

/// `int_0^tau_d G f`, closed form when available.
pub(crate) fn expected_reward(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    match game.closed_form_scale() {
        Some(_) if lambda_a == 0.0 => Ok(0.0),
        Some(alpha) => Ok(closed_form_reward_per_time(alpha, tau_d, lambda_a) * tau_d),
        None => expected_reward_unchecked(game, tau_d, lambda_a),
    }
}

/// Closed-form `int G f` for `G = alpha * t`, exponential `f`: `alpha * (x + e^{-x} - 1) / lambda`.
fn closed_form_reward_per_time(alpha: f64, tau_d: f64, lambda_a: f64) -> f64 {
    // Divided by tau_d: alpha * defect(x) / x.
    let x = lambda_a * tau_d;
    if lambda_a < SMALL_LAMBDA {
        alpha * x / 2.0
    } else {
        alpha * exp_defect(x) / x
    }
}

/// `u_a(tau_d, lambda_a)`.
pub fn expected_attacker_payoff(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    Ok(evaluate(game, tau_d, lambda_a)?.u_a)
}

/// `u_d(tau_d, lambda_a)`.
pub fn expected_defender_payoff(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    Ok(evaluate(game, tau_d, lambda_a)?.u_d)
}

/// Both expected payoffs at one strategy pair.
pub fn payoff_point(game: &Game, tau_d: f64, lambda_a: f64) -> Result<PayoffPoint> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    evaluate(game, tau_d, lambda_a)
}

/// Forces the quadrature path regardless of instantiation. Returns `(u_a, u_d)`.
pub fn expected_payoffs_by_quadrature(game: &Game, tau_d: f64, lambda_a: f64) -> Result<(f64, f64)> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    let reward = expected_reward_unchecked(game, tau_d, lambda_a)?;
    Ok((
        (reward - lambda_a * game.attack_cost()) / tau_d,
        (-reward - game.migration_cost()) / tau_d,
    ))
}

pub(crate) fn evaluate(game: &Game, tau_d: f64, lambda_a: f64) -> Result<PayoffPoint> {
    let cost_a = lambda_a * game.attack_cost() / tau_d;
    let cost_d = game.migration_cost() / tau_d;
    if lambda_a == 0.0 {
        // Back-off: no collocation, no launches.
        return Ok(PayoffPoint {
            tau_d,
            lambda_a,
            u_a: 0.0,
            u_d: -cost_d,
            method: PayoffMethod::ClosedForm,
        });
    }
    let (reward, method) = match game.closed_form_scale() {
        Some(alpha) => (
            closed_form_reward_per_time(alpha, tau_d, lambda_a),
            PayoffMethod::ClosedForm,
        ),
        None => (
            expected_reward_unchecked(game, tau_d, lambda_a)? / tau_d,
            PayoffMethod::Quadrature,
        ),
    };
    Ok(PayoffPoint {
        tau_d,
        lambda_a,
        u_a: reward - cost_a,
        u_d: -reward - cost_d,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{validate_config, GameConfig, RewardModel};

    fn game(horizon: f64, lambda_min: f64, c_d: f64, c_a: f64) -> Game {
        let mut c = GameConfig::linear(horizon, 5.0, c_d, c_a);
        c.lambda_min = lambda_min;
        validate_config(c).unwrap()
    }

    #[test]
    fn collocation_probability_values() {
        let g = game(4.0, 0.0, 0.3, 0.1);
        assert_eq!(collocation_probability(&g, 1.0, 0.0).unwrap(), 0.0);
        let p = collocation_probability(&g, 1.0, 1.0).unwrap();
        // Oracle: quadrature of the density over [0, 1].
        let q = integrate(|t| (-t).exp(), 0.0, 1.0, 1e-13).unwrap().value;
        assert!((p - q).abs() < 1e-10);
        assert!((p - 0.6321).abs() < 1e-4);
        let long = game(100.0, 0.0, 0.3, 0.1);
        assert!((collocation_probability(&long, 100.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(collocation_probability(&g, 5.0, 1.0).is_err());
    }

    #[test]
    fn realized_payoffs() {
        let g = game(4.0, 0.0, 0.4, 0.2);
        assert!((realized_attacker_payoff(&g, 2.0, 1.0, 1.0).unwrap() - 0.4).abs() < 1e-15);
        assert!((realized_attacker_payoff(&g, 2.0, 3.0, 1.0).unwrap() + 0.1).abs() < 1e-15);
        assert_eq!(realized_attacker_payoff(&g, 2.0, 1.0, 0.0).unwrap(), 0.5);
        assert!((realized_defender_payoff(&g, 2.0, 1.0, 1.0).unwrap() + 0.7).abs() < 1e-15);
        assert!((realized_defender_payoff(&g, 2.0, 3.0, 1.0).unwrap() + 0.2).abs() < 1e-15);
        let free = game(4.0, 0.0, 0.0, 0.0);
        assert_eq!(realized_defender_payoff(&free, 1.0, 5.0, 1.0).unwrap(), 0.0);
        assert_eq!(realized_defender_payoff(&free, 1.0, f64::INFINITY, 1.0).unwrap(), 0.0);
        assert!(realized_attacker_payoff(&g, 2.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn expected_attacker_values() {
        let g = game(4.0, 0.0, 0.3, 0.1);
        let u = expected_attacker_payoff(&g, 1.0, 1.0).unwrap();
        let (oracle, _) = expected_payoffs_by_quadrature(&g, 1.0, 1.0).unwrap();
        assert!((u - oracle).abs() < 1e-10);
        assert!((u - ((-1.0f64).exp() - 0.1)).abs() < 1e-14);
        assert!((u - 0.26788).abs() < 1e-5);
        let table = game(3.0, 0.01, 0.1, 0.1);
        assert!((expected_attacker_payoff(&table, 3.0, 3.0).unwrap() - 0.7889).abs() < 1e-3);
        assert_eq!(expected_attacker_payoff(&g, 2.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn expected_defender_values() {
        let g = game(4.0, 0.0, 0.3, 0.1);
        let u = expected_defender_payoff(&g, 1.0, 1.0).unwrap();
        assert!((u + ((-1.0f64).exp() + 0.3)).abs() < 1e-14);
        let (_, oracle) = expected_payoffs_by_quadrature(&g, 1.0, 1.0).unwrap();
        assert!((u - oracle).abs() < 1e-10);
        let heavy = game(3.0, 0.01, 3.0, 0.0);
        assert!((expected_defender_payoff(&heavy, 3.0, 3.0).unwrap() + 1.8889).abs() < 1e-3);
        let g = game(4.0, 0.0, 0.5, 0.1);
        assert_eq!(expected_defender_payoff(&g, 2.0, 0.0).unwrap(), -0.25);
    }

    #[test]
    fn quadrature_reward_values() {
        let g = game(4.0, 0.01, 0.3, 0.1);
        let lin = quadrature_expected_reward(&g, 1.0, 1.0).unwrap();
        assert!((lin - (1.0 - (1.0 - (-1.0f64).exp()))).abs() < 1e-10);
        assert!((lin - 0.36788).abs() < 1e-5);

        let mut c = GameConfig::linear(4.0, 5.0, 0.3, 0.1);
        c.reward = RewardModel::polynomial(2, 1.0);
        let quad = validate_config(c).unwrap();
        let v = quadrature_expected_reward(&quad, 1.0, 1.0).unwrap();
        let (t, l) = (1.0f64, 1.0f64);
        let closed = t * t - 2.0 * t / l + 2.0 / (l * l) - 2.0 / (l * l) * (-l * t).exp();
        assert!((v - closed).abs() < 1e-10);
        assert!((v - 0.26424).abs() < 1e-5);

        let mut c = GameConfig::linear(4.0, 5.0, 0.3, 0.1);
        c.reward = RewardModel::custom("zero", |_| 0.0);
        let zero = validate_config(c).unwrap();
        assert_eq!(quadrature_expected_reward(&zero, 2.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn small_rate_series_is_continuous() {
        let g = game(4.0, 0.0, 0.3, 0.1);
        for &tau in &[0.01, 1.0, 4.0] {
            let below = payoff_point(&g, tau, SMALL_LAMBDA * (1.0 - 1e-9)).unwrap();
            let above = payoff_point(&g, tau, SMALL_LAMBDA).unwrap();
            assert!((below.u_a - above.u_a).abs() < 1e-11);
            assert!((below.u_d - above.u_d).abs() < 1e-11);
        }
    }

    #[test]
    fn out_of_domain() {
        let g = game(4.0, 0.01, 0.3, 0.1);
        assert!(expected_attacker_payoff(&g, 0.0, 1.0).is_err());
        assert!(expected_defender_payoff(&g, 1.0, 6.0).is_err());
    }
}
