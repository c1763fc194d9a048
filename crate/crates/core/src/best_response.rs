//! Marginal payoffs, best responses and reaction curves.
//!
//! In the linear/exponential game the attacker's payoff is strictly concave in
//! the rate and the defender's marginal has the sign of
//! `C_d * lambda - alpha * P(2, lambda * tau)`, which is decreasing in `tau`.
//! Both best responses are therefore found by an endpoint sign test followed by
//! bisection on the marginal. Other instantiations are not certified concave, so
//! they scan a grid for the global maximum and polish the winning cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::payoff::evaluate;
use crate::quadrature::{integrate, ABS_TOL};
use crate::special::gamma_p;

/// Bisection iteration cap.
pub const MAX_BISECTIONS: usize = 200;
/// Required stationarity residual at an interior best response.
pub const STATIONARITY_TOL: f64 = 1e-9;
/// Grid used by the non-concave fallback.
pub const FALLBACK_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Attacker,
    Defender,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    LowerBoundary,
    UpperBoundary,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    /// The responding player.
    pub player: Player,
    pub opponent_action: f64,
    pub kind: ResponseKind,
    pub action: f64,
    /// Marginal payoff at `action`: ~0 for interior responses, the boundary
    /// marginal otherwise.
    pub residual: f64,
}

/// `du_a / dlambda_a`.
pub fn attacker_marginal(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    attacker_marginal_unchecked(game, tau_d, lambda_a)
}

/// `du_d / dtau_d`.
pub fn defender_marginal(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    defender_marginal_unchecked(game, tau_d, lambda_a)
}

fn attacker_marginal_unchecked(game: &Game, tau: f64, lambda: f64) -> Result<f64> {
    let c_a = game.attack_cost();
    if let Some(alpha) = game.closed_form_scale() {
        if lambda == 0.0 {
            return Ok(alpha * tau / 2.0 - c_a / tau);
        }
        let x = lambda * tau;
        return Ok(alpha * gamma_p(2, x) / (lambda * lambda * tau) - c_a / tau);
    }
    let reward = game.reward();
    let law = game.collocation();
    let q = integrate(
        |s| reward.value(tau, s) * law.pdf_dlambda_unchecked(s, lambda),
        0.0,
        tau,
        ABS_TOL,
    )?;
    Ok((q.value - c_a) / tau)
}

fn defender_marginal_unchecked(game: &Game, tau: f64, lambda: f64) -> Result<f64> {
    let c_d = game.migration_cost();
    if lambda == 0.0 {
        return Ok(c_d / (tau * tau));
    }
    if let Some(alpha) = game.closed_form_scale() {
        let x = lambda * tau;
        return Ok((c_d * lambda - alpha * gamma_p(2, x)) / (lambda * tau * tau));
    }
    let reward = game.reward();
    let law = game.collocation();
    let expected = integrate(
        |s| reward.value(tau, s) * law.pdf_unchecked(s, lambda),
        0.0,
        tau,
        ABS_TOL,
    )?;
    let slope = integrate(
        |s| reward.dvalue_dtau_d(tau, s) * law.pdf_unchecked(s, lambda),
        0.0,
        tau,
        ABS_TOL,
    )?;
    // Leibniz boundary term; zero whenever G(0) = 0.
    let boundary = reward.value(tau, tau) * law.pdf_unchecked(tau, lambda);
    Ok((expected.value + c_d) / (tau * tau) - (slope.value + boundary) / tau)
}

/// Attacker stationarity expression `e^{-x}((1 - C_a lambda^2) e^x - x - 1)`, `x = lambda * tau_d`
/// (with `alpha` scaling the leakage term). Zero at an interior best response.
pub fn attacker_stationarity(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    let alpha = game.closed_form_scale().ok_or(Error::WrongInstantiation)?;
    Ok(alpha * gamma_p(2, lambda_a * tau_d) - game.attack_cost() * lambda_a * lambda_a)
}

/// Defender stationarity expression `e^{-x}((C_d lambda - 1) e^x + x + 1)`. Zero at an
/// interior best response.
pub fn defender_stationarity(game: &Game, tau_d: f64, lambda_a: f64) -> Result<f64> {
    let alpha = game.closed_form_scale().ok_or(Error::WrongInstantiation)?;
    Ok(game.migration_cost() * lambda_a - alpha * gamma_p(2, lambda_a * tau_d))
}

/// Best attack rate against a migration time `tau_d`.
pub fn attacker_best_response(game: &Game, tau_d: f64) -> Result<BestResponse> {
    game.check_tau_d(tau_d)?;
    let (lo, hi) = game.attacker_interval();
    let marginal = |l: f64| attacker_marginal_unchecked(game, tau_d, l);
    let payoff = |l: f64| evaluate(game, tau_d, l).map(|p| p.u_a);
    let (kind, action, residual) = if game.closed_form_scale().is_some() {
        respond_concave(lo, hi, &marginal)?
    } else {
        respond_by_scan(lo, hi, &marginal, &payoff)?
    };
    Ok(BestResponse {
        player: Player::Attacker,
        opponent_action: tau_d,
        kind,
        action,
        residual,
    })
}

/// Best migration time against an attack rate `lambda_a`.
pub fn defender_best_response(game: &Game, lambda_a: f64) -> Result<BestResponse> {
    game.check_lambda(lambda_a)?;
    let (lo, hi) = game.defender_interval();
    let marginal = |t: f64| defender_marginal_unchecked(game, t, lambda_a);
    let payoff = |t: f64| evaluate(game, t, lambda_a).map(|p| p.u_d);
    let (kind, action, residual) = if lambda_a == 0.0 {
        // Against a backed-off attacker u_d = -C_d / tau_d, maximized at T.
        (ResponseKind::UpperBoundary, hi, marginal(hi)?)
    } else if game.closed_form_scale().is_some() {
        respond_concave(lo, hi, &marginal)?
    } else {
        respond_by_scan(lo, hi, &marginal, &payoff)?
    };
    Ok(BestResponse {
        player: Player::Defender,
        opponent_action: lambda_a,
        kind,
        action,
        residual,
    })
}

/// Best response of `player` to `opponent_action`.
pub fn best_response(game: &Game, player: Player, opponent_action: f64) -> Result<BestResponse> {
    match player {
        Player::Attacker => attacker_best_response(game, opponent_action),
        Player::Defender => defender_best_response(game, opponent_action),
    }
}

type Classified = (ResponseKind, f64, f64);

/// Three-case rule for a payoff whose marginal changes sign at most once, from + to -.
fn respond_concave<M>(lo: f64, hi: f64, marginal: &M) -> Result<Classified>
where
    M: Fn(f64) -> Result<f64>,
{
    let m_hi = marginal(hi)?;
    if m_hi >= 0.0 {
        return Ok((ResponseKind::UpperBoundary, hi, m_hi));
    }
    let m_lo = marginal(lo)?;
    if m_lo <= 0.0 {
        return Ok((ResponseKind::LowerBoundary, lo, m_lo));
    }
    let (root, residual) = bisect_decreasing(lo, hi, marginal)?;
    Ok((ResponseKind::Interior, root, residual))
}

/// Root of a function that is positive at `lo` and negative at `hi`.
fn bisect_decreasing<M>(mut lo: f64, mut hi: f64, f: &M) -> Result<(f64, f64)>
where
    M: Fn(f64) -> Result<f64>,
{
    let mut best = (lo, f64::INFINITY);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.abs() < best.1.abs() {
            best = (mid, v);
        }
        if v == 0.0 || mid <= lo || mid >= hi {
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Global grid argmax, then a local polish of the winning cell. Ties go to the
/// smaller action.
fn respond_by_scan<M, P>(lo: f64, hi: f64, marginal: &M, payoff: &P) -> Result<Classified>
where
    M: Fn(f64) -> Result<f64>,
    P: Fn(f64) -> Result<f64>,
{
    let n = FALLBACK_GRID;
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let v = payoff(x)?;
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    if best_i == 0 {
        let m = marginal(lo)?;
        if m <= 0.0 {
            return Ok((ResponseKind::LowerBoundary, lo, m));
        }
    }
    if best_i == n - 1 {
        let m = marginal(hi)?;
        if m >= 0.0 {
            return Ok((ResponseKind::UpperBoundary, hi, m));
        }
    }
    let a = xs[best_i.saturating_sub(1)];
    let b = xs[(best_i + 1).min(n - 1)];
    let (m_a, m_b) = (marginal(a)?, marginal(b)?);
    let x = if m_a > 0.0 && m_b < 0.0 {
        bisect_decreasing(a, b, marginal)?.0
    } else {
        golden_section_max(a, b, payoff)?
    };
    // Keep the polished point only if it does not lose to the grid.
    let x = if payoff(x)? >= best_v { x } else { xs[best_i] };
    let residual = marginal(x)?;
    let kind = if x <= lo {
        ResponseKind::LowerBoundary
    } else if x >= hi {
        ResponseKind::UpperBoundary
    } else {
        ResponseKind::Interior
    };
    Ok((kind, x, residual))
}

fn golden_section_max<P>(mut a: f64, mut b: f64, f: &P) -> Result<f64>
where
    P: Fn(f64) -> Result<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..MAX_BISECTIONS {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// A maximal run of consecutive samples with the same response kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: ResponseKind,
    /// Index of the first sample in the run.
    pub start: usize,
    /// Index of the last sample in the run (inclusive).
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionCurve {
    /// The responding player.
    pub player: Player,
    pub points: Vec<BestResponse>,
    pub segments: Vec<Segment>,
}

/// Samples the opponent's interval uniformly at `n_points` and best-responds to each.
pub fn reaction_curve(game: &Game, player: Player, n_points: usize) -> Result<ReactionCurve> {
    if n_points < 2 {
        return Err(Error::OutOfDomain {
            what: "n_points",
            value: n_points as f64,
            domain: "[2, inf)".into(),
        });
    }
    let (lo, hi) = match player {
        Player::Attacker => game.defender_interval(),
        Player::Defender => game.attacker_interval(),
    };
    let points = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let x = if i == n_points - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n_points - 1) as f64
            };
            best_response(game, player, x)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut segments: Vec<Segment> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match segments.last_mut() {
            Some(s) if s.kind == p.kind => s.end = i,
            _ => segments.push(Segment {
                kind: p.kind,
                start: i,
                end: i,
            }),
        }
    }
    Ok(ReactionCurve {
        player,
        points,
        segments,
    })
}
