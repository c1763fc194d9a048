//! Pure-strategy equilibria as reaction-curve intersections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{theorem2_certificate, ExistenceCertificate};
use crate::best_response::{attacker_best_response, defender_best_response, BestResponse, ResponseKind};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::payoff::evaluate;

/// Two candidates closer than this in both coordinates are the same point.
pub const DEDUP_TOL: f64 = 1e-6;
/// Step size at which best-response iteration is considered converged.
pub const ITERATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Rates sampled when scanning the fixed-point residual.
    pub n_grid: usize,
    /// Relative deviation-gain tolerance, scaled by `max(1, |u|)`.
    pub epsilon: f64,
    pub n_deviations: usize,
    pub certificate_grid: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            n_grid: 257,
            epsilon: 1e-6,
            n_deviations: 2048,
            certificate_grid: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    CurveIntersection,
    BrIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub tau_d_star: f64,
    pub lambda_a_star: f64,
    pub kind_d: ResponseKind,
    pub kind_a: ResponseKind,
    pub u_d: f64,
    pub u_a: f64,
    /// Largest unilateral deviation gain found for either player.
    pub epsilon: f64,
    /// Marginal payoffs `(du_d/dtau_d, du_a/dlambda_a)` at the point.
    pub residuals: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub equilibria: Vec<Equilibrium>,
    pub certificate: ExistenceCertificate,
    pub method: SolveMethod,
}

impl EquilibriumReport {
    /// Turns an empty report into `NoEquilibriumFound`.
    pub fn require_nonempty(self) -> Result<Self> {
        if self.equilibria.is_empty() {
            Err(Error::NoEquilibriumFound)
        } else {
            Ok(self)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeCheck {
    pub is_ne: bool,
    pub max_gain_d: f64,
    pub max_gain_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub trajectory: Vec<(f64, f64)>,
    pub fixed_point: (f64, f64),
    pub iterations: usize,
    pub check: NeCheck,
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let n = n.max(2);
    (0..n).map(move |i| {
        if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// Largest gain over `n_deviations` uniform deviations per player, both
/// endpoints and each player's own best response.
fn deviation_gains(game: &Game, tau_d: f64, lambda_a: f64, n_deviations: usize) -> Result<(f64, f64)> {
    let here = evaluate(game, tau_d, lambda_a)?;
    let (t_lo, t_hi) = game.defender_interval();
    let (l_lo, l_hi) = game.attacker_interval();

    let mut taus: Vec<f64> = grid(t_lo, t_hi, n_deviations).collect();
    if let Ok(br) = defender_best_response(game, lambda_a) {
        taus.push(br.action);
    }
    let mut lambdas: Vec<f64> = grid(l_lo, l_hi, n_deviations).collect();
    if let Ok(br) = attacker_best_response(game, tau_d) {
        lambdas.push(br.action);
    }

    let gain_d = taus
        .par_iter()
        .map(|&t| evaluate(game, t, lambda_a).map(|p| p.u_d - here.u_d))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    let gain_a = lambdas
        .par_iter()
        .map(|&l| evaluate(game, tau_d, l).map(|p| p.u_a - here.u_a))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok((gain_d, gain_a))
}

/// Deviation scan: the point is an `epsilon`-NE iff neither player gains more
/// than `epsilon` by moving alone.
pub fn verify_epsilon_ne(game: &Game, tau_d: f64, lambda_a: f64, epsilon: f64, n_deviations: usize) -> Result<NeCheck> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    let (max_gain_d, max_gain_a) = deviation_gains(game, tau_d, lambda_a, n_deviations)?;
    Ok(NeCheck {
        is_ne: max_gain_d <= epsilon && max_gain_a <= epsilon,
        max_gain_d,
        max_gain_a,
    })
}

/// Same scan with the tolerance scaled per player by `max(1, |u|)`.
fn verify_scaled(game: &Game, tau_d: f64, lambda_a: f64, epsilon: f64, n_deviations: usize) -> Result<NeCheck> {
    let p = evaluate(game, tau_d, lambda_a)?;
    let (max_gain_d, max_gain_a) = deviation_gains(game, tau_d, lambda_a, n_deviations)?;
    Ok(NeCheck {
        is_ne: max_gain_d <= epsilon * p.u_d.abs().max(1.0) && max_gain_a <= epsilon * p.u_a.abs().max(1.0),
        max_gain_d,
        max_gain_a,
    })
}

struct Composition {
    defender: BestResponse,
    attacker: BestResponse,
}

impl Composition {
    fn at(game: &Game, lambda_a: f64) -> Result<Self> {
        let defender = defender_best_response(game, lambda_a)?;
        let attacker = attacker_best_response(game, defender.action)?;
        Ok(Composition { defender, attacker })
    }

    fn residual(&self) -> f64 {
        self.attacker.action - self.defender.opponent_action
    }
}

/// Bisects `BR_a(BR_d(lambda)) - lambda` between rates where it changes sign.
fn refine(game: &Game, mut lo: f64, mut hi: f64, r_lo: f64) -> Result<f64> {
    let lo_positive = r_lo > 0.0;
    for _ in 0..crate::best_response::MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = Composition::at(game, mid)?.residual();
        if r == 0.0 {
            return Ok(mid);
        }
        if (r > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn build(game: &Game, tau_d: f64, lambda_a: f64, options: &SolverOptions) -> Result<Option<Equilibrium>> {
    let check = verify_scaled(game, tau_d, lambda_a, options.epsilon, options.n_deviations)?;
    if !check.is_ne {
        return Ok(None);
    }
    let d = defender_best_response(game, lambda_a)?;
    let a = attacker_best_response(game, tau_d)?;
    let p = evaluate(game, tau_d, lambda_a)?;
    let m_d = crate::best_response::defender_marginal(game, tau_d, lambda_a)?;
    let m_a = crate::best_response::attacker_marginal(game, tau_d, lambda_a)?;
    Ok(Some(Equilibrium {
        tau_d_star: tau_d,
        lambda_a_star: lambda_a,
        kind_d: d.kind,
        kind_a: a.kind,
        u_d: p.u_d,
        u_a: p.u_a,
        epsilon: check.max_gain_d.max(check.max_gain_a),
        residuals: (m_d, m_a),
    }))
}

/// Scans the fixed-point residual over the attacker's interval, bisects every
/// sign change, adds exact zeros and the four corners, and keeps the candidates
/// that survive the deviation scan.
pub fn find_equilibria(game: &Game, options: &SolverOptions) -> Result<EquilibriumReport> {
    let (l_lo, l_hi) = game.attacker_interval();
    let (t_lo, t_hi) = game.defender_interval();
    let lambdas: Vec<f64> = grid(l_lo, l_hi, options.n_grid).collect();
    let comps = lambdas
        .par_iter()
        .map(|&l| Composition::at(game, l))
        .collect::<Result<Vec<_>>>()?;

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for (i, c) in comps.iter().enumerate() {
        let r = c.residual();
        if r == 0.0 {
            candidates.push((c.defender.action, lambdas[i]));
        }
        if let Some(next) = comps.get(i + 1) {
            let r_next = next.residual();
            if r * r_next < 0.0 {
                let root = refine(game, lambdas[i], lambdas[i + 1], r)?;
                let c = Composition::at(game, root)?;
                candidates.push((c.defender.action, root));
            }
        }
    }
    for &t in &[t_lo, t_hi] {
        for &l in &[l_lo, l_hi] {
            candidates.push((t, l));
        }
    }

    let mut unique: Vec<(f64, f64)> = Vec::new();
    for c in candidates {
        if !unique
            .iter()
            .any(|u| (u.0 - c.0).abs() <= DEDUP_TOL && (u.1 - c.1).abs() <= DEDUP_TOL)
        {
            unique.push(c);
        }
    }
    let verified = unique
        .par_iter()
        .map(|&(t, l)| build(game, t, l, options))
        .collect::<Result<Vec<_>>>()?;
    let mut equilibria: Vec<Equilibrium> = Vec::new();
    for e in verified.into_iter().flatten() {
        if !equilibria.iter().any(|q| {
            (q.tau_d_star - e.tau_d_star).abs() <= DEDUP_TOL && (q.lambda_a_star - e.lambda_a_star).abs() <= DEDUP_TOL
        }) {
            equilibria.push(e);
        }
    }
    equilibria.sort_by(|a, b| a.lambda_a_star.total_cmp(&b.lambda_a_star));

    let g = options.certificate_grid;
    Ok(EquilibriumReport {
        equilibria,
        certificate: theorem2_certificate(game, (g, g)),
        method: SolveMethod::CurveIntersection,
    })
}

/// Damped simultaneous best-response iteration from `start`.
pub fn br_iteration(game: &Game, start: (f64, f64), damping: f64, max_iters: usize) -> Result<IterationReport> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::OutOfDomain {
            what: "damping",
            value: damping,
            domain: "(0, 1]".into(),
        });
    }
    game.check_tau_d(start.0)?;
    game.check_lambda(start.1)?;
    let mut point = start;
    let mut trajectory = vec![point];
    let mut step = f64::INFINITY;
    for k in 1..=max_iters {
        let t = defender_best_response(game, point.1)?.action;
        let l = attacker_best_response(game, point.0)?.action;
        let next = (
            (1.0 - damping) * point.0 + damping * t,
            (1.0 - damping) * point.1 + damping * l,
        );
        step = (next.0 - point.0).abs().max((next.1 - point.1).abs());
        point = next;
        trajectory.push(point);
        if step < ITERATION_TOL {
            let options = SolverOptions::default();
            let check = verify_scaled(game, point.0, point.1, options.epsilon, options.n_deviations)?;
            if !check.is_ne {
                return Err(Error::UnverifiedFixedPoint(point.0, point.1));
            }
            return Ok(IterationReport {
                trajectory,
                fixed_point: point,
                iterations: k,
                check,
            });
        }
    }
    Err(Error::MaxItersExceeded {
        iterations: max_iters,
        last_step: step,
        last_point: point,
    })
}
