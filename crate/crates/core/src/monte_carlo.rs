//! Sampling of collocation times and empirical payoffs.
//!
//! Samples are drawn in fixed-size batches. Batch `k` uses a ChaCha8 generator
//! seeded with `seed` on stream `k`, so the result does not depend on how
//! batches are spread over threads. Batch statistics are merged in batch order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{CollocationModel, Game};
use crate::nash::{find_equilibria, SolverOptions};
use crate::payoff::{evaluate, realized_pair};

/// Samples per batch.
pub const BATCH: usize = 1 << 16;

/// Upper end of the bracket used to invert a custom CDF.
const INVERSION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_samples: u64,
    pub mean_u_a: f64,
    pub mean_u_d: f64,
    pub stderr_u_a: f64,
    pub stderr_u_d: f64,
    pub empirical_collocation_prob: f64,
    pub seed: u64,
}

/// `-ln(u) / lambda`; `+inf` when `lambda = 0`.
pub fn exponential_inverse_cdf(u: f64, lambda_a: f64) -> f64 {
    if lambda_a == 0.0 {
        return f64::INFINITY;
    }
    -u.ln() / lambda_a
}

/// One collocation time. `+inf` means the attacker never collocates.
pub fn sample_collocation_time<R: Rng + ?Sized>(model: &CollocationModel, lambda_a: f64, rng: &mut R) -> f64 {
    if lambda_a == 0.0 {
        return f64::INFINITY;
    }
    // In (0, 1], so the logarithm is finite.
    let u = 1.0 - rng.random::<f64>();
    match model {
        CollocationModel::Exponential => exponential_inverse_cdf(u, lambda_a),
        CollocationModel::Custom(_) => invert_cdf(model, lambda_a, 1.0 - u),
    }
}

fn invert_cdf(model: &CollocationModel, lambda_a: f64, p: f64) -> f64 {
    let cdf = |t: f64| model.cdf_unchecked(t, lambda_a);
    let mut hi = 1.0 / lambda_a;
    while cdf(hi) < p {
        hi *= 2.0;
        if hi > INVERSION_LIMIT {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..crate::best_response::MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * (other.n as f64 / n as f64),
            m2: self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64),
        }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BatchStats {
    a: Moments,
    d: Moments,
    collocated: u64,
}

fn run_batch(game: &Game, tau_d: f64, lambda_a: f64, seed: u64, batch: u64, size: usize) -> BatchStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    let mut stats = BatchStats::default();
    for _ in 0..size {
        let tau_a = sample_collocation_time(game.collocation(), lambda_a, &mut rng);
        if tau_a < tau_d {
            stats.collocated += 1;
        }
        let (u_a, u_d) = realized_pair(game, tau_d, tau_a, lambda_a);
        stats.a.push(u_a);
        stats.d.push(u_d);
    }
    stats
}

/// Mean realized payoffs over `n` sampled collocation times.
pub fn simulate_strategy_pair(game: &Game, tau_d: f64, lambda_a: f64, n: u64, seed: u64) -> Result<SimulationReport> {
    game.check_tau_d(tau_d)?;
    game.check_lambda(lambda_a)?;
    if n == 0 {
        return Err(Error::OutOfDomain {
            what: "n",
            value: 0.0,
            domain: "[1, inf)".into(),
        });
    }
    let batches = n.div_ceil(BATCH as u64);
    let parts: Vec<BatchStats> = (0..batches)
        .into_par_iter()
        .map(|k| {
            let size = if k + 1 == batches {
                n - k * BATCH as u64
            } else {
                BATCH as u64
            };
            run_batch(game, tau_d, lambda_a, seed, k, size as usize)
        })
        .collect();
    let total = parts.into_iter().fold(BatchStats::default(), |acc, b| BatchStats {
        a: acc.a.merge(b.a),
        d: acc.d.merge(b.d),
        collocated: acc.collocated + b.collocated,
    });
    Ok(SimulationReport {
        n_samples: n,
        mean_u_a: total.a.mean,
        mean_u_d: total.d.mean,
        stderr_u_a: total.a.stderr(),
        stderr_u_d: total.d.stderr(),
        empirical_collocation_prob: total.collocated as f64 / n as f64,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TableMode {
    Analytic,
    Simulated { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub u_d: f64,
    pub u_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub c_d: f64,
    pub c_a: f64,
    /// The equilibrium the other columns deviate from.
    pub ne_point: (f64, f64),
    pub ne: Cell,
    /// `(T, lambda*)`.
    pub no_defense: Cell,
    /// `(tau*, lambda_min)`.
    pub no_attack: Cell,
    /// `(tau*, lambda_max)`.
    pub aggressive_attack: Cell,
    /// `(T, lambda_max)`.
    pub worst_case: Cell,
}

impl StrategyRow {
    /// Values in `StrategyTable::HEADER` order.
    pub fn values(&self) -> [f64; 12] {
        [
            self.c_d,
            self.c_a,
            self.ne.u_d,
            self.ne.u_a,
            self.no_defense.u_d,
            self.no_defense.u_a,
            self.no_attack.u_d,
            self.no_attack.u_a,
            self.aggressive_attack.u_d,
            self.aggressive_attack.u_a,
            self.worst_case.u_d,
            self.worst_case.u_a,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub mode: TableMode,
    pub rows: Vec<StrategyRow>,
}

impl StrategyTable {
    pub const HEADER: [&'static str; 12] = [
        "C_d", "C_a", "ne_ud", "ne_ua", "nodef_ud", "nodef_ua", "noatk_ud", "noatk_ua", "aggr_ud", "aggr_ua",
        "worst_ud", "worst_ua",
    ];
}

fn cell(game: &Game, tau_d: f64, lambda_a: f64, mode: TableMode) -> Result<Cell> {
    match mode {
        TableMode::Analytic => {
            let p = evaluate(game, tau_d, lambda_a)?;
            Ok(Cell { u_d: p.u_d, u_a: p.u_a })
        }
        TableMode::Simulated { samples, seed } => {
            let r = simulate_strategy_pair(game, tau_d, lambda_a, samples, seed)?;
            Ok(Cell {
                u_d: r.mean_u_d,
                u_a: r.mean_u_a,
            })
        }
    }
}

fn table_row(game: &Game, c_d: f64, c_a: f64, mode: TableMode) -> Result<StrategyRow> {
    let g = game.with_costs(c_d, c_a)?;
    let report = find_equilibria(&g, &SolverOptions::default())?.require_nonempty()?;
    // Several equilibria: the one with the smallest attack rate.
    let ne = report.equilibria[0];
    let (tau, lambda) = (ne.tau_d_star, ne.lambda_a_star);
    let (horizon, lambda_min, lambda_max) = (g.horizon(), g.lambda_min(), g.lambda_max());
    Ok(StrategyRow {
        c_d,
        c_a,
        ne_point: (tau, lambda),
        ne: cell(&g, tau, lambda, mode)?,
        no_defense: cell(&g, horizon, lambda, mode)?,
        no_attack: cell(&g, tau, lambda_min, mode)?,
        aggressive_attack: cell(&g, tau, lambda_max, mode)?,
        worst_case: cell(&g, horizon, lambda_max, mode)?,
    })
}

/// One row per `(C_d, C_a)`; every column holds the opponent at its
/// equilibrium action or pins both actions.
pub fn strategy_table(game: &Game, cost_rows: &[(f64, f64)], mode: TableMode) -> Result<StrategyTable> {
    let rows = cost_rows
        .par_iter()
        .map(|&(c_d, c_a)| table_row(game, c_d, c_a, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategyTable { mode, rows })
}
