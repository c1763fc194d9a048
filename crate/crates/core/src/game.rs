//! Game instance: action intervals, costs, horizon, the accumulated-leakage
//! reward `G` and the collocation-time distribution `f_a(.; lambda)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::quadrature::{integrate_semi_infinite, ABS_TOL};

/// Side of the validation grid for custom reward and distribution callables.
pub const VALIDATION_GRID: usize = 64;

const DEFAULT_FLOOR: f64 = 0.01;

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

/// Reward as a function of the collocation duration `t = tau_d - tau_a >= 0`.
pub type DurationFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// A function of `(tau_a, lambda_a)`.
pub type DensityFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// User-supplied stationary reward `G(t)`. Must be a deterministic pure function.
#[derive(Clone)]
pub struct CustomReward {
    pub name: String,
    pub g: DurationFn,
}

impl fmt::Debug for CustomReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomReward({})", self.name)
    }
}

/// Accumulated leakage reward `G(tau_d, tau_a)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    /// `alpha * (tau_d - tau_a)^exponent` for `tau_a <= tau_d`, zero otherwise.
    Polynomial { exponent: u32, alpha: f64 },
    #[serde(skip)]
    Custom(CustomReward),
}

impl RewardModel {
    pub fn linear() -> Self {
        RewardModel::Polynomial {
            exponent: 1,
            alpha: 1.0,
        }
    }

    pub fn polynomial(exponent: u32, alpha: f64) -> Self {
        RewardModel::Polynomial { exponent, alpha }
    }

    pub fn custom(name: impl Into<String>, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RewardModel::Custom(CustomReward {
            name: name.into(),
            g: Arc::new(g),
        })
    }

    /// `G(tau_d, tau_a)`; zero when collocation happens after migration.
    pub fn value(&self, tau_d: f64, tau_a: f64) -> f64 {
        if tau_a > tau_d {
            return 0.0;
        }
        let t = tau_d - tau_a;
        match self {
            RewardModel::Polynomial { exponent, alpha } => alpha * t.powi(*exponent as i32),
            RewardModel::Custom(c) => (c.g)(t),
        }
    }

    /// `dG/dtau_d` on the collocated branch `tau_a < tau_d`.
    pub fn dvalue_dtau_d(&self, tau_d: f64, tau_a: f64) -> f64 {
        if tau_a > tau_d {
            return 0.0;
        }
        let t = tau_d - tau_a;
        match self {
            RewardModel::Polynomial { exponent, alpha } => {
                let n = *exponent as i32;
                if n == 0 {
                    0.0
                } else {
                    alpha * n as f64 * t.powi(n - 1)
                }
            }
            RewardModel::Custom(c) => {
                let h = 1e-6 * t.max(1.0);
                if t >= h {
                    ((c.g)(t + h) - (c.g)(t - h)) / (2.0 * h)
                } else {
                    (-3.0 * (c.g)(t) + 4.0 * (c.g)(t + h) - (c.g)(t + 2.0 * h)) / (2.0 * h)
                }
            }
        }
    }

    /// `Some(alpha)` when `G` is linear in the collocation duration.
    pub fn linear_scale(&self) -> Option<f64> {
        match self {
            RewardModel::Polynomial { exponent: 1, alpha } => Some(*alpha),
            _ => None,
        }
    }

    /// True when `G` vanishes identically.
    pub fn is_zero(&self) -> bool {
        matches!(self, RewardModel::Polynomial { alpha, .. } if *alpha == 0.0)
    }
}

/// User-supplied collocation-time family. All three callables take `(tau_a, lambda_a)`
/// with `lambda_a > 0`; the back-off rate `lambda_a = 0` never reaches them.
#[derive(Clone)]
pub struct CustomCollocation {
    pub name: String,
    pub pdf: DensityFn,
    pub cdf: DensityFn,
    pub pdf_dlambda: DensityFn,
}

impl fmt::Debug for CustomCollocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomCollocation({})", self.name)
    }
}

/// Distribution of the collocation time `tau_a` given the attack rate.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollocationModel {
    /// `f(tau; lambda) = lambda * exp(-lambda * tau)`.
    Exponential,
    #[serde(skip)]
    Custom(CustomCollocation),
}

fn check_inputs(tau_a: f64, lambda_a: f64) -> Result<()> {
    if !(tau_a >= 0.0) {
        return Err(Error::NegativeInput {
            what: "tau_a",
            value: tau_a,
        });
    }
    if !(lambda_a >= 0.0) {
        return Err(Error::NegativeInput {
            what: "lambda_a",
            value: lambda_a,
        });
    }
    Ok(())
}

impl CollocationModel {
    pub fn is_exponential(&self) -> bool {
        matches!(self, CollocationModel::Exponential)
    }

    pub fn pdf(&self, tau_a: f64, lambda_a: f64) -> Result<f64> {
        check_inputs(tau_a, lambda_a)?;
        Ok(self.pdf_unchecked(tau_a, lambda_a))
    }

    pub fn cdf(&self, tau_a: f64, lambda_a: f64) -> Result<f64> {
        check_inputs(tau_a, lambda_a)?;
        Ok(self.cdf_unchecked(tau_a, lambda_a))
    }

    pub fn pdf_dlambda(&self, tau_a: f64, lambda_a: f64) -> Result<f64> {
        check_inputs(tau_a, lambda_a)?;
        Ok(self.pdf_dlambda_unchecked(tau_a, lambda_a))
    }

    pub(crate) fn pdf_unchecked(&self, tau: f64, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        match self {
            CollocationModel::Exponential => lambda * (-lambda * tau).exp(),
            CollocationModel::Custom(c) => (c.pdf)(tau, lambda),
        }
    }

    pub(crate) fn cdf_unchecked(&self, tau: f64, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        match self {
            CollocationModel::Exponential => -(-lambda * tau).exp_m1(),
            CollocationModel::Custom(c) => (c.cdf)(tau, lambda),
        }
    }

    pub(crate) fn pdf_dlambda_unchecked(&self, tau: f64, lambda: f64) -> f64 {
        match self {
            CollocationModel::Exponential => (1.0 - lambda * tau) * (-lambda * tau).exp(),
            // The degenerate law at lambda = 0 has no density to differentiate;
            // use the right limit.
            CollocationModel::Custom(c) if lambda == 0.0 => (c.pdf_dlambda)(tau, f64::MIN_POSITIVE),
            CollocationModel::Custom(c) => (c.pdf_dlambda)(tau, lambda),
        }
    }
}

/// Raw, unvalidated game description. Field names on the wire follow the
/// usual symbols: `T`, `C_a`, `C_d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// Credential-reset horizon `T`.
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_floor")]
    pub tau_min: f64,
    #[serde(default = "default_floor")]
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Attacker's cost per launch, `C_a`.
    #[serde(rename = "C_a")]
    pub attack_cost: f64,
    /// Defender's cost per migration, `C_d`.
    #[serde(rename = "C_d")]
    pub migration_cost: f64,
    pub reward: RewardModel,
    pub collocation: CollocationModel,
}

impl GameConfig {
    /// Linear reward, exponential collocation time, default lower bounds.
    pub fn linear(horizon: f64, lambda_max: f64, migration_cost: f64, attack_cost: f64) -> Self {
        GameConfig {
            horizon,
            tau_min: DEFAULT_FLOOR,
            lambda_min: DEFAULT_FLOOR,
            lambda_max,
            attack_cost,
            migration_cost,
            reward: RewardModel::linear(),
            collocation: CollocationModel::Exponential,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A configuration that passed [`validate_config`]. Immutable.
#[derive(Clone, Debug)]
pub struct Game {
    config: GameConfig,
}

/// Checks every invariant of `config` and reports all violations at once.
pub fn validate_config(config: GameConfig) -> Result<Game> {
    let mut violations = Vec::new();
    let c = &config;
    let finite = [
        c.horizon,
        c.tau_min,
        c.lambda_min,
        c.lambda_max,
        c.attack_cost,
        c.migration_cost,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite {
        violations.push(Violation::InvalidInterval("all parameters must be finite".into()));
        return Err(Error::InvalidConfig(violations));
    }
    if !(c.tau_min > 0.0 && c.tau_min <= c.horizon) {
        violations.push(Violation::InvalidInterval(format!(
            "need 0 < tau_min <= T, got tau_min = {}, T = {}",
            c.tau_min, c.horizon
        )));
    }
    if !(c.lambda_min >= 0.0 && c.lambda_min < c.lambda_max) {
        violations.push(Violation::InvalidInterval(format!(
            "need 0 <= lambda_min < lambda_max, got [{}, {}]",
            c.lambda_min, c.lambda_max
        )));
    }
    if c.attack_cost < 0.0 {
        violations.push(Violation::NegativeCost(format!("C_a = {}", c.attack_cost)));
    }
    if c.migration_cost < 0.0 {
        violations.push(Violation::NegativeCost(format!("C_d = {}", c.migration_cost)));
    }
    // The grid checks below need sane intervals.
    if violations.iter().any(|v| matches!(v, Violation::InvalidInterval(_))) {
        return Err(Error::InvalidConfig(violations));
    }
    if let Some(v) = check_reward(&c.reward, c.horizon) {
        violations.push(v);
    }
    if let Some(v) = check_collocation(&c.collocation, c.horizon, c.lambda_min, c.lambda_max) {
        violations.push(v);
    }
    if violations.is_empty() {
        Ok(Game { config })
    } else {
        Err(Error::InvalidConfig(violations))
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn check_reward(reward: &RewardModel, horizon: f64) -> Option<Violation> {
    if let RewardModel::Polynomial { exponent, alpha } = reward {
        if *exponent == 0 {
            return Some(Violation::NonMonotoneReward(
                "exponent must be a positive integer".into(),
            ));
        }
        if !(alpha.is_finite() && *alpha > 0.0) {
            return Some(Violation::NonMonotoneReward(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
    }
    const SLACK: f64 = 1e-12;
    let taus: Vec<f64> = grid(0.0, horizon, VALIDATION_GRID).collect();
    for &tau_a in &taus {
        let mut prev = f64::NEG_INFINITY;
        for &tau_d in &taus {
            let g = reward.value(tau_d, tau_a);
            if !g.is_finite() || g < 0.0 {
                return Some(Violation::NonMonotoneReward(format!(
                    "G({tau_d}, {tau_a}) = {g} is not a finite non-negative value"
                )));
            }
            if g < prev - SLACK * prev.abs().max(1.0) {
                return Some(Violation::NonMonotoneReward(format!(
                    "G decreases in tau_d at ({tau_d}, {tau_a})"
                )));
            }
            prev = g;
        }
    }
    None
}

fn check_collocation(model: &CollocationModel, horizon: f64, lambda_min: f64, lambda_max: f64) -> Option<Violation> {
    const MASS_TOL: f64 = 1e-6;
    let lo = if lambda_min > 0.0 {
        lambda_min
    } else {
        lambda_max / VALIDATION_GRID as f64
    };
    let lambdas: Vec<f64> = grid(lo, lambda_max, VALIDATION_GRID).collect();
    // Mass of the density on a subsample of rates.
    for &lam in lambdas.iter().step_by(VALIDATION_GRID / 8) {
        match integrate_semi_infinite(|t| model.pdf_unchecked(t, lam), 0.0, ABS_TOL) {
            Ok(q) if (q.value - 1.0).abs() <= MASS_TOL => {}
            Ok(q) => {
                return Some(Violation::BadDistribution(format!(
                    "pdf mass at lambda = {lam} is {}",
                    q.value
                )))
            }
            Err(e) => return Some(Violation::BadDistribution(format!("pdf mass at lambda = {lam}: {e}"))),
        }
    }
    // CDF dominance: faster attacks collocate earlier.
    for t in grid(0.0, horizon, VALIDATION_GRID) {
        let mut prev = 0.0;
        for &lam in &lambdas {
            let f = model.cdf_unchecked(t, lam);
            if !(0.0..=1.0 + 1e-12).contains(&f) {
                return Some(Violation::BadDistribution(format!(
                    "cdf({t}; {lam}) = {f} is not a probability"
                )));
            }
            if f < prev - 1e-12 {
                return Some(Violation::BadDistribution(format!(
                    "cdf is not non-decreasing in lambda at t = {t}, lambda = {lam}"
                )));
            }
            prev = f;
        }
    }
    None
}

impl Game {
    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    pub fn tau_min(&self) -> f64 {
        self.config.tau_min
    }

    pub fn lambda_min(&self) -> f64 {
        self.config.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.config.lambda_max
    }

    pub fn attack_cost(&self) -> f64 {
        self.config.attack_cost
    }

    pub fn migration_cost(&self) -> f64 {
        self.config.migration_cost
    }

    pub fn reward(&self) -> &RewardModel {
        &self.config.reward
    }

    pub fn collocation(&self) -> &CollocationModel {
        &self.config.collocation
    }

    /// `A_d = [tau_min, T]`.
    pub fn defender_interval(&self) -> (f64, f64) {
        (self.config.tau_min, self.config.horizon)
    }

    /// `A_a = [lambda_min, lambda_max]`.
    pub fn attacker_interval(&self) -> (f64, f64) {
        (self.config.lambda_min, self.config.lambda_max)
    }

    /// `Some(alpha)` for the linear-reward / exponential-collocation instantiation,
    /// where every payoff quantity has a closed form.
    pub fn closed_form_scale(&self) -> Option<f64> {
        match self.config.collocation {
            CollocationModel::Exponential => self.config.reward.linear_scale(),
            CollocationModel::Custom(_) => None,
        }
    }

    /// Same game with different costs.
    pub fn with_costs(&self, migration_cost: f64, attack_cost: f64) -> Result<Game> {
        let mut config = self.config.clone();
        config.migration_cost = migration_cost;
        config.attack_cost = attack_cost;
        validate_config(config)
    }

    pub(crate) fn check_tau_d(&self, tau_d: f64) -> Result<()> {
        let (lo, hi) = self.defender_interval();
        let slack = 1e-12 * hi;
        if tau_d >= lo - slack && tau_d <= hi + slack {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                what: "tau_d",
                value: tau_d,
                domain: format!("[{lo}, {hi}]"),
            })
        }
    }

    pub(crate) fn check_lambda(&self, lambda_a: f64) -> Result<()> {
        let (lo, hi) = self.attacker_interval();
        let slack = 1e-12 * hi;
        if lambda_a >= lo - slack && lambda_a <= hi + slack {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                what: "lambda_a",
                value: lambda_a,
                domain: format!("[{lo}, {hi}]"),
            })
        }
    }
}

impl TryFrom<GameConfig> for Game {
    type Error = Error;

    fn try_from(config: GameConfig) -> Result<Self> {
        validate_config(config)
    }
}
