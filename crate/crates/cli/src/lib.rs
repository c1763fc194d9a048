//! `mtd`: command-line front end. One verb per invocation; results go to
//! `--out` (written atomically) or standard output.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use mtd_core::analysis::{
    attacker_cost_threshold, backoff_equilibrium_check, corollary_check, defender_cost_threshold, existence_margin,
    general_monotonicity_thresholds, theorem2_certificate, BackoffCheck, CorollaryCheck, ExistenceCertificate,
    ThresholdReport, DEFAULT_GRID,
};
use mtd_core::best_response::{reaction_curve, Player};
use mtd_core::monte_carlo::{simulate_strategy_pair, strategy_table, StrategyTable, TableMode};
use mtd_core::nash::{find_equilibria, SolverOptions};
use mtd_core::payoff::payoff_point;
use mtd_core::{validate_config, Error, Game, GameConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

const CURVE_POINTS: usize = 201;
const DEFAULT_SAMPLES: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    /// Expected payoffs at a point (JSON) or along one axis (CSV).
    Payoff,
    /// Both reaction curves (CSV).
    BrCurve,
    /// Existence margin over the action space (CSV).
    Region,
    /// Cost thresholds, corollaries and the existence certificate (JSON).
    Thresholds,
    /// Pure Nash equilibria (JSON).
    Solve,
    /// Monte-Carlo payoff estimate at a point (JSON).
    Simulate,
    /// Strategy comparison table (CSV).
    Table,
}

#[derive(Debug, Parser)]
#[command(
    name = "mtd",
    version,
    about = "Timing game between VM migration and collocation attacks"
)]
pub struct Cli {
    pub verb: Verb,
    /// Game configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Migration time tau_d.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Attack rate lambda_a.
    #[arg(long = "lambda")]
    pub lambda: Option<f64>,
    /// Grid resolution, `N` or `NxM` (tau_d by lambda_a).
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Monte-Carlo sample count; for `table` it switches to simulated cells.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Exit with code 2 when no equilibrium is found.
    #[arg(long)]
    pub require_ne: bool,
    /// CSV of `C_d,C_a` rows for `table`.
    #[arg(long)]
    pub rows: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parse = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad grid size {p:?}: {e}"))
            .and_then(|n| {
                if n >= 2 {
                    Ok(n)
                } else {
                    Err("grid sizes must be at least 2".into())
                }
            })
    };
    match s.split_once(['x', 'X']) {
        Some((n, m)) => Ok((parse(n)?, parse(m)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

/// Everything the `thresholds` verb reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsReport {
    pub tau_d: f64,
    pub lambda_a: f64,
    /// Absent when `lambda_min = 0`.
    pub attacker: Option<ThresholdReport>,
    pub defender: ThresholdReport,
    pub general_attacker: ThresholdReport,
    pub general_defender: ThresholdReport,
    pub corollaries: CorollaryCheck,
    pub certificate: ExistenceCertificate,
    /// Present only when `lambda_min = 0`.
    pub backoff: Option<BackoffCheck>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct CostRow {
    #[serde(rename = "C_d")]
    c_d: f64,
    #[serde(rename = "C_a")]
    c_a: f64,
}

struct Failure {
    code: i32,
    error: anyhow::Error,
}

fn config_error(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_NUMERIC };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_NUMERIC,
            error,
        }
    }
}

/// Parses `argv` (including the program name), runs the verb and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(config_error(anyhow!(e).context("cannot start worker pool"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("mtd: {:#}", f.error);
            f.code
        }
    }
}

fn load_game(path: &Path) -> Result<Game, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(config_error)?;
    let config = GameConfig::from_json(&text)?;
    Ok(validate_config(config)?)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let game = load_game(&cli.config)?;
    let body = match cli.verb {
        Verb::Payoff => payoff(cli, &game)?,
        Verb::BrCurve => br_curve(cli, &game)?,
        Verb::Region => region(cli, &game)?,
        Verb::Thresholds => json(&thresholds(cli, &game)?)?,
        Verb::Solve => {
            let report = find_equilibria(&game, &SolverOptions::default())?;
            let report = if cli.require_ne {
                report.require_nonempty()?
            } else {
                report
            };
            json(&report)?
        }
        Verb::Simulate => {
            let (tau, lambda) = point(cli)?;
            let samples = cli.samples.unwrap_or(DEFAULT_SAMPLES);
            json(&simulate_strategy_pair(&game, tau, lambda, samples, cli.seed)?)?
        }
        Verb::Table => table(cli, &game)?,
    };
    emit(cli.out.as_deref(), body.as_bytes())
}

fn point(cli: &Cli) -> Result<(f64, f64), Failure> {
    match (cli.tau, cli.lambda) {
        (Some(t), Some(l)) => Ok((t, l)),
        _ => Err(config_error(anyhow!("this verb needs both --tau and --lambda"))),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).context("serializing output")?;
    s.push('\n');
    Ok(s)
}

fn csv_text<R, F>(header: &[&str], rows: R) -> Result<String, Failure>
where
    R: IntoIterator<Item = Vec<F>>,
    F: Display,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).context("writing CSV")?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .context("writing CSV")?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("flushing CSV: {e}"))?;
    Ok(String::from_utf8(bytes).context("CSV is not UTF-8")?)
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn payoff(cli: &Cli, game: &Game) -> Result<String, Failure> {
    let n = cli.grid.map(|g| g.0).unwrap_or(CURVE_POINTS);
    match (cli.tau, cli.lambda) {
        (Some(t), Some(l)) => json(&payoff_point(game, t, l)?),
        (Some(t), None) => {
            let (lo, hi) = game.attacker_interval();
            let rows = axis(lo, hi, n)
                .into_iter()
                .map(|l| payoff_point(game, t, l).map(|p| vec![p.tau_d, p.lambda_a, p.u_a, p.u_d]))
                .collect::<Result<Vec<_>, _>>()?;
            csv_text(&["tau_d", "lambda_a", "u_a", "u_d"], rows)
        }
        (None, Some(l)) => {
            let (lo, hi) = game.defender_interval();
            let rows = axis(lo, hi, n)
                .into_iter()
                .map(|t| payoff_point(game, t, l).map(|p| vec![p.tau_d, p.lambda_a, p.u_a, p.u_d]))
                .collect::<Result<Vec<_>, _>>()?;
            csv_text(&["tau_d", "lambda_a", "u_a", "u_d"], rows)
        }
        (None, None) => Err(config_error(anyhow!("payoff needs --tau, --lambda or both"))),
    }
}

fn br_curve(cli: &Cli, game: &Game) -> Result<String, Failure> {
    let (n_tau, n_lambda) = cli.grid.unwrap_or((CURVE_POINTS, CURVE_POINTS));
    let attacker = reaction_curve(game, Player::Attacker, n_tau)?;
    let defender = reaction_curve(game, Player::Defender, n_lambda)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["player", "opponent_action", "kind", "action", "residual"])
        .context("writing CSV")?;
    for br in attacker.points.iter().chain(defender.points.iter()) {
        let player = match br.player {
            Player::Attacker => "attacker",
            Player::Defender => "defender",
        };
        let kind = serde_json::to_value(br.kind).context("serializing kind")?;
        w.write_record([
            player.to_string(),
            br.opponent_action.to_string(),
            kind.as_str().unwrap_or_default().to_string(),
            br.action.to_string(),
            br.residual.to_string(),
        ])
        .context("writing CSV")?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("flushing CSV: {e}"))?;
    Ok(String::from_utf8(bytes).context("CSV is not UTF-8")?)
}

fn region(cli: &Cli, game: &Game) -> Result<String, Failure> {
    let (n_tau, n_lambda) = cli.grid.unwrap_or((DEFAULT_GRID, DEFAULT_GRID));
    let (t_lo, t_hi) = game.defender_interval();
    let (l_lo, l_hi) = game.attacker_interval();
    let lambdas = axis(l_lo, l_hi, n_lambda);
    let rows = axis(t_lo, t_hi, n_tau)
        .into_iter()
        .flat_map(|t| lambdas.iter().map(move |&l| vec![t, l, existence_margin(game, t, l)]))
        .collect::<Vec<_>>();
    csv_text(&["tau_d", "lambda_a", "margin"], rows)
}

fn thresholds(cli: &Cli, game: &Game) -> Result<ThresholdsReport, Failure> {
    let tau = cli.tau.unwrap_or(game.horizon());
    let lambda = cli.lambda.unwrap_or(game.lambda_max());
    let attacker = match attacker_cost_threshold(game, tau) {
        Ok(r) => Some(r),
        Err(Error::DegenerateLambdaMin) => None,
        Err(e) => return Err(e.into()),
    };
    let (general_attacker, general_defender) = general_monotonicity_thresholds(game, tau, lambda)?;
    let backoff = match backoff_equilibrium_check(game) {
        Ok(b) => Some(b),
        Err(Error::RequiresZeroLambdaMin(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let (n_tau, n_lambda) = cli.grid.unwrap_or((DEFAULT_GRID, DEFAULT_GRID));
    Ok(ThresholdsReport {
        tau_d: tau,
        lambda_a: lambda,
        attacker,
        defender: defender_cost_threshold(game, lambda)?,
        general_attacker,
        general_defender,
        corollaries: corollary_check(game),
        certificate: theorem2_certificate(game, (n_tau, n_lambda)),
        backoff,
    })
}

fn read_rows(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read rows {}", path.display()))
        .map_err(config_error)?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<CostRow>() {
        let r = record
            .with_context(|| format!("bad row in {}", path.display()))
            .map_err(config_error)?;
        rows.push((r.c_d, r.c_a));
    }
    if rows.is_empty() {
        return Err(config_error(anyhow!("{} has no rows", path.display())));
    }
    Ok(rows)
}

fn table(cli: &Cli, game: &Game) -> Result<String, Failure> {
    let rows = match &cli.rows {
        Some(p) => read_rows(p)?,
        None => vec![(game.migration_cost(), game.attack_cost())],
    };
    let mode = match cli.samples {
        Some(samples) => TableMode::Simulated {
            samples,
            seed: cli.seed,
        },
        None => TableMode::Analytic,
    };
    let table: StrategyTable = strategy_table(game, &rows, mode)?;
    csv_text(&StrategyTable::HEADER, table.rows.iter().map(|r| r.values().to_vec()))
}

/// Writes through a temporary file in the target directory, then renames it.
fn emit(out: Option<&Path>, body: &[u8]) -> Result<(), Failure> {
    let Some(path) = out else {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(body).context("writing to standard output")?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let write = || -> anyhow::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(body)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path)?;
        Ok(())
    };
    write().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
