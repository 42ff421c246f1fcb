//! Episode execution, Monte-Carlo replication and rate fitting.
//!
//! Regret is accounted against the environment's exact functional values:
//! at step `t` the instantaneous regret is `max_i T(F^i(., X_t)) - T(F^a(., X_t))`
//! for the assigned arm `a`, and the step counts as a suboptimal assignment
//! iff `a` lies outside the argmax set.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::environments::Environment;
use crate::error::{LabError, Result};
use crate::policies::{Policy, PolicySpec};
use crate::rng::{episode_seed, stream, ENVIRONMENT_STREAM, POLICY_STREAM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub bin: Option<usize>,
    pub arm: usize,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub horizon: u64,
    pub regret: f64,
    pub suboptimal: u64,
    pub trajectory: Option<Vec<StepRecord>>,
}

/// Runs one episode of `n` steps. The environment consumes ChaCha stream 0 of
/// `seed`, the policy stream 1.
pub fn run_episode(
    env: &Environment,
    policy: &mut dyn Policy,
    n: u64,
    seed: u64,
    record_trajectory: bool,
) -> Result<EpisodeResult> {
    let mut env_rng = stream(seed, ENVIRONMENT_STREAM);
    let mut policy_rng = stream(seed, POLICY_STREAM);
    let mut x = Vec::with_capacity(env.dim());
    let mut outcomes = Vec::with_capacity(env.arm_count());
    let mut values = Vec::with_capacity(env.arm_count());
    let mut trajectory = record_trajectory.then(|| Vec::with_capacity(n as usize));
    let mut regret = 0.0;
    let mut suboptimal = 0;
    for t in 1..=n {
        env.sample_into(&mut env_rng, &mut x, &mut outcomes);
        let arm = policy.assign(&x, &mut policy_rng)?;
        if arm >= outcomes.len() {
            return Err(LabError::Domain(format!("policy returned arm {arm} for K={}", outcomes.len())));
        }
        let bin = if record_trajectory {
            policy.partition().map(|p| crate::partition::Partition::bin_index(p, &x)).transpose()?
        } else {
            None
        };
        policy.update(&x, arm, outcomes[arm])?;

        values.clear();
        for i in 0..env.arm_count() {
            values.push(env.true_functional(i, &x)?);
        }
        let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let step_regret = best - values[arm];
        regret += step_regret;
        if values[arm] < best {
            suboptimal += 1;
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push(StepRecord {
                t,
                bin,
                arm,
                regret: step_regret,
            });
        }
    }
    Ok(EpisodeResult {
        horizon: n,
        regret,
        suboptimal,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub n: u64,
    pub mean_regret: f64,
    /// `None` with a single replication.
    pub stderr_regret: Option<f64>,
    pub mean_subopt: f64,
    pub stderr_subopt: Option<f64>,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

pub const CSV_HEADER: &str = "n,mean_regret,stderr_regret,mean_subopt,stderr_subopt,reps";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentTable {
    /// CSV with LF endings; floats use the shortest representation that round-trips.
    /// Standard errors are empty for single-replication rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                r.mean_regret,
                fmt_opt(r.stderr_regret),
                r.mean_subopt,
                fmt_opt(r.stderr_subopt),
                r.replications
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(LabError::Config("unexpected CSV header".into()));
        }
        let bad = |line: &str| LabError::Config(format!("malformed CSV row: {line}"));
        let opt = |s: &str| -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some)
            }
        };
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(line));
            }
            rows.push(ExperimentRow {
                n: f[0].parse().map_err(|_| bad(line))?,
                mean_regret: f[1].parse().map_err(|_| bad(line))?,
                stderr_regret: opt(f[2]).map_err(|_| bad(line))?,
                mean_subopt: f[3].parse().map_err(|_| bad(line))?,
                stderr_subopt: opt(f[4]).map_err(|_| bad(line))?,
                replications: f[5].parse().map_err(|_| bad(line))?,
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Lab(#[from] LabError),
    /// Rows before the failing horizon completed; they are returned with the cause.
    #[error("experiment stopped at n = {failed_n} after {} completed rows: {source}", completed.rows.len())]
    Partial {
        completed: ExperimentTable,
        failed_n: u64,
        source: LabError,
    },
}

fn mean_and_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, Some((var / k).sqrt()))
}

fn validate_grid(n_grid: &[u64], replications: usize) -> Result<()> {
    if n_grid.is_empty() {
        return Err(LabError::Config("n_grid must not be empty".into()));
    }
    if replications == 0 {
        return Err(LabError::Config("replications must be at least 1".into()));
    }
    if n_grid[0] == 0 {
        return Err(LabError::Config("horizons must be positive".into()));
    }
    if let Some(w) = n_grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(LabError::Config(format!(
            "n_grid must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Runs `replications` episodes per horizon with seeds
/// `episode_seed(base_seed, n, r)` and aggregates them in `(n, r)` order.
/// Output is identical for every `parallelism >= 1`.
pub fn run_experiment(
    env: &Arc<Environment>,
    policy: &PolicySpec,
    n_grid: &[u64],
    replications: usize,
    base_seed: u64,
    parallelism: usize,
) -> std::result::Result<ExperimentTable, HarnessError> {
    validate_grid(n_grid, replications)?;
    policy.validate(env)?;
    let jobs: Vec<(u64, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..replications).map(move |r| (n, r)))
        .collect();
    let run = |&(n, r): &(u64, usize)| -> Result<EpisodeResult> {
        let mut p = policy.build_arc(env, n)?;
        run_episode(env, p.as_mut(), n, episode_seed(base_seed, n, r as u64), false)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<EpisodeResult>> = pool.install(|| jobs.par_iter().map(run).collect());

    let mut table = ExperimentTable::default();
    for (chunk, &n) in results.chunks(replications).zip(n_grid) {
        let mut regrets = Vec::with_capacity(replications);
        let mut subopts = Vec::with_capacity(replications);
        for res in chunk {
            match res {
                Ok(ep) => {
                    regrets.push(ep.regret);
                    subopts.push(ep.suboptimal as f64);
                }
                Err(e) => {
                    return Err(HarnessError::Partial {
                        completed: table,
                        failed_n: n,
                        source: e.clone(),
                    })
                }
            }
        }
        let (mean_regret, stderr_regret) = mean_and_stderr(&regrets);
        let (mean_subopt, stderr_subopt) = mean_and_stderr(&subopts);
        table.rows.push(ExperimentRow {
            n,
            mean_regret,
            stderr_regret,
            mean_subopt,
            stderr_subopt,
            replications,
        });
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateColumn {
    Regret,
    Subopt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub rows_used: usize,
}

/// Ordinary least squares of `ln y` on `ln n`. Points with `y <= 0` are skipped.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<RateFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, y)| *n > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(n, y)| (n.ln(), y.ln()))
        .collect();
    let k = usable.len();
    if k < 3 {
        return Err(LabError::InsufficientData(format!(
            "rate fit needs at least 3 rows with positive means, have {k}"
        )));
    }
    let kf = k as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::InsufficientData("rate fit needs distinct horizons".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = usable.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        slope_stderr: (sse / (kf - 2.0) / sxx).sqrt(),
        rows_used: k,
    })
}

fn column(table: &ExperimentTable, which: RateColumn) -> Vec<(f64, f64)> {
    table
        .rows
        .iter()
        .map(|r| {
            let y = match which {
                RateColumn::Regret => r.mean_regret,
                RateColumn::Subopt => r.mean_subopt,
            };
            (r.n as f64, y)
        })
        .collect()
}

/// Growth exponent of a table column.
pub fn fit_rate(table: &ExperimentTable, which: RateColumn) -> Result<RateFit> {
    fit_power_law(&column(table, which))
}

/// Same fit after dividing each mean by `sqrt(ln n)`.
pub fn fit_rate_log_corrected(table: &ExperimentTable, which: RateColumn) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = column(table, which)
        .into_iter()
        .map(|(n, y)| (n, if n > 1.0 { y / n.ln().sqrt() } else { f64::NAN }))
        .collect();
    fit_power_law(&pts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsrRow {
    pub n: u64,
    pub mean_regret: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsrReport {
    pub d0: f64,
    pub c_tilde: f64,
    pub rows: Vec<IsrRow>,
    pub pass: bool,
}

/// Checks `E[R_n] >= C~ n^(-1/alpha) E[S_n]^(1 + 1/alpha)` on every row with
/// five propagated standard errors of slack, where `D0 = max(2, 1/C0)` and
/// `C~ = (1 - 1/D0) / (C0 D0)^(1/alpha)`.
pub fn check_isr(table: &ExperimentTable, margin: Option<(f64, f64)>) -> Result<IsrReport> {
    let (alpha, c0) =
        margin.ok_or_else(|| LabError::Config("the suboptimal-assignment bound needs margin constants (alpha, C0)".into()))?;
    if !(alpha > 0.0 && c0 > 0.0) {
        return Err(LabError::Config(format!("invalid margin constants ({alpha}, {c0})")));
    }
    let d0 = 2f64.max(1.0 / c0);
    let c_tilde = (1.0 - 1.0 / d0) / (c0 * d0).powf(1.0 / alpha);
    let rows: Vec<IsrRow> = table
        .rows
        .iter()
        .map(|r| {
            let n = r.n as f64;
            let scale = c_tilde * n.powf(-1.0 / alpha);
            let bound = scale * r.mean_subopt.powf(1.0 + 1.0 / alpha);
            let d_bound = scale * (1.0 + 1.0 / alpha) * r.mean_subopt.powf(1.0 / alpha);
            let se_r = r.stderr_regret.unwrap_or(0.0);
            let se_b = d_bound * r.stderr_subopt.unwrap_or(0.0);
            let slack = 5.0 * (se_r * se_r + se_b * se_b).sqrt();
            IsrRow {
                n: r.n,
                mean_regret: r.mean_regret,
                bound,
                slack,
                pass: r.mean_regret >= bound - slack,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(IsrReport {
        d0,
        c_tilde,
        rows,
        pass,
    })
}

/// Minimax lower-bound curve `n^(1 - gamma(1+alpha)/(2 gamma + d)) / (64^(1+1/alpha) (C0+1)^(1/alpha))`.
pub fn lower_bound_curve(n: u64, gamma: f64, dim: usize, alpha: f64, c0: f64) -> f64 {
    let exponent = 1.0 - gamma * (1.0 + alpha) / (2.0 * gamma + dim as f64);
    (n as f64).powf(exponent) / (64f64.powf(1.0 + 1.0 / alpha) * (c0 + 1.0).powf(1.0 / alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{DeclaredConstants, Surface};
    use crate::policies::{FixedArmPolicy, OraclePolicy};
    use approx::assert_relative_eq;

    fn row(n: u64, r: f64, s: f64) -> ExperimentRow {
        ExperimentRow {
            n,
            mean_regret: r,
            stderr_regret: Some(0.0),
            mean_subopt: s,
            stderr_subopt: Some(0.0),
            replications: 2,
        }
    }

    #[test]
    fn oracle_has_zero_regret() {
        let env = Arc::new(crate::environments::build_margin_env(0.5, 1.0).unwrap());
        let mut p = OraclePolicy::new(env.clone());
        let ep = run_episode(&env, &mut p, 500, 3, true).unwrap();
        assert_eq!((ep.regret, ep.suboptimal), (0.0, 0));
        assert_eq!(ep.trajectory.unwrap().len(), 500);
    }

    #[test]
    fn constant_gap_fixed_arm() {
        let env = Environment::two_point(
            1,
            vec![Surface::Constant(0.5), Surface::Constant(0.7)],
            DeclaredConstants { holder_l: 1.0, gamma: 1.0, margin: None },
        )
        .unwrap();
        let mut p = FixedArmPolicy::new(0);
        let ep = run_episode(&env, &mut p, 100, 1, false).unwrap();
        assert_relative_eq!(ep.regret, 20.0, epsilon = 1e-9);
        assert_eq!(ep.suboptimal, 100);
    }

    #[test]
    fn ties_are_not_mistakes() {
        let env = Environment::two_point(
            1,
            vec![Surface::Constant(0.5), Surface::Constant(0.5)],
            DeclaredConstants { holder_l: 1.0, gamma: 1.0, margin: None },
        )
        .unwrap();
        let ep = run_episode(&env, &mut FixedArmPolicy::new(1), 50, 1, false).unwrap();
        assert_eq!((ep.regret, ep.suboptimal), (0.0, 0));
    }

    #[test]
    fn fit_recovers_planted_exponents() {
        let table = ExperimentTable {
            rows: (10..=16).map(|k| {
                let n = 1u64 << k;
                row(n, (n as f64).sqrt(), 3.0)
            }).collect(),
        };
        let fit = fit_rate(&table, RateColumn::Regret).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-9);
        assert!(fit.slope_stderr < 1e-9);
        let flat = fit_rate(&table, RateColumn::Subopt).unwrap();
        assert!(flat.slope.abs() < 1e-9);
    }

    #[test]
    fn log_factor_inflates_fitted_slope() {
        let pts: Vec<(f64, f64)> = (10..=16)
            .map(|k| {
                let n = (1u64 << k) as f64;
                (n, n.powf(2.0 / 3.0) * n.ln().sqrt())
            })
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        // d ln sqrt(ln n) / d ln n = 1/(2 ln n) ~ 0.056 at n = 2^13
        assert!((fit.slope - 0.7229).abs() < 1e-3, "{}", fit.slope);
        let table = ExperimentTable {
            rows: pts.iter().map(|&(n, y)| row(n as u64, y, 1.0)).collect(),
        };
        let corrected = fit_rate_log_corrected(&table, RateColumn::Regret).unwrap();
        assert!((corrected.slope - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn fit_needs_three_positive_rows() {
        let table = ExperimentTable {
            rows: vec![row(10, 1.0, 0.0), row(20, 0.0, 0.0), row(40, 2.0, 0.0), row(80, -1.0, 0.0)],
        };
        assert!(matches!(fit_rate(&table, RateColumn::Regret), Err(LabError::InsufficientData(_))));
    }

    #[test]
    fn isr_trivial_cases() {
        let table = ExperimentTable { rows: vec![row(100, 0.0, 0.0), row(200, 1.0, 0.0)] };
        let rep = check_isr(&table, Some((0.5, 1.0))).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.d0, 2.0);
        assert_relative_eq!(rep.c_tilde, 0.125);
        assert!(matches!(check_isr(&table, None), Err(LabError::Config(_))));
        // n = 100, S = 50: bound = 0.125 * 1e-4 * 50^3 = 1.5625
        let fail = ExperimentTable { rows: vec![row(100, 1.0, 50.0)] };
        let rep = check_isr(&fail, Some((0.5, 1.0))).unwrap();
        assert_relative_eq!(rep.rows[0].bound, 1.5625, epsilon = 1e-12);
        assert!(!rep.pass);
    }

    #[test]
    fn csv_round_trip_and_format() {
        let table = ExperimentTable {
            rows: vec![
                ExperimentRow {
                    n: 8,
                    mean_regret: 0.1 + 0.2,
                    stderr_regret: None,
                    mean_subopt: 3.0,
                    stderr_subopt: None,
                    replications: 1,
                },
                row(16, 1e-7, 2.5),
            ],
        };
        let csv = table.to_csv();
        assert_eq!(
            csv,
            "n,mean_regret,stderr_regret,mean_subopt,stderr_subopt,reps\n8,0.30000000000000004,,3,,1\n16,0.0000001,0,2.5,0,2\n"
        );
        assert_eq!(ExperimentTable::from_csv(&csv).unwrap(), table);
    }

    #[test]
    fn lower_bound_example() {
        let c0 = 8.0 * (2.0 / 17f64.sqrt()).powf(-0.5);
        let v = lower_bound_curve(4096, 1.0, 1, 0.5, c0);
        assert_relative_eq!(v, 64.0 / (64f64.powi(3) * (c0 + 1.0).powi(2)), epsilon = 1e-15);
    }

    #[test]
    fn grid_validation() {
        let env = Arc::new(Environment::constant_gap(0.2, 1).unwrap());
        let spec = PolicySpec::Oracle;
        for grid in [vec![], vec![0, 10], vec![10, 10], vec![20, 10]] {
            assert!(run_experiment(&env, &spec, &grid, 2, 1, 1).is_err());
        }
        assert!(run_experiment(&env, &spec, &[10], 0, 1, 1).is_err());
    }

    #[test]
    fn single_replication_has_no_stderr() {
        let env = Arc::new(Environment::constant_gap(0.2, 1).unwrap());
        let t = run_experiment(&env, &PolicySpec::Random, &[10, 20], 1, 5, 2).unwrap();
        assert!(t.rows.iter().all(|r| r.stderr_regret.is_none() && r.replications == 1));
    }
}
