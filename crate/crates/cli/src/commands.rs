use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fucb_core::environments::{verify_holder, verify_margin, Environment, Kernel};
use fucb_core::harness::{
    fit_rate, fit_rate_log_corrected, lower_bound_curve, run_episode, run_experiment, ExperimentTable, HarnessError,
    RateColumn, RateFit,
};
use fucb_core::policies::PolicySpec;
use fucb_core::rng::{episode_seed, stream};
use fucb_core::LabError;

use crate::config::{ConfigError, EnvironmentSpec, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn format_fit(fit: Result<RateFit, LabError>) -> String {
    match fit {
        Ok(f) => format!("{}±{}", f.slope, f.slope_stderr),
        Err(e) => format!("n/a ({e})"),
    }
}

/// Human-readable summary of a finished table.
pub fn summary(table: &ExperimentTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "rate_regret={}", format_fit(fit_rate(table, RateColumn::Regret)));
    let _ = writeln!(
        s,
        "rate_regret_log_corrected={}",
        format_fit(fit_rate_log_corrected(table, RateColumn::Regret))
    );
    let _ = writeln!(s, "rate_subopt={}", format_fit(fit_rate(table, RateColumn::Subopt)));
    s
}

fn trajectory_csv(env: &Arc<Environment>, policy: &PolicySpec, grid: &[u64], seed: u64) -> Result<String, LabError> {
    let mut out = String::from("n,t,bin,arm,regret\n");
    for &n in grid {
        let mut p = policy.build_arc(env, n)?;
        let ep = run_episode(env, p.as_mut(), n, episode_seed(seed, n, 0), true)?;
        for r in ep.trajectory.unwrap_or_default() {
            let bin = r.bin.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{n},{},{bin},{},{}", r.t, r.arm, r.regret);
        }
    }
    Ok(out)
}

pub fn cmd_run(
    config_path: &Path,
    overrides: &Overrides,
    parallelism: usize,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = overrides.seed {
        config.base_seed = seed;
    }
    if let Some(reps) = overrides.reps {
        if reps == 0 {
            return Err(CliError::Invalid("--reps must be at least 1".into()));
        }
        config.replications = reps;
    }
    let out = overrides.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from));
    let env = Arc::new(config.build_environment().map_err(runtime)?);

    let result = run_experiment(
        &env,
        &config.policy,
        &config.n_grid,
        config.replications,
        config.base_seed,
        parallelism,
    );
    let table = match result {
        Ok(t) => t,
        Err(HarnessError::Partial { completed, failed_n, source }) => {
            if let Some(path) = &out {
                write_output(path, &completed.to_csv())?;
            }
            return Err(runtime(format!(
                "failed at n = {failed_n} after {} completed rows: {source}",
                completed.rows.len()
            )));
        }
        Err(HarnessError::Lab(e)) => return Err(runtime(e)),
    };

    let csv = table.to_csv();
    match &out {
        Some(path) => {
            write_output(path, &csv)?;
            writeln!(stdout, "wrote {} ({} rows)", path.display(), table.rows.len()).map_err(runtime)?;
        }
        None => stdout.write_all(csv.as_bytes()).map_err(runtime)?,
    }
    if let Some(path) = &overrides.trajectory {
        let text = trajectory_csv(&env, &config.policy, &config.n_grid, config.base_seed).map_err(runtime)?;
        write_output(path, &text)?;
    }
    stdout.write_all(summary(&table).as_bytes()).map_err(runtime)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub lines: Vec<String>,
    pub pass: bool,
}

pub const HOLDER_PAIRS: usize = 100_000;
pub const MARGIN_SAMPLES: usize = 200_000;

/// Geometric grid from 1e-4 to 1.
pub fn margin_deltas() -> Vec<f64> {
    (0..=40).map(|i| 10f64.powf(-4.0 + i as f64 * 0.1)).collect()
}

pub fn verify_environment(spec: &EnvironmentSpec, env: &Environment, seed: u64) -> Result<VerifyOutcome, LabError> {
    let mut rng = stream(seed, 0);
    let mut lines = Vec::new();
    let mut pass = true;

    let h = verify_holder(env, HOLDER_PAIRS, &mut rng)?;
    pass &= h.pass;
    lines.push(format!(
        "holder: {} max_ratio={} declared_l={} gamma={} pairs={}",
        verdict(h.pass),
        h.max_ratio,
        h.declared_l,
        h.gamma,
        h.pairs
    ));

    match env.constants().margin {
        Some((alpha, c0)) => {
            let m = verify_margin(env, alpha, c0, &margin_deltas(), MARGIN_SAMPLES, &mut rng)?;
            pass &= m.pass;
            let worst = m.worst().expect("delta grid is nonempty");
            lines.push(format!(
                "margin: {} alpha={alpha} c0={c0} worst_delta={} empirical={} bound={} stderr={}",
                verdict(m.pass),
                worst.delta,
                worst.empirical,
                worst.bound,
                worst.stderr
            ));
        }
        None => lines.push("margin: skipped (no margin constants declared)".into()),
    }

    let family = env.arms().iter().find_map(|k| match k {
        Kernel::Segment { family, .. } => Some(family.clone()),
        _ => None,
    });
    match family {
        Some(f) => {
            let r = f.check_slope(1001)?;
            pass &= r.pass;
            lines.push(format!(
                "family_slope: {} min_slope={} c_minus={} grid_points={}",
                verdict(r.pass),
                r.min_slope,
                r.c_minus,
                r.grid_points
            ));
        }
        None => lines.push("family_slope: skipped (no line-segment family)".into()),
    }
    if let EnvironmentSpec::Adversarial { .. } = spec {
        lines.push(format!("instance: bumps={}", env_bumps(spec)?));
    }
    Ok(VerifyOutcome { lines, pass })
}

fn env_bumps(spec: &EnvironmentSpec) -> Result<usize, LabError> {
    Ok(spec.adversarial()?.bumps.signs().len())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Returns whether every check passed.
pub fn cmd_verify(config_path: &Path, seed: Option<u64>, stdout: &mut dyn Write) -> Result<bool, CliError> {
    let config = load_config(config_path)?;
    let env = config.build_environment().map_err(runtime)?;
    let outcome = verify_environment(&config.environment, &env, seed.unwrap_or(config.base_seed)).map_err(runtime)?;
    for line in &outcome.lines {
        writeln!(stdout, "{line}").map_err(runtime)?;
    }
    writeln!(stdout, "overall: {}", verdict(outcome.pass)).map_err(runtime)?;
    Ok(outcome.pass)
}

#[derive(Debug, Clone)]
pub struct DemoLbArgs {
    pub bins_per_axis: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub dim: usize,
    pub sign_seed: u64,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub seed: u64,
}

pub const DEMO_LB_HEADER: &str = "n,mean_regret,stderr_regret,mean_subopt,stderr_subopt,reps,lower_bound";

/// F-UCB regret on one random lower-bound instance next to the minimax curve.
pub fn demo_lb_table(args: &DemoLbArgs, parallelism: usize) -> Result<String, CliError> {
    let spec = EnvironmentSpec::Adversarial {
        bins_per_axis: args.bins_per_axis,
        gamma: args.gamma,
        alpha: args.alpha,
        dim: args.dim,
        signs: None,
        sign_seed: Some(args.sign_seed),
        holder_l: None,
    };
    let inst = spec.adversarial().map_err(|e| CliError::Invalid(e.to_string()))?;
    let c0 = inst.margin_constant();
    let env = Arc::new(inst.environment);
    let table = run_experiment(&env, &PolicySpec::fucb_default(), &args.n_grid, args.reps, args.seed, parallelism)
        .map_err(|e| match e {
            HarnessError::Lab(LabError::Config(m)) => CliError::Invalid(m),
            other => runtime(other),
        })?;
    let mut out = String::from(DEMO_LB_HEADER);
    out.push('\n');
    for (line, row) in table.to_csv().lines().skip(1).zip(&table.rows) {
        let bound = lower_bound_curve(row.n, args.gamma, args.dim, args.alpha, c0);
        let _ = writeln!(out, "{line},{bound}");
    }
    Ok(out)
}

pub fn cmd_demo_lb(
    args: &DemoLbArgs,
    out: Option<&Path>,
    parallelism: usize,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let csv = demo_lb_table(args, parallelism)?;
    match out {
        Some(path) => {
            write_output(path, &csv)?;
            writeln!(stdout, "wrote {}", path.display()).map_err(runtime)?;
        }
        None => stdout.write_all(csv.as_bytes()).map_err(runtime)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn demo_lb_rows_carry_the_curve() {
        let args = DemoLbArgs {
            bins_per_axis: 4,
            gamma: 1.0,
            alpha: 0.5,
            dim: 1,
            sign_seed: 1,
            n_grid: vec![256, 4096],
            reps: 2,
            seed: 3,
        };
        let csv = demo_lb_table(&args, 1).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], DEMO_LB_HEADER);
        let last: f64 = rows[2].rsplit(',').next().unwrap().parse().unwrap();
        let c0 = 8.0 * (2.0 / 17f64.sqrt()).powf(-0.5);
        assert_relative_eq!(last, 4096f64.sqrt() / (64f64.powi(3) * (c0 + 1.0).powi(2)), max_relative = 1e-12);
    }
}
