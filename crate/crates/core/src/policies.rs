//! Treatment-assignment policies.
//!
//! [`FUcbPolicy`] runs an independent functional-UCB instance in every cell of
//! a cubic partition: the first `K` arrivals in a cell get arms `0..K` in order,
//! later arrivals get the smallest arm maximizing
//! `T(F_hat) + C * sqrt(beta * ln(N_j) / (2 * S))`, where `N_j` is the arrival
//! ordinal within the cell (starting at 1) and `S` the arm's count there.
//!
//! Arms and bins are 0-based throughout.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::Environment;
use crate::error::{LabError, Result};
use crate::functionals::{ucb_bonus, EmpiricalCdf, FunctionalKind, FunctionalSpec};
use crate::partition::{CubicPartition, Partition};
use crate::rng::LabRng;

/// `2 + sqrt(2)`.
pub fn default_beta() -> f64 {
    2.0 + std::f64::consts::SQRT_2
}

/// Alternating `assign` / `update` protocol shared by every policy.
pub trait Policy: Send {
    fn assign(&mut self, x: &[f64], rng: &mut LabRng) -> Result<usize>;

    /// Reveals the outcome of the arm returned by the preceding `assign`.
    fn update(&mut self, x: &[f64], arm: usize, outcome: f64) -> Result<()>;

    /// The partition the policy currently bins covariates with, if any.
    fn partition(&self) -> Option<&CubicPartition> {
        None
    }

    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FUcbConfig {
    pub arms: usize,
    pub beta: f64,
    pub functional: FunctionalSpec,
    pub bounds: (f64, f64),
}

impl FUcbConfig {
    pub fn new(arms: usize, beta: f64, functional: FunctionalSpec, bounds: (f64, f64)) -> Result<Self> {
        if arms < 2 {
            return Err(LabError::Config(format!("F-UCB needs K >= 2 arms, got {arms}")));
        }
        if !(beta > 2.0 && beta.is_finite()) {
            return Err(LabError::Config(format!("beta must exceed 2, got {beta}")));
        }
        EmpiricalCdf::new(bounds.0, bounds.1)?;
        Ok(Self {
            arms,
            beta,
            functional,
            bounds,
        })
    }
}

#[derive(Debug, Clone)]
struct ArmHistory {
    count: u64,
    cdf: EmpiricalCdf,
}

#[derive(Debug, Clone)]
struct BinState {
    /// `N_j`: ordinal of the next arrival, starting at 1.
    next_arrival: u64,
    arms: Vec<ArmHistory>,
}

/// Read-only view of one bin's counters.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSnapshot {
    pub next_arrival: u64,
    pub counts: Vec<u64>,
    pub samples: Vec<Vec<f64>>,
}

/// F-UCB with covariates over a cubic partition. Bin state is allocated on first arrival.
#[derive(Debug, Clone)]
pub struct FUcbPolicy {
    partition: CubicPartition,
    config: FUcbConfig,
    bins: HashMap<usize, BinState>,
    pending: Option<(usize, usize)>,
    scratch: Vec<f64>,
}

impl FUcbPolicy {
    pub fn new(config: FUcbConfig, partition: CubicPartition) -> Self {
        Self {
            partition,
            config,
            bins: HashMap::new(),
            pending: None,
            scratch: Vec::with_capacity(config.arms),
        }
    }

    /// Partition with `P = ceil(n^(1/(2 gamma + d)))`.
    pub fn for_horizon(config: FUcbConfig, horizon: u64, gamma: f64, dim: usize) -> Result<Self> {
        Ok(Self::new(config, CubicPartition::for_horizon(horizon, gamma, dim)?))
    }

    /// The same state machine with a single bin covering `[0,1]^d`.
    pub fn covariate_ignoring(config: FUcbConfig, dim: usize) -> Result<Self> {
        Ok(Self::new(config, CubicPartition::new(1, dim)?))
    }

    pub fn config(&self) -> &FUcbConfig {
        &self.config
    }

    /// `N_j` for a bin (1 before any arrival).
    pub fn arrival_counter(&self, bin: usize) -> u64 {
        self.bins.get(&bin).map_or(1, |b| b.next_arrival)
    }

    pub fn snapshot(&self, bin: usize) -> Option<BinSnapshot> {
        self.bins.get(&bin).map(|b| BinSnapshot {
            next_arrival: b.next_arrival,
            counts: b.arms.iter().map(|a| a.count).collect(),
            samples: b.arms.iter().map(|a| a.cdf.samples().to_vec()).collect(),
        })
    }

    pub fn occupied_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.bins.keys().copied()
    }

    /// `sum_j sum_i S^i_j`.
    pub fn total_observations(&self) -> u64 {
        self.bins.values().flat_map(|b| b.arms.iter().map(|a| a.count)).sum()
    }

    /// UCB indices of every arm in a bin past its initialization phase.
    pub fn indices(&self, bin: usize) -> Result<Vec<f64>> {
        let state = self
            .bins
            .get(&bin)
            .ok_or_else(|| LabError::Precondition(format!("bin {bin} has no arrivals")))?;
        let mut out = Vec::with_capacity(self.config.arms);
        fill_indices(&self.config, state, &mut out)?;
        Ok(out)
    }

    fn fresh_bin(&self) -> BinState {
        let (a, b) = self.config.bounds;
        BinState {
            next_arrival: 1,
            arms: (0..self.config.arms)
                .map(|_| ArmHistory {
                    count: 0,
                    cdf: EmpiricalCdf::new(a, b).expect("bounds validated in FUcbConfig"),
                })
                .collect(),
        }
    }
}

fn fill_indices(config: &FUcbConfig, state: &BinState, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    for arm in &state.arms {
        let bonus = ucb_bonus(config.functional.lipschitz_c, state.next_arrival, arm.count, config.beta)?;
        out.push(config.functional.eval(&arm.cdf)? + bonus);
    }
    Ok(())
}

/// Smallest index attaining the maximum (exact float comparison).
fn min_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Policy for FUcbPolicy {
    fn assign(&mut self, x: &[f64], _rng: &mut LabRng) -> Result<usize> {
        let bin = self.partition.bin_index(x)?;
        let arm = match self.bins.get(&bin) {
            None => 0,
            Some(state) if state.next_arrival <= self.config.arms as u64 => (state.next_arrival - 1) as usize,
            Some(state) => {
                let mut scratch = std::mem::take(&mut self.scratch);
                fill_indices(&self.config, state, &mut scratch)?;
                let arm = min_argmax(&scratch);
                self.scratch = scratch;
                arm
            }
        };
        self.pending = Some((bin, arm));
        Ok(arm)
    }

    fn update(&mut self, x: &[f64], arm: usize, outcome: f64) -> Result<()> {
        let bin = self.partition.bin_index(x)?;
        if self.pending != Some((bin, arm)) {
            return Err(LabError::Precondition(format!(
                "update for (bin {bin}, arm {arm}) does not follow a matching assign"
            )));
        }
        let (a, b) = self.config.bounds;
        if !(outcome >= a && outcome <= b) {
            return Err(LabError::Domain(format!("outcome {outcome} outside [{a}, {b}]")));
        }
        self.pending = None;
        if !self.bins.contains_key(&bin) {
            let fresh = self.fresh_bin();
            self.bins.insert(bin, fresh);
        }
        let state = self.bins.get_mut(&bin).expect("inserted above");
        state.next_arrival += 1;
        let history = &mut state.arms[arm];
        history.count += 1;
        history.cdf.insert(outcome)
    }

    fn partition(&self) -> Option<&CubicPartition> {
        Some(&self.partition)
    }

    fn name(&self) -> &'static str {
        if self.partition.bin_count() == 1 {
            "fucb-nocov"
        } else {
            "fucb"
        }
    }
}

/// Assigns the smallest maximizer of the true conditional functional.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    env: Arc<Environment>,
}

impl OraclePolicy {
    pub fn new(env: Arc<Environment>) -> Self {
        Self { env }
    }
}

impl Policy for OraclePolicy {
    fn assign(&mut self, x: &[f64], _rng: &mut LabRng) -> Result<usize> {
        self.env.oracle_arm(x)
    }

    fn update(&mut self, _x: &[f64], _arm: usize, _outcome: f64) -> Result<()> {
        Ok(())
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// Uniformly random arm from the policy stream.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    arms: usize,
}

impl RandomPolicy {
    pub fn new(arms: usize) -> Self {
        Self { arms }
    }
}

impl Policy for RandomPolicy {
    fn assign(&mut self, _x: &[f64], rng: &mut LabRng) -> Result<usize> {
        Ok(rng.random_range(0..self.arms))
    }

    fn update(&mut self, _x: &[f64], _arm: usize, _outcome: f64) -> Result<()> {
        Ok(())
    }

    fn name(&self) -> &'static str {
        "random"
    }
}

/// Always the same arm.
#[derive(Debug, Clone)]
pub struct FixedArmPolicy {
    arm: usize,
}

impl FixedArmPolicy {
    pub fn new(arm: usize) -> Self {
        Self { arm }
    }
}

impl Policy for FixedArmPolicy {
    fn assign(&mut self, _x: &[f64], _rng: &mut LabRng) -> Result<usize> {
        Ok(self.arm)
    }

    fn update(&mut self, _x: &[f64], _arm: usize, _outcome: f64) -> Result<()> {
        Ok(())
    }

    fn name(&self) -> &'static str {
        "fixed-arm"
    }
}

pub type PolicyFactory = Box<dyn Fn(u64) -> Result<Box<dyn Policy>> + Send>;

/// Anytime wrapper: at steps `t = 1, 2, 4, 8, ...` all state is discarded and
/// a fresh inner policy for horizon `t` is built.
pub struct DoublingPolicy {
    factory: PolicyFactory,
    step: u64,
    inner: Option<Box<dyn Policy>>,
    restarts: Vec<u64>,
}

impl DoublingPolicy {
    pub fn new(factory: PolicyFactory) -> Self {
        Self {
            factory,
            step: 0,
            inner: None,
            restarts: Vec::new(),
        }
    }

    /// Doubling over F-UCB with the horizon-driven cubic partition.
    pub fn fucb(config: FUcbConfig, gamma: f64, dim: usize) -> Result<Self> {
        CubicPartition::for_horizon(1, gamma, dim)?;
        Ok(Self::new(Box::new(move |horizon| {
            Ok(Box::new(FUcbPolicy::for_horizon(config, horizon, gamma, dim)?) as Box<dyn Policy>)
        })))
    }

    /// Steps at which the inner policy was rebuilt (each equals its horizon).
    pub fn restarts(&self) -> &[u64] {
        &self.restarts
    }

    pub fn inner(&self) -> Option<&dyn Policy> {
        self.inner.as_deref()
    }
}

impl Policy for DoublingPolicy {
    fn assign(&mut self, x: &[f64], rng: &mut LabRng) -> Result<usize> {
        let t = self.step + 1;
        if t.is_power_of_two() || self.inner.is_none() {
            self.inner = Some((self.factory)(t)?);
            self.restarts.push(t);
        }
        self.step = t;
        self.inner.as_mut().expect("built above").assign(x, rng)
    }

    fn update(&mut self, x: &[f64], arm: usize, outcome: f64) -> Result<()> {
        match self.inner.as_mut() {
            Some(p) => p.update(x, arm, outcome),
            None => Err(LabError::Precondition("update before the first assign".into())),
        }
    }

    fn partition(&self) -> Option<&CubicPartition> {
        self.inner.as_ref().and_then(|p| p.partition())
    }

    fn name(&self) -> &'static str {
        "fucb-doubling"
    }
}

/// Which functional a policy ranks arms by, in configuration form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalName {
    Mean,
    Quantile,
    TrimmedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalChoice {
    pub kind: FunctionalName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_c: Option<f64>,
}

impl Default for FunctionalChoice {
    fn default() -> Self {
        Self {
            kind: FunctionalName::Mean,
            tau: None,
            lower: None,
            upper: None,
            lipschitz_c: None,
        }
    }
}

impl FunctionalChoice {
    pub fn kind(&self) -> Result<FunctionalKind> {
        let missing = |field: &str| LabError::Config(format!("functional.{field} is required"));
        let kind = match self.kind {
            FunctionalName::Mean => FunctionalKind::Mean,
            FunctionalName::Quantile => FunctionalKind::Quantile {
                tau: self.tau.ok_or_else(|| missing("tau"))?,
            },
            FunctionalName::TrimmedMean => FunctionalKind::TrimmedMean {
                lower: self.lower.ok_or_else(|| missing("lower"))?,
                upper: self.upper.ok_or_else(|| missing("upper"))?,
            },
        };
        kind.validate()?;
        Ok(kind)
    }

    /// Resolves the Lipschitz constant, falling back to the defaults for the environment.
    pub fn resolve(&self, env: &Environment) -> Result<FunctionalSpec> {
        let kind = self.kind()?;
        let (a, b) = env.bounds();
        match self.lipschitz_c {
            Some(c) => FunctionalSpec::new(kind, c),
            None => FunctionalSpec::with_default_constant(kind, a, b, env.density_lower()),
        }
    }
}

/// Partition used by the binned policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionChoice {
    /// `P = ceil(n^(1/(2 gamma + d)))` with the environment's declared gamma.
    #[default]
    Auto,
    Explicit { bins_per_axis: usize },
}

/// Policy description, built per episode against a concrete environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    Fucb {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        functional: FunctionalChoice,
        #[serde(default)]
        partition: PartitionChoice,
    },
    FucbNocov {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        functional: FunctionalChoice,
    },
    FucbDoubling {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        functional: FunctionalChoice,
    },
    Oracle,
    Random,
    FixedArm {
        arm: usize,
    },
}

impl PolicySpec {
    /// F-UCB with the mean functional, `beta = 2 + sqrt(2)` and automatic partition.
    pub fn fucb_default() -> Self {
        PolicySpec::Fucb {
            beta: default_beta(),
            functional: FunctionalChoice::default(),
            partition: PartitionChoice::Auto,
        }
    }

    fn fucb_config(env: &Environment, beta: f64, functional: &FunctionalChoice) -> Result<FUcbConfig> {
        FUcbConfig::new(env.arm_count(), beta, functional.resolve(env)?, env.bounds())
    }

    /// Checks everything `build` would check, without a horizon.
    pub fn validate(&self, env: &Environment) -> Result<()> {
        self.build(env, 1).map(|_| ())
    }

    pub fn build_arc(&self, env: &Arc<Environment>, horizon: u64) -> Result<Box<dyn Policy>> {
        match self {
            PolicySpec::Oracle => Ok(Box::new(OraclePolicy::new(env.clone()))),
            other => other.build(env, horizon),
        }
    }

    pub fn build(&self, env: &Environment, horizon: u64) -> Result<Box<dyn Policy>> {
        let dim = env.dim();
        let gamma = env.constants().gamma;
        Ok(match self {
            PolicySpec::Fucb { beta, functional, partition } => {
                let config = Self::fucb_config(env, *beta, functional)?;
                let part = match partition {
                    PartitionChoice::Auto => CubicPartition::for_horizon(horizon, gamma, dim)?,
                    PartitionChoice::Explicit { bins_per_axis } => CubicPartition::new(*bins_per_axis, dim)?,
                };
                Box::new(FUcbPolicy::new(config, part))
            }
            PolicySpec::FucbNocov { beta, functional } => {
                Box::new(FUcbPolicy::covariate_ignoring(Self::fucb_config(env, *beta, functional)?, dim)?)
            }
            PolicySpec::FucbDoubling { beta, functional } => {
                Box::new(DoublingPolicy::fucb(Self::fucb_config(env, *beta, functional)?, gamma, dim)?)
            }
            PolicySpec::Oracle => Box::new(OraclePolicy::new(Arc::new(env.clone()))),
            PolicySpec::Random => Box::new(RandomPolicy::new(env.arm_count())),
            PolicySpec::FixedArm { arm } => {
                if *arm >= env.arm_count() {
                    return Err(LabError::Config(format!(
                        "fixed arm {arm} out of range for K={}",
                        env.arm_count()
                    )));
                }
                Box::new(FixedArmPolicy::new(*arm))
            }
        })
    }
}
