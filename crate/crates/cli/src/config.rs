//! Experiment configuration files (TOML).

use std::collections::HashSet;
use std::fmt;

use fucb_core::environments::{
    build_adversarial, build_margin_env, bump_count, random_signs, AdversarialInstance, CovariateLaw,
    DeclaredConstants, Environment, Kernel, LineSegmentFamily, Surface,
};
use fucb_core::functionals::FunctionalKind;
use fucb_core::policies::{FunctionalChoice, FunctionalName, PolicySpec};
use fucb_core::rng::stream;
use fucb_core::LabError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_grid: Vec<u64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub environment: EnvironmentSpec,
    #[serde(default = "PolicySpec::fucb_default")]
    pub policy: PolicySpec,
}

fn default_replications() -> usize {
    1
}

fn default_one() -> f64 {
    1.0
}

fn default_dim() -> usize {
    1
}

fn default_upper() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Two arms on `{0,1}` whose means differ by `gap` everywhere.
    ConstantGap {
        gap: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// One-dimensional instance with `P(0 < gap <= delta) = delta^alpha`.
    Margin {
        alpha: f64,
        #[serde(default = "default_one")]
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        holder_l: Option<f64>,
    },
    /// Lower-bound instance over the mean family on `[0,1]`.
    Adversarial {
        bins_per_axis: usize,
        #[serde(default = "default_one")]
        gamma: f64,
        alpha: f64,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signs: Option<Vec<i8>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sign_seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        holder_l: Option<f64>,
    },
    Custom {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        lower: f64,
        #[serde(default = "default_upper")]
        upper: f64,
        #[serde(default)]
        functional: EnvFunctional,
        holder_l: f64,
        #[serde(default = "default_one")]
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c0: Option<f64>,
        arms: Vec<ArmSpec>,
    },
}

/// Functional the environment's arms are ranked by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFunctional {
    pub kind: FunctionalName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl Default for EnvFunctional {
    fn default() -> Self {
        Self {
            kind: FunctionalName::Mean,
            tau: None,
            lower: None,
            upper: None,
        }
    }
}

impl EnvFunctional {
    fn resolve(&self) -> Result<FunctionalKind, LabError> {
        FunctionalChoice {
            kind: self.kind,
            tau: self.tau,
            lower: self.lower,
            upper: self.upper,
            lipschitz_c: None,
        }
        .kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArmSpec {
    /// Mass `1 - p(x)` at the lower bound and `p(x)` at the upper bound.
    TwoPoint { prob: SurfaceSpec },
    /// Uniform on a window of fixed width sliding with `location(x)` in `[0,1]`.
    UniformWindow { width: f64, location: SurfaceSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Constant(f64),
    Affine { intercept: f64, weights: Vec<f64> },
}

impl SurfaceSpec {
    fn build(&self) -> Result<Surface, LabError> {
        match self {
            SurfaceSpec::Constant(v) => Surface::constant(*v),
            SurfaceSpec::Affine { intercept, weights } => Surface::affine(*intercept, weights.clone()),
        }
    }
}

/// A configuration problem, tied to a dotted field path and, when it can be
/// found in the source text, a 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
    pub line: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Line of `key = ...` for a dotted path, found by scanning table headers.
pub fn locate(source: &str, path: &str) -> Option<usize> {
    let (table, key) = match path.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", path),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == path && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

/// Unknown keys inside a tagged table are reported at the table header; move
/// the line to the offending key when it appears below.
fn refine_unknown_field(source: &str, message: &str, line: usize) -> usize {
    let Some(name) = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
    else {
        return line;
    };
    source
        .lines()
        .enumerate()
        .skip(line - 1)
        .find(|(_, l)| l.split_once('=').is_some_and(|(k, _)| k.trim().trim_matches('"') == name))
        .map_or(line, |(i, _)| i + 1)
}

impl ExperimentConfig {
    /// Parses and validates a configuration document.
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start].matches('\n').count() + 1)
                .map(|line| refine_unknown_field(source, e.message(), line));
            ConfigError {
                field: "config".into(),
                message: e.message().to_string(),
                line,
            }
        })?;
        config.validate().map_err(|(field, message)| ConfigError {
            line: locate(source, &field),
            field,
            message,
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration types serialize to TOML")
    }

    /// Semantic checks; failures name the offending field.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.n_grid.is_empty() {
            return Err(("n_grid".into(), "must list at least one horizon".into()));
        }
        let mut seen = HashSet::new();
        for &n in &self.n_grid {
            if n == 0 {
                return Err(("n_grid".into(), "horizons must be positive".into()));
            }
            if !seen.insert(n) {
                return Err(("n_grid".into(), format!("duplicate horizon {n}")));
            }
        }
        if self.n_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(("n_grid".into(), "horizons must be increasing".into()));
        }
        if self.replications == 0 {
            return Err(("replications".into(), "must be at least 1".into()));
        }
        let env = self.build_environment().map_err(|e| (self.environment_field(&e), e.to_string()))?;
        self.policy
            .validate(&env)
            .map_err(|e| ("policy".to_string(), e.to_string()))?;
        Ok(())
    }

    fn environment_field(&self, err: &LabError) -> String {
        let text = err.to_string();
        let candidates: &[&str] = match &self.environment {
            EnvironmentSpec::ConstantGap { .. } => &["gap", "dim"],
            EnvironmentSpec::Margin { .. } => &["alpha", "gamma", "holder_l"],
            EnvironmentSpec::Adversarial { .. } => &["signs", "sign_seed", "bins_per_axis", "alpha", "gamma", "holder_l"],
            EnvironmentSpec::Custom { .. } => &["arms", "functional", "holder_l", "gamma", "alpha", "c0", "lower", "upper"],
        };
        let lowered = text.to_lowercase();
        let hint = candidates.iter().find(|c| {
            let words = match **c {
                "gap" => &["gap"][..],
                "alpha" => &["alpha", "margin"][..],
                "gamma" => &["gamma", "hölder exponent"][..],
                "holder_l" => &["hölder constant"][..],
                "signs" => &["sign"][..],
                "bins_per_axis" => &["partition", "p^d"][..],
                "arms" => &["arm", "window", "surface"][..],
                "functional" => &["functional", "tau", "trim", "quantile"][..],
                "lower" | "upper" => &["bounds"][..],
                "dim" => &["dimension"][..],
                _ => &[][..],
            };
            words.iter().any(|w| lowered.contains(w))
        });
        match hint {
            Some(f) => format!("environment.{f}"),
            None => "environment".into(),
        }
    }

    pub fn build_environment(&self) -> Result<Environment, LabError> {
        self.environment.build()
    }
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<Environment, LabError> {
        match self {
            EnvironmentSpec::ConstantGap { gap, dim } => Environment::constant_gap(*gap, *dim),
            EnvironmentSpec::Margin { alpha, gamma, holder_l } => {
                let env = build_margin_env(*alpha, *gamma)?;
                Ok(override_l(env, *holder_l))
            }
            EnvironmentSpec::Adversarial { holder_l, .. } => Ok(override_l(self.adversarial()?.environment, *holder_l)),
            EnvironmentSpec::Custom {
                dim,
                lower,
                upper,
                functional,
                holder_l,
                gamma,
                alpha,
                c0,
                arms,
            } => {
                let margin = match (alpha, c0) {
                    (Some(a), Some(c)) => Some((*a, *c)),
                    (None, None) => None,
                    _ => return Err(LabError::Config("margin needs both alpha and c0".into())),
                };
                let kernels = arms
                    .iter()
                    .map(|arm| {
                        Ok(match arm {
                            ArmSpec::TwoPoint { prob } => Kernel::TwoPoint { prob: prob.build()? },
                            ArmSpec::UniformWindow { width, location } => Kernel::UniformWindow {
                                width: *width,
                                location: location.build()?,
                            },
                        })
                    })
                    .collect::<Result<Vec<_>, LabError>>()?;
                Environment::new(
                    *dim,
                    (*lower, *upper),
                    kernels,
                    CovariateLaw::Uniform,
                    functional.resolve()?,
                    DeclaredConstants {
                        holder_l: *holder_l,
                        gamma: *gamma,
                        margin,
                    },
                )
            }
        }
    }

    /// The full lower-bound instance for `kind = "adversarial"`.
    pub fn adversarial(&self) -> Result<AdversarialInstance, LabError> {
        let EnvironmentSpec::Adversarial {
            bins_per_axis,
            gamma,
            alpha,
            dim,
            signs,
            sign_seed,
            ..
        } = self
        else {
            return Err(LabError::Config("not an adversarial environment".into()));
        };
        let signs = match (signs, sign_seed) {
            (Some(s), None) => s.clone(),
            (None, Some(seed)) => adversarial_signs(*bins_per_axis, *dim, *gamma, *alpha, *seed),
            _ => return Err(LabError::Config("give exactly one of signs or sign_seed".into())),
        };
        build_adversarial(
            *bins_per_axis,
            *dim,
            signs,
            *gamma,
            *alpha,
            LineSegmentFamily::mean_family(0.0, 1.0)?,
        )
    }
}

/// Signs drawn from stream 0 of `sign_seed`.
pub fn adversarial_signs(bins_per_axis: usize, dim: usize, gamma: f64, alpha: f64, sign_seed: u64) -> Vec<i8> {
    random_signs(bump_count(bins_per_axis, dim, gamma, alpha), &mut stream(sign_seed, 0))
}

fn override_l(env: Environment, holder_l: Option<f64>) -> Environment {
    match holder_l {
        Some(l) => {
            let constants = DeclaredConstants { holder_l: l, ..env.constants() };
            env.with_constants(constants)
        }
        None => env,
    }
}
