//! Empirical CDFs, distributional functionals and the UCB index.
//!
//! A functional `T` maps a cdf on `[a, b]` to a real number. The policy ranks
//! arms by `T` evaluated at per-bin empirical cdfs, inflated by a confidence
//! bonus scaled with the functional's sup-norm Lipschitz constant.

use crate::error::{LabError, Result};

/// Slack used when turning `m * level` into an order-statistic index, so that
/// products such as `10 * 0.7 = 7.000000000000001` do not round up a whole rank.
const RANK_SLACK: f64 = 1e-9;

fn ceil_rank(m: usize, level: f64) -> usize {
    let raw = m as f64 * level;
    (raw - RANK_SLACK * raw.abs().max(1.0)).ceil().max(0.0) as usize
}

/// Sorted outcome samples on a bounded support `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    samples: Vec<f64>,
    lower: f64,
    upper: f64,
    // running sum in insertion order, so the mean is O(1)
    sum: f64,
}

impl EmpiricalCdf {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(LabError::Config(format!(
                "outcome bounds must be finite with a < b, got [{lower}, {upper}]"
            )));
        }
        Ok(Self {
            samples: Vec::new(),
            lower,
            upper,
            sum: 0.0,
        })
    }

    pub fn from_samples(lower: f64, upper: f64, samples: &[f64]) -> Result<Self> {
        let mut cdf = Self::new(lower, upper)?;
        for &y in samples {
            cdf.insert(y)?;
        }
        Ok(cdf)
    }

    /// Inserts `y` after any equal samples (binary search + shift).
    pub fn insert(&mut self, y: f64) -> Result<()> {
        if !(y >= self.lower && y <= self.upper) {
            return Err(LabError::Domain(format!(
                "outcome {y} outside [{}, {}]",
                self.lower, self.upper
            )));
        }
        let at = self.samples.partition_point(|&s| s <= y);
        self.samples.insert(at, y);
        self.sum += y;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// `#{s <= y} / m`. Returns 0 on an empty sample set.
    pub fn cdf(&self, y: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        if y >= self.upper {
            return 1.0;
        }
        self.samples.partition_point(|&s| s <= y) as f64 / self.samples.len() as f64
    }

    fn require_nonempty(&self) -> Result<usize> {
        match self.samples.len() {
            0 => Err(LabError::InsufficientData(
                "empirical cdf has no samples".into(),
            )),
            m => Ok(m),
        }
    }
}

/// Which functional is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalKind {
    Mean,
    /// Left-continuous generalized inverse at level `tau`.
    Quantile { tau: f64 },
    /// Mean after removing the lower `lower` and upper `upper` fractions.
    TrimmedMean { lower: f64, upper: f64 },
}

impl FunctionalKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionalKind::Mean => Ok(()),
            FunctionalKind::Quantile { tau } => {
                if tau > 0.0 && tau < 1.0 {
                    Ok(())
                } else {
                    Err(LabError::Config(format!("quantile level {tau} not in (0,1)")))
                }
            }
            FunctionalKind::TrimmedMean { lower, upper } => {
                let ok = (0.0..0.5).contains(&lower) && (0.0..0.5).contains(&upper) && lower + upper < 1.0;
                if ok {
                    Ok(())
                } else {
                    Err(LabError::Config(format!(
                        "trimming fractions ({lower}, {upper}) must lie in [0, 0.5)"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            FunctionalKind::Mean => "mean".into(),
            FunctionalKind::Quantile { tau } => format!("quantile({tau})"),
            FunctionalKind::TrimmedMean { lower, upper } => format!("trimmed_mean({lower},{upper})"),
        }
    }
}

/// A functional together with its declared Lipschitz constant w.r.t. the sup norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub lipschitz_c: f64,
}

impl FunctionalSpec {
    pub fn new(kind: FunctionalKind, lipschitz_c: f64) -> Result<Self> {
        kind.validate()?;
        if !(lipschitz_c.is_finite() && lipschitz_c > 0.0) {
            return Err(LabError::Config(format!(
                "Lipschitz constant must be positive, got {lipschitz_c}"
            )));
        }
        Ok(Self { kind, lipschitz_c })
    }

    /// The mean on `[a, b]` with `C = b - a`.
    pub fn mean(lower: f64, upper: f64) -> Result<Self> {
        Self::new(FunctionalKind::Mean, upper - lower)
    }

    /// Default constant for a functional on `[a, b]`.
    ///
    /// Means get `b - a`; quantiles get `1 / f_min` when a conditional density
    /// lower bound is declared. Everything else must be supplied explicitly.
    pub fn with_default_constant(
        kind: FunctionalKind,
        lower: f64,
        upper: f64,
        density_lower: Option<f64>,
    ) -> Result<Self> {
        match (kind, density_lower) {
            (FunctionalKind::Mean, _) => Self::new(kind, upper - lower),
            (FunctionalKind::Quantile { .. }, Some(f_min)) if f_min > 0.0 => Self::new(kind, 1.0 / f_min),
            _ => Err(LabError::Config(format!(
                "no default Lipschitz constant for {}; supply lipschitz_c",
                kind.name()
            ))),
        }
    }

    pub fn eval(&self, cdf: &EmpiricalCdf) -> Result<f64> {
        eval(&self.kind, cdf)
    }
}

/// Evaluates `T` at an empirical cdf.
pub fn eval(kind: &FunctionalKind, cdf: &EmpiricalCdf) -> Result<f64> {
    let m = cdf.require_nonempty()?;
    let (a, b) = cdf.bounds();
    let s = cdf.samples();
    let value = match *kind {
        FunctionalKind::Mean => cdf.sum / m as f64,
        FunctionalKind::Quantile { tau } => {
            let rank = ceil_rank(m, tau).clamp(1, m);
            s[rank - 1]
        }
        FunctionalKind::TrimmedMean { lower, upper } => {
            let first = ceil_rank(m, lower); // 0-based start
            let last = m.saturating_sub(ceil_rank(m, upper)); // exclusive end
            if first >= last {
                return Err(LabError::InsufficientData(format!(
                    "trimming ({lower}, {upper}) removes all {m} samples"
                )));
            }
            s[first..last].iter().sum::<f64>() / (last - first) as f64
        }
    };
    Ok(value.clamp(a, b))
}

/// Kolmogorov distance `sup_y |F(y) - G(y)|`, scanned over the merged jump points.
pub fn sup_distance(f: &EmpiricalCdf, g: &EmpiricalCdf) -> Result<f64> {
    if f.bounds() != g.bounds() {
        return Err(LabError::Config(format!(
            "cdf bounds differ: {:?} vs {:?}",
            f.bounds(),
            g.bounds()
        )));
    }
    let (m, k) = (f.require_nonempty()?, g.require_nonempty()?);
    let (xs, ys) = (f.samples(), g.samples());
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < m || j < k {
        let y = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&z)) => x.min(z),
            (Some(&x), None) => x,
            (None, Some(&z)) => z,
            (None, None) => unreachable!(),
        };
        while i < m && xs[i] <= y {
            i += 1;
        }
        while j < k && ys[j] <= y {
            j += 1;
        }
        best = best.max((i as f64 / m as f64 - j as f64 / k as f64).abs());
    }
    Ok(best)
}

/// Confidence bonus `C * sqrt(beta * ln(n_bin) / (2 * s_arm))`.
pub fn ucb_bonus(lipschitz_c: f64, n_bin: u64, s_arm: u64, beta: f64) -> Result<f64> {
    if s_arm == 0 {
        return Err(LabError::Precondition(
            "UCB index needs at least one observation of the arm".into(),
        ));
    }
    if beta.is_nan() || beta <= 2.0 {
        return Err(LabError::Config(format!("beta must exceed 2, got {beta}")));
    }
    Ok(lipschitz_c * (beta * (n_bin as f64).ln() / (2.0 * s_arm as f64)).sqrt())
}

/// `T(F) + C * sqrt(beta * ln(n_bin) / (2 * s_arm))`.
pub fn ucb_index(spec: &FunctionalSpec, cdf: &EmpiricalCdf, n_bin: u64, s_arm: u64, beta: f64) -> Result<f64> {
    let bonus = ucb_bonus(spec.lipschitz_c, n_bin, s_arm, beta)?;
    Ok(spec.eval(cdf)? + bonus)
}
