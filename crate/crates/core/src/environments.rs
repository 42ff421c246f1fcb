//! Conditional-outcome environments.
//!
//! An [`Environment`] pairs `K` conditional outcome kernels `x -> F^i(., x)`
//! with a covariate law on `[0,1]^d`, the functional the arms are ranked by,
//! and the smoothness/margin constants it claims to satisfy. Every shipped
//! kernel has closed-form functional values where they exist, which keeps
//! regret accounting free of estimation noise.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::functionals::FunctionalKind;
use crate::partition::{CubicPartition, Partition};

/// Half-width of the mixture-weight window used by the lower-bound construction.
pub fn epsilon() -> f64 {
    2.0 / 17f64.sqrt()
}

/// A success probability (or window location) as a function of the covariate.
/// Values always lie in `[0, 1]`.
#[derive(Debug, Clone)]
pub enum Surface {
    Constant(f64),
    /// `intercept + <weights, x>`, required to stay in `[0,1]` on the cube.
    Affine { intercept: f64, weights: Vec<f64> },
    /// `1/2 + sign * s(x)/2` with `s(x) = sgn(2x_1 - 1) |2x_1 - 1|^(1/alpha)`.
    SignedPower { alpha: f64, sign: f64 },
    /// `1/2 + A_f(x)`, the arm-2 mixture weight of an adversarial instance.
    Bumps(Arc<BumpSurface>),
}

impl Surface {
    pub fn affine(intercept: f64, weights: Vec<f64>) -> Result<Self> {
        let lo = intercept + weights.iter().filter(|w| **w < 0.0).sum::<f64>();
        let hi = intercept + weights.iter().filter(|w| **w > 0.0).sum::<f64>();
        if !(lo >= -1e-12 && hi <= 1.0 + 1e-12) {
            return Err(LabError::Config(format!(
                "affine surface ranges over [{lo}, {hi}], outside [0,1]"
            )));
        }
        Ok(Surface::Affine { intercept, weights })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(LabError::Config(format!("constant surface {value} outside [0,1]")));
        }
        Ok(Surface::Constant(value))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let v = match self {
            Surface::Constant(c) => *c,
            Surface::Affine { intercept, weights } => {
                intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            }
            Surface::SignedPower { alpha, sign } => 0.5 + sign * signed_power(x[0], *alpha) / 2.0,
            Surface::Bumps(b) => 0.5 + b.mixture_offset(x),
        };
        v.clamp(0.0, 1.0)
    }

    fn dim_hint(&self) -> Option<usize> {
        match self {
            Surface::Affine { weights, .. } => Some(weights.len()),
            Surface::Bumps(b) => Some(b.partition.dim()),
            _ => None,
        }
    }
}

fn signed_power(x: f64, alpha: f64) -> f64 {
    let u = 2.0 * x - 1.0;
    u.signum() * u.abs().powf(1.0 / alpha)
}

/// A fixed cdf on `[a, b]`, used as an endpoint of a line-segment family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixedCdf {
    PointMass(f64),
    Uniform { lower: f64, upper: f64 },
}

impl FixedCdf {
    fn cdf(&self, y: f64) -> f64 {
        match *self {
            FixedCdf::PointMass(v) => (y >= v) as u8 as f64,
            FixedCdf::Uniform { lower, upper } => ((y - lower) / (upper - lower)).clamp(0.0, 1.0),
        }
    }

    fn cdf_left(&self, y: f64) -> f64 {
        match *self {
            FixedCdf::PointMass(v) => (y > v) as u8 as f64,
            uniform => uniform.cdf(y),
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            FixedCdf::PointMass(v) => v,
            FixedCdf::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            FixedCdf::PointMass(v) => (v, v),
            FixedCdf::Uniform { lower, upper } => (lower, upper),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        vec![lo, hi]
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FixedCdf::PointMass(v) => v,
            FixedCdf::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
        }
    }
}

/// Exact `sup_y |F(y) - G(y)|` for two fixed cdfs: the difference is piecewise
/// linear between breakpoints, so checking breakpoints and their left limits suffices.
fn fixed_sup_distance(f: &FixedCdf, g: &FixedCdf) -> f64 {
    let mut points = f.breakpoints();
    points.extend(g.breakpoints());
    points
        .iter()
        .flat_map(|&y| {
            [
                (f.cdf(y) - g.cdf(y)).abs(),
                (f.cdf_left(y) - g.cdf_left(y)).abs(),
            ]
        })
        .fold(0.0, f64::max)
}

/// Mixtures `J_tau = tau * H1 + (1 - tau) * H2` along which the functional
/// increases at rate at least `c_minus`.
#[derive(Debug, Clone)]
pub struct LineSegmentFamily {
    pub upper_end: FixedCdf,
    pub lower_end: FixedCdf,
    pub functional: FunctionalKind,
    pub c_minus: f64,
    pub bounds: (f64, f64),
}

/// Result of checking successive differences of `tau -> T(J_tau)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub grid_points: usize,
    /// Smallest observed `(T(J_{tau+dt}) - T(J_tau)) / dt`.
    pub min_slope: f64,
    pub c_minus: f64,
    pub pass: bool,
}

impl LineSegmentFamily {
    /// `H1` = point mass at `b`, `H2` = point mass at `a`, ranked by the mean:
    /// `T(J_tau) = a + (b - a) tau`, so `c_- = b - a` and `h` is linear.
    pub fn mean_family(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(LabError::Config("mean family needs a < b".into()));
        }
        Ok(Self {
            upper_end: FixedCdf::PointMass(upper),
            lower_end: FixedCdf::PointMass(lower),
            functional: FunctionalKind::Mean,
            c_minus: upper - lower,
            bounds: (lower, upper),
        })
    }

    /// Two point masses: every mixture is a two-point law, so all functionals are closed form.
    fn as_two_point(&self) -> Option<(f64, f64)> {
        match (self.lower_end, self.upper_end) {
            (FixedCdf::PointMass(lo), FixedCdf::PointMass(hi)) if lo < hi => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.functional, FunctionalKind::Mean)
    }

    /// `T(J_tau)`.
    pub fn value_at(&self, tau: f64) -> Result<f64> {
        if let Some((lo, hi)) = self.as_two_point() {
            return Ok(two_point_functional(&self.functional, lo, hi, tau));
        }
        match self.functional {
            FunctionalKind::Mean => Ok(tau * self.upper_end.mean() + (1.0 - tau) * self.lower_end.mean()),
            other => Err(LabError::NoClosedForm {
                functional: other.name(),
                kernel: "mixture of non-atomic endpoints".into(),
            }),
        }
    }

    /// `h(v) = T(J_{1/2 + v})` on `[-eps, eps]`.
    pub fn h(&self, v: f64) -> Result<f64> {
        self.value_at(0.5 + v)
    }

    /// `h^{-1}` on `[h(-eps), h(eps)]`: closed form for linear families,
    /// bisection to 1e-12 otherwise.
    pub fn h_inverse(&self, u: f64) -> Result<f64> {
        let eps = epsilon();
        let (h_lo, h_hi) = (self.h(-eps)?, self.h(eps)?);
        if !(u >= h_lo - 1e-12 && u <= h_hi + 1e-12) {
            return Err(LabError::Domain(format!(
                "{u} outside the range [{h_lo}, {h_hi}] of h"
            )));
        }
        if self.is_linear() {
            let (t0, t1) = (self.value_at(0.0)?, self.value_at(1.0)?);
            return Ok(((u - t0) / (t1 - t0) - 0.5).clamp(-eps, eps));
        }
        let (mut lo, mut hi) = (-eps, eps);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.h(mid)? < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `||H1 - H2||_inf`; the mixture path is Lipschitz in tau with this constant.
    pub fn endpoint_distance(&self) -> f64 {
        fixed_sup_distance(&self.upper_end, &self.lower_end)
    }

    pub fn check_slope(&self, grid_points: usize) -> Result<SlopeReport> {
        let steps = grid_points.max(2) - 1;
        let dt = 1.0 / steps as f64;
        let mut prev = self.value_at(0.0)?;
        let mut min_slope = f64::INFINITY;
        let mut pass = true;
        for i in 1..=steps {
            let cur = self.value_at(i as f64 * dt)?;
            let diff = cur - prev;
            pass &= diff >= self.c_minus * dt - 1e-12;
            min_slope = min_slope.min(diff / dt);
            prev = cur;
        }
        Ok(SlopeReport {
            grid_points: steps + 1,
            min_slope,
            c_minus: self.c_minus,
            pass,
        })
    }

    fn mixture_sample<R: Rng + ?Sized>(&self, tau: f64, rng: &mut R) -> f64 {
        if rng.random::<f64>() < tau {
            self.upper_end.sample(rng)
        } else {
            self.lower_end.sample(rng)
        }
    }
}

/// Closed-form functional of the law putting mass `p` on `hi` and `1 - p` on `lo`.
fn two_point_functional(kind: &FunctionalKind, lo: f64, hi: f64, p: f64) -> f64 {
    match *kind {
        FunctionalKind::Mean => lo + (hi - lo) * p,
        // left-continuous inverse: F(lo) = 1 - p
        FunctionalKind::Quantile { tau } => {
            if tau <= 1.0 - p {
                lo
            } else {
                hi
            }
        }
        FunctionalKind::TrimmedMean { lower, upper } => {
            let top = 1.0 - upper;
            let cut = (1.0 - p).clamp(lower, top);
            (lo * (cut - lower) + hi * (top - cut)) / (top - lower)
        }
    }
}

/// Functional of the uniform law on `[low, low + width]`.
fn uniform_functional(kind: &FunctionalKind, low: f64, width: f64) -> f64 {
    match *kind {
        FunctionalKind::Mean => low + 0.5 * width,
        FunctionalKind::Quantile { tau } => low + tau * width,
        FunctionalKind::TrimmedMean { lower, upper } => low + 0.5 * width * (lower + 1.0 - upper),
    }
}

/// The signed bump surface `f_sigma` of the lower-bound construction, with
/// its composition `A_f = h^{-1} o f_sigma`.
#[derive(Debug, Clone)]
pub struct BumpSurface {
    partition: CubicPartition,
    signs: Vec<i8>,
    gamma: f64,
    family: LineSegmentFamily,
    h_zero: f64,
}

impl BumpSurface {
    /// `phi(u) = (1 - ||u||_inf)^gamma`, clamped at zero outside the unit ball.
    pub fn phi(&self, u: &[f64]) -> f64 {
        bump_profile(u, self.gamma)
    }

    /// `phi_j(x) = P^{-gamma}/4 * phi(2P(x - q_j)) * 1{x in B_j}` for 0-based bin `j`.
    pub fn phi_j(&self, bin: usize, x: &[f64]) -> Result<f64> {
        if self.partition.bin_index(x)? != bin {
            return Ok(0.0);
        }
        let center = self.partition.bin_center(bin)?;
        Ok(self.scaled_bump(&center, x))
    }

    fn scaled_bump(&self, center: &[f64], x: &[f64]) -> f64 {
        let p = self.partition.bins_per_axis() as f64;
        let u: Vec<f64> = x.iter().zip(center).map(|(v, q)| 2.0 * p * (v - q)).collect();
        0.25 * p.powf(-self.gamma) * bump_profile(&u, self.gamma)
    }

    /// `sum_j sigma_j phi_j(x)` for the bin containing `x`.
    fn signed_bump(&self, x: &[f64]) -> f64 {
        let Ok(bin) = self.partition.bin_index(x) else {
            return 0.0;
        };
        match self.signs.get(bin) {
            Some(&s) => {
                let center = self.partition.bin_center(bin).expect("bin from bin_index");
                s as f64 * self.scaled_bump(&center, x)
            }
            None => 0.0,
        }
    }

    /// `f_sigma(x) = h(0) + c_- eps sum_j sigma_j phi_j(x)`.
    pub fn f_sigma(&self, x: &[f64]) -> f64 {
        self.h_zero + self.family.c_minus * epsilon() * self.signed_bump(x)
    }

    /// `A_f(x) = h^{-1}(f_sigma(x))`, in `[-eps, eps]`.
    pub fn mixture_offset(&self, x: &[f64]) -> f64 {
        let f = self.f_sigma(x);
        if self.family.is_linear() {
            let (t0, t1) = (
                self.family.value_at(0.0).expect("validated family"),
                self.family.value_at(1.0).expect("validated family"),
            );
            return (f - t0) / (t1 - t0) - 0.5;
        }
        self.family.h_inverse(f).expect("f_sigma stays in the range of h")
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn partition(&self) -> &CubicPartition {
        &self.partition
    }

    pub fn family(&self) -> &LineSegmentFamily {
        &self.family
    }

    pub fn h_zero(&self) -> f64 {
        self.h_zero
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Hölder constant of `f_sigma`: `c_- * eps / 2`.
    pub fn holder_constant(&self) -> f64 {
        self.family.c_minus * epsilon() / 2.0
    }
}

fn bump_profile(u: &[f64], gamma: f64) -> f64 {
    let norm = u.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    (1.0 - norm).max(0.0).powf(gamma)
}

/// Conditional outcome law of one arm.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// Mass `p(x)` on `b` and `1 - p(x)` on `a`.
    TwoPoint { prob: Surface },
    /// Uniform on a window of fixed `width` whose left end is
    /// `a + (b - a - width) * location(x)`.
    UniformWindow { width: f64, location: Surface },
    /// `J_{weight(x)}` for a line-segment family.
    Segment { family: Arc<LineSegmentFamily>, weight: Surface },
}

impl Kernel {
    fn describe(&self) -> &'static str {
        match self {
            Kernel::TwoPoint { .. } => "two-point kernel",
            Kernel::UniformWindow { .. } => "uniform-window kernel",
            Kernel::Segment { .. } => "line-segment kernel",
        }
    }

    fn surface(&self) -> &Surface {
        match self {
            Kernel::TwoPoint { prob } => prob,
            Kernel::UniformWindow { location, .. } => location,
            Kernel::Segment { weight, .. } => weight,
        }
    }

    fn window_low(&self, bounds: (f64, f64), x: &[f64]) -> f64 {
        match self {
            Kernel::UniformWindow { width, location } => bounds.0 + (bounds.1 - bounds.0 - width) * location.value(x),
            _ => unreachable!("only uniform windows have a low end"),
        }
    }

    fn functional(&self, kind: &FunctionalKind, bounds: (f64, f64), x: &[f64]) -> Result<f64> {
        match self {
            Kernel::TwoPoint { prob } => Ok(two_point_functional(kind, bounds.0, bounds.1, prob.value(x))),
            Kernel::UniformWindow { width, .. } => Ok(uniform_functional(kind, self.window_low(bounds, x), *width)),
            Kernel::Segment { family, weight } => {
                if family.functional != *kind {
                    // the family's own functional has the closed form; others only for atoms
                    let probe = LineSegmentFamily {
                        functional: *kind,
                        ..(**family).clone()
                    };
                    return probe.value_at(weight.value(x));
                }
                family.value_at(weight.value(x))
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, bounds: (f64, f64), x: &[f64], rng: &mut R) -> f64 {
        match self {
            Kernel::TwoPoint { prob } => {
                if rng.random::<f64>() < prob.value(x) {
                    bounds.1
                } else {
                    bounds.0
                }
            }
            Kernel::UniformWindow { width, .. } => self.window_low(bounds, x) + width * rng.random::<f64>(),
            Kernel::Segment { family, weight } => family.mixture_sample(weight.value(x), rng),
        }
    }

    /// `||F(., x1) - F(., x2)||_inf`, exact for every shipped kernel.
    fn sup_distance(&self, bounds: (f64, f64), x1: &[f64], x2: &[f64]) -> f64 {
        match self {
            Kernel::TwoPoint { prob } => (prob.value(x1) - prob.value(x2)).abs(),
            Kernel::UniformWindow { width, .. } => {
                ((self.window_low(bounds, x1) - self.window_low(bounds, x2)).abs() / width).min(1.0)
            }
            Kernel::Segment { family, weight } => {
                (weight.value(x1) - weight.value(x2)).abs() * family.endpoint_distance()
            }
        }
    }

    /// Lower bound on the conditional density, when the kernel has one.
    fn density_lower(&self) -> Option<f64> {
        match self {
            Kernel::UniformWindow { width, .. } => Some(1.0 / width),
            _ => None,
        }
    }
}

/// Law of the covariate vector on `[0,1]^d`.
#[derive(Debug, Clone)]
pub enum CovariateLaw {
    Uniform,
    /// Density constant on each cell of a cubic grid. `cell_mass[j]` is the
    /// probability of cell `j`; the density there is `cell_mass[j] * P^d`.
    PiecewiseConstant {
        grid: CubicPartition,
        cell_mass: Vec<f64>,
        sampler: WeightedIndex<f64>,
    },
}

impl CovariateLaw {
    pub fn piecewise_constant(grid: CubicPartition, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.bin_count() {
            return Err(LabError::Config(format!(
                "{} cell weights for a grid of {} cells",
                weights.len(),
                grid.bin_count()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(LabError::Config("cell weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let cell_mass: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let sampler = WeightedIndex::new(&cell_mass).map_err(|e| LabError::Config(e.to_string()))?;
        Ok(CovariateLaw::PiecewiseConstant {
            grid,
            cell_mass,
            sampler,
        })
    }

    /// `(c_lower, c_upper)` bounds of the density.
    pub fn density_bounds(&self) -> (f64, f64) {
        match self {
            CovariateLaw::Uniform => (1.0, 1.0),
            CovariateLaw::PiecewiseConstant { grid, cell_mass, .. } => {
                let scale = grid.bin_count() as f64;
                let lo = cell_mass.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = cell_mass.iter().cloned().fold(0.0, f64::max);
                (lo * scale, hi * scale)
            }
        }
    }

    fn sample_into<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R, x: &mut Vec<f64>) {
        x.clear();
        match self {
            CovariateLaw::Uniform => x.extend((0..dim).map(|_| rng.random::<f64>())),
            CovariateLaw::PiecewiseConstant { grid, sampler, .. } => {
                let cell = sampler.sample(rng);
                let coords = grid.cell_coords(cell).expect("sampled cell in range");
                let p = grid.bins_per_axis() as f64;
                x.extend(coords.into_iter().map(|k| (k as f64 + rng.random::<f64>()) / p));
            }
        }
    }
}

/// Constants an environment claims to satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    /// Hölder constant `L` of `x -> F^i(., x)` in sup norm.
    pub holder_l: f64,
    pub gamma: f64,
    /// Margin exponent and constant, when declared.
    pub margin: Option<(f64, f64)>,
}

/// One draw: the covariate and every arm's potential outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub x: Vec<f64>,
    pub outcomes: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Environment {
    dim: usize,
    bounds: (f64, f64),
    arms: Vec<Kernel>,
    covariates: CovariateLaw,
    functional: FunctionalKind,
    constants: DeclaredConstants,
}

impl Environment {
    pub fn new(
        dim: usize,
        bounds: (f64, f64),
        arms: Vec<Kernel>,
        covariates: CovariateLaw,
        functional: FunctionalKind,
        constants: DeclaredConstants,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::Config("dimension must be positive".into()));
        }
        if arms.len() < 2 {
            return Err(LabError::Config(format!("need at least 2 arms, got {}", arms.len())));
        }
        if !(bounds.0.is_finite() && bounds.1.is_finite() && bounds.0 < bounds.1) {
            return Err(LabError::Config(format!("invalid outcome bounds {bounds:?}")));
        }
        functional.validate()?;
        if !(constants.gamma > 0.0 && constants.gamma <= 1.0) {
            return Err(LabError::Config(format!("declared gamma {} not in (0,1]", constants.gamma)));
        }
        if constants.holder_l.is_nan() || constants.holder_l <= 0.0 {
            return Err(LabError::Config("declared Hölder constant must be positive".into()));
        }
        if let Some((alpha, c0)) = constants.margin {
            if !(alpha > 0.0 && c0 > 0.0) {
                return Err(LabError::Config(format!("invalid margin constants ({alpha}, {c0})")));
            }
        }
        if let CovariateLaw::PiecewiseConstant { grid, .. } = &covariates {
            if grid.dim() != dim {
                return Err(LabError::Config("covariate grid dimension mismatch".into()));
            }
        }
        for (i, arm) in arms.iter().enumerate() {
            if let Some(d) = arm.surface().dim_hint() {
                if d != dim {
                    return Err(LabError::Config(format!(
                        "arm {i} surface has dimension {d}, environment has {dim}"
                    )));
                }
            }
            match arm {
                Kernel::UniformWindow { width, .. } if !(*width > 0.0 && *width <= bounds.1 - bounds.0) => {
                    return Err(LabError::Config(format!("arm {i}: window width {width} invalid")));
                }
                Kernel::Segment { family, .. } if family.bounds != bounds => {
                    return Err(LabError::Config(format!("arm {i}: family bounds differ from environment")));
                }
                _ => {}
            }
        }
        Ok(Self {
            dim,
            bounds,
            arms,
            covariates,
            functional,
            constants,
        })
    }

    /// Two arms with two-point outcomes on `{0, 1}`: `p1 = 1/2 - gap/2`,
    /// `p2 = 1/2 + gap/2` at every `x`, uniform covariates, mean functional.
    pub fn constant_gap(gap: f64, dim: usize) -> Result<Self> {
        if !(gap > 0.0 && gap <= 1.0) {
            return Err(LabError::Config(format!("constant gap {gap} not in (0,1]")));
        }
        Self::new(
            dim,
            (0.0, 1.0),
            vec![
                Kernel::TwoPoint { prob: Surface::constant(0.5 - gap / 2.0)? },
                Kernel::TwoPoint { prob: Surface::constant(0.5 + gap / 2.0)? },
            ],
            CovariateLaw::Uniform,
            FunctionalKind::Mean,
            DeclaredConstants {
                holder_l: 1.0,
                gamma: 1.0,
                margin: None,
            },
        )
    }

    /// Two two-point arms on `{0,1}` with success probabilities given by surfaces,
    /// uniform covariates and the mean functional.
    pub fn two_point(dim: usize, probs: Vec<Surface>, constants: DeclaredConstants) -> Result<Self> {
        Self::new(
            dim,
            (0.0, 1.0),
            probs.into_iter().map(|prob| Kernel::TwoPoint { prob }).collect(),
            CovariateLaw::Uniform,
            FunctionalKind::Mean,
            constants,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn functional(&self) -> FunctionalKind {
        self.functional
    }

    pub fn constants(&self) -> DeclaredConstants {
        self.constants
    }

    pub fn with_constants(mut self, constants: DeclaredConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn covariates(&self) -> &CovariateLaw {
        &self.covariates
    }

    pub fn arms(&self) -> &[Kernel] {
        &self.arms
    }

    /// Common lower bound on every arm's conditional density, if all arms have one.
    pub fn density_lower(&self) -> Option<f64> {
        self.arms
            .iter()
            .map(Kernel::density_lower)
            .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim || x.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(LabError::Domain(format!("covariate {x:?} not in [0,1]^{}", self.dim)));
        }
        Ok(())
    }

    /// Draws `x` and all `K` potential outcomes into the given buffers.
    /// Arms are drawn independently given `x`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut Vec<f64>, outcomes: &mut Vec<f64>) {
        self.covariates.sample_into(self.dim, rng, x);
        outcomes.clear();
        for arm in &self.arms {
            outcomes.push(arm.sample(self.bounds, x, rng));
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        let (mut x, mut outcomes) = (Vec::with_capacity(self.dim), Vec::with_capacity(self.arms.len()));
        self.sample_into(rng, &mut x, &mut outcomes);
        Draw { x, outcomes }
    }

    /// Draws one outcome of `arm` at a given covariate.
    pub fn sample_outcome<R: Rng + ?Sized>(&self, arm: usize, x: &[f64], rng: &mut R) -> Result<f64> {
        self.check_x(x)?;
        let kernel = self.kernel(arm)?;
        Ok(kernel.sample(self.bounds, x, rng))
    }

    fn kernel(&self, arm: usize) -> Result<&Kernel> {
        self.arms
            .get(arm)
            .ok_or_else(|| LabError::Domain(format!("arm {arm} out of range for K={}", self.arms.len())))
    }

    /// Exact `T(F^arm(., x))`.
    pub fn true_functional(&self, arm: usize, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let kernel = self.kernel(arm)?;
        kernel.functional(&self.functional, self.bounds, x).map_err(|e| match e {
            LabError::NoClosedForm { functional, .. } => LabError::NoClosedForm {
                functional,
                kernel: kernel.describe().into(),
            },
            other => other,
        })
    }

    /// Functional values of every arm at `x`.
    pub fn arm_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.arms.len()).map(|i| self.true_functional(i, x)).collect()
    }

    /// Smallest maximizer of the true functional (0-based).
    pub fn oracle_arm(&self, x: &[f64]) -> Result<usize> {
        Ok(min_argmax(&self.arm_values(x)?))
    }

    /// Best value minus the best strictly-worse value; 0 when all arms tie.
    pub fn gap(&self, x: &[f64]) -> Result<f64> {
        Ok(gap_of(&self.arm_values(x)?))
    }

    /// Largest `||F^i(., x1) - F^i(., x2)||_inf` over arms.
    pub fn max_sup_distance(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_x(x1)?;
        self.check_x(x2)?;
        Ok(self
            .arms
            .iter()
            .map(|k| k.sup_distance(self.bounds, x1, x2))
            .fold(0.0, f64::max))
    }

    pub fn sample_covariate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim);
        self.covariates.sample_into(self.dim, rng, &mut x);
        x
    }
}

pub(crate) fn min_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn gap_of(values: &[f64]) -> f64 {
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let second = values.iter().cloned().filter(|&v| v < top).fold(f64::NEG_INFINITY, f64::max);
    if second.is_finite() {
        top - second
    } else {
        0.0
    }
}

/// Two-point arms on `{0,1}` with `p_{1,2}(x) = 1/2 -/+ s(x)/2`, where
/// `s(x) = sgn(2x - 1)|2x - 1|^(1/alpha)`. The gap is `|2x - 1|^(1/alpha)`, so
/// under uniform covariates `P(0 < gap <= delta) = delta^alpha` exactly;
/// declared `C0 = 1`, Hölder constant `1/alpha` with exponent `gamma`.
pub fn build_margin_env(alpha: f64, gamma: f64) -> Result<Environment> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Config(format!("margin exponent {alpha} not in (0,1)")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LabError::Config(format!("Hölder exponent {gamma} not in (0,1]")));
    }
    if alpha * gamma > 1.0 {
        return Err(LabError::Config(format!(
            "alpha * gamma = {} exceeds 1; the gap surface would not be Hölder-{gamma}",
            alpha * gamma
        )));
    }
    // |s(x1) - s(x2)|/2 <= (1/alpha) |x1 - x2| and |.| <= 1 gives the Hölder-gamma bound.
    let holder_l = (1.0 / alpha).max(1.0);
    Environment::new(
        1,
        (0.0, 1.0),
        vec![
            Kernel::TwoPoint { prob: Surface::SignedPower { alpha, sign: -1.0 } },
            Kernel::TwoPoint { prob: Surface::SignedPower { alpha, sign: 1.0 } },
        ],
        CovariateLaw::Uniform,
        FunctionalKind::Mean,
        DeclaredConstants {
            holder_l,
            gamma,
            margin: Some((alpha, 1.0)),
        },
    )
}

/// One member of the lower-bound family: arm 1 is `H_0 = J_{1/2}` everywhere,
/// arm 2 at `x` is `H_{A_f(x)} = J_{1/2 + A_f(x)}`.
#[derive(Debug, Clone)]
pub struct AdversarialInstance {
    pub bumps: Arc<BumpSurface>,
    pub alpha: f64,
    pub environment: Environment,
}

/// Number of signed bumps `m = ceil(P^(d - gamma * alpha))`.
pub fn bump_count(bins_per_axis: usize, dim: usize, gamma: f64, alpha: f64) -> usize {
    let raw = (bins_per_axis as f64).powf(dim as f64 - gamma * alpha);
    let rounded = raw.round();
    if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

pub fn build_adversarial(
    bins_per_axis: usize,
    dim: usize,
    signs: Vec<i8>,
    gamma: f64,
    alpha: f64,
    family: LineSegmentFamily,
) -> Result<AdversarialInstance> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LabError::Config(format!("Hölder exponent {gamma} not in (0,1]")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Config(format!("margin exponent {alpha} not in (0,1)")));
    }
    let partition = CubicPartition::new(bins_per_axis, dim)?;
    let m = bump_count(bins_per_axis, dim, gamma, alpha);
    if signs.len() != m {
        return Err(LabError::Config(format!(
            "sign vector has length {}, the construction needs m = ceil(P^(d - gamma*alpha)) = {m}",
            signs.len()
        )));
    }
    if signs.iter().any(|s| *s != 1 && *s != -1) {
        return Err(LabError::Config("signs must be +1 or -1".into()));
    }
    if family.c_minus.is_nan() || family.c_minus <= 0.0 {
        return Err(LabError::Config("family slope bound c_minus must be positive".into()));
    }
    let slope = family.check_slope(1001)?;
    if !slope.pass {
        return Err(LabError::Config(format!(
            "{} along the segment grows at rate {:.6} < c_minus = {}",
            family.functional.name(),
            slope.min_slope,
            family.c_minus
        )));
    }
    let h_zero = family.h(0.0)?;
    let bounds = family.bounds;
    let functional = family.functional;
    // Lipschitz constant of h^{-1} is 1/c_-, of tau -> J_tau is ||H1 - H2||_inf.
    let holder_l = epsilon() / 2.0 * family.endpoint_distance();
    let bumps = Arc::new(BumpSurface {
        partition,
        signs,
        gamma,
        family: family.clone(),
        h_zero,
    });
    let family = Arc::new(family);
    let c0 = 8.0 * dim as f64 * (family.c_minus * epsilon()).powf(-alpha);
    let environment = Environment::new(
        dim,
        bounds,
        vec![
            Kernel::Segment { family: family.clone(), weight: Surface::Constant(0.5) },
            Kernel::Segment { family, weight: Surface::Bumps(bumps.clone()) },
        ],
        CovariateLaw::Uniform,
        functional,
        DeclaredConstants {
            holder_l,
            gamma,
            margin: Some((alpha, c0)),
        },
    )?;
    Ok(AdversarialInstance {
        bumps,
        alpha,
        environment,
    })
}

impl AdversarialInstance {
    /// Margin constant in functional units: `8d (c_- eps)^(-alpha)`.
    pub fn margin_constant(&self) -> f64 {
        self.environment.constants().margin.expect("adversarial instances declare a margin").1
    }

    /// Bin id of the `j`-th bump (identical to `j`; bumps occupy the first `m` bins).
    pub fn bump_bins(&self) -> std::ops::Range<usize> {
        0..self.bumps.signs().len()
    }
}

/// Draws a uniformly random sign vector of length `m`.
pub fn random_signs<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<i8> {
    (0..m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderReport {
    pub pairs: usize,
    pub max_ratio: f64,
    pub declared_l: f64,
    pub gamma: f64,
    pub pass: bool,
}

/// Samples random pairs in `[0,1]^d` and compares the largest
/// `||F(., x1) - F(., x2)||_inf / ||x1 - x2||^gamma` with the declared `L`.
pub fn verify_holder<R: Rng + ?Sized>(env: &Environment, pairs: usize, rng: &mut R) -> Result<HolderReport> {
    let DeclaredConstants { holder_l, gamma, .. } = env.constants();
    let dim = env.dim();
    let mut max_ratio = 0.0f64;
    for _ in 0..pairs {
        let x1: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let x2: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let dist = x1.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let ratio = env.max_sup_distance(&x1, &x2)? / dist.powf(gamma);
        max_ratio = max_ratio.max(ratio);
    }
    Ok(HolderReport {
        pairs,
        max_ratio,
        declared_l: holder_l,
        gamma,
        pass: max_ratio <= holder_l * (1.0 + 1e-9),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginRow {
    pub delta: f64,
    pub empirical: f64,
    pub bound: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub alpha: f64,
    pub c0: f64,
    pub samples: usize,
    pub rows: Vec<MarginRow>,
    pub pass: bool,
}

impl MarginReport {
    /// The row with the largest excess of empirical probability over the bound.
    pub fn worst(&self) -> Option<&MarginRow> {
        self.rows
            .iter()
            .max_by(|a, b| (a.empirical - a.bound).total_cmp(&(b.empirical - b.bound)))
    }
}

/// Monte-Carlo estimate of `P(0 < gap(X) <= delta)` on a delta grid, checked
/// against `C0 * delta^alpha` with five binomial standard errors of slack.
pub fn verify_margin<R: Rng + ?Sized>(
    env: &Environment,
    alpha: f64,
    c0: f64,
    deltas: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<MarginReport> {
    if samples == 0 {
        return Err(LabError::Config("margin verification needs samples".into()));
    }
    let mut gaps = Vec::with_capacity(samples);
    let mut x = Vec::with_capacity(env.dim());
    for _ in 0..samples {
        env.covariates.sample_into(env.dim(), rng, &mut x);
        gaps.push(env.gap(&x)?);
    }
    let n = samples as f64;
    let rows: Vec<MarginRow> = deltas
        .iter()
        .map(|&delta| {
            let hits = gaps.iter().filter(|&&g| g > 0.0 && g <= delta).count();
            let empirical = hits as f64 / n;
            let bound = c0 * delta.max(0.0).powf(alpha);
            let q = bound.clamp(0.0, 1.0);
            let stderr = (q * (1.0 - q) / n).sqrt();
            MarginRow {
                delta,
                empirical,
                bound,
                stderr,
                pass: empirical <= bound + 5.0 * stderr,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(MarginReport {
        alpha,
        c0,
        samples,
        rows,
        pass,
    })
}
