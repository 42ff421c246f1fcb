//! Cubic partitions of the unit hypercube.
//!
//! Cells are `[(k-1)/P, k/P)` per axis, except the last cell which is closed
//! on the right, and are ordered lexicographically in their index vector.
//! Bin ids are 0-based here: id `j` corresponds to the `(j+1)`-th cube.

use crate::error::{LabError, Result};

/// Anything that maps covariates in `[0,1]^d` to one of finitely many bins.
pub trait Partition {
    fn bin_count(&self) -> usize;
    fn bin_index(&self, x: &[f64]) -> Result<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubicPartition {
    bins_per_axis: usize,
    dim: usize,
    bin_count: usize,
}

/// `ceil(n^(1/(2*gamma + d)))`, snapping to the rounded root when `n` is an
/// exact power (within relative 1e-12) so float error cannot push it up by one.
pub fn choose_bins_per_axis(n: u64, gamma: f64, dim: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LabError::Config(format!("Hölder exponent {gamma} not in (0,1]")));
    }
    if n == 0 || dim == 0 {
        return Err(LabError::Config("horizon and dimension must be positive".into()));
    }
    let exponent = 2.0 * gamma + dim as f64;
    let root = (n as f64).powf(1.0 / exponent);
    let rounded = root.round();
    let p = if rounded >= 1.0 && ((rounded.powf(exponent) - n as f64).abs() <= 1e-12 * n as f64) {
        rounded
    } else {
        root.ceil()
    };
    Ok(p.max(1.0) as usize)
}

impl CubicPartition {
    pub fn new(bins_per_axis: usize, dim: usize) -> Result<Self> {
        if bins_per_axis == 0 || dim == 0 {
            return Err(LabError::Config(format!(
                "cubic partition needs P >= 1 and d >= 1, got P={bins_per_axis}, d={dim}"
            )));
        }
        let bin_count = u32::try_from(dim)
            .ok()
            .and_then(|d| bins_per_axis.checked_pow(d))
            .ok_or_else(|| LabError::Config(format!("P^d overflows for P={bins_per_axis}, d={dim}")))?;
        Ok(Self {
            bins_per_axis,
            dim,
            bin_count,
        })
    }

    /// The partition used for horizon `n` under Hölder exponent `gamma`.
    pub fn for_horizon(n: u64, gamma: f64, dim: usize) -> Result<Self> {
        Self::new(choose_bins_per_axis(n, gamma, dim)?, dim)
    }

    pub fn bins_per_axis(&self) -> usize {
        self.bins_per_axis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-axis cell coordinates `k_l` (0-based) of a covariate.
    pub fn cell_of(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_point(x)?;
        Ok(x.iter().map(|&v| self.axis_cell(v)).collect())
    }

    fn axis_cell(&self, v: f64) -> usize {
        ((v * self.bins_per_axis as f64).floor() as usize).min(self.bins_per_axis - 1)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(LabError::Domain(format!(
                "covariate has dimension {}, partition expects {}",
                x.len(),
                self.dim
            )));
        }
        if let Some(v) = x.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(LabError::Domain(format!("covariate coordinate {v} outside [0,1]")));
        }
        Ok(())
    }

    fn check_bin(&self, bin: usize) -> Result<()> {
        if bin >= self.bin_count {
            return Err(LabError::Domain(format!(
                "bin {bin} out of range for {} bins",
                self.bin_count
            )));
        }
        Ok(())
    }

    /// Decodes a bin id into its lexicographic cell coordinates.
    pub fn cell_coords(&self, bin: usize) -> Result<Vec<usize>> {
        self.check_bin(bin)?;
        let mut coords = vec![0; self.dim];
        let mut rest = bin;
        for slot in coords.iter_mut().rev() {
            *slot = rest % self.bins_per_axis;
            rest /= self.bins_per_axis;
        }
        Ok(coords)
    }

    pub fn bin_center(&self, bin: usize) -> Result<Vec<f64>> {
        let p = self.bins_per_axis as f64;
        Ok(self
            .cell_coords(bin)?
            .into_iter()
            .map(|k| (k as f64 + 0.5) / p)
            .collect())
    }

    /// Euclidean diameter `sqrt(d) / P`, identical for every cell.
    pub fn diameter(&self) -> f64 {
        (self.dim as f64).sqrt() / self.bins_per_axis as f64
    }

    pub fn side(&self) -> f64 {
        1.0 / self.bins_per_axis as f64
    }
}

impl Partition for CubicPartition {
    fn bin_count(&self) -> usize {
        self.bin_count
    }

    fn bin_index(&self, x: &[f64]) -> Result<usize> {
        self.check_point(x)?;
        Ok(x
            .iter()
            .fold(0, |acc, &v| acc * self.bins_per_axis + self.axis_cell(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Membership straight from the interval definition (1-based k).
    fn in_cube(x: &[f64], k: &[usize], p: usize) -> bool {
        x.iter().zip(k).all(|(&v, &kl)| {
            let lo = (kl - 1) as f64 / p as f64;
            let hi = kl as f64 / p as f64;
            lo <= v && if kl == p { v <= hi } else { v < hi }
        })
    }

    fn brute_bin(x: &[f64], p: usize) -> Vec<usize> {
        let d = x.len();
        let mut hits = Vec::new();
        let total = p.pow(d as u32);
        for j in 0..total {
            let mut k = vec![0; d];
            let mut rest = j;
            for slot in k.iter_mut().rev() {
                *slot = rest % p + 1;
                rest /= p;
            }
            if in_cube(x, &k, p) {
                hits.push(j);
            }
        }
        hits
    }

    #[test]
    fn choose_p_examples() {
        assert_eq!(choose_bins_per_axis(1000, 1.0, 1).unwrap(), 10);
        assert_eq!(choose_bins_per_axis(1, 1.0, 1).unwrap(), 1);
        assert_eq!(choose_bins_per_axis(1, 0.3, 4).unwrap(), 1);
        assert_eq!(choose_bins_per_axis(131_072, 1.0, 2).unwrap(), 20);
        assert_eq!(choose_bins_per_axis(1024, 1.0, 1).unwrap(), 11);
        assert_eq!(choose_bins_per_axis(1_000_000, 1.0, 1).unwrap(), 100);
        assert_eq!(choose_bins_per_axis(65_536, 1.0, 2).unwrap(), 16);
        assert!(choose_bins_per_axis(10, 0.0, 1).is_err());
        assert!(choose_bins_per_axis(10, 1.5, 1).is_err());
    }

    #[test]
    fn bin_index_examples() {
        for p in 1..6 {
            for d in 1..4 {
                let part = CubicPartition::new(p, d).unwrap();
                assert_eq!(part.bin_index(&vec![0.0; d]).unwrap(), 0);
                assert_eq!(part.bin_index(&vec![1.0; d]).unwrap(), part.bin_count() - 1);
            }
        }
        let part = CubicPartition::new(2, 2).unwrap();
        // k = (2, 1) -> third cube
        assert_eq!(part.bin_index(&[0.6, 0.2]).unwrap(), 2);
        assert_eq!(brute_bin(&[0.6, 0.2], 2), vec![2]);
    }

    #[test]
    fn bin_index_rejects_out_of_domain() {
        let part = CubicPartition::new(3, 2).unwrap();
        assert!(matches!(part.bin_index(&[0.5, 1.01]), Err(LabError::Domain(_))));
        assert!(matches!(part.bin_index(&[-0.0001, 0.5]), Err(LabError::Domain(_))));
        assert!(matches!(part.bin_index(&[0.5]), Err(LabError::Domain(_))));
        assert!(matches!(part.bin_index(&[f64::NAN, 0.5]), Err(LabError::Domain(_))));
    }

    #[test]
    fn centers_and_diameter() {
        let part = CubicPartition::new(2, 1).unwrap();
        assert_eq!(part.bin_center(0).unwrap(), vec![0.25]);
        assert_eq!(CubicPartition::new(4, 1).unwrap().diameter(), 0.25);
        let part = CubicPartition::new(2, 2).unwrap();
        assert_eq!(part.bin_center(2).unwrap(), vec![0.75, 0.25]);
        assert!(matches!(part.bin_center(4), Err(LabError::Domain(_))));
    }

    #[test]
    fn center_round_trip() {
        for (p, d) in [(1, 1), (7, 1), (5, 2), (3, 3), (4, 4)] {
            let part = CubicPartition::new(p, d).unwrap();
            for j in 0..part.bin_count() {
                let c = part.bin_center(j).unwrap();
                assert_eq!(part.bin_index(&c).unwrap(), j);
            }
        }
    }

    #[test]
    fn partition_property_against_membership_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let part = CubicPartition::new(3, 2).unwrap();
        for i in 0..100_000 {
            let x: Vec<f64> = if i % 10 == 0 {
                // grid points exercise the boundary convention
                (0..2).map(|_| rng.random_range(0..=3) as f64 / 3.0).collect()
            } else {
                (0..2).map(|_| rng.random::<f64>()).collect()
            };
            let hits = brute_bin(&x, 3);
            assert_eq!(hits.len(), 1, "x={x:?}");
            assert_eq!(part.bin_index(&x).unwrap(), hits[0], "x={x:?}");
        }
    }

    #[test]
    fn uniform_counts_match_cell_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let part = CubicPartition::new(4, 2).unwrap();
        let draws = 100_000;
        let mut counts = vec![0usize; part.bin_count()];
        for _ in 0..draws {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            counts[part.bin_index(&x).unwrap()] += 1;
        }
        let q = 1.0 / part.bin_count() as f64;
        let se = (q * (1.0 - q) / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - q).abs() <= 5.0 * se);
        }
    }
}
