//! First and second moments of leaf samples versus the uniform distribution
//! on the leaf box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, SubsetView};
use crate::numeric::NeumaierSum;

/// Mean vector and biased (`1/n`) covariance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    /// `d x d`, row-major.
    pub covariance: Vec<f64>,
}

impl MomentSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.dim() + j]
    }
}

/// Tolerances for the mean, variance and off-diagonal covariance checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

impl MomentTolerances {
    pub fn new(eps1: f64, eps2: f64, eps3: f64) -> Result<Self> {
        for (name, v) in [("eps1", eps1), ("eps2", eps2), ("eps3", eps3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(Self { eps1, eps2, eps3 })
    }

    pub fn uniform(eps: f64) -> Result<Self> {
        Self::new(eps, eps, eps)
    }
}

impl Default for MomentTolerances {
    fn default() -> Self {
        Self {
            eps1: 0.1,
            eps2: 0.1,
            eps3: 0.1,
        }
    }
}

/// Two-pass sample mean and biased covariance.
pub fn sample_moments(points: &SubsetView<'_>) -> Result<MomentSummary> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(moments_of_rows(points.points(), points.dim(), points.len()))
}

pub(crate) fn moments_of_rows<'a, I>(rows: I, d: usize, n: usize) -> MomentSummary
where
    I: Iterator<Item = &'a [f64]> + Clone,
{
    let nf = n as f64;
    let mut sums = vec![NeumaierSum::new(); d];
    for r in rows.clone() {
        for (acc, &x) in sums.iter_mut().zip(r) {
            acc.add(x);
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s.total() / nf).collect();

    let mut cov = vec![0.0; d * d];
    let mut dev = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            dev[j] = r[j] - mean[j];
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += dev[i] * dev[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / nf;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    MomentSummary {
        mean,
        covariance: cov,
    }
}

/// Mean and covariance of the uniform distribution on `bounds`.
pub fn uniform_moments(bounds: &AxisBox) -> MomentSummary {
    let d = bounds.dim();
    let mut covariance = vec![0.0; d * d];
    for j in 0..d {
        let w = bounds.width(j);
        covariance[j * d + j] = w * w / 12.0;
    }
    MomentSummary {
        mean: bounds.center(),
        covariance,
    }
}

/// Moment-based uniformity test: every mean, variance and off-diagonal
/// covariance check must pass. The off-diagonal check is absolute and is
/// applied in box coordinates.
pub fn moment_uniformity_test(
    points: &SubsetView<'_>,
    bounds: &AxisBox,
    tol: &MomentTolerances,
) -> Result<bool> {
    if points.dim() != bounds.dim() {
        return Err(Error::DimensionMismatch {
            expected: bounds.dim(),
            got: points.dim(),
        });
    }
    let sample = sample_moments(points)?;
    Ok(moments_pass(&sample, bounds, tol))
}

pub(crate) fn moments_pass(
    sample: &MomentSummary,
    bounds: &AxisBox,
    tol: &MomentTolerances,
) -> bool {
    let reference = uniform_moments(bounds);
    let d = bounds.dim();
    for j in 0..d {
        if (reference.mean[j] - sample.mean[j]).abs() >= tol.eps1 * bounds.width(j) {
            return false;
        }
        let var = reference.cov(j, j);
        if (var - sample.cov(j, j)).abs() >= tol.eps2 * var.abs() {
            return false;
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if sample.cov(i, j).abs() >= tol.eps3 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SampleSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn moments(s: &SampleSet) -> MomentSummary {
        sample_moments(&s.full_view().view()).unwrap()
    }

    #[test]
    fn two_point_example() {
        let s = SampleSet::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let m = moments(&s);
        assert_eq!(m.mean, vec![0.5, 0.5]);
        assert_eq!(m.covariance, vec![0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn single_point_has_zero_covariance() {
        let s = SampleSet::from_rows(&[[0.3, 0.7, 0.1]]).unwrap();
        let m = moments(&s);
        assert_eq!(m.mean, vec![0.3, 0.7, 0.1]);
        assert!(m.covariance.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn translation_shifts_mean_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<[f64; 2]> = (0..50).map(|_| [rng.random(), rng.random()]).collect();
        let shifted: Vec<[f64; 2]> = rows.iter().map(|r| [r[0] + 3.0, r[1] - 2.0]).collect();
        let a = moments(&SampleSet::from_rows(&rows).unwrap());
        let b = moments(&SampleSet::from_rows(&shifted).unwrap());
        assert!((b.mean[0] - a.mean[0] - 3.0).abs() < 1e-12);
        assert!((b.mean[1] - a.mean[1] + 2.0).abs() < 1e-12);
        for (x, y) in a.covariance.iter().zip(&b.covariance) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_subset_is_an_error() {
        let s = SampleSet::new(2, vec![0.1, 0.2]).unwrap();
        let view = SubsetView::new(&s, &[]).unwrap();
        assert!(matches!(sample_moments(&view), Err(Error::EmptySet)));
        assert!(matches!(
            moment_uniformity_test(&view, &AxisBox::unit(2), &MomentTolerances::default()),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn uniform_reference_moments() {
        let m = uniform_moments(&AxisBox::unit(1));
        assert_eq!(m.mean, vec![0.5]);
        assert!((m.cov(0, 0) - 1.0 / 12.0).abs() < 1e-16);

        let m = uniform_moments(&AxisBox::new(vec![0.0], vec![2.0]).unwrap());
        assert_eq!(m.mean, vec![1.0]);
        assert!((m.cov(0, 0) - 1.0 / 3.0).abs() < 1e-16);

        let m = uniform_moments(&AxisBox::unit(3));
        assert_eq!(m.mean, vec![0.5; 3]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 / 12.0 } else { 0.0 };
                assert_eq!(m.cov(i, j), want);
            }
        }
    }

    #[test]
    fn midpoint_lattice_passes() {
        // 40 x 40 cell midpoints of [0,2] x [1,2]
        let k = 40;
        let mut rows = Vec::new();
        for a in 0..k {
            for b in 0..k {
                rows.push([
                    2.0 * (a as f64 + 0.5) / k as f64,
                    1.0 + (b as f64 + 0.5) / k as f64,
                ]);
            }
        }
        let s = SampleSet::from_rows(&rows).unwrap();
        let bounds = AxisBox::new(vec![0.0, 1.0], vec![2.0, 2.0]).unwrap();
        assert!(moment_uniformity_test(
            &s.full_view().view(),
            &bounds,
            &MomentTolerances::default()
        )
        .unwrap());
    }

    #[test]
    fn center_cluster_fails() {
        let s = SampleSet::from_rows(&[[0.5, 0.5]; 20]).unwrap();
        assert!(!moment_uniformity_test(
            &s.full_view().view(),
            &AxisBox::unit(2),
            &MomentTolerances::default()
        )
        .unwrap());
    }

    #[test]
    fn one_dimensional_test_has_no_cross_terms() {
        // mean 0.5, variance 1/12 * (1 +- small) passes
        let k = 100;
        let rows: Vec<[f64; 1]> = (0..k).map(|i| [(i as f64 + 0.5) / k as f64]).collect();
        let s = SampleSet::from_rows(&rows).unwrap();
        let tol = MomentTolerances::new(0.01, 0.01, 1e-300).unwrap();
        assert!(moment_uniformity_test(&s.full_view().view(), &AxisBox::unit(1), &tol).unwrap());
    }

    #[test]
    fn covariance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.random_range(1..300);
            let d = rng.random_range(1..6);
            let data: Vec<f64> = (0..n * d)
                .map(|_| rng.random::<f64>() * 10.0 - 3.0)
                .collect();
            let s = SampleSet::new(d, data.clone()).unwrap();
            let m = moments(&s);
            for i in 0..d {
                for j in 0..d {
                    let mi: f64 = (0..n).map(|r| data[r * d + i]).sum::<f64>() / n as f64;
                    let mj: f64 = (0..n).map(|r| data[r * d + j]).sum::<f64>() / n as f64;
                    let c: f64 = (0..n)
                        .map(|r| (data[r * d + i] - mi) * (data[r * d + j] - mj))
                        .sum::<f64>()
                        / n as f64;
                    assert!((m.cov(i, j) - c).abs() <= 1e-12 * c.abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn tolerances_must_be_positive() {
        assert!(MomentTolerances::new(0.1, 0.0, 0.1).is_err());
        assert!(MomentTolerances::new(-1.0, 0.1, 0.1).is_err());
        assert!(MomentTolerances::new(0.1, 0.1, f64::NAN).is_err());
    }
}
