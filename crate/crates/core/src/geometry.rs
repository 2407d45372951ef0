//! Axis-aligned boxes, sample storage and per-leaf index views.
//!
//! Containment is half-open, `lo <= x < hi`, except on faces that coincide
//! with the upper faces of the estimation domain, which are closed. With this
//! convention the leaves of any partition of the domain are a disjoint exact
//! cover, so every sample is counted in exactly one leaf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned hyper-rectangle `prod_j [lo_j, hi_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        for (j, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidBox(format!(
                    "axis {j}: need finite lo < hi, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit(dim: usize) -> Self {
        assert!(dim >= 1, "unit cube needs dim >= 1");
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.width(j)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Containment with the half-open convention; `upper_closed[j]` closes
    /// the upper face on axis `j`.
    pub fn contains(&self, p: &[f64], upper_closed: &[bool]) -> Result<bool> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        if upper_closed.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: upper_closed.len(),
            });
        }
        Ok(p.iter().enumerate().all(|(j, &x)| {
            x >= self.lo[j] && (x < self.hi[j] || (upper_closed[j] && x <= self.hi[j]))
        }))
    }

    /// Closed containment, `lo <= x <= hi` on every axis.
    pub fn contains_closed(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .enumerate()
                .all(|(j, &x)| x >= self.lo[j] && x <= self.hi[j])
    }

    /// Per-axis flags marking which upper faces of `self` lie on the upper
    /// faces of `domain`.
    pub fn upper_flags_within(&self, domain: &AxisBox) -> Vec<bool> {
        self.hi
            .iter()
            .zip(domain.hi())
            .map(|(a, b)| a == b)
            .collect()
    }

    /// Cut along `axis` at `value`: the first box keeps `[lo, value]`, the
    /// second `[value, hi]`.
    pub fn split(&self, axis: usize, value: f64) -> Result<(AxisBox, AxisBox)> {
        if axis >= self.dim() {
            return Err(Error::InvalidParameter(format!(
                "split axis {axis} out of range for dimension {}",
                self.dim()
            )));
        }
        let (a, b) = (self.lo[axis], self.hi[axis]);
        if !(value > a && value < b) {
            return Err(Error::InvalidSplit {
                value,
                lo: a,
                hi: b,
            });
        }
        let mut lower = self.clone();
        lower.hi[axis] = value;
        let mut upper = self.clone();
        upper.lo[axis] = value;
        Ok((lower, upper))
    }
}

/// `N x d` sample matrix, one point per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "sample dimension must be >= 1".into(),
            ));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos / dim));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or(Error::EmptySet)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Fails with the first row that is not inside `domain` (closed).
    pub fn check_within(&self, domain: &AxisBox) -> Result<()> {
        if domain.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: self.dim,
            });
        }
        match self.rows().position(|r| !domain.contains_closed(r)) {
            Some(row) => Err(Error::SampleOutsideDomain { row }),
            None => Ok(()),
        }
    }

    /// A view over every row.
    pub fn full_view(&self) -> OwnedSubset<'_> {
        OwnedSubset {
            parent: self,
            indices: (0..self.len()).collect(),
        }
    }
}

/// Borrowed index view `S_l` into a [`SampleSet`].
#[derive(Clone, Copy, Debug)]
pub struct SubsetView<'a> {
    parent: &'a SampleSet,
    indices: &'a [usize],
}

impl<'a> SubsetView<'a> {
    pub fn new(parent: &'a SampleSet, indices: &'a [usize]) -> Result<Self> {
        let n = parent.len();
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "subset indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::InvalidParameter(format!(
                    "subset index {last} out of range for {n} samples"
                )));
            }
        }
        Ok(Self { parent, indices })
    }

    /// Skips the ordering check; callers guarantee the invariant.
    pub(crate) fn new_unchecked(parent: &'a SampleSet, indices: &'a [usize]) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { parent, indices }
    }

    pub fn dim(&self) -> usize {
        self.parent.dim()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &'a [usize] {
        self.indices
    }

    #[inline]
    pub fn point(&self, k: usize) -> &'a [f64] {
        self.parent.row(self.indices[k])
    }

    pub fn points(&self) -> impl Iterator<Item = &'a [f64]> + Clone + 'a {
        let parent = self.parent;
        self.indices.iter().map(move |&i| parent.row(i))
    }
}

/// An index list paired with its parent, for callers that need to own it.
#[derive(Clone, Debug)]
pub struct OwnedSubset<'a> {
    parent: &'a SampleSet,
    indices: Vec<usize>,
}

impl OwnedSubset<'_> {
    pub fn view(&self) -> SubsetView<'_> {
        SubsetView::new_unchecked(self.parent, &self.indices)
    }
}

/// Affine map of the subset onto `[0,1]^d`, row-major output.
pub fn scale_to_unit(points: &SubsetView<'_>, bounds: &AxisBox) -> Result<Vec<f64>> {
    let d = bounds.dim();
    if points.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: points.dim(),
        });
    }
    let inv_width: Vec<f64> = (0..d).map(|j| 1.0 / bounds.width(j)).collect();
    let mut out = Vec::with_capacity(points.len() * d);
    for (k, p) in points.points().enumerate() {
        if !bounds.contains_closed(p) {
            return Err(Error::OutsideBox { index: k });
        }
        for j in 0..d {
            let t = (p[j] - bounds.lo()[j]) * inv_width[j];
            out.push(t.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(lo: &[f64], hi: &[f64]) -> AxisBox {
        AxisBox::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn volumes() {
        assert_eq!(AxisBox::unit(3).volume(), 1.0);
        assert_eq!(bx(&[0.0, 0.0], &[0.5, 1.0]).volume(), 0.5);
        assert!((bx(&[0.2], &[0.7]).volume() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(AxisBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(AxisBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(AxisBox::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(AxisBox::new(vec![], vec![]).is_err());
    }

    #[test]
    fn containment_convention() {
        let unit = AxisBox::unit(2);
        assert!(unit.contains(&[0.0, 0.0], &[false, false]).unwrap());
        assert!(!unit.contains(&[1.0, 1.0], &[false, false]).unwrap());
        assert!(unit.contains(&[1.0, 1.0], &[true, true]).unwrap());

        let (left, right) = AxisBox::unit(1).split(0, 0.5).unwrap();
        let domain = AxisBox::unit(1);
        let lf = left.upper_flags_within(&domain);
        let rf = right.upper_flags_within(&domain);
        assert!(!left.contains(&[0.5], &lf).unwrap());
        assert!(right.contains(&[0.5], &rf).unwrap());
        assert!(right.contains(&[1.0], &rf).unwrap());
    }

    #[test]
    fn containment_dimension_mismatch() {
        assert!(matches!(
            AxisBox::unit(2).contains(&[0.1], &[false, false]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scaling_examples() {
        let s = SampleSet::new(1, vec![1.0]).unwrap();
        let sub = s.full_view();
        assert_eq!(
            scale_to_unit(&sub.view(), &bx(&[0.0], &[2.0])).unwrap(),
            vec![0.5]
        );

        let s = SampleSet::new(1, vec![0.75]).unwrap();
        let sub = s.full_view();
        assert_eq!(
            scale_to_unit(&sub.view(), &bx(&[0.5], &[1.0])).unwrap(),
            vec![0.5]
        );

        let s = SampleSet::new(3, vec![0.1, 0.9, 0.3, 0.0, 1.0, 0.5]).unwrap();
        let sub = s.full_view();
        assert_eq!(
            scale_to_unit(&sub.view(), &AxisBox::unit(3)).unwrap(),
            s.as_slice().to_vec()
        );
    }

    #[test]
    fn scaling_rejects_outside_points() {
        let s = SampleSet::new(1, vec![0.2, 1.5]).unwrap();
        let sub = s.full_view();
        assert!(matches!(
            scale_to_unit(&sub.view(), &AxisBox::unit(1)),
            Err(Error::OutsideBox { index: 1 })
        ));
    }

    #[test]
    fn subset_view_validation() {
        let s = SampleSet::new(1, vec![0.1, 0.2, 0.3]).unwrap();
        assert!(SubsetView::new(&s, &[0, 2]).is_ok());
        assert!(SubsetView::new(&s, &[2, 0]).is_err());
        assert!(SubsetView::new(&s, &[1, 1]).is_err());
        assert!(SubsetView::new(&s, &[3]).is_err());
    }

    #[test]
    fn sample_set_rejects_non_finite() {
        assert!(matches!(
            SampleSet::new(2, vec![0.0, 0.1, f64::NAN, 0.2]),
            Err(Error::NonFinite(1))
        ));
    }

    proptest! {
        #[test]
        fn scaling_inverts_affine_map(
            lo in -10.0f64..10.0,
            w in 1e-3f64..10.0,
            t in 0.0f64..=1.0,
        ) {
            let b = bx(&[lo], &[lo + w]);
            let y = lo + t * w;
            prop_assume!(y <= lo + w);
            let s = SampleSet::new(1, vec![y]).unwrap();
            let sub = s.full_view();
            let u = scale_to_unit(&sub.view(), &b).unwrap()[0];
            let back = lo + u * w;
            prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(lo.abs()).max(w).max(1e-300));
        }

        #[test]
        fn split_preserves_volume(
            lo in proptest::collection::vec(-5.0f64..5.0, 1..5),
            frac in 0.01f64..0.99,
            axis_seed in 0usize..16,
        ) {
            let hi: Vec<f64> = lo.iter().enumerate().map(|(j, a)| a + 0.5 + j as f64).collect();
            let b = bx(&lo, &hi);
            let axis = axis_seed % b.dim();
            let s = b.lo()[axis] + frac * b.width(axis);
            let (l, r) = b.split(axis, s).unwrap();
            let total = l.volume() + r.volume();
            prop_assert!((total - b.volume()).abs() <= 1e-12 * b.volume());
        }
    }
}
