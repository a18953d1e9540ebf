//! Axis-aligned domains and collocation point generation.
//!
//! Every sampler is a pure function of `(domain, count, seed)`; there is no
//! global RNG state.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default number of boundary collocation points per face.
pub const DEFAULT_POINTS_PER_FACE: usize = 32;

/// An axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Domain<T: Real> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> Domain<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::invalid("domain must have at least one dimension"));
        }
        if lo.len() != hi.len() {
            return Err(Error::shape(format!(
                "domain bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] < hi[i])) {
            return Err(Error::invalid(format!(
                "domain bound {i}: lo {} must be below hi {}",
                lo[i], hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(lo: T, hi: T, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> T {
        self.hi[axis] - self.lo[axis]
    }

    pub fn extents(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.extent(i)).collect()
    }

    pub fn center(&self) -> Vec<T> {
        (0..self.dim())
            .map(|i| (self.lo[i] + self.hi[i]) * T::lit(0.5))
            .collect()
    }

    pub fn contains_strictly(&self, p: &[T]) -> bool {
        p.iter()
            .enumerate()
            .all(|(i, &x)| x > self.lo[i] && x < self.hi[i])
    }

    /// Smallest distance from `p` to a face along any axis.
    pub fn boundary_distance(&self, p: &[T]) -> T {
        p.iter()
            .enumerate()
            .map(|(i, &x)| (x - self.lo[i]).abs().min((self.hi[i] - x).abs()))
            .fold(T::infinity(), T::min)
    }
}

/// Interior and boundary collocation points.
#[derive(Clone, Debug)]
pub struct CollocationSet<T: Real> {
    pub interior: Array2<T>,
    pub boundary: Array2<T>,
    pub seed: u64,
}

impl<T: Real> CollocationSet<T> {
    pub fn new(interior: Array2<T>, boundary: Array2<T>, seed: u64) -> Result<Self> {
        if boundary.nrows() > 0 && boundary.ncols() != interior.ncols() {
            return Err(Error::shape(format!(
                "interior points have dim {}, boundary points dim {}",
                interior.ncols(),
                boundary.ncols()
            )));
        }
        Ok(Self {
            interior,
            boundary,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.interior.ncols()
    }
}

fn check_counts(domain_dim: usize, counts: &[usize]) -> Result<()> {
    if counts.len() != domain_dim {
        return Err(Error::shape(format!(
            "{} grid counts for a {}-dimensional domain",
            counts.len(),
            domain_dim
        )));
    }
    Ok(())
}

fn tensor_grid<T: Real>(axes: &[Vec<T>]) -> Array2<T> {
    let dim = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Array2::zeros((total, dim));
    for row in 0..total {
        // row-major, last axis fastest
        let mut rem = row;
        for axis in (0..dim).rev() {
            let n = axes[axis].len();
            out[[row, axis]] = axes[axis][rem % n];
            rem /= n;
        }
    }
    out
}

/// Tensor-product grid including both endpoints on every axis.
pub fn uniform_grid<T: Real>(domain: &Domain<T>, counts: &[usize]) -> Result<Array2<T>> {
    check_counts(domain.dim(), counts)?;
    if let Some(&c) = counts.iter().find(|&&c| c < 2) {
        return Err(Error::invalid(format!("grid count {c} < 2")));
    }
    let axes: Vec<Vec<T>> = counts
        .iter()
        .enumerate()
        .map(|(axis, &n)| {
            let lo = domain.lo[axis];
            let h = domain.extent(axis) / T::from_usize_lossy(n - 1);
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        domain.hi[axis]
                    } else {
                        lo + h * T::from_usize_lossy(i)
                    }
                })
                .collect()
        })
        .collect();
    Ok(tensor_grid(&axes))
}

/// Tensor-product grid of a periodic box: `counts[i]` equispaced nodes along
/// axis `i` starting at `lo` and excluding the right endpoint.
pub fn periodic_grid<T: Real>(domain: &Domain<T>, counts: &[usize]) -> Result<Array2<T>> {
    check_counts(domain.dim(), counts)?;
    if let Some(&c) = counts.iter().find(|&&c| c < 1) {
        return Err(Error::invalid(format!("periodic grid count {c} < 1")));
    }
    let axes: Vec<Vec<T>> = counts
        .iter()
        .enumerate()
        .map(|(axis, &n)| {
            let h = domain.extent(axis) / T::from_usize_lossy(n);
            (0..n)
                .map(|i| domain.lo[axis] + h * T::from_usize_lossy(i))
                .collect()
        })
        .collect();
    Ok(tensor_grid(&axes))
}

// Offsets within a stratum stay away from the stratum edges so that the
// rounded point never lands in a neighbouring bin.
fn stratum_offset(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(1e-6..1.0 - 1e-6)
}

fn lhs_unit(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let col = strata
            .into_iter()
            .map(|s| (s as f64 + stratum_offset(rng)) / n as f64)
            .collect();
        cols.push(col);
    }
    cols
}

/// Latin hypercube sample of `n` points strictly inside the domain.
///
/// Along every axis each of the `n` equal-width strata holds exactly one point.
pub fn lhs_sample<T: Real>(domain: &Domain<T>, n: usize, seed: u64) -> Result<Array2<T>> {
    if n == 0 {
        return Err(Error::invalid("latin hypercube sample needs n >= 1"));
    }
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = lhs_unit(n, dim, &mut rng);
    let mut out = Array2::zeros((n, dim));
    for axis in 0..dim {
        let lo = domain.lo[axis];
        let w = domain.extent(axis);
        for i in 0..n {
            out[[i, axis]] = lo + w * T::lit(unit[axis][i]);
        }
    }
    Ok(out)
}

/// Points on every face of the box, `n_per_face` per face.
///
/// Faces are emitted axis by axis, low face first. The two faces of one axis
/// share the same latin-hypercube tangential coordinates, so point `j` of the
/// low face and point `j` of the high face are periodic images of each other.
pub fn boundary_sample<T: Real>(
    domain: &Domain<T>,
    n_per_face: usize,
    seed: u64,
) -> Result<Array2<T>> {
    let dim = domain.dim();
    if dim == 0 {
        return Err(Error::invalid("boundary sampling needs dim >= 1"));
    }
    if n_per_face == 0 {
        return Err(Error::invalid("boundary sampling needs n_per_face >= 1"));
    }
    // A 1D face is a single point.
    let per_face = if dim == 1 { 1 } else { n_per_face };
    let mut out = Array2::zeros((2 * dim * per_face, dim));
    let mut row = 0;
    for axis in 0..dim {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(axis as u64));
        let tangential = lhs_unit(per_face, dim.saturating_sub(1), &mut rng);
        for bound in [domain.lo[axis], domain.hi[axis]] {
            for j in 0..per_face {
                let mut t = 0;
                for other in 0..dim {
                    out[[row, other]] = if other == axis {
                        bound
                    } else {
                        let v = domain.lo[other] + domain.extent(other) * T::lit(tangential[t][j]);
                        t += 1;
                        v
                    };
                }
                row += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Domain<f64> {
        Domain::cube(0.0, 1.0, 2).unwrap()
    }

    #[test]
    fn grid_1d_includes_endpoints() {
        let d = Domain::new(vec![-1.0], vec![1.0]).unwrap();
        let g = uniform_grid(&d, &[5]).unwrap();
        let xs: Vec<f64> = g.column(0).to_vec();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_2d_row_major() {
        let g = uniform_grid(&unit_square(), &[2, 2]).unwrap();
        let rows: Vec<(f64, f64)> = g.rows().into_iter().map(|r| (r[0], r[1])).collect();
        assert_eq!(rows, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn grid_4097_spacing_exact() {
        let d = Domain::new(vec![-1.0], vec![1.0]).unwrap();
        let g = uniform_grid(&d, &[4097]).unwrap();
        let h = 2.0 / 4096.0;
        for i in 1..4097 {
            assert_eq!(g[[i, 0]] - g[[i - 1, 0]], h);
        }
    }

    #[test]
    fn grid_rejects_small_counts() {
        let d = Domain::new(vec![-1.0], vec![1.0]).unwrap();
        assert!(matches!(
            uniform_grid(&d, &[1]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn grid_symmetric_domain_closed_under_negation() {
        let d = Domain::<f64>::cube(-1.0, 1.0, 2).unwrap();
        let g = uniform_grid(&d, &[7, 5]).unwrap();
        for r in g.rows() {
            let found = g
                .rows()
                .into_iter()
                .any(|q| (q[0] + r[0]).abs() < 1e-15 && (q[1] + r[1]).abs() < 1e-15);
            assert!(found, "negation of {r:?} missing");
        }
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(vec![1.0], vec![1.0]).is_err());
        assert!(Domain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Domain::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn lhs_small_stratification() {
        let pts = lhs_sample(&unit_square(), 4, 11).unwrap();
        for axis in 0..2 {
            let mut bins = [0usize; 4];
            for i in 0..4 {
                bins[(pts[[i, axis]] * 4.0).floor() as usize] += 1;
            }
            assert_eq!(bins, [1, 1, 1, 1]);
        }
    }

    #[test]
    fn lhs_deterministic() {
        let d = unit_square();
        let a = lhs_sample(&d, 50, 3).unwrap();
        let b = lhs_sample(&d, 50, 3).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = lhs_sample(&d, 50, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lhs_thousand_points_inside() {
        let d = Domain::new(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap();
        let pts = lhs_sample(&d, 1000, 0).unwrap();
        assert_eq!(pts.nrows(), 1000);
        for r in pts.rows() {
            assert!(d.contains_strictly(r.as_slice().unwrap()));
        }
    }

    #[test]
    fn boundary_1d_is_the_two_endpoints() {
        let d = Domain::new(vec![-1.0], vec![1.0]).unwrap();
        let b = boundary_sample(&d, 1, 0).unwrap();
        assert_eq!(b.column(0).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn boundary_2d_counts_and_on_faces() {
        let d = unit_square();
        let b = boundary_sample(&d, 10, 5).unwrap();
        assert_eq!(b.nrows(), 40);
        for r in b.rows() {
            assert_eq!(d.boundary_distance(r.as_slice().unwrap()), 0.0);
        }
        // opposite faces are periodic images
        for j in 0..10 {
            assert_eq!(b[[j, 1]], b[[10 + j, 1]]);
            assert_eq!(b[[j, 0]], 0.0);
            assert_eq!(b[[10 + j, 0]], 1.0);
        }
    }

    #[test]
    fn boundary_rejects_zero() {
        assert!(boundary_sample(&unit_square(), 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn lhs_stratified_for_any_seed(seed in any::<u64>(), n in 1usize..60, dim in 1usize..4) {
            let d = Domain::cube(-2.0, 3.0, dim).unwrap();
            let pts = lhs_sample(&d, n, seed).unwrap();
            for axis in 0..dim {
                let mut bins = vec![0usize; n];
                for i in 0..n {
                    let u = (pts[[i, axis]] + 2.0) / 5.0;
                    bins[((u * n as f64).floor() as usize).min(n - 1)] += 1;
                }
                prop_assert!(bins.iter().all(|&c| c == 1));
            }
        }
    }
}
