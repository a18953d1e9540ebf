//! Weighted linear least squares for the output-layer coefficients.
//!
//! Rows are scaled so that `‖Aθ - b‖²` equals
//! `mean_interior r² + λ_bc · mean_boundary r² + λ ‖θ‖²`.
//! The factorisation is a Householder QR with column pivoting; numerically
//! rank-deficient systems get the minimum-norm solution through a complete
//! orthogonal decomposition.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_RIDGE: f64 = 1e-20;
pub const DEFAULT_BC_WEIGHT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsqWeights<T: Real> {
    /// Tikhonov weight λ.
    pub ridge: T,
    /// Boundary weight λ_bc.
    pub bc_weight: T,
}

impl<T: Real> Default for LsqWeights<T> {
    fn default() -> Self {
        Self {
            ridge: T::lit(DEFAULT_RIDGE),
            bc_weight: T::lit(DEFAULT_BC_WEIGHT),
        }
    }
}

/// Scaled, stacked design matrix `[interior; boundary; ridge]`.
#[derive(Clone, Debug)]
pub struct LsqSystem<T: Real> {
    matrix: Array2<T>,
    n_interior: usize,
    n_boundary: usize,
    interior_scale: T,
    boundary_scale: T,
}

impl<T: Real> LsqSystem<T> {
    pub fn assemble(
        interior: ArrayView2<T>,
        boundary: Option<ArrayView2<T>>,
        weights: &LsqWeights<T>,
    ) -> Result<Self> {
        let (n_int, cols) = interior.dim();
        if n_int == 0 || cols == 0 {
            return Err(Error::invalid("empty interior design block"));
        }
        if weights.ridge < T::zero() || weights.bc_weight < T::zero() {
            return Err(Error::invalid("least-squares weights must be non-negative"));
        }
        let n_bnd = match &boundary {
            Some(b) if b.ncols() != cols => {
                return Err(Error::shape(format!(
                    "boundary block has {} columns, interior {cols}",
                    b.ncols()
                )))
            }
            Some(b) => b.nrows(),
            None => 0,
        };
        if !interior.iter().all(|v| v.is_finite())
            || boundary
                .as_ref()
                .is_some_and(|b| !b.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("design matrix".into()));
        }
        let interior_scale = (T::one() / T::from_usize_lossy(n_int)).sqrt();
        let boundary_scale = if n_bnd > 0 {
            (weights.bc_weight / T::from_usize_lossy(n_bnd)).sqrt()
        } else {
            T::zero()
        };
        let n_ridge = if weights.ridge > T::zero() { cols } else { 0 };
        let mut matrix = Array2::zeros((n_int + n_bnd + n_ridge, cols));
        matrix
            .slice_mut(s![..n_int, ..])
            .assign(&interior.mapv(|v| v * interior_scale));
        if let Some(b) = boundary {
            matrix
                .slice_mut(s![n_int..n_int + n_bnd, ..])
                .assign(&b.mapv(|v| v * boundary_scale));
        }
        let rs = weights.ridge.sqrt();
        for j in 0..n_ridge {
            matrix[[n_int + n_bnd + j, j]] = rs;
        }
        Ok(Self {
            matrix,
            n_interior: n_int,
            n_boundary: n_bnd,
            interior_scale,
            boundary_scale,
        })
    }

    /// Right-hand side with the same row scaling; ridge rows are zero.
    pub fn stack_rhs(
        &self,
        interior: ArrayView2<T>,
        boundary: Option<ArrayView2<T>>,
    ) -> Result<Array2<T>> {
        if interior.nrows() != self.n_interior {
            return Err(Error::shape(format!(
                "interior rhs has {} rows, system {}",
                interior.nrows(),
                self.n_interior
            )));
        }
        let d = interior.ncols();
        let n_b = boundary.as_ref().map_or(0, |b| b.nrows());
        if n_b != self.n_boundary || boundary.as_ref().is_some_and(|b| b.ncols() != d) {
            return Err(Error::shape(format!(
                "boundary rhs has {n_b} rows, system {}",
                self.n_boundary
            )));
        }
        let mut rhs = Array2::zeros((self.matrix.nrows(), d));
        rhs.slice_mut(s![..self.n_interior, ..])
            .assign(&interior.mapv(|v| v * self.interior_scale));
        if let Some(b) = boundary {
            rhs.slice_mut(s![self.n_interior..self.n_interior + n_b, ..])
                .assign(&b.mapv(|v| v * self.boundary_scale));
        }
        Ok(rhs)
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    pub fn factor(&self) -> Result<QrFactor<T>> {
        QrFactor::new(self.matrix.view())
    }

    /// Hash of the matrix bit patterns; equal systems hash equally.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(self.matrix.view())
    }
}

pub fn fingerprint<T: Real>(a: ArrayView2<T>) -> u64 {
    let mut h = DefaultHasher::new();
    a.dim().hash(&mut h);
    for v in a.iter() {
        v.as_f64().to_bits().hash(&mut h);
    }
    h.finish()
}

/// Column-pivoted Householder factorisation `A P = Q R`, stored LAPACK style
/// in column-major order (reflectors below the diagonal).
#[derive(Clone, Debug)]
pub struct QrFactor<T: Real> {
    m: usize,
    n: usize,
    qr: Vec<T>,
    tau: Vec<T>,
    perm: Vec<usize>,
    rank: usize,
    /// Factorisation of `R[..rank, ..]ᵀ` (n x rank) when rank < n.
    cod: Option<(Vec<T>, Vec<T>)>,
}

#[derive(Clone, Debug)]
pub struct LsqSolution<T: Real> {
    /// n x d
    pub theta: Array2<T>,
    /// `‖Aθ - b‖` over all columns.
    pub residual: T,
    pub rank: usize,
}

/// Builds an elementary reflector for `x` (in place): on return `x[0] = β`,
/// `x[1..]` holds `v[1..]` with `v[0] = 1`, and τ is returned.
fn householder<T: Real>(x: &mut [T]) -> T {
    let alpha = x[0];
    let tail = x[1..].iter().fold(T::zero(), |acc, &v| acc + v * v);
    if tail == T::zero() {
        return T::zero();
    }
    let norm = (alpha * alpha + tail).sqrt();
    let beta = if alpha >= T::zero() { -norm } else { norm };
    let scale = T::one() / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (beta - alpha) / beta
}

/// `y -= τ v (vᵀ y)` with `v[0] = 1` implied.
#[inline]
fn apply_reflector<T: Real>(v_tail: &[T], tau: T, y: &mut [T]) {
    let mut dot = y[0];
    for (a, b) in v_tail.iter().zip(&y[1..]) {
        dot += *a * *b;
    }
    let f = tau * dot;
    if f == T::zero() {
        return;
    }
    y[0] -= f;
    for (a, b) in v_tail.iter().zip(&mut y[1..]) {
        *b -= f * *a;
    }
}

fn col_norm<T: Real>(c: &[T]) -> T {
    c.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

/// Unpivoted Householder QR of a column-major m x n block.
fn qr_unpivoted<T: Real>(a: &mut [T], m: usize, n: usize) -> Vec<T> {
    let mut tau = vec![T::zero(); n.min(m)];
    for k in 0..n.min(m) {
        let (head, rest) = a.split_at_mut((k + 1) * m);
        let col = &mut head[k * m + k..(k + 1) * m];
        tau[k] = householder(col);
        let v_tail = &col[1..];
        for j in 0..n - k - 1 {
            let y = &mut rest[j * m + k..(j + 1) * m];
            apply_reflector(v_tail, tau[k], y);
        }
    }
    tau
}

impl<T: Real> QrFactor<T> {
    pub fn new(a: ArrayView2<T>) -> Result<Self> {
        let (m, n) = a.dim();
        if m == 0 || n == 0 {
            return Err(Error::invalid("empty matrix"));
        }
        if m < n {
            return Err(Error::shape(format!(
                "underdetermined system {m} x {n}; add ridge rows"
            )));
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix passed to QR".into()));
        }
        let mut qr = vec![T::zero(); m * n];
        for j in 0..n {
            for i in 0..m {
                qr[j * m + i] = a[[i, j]];
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut vn1: Vec<T> = (0..n).map(|j| col_norm(&qr[j * m..(j + 1) * m])).collect();
        let mut vn2 = vn1.clone();
        let mut tau = vec![T::zero(); n];
        let tol3z = T::epsilon().sqrt();

        for k in 0..n {
            // pivot: largest remaining column norm
            let p = (k..n)
                .max_by(|&i, &j| vn1[i].partial_cmp(&vn1[j]).unwrap())
                .unwrap();
            if p != k {
                for i in 0..m {
                    qr.swap(p * m + i, k * m + i);
                }
                perm.swap(p, k);
                vn1.swap(p, k);
                vn2.swap(p, k);
            }
            let (head, rest) = qr.split_at_mut((k + 1) * m);
            let col = &mut head[k * m + k..(k + 1) * m];
            tau[k] = householder(col);
            let v_tail = &col[1..];
            for jj in 0..n - k - 1 {
                let j = k + 1 + jj;
                let y = &mut rest[jj * m + k..(jj + 1) * m];
                apply_reflector(v_tail, tau[k], y);
                if vn1[j] != T::zero() {
                    let r = y[0].abs() / vn1[j];
                    let temp = (T::one() - r * r).max(T::zero());
                    let ratio = vn1[j] / vn2[j];
                    if temp * ratio * ratio <= tol3z {
                        vn1[j] = col_norm(&y[1..]);
                        vn2[j] = vn1[j];
                    } else {
                        vn1[j] *= temp.sqrt();
                    }
                }
            }
        }

        let r00 = qr[0].abs();
        let tol = T::epsilon() * T::from_usize_lossy(m.max(n)) * r00;
        let rank = (0..n).take_while(|&k| qr[k * m + k].abs() > tol).count();
        if rank == 0 {
            return Err(Error::RankDeficient { rank: 0, cols: n });
        }
        let cod = (rank < n).then(|| {
            // Rᵀ block: n x rank, column-major
            let mut rt = vec![T::zero(); n * rank];
            for i in 0..rank {
                for j in i..n {
                    rt[i * n + j] = qr[j * m + i];
                }
            }
            let t2 = qr_unpivoted(&mut rt, n, rank);
            (rt, t2)
        });
        Ok(Self {
            m,
            n,
            qr,
            tau,
            perm,
            rank,
            cod,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    /// Absolute diagonal of R (non-increasing up to rounding).
    pub fn r_diagonal(&self) -> Vec<T> {
        (0..self.n).map(|k| self.qr[k * self.m + k].abs()).collect()
    }

    pub fn solve(&self, rhs: &Array2<T>) -> Result<LsqSolution<T>> {
        let (m, n, r) = (self.m, self.n, self.rank);
        if rhs.nrows() != m {
            return Err(Error::shape(format!(
                "rhs has {} rows, matrix {m}",
                rhs.nrows()
            )));
        }
        if !rhs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("least-squares rhs".into()));
        }
        let d = rhs.ncols();
        let mut theta = Array2::zeros((n, d));
        let mut res2 = T::zero();
        let mut b = vec![T::zero(); m];
        let mut x = vec![T::zero(); n];
        for c in 0..d {
            for i in 0..m {
                b[i] = rhs[[i, c]];
            }
            for k in 0..n {
                let v_tail = &self.qr[k * m + k + 1..(k + 1) * m];
                apply_reflector(v_tail, self.tau[k], &mut b[k..]);
            }
            res2 += b[r..].iter().fold(T::zero(), |acc, &v| acc + v * v);
            x.iter_mut().for_each(|v| *v = T::zero());
            match &self.cod {
                None => {
                    for i in (0..n).rev() {
                        let mut s = b[i];
                        for j in i + 1..n {
                            s -= self.qr[j * m + i] * x[j];
                        }
                        x[i] = s / self.qr[i * m + i];
                    }
                }
                Some((rt, t2)) => {
                    // R1 = L2ᵀ... with R1ᵀ = Q2 R2: solve R2ᵀ y = c, x = Q2 [y; 0]
                    for i in 0..r {
                        let mut s = b[i];
                        for j in 0..i {
                            s -= rt[i * n + j] * x[j];
                        }
                        x[i] = s / rt[i * n + i];
                    }
                    for k in (0..r).rev() {
                        let v_tail = &rt[k * n + k + 1..(k + 1) * n];
                        apply_reflector(v_tail, t2[k], &mut x[k..]);
                    }
                }
            }
            for (k, &p) in self.perm.iter().enumerate() {
                theta[[p, c]] = x[k];
            }
        }
        Ok(LsqSolution {
            theta,
            residual: res2.sqrt(),
            rank: r,
        })
    }
}

/// One-shot solve of `min ‖A x - b‖`.
pub fn lstsq<T: Real>(a: ArrayView2<T>, b: &Array2<T>) -> Result<LsqSolution<T>> {
    QrFactor::new(a)?.solve(b)
}

/// Root-mean-square misfit of `design · θ` against `target` on the interior.
pub fn fit_residual<T: Real>(design: &Array2<T>, theta: &Array2<T>, target: &Array2<T>) -> T {
    let diff = design.dot(theta) - target;
    let n = T::from_usize_lossy(diff.len().max(1));
    (diff.iter().fold(T::zero(), |acc, &v| acc + v * v) / n).sqrt()
}
