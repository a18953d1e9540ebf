//! Pointwise fields together with their spatial derivatives.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Values `u` (N x d), first derivatives `du[i] = ∂u/∂x_i` and pure second
/// derivatives `d2u[i] = ∂²u/∂x_i²`, all sampled at the same N points.
///
/// Either derivative list may be empty when the producer was asked for a
/// lower order.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldWithDerivs<T: Real> {
    pub u: Array2<T>,
    pub du: Vec<Array2<T>>,
    pub d2u: Vec<Array2<T>>,
}

impl<T: Real> FieldWithDerivs<T> {
    pub fn new(u: Array2<T>, du: Vec<Array2<T>>, d2u: Vec<Array2<T>>) -> Result<Self> {
        let shape = u.dim();
        if du.iter().chain(d2u.iter()).any(|a| a.dim() != shape) {
            return Err(Error::shape(format!(
                "derivative arrays must match value shape {shape:?}"
            )));
        }
        if !d2u.is_empty() && du.len() != d2u.len() {
            return Err(Error::shape("first and second derivative dims differ"));
        }
        Ok(Self { u, du, d2u })
    }

    /// Values only.
    pub fn values(u: Array2<T>) -> Self {
        Self {
            u,
            du: Vec::new(),
            d2u: Vec::new(),
        }
    }

    /// All-zero field with derivatives up to `order` in `dim` spatial dims.
    pub fn zeros(n: usize, out_dim: usize, dim: usize, order: usize) -> Self {
        let z = || Array2::zeros((n, out_dim));
        Self {
            u: z(),
            du: if order >= 1 { (0..dim).map(|_| z()).collect() } else { Vec::new() },
            d2u: if order >= 2 { (0..dim).map(|_| z()).collect() } else { Vec::new() },
        }
    }

    pub fn npoints(&self) -> usize {
        self.u.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.u.ncols()
    }

    /// Highest derivative order carried.
    pub fn order(&self) -> usize {
        if !self.d2u.is_empty() {
            2
        } else if !self.du.is_empty() {
            1
        } else {
            0
        }
    }

    pub fn require_order(&self, order: usize, dim: usize) -> Result<()> {
        let ok = match order {
            0 => true,
            1 => self.du.len() == dim,
            _ => self.du.len() == dim && self.d2u.len() == dim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "operator needs derivatives up to order {order} in {dim} dims, field carries order {} in {} dims",
                self.order(),
                self.du.len()
            )))
        }
    }

    /// Sum of the pure second derivatives.
    pub fn laplacian(&self) -> Array2<T> {
        let mut lap = Array2::zeros(self.u.dim());
        for d in &self.d2u {
            lap += d;
        }
        lap
    }

    pub fn is_finite(&self) -> bool {
        self.u
            .iter()
            .chain(self.du.iter().flat_map(|a| a.iter()))
            .chain(self.d2u.iter().flat_map(|a| a.iter()))
            .all(|v| v.is_finite())
    }

    /// `Σ w_j f_j` over fields with identical layout.
    pub fn combine(terms: &[(T, &FieldWithDerivs<T>)]) -> Result<Self> {
        let (w0, first) = terms
            .first()
            .ok_or_else(|| Error::invalid("empty field combination"))?;
        let mut out = first.scaled(*w0);
        for &(w, f) in &terms[1..] {
            out.axpy(w, f)?;
        }
        Ok(out)
    }

    pub fn scaled(&self, w: T) -> Self {
        Self {
            u: self.u.mapv(|v| v * w),
            du: self.du.iter().map(|a| a.mapv(|v| v * w)).collect(),
            d2u: self.d2u.iter().map(|a| a.mapv(|v| v * w)).collect(),
        }
    }

    /// `self += w * other`, truncating to the lower derivative order of the two.
    pub fn axpy(&mut self, w: T, other: &FieldWithDerivs<T>) -> Result<()> {
        if self.u.dim() != other.u.dim() {
            return Err(Error::shape(format!(
                "field shapes {:?} and {:?}",
                self.u.dim(),
                other.u.dim()
            )));
        }
        fn acc<T: Real>(a: &mut Array2<T>, w: T, b: &Array2<T>) {
            Zip::from(a).and(b).for_each(|x, &y| *x += w * y);
        }
        acc(&mut self.u, w, &other.u);
        self.du.truncate(other.du.len());
        for (a, b) in self.du.iter_mut().zip(&other.du) {
            acc(a, w, b);
        }
        self.d2u.truncate(other.d2u.len());
        for (a, b) in self.d2u.iter_mut().zip(&other.d2u) {
            acc(a, w, b);
        }
        Ok(())
    }
}
