//! Benchmark PDEs written as `u_t = F(u)`, with initial data, closed-form
//! solutions where they exist, boundary data and error metrics.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldWithDerivs;
use crate::geometry::Domain;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "advection1d")]
    Advection1d,
    #[serde(rename = "burgers1d")]
    Burgers1d,
    #[serde(rename = "ac1d-wave")]
    Ac1dWave,
    #[serde(rename = "ac1d-scaled")]
    Ac1dScaled,
    #[serde(rename = "ac2d")]
    Ac2d,
    #[serde(rename = "ns2d")]
    Ns2d,
    /// `u_t = ν u_xx` on the periodic interval; handy for sanity runs.
    #[serde(rename = "heat1d")]
    Heat1d,
}

impl Benchmark {
    pub const ALL: [Benchmark; 7] = [
        Benchmark::Advection1d,
        Benchmark::Burgers1d,
        Benchmark::Ac1dWave,
        Benchmark::Ac1dScaled,
        Benchmark::Ac2d,
        Benchmark::Ns2d,
        Benchmark::Heat1d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Advection1d => "advection1d",
            Benchmark::Burgers1d => "burgers1d",
            Benchmark::Ac1dWave => "ac1d-wave",
            Benchmark::Ac1dScaled => "ac1d-scaled",
            Benchmark::Ac2d => "ac2d",
            Benchmark::Ns2d => "ns2d",
            Benchmark::Heat1d => "heat1d",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|b| b.name()).collect();
                Error::invalid(format!("unknown problem `{s}` (expected one of {names:?})"))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    /// Built into the ansatz through a periodic feature layer; no rows.
    PeriodicHard,
    /// Value and normal-derivative matching rows between opposite faces.
    PeriodicSoft,
    /// Prescribed boundary values as weighted rows.
    DirichletSoft,
    /// Zero velocity on the boundary as weighted rows.
    NoslipSoft,
}

impl BoundaryKind {
    pub fn is_periodic(self) -> bool {
        matches!(self, BoundaryKind::PeriodicHard | BoundaryKind::PeriodicSoft)
    }

    pub fn has_rows(self) -> bool {
        self != BoundaryKind::PeriodicHard
    }
}

/// A derivative term in a linear operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Value,
    D1(usize),
    D2(usize),
}

/// `L u = Σ c_i · term_i(u)`, applied componentwise.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator<T: Real> {
    pub terms: Vec<(T, Term)>,
}

impl<T: Real> LinearOperator<T> {
    pub fn order(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, t)| match t {
                Term::Value => 0,
                Term::D1(_) => 1,
                Term::D2(_) => 2,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn apply(&self, f: &FieldWithDerivs<T>) -> Result<Array2<T>> {
        let mut out = Array2::zeros(f.u.dim());
        for &(c, term) in &self.terms {
            let src = match term {
                Term::Value => &f.u,
                Term::D1(i) => f
                    .du
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("missing first derivative {i}")))?,
                Term::D2(i) => f
                    .d2u
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("missing second derivative {i}")))?,
            };
            out.scaled_add(c, src);
        }
        Ok(out)
    }
}

/// Extra inputs some operators need beyond the field itself.
#[derive(Clone, Copy, Debug)]
pub struct OperatorInputs<'a, T: Real> {
    pub points: &'a Array2<T>,
    pub t: T,
    /// `[p_x, p_y]`, each N x 1; required by the momentum operator.
    pub pressure_grad: Option<&'a [Array2<T>]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PdeProblem<T: Real> {
    pub benchmark: Benchmark,
    pub domain: Domain<T>,
    pub out_dim: usize,
    /// Viscosity / diffusivity ν.
    pub nu: T,
    /// Interface width ε.
    pub epsilon: T,
    /// Advection wave number k in `sin(kπ(x - t))`.
    pub wave_number: T,
    pub boundary: BoundaryKind,
}

impl<T: Real> PdeProblem<T> {
    pub fn new(benchmark: Benchmark) -> Self {
        let line = || Domain::cube(-T::one(), T::one(), 1).expect("valid interval");
        let zero = T::zero();
        let base = |domain, out_dim, boundary| Self {
            benchmark,
            domain,
            out_dim,
            nu: zero,
            epsilon: zero,
            wave_number: zero,
            boundary,
        };
        match benchmark {
            Benchmark::Advection1d => Self {
                wave_number: T::lit(5.0),
                ..base(line(), 1, BoundaryKind::PeriodicHard)
            },
            Benchmark::Burgers1d => Self {
                nu: T::lit(0.01) / T::PI(),
                ..base(line(), 1, BoundaryKind::PeriodicHard)
            },
            Benchmark::Ac1dWave => Self {
                epsilon: T::lit(0.01),
                ..base(line(), 1, BoundaryKind::DirichletSoft)
            },
            Benchmark::Ac1dScaled => Self {
                epsilon: T::lit(0.01),
                ..base(line(), 1, BoundaryKind::PeriodicHard)
            },
            Benchmark::Ac2d => Self {
                epsilon: T::lit(0.1),
                ..base(
                    Domain::cube(-T::one(), T::one(), 2).expect("valid square"),
                    1,
                    BoundaryKind::PeriodicHard,
                )
            },
            Benchmark::Ns2d => Self {
                nu: T::one(),
                ..base(
                    Domain::cube(T::zero(), T::one(), 2).expect("valid square"),
                    2,
                    BoundaryKind::NoslipSoft,
                )
            },
            Benchmark::Heat1d => Self {
                nu: T::lit(0.1),
                ..base(line(), 1, BoundaryKind::PeriodicHard)
            },
        }
    }

    pub fn name(&self) -> &'static str {
        self.benchmark.name()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Highest spatial derivative order `F` consumes.
    pub fn required_order(&self) -> usize {
        match self.benchmark {
            Benchmark::Advection1d => 1,
            _ => 2,
        }
    }

    /// `F` when it is linear in `u` and its derivatives.
    pub fn linear_part(&self) -> Option<LinearOperator<T>> {
        match self.benchmark {
            Benchmark::Advection1d => Some(LinearOperator {
                terms: vec![(-T::one(), Term::D1(0))],
            }),
            Benchmark::Heat1d => Some(LinearOperator {
                terms: vec![(self.nu, Term::D2(0))],
            }),
            _ => None,
        }
    }

    /// Pointwise `F(u)`, N x d.
    pub fn apply_operator(
        &self,
        f: &FieldWithDerivs<T>,
        inputs: &OperatorInputs<'_, T>,
    ) -> Result<Array2<T>> {
        if f.out_dim() != self.out_dim {
            return Err(Error::shape(format!(
                "{} expects {} components, field has {}",
                self.name(),
                self.out_dim,
                f.out_dim()
            )));
        }
        f.require_order(self.required_order(), self.dim())?;
        let eps2 = self.epsilon * self.epsilon;
        let five = T::lit(5.0);
        let out = match self.benchmark {
            Benchmark::Advection1d | Benchmark::Heat1d => {
                self.linear_part().expect("linear benchmark").apply(f)?
            }
            Benchmark::Burgers1d => {
                let mut out = f.d2u[0].mapv(|v| v * self.nu);
                Zip::from(&mut out)
                    .and(&f.u)
                    .and(&f.du[0])
                    .for_each(|o, &u, &ux| *o -= u * ux);
                out
            }
            Benchmark::Ac1dWave | Benchmark::Ac2d => {
                let mut out = f.laplacian().mapv(|v| v * eps2);
                Zip::from(&mut out)
                    .and(&f.u)
                    .for_each(|o, &u| *o += u - u * u * u);
                out
            }
            Benchmark::Ac1dScaled => {
                let mut out = f.d2u[0].mapv(|v| v * eps2);
                Zip::from(&mut out)
                    .and(&f.u)
                    .for_each(|o, &u| *o += five * (u - u * u * u));
                out
            }
            Benchmark::Ns2d => {
                let grad_p = inputs.pressure_grad.ok_or_else(|| {
                    Error::invalid("momentum operator needs the pressure gradient")
                })?;
                if grad_p.len() != 2 || grad_p.iter().any(|g| g.nrows() != f.npoints()) {
                    return Err(Error::shape("pressure gradient must be two N x 1 arrays"));
                }
                let forcing = ns_forcing(inputs.points, inputs.t, self.nu);
                let lap = f.laplacian();
                let n = f.npoints();
                let mut out = Array2::zeros((n, 2));
                for i in 0..n {
                    let (u1, u2) = (f.u[[i, 0]], f.u[[i, 1]]);
                    for c in 0..2 {
                        let conv = u1 * f.du[0][[i, c]] + u2 * f.du[1][[i, c]];
                        out[[i, c]] =
                            -conv + self.nu * lap[[i, c]] - grad_p[c][[i, 0]] + forcing[[i, c]];
                    }
                }
                out
            }
        };
        Ok(out)
    }

    pub fn initial_condition(&self, points: &Array2<T>) -> Result<Array2<T>> {
        self.check_points(points)?;
        let pi = T::PI();
        let col = |g: &dyn Fn(ArrayView1<T>) -> T| -> Array2<T> {
            let v: Array1<T> = points.rows().into_iter().map(g).collect();
            v.insert_axis(ndarray::Axis(1))
        };
        Ok(match self.benchmark {
            Benchmark::Burgers1d => col(&|p| -(pi * p[0]).sin()),
            Benchmark::Ac1dScaled => col(&|p| p[0] * p[0] * (pi * p[0]).cos()),
            Benchmark::Ac2d => col(&|p| T::lit(0.05) * (pi * p[0]).sin() * (pi * p[1]).sin()),
            _ => self.exact_solution(points, T::zero())?,
        })
    }

    /// Closed-form solution, or `NotAvailable` when a reference solver is needed.
    pub fn exact_solution(&self, points: &Array2<T>, t: T) -> Result<Array2<T>> {
        self.check_points(points)?;
        let pi = T::PI();
        let col = |g: &dyn Fn(ArrayView1<T>) -> T| -> Array2<T> {
            let v: Array1<T> = points.rows().into_iter().map(g).collect();
            v.insert_axis(ndarray::Axis(1))
        };
        match self.benchmark {
            Benchmark::Advection1d => {
                let k = self.wave_number;
                Ok(col(&|p| (k * pi * (p[0] - t)).sin()))
            }
            Benchmark::Heat1d => {
                let decay = (-self.nu * pi * pi * t).exp();
                Ok(col(&|p| decay * (pi * p[0]).sin()))
            }
            Benchmark::Ac1dWave => {
                let eps = self.epsilon;
                let s = T::lit(3.0) * eps / T::lit(2.0).sqrt();
                let w = T::lit(2.0) * T::lit(2.0).sqrt() * eps;
                Ok(col(&|p| T::lit(0.5) * (T::one() - ((p[0] - s * t) / w).tanh())))
            }
            Benchmark::Ns2d => Ok(ns_exact_velocity(points, t)),
            Benchmark::Burgers1d | Benchmark::Ac1dScaled | Benchmark::Ac2d => {
                Err(Error::NotAvailable(self.name().into()))
            }
        }
    }

    pub fn has_exact_solution(&self) -> bool {
        !matches!(
            self.benchmark,
            Benchmark::Burgers1d | Benchmark::Ac1dScaled | Benchmark::Ac2d
        )
    }

    /// Prescribed values at boundary points for soft Dirichlet-type rows.
    pub fn boundary_values(&self, points: &Array2<T>, t: T) -> Result<Array2<T>> {
        self.check_points(points)?;
        match self.benchmark {
            Benchmark::Ac1dWave => {
                let mid = self.domain.center()[0];
                Ok(Array2::from_shape_fn((points.nrows(), 1), |(i, _)| {
                    if points[[i, 0]] < mid {
                        T::one()
                    } else {
                        T::zero()
                    }
                }))
            }
            Benchmark::Ns2d => Ok(Array2::zeros((points.nrows(), 2))),
            _ if self.has_exact_solution() => self.exact_solution(points, t),
            _ => Err(Error::Unsupported(format!(
                "no Dirichlet data for {}",
                self.name()
            ))),
        }
    }

    fn check_points(&self, points: &Array2<T>) -> Result<()> {
        if points.ncols() != self.dim() {
            return Err(Error::shape(format!(
                "{} is {}-dimensional, points have {} columns",
                self.name(),
                self.dim(),
                points.ncols()
            )));
        }
        Ok(())
    }
}

// -- Navier-Stokes closed forms ---------------------------------------------
//
// u1 =  sin(2πy) sin²(πx) sin t
// u2 = -sin(2πx) sin²(πy) sin t
// p  =  cos(πx) sin(πy) sin(y)

/// sin²(πs) and its first three derivatives.
fn sq<T: Real>(s: T) -> [T; 4] {
    let pi = T::PI();
    let two = T::lit(2.0);
    let a = (pi * s).sin();
    [
        a * a,
        pi * (two * pi * s).sin(),
        two * pi * pi * (two * pi * s).cos(),
        -T::lit(4.0) * pi * pi * pi * (two * pi * s).sin(),
    ]
}

/// sin(2πs) and its first three derivatives.
fn dbl<T: Real>(s: T) -> [T; 4] {
    let tp = T::lit(2.0) * T::PI();
    [
        (tp * s).sin(),
        tp * (tp * s).cos(),
        -tp * tp * (tp * s).sin(),
        -tp * tp * tp * (tp * s).cos(),
    ]
}

/// sin(πy) sin(y) and its first two derivatives.
fn pres_y<T: Real>(y: T) -> [T; 3] {
    let pi = T::PI();
    let (sp, cp) = ((pi * y).sin(), (pi * y).cos());
    let (s, c) = (y.sin(), y.cos());
    [
        sp * s,
        pi * cp * s + sp * c,
        -pi * pi * sp * s + T::lit(2.0) * pi * cp * c - sp * s,
    ]
}

pub fn ns_exact_velocity<T: Real>(points: &Array2<T>, t: T) -> Array2<T> {
    let st = t.sin();
    let mut out = Array2::zeros((points.nrows(), 2));
    for (i, p) in points.rows().into_iter().enumerate() {
        let (x, y) = (p[0], p[1]);
        out[[i, 0]] = dbl(y)[0] * sq(x)[0] * st;
        out[[i, 1]] = -dbl(x)[0] * sq(y)[0] * st;
    }
    out
}

pub fn ns_exact_pressure<T: Real>(points: &Array2<T>, _t: T) -> Array2<T> {
    let pi = T::PI();
    Array2::from_shape_fn((points.nrows(), 1), |(i, _)| {
        (pi * points[[i, 0]]).cos() * pres_y(points[[i, 1]])[0]
    })
}

/// Exact pressure gradient `[p_x, p_y]`, each N x 1.
pub fn ns_exact_pressure_grad<T: Real>(points: &Array2<T>, _t: T) -> [Array2<T>; 2] {
    let pi = T::PI();
    let n = points.nrows();
    let mut px = Array2::zeros((n, 1));
    let mut py = Array2::zeros((n, 1));
    for (i, p) in points.rows().into_iter().enumerate() {
        let g = pres_y(p[1]);
        px[[i, 0]] = -pi * (pi * p[0]).sin() * g[0];
        py[[i, 0]] = (pi * p[0]).cos() * g[1];
    }
    [px, py]
}

/// Velocity field of the closed-form solution with derivatives to order 2.
pub fn ns_exact_field<T: Real>(points: &Array2<T>, t: T) -> FieldWithDerivs<T> {
    let st = t.sin();
    let n = points.nrows();
    let mut f = FieldWithDerivs::zeros(n, 2, 2, 2);
    for (i, p) in points.rows().into_iter().enumerate() {
        let (ax, bx, ay, by) = (sq(p[0]), dbl(p[0]), sq(p[1]), dbl(p[1]));
        f.u[[i, 0]] = by[0] * ax[0] * st;
        f.u[[i, 1]] = -bx[0] * ay[0] * st;
        f.du[0][[i, 0]] = by[0] * ax[1] * st;
        f.du[1][[i, 0]] = by[1] * ax[0] * st;
        f.du[0][[i, 1]] = -bx[1] * ay[0] * st;
        f.du[1][[i, 1]] = -bx[0] * ay[1] * st;
        f.d2u[0][[i, 0]] = by[0] * ax[2] * st;
        f.d2u[1][[i, 0]] = by[2] * ax[0] * st;
        f.d2u[0][[i, 1]] = -bx[2] * ay[0] * st;
        f.d2u[1][[i, 1]] = -bx[0] * ay[2] * st;
    }
    f
}

/// Body force `f = u_t + (u·∇)u - νΔu + ∇p` for the closed-form solution.
pub fn ns_forcing<T: Real>(points: &Array2<T>, t: T, nu: T) -> Array2<T> {
    let field = ns_exact_field(points, t);
    let [px, py] = ns_exact_pressure_grad(points, t);
    let ratio = if t.sin() == T::zero() { T::zero() } else { t.cos() / t.sin() };
    let n = points.nrows();
    let mut out = Array2::zeros((n, 2));
    for (i, p) in points.rows().into_iter().enumerate() {
        let (u1, u2) = (field.u[[i, 0]], field.u[[i, 1]]);
        // u_t = u cos t / sin t, except at sin t = 0 where the profile is used
        let ut = if ratio == T::zero() {
            let ct = t.cos();
            [
                dbl(p[1])[0] * sq(p[0])[0] * ct,
                -dbl(p[0])[0] * sq(p[1])[0] * ct,
            ]
        } else {
            [u1 * ratio, u2 * ratio]
        };
        let grad = [px[[i, 0]], py[[i, 0]]];
        for c in 0..2 {
            let conv = u1 * field.du[0][[i, c]] + u2 * field.du[1][[i, c]];
            let lap = field.d2u[0][[i, c]] + field.d2u[1][[i, c]];
            out[[i, c]] = ut[c] + conv - nu * lap + grad[c];
        }
    }
    out
}

/// `∇·f` for the closed-form forcing, by direct differentiation.
pub fn ns_forcing_divergence<T: Real>(points: &Array2<T>, t: T, nu: T) -> Array1<T> {
    let (st, ct) = (t.sin(), t.cos());
    let pi = T::PI();
    points
        .rows()
        .into_iter()
        .map(|p| {
            let (x, y) = (p[0], p[1]);
            let (ax, bx, ay, by) = (sq(x), dbl(x), sq(y), dbl(y));
            let g = pres_y(y);
            // velocity and derivatives (spatial profile times sin t)
            let u1 = by[0] * ax[0] * st;
            let u2 = -bx[0] * ay[0] * st;
            let u1x = by[0] * ax[1] * st;
            let u1y = by[1] * ax[0] * st;
            let u2x = -bx[1] * ay[0] * st;
            let u2y = -bx[0] * ay[1] * st;
            let u1xx = by[0] * ax[2] * st;
            let u1xy = by[1] * ax[1] * st;
            let u2xy = -bx[1] * ay[1] * st;
            let u2yy = -bx[0] * ay[2] * st;
            let u1xxx = by[0] * ax[3] * st;
            let u1xyy = by[2] * ax[1] * st;
            let u2xxy = -bx[2] * ay[1] * st;
            let u2yyy = -bx[0] * ay[3] * st;
            let u1xt = by[0] * ax[1] * ct;
            let u2yt = -bx[0] * ay[1] * ct;
            let pxx = -pi * pi * (pi * x).cos() * g[0];
            let pyy = (pi * x).cos() * g[2];
            let dx_f1 = u1xt + u1x * u1x + u1 * u1xx + u2x * u1y + u2 * u1xy
                - nu * (u1xxx + u1xyy)
                + pxx;
            let dy_f2 = u2yt + u1y * u2x + u1 * u2xy + u2y * u2y + u2 * u2yy
                - nu * (u2xxy + u2yyy)
                + pyy;
            dx_f1 + dy_f2
        })
        .collect()
}

/// Right-hand side of the pressure Poisson equation obtained by taking the
/// divergence of the momentum equation with a divergence-free velocity:
/// `Δp = -(u1_x² + 2 u1_y u2_x + u2_y²) + ∇·f`.
pub fn pressure_poisson_rhs<T: Real>(
    vel: &FieldWithDerivs<T>,
    f_div: ArrayView1<T>,
) -> Result<Array1<T>> {
    vel.require_order(1, 2)?;
    if vel.out_dim() != 2 || f_div.len() != vel.npoints() {
        return Err(Error::shape("pressure rhs needs a 2-component velocity"));
    }
    let two = T::lit(2.0);
    Ok(Array1::from_shape_fn(vel.npoints(), |i| {
        let u1x = vel.du[0][[i, 0]];
        let u1y = vel.du[1][[i, 0]];
        let u2x = vel.du[0][[i, 1]];
        let u2y = vel.du[1][[i, 1]];
        -(u1x * u1x + two * u1y * u2x + u2y * u2y) + f_div[i]
    }))
}

// -- metrics ------------------------------------------------------------------

pub fn rel_l2<T: Real>(u: &Array2<T>, u_ref: &Array2<T>) -> Result<T> {
    if u.dim() != u_ref.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", u.dim(), u_ref.dim())));
    }
    let den = u_ref.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    if den == T::zero() {
        return Err(Error::invalid("relative error against a zero reference"));
    }
    let num = Zip::from(u)
        .and(u_ref)
        .fold(T::zero(), |a, &x, &y| a + (x - y) * (x - y))
        .sqrt();
    Ok(num / den)
}

pub fn linf<T: Real>(u: &Array2<T>, u_ref: &Array2<T>) -> Result<T> {
    if u.dim() != u_ref.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", u.dim(), u_ref.dim())));
    }
    Ok(Zip::from(u)
        .and(u_ref)
        .fold(T::zero(), |a, &x, &y| a.max((x - y).abs())))
}
