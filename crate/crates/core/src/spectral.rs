//! Fourier pseudospectral reference solver for 1D periodic problems, with
//! integrating-factor RK4 stepping and a file cache of snapshots.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{Benchmark, PdeProblem};
use crate::scalar::Real;

pub const DEFAULT_N: usize = 4096;
pub const DEFAULT_DT: f64 = 1e-4;

/// Right-hand side split into a diagonal linear symbol and a nonlinear part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralModel<T: Real> {
    /// `u_t = ν u_xx − u u_x`
    Burgers { nu: T },
    /// `u_t = ε² u_xx + 5u − 5u³`
    AllenCahnScaled { epsilon: T },
    /// `u_t = ν u_xx`
    Heat { nu: T },
    /// `u_t = −c u_x`
    Advection { speed: T },
}

impl<T: Real> SpectralModel<T> {
    pub fn from_problem(problem: &PdeProblem<T>) -> Result<Self> {
        if problem.dim() != 1 || !problem.boundary.is_periodic() {
            return Err(Error::Unsupported(format!(
                "spectral reference needs a 1D periodic problem, got {}",
                problem.name()
            )));
        }
        match problem.benchmark {
            Benchmark::Burgers1d => Ok(Self::Burgers { nu: problem.nu }),
            Benchmark::Ac1dScaled => Ok(Self::AllenCahnScaled {
                epsilon: problem.epsilon,
            }),
            Benchmark::Heat1d => Ok(Self::Heat { nu: problem.nu }),
            Benchmark::Advection1d => Ok(Self::Advection { speed: T::one() }),
            other => Err(Error::Unsupported(format!(
                "no spectral model for {other}"
            ))),
        }
    }

    /// Linear symbol at angular wavenumber `k`.
    fn symbol(&self, k: T) -> Complex<T> {
        match *self {
            Self::Burgers { nu } | Self::Heat { nu } => Complex::new(-nu * k * k, T::zero()),
            Self::AllenCahnScaled { epsilon } => {
                Complex::new(-epsilon * epsilon * k * k, T::zero())
            }
            Self::Advection { speed } => Complex::new(T::zero(), -speed * k),
        }
    }

    fn is_linear(&self) -> bool {
        matches!(self, Self::Heat { .. } | Self::Advection { .. })
    }
}

/// Modal coefficients of a real field on `[lo, lo + period)`.
#[derive(Clone, Debug)]
pub struct SpectralState<T: Real> {
    pub coeffs: Vec<Complex<T>>,
    pub t: T,
    pub lo: T,
    pub period: T,
}

impl<T: Real> SpectralState<T> {
    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn grid(&self) -> Vec<T> {
        let h = self.period / T::from_usize_lossy(self.n());
        (0..self.n())
            .map(|i| self.lo + h * T::from_usize_lossy(i))
            .collect()
    }

    /// Real-space values and the largest imaginary part seen on inversion.
    pub fn to_physical(&self) -> (Vec<T>, T) {
        let n = self.n();
        let mut buf = self.coeffs.clone();
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        let scale = T::one() / T::from_usize_lossy(n);
        let max_imag = buf
            .iter()
            .map(|c| (c.im * scale).abs())
            .fold(T::zero(), T::max);
        (buf.iter().map(|c| c.re * scale).collect(), max_imag)
    }

    pub fn mean(&self) -> T {
        self.coeffs[0].re / T::from_usize_lossy(self.n())
    }
}

/// Field values on the uniform grid at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T: Real> {
    pub t: T,
    pub x: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Real> Snapshot<T> {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Every `stride`-th grid node as an `M x 1` point array and values.
    pub fn strided(&self, stride: usize) -> Result<(Array2<T>, Array2<T>)> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        let idx: Vec<usize> = (0..self.n()).step_by(stride).collect();
        let pts = Array2::from_shape_fn((idx.len(), 1), |(i, _)| self.x[idx[i]]);
        let vals = Array2::from_shape_fn((idx.len(), 1), |(i, _)| self.u[idx[i]]);
        Ok((pts, vals))
    }

    /// Trigonometric interpolation at arbitrary points, `M x 1` in and out.
    /// The Nyquist mode is dropped so the interpolant is real.
    pub fn interpolate(&self, points: &Array2<T>) -> Result<Array2<T>> {
        if points.ncols() != 1 {
            return Err(Error::shape("snapshot interpolation is 1D"));
        }
        let n = self.n();
        if n < 2 {
            return Err(Error::invalid("snapshot too small"));
        }
        let lo = self.x[0];
        let period = (self.x[1] - self.x[0]) * T::from_usize_lossy(n);
        let mut buf: Vec<Complex<T>> = self.u.iter().map(|&v| Complex::new(v, T::zero())).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let inv_n = T::one() / T::from_usize_lossy(n);
        let two_pi = T::lit(2.0) * T::PI();
        let half = n / 2;
        let h = period / T::from_usize_lossy(n);
        let tol = T::lit(1e-9);
        let out = points.column(0).mapv(|x| {
            // nodes are looked up directly
            let s = (x - lo) / h;
            if (s - s.round()).abs() < tol {
                let i = s.round().to_i64().expect("finite node index");
                return self.u[i.rem_euclid(n as i64) as usize];
            }
            let theta = two_pi * (x - lo) / period;
            let mut acc = buf[0].re;
            for j in 1..half {
                let (s, c) = (theta * T::from_usize_lossy(j)).sin_cos();
                let z = buf[j];
                acc += T::lit(2.0) * (z.re * c - z.im * s);
            }
            acc * inv_n
        });
        Ok(out.insert_axis(ndarray::Axis(1)))
    }
}

struct Workspace<T: Real> {
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    ik: Vec<Complex<T>>,
    keep: Vec<bool>,
    buf: Vec<Complex<T>>,
}

impl<T: Real> Workspace<T> {
    fn new(n: usize, period: T) -> Self {
        let mut planner = FftPlanner::new();
        let two_pi = T::lit(2.0) * T::PI();
        let ik = (0..n)
            .map(|j| Complex::new(T::zero(), two_pi * T::lit(signed(j, n) as f64) / period))
            .collect();
        let cutoff = n / 3;
        let keep = (0..n).map(|j| signed(j, n).unsigned_abs() as usize <= cutoff).collect();
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            ik,
            keep,
            buf: vec![Complex::new(T::zero(), T::zero()); n],
        }
    }

    /// Dealiased nonlinear term in modal form.
    fn nonlinear(&mut self, model: &SpectralModel<T>, u_hat: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = u_hat.len();
        let zero = Complex::new(T::zero(), T::zero());
        for j in 0..n {
            self.buf[j] = if self.keep[j] { u_hat[j] } else { zero };
        }
        self.inv.process(&mut self.buf);
        let inv_n = T::one() / T::from_usize_lossy(n);
        let half = T::lit(0.5);
        let five = T::lit(5.0);
        for z in self.buf.iter_mut() {
            let u = z.re * inv_n;
            let v = match model {
                SpectralModel::Burgers { .. } => u * u,
                SpectralModel::AllenCahnScaled { .. } => five * (u - u * u * u),
                _ => T::zero(),
            };
            *z = Complex::new(v, T::zero());
        }
        self.fwd.process(&mut self.buf);
        for j in 0..n {
            out[j] = if !self.keep[j] {
                zero
            } else {
                match model {
                    SpectralModel::Burgers { .. } => -self.ik[j] * self.buf[j] * half,
                    _ => self.buf[j],
                }
            };
        }
    }
}

fn signed(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Integrating-factor RK4 solver on a fixed grid and step.
pub struct SpectralSolver<T: Real> {
    model: SpectralModel<T>,
    dt: T,
    e_half: Vec<Complex<T>>,
    e_full: Vec<Complex<T>>,
    ws: Workspace<T>,
    state: SpectralState<T>,
    steps: usize,
}

impl<T: Real> SpectralSolver<T> {
    pub fn new(
        model: SpectralModel<T>,
        lo: T,
        period: T,
        u0: &[T],
        dt: T,
    ) -> Result<Self> {
        let n = u0.len();
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("grid size {n} must be a power of two >= 4")));
        }
        if !(dt > T::zero()) || !(period > T::zero()) {
            return Err(Error::invalid("dt and period must be positive"));
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial field".into()));
        }
        let ws = Workspace::new(n, period);
        let half_dt = dt * T::lit(0.5);
        let e_half: Vec<Complex<T>> = ws
            .ik
            .iter()
            .map(|ik| (model.symbol(ik.im) * half_dt).exp())
            .collect();
        let e_full = e_half.iter().map(|e| e * e).collect();
        let mut coeffs: Vec<Complex<T>> = u0.iter().map(|&v| Complex::new(v, T::zero())).collect();
        ws.fwd.process(&mut coeffs);
        Ok(Self {
            model,
            dt,
            e_half,
            e_full,
            ws,
            state: SpectralState {
                coeffs,
                t: T::zero(),
                lo,
                period,
            },
            steps: 0,
        })
    }

    /// Solver for `problem` started from its initial condition on `n` nodes.
    pub fn for_problem(problem: &PdeProblem<T>, n: usize, dt: T) -> Result<Self> {
        let model = SpectralModel::from_problem(problem)?;
        let lo = problem.domain.lo()[0];
        let period = problem.domain.extent(0);
        let h = period / T::from_usize_lossy(n);
        let x = Array2::from_shape_fn((n, 1), |(i, _)| lo + h * T::from_usize_lossy(i));
        let u0 = problem.initial_condition(&x)?;
        Self::new(model, lo, period, u0.as_slice().expect("contiguous"), dt)
    }

    pub fn state(&self) -> &SpectralState<T> {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self) -> Result<()> {
        let u = &mut self.state.coeffs;
        if self.model.is_linear() {
            for (c, e) in u.iter_mut().zip(&self.e_full) {
                *c *= e;
            }
        } else {
            let n = u.len();
            let dt = self.dt;
            let h = dt * T::lit(0.5);
            let zero = Complex::new(T::zero(), T::zero());
            let (mut k1, mut k2, mut k3, mut k4) =
                (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
            let mut tmp = vec![zero; n];
            self.ws.nonlinear(&self.model, u, &mut k1);
            for j in 0..n {
                tmp[j] = self.e_half[j] * (u[j] + k1[j] * h);
            }
            self.ws.nonlinear(&self.model, &tmp, &mut k2);
            for j in 0..n {
                tmp[j] = self.e_half[j] * u[j] + k2[j] * h;
            }
            self.ws.nonlinear(&self.model, &tmp, &mut k3);
            for j in 0..n {
                tmp[j] = self.e_full[j] * u[j] + self.e_half[j] * k3[j] * dt;
            }
            self.ws.nonlinear(&self.model, &tmp, &mut k4);
            let sixth = dt / T::lit(6.0);
            let two = T::lit(2.0);
            for j in 0..n {
                u[j] = self.e_full[j] * u[j]
                    + (self.e_full[j] * k1[j] + self.e_half[j] * (k2[j] + k3[j]) * two + k4[j])
                        * sixth;
            }
        }
        self.steps += 1;
        self.state.t = self.dt * T::from_usize_lossy(self.steps);
        if self.state.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Divergence {
                step: self.steps,
                detail: "non-finite spectral modes".into(),
            });
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot<T> {
        Snapshot {
            t: self.state.t,
            x: self.state.grid(),
            u: self.state.to_physical().0,
        }
    }

    /// Steps until each requested time (multiples of dt, ascending) and
    /// records a snapshot there.
    pub fn advance_to(&mut self, times: &[T]) -> Result<Vec<Snapshot<T>>> {
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let target = step_count(t, self.dt)?;
            if target < self.steps {
                return Err(Error::invalid("snapshot times must be ascending"));
            }
            while self.steps < target {
                self.step()?;
            }
            out.push(self.snapshot());
        }
        Ok(out)
    }
}

/// `t / dt` as an integer step count, rejecting non-multiples.
pub fn step_count<T: Real>(t: T, dt: T) -> Result<usize> {
    let ratio = (t / dt).as_f64();
    let n = ratio.round();
    if !(n >= 0.0) || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::invalid(format!(
            "time {t} is not a multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// Solves `problem` on `n` nodes with step `dt` and returns the snapshots
/// at `times`.
pub fn spectral_solve<T: Real>(
    problem: &PdeProblem<T>,
    n: usize,
    dt: T,
    times: &[T],
) -> Result<Vec<Snapshot<T>>> {
    SpectralSolver::for_problem(problem, n, dt)?.advance_to(times)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub problem: String,
    pub n: usize,
    pub dt: f64,
    pub t: f64,
}

/// Directory of reference snapshots keyed by problem, grid size, step and time.
#[derive(Clone, Debug)]
pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn stem(meta: &SnapshotMeta) -> String {
        format!("{}_n{}_dt{:e}_t{:.6}", meta.problem, meta.n, meta.dt, meta.t)
    }

    pub fn csv_path(&self, meta: &SnapshotMeta) -> PathBuf {
        self.dir.join(format!("{}.csv", Self::stem(meta)))
    }

    pub fn meta_path(&self, meta: &SnapshotMeta) -> PathBuf {
        self.dir.join(format!("{}.json", Self::stem(meta)))
    }

    pub fn store(&self, meta: &SnapshotMeta, snap: &Snapshot<f64>) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut w = csv::Writer::from_path(self.csv_path(meta))?;
        w.write_record(["x", "u"])?;
        for (x, u) in snap.x.iter().zip(&snap.u) {
            w.write_record([format!("{x:e}"), format!("{u:e}")])?;
        }
        w.flush()?;
        fs::write(self.meta_path(meta), serde_json::to_string_pretty(meta)?)?;
        Ok(())
    }

    /// `None` when either file is missing or the sidecar disagrees with the key.
    pub fn load(&self, meta: &SnapshotMeta) -> Result<Option<Snapshot<f64>>> {
        let (csv_path, meta_path) = (self.csv_path(meta), self.meta_path(meta));
        if !csv_path.exists() || !meta_path.exists() {
            return Ok(None);
        }
        let stored: SnapshotMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
        if stored != *meta {
            return Ok(None);
        }
        let mut r = csv::Reader::from_path(csv_path)?;
        let (mut x, mut u) = (Vec::new(), Vec::new());
        for rec in r.deserialize() {
            let (xi, ui): (f64, f64) = rec?;
            x.push(xi);
            u.push(ui);
        }
        if x.len() != meta.n {
            return Ok(None);
        }
        Ok(Some(Snapshot { t: meta.t, x, u }))
    }

    /// Loads every requested snapshot, solving once for whatever is missing.
    pub fn get_or_compute(
        &self,
        problem: &PdeProblem<f64>,
        n: usize,
        dt: f64,
        times: &[f64],
    ) -> Result<Vec<Snapshot<f64>>> {
        let metas: Vec<SnapshotMeta> = times
            .iter()
            .map(|&t| SnapshotMeta {
                problem: problem.name().to_string(),
                n,
                dt,
                t,
            })
            .collect();
        let mut cached = Vec::with_capacity(times.len());
        for m in &metas {
            match self.load(m)? {
                Some(s) => cached.push(s),
                None => {
                    log::info!("computing spectral reference for {}", problem.name());
                    let snaps = spectral_solve(problem, n, dt, times)?;
                    for (m, s) in metas.iter().zip(&snaps) {
                        self.store(m, s)?;
                    }
                    return Ok(snaps);
                }
            }
        }
        Ok(cached)
    }
}
