//! Time marching: initial fit, per-step target construction and solve,
//! reinitialization, error tracking, and the velocity/pressure coupling
//! used for ns2d.

mod config;
mod record;
pub mod study;

pub use config::{
    NetworkConfig, ProblemOverrides, ReferenceSource, SamplingConfig, SamplingKind, SolverConfig,
    DEFAULT_INIT_ABORT,
};
pub use record::{FieldSnapshot, RunRecord, StepRecord, RECORD_HEADER};

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, Axis};

use crate::adaptive::{adaptive_r, analyze_spectrum, should_reinit, AdaptivePolicy, SpectrumAnalysis};
use crate::basis::{
    evaluate_basis, init_rnb, make_msrnb_scales, BasisEvaluation, FourierFeatureMap, RnbModel,
};
use crate::error::{Error, Result};
use crate::field::FieldWithDerivs;
use crate::geometry::{boundary_sample, lhs_sample, uniform_grid, Domain};
use crate::integrators::{
    build_target, implicit_design, implicit_weights, HistoryBuffer, HistoryEntry, ModelSnapshot,
    SchemeId, SchemeKind, TargetOps,
};
use crate::lsq::{fit_residual, LsqSystem, LsqWeights, QrFactor};
use crate::problems::{
    linf, ns_exact_pressure, ns_forcing_divergence, pressure_poisson_rhs, rel_l2, Benchmark,
    BoundaryKind, OperatorInputs, PdeProblem,
};
use crate::scalar::Real;
use crate::spectral::{ReferenceCache, Snapshot, SpectralSolver};

/// Fields whose magnitude exceeds this are treated as diverged.
/// A run diverges once `max |u|` exceeds this multiple of `max(1, max |u0|)`.
pub const BLOWUP_FACTOR: f64 = 1e6;
const PRESSURE_SEED_OFFSET: u64 = 0x5eed_0001;
const BOUNDARY_SEED_OFFSET: u64 = 0xb0d7;

/// Unscaled interior design plus the factorised weighted system.
#[derive(Clone, Debug)]
struct Factored<T: Real> {
    interior: Array2<T>,
    system: LsqSystem<T>,
    qr: QrFactor<T>,
}

impl<T: Real> Factored<T> {
    fn new(interior: Array2<T>, boundary: Option<&Array2<T>>, w: &LsqWeights<T>) -> Result<Self> {
        let system = LsqSystem::assemble(interior.view(), boundary.map(|b| b.view()), w)?;
        let qr = system.factor()?;
        Ok(Self {
            interior,
            system,
            qr,
        })
    }

    fn solve(&self, interior: &Array2<T>, boundary: Option<&Array2<T>>) -> Result<Array2<T>> {
        let rhs = self
            .system
            .stack_rhs(interior.view(), boundary.map(|b| b.view()))?;
        Ok(self.qr.solve(&rhs)?.theta)
    }

    fn residual(&self, theta: &Array2<T>, target: &Array2<T>) -> T {
        fit_residual(&self.interior, theta, target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NetRole {
    Solution,
    Pressure,
}

/// One network with its cached evaluations and factorisations.
#[derive(Clone, Debug)]
struct Net<T: Real> {
    model: Arc<RnbModel<T>>,
    theta: Array2<T>,
    int_eval: BasisEvaluation<T>,
    bnd_block: Option<Array2<T>>,
    fit: Factored<T>,
    implicit: Option<Factored<T>>,
    r: f64,
}

impl<T: Real> Net<T> {
    fn build(
        model: RnbModel<T>,
        role: NetRole,
        problem: &PdeProblem<T>,
        interior: &Array2<T>,
        boundary: &Array2<T>,
        weights: &LsqWeights<T>,
        r: f64,
    ) -> Result<Self> {
        let order = match role {
            NetRole::Solution => problem.required_order(),
            NetRole::Pressure => 2,
        };
        let int_eval = evaluate_basis(&model, interior, order)?;
        let bnd_block = match (role, problem.boundary) {
            (NetRole::Pressure, _) => Some(evaluate_basis(&model, boundary, 0)?.design_block()),
            (_, BoundaryKind::PeriodicHard) => None,
            (_, BoundaryKind::PeriodicSoft) => Some(periodic_pair_rows(&model, boundary)?),
            _ => Some(evaluate_basis(&model, boundary, 0)?.design_block()),
        };
        let design = match role {
            NetRole::Solution => int_eval.design_block(),
            NetRole::Pressure => laplacian_block(&int_eval),
        };
        let fit = Factored::new(design, bnd_block.as_ref(), weights)?;
        let theta = Array2::zeros((model.basis_count() + 1, model.out_dim()));
        Ok(Self {
            model: Arc::new(model),
            theta,
            int_eval,
            bnd_block,
            fit,
            implicit: None,
            r,
        })
    }
}

/// `[ΔΦ | 0]`.
fn laplacian_block<T: Real>(ev: &BasisEvaluation<T>) -> Array2<T> {
    let (n, m) = ev.values.dim();
    let mut a = Array2::zeros((n, m + 1));
    for term in &ev.lap_terms {
        a.slice_mut(ndarray::s![.., ..m]).scaled_add(T::one(), term);
    }
    a
}

/// Rows matching value and normal derivative across opposite faces. The
/// boundary points come axis by axis as `per_face` low-face points followed
/// by their periodic images on the high face.
fn periodic_pair_rows<T: Real>(model: &RnbModel<T>, boundary: &Array2<T>) -> Result<Array2<T>> {
    let dim = boundary.ncols();
    let per_face = boundary.nrows() / (2 * dim);
    if per_face == 0 || boundary.nrows() != 2 * dim * per_face {
        return Err(Error::shape("boundary points do not pair across faces"));
    }
    let ev = evaluate_basis(model, boundary, 1)?;
    let m = ev.basis_count();
    let mut out = Array2::zeros((2 * dim * per_face, m + 1));
    for axis in 0..dim {
        for j in 0..per_face {
            let lo = axis * 2 * per_face + j;
            let hi = lo + per_face;
            let row = axis * 2 * per_face + 2 * j;
            for c in 0..m {
                out[[row, c]] = ev.values[[lo, c]] - ev.values[[hi, c]];
                out[[row + 1, c]] = ev.grad[axis][[lo, c]] - ev.grad[axis][[hi, c]];
            }
        }
    }
    Ok(out)
}

/// Network from a config block. Hard-periodic problems always get a feature
/// layer whose periods equal the domain extents.
pub fn build_model<T: Real>(
    net: &NetworkConfig,
    domain: &Domain<T>,
    periodic_hard: bool,
    out_dim: usize,
    seed: u64,
) -> Result<RnbModel<T>> {
    let dim = domain.dim();
    let features = match (&net.features, periodic_hard) {
        (Some(f), _) => Some(f.clone()),
        (None, true) => Some(vec![1]),
        (None, false) => None,
    };
    let fm = features
        .map(|b| {
            let periods = domain
                .extents()
                .into_iter()
                .map(|e| e * T::lit(net.feature_period_scale))
                .collect();
            FourierFeatureMap::axis_aligned(&b, periods)
        })
        .transpose()?;
    let mut widths = vec![dim];
    if let Some(fm) = &fm {
        widths.push(fm.feature_count());
    }
    widths.extend(&net.hidden);
    widths.push(out_dim);
    let scale = net
        .n_max
        .map(|n| make_msrnb_scales(net.hidden[0], n))
        .transpose()?;
    init_rnb(&widths, T::lit(net.r), fm, scale, seed, out_dim)
}

/// Least-squares fit of `values` at `points` (no boundary rows). Returns the
/// coefficients and the RMS residual.
pub fn fit_values<T: Real>(
    model: &RnbModel<T>,
    points: &Array2<T>,
    values: &Array2<T>,
    weights: &LsqWeights<T>,
) -> Result<(Array2<T>, T)> {
    let ev = evaluate_basis(model, points, 0)?;
    let f = Factored::new(ev.design_block(), None, weights)?;
    let theta = f.solve(values, None)?;
    let res = f.residual(&theta, values);
    Ok((theta, res))
}

/// Points along axis-aligned lines through the domain center, `grid_n` per
/// line, excluding the high end.
fn analysis_slices<T: Real>(domain: &Domain<T>, grid_n: usize) -> Vec<Array2<T>> {
    let dim = domain.dim();
    let center = domain.center();
    (0..dim)
        .map(|axis| {
            let h = domain.extent(axis) / T::from_usize_lossy(grid_n);
            Array2::from_shape_fn((grid_n, dim), |(i, d)| {
                if d == axis {
                    domain.lo()[axis] + h * T::from_usize_lossy(i)
                } else {
                    center[d]
                }
            })
        })
        .collect()
}

fn spectra_of<T: Real>(values: &Array2<T>, out: &mut Vec<SpectrumAnalysis<T>>) -> Result<()> {
    for col in values.columns() {
        out.push(analyze_spectrum(&col.to_vec())?);
    }
    Ok(())
}

fn policy_t<T: Real>(p: &AdaptivePolicy<f64>) -> AdaptivePolicy<T> {
    AdaptivePolicy {
        epsilon: T::lit(p.epsilon),
        r_max: T::lit(p.r_max),
        grid_n: p.grid_n,
    }
}

fn boundary_rhs<T: Real>(
    problem: &PdeProblem<T>,
    boundary: &Array2<T>,
    block: Option<&Array2<T>>,
    t: T,
) -> Result<Option<Array2<T>>> {
    let Some(b) = block else {
        return Ok(None);
    };
    match problem.boundary {
        BoundaryKind::PeriodicSoft => Ok(Some(Array2::zeros((b.nrows(), problem.out_dim)))),
        _ => Ok(Some(problem.boundary_values(boundary, t)?)),
    }
}

fn as_divergence<R>(r: Result<R>, step: usize) -> Result<R> {
    r.map_err(|e| match e {
        Error::NonFinite(what) => Error::Divergence { step, detail: what },
        other => other,
    })
}

struct CollocOps<'a, T: Real> {
    problem: &'a PdeProblem<T>,
    points: &'a Array2<T>,
    boundary: &'a Array2<T>,
    net: &'a Net<T>,
    pressure_grad: Option<&'a [Array2<T>]>,
    stage_thetas: Vec<Array2<T>>,
}

impl<T: Real> TargetOps<T> for CollocOps<'_, T> {
    fn rhs(&mut self, field: &FieldWithDerivs<T>, t: T) -> Result<Array2<T>> {
        self.problem.apply_operator(
            field,
            &OperatorInputs {
                points: self.points,
                t,
                pressure_grad: self.pressure_grad,
            },
        )
    }

    fn project(&mut self, _stage: usize, values: &Array2<T>, t: T) -> Result<FieldWithDerivs<T>> {
        let bc = boundary_rhs(self.problem, self.boundary, self.net.bnd_block.as_ref(), t)?;
        let theta = self.net.fit.solve(values, bc.as_ref())?;
        let field = self.net.int_eval.field(&theta)?;
        self.stage_thetas.push(theta);
        Ok(field)
    }
}

/// Replays a target on other points using stage coefficients recorded on
/// the collocation points.
struct AnalysisOps<'a, T: Real> {
    problem: &'a PdeProblem<T>,
    points: &'a Array2<T>,
    stages: Vec<FieldWithDerivs<T>>,
}

impl<T: Real> TargetOps<T> for AnalysisOps<'_, T> {
    fn rhs(&mut self, field: &FieldWithDerivs<T>, t: T) -> Result<Array2<T>> {
        self.problem.apply_operator(
            field,
            &OperatorInputs {
                points: self.points,
                t,
                pressure_grad: None,
            },
        )
    }

    fn project(&mut self, stage: usize, _values: &Array2<T>, _t: T) -> Result<FieldWithDerivs<T>> {
        self.stages
            .get(stage)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("no recorded stage {stage}")))
    }
}

enum Reference<T: Real> {
    None,
    Exact,
    Spectral(Box<SpectralSolver<T>>),
    Cached(Vec<Snapshot<f64>>),
}

impl<T: Real> Reference<T> {
    fn values(
        &mut self,
        problem: &PdeProblem<T>,
        points: &Array2<T>,
        t: T,
    ) -> Result<Option<Array2<T>>> {
        match self {
            Reference::None => Ok(None),
            Reference::Exact => Ok(Some(problem.exact_solution(points, t)?)),
            Reference::Spectral(s) => {
                let snap = s.advance_to(&[t])?.remove(0);
                Ok(Some(snap.interpolate(points)?))
            }
            Reference::Cached(snaps) => {
                let tf = t.as_f64();
                let Some(snap) = snaps.iter().find(|s| (s.t - tf).abs() < 1e-9) else {
                    return Ok(None);
                };
                let p64 = points.mapv(|v| v.as_f64());
                Ok(Some(snap.interpolate(&p64)?.mapv(T::lit)))
            }
        }
    }
}

/// State of one run.
pub struct Solver<T: Real> {
    config: SolverConfig,
    problem: PdeProblem<T>,
    scheme: SchemeId<T>,
    dt: T,
    n_steps: usize,
    weights: LsqWeights<T>,
    interior: Array2<T>,
    boundary: Array2<T>,
    test_points: Array2<T>,
    velocity: Net<T>,
    pressure: Option<Net<T>>,
    history: HistoryBuffer<T>,
    step_index: usize,
    last_residual: f64,
    blowup_limit: f64,
    solves: usize,
    reference: Reference<T>,
    test_eval: Option<(Arc<RnbModel<T>>, BasisEvaluation<T>)>,
    pressure_test_eval: Option<BasisEvaluation<T>>,
    record: RunRecord,
    snapshots: Vec<FieldSnapshot>,
    started: Instant,
}

impl<T: Real> Solver<T> {
    /// Validates the config, samples points, draws the networks and performs
    /// the initial fit (row 0 of the record).
    pub fn new(config: SolverConfig) -> Result<Self> {
        let started = Instant::now();
        config.validate()?;
        let problem = config.problem::<T>();
        let scheme = config.scheme_id::<T>()?;
        let n_steps = config.steps()?;
        let weights = LsqWeights {
            ridge: T::lit(config.ridge),
            bc_weight: T::lit(config.bc_weight),
        };
        let domain = &problem.domain;
        let counts = config.interior_counts();
        let interior = match config.sampling.kind {
            SamplingKind::Grid => uniform_grid(domain, &counts)?,
            SamplingKind::Lhs => lhs_sample(domain, counts[0], config.seed)?,
        };
        let is_ns = problem.benchmark == Benchmark::Ns2d;
        let boundary = if problem.boundary.has_rows() || is_ns {
            boundary_sample(
                domain,
                config.sampling.boundary_per_face,
                config.seed.wrapping_add(BOUNDARY_SEED_OFFSET),
            )?
        } else {
            Array2::zeros((0, problem.dim()))
        };
        let test_points = uniform_grid(domain, &config.test_counts())?;
        let hard = problem.boundary == BoundaryKind::PeriodicHard;
        let model = build_model(&config.network, domain, hard, problem.out_dim, config.seed)?;
        let velocity = Net::build(
            model,
            NetRole::Solution,
            &problem,
            &interior,
            &boundary,
            &weights,
            config.network.r,
        )?;
        let pressure = if is_ns {
            let net = config.pressure_network.as_ref().unwrap_or(&config.network);
            let model = build_model(
                net,
                domain,
                false,
                1,
                config.seed.wrapping_add(PRESSURE_SEED_OFFSET),
            )?;
            Some(Net::build(
                model,
                NetRole::Pressure,
                &problem,
                &interior,
                &boundary,
                &weights,
                net.r,
            )?)
        } else {
            None
        };
        let reference = match &config.reference {
            ReferenceSource::None => Reference::None,
            ReferenceSource::Exact => Reference::Exact,
            ReferenceSource::Auto if problem.has_exact_solution() => Reference::Exact,
            ReferenceSource::Auto => {
                match SpectralSolver::for_problem(
                    &problem,
                    crate::spectral::DEFAULT_N,
                    T::lit(crate::spectral::DEFAULT_DT),
                ) {
                    Ok(s) => Reference::Spectral(Box::new(s)),
                    Err(_) => Reference::None,
                }
            }
            ReferenceSource::Spectral { n, dt } => {
                Reference::Spectral(Box::new(SpectralSolver::for_problem(&problem, *n, T::lit(*dt))?))
            }
            ReferenceSource::File { dir, n, dt } => {
                let mut times = config.snapshot_times.clone();
                times.push(config.t_end);
                times.sort_by(f64::total_cmp);
                times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                let snaps = ReferenceCache::new(dir).get_or_compute(
                    &config.problem::<f64>(),
                    *n,
                    *dt,
                    &times,
                )?;
                Reference::Cached(snaps)
            }
        };
        let mut solver = Self {
            history: HistoryBuffer::new(scheme.steps()),
            config,
            problem,
            scheme,
            dt: T::lit(0.0),
            n_steps,
            weights,
            interior,
            boundary,
            test_points,
            velocity,
            pressure,
            step_index: 0,
            last_residual: 0.0,
            blowup_limit: BLOWUP_FACTOR,
            solves: 0,
            reference,
            test_eval: None,
            pressure_test_eval: None,
            record: RunRecord::default(),
            snapshots: Vec::new(),
            started,
        };
        solver.dt = T::lit(solver.config.dt);
        solver.initial_fit()?;
        Ok(solver)
    }

    fn initial_fit(&mut self) -> Result<()> {
        let start = Instant::now();
        let u0 = self.problem.initial_condition(&self.interior)?;
        let peak0 = u0.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        self.blowup_limit = BLOWUP_FACTOR * peak0.max(1.0);
        let (mut theta, mut residual) = self.fit_solution(&u0, T::zero())?;
        let mut reinit = false;
        if let Some(policy) = self.config.adaptive {
            if should_reinit(residual, &policy_t(&policy)) {
                let mut spectra = Vec::new();
                for pts in analysis_slices(&self.problem.domain, policy.grid_n) {
                    spectra_of(&self.problem.initial_condition(&pts)?, &mut spectra)?;
                }
                let r = self.spectrum_r(&spectra, &policy);
                self.reinit_velocity(r, self.config.seed)?;
                (theta, residual) = self.fit_solution(&u0, T::zero())?;
                reinit = true;
            }
        }
        let res = residual.as_f64();
        if !(res <= self.config.init_abort) {
            return Err(Error::InitFailure {
                residual: res,
                limit: self.config.init_abort,
            });
        }
        let field = self.velocity.int_eval.field(&theta)?;
        self.velocity.theta = theta.clone();
        self.solve_pressure(&field, T::zero())?;
        self.history.push(HistoryEntry {
            time: T::zero(),
            field,
            snapshot: Some(ModelSnapshot {
                model: self.velocity.model.clone(),
                theta,
            }),
        })?;
        self.last_residual = res;
        let mut row = StepRecord {
            step: 0,
            t: 0.0,
            fit_residual: res,
            rel_l2: f64::NAN,
            linf: f64::NAN,
            r_current: self.velocity.r,
            reinit,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            solves: self.solves,
            components: None,
        };
        self.evaluate_row(&mut row)?;
        self.take_snapshot_if_requested(0.0)?;
        self.record.rows.push(row);
        Ok(())
    }

    fn fit_solution(&mut self, values: &Array2<T>, t: T) -> Result<(Array2<T>, T)> {
        let bc = boundary_rhs(
            &self.problem,
            &self.boundary,
            self.velocity.bnd_block.as_ref(),
            t,
        )?;
        let theta = self.velocity.fit.solve(values, bc.as_ref())?;
        self.solves += 1;
        let res = self.velocity.fit.residual(&theta, values);
        Ok((theta, res))
    }

    fn spectrum_r(&self, spectra: &[SpectrumAnalysis<T>], policy: &AdaptivePolicy<f64>) -> f64 {
        let b = self.velocity.model.feature_map().map(|f| f.max_multiplier());
        adaptive_r(spectra, &policy_t(policy), b).as_f64()
    }

    fn reinit_velocity(&mut self, r: f64, seed: u64) -> Result<()> {
        let model = self.velocity.model.redraw(T::lit(r), seed)?;
        self.velocity = Net::build(
            model,
            NetRole::Solution,
            &self.problem,
            &self.interior,
            &self.boundary,
            &self.weights,
            r,
        )?;
        Ok(())
    }

    /// Pressure Poisson solve at time `t` for the velocity `vel` on the
    /// interior points.
    fn solve_pressure(&mut self, vel: &FieldWithDerivs<T>, t: T) -> Result<()> {
        let Some(p) = self.pressure.as_mut() else {
            return Ok(());
        };
        let f_div = ns_forcing_divergence(&self.interior, t, self.problem.nu);
        let rhs = pressure_poisson_rhs(vel, f_div.view())?.insert_axis(Axis(1));
        let bc = ns_exact_pressure(&self.boundary, t);
        p.theta = p.fit.solve(&rhs, Some(&bc))?;
        self.solves += 1;
        Ok(())
    }

    fn pressure_grad(&self) -> Result<Option<Vec<Array2<T>>>> {
        match &self.pressure {
            None => Ok(None),
            Some(p) => Ok(Some(p.int_eval.field(&p.theta)?.du)),
        }
    }

    /// Scheme for the next step: RK4 until the history is long enough.
    pub fn current_scheme(&self) -> SchemeId<T> {
        if self.history.len() < self.scheme.steps() {
            SchemeId {
                kind: SchemeKind::Rk4,
                beta: self.scheme.beta,
            }
        } else {
            self.scheme
        }
    }

    /// Advances one step without evaluating errors.
    fn step(&mut self) -> Result<StepRecord> {
        let start = Instant::now();
        let n = self.step_index;
        let step_no = n + 1;
        let dt = self.dt;
        let t_n = dt * T::from_usize_lossy(n);
        let t_next = dt * T::from_usize_lossy(step_no);
        let scheme = self.current_scheme();
        let kind = scheme.kind;
        let solves_before = self.solves;
        let reseed = self.config.seed.wrapping_add(step_no as u64);
        let mut reinit = false;

        let (theta, residual) = if kind.is_implicit() {
            if self.config.reinit_every_step {
                self.reinit_velocity(self.velocity.r, reseed)?;
                reinit = true;
            }
            let op = self.problem.linear_part().ok_or_else(|| {
                Error::Unsupported(format!("{kind} needs a linear problem"))
            })?;
            let a = implicit_weights::<T>(kind)?;
            if self.velocity.implicit.is_none() {
                let design = implicit_design(&op, &self.velocity.int_eval, dt / a[0])?;
                self.velocity.implicit = Some(Factored::new(
                    design,
                    self.velocity.bnd_block.as_ref(),
                    &self.weights,
                )?);
            }
            let hist = self.history.fields(a.len() - 1)?;
            let mut rhs = Array2::zeros(hist[0].u.dim());
            for (ai, h) in a[1..].iter().zip(&hist) {
                rhs.scaled_add(-*ai / a[0], &h.u);
            }
            let bc = boundary_rhs(
                &self.problem,
                &self.boundary,
                self.velocity.bnd_block.as_ref(),
                t_next,
            )?;
            let f = self.velocity.implicit.as_ref().expect("built above");
            let theta = as_divergence(f.solve(&rhs, bc.as_ref()), step_no)?;
            self.solves += 1;
            let res = f.residual(&theta, &rhs);
            (theta, res)
        } else {
            let pgrad = self.pressure_grad()?;
            let (target, stage_thetas) = {
                let hist = self.history.fields(scheme.steps())?;
                let mut ops = CollocOps {
                    problem: &self.problem,
                    points: &self.interior,
                    boundary: &self.boundary,
                    net: &self.velocity,
                    pressure_grad: pgrad.as_deref(),
                    stage_thetas: Vec::new(),
                };
                let target =
                    as_divergence(build_target(&scheme, &hist, t_n, dt, &mut ops), step_no)?;
                (target, ops.stage_thetas)
            };
            self.solves += stage_thetas.len();
            let adaptive = self.config.adaptive;
            let trigger = self.config.reinit_every_step
                || adaptive.is_some_and(|p| should_reinit(self.last_residual, &p));
            if trigger {
                let r = match &adaptive {
                    Some(p) => self.target_spectrum_r(&scheme, t_n, &stage_thetas, p)?,
                    None => self.velocity.r,
                };
                self.reinit_velocity(r, reseed)?;
                reinit = true;
            }
            let (theta, res) = as_divergence(self.fit_solution(&target, t_next), step_no)?;
            (theta, res)
        };

        let field = self.velocity.int_eval.field(&theta)?;
        let peak = field.u.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if !field.is_finite() || !residual.is_finite() || peak.as_f64() > self.blowup_limit {
            return Err(Error::Divergence {
                step: step_no,
                detail: format!("field magnitude {:e}", peak.as_f64()),
            });
        }
        self.velocity.theta = theta.clone();
        if self.pressure.is_some() {
            as_divergence(self.solve_pressure(&field, t_next), step_no)?;
        }
        self.history.push(HistoryEntry {
            time: t_next,
            field,
            snapshot: Some(ModelSnapshot {
                model: self.velocity.model.clone(),
                theta,
            }),
        })?;
        self.step_index = step_no;
        self.last_residual = residual.as_f64();
        Ok(StepRecord {
            step: step_no,
            t: t_next.as_f64(),
            fit_residual: self.last_residual,
            rel_l2: f64::NAN,
            linf: f64::NAN,
            r_current: self.velocity.r,
            reinit,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            solves: self.solves - solves_before,
            components: None,
        })
    }

    /// `r` from the spectrum of the current target sampled on the analysis
    /// slices.
    fn target_spectrum_r(
        &self,
        scheme: &SchemeId<T>,
        t_n: T,
        stage_thetas: &[Array2<T>],
        policy: &AdaptivePolicy<f64>,
    ) -> Result<f64> {
        let order = self.problem.required_order();
        let k = scheme.steps();
        let mut spectra = Vec::new();
        for pts in analysis_slices(&self.problem.domain, policy.grid_n) {
            let current = evaluate_basis(&self.velocity.model, &pts, order)?;
            let mut evals: Vec<(Arc<RnbModel<T>>, BasisEvaluation<T>)> = Vec::new();
            let mut hist = Vec::with_capacity(k);
            for entry in self.history.iter().take(k) {
                let snap = entry
                    .snapshot
                    .as_ref()
                    .ok_or_else(|| Error::invalid("history entry without a model"))?;
                if Arc::ptr_eq(&snap.model, &self.velocity.model) {
                    hist.push(current.field(&snap.theta)?);
                    continue;
                }
                let pos = evals.iter().position(|(m, _)| Arc::ptr_eq(m, &snap.model));
                let ev = match pos {
                    Some(i) => &evals[i].1,
                    None => {
                        let ev = evaluate_basis(&snap.model, &pts, order)?;
                        evals.push((snap.model.clone(), ev));
                        &evals.last().expect("just pushed").1
                    }
                };
                hist.push(ev.field(&snap.theta)?);
            }
            let stages = stage_thetas
                .iter()
                .map(|th| current.field(th))
                .collect::<Result<Vec<_>>>()?;
            let mut ops = AnalysisOps {
                problem: &self.problem,
                points: &pts,
                stages,
            };
            let refs: Vec<&FieldWithDerivs<T>> = hist.iter().collect();
            let target = build_target(scheme, &refs, t_n, self.dt, &mut ops)?;
            spectra_of(&target, &mut spectra)?;
        }
        Ok(self.spectrum_r(&spectra, policy))
    }

    /// Current prediction on arbitrary points (solution components only).
    pub fn predict(&self, points: &Array2<T>) -> Result<Array2<T>> {
        let ev = evaluate_basis(&self.velocity.model, points, 0)?;
        Ok(ev.field(&self.velocity.theta)?.u)
    }

    pub fn predict_pressure(&self, points: &Array2<T>) -> Result<Option<Array2<T>>> {
        match &self.pressure {
            None => Ok(None),
            Some(p) => Ok(Some(evaluate_basis(&p.model, points, 0)?.field(&p.theta)?.u)),
        }
    }

    fn predict_test(&mut self) -> Result<Array2<T>> {
        let fresh = match &self.test_eval {
            Some((m, _)) => !Arc::ptr_eq(m, &self.velocity.model),
            None => true,
        };
        if fresh {
            let ev = evaluate_basis(&self.velocity.model, &self.test_points, 0)?;
            self.test_eval = Some((self.velocity.model.clone(), ev));
        }
        let (_, ev) = self.test_eval.as_ref().expect("set above");
        Ok(ev.field(&self.velocity.theta)?.u)
    }

    fn predict_test_pressure(&mut self) -> Result<Option<Array2<T>>> {
        let Some(p) = &self.pressure else {
            return Ok(None);
        };
        if self.pressure_test_eval.is_none() {
            self.pressure_test_eval = Some(evaluate_basis(&p.model, &self.test_points, 0)?);
        }
        let ev = self.pressure_test_eval.as_ref().expect("set above");
        Ok(Some(ev.field(&p.theta)?.u))
    }

    fn evaluate_row(&mut self, row: &mut StepRecord) -> Result<()> {
        let t = T::lit(row.t);
        let pred = self.predict_test()?;
        let Some(reference) = self.reference.values(&self.problem, &self.test_points, t)? else {
            return Ok(());
        };
        row.rel_l2 = rel_l2(&pred, &reference).map_or(f64::NAN, |v| v.as_f64());
        row.linf = linf(&pred, &reference)?.as_f64();
        if let Some(p) = self.predict_test_pressure()? {
            let rel_col = |c: usize| {
                let a = pred.column(c).to_owned().insert_axis(Axis(1));
                let b = reference.column(c).to_owned().insert_axis(Axis(1));
                rel_l2(&a, &b).map_or(f64::NAN, |v| v.as_f64())
            };
            let p_ref = ns_exact_pressure(&self.test_points, t);
            let p_rel = rel_l2(&p, &p_ref).map_or(f64::NAN, |v| v.as_f64());
            row.components = Some([rel_col(0), rel_col(1), p_rel]);
        }
        Ok(())
    }

    fn take_snapshot_if_requested(&mut self, t: f64) -> Result<()> {
        let tol = 1e-9 * self.config.dt;
        if !self.config.snapshot_times.iter().any(|&s| (s - t).abs() <= tol) {
            return Ok(());
        }
        let snap = self.snapshot()?;
        self.snapshots.push(snap);
        Ok(())
    }

    /// Prediction on the test grid at the current time.
    pub fn snapshot(&mut self) -> Result<FieldSnapshot> {
        let mut values = self.predict_test()?;
        if let Some(p) = self.predict_test_pressure()? {
            values = ndarray::concatenate(Axis(1), &[values.view(), p.view()])
                .map_err(|e| Error::shape(e.to_string()))?;
        }
        Ok(FieldSnapshot {
            t: self.time(),
            points: self.test_points.mapv(|v| v.as_f64()),
            values: values.mapv(|v| v.as_f64()),
        })
    }

    /// One step plus error evaluation; the row is appended to the record.
    pub fn advance(&mut self) -> Result<&StepRecord> {
        let mut row = self.step()?;
        self.evaluate_row(&mut row)?;
        self.take_snapshot_if_requested(row.t)?;
        self.record.rows.push(row);
        self.record.total_ms = self.started.elapsed().as_secs_f64() * 1e3;
        Ok(self.record.rows.last().expect("just pushed"))
    }

    /// Steps until `t_end`.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.advance()?;
        }
        self.record.total_ms = self.started.elapsed().as_secs_f64() * 1e3;
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.n_steps
    }

    pub fn time(&self) -> f64 {
        self.config.dt * self.step_index as f64
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn problem(&self) -> &PdeProblem<T> {
        &self.problem
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn snapshots(&self) -> &[FieldSnapshot] {
        &self.snapshots
    }

    pub fn model(&self) -> &RnbModel<T> {
        &self.velocity.model
    }

    pub fn theta(&self) -> &Array2<T> {
        &self.velocity.theta
    }

    pub fn pressure_theta(&self) -> Option<&Array2<T>> {
        self.pressure.as_ref().map(|p| &p.theta)
    }

    pub fn r_current(&self) -> f64 {
        self.velocity.r
    }

    /// Total least-squares solves so far, initial fit included.
    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn interior(&self) -> &Array2<T> {
        &self.interior
    }

    pub fn test_points(&self) -> &Array2<T> {
        &self.test_points
    }

    /// Newest fitted field on the interior points.
    pub fn field(&self) -> &FieldWithDerivs<T> {
        &self.history.newest().expect("initial state present").field
    }

    /// `max |∇·u|` of the learned velocity on `points`.
    pub fn divergence_linf(&self, points: &Array2<T>) -> Result<T> {
        if self.problem.out_dim != points.ncols() {
            return Err(Error::shape("divergence needs out_dim == dim"));
        }
        let f = evaluate_basis(&self.velocity.model, points, 1)?.field(&self.velocity.theta)?;
        let mut m = T::zero();
        for i in 0..points.nrows() {
            let div = (0..points.ncols()).fold(T::zero(), |a, d| a + f.du[d][[i, d]]);
            m = m.max(div.abs());
        }
        Ok(m)
    }
}

/// Everything a completed run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub snapshots: Vec<FieldSnapshot>,
}

pub fn run(config: SolverConfig) -> Result<RunOutput> {
    let mut s = Solver::<f64>::new(config)?;
    s.run()?;
    Ok(RunOutput {
        record: s.record().clone(),
        snapshots: s.snapshots().to_vec(),
    })
}

/// Alias kept for callers that think of ns2d as a separate entry point; the
/// coupling is selected from the problem.
pub fn run_ns(config: SolverConfig) -> Result<RunOutput> {
    if config.problem != Benchmark::Ns2d {
        return Err(Error::Config(format!(
            "run_ns needs ns2d, got {}",
            config.problem
        )));
    }
    run(config)
}
