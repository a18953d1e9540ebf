//! Parameter sweeps built on top of single runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use serde::Serialize;

use super::{build_model, fit_values, run, RunOutput, SolverConfig};
use crate::adaptive::frequency_support;
use crate::error::{Error, Result};
use crate::geometry::uniform_grid;
use crate::lsq::LsqWeights;
use crate::problems::{Benchmark, BoundaryKind, PdeProblem};
use crate::spectral::{spectral_solve, DEFAULT_DT, DEFAULT_N};

/// Runs `jobs` on up to `threads` workers; results keep the input order.
pub fn parallel_map<I, O, F>(jobs: Vec<I>, threads: usize, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync,
{
    let n = jobs.len();
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return jobs.into_iter().map(f).collect();
    }
    let queue: Mutex<Vec<Option<I>>> = Mutex::new(jobs.into_iter().map(Some).collect());
    let out: Mutex<Vec<Option<O>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let job = queue.lock().expect("queue poisoned")[i].take().expect("job taken once");
                let r = f(job);
                out.lock().expect("output poisoned")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("output poisoned")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}

/// Least-squares slope of `log y` against `log x` over the finite, positive
/// pairs. `None` with fewer than two such pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite() && **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub scheme: String,
    pub dt: f64,
    pub width: usize,
    pub rel_l2: f64,
    pub linf: f64,
    pub wall_ms: f64,
    pub diverged: bool,
}

impl SweepRow {
    fn from_result(cfg: &SolverConfig, res: Result<RunOutput>) -> Result<Self> {
        let (rel_l2, linf, wall_ms, diverged) = match res {
            Ok(o) => (
                o.record.final_rel_l2(),
                o.record.final_linf(),
                o.record.total_ms,
                false,
            ),
            Err(e) if e.is_divergence() => (f64::NAN, f64::NAN, f64::NAN, true),
            Err(e) => return Err(e),
        };
        Ok(Self {
            scheme: cfg.scheme.clone(),
            dt: cfg.dt,
            width: cfg.network.hidden[0],
            rel_l2,
            linf,
            wall_ms,
            diverged,
        })
    }
}

fn sweep(configs: Vec<SolverConfig>, threads: usize) -> Result<Vec<SweepRow>> {
    for c in &configs {
        c.validate()?;
    }
    parallel_map(configs, threads, |c| {
        let res = run(c.clone());
        SweepRow::from_result(&c, res)
    })
    .into_iter()
    .collect()
}

/// Final errors for every (scheme, dt) pair, schemes in the given order.
pub fn convergence_study(
    base: &SolverConfig,
    schemes: &[String],
    dts: &[f64],
    threads: usize,
) -> Result<Vec<SweepRow>> {
    let mut configs = Vec::new();
    for s in schemes {
        for &dt in dts {
            let mut c = base.clone();
            c.scheme = s.clone();
            c.dt = dt;
            configs.push(c);
        }
    }
    sweep(configs, threads)
}

/// Fitted order per scheme from the rows of [`convergence_study`];
/// diverged runs are left out.
pub fn scheme_slopes(rows: &[SweepRow]) -> Vec<(String, Option<f64>)> {
    let mut names: Vec<String> = Vec::new();
    for r in rows {
        if !names.contains(&r.scheme) {
            names.push(r.scheme.clone());
        }
    }
    names
        .into_iter()
        .map(|s| {
            let (dt, e): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.scheme == s && !r.diverged)
                .map(|r| (r.dt, r.rel_l2))
                .unzip();
            let slope = loglog_slope(&dt, &e);
            (s, slope)
        })
        .collect()
}

pub fn width_sweep(base: &SolverConfig, widths: &[usize], threads: usize) -> Result<Vec<SweepRow>> {
    if widths.contains(&0) {
        return Err(Error::Config("widths must be positive".into()));
    }
    let configs = widths
        .iter()
        .map(|&w| {
            let mut c = base.clone();
            c.network.hidden[0] = w;
            c
        })
        .collect();
    sweep(configs, threads)
}

/// Supervised target for [`fit_study`].
#[derive(Clone, Debug, PartialEq)]
pub enum FitTarget {
    /// `sin(k π x)` on [-1, 1].
    Sine { k: f64 },
    /// Spectral Burgers solution at time `t`.
    Burgers { t: f64 },
}

impl FitTarget {
    pub fn label(&self) -> String {
        match self {
            FitTarget::Sine { k } => format!("sin{k}"),
            FitTarget::Burgers { t } => format!("burgers_t{t}"),
        }
    }

    fn values(&self, problem: &PdeProblem<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            FitTarget::Sine { k } => Ok(x.mapv(|v| (k * std::f64::consts::PI * v).sin())),
            FitTarget::Burgers { t } => {
                let snap = spectral_solve(problem, DEFAULT_N, DEFAULT_DT, &[*t])?.remove(0);
                snap.interpolate(x)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitRow {
    pub target: String,
    pub r: f64,
    pub seed: u64,
    pub mse: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub target: String,
    pub r: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
}

/// MSE of least-squares fits of `target` for every `r` and seed `0..seeds`.
pub fn fit_study(
    target: &FitTarget,
    network: &super::NetworkConfig,
    points: usize,
    rs: &[f64],
    seeds: u64,
    threads: usize,
) -> Result<(Vec<FitRow>, Vec<FitSummary>)> {
    if rs.iter().any(|&r| !(r > 0.0)) || seeds == 0 || points < 2 {
        return Err(Error::Config("fit needs r > 0, seeds >= 1, points >= 2".into()));
    }
    let problem = PdeProblem::<f64>::new(Benchmark::Burgers1d);
    let x = uniform_grid(&problem.domain, &[points])?;
    let y = target.values(&problem, &x)?;
    let jobs: Vec<(f64, u64)> = rs
        .iter()
        .flat_map(|&r| (0..seeds).map(move |s| (r, s)))
        .collect();
    let hard = problem.boundary == BoundaryKind::PeriodicHard;
    let rows = parallel_map(jobs, threads, |(r, seed)| -> Result<FitRow> {
        let mut net = network.clone();
        net.r = r;
        let model = build_model(&net, &problem.domain, hard, 1, seed)?;
        let (_, rms) = fit_values(&model, &x, &y, &LsqWeights::default())?;
        Ok(FitRow {
            target: target.label(),
            r,
            seed,
            mse: rms * rms,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let summary = rs
        .iter()
        .map(|&r| {
            let m: Vec<f64> = rows.iter().filter(|f| f.r == r).map(|f| f.mse).collect();
            let n = m.len() as f64;
            let mean = m.iter().sum::<f64>() / n;
            let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            FitSummary {
                target: target.label(),
                r,
                mse_mean: mean,
                mse_std: var.sqrt(),
            }
        })
        .collect();
    Ok((rows, summary))
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportRow {
    pub k: f64,
    pub support: u64,
    /// `S_k / k`; NaN at k = 0.
    pub ratio: f64,
}

pub fn support_table(ks: &[f64], epsilon: f64, grid_n: usize) -> Result<Vec<SupportRow>> {
    ks.iter()
        .map(|&k| {
            let s = frequency_support(k, epsilon, grid_n)?;
            Ok(SupportRow {
                k,
                support: s,
                ratio: if k == 0.0 { f64::NAN } else { s as f64 / k },
            })
        })
        .collect()
}
