use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adaptive::AdaptivePolicy;
use crate::error::{Error, Result};
use crate::integrators::SchemeId;
use crate::lsq::{DEFAULT_BC_WEIGHT, DEFAULT_RIDGE};
use crate::problems::{Benchmark, BoundaryKind, PdeProblem};
use crate::scalar::Real;
use crate::spectral;

pub const DEFAULT_INIT_ABORT: f64 = 1e-2;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave_number: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Hidden tanh layer widths (1 to 3 layers).
    pub hidden: Vec<usize>,
    /// Initialization coefficient: hidden weights are drawn from U[-r, r].
    pub r: f64,
    /// Fourier feature multipliers. Required (defaults to `[1]`) for
    /// hard-periodic problems.
    pub features: Option<Vec<u32>>,
    /// Feature period as a multiple of the domain extent.
    pub feature_period_scale: f64,
    /// Multi-scale variant: first-layer neurons get integer scales 1..=n_max.
    pub n_max: Option<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100],
            r: 1.0,
            features: None,
            feature_period_scale: 1.0,
            n_max: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingKind {
    Grid,
    Lhs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub kind: SamplingKind,
    /// Grid counts per axis, or `[n]` for a latin hypercube sample. Empty
    /// picks a per-dimension default.
    pub points: Vec<usize>,
    pub boundary_per_face: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            kind: SamplingKind::Grid,
            points: Vec::new(),
            boundary_per_face: crate::geometry::DEFAULT_POINTS_PER_FACE,
        }
    }
}

/// Where error-to-reference values come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSource {
    /// Closed form when available, otherwise the spectral solver for 1D
    /// periodic problems, otherwise none.
    #[default]
    Auto,
    Exact,
    /// Spectral solver advanced alongside the run.
    Spectral { n: usize, dt: f64 },
    /// Cached spectral snapshots; errors only at snapshot times and `t_end`.
    File { dir: PathBuf, n: usize, dt: f64 },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub problem: Benchmark,
    #[serde(default)]
    pub overrides: ProblemOverrides,
    pub scheme: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Pressure network for ns2d; defaults to `network`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_network: Option<NetworkConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bc_weight")]
    pub bc_weight: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptivePolicy<f64>>,
    /// Redraw the hidden layers and refactor at every step.
    #[serde(default)]
    pub reinit_every_step: bool,
    #[serde(default = "default_init_abort")]
    pub init_abort: f64,
    #[serde(default)]
    pub reference: ReferenceSource,
    /// Test grid counts per axis (endpoints included). Empty picks a default.
    #[serde(default)]
    pub test_grid: Vec<usize>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_bc_weight() -> f64 {
    DEFAULT_BC_WEIGHT
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

fn default_init_abort() -> f64 {
    DEFAULT_INIT_ABORT
}

impl SolverConfig {
    pub fn new(problem: Benchmark, scheme: &str, dt: f64, t_end: f64) -> Self {
        Self {
            problem,
            overrides: ProblemOverrides::default(),
            scheme: scheme.to_string(),
            beta: None,
            dt,
            t_end,
            network: NetworkConfig::default(),
            pressure_network: None,
            sampling: SamplingConfig::default(),
            seed: 0,
            bc_weight: DEFAULT_BC_WEIGHT,
            ridge: DEFAULT_RIDGE,
            adaptive: None,
            reinit_every_step: false,
            init_abort: DEFAULT_INIT_ABORT,
            reference: ReferenceSource::Auto,
            test_grid: Vec::new(),
            snapshot_times: Vec::new(),
        }
    }

    /// Desk-scale settings for each benchmark.
    pub fn preset(problem: Benchmark) -> Self {
        let net = |hidden: usize, r: f64, features: Option<Vec<u32>>| NetworkConfig {
            hidden: vec![hidden],
            r,
            features,
            ..NetworkConfig::default()
        };
        let grid = |points: Vec<usize>| SamplingConfig {
            points,
            ..SamplingConfig::default()
        };
        match problem {
            Benchmark::Advection1d => Self {
                network: net(200, 2.5, Some(vec![1])),
                sampling: grid(vec![1001]),
                ..Self::new(problem, "rk4", 1e-3, 1.0)
            },
            Benchmark::Burgers1d => Self {
                network: net(400, 1.0, Some(vec![1, 2])),
                sampling: grid(vec![4097]),
                adaptive: Some(AdaptivePolicy::default()),
                ..Self::new(problem, "exbdf4", 1e-3, 0.6)
            },
            Benchmark::Ac1dWave => Self {
                network: net(500, 50.0, None),
                sampling: grid(vec![2001]),
                ..Self::new(problem, "exbdf4", 1e-3, 1.0)
            },
            Benchmark::Ac1dScaled => Self {
                network: net(400, 1.0, Some(vec![1, 2])),
                sampling: grid(vec![2049]),
                ..Self::new(problem, "exbdf4", 1e-3, 1.0)
            },
            Benchmark::Ac2d => Self {
                network: net(400, 1.0, Some(vec![1])),
                sampling: grid(vec![41, 41]),
                ..Self::new(problem, "rk2", 5e-3, 4.0)
            },
            Benchmark::Ns2d => Self {
                network: NetworkConfig {
                    feature_period_scale: 2.0,
                    ..net(200, 1.0, Some(vec![1]))
                },
                sampling: grid(vec![33, 33]),
                ridge: 1e-10,
                ..Self::new(problem, "exbdf2", 1e-3, 0.1)
            },
            Benchmark::Heat1d => Self {
                network: net(100, 1.0, Some(vec![1])),
                sampling: grid(vec![257]),
                ..Self::new(problem, "bdf2", 1e-3, 1.0)
            },
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn problem<T: Real>(&self) -> PdeProblem<T> {
        let mut p = PdeProblem::new(self.problem);
        let o = &self.overrides;
        if let Some(v) = o.nu {
            p.nu = T::lit(v);
        }
        if let Some(v) = o.epsilon {
            p.epsilon = T::lit(v);
        }
        if let Some(v) = o.wave_number {
            p.wave_number = T::lit(v);
        }
        if let Some(b) = o.boundary {
            p.boundary = b;
        }
        p
    }

    pub fn scheme_id<T: Real>(&self) -> Result<SchemeId<T>> {
        SchemeId::parse(&self.scheme, self.beta.map(T::lit)).map_err(|e| Error::Config(e.to_string()))
    }

    /// Number of steps, `round(t_end / dt)`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        let ratio = self.t_end / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-12 * n.max(1.0) {
            return Err(Error::Config(format!(
                "dt {} does not divide t_end {}",
                self.dt, self.t_end
            )));
        }
        Ok(n as usize)
    }

    pub fn interior_counts(&self) -> Vec<usize> {
        if !self.sampling.points.is_empty() {
            return self.sampling.points.clone();
        }
        match self.problem::<f64>().dim() {
            1 => vec![1001],
            d => vec![41; d],
        }
    }

    pub fn test_counts(&self) -> Vec<usize> {
        if !self.test_grid.is_empty() {
            return self.test_grid.clone();
        }
        match self.problem::<f64>().dim() {
            1 => vec![513],
            d => vec![65; d],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let scheme = self.scheme_id::<f64>()?;
        self.steps()?;
        let problem = self.problem::<f64>();
        for (name, net) in std::iter::once(("network", &self.network))
            .chain(self.pressure_network.iter().map(|n| ("pressure_network", n)))
        {
            if net.hidden.is_empty() || net.hidden.len() > crate::basis::MAX_HIDDEN_LAYERS {
                return cfg(format!("{name}.hidden must list 1 to 3 widths"));
            }
            if net.hidden.contains(&0) {
                return cfg(format!("{name}.hidden widths must be positive"));
            }
            if !(net.r > 0.0) || !net.r.is_finite() {
                return cfg(format!("{name}.r must be positive"));
            }
            if !(net.feature_period_scale > 0.0) {
                return cfg(format!("{name}.feature_period_scale must be positive"));
            }
            if let Some(f) = &net.features {
                if f.is_empty() || f.contains(&0) {
                    return cfg(format!("{name}.features must be positive integers"));
                }
            }
            if let Some(n) = net.n_max {
                if n == 0 || n > net.hidden[0] {
                    return cfg(format!("{name}.n_max must lie in 1..={}", net.hidden[0]));
                }
            }
        }
        if problem.boundary == BoundaryKind::PeriodicHard
            && self.network.feature_period_scale != 1.0
        {
            return cfg("hard periodicity needs feature_period_scale = 1".into());
        }
        let dim = problem.dim();
        let pts = self.interior_counts();
        match self.sampling.kind {
            SamplingKind::Grid if pts.len() != dim || pts.iter().any(|&c| c < 2) => {
                return cfg(format!("sampling.points needs {dim} counts >= 2"));
            }
            SamplingKind::Lhs if pts.len() != 1 || pts[0] == 0 => {
                return cfg("sampling.points must be [n] for lhs".into());
            }
            _ => {}
        }
        if self.sampling.boundary_per_face == 0 {
            return cfg("sampling.boundary_per_face must be positive".into());
        }
        let tc = self.test_counts();
        if tc.len() != dim || tc.iter().any(|&c| c < 2) {
            return cfg(format!("test_grid needs {dim} counts >= 2"));
        }
        if !(self.ridge >= 0.0) || !(self.bc_weight >= 0.0) {
            return cfg("ridge and bc_weight must be non-negative".into());
        }
        if !(self.init_abort > 0.0) {
            return cfg("init_abort must be positive".into());
        }
        if let Some(p) = &self.adaptive {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
            if scheme.kind.is_implicit() {
                return cfg("adaptive reinitialization needs an explicit scheme".into());
            }
            if self.problem == Benchmark::Ns2d {
                return cfg("adaptive reinitialization is not supported for ns2d".into());
            }
        }
        if scheme.kind.is_implicit() && problem.linear_part().is_none() {
            return cfg(format!(
                "{} is implicit but {} is nonlinear",
                scheme.kind,
                problem.name()
            ));
        }
        for &t in &self.snapshot_times {
            if !(t >= 0.0) || t > self.t_end + 1e-12 {
                return cfg(format!("snapshot time {t} outside [0, t_end]"));
            }
            let r = t / self.dt;
            if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
                return cfg(format!("snapshot time {t} is not a multiple of dt"));
            }
        }
        match &self.reference {
            ReferenceSource::Exact if !problem.has_exact_solution() => {
                return cfg(format!("{} has no closed-form solution", problem.name()));
            }
            ReferenceSource::Spectral { n, dt } | ReferenceSource::File { n, dt, .. } => {
                spectral::SpectralModel::from_problem(&problem)
                    .map_err(|e| Error::Config(e.to_string()))?;
                if !n.is_power_of_two() || *n < 4 {
                    return cfg(format!("reference n {n} must be a power of two"));
                }
                let r = self.dt / dt;
                if !(*dt > 0.0) || (r - r.round()).abs() > 1e-9 * r.max(1.0) || r.round() < 1.0 {
                    return cfg("reference dt must divide dt".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}
