//! Space-discretized time marching with random neural bases.

pub mod adaptive;
pub mod basis;
pub mod driver;
pub mod error;
pub mod field;
pub mod geometry;
pub mod integrators;
pub mod lsq;
pub mod problems;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Domain = geometry::Domain<f64>;
pub type RnbModel = basis::RnbModel<f64>;
pub type BasisEvaluation = basis::BasisEvaluation<f64>;
pub type FieldWithDerivs = field::FieldWithDerivs<f64>;
pub type LsqSystem = lsq::LsqSystem<f64>;
pub type QrFactor = lsq::QrFactor<f64>;
pub type SchemeId = integrators::SchemeId<f64>;
pub type PdeProblem = problems::PdeProblem<f64>;
pub type AdaptivePolicy = adaptive::AdaptivePolicy<f64>;
pub type SpectrumAnalysis = adaptive::SpectrumAnalysis<f64>;
pub type SpectralSolver = spectral::SpectralSolver<f64>;
pub type Solver = driver::Solver<f64>;
