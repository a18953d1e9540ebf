//! Spectrum-driven choice of the initialization coefficient and the
//! reinitialization trigger.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_R_MAX: f64 = 100.0;
pub const DEFAULT_GRID_N: usize = 1024;

/// Two-sided DFT magnitudes `|c_j| / n` of a field sampled on a uniform
/// periodic grid. `indices[i]` is the signed frequency in units of `2π/L`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumAnalysis<T: Real> {
    pub indices: Vec<i64>,
    pub magnitudes: Vec<T>,
    pub grid_n: usize,
}

impl<T: Real> SpectrumAnalysis<T> {
    /// Largest `|index|` whose magnitude is at least `epsilon`.
    pub fn max_index_at_least(&self, epsilon: T) -> Option<u64> {
        self.indices
            .iter()
            .zip(&self.magnitudes)
            .filter(|(_, &m)| m >= epsilon)
            .map(|(&j, _)| j.unsigned_abs())
            .max()
    }

    /// Largest `|index|` whose magnitude strictly exceeds `epsilon`.
    pub fn max_index_above(&self, epsilon: T) -> Option<u64> {
        self.indices
            .iter()
            .zip(&self.magnitudes)
            .filter(|(_, &m)| m > epsilon)
            .map(|(&j, _)| j.unsigned_abs())
            .max()
    }

    pub fn energy(&self) -> T {
        self.magnitudes.iter().map(|&m| m * m).sum()
    }

    pub fn magnitude_at(&self, index: i64) -> Option<T> {
        self.indices
            .iter()
            .position(|&j| j == index)
            .map(|p| self.magnitudes[p])
    }
}

/// DFT of samples taken at `lo + i L / n`, `i = 0..n`.
pub fn analyze_spectrum<T: Real>(samples: &[T]) -> Result<SpectrumAnalysis<T>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("empty sample set"));
    }
    if !n.is_power_of_two() {
        return Err(Error::invalid(format!("grid size {n} is not a power of two")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectrum samples".into()));
    }
    let mut buf: Vec<Complex<T>> = samples.iter().map(|&v| Complex::new(v, T::zero())).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = T::one() / T::from_usize_lossy(n);
    let indices = (0..n)
        .map(|k| if k <= n / 2 { k as i64 } else { k as i64 - n as i64 })
        .collect();
    let magnitudes = buf.iter().map(|c| c.norm() * scale).collect();
    Ok(SpectrumAnalysis {
        indices,
        magnitudes,
        grid_n: n,
    })
}

/// Samples `f` on the periodic grid of `[lo, lo + period)` and analyses it.
pub fn analyze_function<T: Real>(
    f: impl Fn(T) -> T,
    lo: T,
    period: T,
    grid_n: usize,
) -> Result<SpectrumAnalysis<T>> {
    let h = period / T::from_usize_lossy(grid_n);
    let samples: Vec<T> = (0..grid_n)
        .map(|i| f(lo + h * T::from_usize_lossy(i)))
        .collect();
    analyze_spectrum(&samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields, default)]
pub struct AdaptivePolicy<T: Real> {
    /// Magnitude threshold, also the residual threshold of the trigger.
    pub epsilon: T,
    pub r_max: T,
    pub grid_n: usize,
}

impl<T: Real> Default for AdaptivePolicy<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(DEFAULT_EPSILON),
            r_max: T::lit(DEFAULT_R_MAX),
            grid_n: DEFAULT_GRID_N,
        }
    }
}

impl<T: Real> AdaptivePolicy<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !(self.r_max > T::zero()) {
            return Err(Error::invalid("epsilon and r_max must be positive"));
        }
        if !self.grid_n.is_power_of_two() || self.grid_n < 4 {
            return Err(Error::invalid(format!(
                "analysis grid {} must be a power of two >= 4",
                self.grid_n
            )));
        }
        Ok(())
    }
}

/// Initialization coefficient from a target spectrum: the highest frequency
/// index with magnitude `≥ ε`, capped at `r_max`, divided by the largest
/// feature multiplier. Falls back to 1 when only the mean qualifies.
pub fn adaptive_r<T: Real>(
    spectra: &[SpectrumAnalysis<T>],
    policy: &AdaptivePolicy<T>,
    max_multiplier: Option<u32>,
) -> T {
    let top = spectra
        .iter()
        .filter_map(|s| s.max_index_at_least(policy.epsilon))
        .max()
        .unwrap_or(0);
    if top == 0 {
        return T::one();
    }
    let r = T::lit(top as f64).min(policy.r_max);
    match max_multiplier {
        Some(b) if b > 0 => r / T::lit(b as f64),
        _ => r,
    }
}

/// Strict comparison: a residual equal to ε does not trigger.
pub fn should_reinit<T: Real>(prev_fit_residual: T, policy: &AdaptivePolicy<T>) -> bool {
    prev_fit_residual > policy.epsilon
}

/// ε-support of `tanh(k sin x)` on `[0, 2π)`: the largest `|j|` whose
/// two-sided coefficient magnitude exceeds ε (0 if none). The value must
/// survive a doubling of the grid.
pub fn frequency_support(k: f64, epsilon: f64, grid_n: usize) -> Result<u64> {
    let support = |n: usize| -> Result<u64> {
        let spec = analyze_function(
            |x: f64| (k * x.sin()).tanh(),
            0.0,
            2.0 * std::f64::consts::PI,
            n,
        )?;
        Ok(spec.max_index_above(epsilon).unwrap_or(0))
    };
    let coarse = support(grid_n)?;
    let fine = support(2 * grid_n)?;
    if coarse != fine {
        return Err(Error::Unresolved {
            grid_n,
            coarse: coarse as usize,
            fine: fine as usize,
        });
    }
    Ok(coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Direct O(n²) DFT magnitude at signed index `j`.
    fn dft_oracle(samples: &[f64], j: i64) -> f64 {
        let n = samples.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in samples.iter().enumerate() {
            let ang = -2.0 * PI * j as f64 * i as f64 / n;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        (re * re + im * im).sqrt() / n
    }

    fn samples(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| f(-1.0 + 2.0 * i as f64 / n as f64)).collect()
    }

    #[test]
    fn constant_field() {
        let s = analyze_spectrum(&vec![0.7f64; 64]).unwrap();
        assert!((s.magnitude_at(0).unwrap() - 0.7).abs() < 1e-15);
        assert!(s.magnitudes[1..].iter().all(|&m| m < 1e-15));
    }

    #[test]
    fn single_mode_matches_oracle() {
        let v = samples(|x| (5.0 * PI * x).sin(), 1024);
        let s = analyze_spectrum(&v).unwrap();
        let (best, _) = s
            .indices
            .iter()
            .zip(&s.magnitudes)
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(best.abs(), 5);
        assert!((s.magnitude_at(5).unwrap() - 0.5).abs() < 1e-12);
        assert!((s.magnitude_at(-5).unwrap() - 0.5).abs() < 1e-12);
        for j in [0, 1, 5, 17, -5, 300] {
            assert!((s.magnitude_at(j).unwrap() - dft_oracle(&v, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_modes_above_threshold() {
        let v = samples(|x| (PI * x).sin() + 0.1 * (20.0 * PI * x).sin(), 1024);
        let s = analyze_spectrum(&v).unwrap();
        let mut above: Vec<u64> = s
            .indices
            .iter()
            .zip(&s.magnitudes)
            .filter(|(_, &m)| m > 0.04)
            .map(|(&j, _)| j.unsigned_abs())
            .collect();
        above.sort();
        above.dedup();
        assert_eq!(above, vec![1, 20]);
    }

    #[test]
    fn parseval_identity() {
        for seed in 0..5u64 {
            let v = samples(
                |x| (x * 3.0 + seed as f64).sin().powi(3) + (0.3 * seed as f64 * x).cos() * x,
                512,
            );
            let s = analyze_spectrum(&v).unwrap();
            let mean_sq = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
            assert!((s.energy() - mean_sq).abs() <= 1e-10 * mean_sq);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(analyze_spectrum(&[1.0f64; 6]).is_err());
        assert!(analyze_spectrum(&[1.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn adaptive_r_examples() {
        let policy = AdaptivePolicy {
            epsilon: 0.1,
            r_max: 100.0,
            grid_n: 1024,
        };
        let s = analyze_spectrum(&samples(|x| (5.0 * PI * x).sin(), 1024)).unwrap();
        assert_eq!(adaptive_r(&[s], &policy, Some(1)), 5.0);

        let s = analyze_spectrum(&samples(|x| (150.0 * PI * x).sin(), 1024)).unwrap();
        assert_eq!(adaptive_r(&[s], &policy, Some(1)), 100.0);

        let s = analyze_spectrum(&samples(|x| (20.0 * PI * x).sin(), 1024)).unwrap();
        assert_eq!(adaptive_r(&[s], &policy, Some(2)), 10.0);

        let s = analyze_spectrum(&[0.0f64; 16]).unwrap();
        assert_eq!(adaptive_r(&[s], &policy, Some(1)), 1.0);
    }

    #[test]
    fn reinit_trigger() {
        let policy = AdaptivePolicy::<f64>::default();
        assert!(should_reinit(1e-3, &policy));
        assert!(!should_reinit(0.0, &policy));
        assert!(!should_reinit(1e-4, &policy));
    }

    #[test]
    fn support_of_zero_scale() {
        assert_eq!(frequency_support(0.0, 1e-8, 256).unwrap(), 0);
    }

    #[test]
    fn support_detects_underresolution() {
        // 16 points cannot resolve tanh(20 sin x) down to 1e-8
        assert!(matches!(
            frequency_support(20.0, 1e-8, 16),
            Err(Error::Unresolved { .. })
        ));
    }

    proptest! {
        #[test]
        fn raising_epsilon_never_raises_r(e1 in 1e-8f64..1.0, e2 in 1e-8f64..1.0, a in 0.0f64..1.0) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let v = samples(|x| (PI * x).sin() + a * (9.0 * PI * x).cos() + 0.01 * (30.0 * PI * x).sin(), 256);
            let s = analyze_spectrum(&v).unwrap();
            let p = |e| AdaptivePolicy { epsilon: e, r_max: 100.0, grid_n: 256 };
            prop_assert!(adaptive_r(std::slice::from_ref(&s), &p(hi), None) <= adaptive_r(&[s], &p(lo), None));
        }
    }
}
