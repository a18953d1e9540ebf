//! Random neural bases: frozen tanh networks whose last hidden layer is used
//! as a set of basis functions, with closed-form spatial derivatives.
//!
//! The network maps an input `x` through an optional Fourier feature layer
//! `[sin(Bx), cos(Bx)]`, an optional integer scale vector on the first tanh
//! layer's fan-in (the multi-scale variant), and one to three tanh layers.
//! Only the output coefficients are ever fitted.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldWithDerivs;
use crate::scalar::Real;

pub const MAX_HIDDEN_LAYERS: usize = 3;
const MODEL_FORMAT: &str = "sdtm-rnb";
const MODEL_VERSION: u32 = 1;

/// Sin/cos feature layer. Row `j` of `multipliers` holds the integer
/// multiples of `2π/L_i` used along each input axis `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FourierFeatureMap<T: Real> {
    multipliers: Vec<Vec<u32>>,
    periods: Vec<T>,
}

impl<T: Real> FourierFeatureMap<T> {
    pub fn new(multipliers: Vec<Vec<u32>>, periods: Vec<T>) -> Result<Self> {
        if multipliers.is_empty() {
            return Err(Error::invalid("feature map needs at least one row"));
        }
        if periods.is_empty() || periods.iter().any(|p| !(*p > T::zero())) {
            return Err(Error::invalid("feature map periods must be positive"));
        }
        for (j, row) in multipliers.iter().enumerate() {
            if row.len() != periods.len() {
                return Err(Error::shape(format!(
                    "feature row {j} has {} entries for {} input dims",
                    row.len(),
                    periods.len()
                )));
            }
            if row.iter().all(|&b| b == 0) {
                return Err(Error::invalid(format!("feature row {j} is all zero")));
            }
        }
        Ok(Self {
            multipliers,
            periods,
        })
    }

    /// One row per (multiplier, axis) pair: `b * e_i`. In 1D this is simply
    /// the column vector of multipliers.
    pub fn axis_aligned(multipliers: &[u32], periods: Vec<T>) -> Result<Self> {
        if multipliers.contains(&0) {
            return Err(Error::invalid("feature multipliers must be positive"));
        }
        let dim = periods.len();
        let rows = multipliers
            .iter()
            .flat_map(|&b| {
                (0..dim).map(move |axis| {
                    let mut row = vec![0; dim];
                    row[axis] = b;
                    row
                })
            })
            .collect();
        Self::new(rows, periods)
    }

    pub fn input_dim(&self) -> usize {
        self.periods.len()
    }

    /// Number of emitted features (two per row).
    pub fn feature_count(&self) -> usize {
        2 * self.multipliers.len()
    }

    pub fn multipliers(&self) -> &[Vec<u32>] {
        &self.multipliers
    }

    pub fn periods(&self) -> &[T] {
        &self.periods
    }

    pub fn max_multiplier(&self) -> u32 {
        self.multipliers
            .iter()
            .flat_map(|r| r.iter().copied())
            .max()
            .unwrap_or(1)
    }

    fn angular(&self) -> Array2<T> {
        let rows = self.multipliers.len();
        let dim = self.input_dim();
        Array2::from_shape_fn((rows, dim), |(j, i)| {
            T::lit(self.multipliers[j][i] as f64) * T::lit(2.0 * PI) / self.periods[i]
        })
    }

    /// Features and their derivatives: `(z, dz[i], d2z[i])`, each N x 2p with
    /// the sin block first.
    fn apply(&self, points: &Array2<T>, order: usize) -> Stage<T> {
        let omega = self.angular();
        let phase = points.dot(&omega.t());
        let p = omega.nrows();
        let n = points.nrows();
        let sin = phase.mapv(T::sin);
        let cos = phase.mapv(T::cos);
        let mut z = Array2::zeros((n, 2 * p));
        z.slice_mut(s![.., ..p]).assign(&sin);
        z.slice_mut(s![.., p..]).assign(&cos);
        let mut dz = Vec::new();
        let mut d2z = Vec::new();
        if order >= 1 {
            for i in 0..self.input_dim() {
                let w = omega.column(i);
                let mut d = Array2::zeros((n, 2 * p));
                Zip::from(d.slice_mut(s![.., ..p]).rows_mut())
                    .and(cos.rows())
                    .for_each(|mut out, c| {
                        Zip::from(&mut out).and(&c).and(&w).for_each(|o, &c, &w| *o = w * c)
                    });
                Zip::from(d.slice_mut(s![.., p..]).rows_mut())
                    .and(sin.rows())
                    .for_each(|mut out, sn| {
                        Zip::from(&mut out).and(&sn).and(&w).for_each(|o, &s, &w| *o = -w * s)
                    });
                dz.push(d);
                if order >= 2 {
                    let w2 = w.mapv(|v| v * v);
                    let mut dd = z.clone();
                    for mut row in dd.rows_mut() {
                        Zip::from(row.slice_mut(s![..p])).and(&w2).for_each(|o, &w| *o = -w * *o);
                        Zip::from(row.slice_mut(s![p..])).and(&w2).for_each(|o, &w| *o = -w * *o);
                    }
                    d2z.push(dd);
                }
            }
        }
        Stage { z, dz, d2z }
    }
}

/// Integer scale factors applied per neuron to the first tanh layer's fan-in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleVector {
    scales: Vec<u32>,
}

impl ScaleVector {
    pub fn new(scales: Vec<u32>) -> Result<Self> {
        if scales.is_empty() || scales.contains(&0) {
            return Err(Error::invalid("scale entries must be >= 1"));
        }
        Ok(Self { scales })
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.scales
    }

    pub fn max(&self) -> u32 {
        self.scales.iter().copied().max().unwrap_or(1)
    }
}

/// Splits `width` neurons into `n_max` consecutive segments filled with
/// `1, 2, ..., n_max`. When `n_max` does not divide `width`, the last segment
/// takes the remainder.
pub fn make_msrnb_scales(width: usize, n_max: usize) -> Result<ScaleVector> {
    if n_max == 0 || n_max > width {
        return Err(Error::invalid(format!(
            "n_max must lie in 1..={width}, got {n_max}"
        )));
    }
    let seg = width / n_max;
    let scales = (0..width)
        .map(|i| ((i / seg).min(n_max - 1) + 1) as u32)
        .collect();
    ScaleVector::new(scales)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DenseLayer<T: Real> {
    /// out x in
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Frozen tanh layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HiddenStack<T: Real> {
    layers: Vec<DenseLayer<T>>,
    init_coefficient: T,
    seed: u64,
}

impl<T: Real> HiddenStack<T> {
    /// Weights ~ U[-r, r], biases ~ N(0, 1), drawn layer by layer (weights
    /// row-major, then biases) from one ChaCha stream.
    pub fn random(fan_in: usize, widths: &[usize], r: T, seed: u64) -> Result<Self> {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::invalid(format!(
                "initialization coefficient must be positive, got {r}"
            )));
        }
        if widths.is_empty() || widths.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::invalid(format!(
                "need 1..={MAX_HIDDEN_LAYERS} hidden layers, got {}",
                widths.len()
            )));
        }
        if widths.contains(&0) || fan_in == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r64 = r.as_f64();
        let uniform = Uniform::new_inclusive(-r64, r64);
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = fan_in;
        for &w in widths {
            let weights = Array2::from_shape_simple_fn((w, prev), || {
                // cast can round an f32 endpoint outward; clamp keeps |w| <= r
                T::lit(uniform.sample(&mut rng)).max(-r).min(r)
            });
            let bias = Array1::from_shape_simple_fn(w, || {
                let b: f64 = StandardNormal.sample(&mut rng);
                T::lit(b)
            });
            layers.push(DenseLayer { weights, bias });
            prev = w;
        }
        Ok(Self {
            layers,
            init_coefficient: r,
            seed,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>, init_coefficient: T, seed: u64) -> Result<Self> {
        if layers.is_empty() || layers.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::invalid("need 1..=3 hidden layers"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.nrows() {
                return Err(Error::shape(format!("layer {l}: bias/weight mismatch")));
            }
            if l > 0 && layer.weights.ncols() != layers[l - 1].weights.nrows() {
                return Err(Error::shape(format!("layer {l}: fan-in mismatch")));
            }
        }
        Ok(Self {
            layers,
            init_coefficient,
            seed,
        })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn init_coefficient(&self) -> T {
        self.init_coefficient
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fan_in(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn max_abs_weight(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .fold(T::zero(), |m, w| m.max(w.abs()))
    }
}

/// Architecture of a random-basis network, independent of the drawn weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture<T: Real> {
    pub widths: Vec<usize>,
    pub feature_map: Option<FourierFeatureMap<T>>,
    pub scale: Option<ScaleVector>,
}

/// A network with frozen hidden layers and a trainable linear output layer:
/// `y(x) = W_out · φ(x) + b_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RnbModel<T: Real> {
    input_dim: usize,
    feature_map: Option<FourierFeatureMap<T>>,
    scale: Option<ScaleVector>,
    hidden: HiddenStack<T>,
    /// d x M
    out_coeffs: Array2<T>,
    out_bias: Array1<T>,
}

/// Builds a random-basis network.
///
/// `widths` lists every layer: `[input, (features,) hidden.., out]`. With a
/// feature map the second entry must equal its feature count.
pub fn init_rnb<T: Real>(
    widths: &[usize],
    r: T,
    feature_map: Option<FourierFeatureMap<T>>,
    scale: Option<ScaleVector>,
    seed: u64,
    out_dim: usize,
) -> Result<RnbModel<T>> {
    let arch = Architecture {
        widths: widths.to_vec(),
        feature_map,
        scale,
    };
    RnbModel::random(&arch, r, seed, out_dim)
}

impl<T: Real> RnbModel<T> {
    pub fn random(arch: &Architecture<T>, r: T, seed: u64, out_dim: usize) -> Result<Self> {
        let widths = &arch.widths;
        let min_len = if arch.feature_map.is_some() { 4 } else { 3 };
        if widths.len() < min_len {
            return Err(Error::invalid(format!(
                "widths {widths:?} too short (need input, hidden and output layers)"
            )));
        }
        let input_dim = widths[0];
        if widths[widths.len() - 1] != out_dim {
            return Err(Error::shape(format!(
                "last width {} differs from out_dim {out_dim}",
                widths[widths.len() - 1]
            )));
        }
        let (fan_in, hidden_widths) = match &arch.feature_map {
            Some(fm) => {
                if fm.input_dim() != input_dim {
                    return Err(Error::shape(format!(
                        "feature map expects {} inputs, widths say {input_dim}",
                        fm.input_dim()
                    )));
                }
                if fm.feature_count() != widths[1] {
                    return Err(Error::shape(format!(
                        "feature layer emits {} values, widths say {}",
                        fm.feature_count(),
                        widths[1]
                    )));
                }
                (widths[1], &widths[2..widths.len() - 1])
            }
            None => (input_dim, &widths[1..widths.len() - 1]),
        };
        if let Some(k) = &arch.scale {
            if k.len() != hidden_widths[0] {
                return Err(Error::shape(format!(
                    "scale vector length {} differs from first hidden width {}",
                    k.len(),
                    hidden_widths[0]
                )));
            }
        }
        let hidden = HiddenStack::random(fan_in, hidden_widths, r, seed)?;
        let m = hidden.output_width();
        Ok(Self {
            input_dim,
            feature_map: arch.feature_map.clone(),
            scale: arch.scale.clone(),
            hidden,
            out_coeffs: Array2::zeros((out_dim, m)),
            out_bias: Array1::zeros(out_dim),
        })
    }

    /// Assembles a model from explicit parts; output coefficients start at zero.
    pub fn from_parts(
        input_dim: usize,
        feature_map: Option<FourierFeatureMap<T>>,
        scale: Option<ScaleVector>,
        hidden: HiddenStack<T>,
        out_dim: usize,
    ) -> Result<Self> {
        let expected_fan_in = feature_map
            .as_ref()
            .map_or(input_dim, FourierFeatureMap::feature_count);
        if hidden.fan_in() != expected_fan_in {
            return Err(Error::shape(format!(
                "hidden fan-in {} differs from {expected_fan_in}",
                hidden.fan_in()
            )));
        }
        if let Some(k) = &scale {
            if k.len() != hidden.layers[0].weights.nrows() {
                return Err(Error::shape("scale vector length mismatch"));
            }
        }
        let m = hidden.output_width();
        Ok(Self {
            input_dim,
            feature_map,
            scale,
            hidden,
            out_coeffs: Array2::zeros((out_dim, m)),
            out_bias: Array1::zeros(out_dim),
        })
    }

    /// Same architecture with freshly drawn hidden parameters.
    pub fn redraw(&self, r: T, seed: u64) -> Result<Self> {
        let widths: Vec<usize> = self.hidden.layers.iter().map(|l| l.weights.nrows()).collect();
        let hidden = HiddenStack::random(self.hidden.fan_in(), &widths, r, seed)?;
        Self::from_parts(
            self.input_dim,
            self.feature_map.clone(),
            self.scale.clone(),
            hidden,
            self.out_dim(),
        )
    }

    pub fn architecture(&self) -> Architecture<T> {
        Architecture {
            widths: self.widths(),
            feature_map: self.feature_map.clone(),
            scale: self.scale.clone(),
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        if let Some(fm) = &self.feature_map {
            w.push(fm.feature_count());
        }
        w.extend(self.hidden.layers.iter().map(|l| l.weights.nrows()));
        w.push(self.out_dim());
        w
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn basis_count(&self) -> usize {
        self.hidden.output_width()
    }

    pub fn out_dim(&self) -> usize {
        self.out_coeffs.nrows()
    }

    pub fn feature_map(&self) -> Option<&FourierFeatureMap<T>> {
        self.feature_map.as_ref()
    }

    pub fn scale(&self) -> Option<&ScaleVector> {
        self.scale.as_ref()
    }

    pub fn hidden(&self) -> &HiddenStack<T> {
        &self.hidden
    }

    pub fn out_coeffs(&self) -> &Array2<T> {
        &self.out_coeffs
    }

    pub fn out_bias(&self) -> &Array1<T> {
        &self.out_bias
    }

    /// Trainable parameters stacked as (M+1) x d, bias in the last row.
    pub fn theta(&self) -> Array2<T> {
        let m = self.basis_count();
        let mut th = Array2::zeros((m + 1, self.out_dim()));
        th.slice_mut(s![..m, ..]).assign(&self.out_coeffs.t());
        th.row_mut(m).assign(&self.out_bias);
        th
    }

    pub fn set_theta(&mut self, theta: &Array2<T>) -> Result<()> {
        let m = self.basis_count();
        if theta.dim() != (m + 1, self.out_dim()) {
            return Err(Error::shape(format!(
                "theta shape {:?}, expected {:?}",
                theta.dim(),
                (m + 1, self.out_dim())
            )));
        }
        self.out_coeffs.assign(&theta.slice(s![..m, ..]).t());
        self.out_bias.assign(&theta.row(m));
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let envelope = serde_json::json!({
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "model": self,
        });
        fs::write(path, serde_json::to_string(&envelope)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        let format = value.get("format").and_then(|v| v.as_str());
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != Some(MODEL_FORMAT) || version != Some(MODEL_VERSION as u64) {
            return Err(Error::invalid(format!(
                "unsupported model file (format {format:?}, version {version:?})"
            )));
        }
        let model = value
            .get_mut("model")
            .map(serde_json::Value::take)
            .ok_or_else(|| Error::invalid("model file has no `model` field"))?;
        Ok(serde_json::from_value(model)?)
    }
}

struct Stage<T: Real> {
    z: Array2<T>,
    dz: Vec<Array2<T>>,
    d2z: Vec<Array2<T>>,
}

/// Basis values and pure spatial derivatives at a point set.
#[derive(Clone, Debug)]
pub struct BasisEvaluation<T: Real> {
    /// N x M
    pub values: Array2<T>,
    /// per spatial dim, N x M
    pub grad: Vec<Array2<T>>,
    /// per spatial dim, N x M, pure second derivatives
    pub lap_terms: Vec<Array2<T>>,
}

impl<T: Real> BasisEvaluation<T> {
    pub fn npoints(&self) -> usize {
        self.values.nrows()
    }

    pub fn basis_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn order(&self) -> usize {
        if !self.lap_terms.is_empty() {
            2
        } else if !self.grad.is_empty() {
            1
        } else {
            0
        }
    }

    /// Field `Φ W + b` and its derivatives for a coefficient matrix
    /// `theta` ((M+1) x d, bias last).
    pub fn field(&self, theta: &Array2<T>) -> Result<FieldWithDerivs<T>> {
        let m = self.basis_count();
        if theta.nrows() != m + 1 {
            return Err(Error::shape(format!(
                "theta has {} rows for {m} basis functions plus bias",
                theta.nrows()
            )));
        }
        let w = theta.slice(s![..m, ..]);
        let mut u = self.values.dot(&w);
        u += &theta.row(m);
        let du = self.grad.iter().map(|g| g.dot(&w)).collect();
        let d2u = self.lap_terms.iter().map(|g| g.dot(&w)).collect();
        Ok(FieldWithDerivs { u, du, d2u })
    }

    /// Design block `[Φ | 1]` (N x (M+1)).
    pub fn design_block(&self) -> Array2<T> {
        let (n, m) = self.values.dim();
        let mut a = Array2::ones((n, m + 1));
        a.slice_mut(s![.., ..m]).assign(&self.values);
        a
    }
}

/// Evaluates every basis function (and derivatives up to `order`) at each row
/// of `points` by forward-mode chain rule through the frozen layers.
pub fn evaluate_basis<T: Real>(
    model: &RnbModel<T>,
    points: &Array2<T>,
    order: usize,
) -> Result<BasisEvaluation<T>> {
    if order > 2 {
        return Err(Error::Unsupported(format!(
            "basis derivatives of order {order} (max 2)"
        )));
    }
    if points.ncols() != model.input_dim {
        return Err(Error::shape(format!(
            "points have dim {}, model expects {}",
            points.ncols(),
            model.input_dim
        )));
    }
    let n = points.nrows();
    let dim = model.input_dim;
    let mut stage = match &model.feature_map {
        Some(fm) => fm.apply(points, order),
        None => {
            let dz = if order >= 1 {
                (0..dim)
                    .map(|i| {
                        let mut e = Array2::zeros((n, dim));
                        e.column_mut(i).fill(T::one());
                        e
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let d2z = if order >= 2 {
                (0..dim).map(|_| Array2::zeros((n, dim))).collect()
            } else {
                Vec::new()
            };
            Stage {
                z: points.to_owned(),
                dz,
                d2z,
            }
        }
    };

    for (l, layer) in model.hidden.layers.iter().enumerate() {
        let mut wt = layer.weights.t().to_owned();
        if l == 0 {
            if let Some(k) = &model.scale {
                for (mut col, &kj) in wt.axis_iter_mut(Axis(1)).zip(k.as_slice()) {
                    col.mapv_inplace(|v| v * T::lit(kj as f64));
                }
            }
        }
        let mut a = stage.z.dot(&wt);
        a += &layer.bias;
        let da: Vec<Array2<T>> = stage.dz.iter().map(|d| d.dot(&wt)).collect();
        let d2a: Vec<Array2<T>> = stage.d2z.iter().map(|d| d.dot(&wt)).collect();

        let s_val = a.mapv(T::tanh);
        let slope = s_val.mapv(|s| T::one() - s * s);
        let mut ds = Vec::with_capacity(da.len());
        let mut d2s = Vec::with_capacity(d2a.len());
        for (i, dai) in da.iter().enumerate() {
            let mut out = dai.clone();
            Zip::from(&mut out).and(&slope).for_each(|o, &g| *o = g * *o);
            if let Some(d2ai) = d2a.get(i) {
                // (tanh a)'' = (1 - s^2) a'' - 2 s (1 - s^2) a'^2
                let mut second = d2ai.clone();
                Zip::from(&mut second)
                    .and(dai)
                    .and(&s_val)
                    .and(&slope)
                    .for_each(|o, &d1, &sv, &g| *o = g * (*o - T::lit(2.0) * sv * d1 * d1));
                d2s.push(second);
            }
            ds.push(out);
        }
        stage = Stage {
            z: s_val,
            dz: ds,
            d2z: d2s,
        };
    }

    Ok(BasisEvaluation {
        values: stage.z,
        grad: stage.dz,
        lap_terms: stage.d2z,
    })
}

/// Network output `Φ W_outᵀ + b_out` (N x d) for a basis evaluated from `model`.
pub fn predict<T: Real>(model: &RnbModel<T>, basis_eval: &BasisEvaluation<T>) -> Result<Array2<T>> {
    if basis_eval.basis_count() != model.basis_count() {
        return Err(Error::shape(format!(
            "basis evaluation has {} functions, model {}",
            basis_eval.basis_count(),
            model.basis_count()
        )));
    }
    let mut out = basis_eval.values.dot(&model.out_coeffs.t());
    out += &model.out_bias;
    Ok(out)
}
