//! Time integrators that turn history states into the next-step target field.
//!
//! Explicit schemes produce pointwise target values which are then fitted by
//! least squares. Implicit schemes (linear operators only) produce design rows
//! and a right-hand side instead.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use num_traits::{FromPrimitive, Num};

use crate::basis::{BasisEvaluation, RnbModel};
use crate::error::{Error, Result};
use crate::field::FieldWithDerivs;
use crate::problems::{LinearOperator, Term};
use crate::scalar::Real;

pub const DEFAULT_BETA: f64 = 2.0;
const MAX_BDF_ORDER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    EulerExplicit,
    EulerImplicit,
    Rk2,
    Rk4,
    Bdf2Implicit,
    Bdf4Implicit,
    ExBdf2Beta,
    ExBdf4Beta,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 8] = [
        SchemeKind::EulerExplicit,
        SchemeKind::EulerImplicit,
        SchemeKind::Rk2,
        SchemeKind::Rk4,
        SchemeKind::Bdf2Implicit,
        SchemeKind::Bdf4Implicit,
        SchemeKind::ExBdf2Beta,
        SchemeKind::ExBdf4Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::EulerExplicit => "euler",
            SchemeKind::EulerImplicit => "euler-implicit",
            SchemeKind::Rk2 => "rk2",
            SchemeKind::Rk4 => "rk4",
            SchemeKind::Bdf2Implicit => "bdf2",
            SchemeKind::Bdf4Implicit => "bdf4",
            SchemeKind::ExBdf2Beta => "exbdf2",
            SchemeKind::ExBdf4Beta => "exbdf4",
        }
    }

    pub fn is_implicit(self) -> bool {
        matches!(
            self,
            SchemeKind::EulerImplicit | SchemeKind::Bdf2Implicit | SchemeKind::Bdf4Implicit
        )
    }

    /// Number of history states the step consumes.
    pub fn steps(self) -> usize {
        match self {
            SchemeKind::Bdf2Implicit | SchemeKind::ExBdf2Beta => 2,
            SchemeKind::Bdf4Implicit | SchemeKind::ExBdf4Beta => 4,
            _ => 1,
        }
    }

    /// Number of right-hand-side evaluations that need a projected stage.
    pub fn projected_stages(self) -> usize {
        match self {
            SchemeKind::Rk2 => 1,
            SchemeKind::Rk4 => 3,
            _ => 0,
        }
    }

    pub fn order(self) -> usize {
        match self {
            SchemeKind::EulerExplicit | SchemeKind::EulerImplicit => 1,
            SchemeKind::Rk2 | SchemeKind::Bdf2Implicit | SchemeKind::ExBdf2Beta => 2,
            SchemeKind::Rk4 | SchemeKind::Bdf4Implicit | SchemeKind::ExBdf4Beta => 4,
        }
    }

    fn uses_beta(self) -> bool {
        matches!(self, SchemeKind::ExBdf2Beta | SchemeKind::ExBdf4Beta)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::invalid(format!("unknown scheme `{s}` (expected one of {names:?})"))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeId<T: Real> {
    pub kind: SchemeKind,
    /// Shift of the collocation time for the Ex-BDF family; unused otherwise.
    pub beta: T,
}

impl<T: Real> SchemeId<T> {
    pub fn new(kind: SchemeKind, beta: T) -> Result<Self> {
        if kind.uses_beta() && !(beta >= T::one()) {
            return Err(Error::invalid(format!("beta must be >= 1, got {beta}")));
        }
        Ok(Self { kind, beta })
    }

    pub fn plain(kind: SchemeKind) -> Self {
        Self {
            kind,
            beta: T::lit(DEFAULT_BETA),
        }
    }

    pub fn parse(name: &str, beta: Option<T>) -> Result<Self> {
        let kind: SchemeKind = name.parse()?;
        Self::new(kind, beta.unwrap_or_else(|| T::lit(DEFAULT_BETA)))
    }

    pub fn steps(&self) -> usize {
        self.kind.steps()
    }
}

// -- coefficients -------------------------------------------------------------

fn cast<N: FromPrimitive>(v: i64) -> N {
    N::from_i64(v).expect("small integer representable")
}

fn binomial(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

fn check_order(k: usize) -> Result<()> {
    if k == 0 || k > MAX_BDF_ORDER {
        return Err(Error::Unsupported(format!("BDF order {k}")));
    }
    Ok(())
}

/// Left-hand-side coefficients of the k-step BDF relation
/// `Σ a_i u^{n+1-i} = dt F(u^{n+1})`, newest state first.
///
/// Built from `Σ_{j=1..k} (1/j) ∇^j u^{n+1}`.
pub fn bdf_weights<N: Num + FromPrimitive + Clone>(k: usize) -> Result<Vec<N>> {
    check_order(k)?;
    let mut a = vec![N::zero(); k + 1];
    for j in 1..=k {
        let inv_j = N::one() / cast::<N>(j as i64);
        for (i, ai) in a.iter_mut().enumerate().take(j + 1) {
            let sign = if i % 2 == 0 { 1 } else { -1 };
            let c = cast::<N>(sign * binomial(j, i));
            *ai = ai.clone() + inv_j.clone() * c;
        }
    }
    Ok(a)
}

/// Lagrange basis polynomials on `nodes`, evaluated (value, derivative) at `s`.
fn lagrange_at<N: Num + Clone>(nodes: &[N], s: &N) -> (Vec<N>, Vec<N>) {
    let n = nodes.len();
    let mut values = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    for j in 0..n {
        let mut denom = N::one();
        for (m, node) in nodes.iter().enumerate() {
            if m != j {
                denom = denom * (nodes[j].clone() - node.clone());
            }
        }
        let mut value = N::one();
        for (m, node) in nodes.iter().enumerate() {
            if m != j {
                value = value * (s.clone() - node.clone());
            }
        }
        // product rule over the factors
        let mut deriv = N::zero();
        for (l, _) in nodes.iter().enumerate().filter(|&(l, _)| l != j) {
            let mut term = N::one();
            for (m, node) in nodes.iter().enumerate() {
                if m != j && m != l {
                    term = term * (s.clone() - node.clone());
                }
            }
            deriv = deriv + term;
        }
        values.push(value / denom.clone());
        derivs.push(deriv / denom);
    }
    (values, derivs)
}

/// Coefficients of the k-step relation differenced at `t_n + β dt`:
/// the derivative at `β` of the interpolant through
/// `u^{n+1}, u^n, ..., u^{n+1-k}` (nodes `1, 0, ..., 1-k`), newest first.
/// `β = 1` recovers [`bdf_weights`].
pub fn bdf_beta_lhs<N>(k: usize, beta: N) -> Result<Vec<N>>
where
    N: Num + FromPrimitive + Clone + PartialOrd,
{
    check_order(k)?;
    if beta < N::one() {
        return Err(Error::invalid("beta must be >= 1"));
    }
    let nodes: Vec<N> = (0..=k).map(|i| cast::<N>(1 - i as i64)).collect();
    Ok(lagrange_at(&nodes, &beta).1)
}

/// Weights `c_j` with `u(t_n + β dt) ≈ Σ c_j u^{n-j}` from the k newest
/// states (nodes `0, -1, ..., 1-k`).
pub fn extrapolation_weights<N: Num + FromPrimitive + Clone>(k: usize, beta: N) -> Result<Vec<N>> {
    check_order(k)?;
    let nodes: Vec<N> = (0..k).map(|i| cast::<N>(-(i as i64))).collect();
    Ok(lagrange_at(&nodes, &beta).0)
}

/// Implicit interpolation `β u^{n+1} - (β - 1) u^n` at `t_n + β dt`.
pub fn implicit_interpolation_weights<N: Num + Clone>(beta: N) -> [N; 2] {
    [beta.clone(), N::one() - beta]
}

fn real_weights<T: Real>(w: Vec<f64>) -> Vec<T> {
    w.into_iter().map(T::lit).collect()
}

// -- history ------------------------------------------------------------------

/// Fitted network that produced a history state, kept so the state can be
/// re-evaluated on other point sets (spectrum analysis).
#[derive(Clone, Debug)]
pub struct ModelSnapshot<T: Real> {
    pub model: Arc<RnbModel<T>>,
    pub theta: Array2<T>,
}

#[derive(Clone, Debug)]
pub struct HistoryEntry<T: Real> {
    pub time: T,
    /// Fitted field at the interior collocation points.
    pub field: FieldWithDerivs<T>,
    pub snapshot: Option<ModelSnapshot<T>>,
}

/// Newest-first ring of past states.
#[derive(Clone, Debug)]
pub struct HistoryBuffer<T: Real> {
    entries: VecDeque<HistoryEntry<T>>,
    capacity: usize,
}

impl<T: Real> HistoryBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity.max(1)),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, entry: HistoryEntry<T>) -> Result<()> {
        if let Some(last) = self.entries.front() {
            if !(entry.time > last.time) {
                return Err(Error::invalid(format!(
                    "history times must increase ({} after {})",
                    entry.time, last.time
                )));
            }
        }
        self.entries.push_front(entry);
        self.entries.truncate(self.capacity);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `get(0)` is the newest state.
    pub fn get(&self, i: usize) -> Option<&HistoryEntry<T>> {
        self.entries.get(i)
    }

    pub fn newest(&self) -> Option<&HistoryEntry<T>> {
        self.entries.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry<T>> {
        self.entries.iter()
    }

    /// Newest `k` fields, newest first.
    pub fn fields(&self, k: usize) -> Result<Vec<&FieldWithDerivs<T>>> {
        if self.entries.len() < k {
            return Err(Error::InsufficientHistory {
                needed: k,
                available: self.entries.len(),
            });
        }
        Ok(self.entries.iter().take(k).map(|e| &e.field).collect())
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

// -- explicit targets ---------------------------------------------------------

/// Right-hand side evaluation and stage projection for [`build_target`].
pub trait TargetOps<T: Real> {
    /// `F(field)` at time `t`, N x d.
    fn rhs(&mut self, field: &FieldWithDerivs<T>, t: T) -> Result<Array2<T>>;

    /// Represents intermediate stage values `values` (stage index `stage`) as a
    /// field carrying the derivatives `F` needs.
    fn project(&mut self, stage: usize, values: &Array2<T>, t: T) -> Result<FieldWithDerivs<T>>;
}

fn ensure_finite<T: Real>(a: &Array2<T>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Pointwise target for an explicit scheme. `history` is newest first and
/// must hold `scheme.steps()` fields; `t_n` is the time of the newest one.
pub fn build_target<T: Real, O: TargetOps<T>>(
    scheme: &SchemeId<T>,
    history: &[&FieldWithDerivs<T>],
    t_n: T,
    dt: T,
    ops: &mut O,
) -> Result<Array2<T>> {
    let kind = scheme.kind;
    if kind.is_implicit() {
        return Err(Error::invalid(format!(
            "{kind} is implicit; assemble its rows with implicit_assemble"
        )));
    }
    if history.len() < kind.steps() {
        return Err(Error::InsufficientHistory {
            needed: kind.steps(),
            available: history.len(),
        });
    }
    if !(dt > T::zero()) {
        return Err(Error::invalid("dt must be positive"));
    }
    let un = history[0];
    let half = T::lit(0.5);
    let target = match kind {
        SchemeKind::EulerExplicit => {
            let k1 = ops.rhs(un, t_n)?;
            &un.u + &(k1 * dt)
        }
        SchemeKind::Rk2 => {
            let k1 = ops.rhs(un, t_n)?;
            let y = &un.u + &(&k1 * dt);
            ensure_finite(&y, "rk2 stage")?;
            let y = ops.project(0, &y, t_n + dt)?;
            let k2 = ops.rhs(&y, t_n + dt)?;
            &un.u + &((k1 + k2) * (dt * half))
        }
        SchemeKind::Rk4 => {
            let k1 = ops.rhs(un, t_n)?;
            let y2 = &un.u + &(&k1 * (dt * half));
            ensure_finite(&y2, "rk4 stage 2")?;
            let y2 = ops.project(0, &y2, t_n + dt * half)?;
            let k2 = ops.rhs(&y2, t_n + dt * half)?;
            let y3 = &un.u + &(&k2 * (dt * half));
            ensure_finite(&y3, "rk4 stage 3")?;
            let y3 = ops.project(1, &y3, t_n + dt * half)?;
            let k3 = ops.rhs(&y3, t_n + dt * half)?;
            let y4 = &un.u + &(&k3 * dt);
            ensure_finite(&y4, "rk4 stage 4")?;
            let y4 = ops.project(2, &y4, t_n + dt)?;
            let k4 = ops.rhs(&y4, t_n + dt)?;
            let two = T::lit(2.0);
            let incr = k1 + &(k2 * two) + &(k3 * two) + &k4;
            &un.u + &(incr * (dt / T::lit(6.0)))
        }
        SchemeKind::ExBdf2Beta | SchemeKind::ExBdf4Beta => {
            let k = kind.steps();
            let beta = scheme.beta.as_f64();
            let a: Vec<T> = real_weights(bdf_beta_lhs(k, beta)?);
            let c: Vec<T> = real_weights(extrapolation_weights(k, beta)?);
            let terms: Vec<(T, &FieldWithDerivs<T>)> =
                c.iter().copied().zip(history.iter().copied()).collect();
            let y = FieldWithDerivs::combine(&terms)?;
            let f = ops.rhs(&y, t_n + scheme.beta * dt)?;
            let mut acc = f * dt;
            for (ai, h) in a[1..].iter().zip(history.iter()) {
                acc.scaled_add(-*ai, &h.u);
            }
            acc.mapv(|v| v / a[0])
        }
        _ => unreachable!("implicit kinds rejected above"),
    };
    ensure_finite(&target, "target")?;
    Ok(target)
}

// -- implicit rows ------------------------------------------------------------

/// LHS weights (newest first) of an implicit scheme.
pub fn implicit_weights<T: Real>(kind: SchemeKind) -> Result<Vec<T>> {
    let k = match kind {
        SchemeKind::EulerImplicit => 1,
        SchemeKind::Bdf2Implicit => 2,
        SchemeKind::Bdf4Implicit => 4,
        other => return Err(Error::invalid(format!("{other} is not implicit"))),
    };
    Ok(real_weights(bdf_weights::<f64>(k)?))
}

/// Interior rows `(Φ - (dt/a_0) L Φ) θ ≅ -Σ_{i≥1} (a_i/a_0) u^{n+1-i}` for an
/// implicit step of `u_t = L u`. Returns `(design, rhs)`; the design includes
/// the bias column.
pub fn implicit_assemble<T: Real>(
    scheme: &SchemeId<T>,
    history: &[&FieldWithDerivs<T>],
    op: &LinearOperator<T>,
    basis: &BasisEvaluation<T>,
    dt: T,
) -> Result<(Array2<T>, Array2<T>)> {
    let a = implicit_weights::<T>(scheme.kind)?;
    let k = a.len() - 1;
    if history.len() < k {
        return Err(Error::InsufficientHistory {
            needed: k,
            available: history.len(),
        });
    }
    if basis.order() < op.order() {
        return Err(Error::invalid(format!(
            "operator needs basis derivatives of order {}",
            op.order()
        )));
    }
    let design = implicit_design(op, basis, dt / a[0])?;
    let mut rhs = Array2::zeros(history[0].u.dim());
    for (ai, h) in a[1..].iter().zip(history) {
        if h.u.dim() != rhs.dim() {
            return Err(Error::shape("history fields differ in shape"));
        }
        rhs.scaled_add(-*ai / a[0], &h.u);
    }
    Ok((design, rhs))
}

/// `[Φ - c LΦ | 1 - c L1]`.
pub fn implicit_design<T: Real>(
    op: &LinearOperator<T>,
    basis: &BasisEvaluation<T>,
    c: T,
) -> Result<Array2<T>> {
    let mut design = basis.design_block();
    let m = basis.basis_count();
    let mut bias = T::one();
    for &(coef, term) in &op.terms {
        let block = match term {
            Term::Value => {
                bias -= c * coef;
                &basis.values
            }
            Term::D1(i) => basis
                .grad
                .get(i)
                .ok_or_else(|| Error::invalid("missing basis gradient"))?,
            Term::D2(i) => basis
                .lap_terms
                .get(i)
                .ok_or_else(|| Error::invalid("missing basis second derivative"))?,
        };
        design
            .slice_mut(ndarray::s![.., ..m])
            .scaled_add(-c * coef, block);
    }
    design.column_mut(m).fill(bias);
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn names_roundtrip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("leapfrog".parse::<SchemeKind>().is_err());
        assert!(SchemeId::<f64>::parse("exbdf2", Some(0.5)).is_err());
        assert_eq!(SchemeId::<f64>::parse("exbdf4", None).unwrap().beta, 2.0);
    }

    #[test]
    fn bdf_weights_values() {
        assert_eq!(bdf_weights::<f64>(1).unwrap(), vec![1.0, -1.0]);
        let w2 = bdf_weights::<f64>(2).unwrap();
        assert_eq!(w2, vec![1.5, -2.0, 0.5]);
        let w4 = bdf_weights::<f64>(4).unwrap();
        let expect = [25.0 / 12.0, -4.0, 3.0, -4.0 / 3.0, 0.25];
        for (a, b) in w4.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(bdf_weights::<f64>(0).is_err());
        assert!(bdf_weights::<f64>(7).is_err());
    }

    #[test]
    fn bdf_beta_values() {
        let w = bdf_beta_lhs(2, 1.0).unwrap();
        assert_eq!(w, vec![1.5, -2.0, 0.5]);
        let w = bdf_beta_lhs(2, 2.0).unwrap();
        assert_eq!(w, vec![2.5, -4.0, 1.5]);
        assert!(bdf_beta_lhs(2, 0.9).is_err());
        for beta in [1.0, 1.5, 2.0, 3.7] {
            for k in 1..=4 {
                let s: f64 = bdf_beta_lhs(k, beta).unwrap().iter().sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beta_continuity() {
        let w = bdf_beta_lhs(2, 1.0 + 1e-9).unwrap();
        for (a, b) in w.iter().zip(bdf_weights::<f64>(2).unwrap()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn extrapolation_examples() {
        assert_eq!(extrapolation_weights(2, 1.0).unwrap(), vec![2.0, -1.0]);
        assert_eq!(extrapolation_weights(2, 2.0).unwrap(), vec![3.0, -2.0]);
        assert_eq!(implicit_interpolation_weights(2.0), [2.0, -1.0]);
    }

    #[test]
    fn history_ordering() {
        let mut h = HistoryBuffer::<f64>::new(2);
        let e = |t: f64| HistoryEntry {
            time: t,
            field: FieldWithDerivs::values(array![[t]]),
            snapshot: None,
        };
        h.push(e(0.0)).unwrap();
        assert!(matches!(h.fields(2), Err(Error::InsufficientHistory { needed: 2, available: 1 })));
        h.push(e(0.1)).unwrap();
        h.push(e(0.2)).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.newest().unwrap().time, 0.2);
        assert_eq!(h.get(1).unwrap().time, 0.1);
        assert!(h.push(e(0.15)).is_err());
    }

    /// Scalar ODE u' = λu: the field is a 1 x 1 array, projection is exact.
    struct Linear {
        lambda: f64,
    }

    impl TargetOps<f64> for Linear {
        fn rhs(&mut self, f: &FieldWithDerivs<f64>, _t: f64) -> Result<Array2<f64>> {
            Ok(&f.u * self.lambda)
        }

        fn project(&mut self, _s: usize, v: &Array2<f64>, _t: f64) -> Result<FieldWithDerivs<f64>> {
            Ok(FieldWithDerivs::values(v.clone()))
        }
    }

    fn scalar(v: f64) -> FieldWithDerivs<f64> {
        FieldWithDerivs::values(array![[v]])
    }

    #[test]
    fn single_step_examples() {
        let mut ops = Linear { lambda: 1.0 };
        let one = scalar(1.0);
        let e = build_target(&SchemeId::plain(SchemeKind::EulerExplicit), &[&one], 0.0, 0.1, &mut ops).unwrap();
        assert!((e[[0, 0]] - 1.1).abs() < 1e-15);
        let r = build_target(&SchemeId::plain(SchemeKind::Rk4), &[&one], 0.0, 0.1, &mut ops).unwrap();
        let h = 0.1f64;
        let taylor = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((r[[0, 0]] - taylor).abs() < 1e-15);
        assert!((r[[0, 0]] - 1.1051708333).abs() < 1e-10);
    }

    #[test]
    fn exbdf2_with_unit_beta_interpolates_linearly() {
        // with F(u) = u the rhs sees exactly 2u^n - u^{n-1}
        struct Capture(Option<f64>);
        impl TargetOps<f64> for Capture {
            fn rhs(&mut self, f: &FieldWithDerivs<f64>, _t: f64) -> Result<Array2<f64>> {
                self.0 = Some(f.u[[0, 0]]);
                Ok(f.u.clone())
            }
            fn project(&mut self, _: usize, v: &Array2<f64>, _: f64) -> Result<FieldWithDerivs<f64>> {
                Ok(FieldWithDerivs::values(v.clone()))
            }
        }
        let mut ops = Capture(None);
        let (un, um) = (scalar(3.0), scalar(5.0));
        let s = SchemeId::new(SchemeKind::ExBdf2Beta, 1.0).unwrap();
        build_target(&s, &[&un, &um], 0.0, 0.1, &mut ops).unwrap();
        assert_eq!(ops.0, Some(2.0 * 3.0 - 5.0));
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let mut ops = Linear { lambda: 0.0 };
        let u = scalar(0.731);
        let hist = [&u, &u, &u, &u];
        for kind in SchemeKind::ALL.into_iter().filter(|k| !k.is_implicit()) {
            let t = build_target(&SchemeId::plain(kind), &hist, 1.0, 0.01, &mut ops).unwrap();
            assert!((t[[0, 0]] - 0.731).abs() < 1e-15, "{kind}");
        }
    }

    #[test]
    fn non_finite_target_reported() {
        let mut ops = Linear { lambda: f64::INFINITY };
        let u = scalar(1.0);
        let r = build_target(&SchemeId::plain(SchemeKind::EulerExplicit), &[&u], 0.0, 0.1, &mut ops);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn implicit_schemes_rejected_by_build_target() {
        let mut ops = Linear { lambda: 1.0 };
        let u = scalar(1.0);
        let r = build_target(&SchemeId::plain(SchemeKind::EulerImplicit), &[&u], 0.0, 0.1, &mut ops);
        assert!(r.is_err());
    }

    fn constant_basis(n: usize) -> BasisEvaluation<f64> {
        BasisEvaluation {
            values: Array2::ones((n, 1)),
            grad: vec![Array2::zeros((n, 1))],
            lap_terms: vec![Array2::zeros((n, 1))],
        }
    }

    #[test]
    fn backward_euler_closed_form() {
        let (lambda, dt, un) = (-3.0, 0.1, 2.0);
        let op = LinearOperator {
            terms: vec![(lambda, Term::Value)],
        };
        let basis = constant_basis(3);
        let u = FieldWithDerivs::values(Array2::from_elem((3, 1), un));
        let (design, rhs) =
            implicit_assemble(&SchemeId::plain(SchemeKind::EulerImplicit), &[&u], &op, &basis, dt).unwrap();
        // both columns are the constant function; their sum carries the value
        let sol = crate::lsq::lstsq(design.view(), &rhs).unwrap();
        let value = sol.theta.sum();
        assert!((value - un / (1.0 - lambda * dt)).abs() < 1e-14);
    }

    #[test]
    fn implicit_with_zero_operator_is_identity() {
        let op = LinearOperator::<f64> { terms: vec![] };
        let basis = constant_basis(3);
        let u = FieldWithDerivs::values(array![[1.0], [2.0], [3.0]]);
        let (design, rhs) =
            implicit_assemble(&SchemeId::plain(SchemeKind::EulerImplicit), &[&u], &op, &basis, 0.1).unwrap();
        assert_eq!(design, basis.design_block());
        assert_eq!(rhs, u.u);
    }

    fn observed_slope(kind: SchemeKind) -> f64 {
        let lambda = -1.0f64;
        let t_end = 1.0f64;
        let errs: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125]
            .into_iter()
            .map(|dt| {
                let n = (t_end / dt).round() as usize;
                let k = kind.steps();
                // exact start-up values
                // newest first: index 0 sits at time (k-1) dt
                let mut hist: Vec<f64> = (0..k).rev().map(|j| (lambda * j as f64 * dt).exp()).collect();
                let mut t = (k - 1) as f64 * dt;
                let mut ops = Linear { lambda };
                for _ in (k - 1)..n {
                    let next = if kind.is_implicit() {
                        let a = implicit_weights::<f64>(kind).unwrap();
                        let s: f64 = a[1..].iter().zip(&hist).map(|(a, u)| a * u).sum();
                        -s / (a[0] - dt * lambda)
                    } else {
                        let fields: Vec<_> = hist.iter().map(|&v| scalar(v)).collect();
                        let refs: Vec<_> = fields.iter().collect();
                        build_target(&SchemeId::plain(kind), &refs, t, dt, &mut ops).unwrap()[[0, 0]]
                    };
                    hist.insert(0, next);
                    hist.truncate(k);
                    t += dt;
                }
                (dt, (hist[0] - (lambda * t_end).exp()).abs())
            })
            .collect();
        let (d0, e0) = errs[errs.len() - 2];
        let (d1, e1) = errs[errs.len() - 1];
        (e0.ln() - e1.ln()) / (d0.ln() - d1.ln())
    }

    #[test]
    fn observed_orders_on_linear_decay() {
        let cases = [
            (SchemeKind::EulerExplicit, 1.0, 0.2),
            (SchemeKind::EulerImplicit, 1.0, 0.2),
            (SchemeKind::Rk2, 2.0, 0.3),
            (SchemeKind::Bdf2Implicit, 2.0, 0.3),
            (SchemeKind::ExBdf2Beta, 2.0, 0.3),
            (SchemeKind::Rk4, 4.0, 0.5),
            (SchemeKind::Bdf4Implicit, 4.0, 0.5),
            (SchemeKind::ExBdf4Beta, 4.0, 0.5),
        ];
        for (kind, order, tol) in cases {
            let slope = observed_slope(kind);
            assert!((slope - order).abs() <= tol, "{kind}: slope {slope}");
        }
    }
}
