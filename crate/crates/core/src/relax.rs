//! Per-neuron linear relaxations ("bounding lines") of activations on an
//! input interval, and neuron-status classification.
//!
//! The line constructions are generic over [`Scalar`] so the training code
//! can push forward-mode derivatives through exactly the same formulas that
//! the verifier uses.

use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netdef::{ActivationKind, ActivationSpec};

/// How bounding lines are chosen for a neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `h_L = sigma(l)`, `h_U = sigma(u)`; reproduces interval propagation.
    Constant,
    /// Endpoint-anchored lines that dominate the constant lines.
    Tight,
    /// ReLU lower line chosen by `|l| > u`; not guaranteed to beat constants.
    Adaptive,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Constant, Strategy::Tight, Strategy::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Constant => "constant",
            Strategy::Tight => "tight",
            Strategy::Adaptive => "adaptive",
        }
    }
}

impl core::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Strategy::Constant),
            "tight" => Ok(Strategy::Tight),
            "adaptive" => Ok(Strategy::Adaptive),
            _ => Err(Error::Invalid(alloc::format!("unknown strategy {s}"))),
        }
    }
}

/// Where `[l, u]` sits relative to the activation kinks.
///
/// ReLU-type neurons use the first three variants, ParamRamp neurons the
/// remaining six.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronStatus {
    Dead,
    Unstable,
    Alive,
    LeftDead,
    LeftUnstable,
    MiddleAlive,
    RightUnstable,
    RightDead,
    Spanning,
}

impl NeuronStatus {
    pub const RELU: [NeuronStatus; 3] = [NeuronStatus::Dead, NeuronStatus::Unstable, NeuronStatus::Alive];
    pub const RAMP: [NeuronStatus; 6] = [
        NeuronStatus::LeftDead,
        NeuronStatus::LeftUnstable,
        NeuronStatus::MiddleAlive,
        NeuronStatus::RightUnstable,
        NeuronStatus::RightDead,
        NeuronStatus::Spanning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NeuronStatus::Dead => "dead",
            NeuronStatus::Unstable => "unstable",
            NeuronStatus::Alive => "alive",
            NeuronStatus::LeftDead => "left_dead",
            NeuronStatus::LeftUnstable => "left_unstable",
            NeuronStatus::MiddleAlive => "middle_alive",
            NeuronStatus::RightUnstable => "right_unstable",
            NeuronStatus::RightDead => "right_dead",
            NeuronStatus::Spanning => "spanning",
        }
    }

    /// Statuses a neuron with this activation kind can take.
    pub fn for_kind(kind: ActivationKind) -> &'static [NeuronStatus] {
        match kind {
            ActivationKind::ParamRamp => &Self::RAMP,
            _ => &Self::RELU,
        }
    }

    /// Left or right dead (ReLU dead counts as left dead).
    pub fn is_dead(self) -> bool {
        matches!(
            self,
            NeuronStatus::Dead | NeuronStatus::LeftDead | NeuronStatus::RightDead
        )
    }
}

/// Classifies a neuron with pre-activation interval `[l, u]`.
///
/// `r` is the bend point for ParamRamp and ignored otherwise.
pub fn classify(kind: ActivationKind, l: f64, u: f64, r: Option<f64>) -> Result<NeuronStatus> {
    if !(l <= u) {
        return Err(Error::InvalidInterval { lower: l, upper: u });
    }
    Ok(match (kind, r) {
        (ActivationKind::ParamRamp, Some(r)) => {
            if u <= 0.0 {
                NeuronStatus::LeftDead
            } else if l >= r {
                NeuronStatus::RightDead
            } else if l >= 0.0 && u <= r {
                NeuronStatus::MiddleAlive
            } else if l < 0.0 && u <= r {
                NeuronStatus::LeftUnstable
            } else if l >= 0.0 {
                NeuronStatus::RightUnstable
            } else {
                NeuronStatus::Spanning
            }
        }
        (ActivationKind::ParamRamp, None) => {
            return Err(Error::InvalidActivation("param_ramp needs a bend point".into()))
        }
        _ => {
            if u <= 0.0 {
                NeuronStatus::Dead
            } else if l >= 0.0 {
                NeuronStatus::Alive
            } else {
                NeuronStatus::Unstable
            }
        }
    })
}

/// Number type the line constructions run on.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;

    #[inline]
    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
}

/// A value with its partial derivatives with respect to three inputs.
///
/// Used with inputs `(l, u, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    pub fn var(v: f64, slot: usize) -> Self {
        let mut d = [0.0; 3];
        d[slot] = 1.0;
        Self { v, d }
    }
}

impl Add for Dual3 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]],
        }
    }
}

impl Sub for Dual3 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            v: self.v - o.v,
            d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]],
        }
    }
}

impl Mul for Dual3 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }
}

impl Div for Dual3 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        Self {
            v: q,
            d: [
                (self.d[0] - q * o.d[0]) * inv,
                (self.d[1] - q * o.d[1]) * inv,
                (self.d[2] - q * o.d[2]) * inv,
            ],
        }
    }
}

impl Neg for Dual3 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            d: [-self.d[0], -self.d[1], -self.d[2]],
        }
    }
}

impl Scalar for Dual3 {
    #[inline]
    fn constant(v: f64) -> Self {
        Self { v, d: [0.0; 3] }
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
}

/// Lower line `sl z + tl` and upper line `su z + tu` of one neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lines<S> {
    pub sl: S,
    pub tl: S,
    pub su: S,
    pub tu: S,
}

impl<S: Scalar> Lines<S> {
    fn same(s: S, t: S) -> Self {
        Self { sl: s, tl: t, su: s, tu: t }
    }

    pub fn lower_at(&self, z: S) -> S {
        self.sl * z + self.tl
    }

    pub fn upper_at(&self, z: S) -> S {
        self.su * z + self.tu
    }
}

impl Lines<f64> {
    #[inline]
    fn constant(lo: f64, hi: f64) -> Self {
        Self { sl: 0.0, tl: lo, su: 0.0, tu: hi }
    }
}

#[inline]
fn leaky_s<S: Scalar>(z: S, eta: f64) -> S {
    if z.value() < 0.0 {
        z.scale(eta)
    } else {
        z
    }
}

#[inline]
fn ramp_s<S: Scalar>(z: S, eta: f64, r: S) -> S {
    if z.value() < 0.0 {
        z.scale(eta)
    } else if z.value() < r.value() {
        z
    } else {
        r + (z - r).scale(eta)
    }
}

#[inline]
fn min_by_value<S: Scalar>(a: S, b: S) -> S {
    if b.value() < a.value() {
        b
    } else {
        a
    }
}

#[inline]
fn nonneg<S: Scalar>(s: S) -> S {
    if s.value() < 0.0 {
        S::constant(0.0)
    } else {
        s
    }
}

/// Bounding lines of a ReLU (`eta = 0`) or leaky ReLU neuron on `[l, u]`.
pub fn relu_lines<S: Scalar>(strategy: Strategy, l: S, u: S, eta: f64) -> Result<Lines<S>> {
    let (lv, uv) = (l.value(), u.value());
    if !(lv <= uv) {
        return Err(Error::InvalidInterval { lower: lv, upper: uv });
    }
    let zero = S::constant(0.0);
    if strategy == Strategy::Constant {
        return Ok(Lines {
            sl: zero,
            tl: leaky_s(l, eta),
            su: zero,
            tu: leaky_s(u, eta),
        });
    }
    if uv <= 0.0 {
        return Ok(Lines::same(S::constant(eta), zero));
    }
    if lv >= 0.0 {
        return Ok(Lines::same(S::constant(1.0), zero));
    }
    // Unstable: chord on top.
    let (fl, fu) = (leaky_s(l, eta), leaky_s(u, eta));
    let su = (fu - fl) / (u - l);
    let tu = fl - su * l;
    let sl = match strategy {
        Strategy::Adaptive if uv >= -lv => S::constant(1.0),
        _ => S::constant(eta),
    };
    Ok(Lines { sl, tl: zero, su, tu })
}

/// Bounding lines of a ParamRamp neuron with bend point `r` on `[l, u]`.
///
/// Tight lines are anchored at `(l, sigma(l))` (lower) and `(u, sigma(u))`
/// (upper) with the largest slope that keeps them valid. Validity only has
/// to be checked at the kinks `0, r` and the far endpoint because the
/// activation is piecewise linear.
pub fn ramp_lines<S: Scalar>(strategy: Strategy, l: S, u: S, r: S, eta: f64) -> Result<Lines<S>> {
    let (lv, uv, rv) = (l.value(), u.value(), r.value());
    if !(rv > 0.0) {
        return Err(Error::InvalidParameter { name: "ramp point", value: rv });
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter { name: "eta", value: eta });
    }
    if !(lv <= uv) {
        return Err(Error::InvalidInterval { lower: lv, upper: uv });
    }
    let zero = S::constant(0.0);
    let f = |z: S| ramp_s(z, eta, r);
    if strategy == Strategy::Constant {
        return Ok(Lines { sl: zero, tl: f(l), su: zero, tu: f(u) });
    }
    if uv <= 0.0 {
        return Ok(Lines::same(S::constant(eta), zero));
    }
    if lv >= rv {
        return Ok(Lines::same(S::constant(eta), r.scale(1.0 - eta)));
    }
    if lv >= 0.0 && uv <= rv {
        return Ok(Lines::same(S::constant(1.0), zero));
    }

    let (fl, fu) = (f(l), f(u));
    let kinks = [zero, r];

    // Lower: anchored at l, slope limited by every check point right of l.
    let mut sl = (fu - fl) / (u - l);
    for &p in &kinks {
        if p.value() > lv && p.value() < uv {
            sl = min_by_value(sl, (f(p) - fl) / (p - l));
        }
    }
    let mut sl = nonneg(sl);
    let mut tl = fl - sl * l;

    // Upper: anchored at u, slope limited by every check point left of u.
    let mut su = (fu - fl) / (u - l);
    for &p in &kinks {
        if p.value() > lv && p.value() < uv {
            su = min_by_value(su, (fu - f(p)) / (u - p));
        }
    }
    let su = nonneg(su);
    let tu = fu - su * u;

    if strategy == Strategy::Adaptive && lv < 0.0 && uv <= rv {
        sl = if uv >= -lv { S::constant(1.0) } else { S::constant(eta) };
        tl = zero;
    }
    Ok(Lines { sl, tl, su, tu })
}

/// Lines of one neuron of a hidden layer, dispatched on the activation kind.
pub fn neuron_lines(spec: &ActivationSpec, strategy: Strategy, i: usize, l: f64, u: f64) -> Result<Lines<f64>> {
    match spec.ramp_point(i) {
        Some(r) => ramp_lines(strategy, l, u, r, spec.eta()),
        None => relu_lines(strategy, l, u, spec.eta()),
    }
}

/// Bounding lines for a whole layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundingLines {
    pub sl: Vec<f64>,
    pub tl: Vec<f64>,
    pub su: Vec<f64>,
    pub tu: Vec<f64>,
}

impl BoundingLines {
    pub fn len(&self) -> usize {
        self.sl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sl.is_empty()
    }

    pub fn neuron(&self, i: usize) -> Lines<f64> {
        Lines { sl: self.sl[i], tl: self.tl[i], su: self.su[i], tu: self.tu[i] }
    }

    /// Constant lines `sigma(l)`, `sigma(u)` for a whole layer.
    pub fn constant(spec: &ActivationSpec, l: &[f64], u: &[f64]) -> Self {
        let mut out = Self::with_capacity(l.len());
        for (i, (&lo, &hi)) in l.iter().zip(u).enumerate() {
            out.push(Lines::constant(spec.eval_scalar(lo, i), spec.eval_scalar(hi, i)));
        }
        out
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            sl: Vec::with_capacity(n),
            tl: Vec::with_capacity(n),
            su: Vec::with_capacity(n),
            tu: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, lines: Lines<f64>) {
        self.sl.push(lines.sl);
        self.tl.push(lines.tl);
        self.su.push(lines.su);
        self.tu.push(lines.tu);
    }

    pub fn set(&mut self, i: usize, lines: Lines<f64>) {
        self.sl[i] = lines.sl;
        self.tl[i] = lines.tl;
        self.su[i] = lines.su;
        self.tu[i] = lines.tu;
    }

    /// Fails on the first negative slope.
    pub fn check_slopes(&self) -> Result<()> {
        for (i, (&a, &b)) in self.sl.iter().zip(&self.su).enumerate() {
            if !(a >= 0.0) {
                return Err(Error::NegativeSlope { neuron: i, slope: a });
            }
            if !(b >= 0.0) {
                return Err(Error::NegativeSlope { neuron: i, slope: b });
            }
        }
        Ok(())
    }
}

/// Bounding lines of every neuron of a layer with pre-activation `[l, u]`.
pub fn lines_for_layer(spec: &ActivationSpec, strategy: Strategy, l: &[f64], u: &[f64]) -> Result<BoundingLines> {
    if l.len() != u.len() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            what: "upper bounds",
            expected: l.len(),
            found: u.len(),
        });
    }
    if let Some(r) = spec.ramp_points() {
        if r.len() != l.len() {
            return Err(Error::DimensionMismatch {
                layer: 0,
                what: "ramp points",
                expected: l.len(),
                found: r.len(),
            });
        }
    }
    let mut out = BoundingLines::with_capacity(l.len());
    for (i, (&lo, &hi)) in l.iter().zip(u).enumerate() {
        out.push(neuron_lines(spec, strategy, i, lo, hi)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdef::ramp;
    use proptest::prelude::*;
    use super::Strategy;
    use proptest::strategy::Strategy as _;

    const EPS: f64 = 1e-12;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn classify_relu_and_ramp() {
        use ActivationKind::*;
        assert_eq!(classify(Relu, -0.5, 2.0, None).unwrap(), NeuronStatus::Unstable);
        assert_eq!(classify(Relu, -2.0, 0.0, None).unwrap(), NeuronStatus::Dead);
        assert_eq!(classify(Relu, 0.0, 1.0, None).unwrap(), NeuronStatus::Alive);
        assert_eq!(classify(ParamRamp, 3.0, 4.0, Some(2.0)).unwrap(), NeuronStatus::RightDead);
        assert_eq!(classify(ParamRamp, -1.0, 3.0, Some(2.0)).unwrap(), NeuronStatus::Spanning);
        assert_eq!(classify(ParamRamp, -1.0, 1.0, Some(2.0)).unwrap(), NeuronStatus::LeftUnstable);
        assert_eq!(classify(ParamRamp, 1.0, 3.0, Some(2.0)).unwrap(), NeuronStatus::RightUnstable);
        assert_eq!(classify(ParamRamp, 0.5, 1.5, Some(2.0)).unwrap(), NeuronStatus::MiddleAlive);
        assert_eq!(classify(ParamRamp, -3.0, -1.0, Some(2.0)).unwrap(), NeuronStatus::LeftDead);
        assert!(classify(Relu, 1.0, 0.0, None).is_err());
    }

    #[test]
    fn relu_tight_unstable() {
        let lines = relu_lines(Strategy::Tight, -1.0, 1.0, 0.0).unwrap();
        assert!(close(lines.su, 0.5) && close(lines.tu, 0.5));
        assert_eq!((lines.sl, lines.tl), (0.0, 0.0));
    }

    #[test]
    fn relu_adaptive_cases() {
        let lines = relu_lines(Strategy::Adaptive, -2.0, 1.0, 0.0).unwrap();
        assert_eq!(lines.sl, 0.0);
        let lines = relu_lines(Strategy::Adaptive, -1.0, 2.0, 0.0).unwrap();
        assert_eq!((lines.sl, lines.tl), (1.0, 0.0));
        // Tie goes to slope 1.
        let lines = relu_lines(Strategy::Adaptive, -1.0, 1.0, 0.0).unwrap();
        assert_eq!(lines.sl, 1.0);
    }

    #[test]
    fn relu_constant_lines() {
        let lines = relu_lines(Strategy::Constant, -1.0, 1.0, 0.0).unwrap();
        assert_eq!((lines.sl, lines.tl, lines.su, lines.tu), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn dead_relu_emits_plain_zero() {
        let lines = relu_lines(Strategy::Tight, -3.0, -1.0, 0.0).unwrap();
        assert!(lines.sl == 0.0 && lines.sl.is_sign_positive());
        assert!(lines.tl == 0.0 && lines.tl.is_sign_positive());
        let leaky = relu_lines(Strategy::Tight, -3.0, -1.0, 0.1).unwrap();
        assert_eq!((leaky.sl, leaky.su), (0.1, 0.1));
    }

    #[test]
    fn ramp_right_unstable_kink_check() {
        let lines = ramp_lines(Strategy::Tight, 1.0, 3.0, 2.0, 0.0).unwrap();
        assert!(close(lines.su, 0.0) && close(lines.tu, 2.0));
        assert!(close(lines.sl, 0.5) && close(lines.tl, 0.5));
    }

    #[test]
    fn ramp_spanning_kink_check() {
        let lines = ramp_lines(Strategy::Tight, -1.0, 3.0, 2.0, 0.0).unwrap();
        assert!(close(lines.sl, 0.0) && close(lines.tl, 0.0));
        // The check at z = r = 2 forbids any positive upper slope.
        assert!(close(lines.su, 0.0) && close(lines.tu, 2.0));
    }

    #[test]
    fn degenerate_interval_constant_strategy() {
        for c in [-1.5, 0.0, 0.7, 2.0, 3.3] {
            let lines = ramp_lines(Strategy::Constant, c, c, 2.0, 0.01).unwrap();
            let v = ramp(c, 0.01, 2.0);
            assert_eq!((lines.sl, lines.tl, lines.su, lines.tu), (0.0, v, 0.0, v));
        }
    }

    #[test]
    fn ramp_rejects_bad_parameters() {
        assert!(ramp_lines(Strategy::Tight, -1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ramp_lines(Strategy::Tight, 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(relu_lines(Strategy::Tight, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn layer_dispatch() {
        let spec = ActivationSpec::param_ramp(0.0, vec![2.0, 2.0]).unwrap();
        let lines = lines_for_layer(&spec, Strategy::Tight, &[1.0, -1.0], &[3.0, 3.0]).unwrap();
        assert!(close(lines.sl[0], 0.5) && close(lines.su[1], 0.0));
        assert!(lines_for_layer(&spec, Strategy::Tight, &[1.0], &[3.0]).is_err());
        lines.check_slopes().unwrap();
    }

    #[test]
    fn dual_derivatives_of_chord_slope() {
        // su = u / (u - l) for relu; d/dl = u/(u-l)^2, d/du = -l/(u-l)^2.
        let l = Dual3::var(-1.0, 0);
        let u = Dual3::var(3.0, 1);
        let lines = relu_lines(Strategy::Tight, l, u, 0.0).unwrap();
        assert!(close(lines.su.v, 0.75));
        assert!(close(lines.su.d[0], 3.0 / 16.0));
        assert!(close(lines.su.d[1], 1.0 / 16.0));
    }

    fn sigma(z: f64, eta: f64, r: Option<f64>) -> f64 {
        match r {
            Some(r) => ramp(z, eta, r),
            None => crate::netdef::leaky(z, eta),
        }
    }

    fn lines_for(strategy: Strategy, l: f64, u: f64, eta: f64, r: Option<f64>) -> Lines<f64> {
        match r {
            Some(r) => ramp_lines(strategy, l, u, r, eta).unwrap(),
            None => relu_lines(strategy, l, u, eta).unwrap(),
        }
    }

    fn scenario() -> impl proptest::strategy::Strategy<Value = (f64, f64, f64, Option<f64>)> {
        (
            -6.0..6.0f64,
            0.0..8.0f64,
            prop_oneof![Just(0.0), 0.0..0.5f64],
            prop_oneof![Just(None), (0.05..5.0f64).prop_map(Some)],
        )
            .prop_map(|(l, w, eta, r)| (l, l + w, eta, r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn lines_are_valid_on_interval((l, u, eta, r) in scenario()) {
            for strategy in Strategy::ALL {
                let lines = lines_for(strategy, l, u, eta, r);
                prop_assert!(lines.sl >= 0.0 && lines.su >= 0.0);
                let mut points: Vec<f64> = (0..=1000).map(|i| l + (u - l) * i as f64 / 1000.0).collect();
                points.push(0.0);
                if let Some(r) = r { points.push(r); }
                for z in points.into_iter().filter(|z| *z >= l && *z <= u) {
                    let s = sigma(z, eta, r);
                    let scale = 1.0f64.max(z.abs());
                    prop_assert!(lines.lower_at(z) <= s + EPS * scale, "{strategy:?} lower at {z}");
                    prop_assert!(lines.upper_at(z) >= s - EPS * scale, "{strategy:?} upper at {z}");
                }
            }
        }

        #[test]
        fn tight_dominates_constant((l, u, eta, r) in scenario()) {
            let tight = lines_for(Strategy::Tight, l, u, eta, r);
            let (fl, fu) = (sigma(l, eta, r), sigma(u, eta, r));
            for i in 0..=200 {
                let z = l + (u - l) * i as f64 / 200.0;
                let scale = 1.0f64.max(z.abs());
                prop_assert!(tight.lower_at(z) >= fl - EPS * scale);
                prop_assert!(tight.upper_at(z) <= fu + EPS * scale);
            }
        }

        #[test]
        fn constant_lines_are_flat((l, u, eta, r) in scenario()) {
            let c = lines_for(Strategy::Constant, l, u, eta, r);
            prop_assert_eq!((c.sl, c.su), (0.0, 0.0));
            prop_assert_eq!(c.tl, sigma(l, eta, r));
            prop_assert_eq!(c.tu, sigma(u, eta, r));
        }

        #[test]
        fn degenerate_interval_passes_through_point(c in -6.0..6.0f64, eta in 0.0..0.5f64, r in prop_oneof![Just(None), (0.05..5.0f64).prop_map(Some)]) {
            for strategy in Strategy::ALL {
                let lines = lines_for(strategy, c, c, eta, r);
                let s = sigma(c, eta, r);
                prop_assert!((lines.lower_at(c) - s).abs() <= EPS * c.abs().max(1.0));
                prop_assert!((lines.upper_at(c) - s).abs() <= EPS * c.abs().max(1.0));
            }
        }
    }
}
