//! Bounding engines: interval propagation, linear bound propagation,
//! depth-limited and full back-substitution, and the hybrids that combine
//! them. Every engine returns sound bounds on the pre-activations of each
//! layer over a norm ball around an input.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DualNorm, Matrix};
use crate::netdef::{MarginSpec, Network};
use crate::relax::{lines_for_layer, BoundingLines, Strategy};

/// Norm of the perturbation ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    LInf,
}

impl Norm {
    /// Norm applied to weight rows when concretizing, `1/p + 1/q = 1`.
    pub fn dual(self) -> DualNorm {
        match self {
            Norm::L2 => DualNorm::L2,
            Norm::LInf => DualNorm::L1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "2",
            Norm::LInf => "inf",
        }
    }
}

impl core::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" => Ok(Norm::LInf),
            _ => Err(Error::Invalid(format!("unsupported norm {s}"))),
        }
    }
}

/// Perturbation radius, norm and optional input domain, without a center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreatModel {
    pub epsilon: f64,
    pub norm: Norm,
    /// Valid input box, e.g. `(0, 1)` for pixels. Only tightens `l_inf` balls.
    pub domain: Option<(f64, f64)>,
}

impl ThreatModel {
    pub fn new(epsilon: f64, norm: Norm) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter { name: "epsilon", value: epsilon });
        }
        Ok(Self { epsilon, norm, domain: None })
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = Some((lo, hi));
        self
    }

    pub fn around(&self, center: &[f64]) -> PerturbationSpec {
        PerturbationSpec {
            center: center.to_vec(),
            epsilon: self.epsilon,
            norm: self.norm,
            domain: self.domain,
        }
    }
}

/// The set `B_p(x0, eps)`, intersected with `domain` when `p = inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub center: Vec<f64>,
    pub epsilon: f64,
    pub norm: Norm,
    pub domain: Option<(f64, f64)>,
}

impl PerturbationSpec {
    pub fn new(center: Vec<f64>, epsilon: f64, norm: Norm) -> Result<Self> {
        let t = ThreatModel::new(epsilon, norm)?;
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("center"));
        }
        Ok(t.around(&center))
    }

    pub fn threat(&self) -> ThreatModel {
        ThreatModel { epsilon: self.epsilon, norm: self.norm, domain: self.domain }
    }

    /// Per-coordinate box `[lo, hi]` for `l_inf` balls.
    pub fn input_box(&self) -> (Vec<f64>, Vec<f64>) {
        let e = self.epsilon;
        self.center
            .iter()
            .map(|&c| {
                let (mut lo, mut hi) = (c - e, c + e);
                if let Some((dlo, dhi)) = self.domain {
                    lo = lo.max(dlo).min(c);
                    hi = hi.min(dhi).max(c);
                }
                (lo, hi)
            })
            .unzip()
    }

    fn boxed(&self) -> bool {
        self.norm == Norm::LInf && self.domain.is_some()
    }
}

/// Which side of an objective a computation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Concretizes one side of `W x + b` over the perturbation set.
///
/// `lower = W x0 + b - eps ||W||_q` rowwise, `upper` with `+`. With a domain
/// box the ball is replaced by the clipped box and the dual term becomes
/// `|W| radius`.
pub fn concretize_side(w: &Matrix, b: &[f64], pert: &PerturbationSpec, side: Side) -> Result<Vec<f64>> {
    if w.cols() != pert.center.len() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            what: "input",
            expected: w.cols(),
            found: pert.center.len(),
        });
    }
    let sign = match side {
        Side::Lower => -1.0,
        Side::Upper => 1.0,
    };
    if pert.boxed() {
        let (lo, hi) = pert.input_box();
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let rad: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).collect();
        return Ok((0..w.rows())
            .map(|i| {
                let row = w.row(i);
                let center: f64 = row.iter().zip(&mid).map(|(a, c)| a * c).sum();
                let spread: f64 = row.iter().zip(&rad).map(|(a, r)| a.abs() * r).sum();
                center + b[i] + sign * spread
            })
            .collect());
    }
    let norms = w.row_norms(pert.norm.dual());
    let wx = w.matvec(&pert.center);
    Ok(wx
        .iter()
        .zip(b)
        .zip(&norms)
        .map(|((wx, b), n)| wx + b + sign * pert.epsilon * n)
        .collect())
}

/// Input-affine sandwich `WL x + bL <= z <= WU x + bU`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBounds {
    pub wl: Matrix,
    pub bl: Vec<f64>,
    pub wu: Matrix,
    pub bu: Vec<f64>,
}

impl AffineBounds {
    /// Both sides equal to the exact map `W x + b`.
    pub fn exact(w: &Matrix, b: &[f64]) -> Self {
        Self { wl: w.clone(), bl: b.to_vec(), wu: w.clone(), bu: b.to_vec() }
    }

    fn side(&self, side: Side) -> (&Matrix, &[f64]) {
        match side {
            Side::Lower => (&self.wl, &self.bl),
            Side::Upper => (&self.wu, &self.bu),
        }
    }
}

/// Concrete bounds `(lower, upper)` of an input-affine sandwich.
pub fn concretize(aff: &AffineBounds, pert: &PerturbationSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        concretize_side(&aff.wl, &aff.bl, pert, Side::Lower)?,
        concretize_side(&aff.wu, &aff.bu, pert, Side::Upper)?,
    ))
}

/// Per-layer pre- and post-activation intervals, indexed by layer `0..m`.
///
/// The output layer has no activation, so its post bounds equal its pre bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalBounds {
    pub pre_lower: Vec<Vec<f64>>,
    pub pre_upper: Vec<Vec<f64>>,
    pub post_lower: Vec<Vec<f64>>,
    pub post_upper: Vec<Vec<f64>>,
}

impl IntervalBounds {
    pub fn len(&self) -> usize {
        self.pre_lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pre_lower.is_empty()
    }

    /// Bounds of the network output `z(m)`.
    pub fn output(&self) -> (&[f64], &[f64]) {
        let k = self.len() - 1;
        (&self.pre_lower[k], &self.pre_upper[k])
    }

    fn push(&mut self, net: &Network, k: usize, l: Vec<f64>, u: Vec<f64>) {
        let (pl, pu) = match net.activation(k) {
            Some(act) => (
                l.iter().enumerate().map(|(i, &v)| act.eval_scalar(v, i)).collect(),
                u.iter().enumerate().map(|(i, &v)| act.eval_scalar(v, i)).collect(),
            ),
            None => (l.clone(), u.clone()),
        };
        self.pre_lower.push(l);
        self.pre_upper.push(u);
        self.post_lower.push(pl);
        self.post_upper.push(pu);
    }

    fn truncated(&self, layers: usize) -> Self {
        Self {
            pre_lower: self.pre_lower[..layers].to_vec(),
            pre_upper: self.pre_upper[..layers].to_vec(),
            post_lower: self.post_lower[..layers].to_vec(),
            post_upper: self.post_upper[..layers].to_vec(),
        }
    }
}

/// Interval image of `W a + b` over the box `[post_lower, post_upper]`:
/// `l = relu(W) l_hat + neg(W) u_hat + b`, `u` symmetric.
pub fn ibp_layer(w: &Matrix, b: &[f64], post_lower: &[f64], post_upper: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if post_lower.len() != w.cols() || post_upper.len() != w.cols() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            what: "interval",
            expected: w.cols(),
            found: post_lower.len().min(post_upper.len()),
        });
    }
    if b.len() != w.rows() {
        return Err(Error::DimensionMismatch { layer: 0, what: "bias", expected: w.rows(), found: b.len() });
    }
    let mut l = b.to_vec();
    let mut u = b.to_vec();
    for i in 0..w.rows() {
        for (j, &wij) in w.row(i).iter().enumerate() {
            if wij > 0.0 {
                l[i] += wij * post_lower[j];
                u[i] += wij * post_upper[j];
            } else if wij < 0.0 {
                l[i] += wij * post_upper[j];
                u[i] += wij * post_lower[j];
            }
        }
    }
    Ok((l, u))
}

fn check_input(net: &Network, pert: &PerturbationSpec) -> Result<()> {
    if pert.center.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            what: "input",
            expected: net.input_dim(),
            found: pert.center.len(),
        });
    }
    Ok(())
}

fn first_layer(net: &Network, pert: &PerturbationSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = &net.layers()[0].affine;
    Ok((
        concretize_side(&a.weight, &a.bias, pert, Side::Lower)?,
        concretize_side(&a.weight, &a.bias, pert, Side::Upper)?,
    ))
}

fn ibp_upto(net: &Network, pert: &PerturbationSpec, layers: usize) -> Result<IntervalBounds> {
    check_input(net, pert)?;
    let mut out = IntervalBounds::default();
    if layers == 0 {
        return Ok(out);
    }
    let (l, u) = first_layer(net, pert)?;
    out.push(net, 0, l, u);
    for k in 1..layers {
        let a = &net.layers()[k].affine;
        let (l, u) = ibp_layer(&a.weight, &a.bias, &out.post_lower[k - 1], &out.post_upper[k - 1])?;
        out.push(net, k, l, u);
    }
    Ok(out)
}

/// Interval bound propagation through the whole network.
pub fn ibp_bounds(net: &Network, pert: &PerturbationSpec) -> Result<IntervalBounds> {
    ibp_upto(net, pert, net.depth())
}

/// One forward step of linear bound propagation.
///
/// Given input-affine bounds of `z(k-1)` and bounding lines of its
/// activation (slopes must be nonnegative), returns input-affine bounds of
/// `z(k) = W sigma(z(k-1)) + b`:
/// `WL = [relu(W)*sL] WL' + [neg(W)*sU] WU'`,
/// `bL = b + [relu(W)*sL] bL' + [neg(W)*sU] bU' + relu(W) tL + neg(W) tU`,
/// and the upper side with the roles of `L` and `U` swapped.
pub fn lbp_step(w: &Matrix, b: &[f64], prev: &AffineBounds, lines: &BoundingLines) -> Result<AffineBounds> {
    if lines.len() != w.cols() || prev.wl.rows() != w.cols() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            what: "bounding lines",
            expected: w.cols(),
            found: lines.len(),
        });
    }
    lines.check_slopes()?;
    let pos = w.pos_part();
    let neg = w.neg_part();
    let step = |side: Side| {
        let (own, other, s_own, s_other, t_own, t_other) = match side {
            Side::Lower => (prev.side(Side::Lower), prev.side(Side::Upper), &lines.sl, &lines.su, &lines.tl, &lines.tu),
            Side::Upper => (prev.side(Side::Upper), prev.side(Side::Lower), &lines.su, &lines.sl, &lines.tu, &lines.tl),
        };
        let a = pos.scale_columns(s_own);
        let c = neg.scale_columns(s_other);
        let mut wk = a.matmul(own.0);
        wk.add_assign(&c.matmul(other.0));
        let mut bk = b.to_vec();
        for (i, bi) in bk.iter_mut().enumerate() {
            *bi += crate::linalg::dot(a.row(i), own.1)
                + crate::linalg::dot(c.row(i), other.1)
                + crate::linalg::dot(pos.row(i), t_own)
                + crate::linalg::dot(neg.row(i), t_other);
        }
        (wk, bk)
    };
    let (wl, bl) = step(Side::Lower);
    let (wu, bu) = step(Side::Upper);
    Ok(AffineBounds { wl, bl, wu, bu })
}

/// Everything computed for the first few layers of a network by one engine.
#[derive(Debug, Clone, Default)]
struct Prefix {
    intervals: IntervalBounds,
    lines: Vec<BoundingLines>,
    affine: Vec<AffineBounds>,
}

fn layer_lines(net: &Network, k: usize, l: &[f64], u: &[f64], strategy: Strategy) -> Result<BoundingLines> {
    let act = net
        .activation(k)
        .ok_or_else(|| Error::InvalidActivation(format!("layer {k} has no activation")))?;
    lines_for_layer(act, strategy, l, u)
}

/// Hook that may replace the bounding lines of hidden layer `k` chosen for
/// the interval `[l, u]`.
pub type LineAdjust<'a> = &'a mut dyn FnMut(usize, &[f64], &[f64], &mut BoundingLines);

fn lbp_upto(net: &Network, pert: &PerturbationSpec, strategy: Strategy, layers: usize) -> Result<Prefix> {
    lbp_upto_with(net, pert, strategy, layers, &mut |_, _, _, _| {})
}

fn lbp_upto_with(net: &Network, pert: &PerturbationSpec, strategy: Strategy, layers: usize, adjust: LineAdjust) -> Result<Prefix> {
    check_input(net, pert)?;
    let mut p = Prefix::default();
    for k in 0..layers {
        let a = &net.layers()[k].affine;
        let aff = if k == 0 {
            AffineBounds::exact(&a.weight, &a.bias)
        } else {
            lbp_step(&a.weight, &a.bias, &p.affine[k - 1], &p.lines[k - 1])?
        };
        let (l, u) = concretize(&aff, pert)?;
        if k + 1 < net.depth() {
            let mut lines = layer_lines(net, k, &l, &u, strategy)?;
            adjust(k, &l, &u, &mut lines);
            p.lines.push(lines);
        }
        p.intervals.push(net, k, l, u);
        p.affine.push(aff);
    }
    Ok(p)
}

/// Linear bound propagation with a hook that can replace the bounding lines
/// of each hidden layer before they are used.
pub fn lbp_bounds_with(net: &Network, pert: &PerturbationSpec, strategy: Strategy, adjust: LineAdjust) -> Result<IntervalBounds> {
    Ok(lbp_upto_with(net, pert, strategy, net.depth(), adjust)?.intervals)
}

/// Linear bound propagation: affine bounds of every layer as functions of the
/// input, pushed forward one layer at a time.
pub fn lbp_bounds(net: &Network, pert: &PerturbationSpec, strategy: Strategy) -> Result<(IntervalBounds, Vec<AffineBounds>)> {
    let p = lbp_upto(net, pert, strategy, net.depth())?;
    Ok((p.intervals, p.affine))
}

/// How many layers a back-substitution walks before plugging in stored
/// input-affine bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depth {
    /// Back to the input for every layer.
    Full,
    Layers(usize),
}

impl Depth {
    fn check(self) -> Result<()> {
        match self {
            Depth::Layers(0) => Err(Error::InvalidDepth),
            _ => Ok(()),
        }
    }
}

/// One side of an objective being walked backwards: `lambda z + bias`.
#[derive(Debug, Clone)]
pub struct BackSubState {
    pub lambda: Matrix,
    pub bias: Vec<f64>,
    pub side: Side,
}

impl BackSubState {
    /// Passes through the affine layer `z = W a + b`: the state becomes a
    /// function of `a`.
    fn through_affine(&mut self, w: &Matrix, b: &[f64]) {
        for (i, bi) in self.bias.iter_mut().enumerate() {
            *bi += crate::linalg::dot(self.lambda.row(i), b);
        }
        self.lambda = self.lambda.matmul(w);
    }

    /// Replaces `sigma(z)` by its bounding lines; the state becomes a function
    /// of `z`. A positive coefficient takes the line of the bounded side.
    fn through_activation(&mut self, lines: &BoundingLines) {
        let (s_pos, t_pos, s_neg, t_neg) = match self.side {
            Side::Lower => (&lines.sl, &lines.tl, &lines.su, &lines.tu),
            Side::Upper => (&lines.su, &lines.tu, &lines.sl, &lines.tl),
        };
        for i in 0..self.lambda.rows() {
            let mut add = 0.0;
            for (j, v) in self.lambda.row_mut(i).iter_mut().enumerate() {
                let c = *v;
                if c > 0.0 {
                    add += c * t_pos[j];
                    *v = c * s_pos[j];
                } else if c < 0.0 {
                    add += c * t_neg[j];
                    *v = c * s_neg[j];
                } else {
                    *v = 0.0;
                }
            }
            self.bias[i] += add;
        }
    }

    /// Substitutes input-affine bounds of `z`; the state becomes a function
    /// of `x`.
    fn plug(&mut self, aff: &AffineBounds) {
        let (own, other) = match self.side {
            Side::Lower => (aff.side(Side::Lower), aff.side(Side::Upper)),
            Side::Upper => (aff.side(Side::Upper), aff.side(Side::Lower)),
        };
        let pos = self.lambda.pos_part();
        let neg = self.lambda.neg_part();
        for (i, bi) in self.bias.iter_mut().enumerate() {
            *bi += crate::linalg::dot(pos.row(i), own.1) + crate::linalg::dot(neg.row(i), other.1);
        }
        let mut w = pos.matmul(own.0);
        w.add_assign(&neg.matmul(other.0));
        self.lambda = w;
    }
}

/// Back-substitutes one side of `obj z(k) + b_obj` (`k` is 0-based).
///
/// Walks at most `depth` activations back; if it stops above the first
/// layer it plugs in `affine[j]`, the stored bounds of the layer it reached.
fn backsub_side(
    net: &Network,
    k: usize,
    obj: Option<&MarginSpec>,
    lines: &[BoundingLines],
    affine: &[AffineBounds],
    depth: Depth,
    side: Side,
) -> Result<(Matrix, Vec<f64>)> {
    let a = &net.layers()[k].affine;
    let mut st = match obj {
        Some(o) => BackSubState { lambda: o.weight.clone(), bias: o.bias.clone(), side },
        None => BackSubState { lambda: Matrix::identity(a.outputs()), bias: vec![0.0; a.outputs()], side },
    };
    let limit = match depth {
        Depth::Full => usize::MAX,
        Depth::Layers(v) => v,
    };
    let mut j = k;
    let mut steps = 0;
    loop {
        let layer = &net.layers()[j].affine;
        if steps == 0 && obj.is_none() {
            st.lambda = layer.weight.clone();
            st.bias = layer.bias.clone();
        } else {
            st.through_affine(&layer.weight, &layer.bias);
        }
        if j == 0 {
            return Ok((st.lambda, st.bias));
        }
        let l = lines.get(j - 1).ok_or(Error::MissingBounds(j - 1))?;
        st.through_activation(l);
        steps += 1;
        j -= 1;
        if steps >= limit && j > 0 {
            let aff = affine.get(j).ok_or(Error::MissingBounds(j))?;
            st.plug(aff);
            return Ok((st.lambda, st.bias));
        }
    }
}

/// Input-affine bounds of `obj z(k) + b_obj` by back-substitution.
///
/// `k` is the 0-based target layer, `layer_bounds` must cover layers
/// `0..k` and `affine` must hold stored bounds for the layer where a
/// depth-limited walk stops. `obj = None` bounds `z(k)` itself.
pub fn crown_backsub(
    net: &Network,
    k: usize,
    obj: Option<&MarginSpec>,
    layer_bounds: &IntervalBounds,
    affine: &[AffineBounds],
    strategy: Strategy,
    depth: Depth,
) -> Result<AffineBounds> {
    depth.check()?;
    if k >= net.depth() {
        return Err(Error::MissingBounds(k));
    }
    if layer_bounds.len() < k {
        return Err(Error::MissingBounds(layer_bounds.len()));
    }
    if let Some(o) = obj {
        if o.weight.cols() != net.layers()[k].affine.outputs() {
            return Err(Error::DimensionMismatch {
                layer: k,
                what: "objective",
                expected: net.layers()[k].affine.outputs(),
                found: o.weight.cols(),
            });
        }
    }
    let lines = (0..k)
        .map(|j| layer_lines(net, j, &layer_bounds.pre_lower[j], &layer_bounds.pre_upper[j], strategy))
        .collect::<Result<Vec<_>>>()?;
    backsub_both(net, k, obj, &lines, affine, depth)
}

fn backsub_both(
    net: &Network,
    k: usize,
    obj: Option<&MarginSpec>,
    lines: &[BoundingLines],
    affine: &[AffineBounds],
    depth: Depth,
) -> Result<AffineBounds> {
    let (wl, bl) = backsub_side(net, k, obj, lines, affine, depth, Side::Lower)?;
    let (wu, bu) = backsub_side(net, k, obj, lines, affine, depth, Side::Upper)?;
    Ok(AffineBounds { wl, bl, wu, bu })
}

fn crown_upto(net: &Network, pert: &PerturbationSpec, strategy: Strategy, depth: Depth, layers: usize) -> Result<Prefix> {
    check_input(net, pert)?;
    depth.check()?;
    let mut p = Prefix::default();
    for k in 0..layers {
        let aff = backsub_both(net, k, None, &p.lines, &p.affine, depth)?;
        let (l, u) = concretize(&aff, pert)?;
        if k + 1 < net.depth() {
            p.lines.push(layer_lines(net, k, &l, &u, strategy)?);
        }
        p.intervals.push(net, k, l, u);
        p.affine.push(aff);
    }
    Ok(p)
}

/// Layer-by-layer back-substitution bounds. `Depth::Layers(v)` walks at most
/// `v` layers back for every layer and plugs in stored affine bounds; `v = 1`
/// is linear bound propagation and `Depth::Full` the full back-substitution.
pub fn crown_bounds(net: &Network, pert: &PerturbationSpec, strategy: Strategy, depth: Depth) -> Result<IntervalBounds> {
    Ok(crown_upto(net, pert, strategy, depth, net.depth())?.intervals)
}

/// Engine bounding the hidden layers of a hybrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridBase {
    Ibp,
    Lbp,
}

fn hidden_prefix(net: &Network, pert: &PerturbationSpec, strategy: Strategy, base: HybridBase) -> Result<Prefix> {
    let hidden = net.depth() - 1;
    match base {
        HybridBase::Ibp => {
            let intervals = ibp_upto(net, pert, hidden)?;
            let lines = (0..hidden)
                .map(|k| layer_lines(net, k, &intervals.pre_lower[k], &intervals.pre_upper[k], strategy))
                .collect::<Result<Vec<_>>>()?;
            Ok(Prefix { intervals, lines, affine: Vec::new() })
        }
        HybridBase::Lbp => lbp_upto(net, pert, strategy, hidden),
    }
}

/// Hidden layers by `base`, the output layer by full back-substitution.
pub fn hybrid_bounds(net: &Network, pert: &PerturbationSpec, strategy: Strategy, base: HybridBase) -> Result<IntervalBounds> {
    let mut p = hidden_prefix(net, pert, strategy, base)?;
    let k = net.depth() - 1;
    let aff = backsub_both(net, k, None, &p.lines, &p.affine, Depth::Full)?;
    let (l, u) = concretize(&aff, pert)?;
    p.intervals.push(net, k, l, u);
    Ok(p.intervals)
}

/// A complete bounding method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ibp,
    Lbp,
    /// Back-substitution limited to `v` layers.
    RelaxedCrown(usize),
    Crown,
    CrownIbp,
    CrownLbp,
}

impl Method {
    pub fn name(self) -> alloc::string::String {
        match self {
            Method::Ibp => "ibp".into(),
            Method::Lbp => "lbp".into(),
            Method::RelaxedCrown(v) => format!("relaxed-crown-{v}"),
            Method::Crown => "crown".into(),
            Method::CrownIbp => "crown-ibp".into(),
            Method::CrownLbp => "crown-lbp".into(),
        }
    }

    /// Whether the bounding-line strategy affects the result.
    pub fn uses_strategy(self) -> bool {
        self != Method::Ibp
    }
}

/// Bounds of every layer by `method`.
pub fn method_bounds(method: Method, net: &Network, pert: &PerturbationSpec, strategy: Strategy) -> Result<IntervalBounds> {
    match method {
        Method::Ibp => ibp_bounds(net, pert),
        Method::Lbp => Ok(lbp_bounds(net, pert, strategy)?.0),
        Method::RelaxedCrown(v) => crown_bounds(net, pert, strategy, Depth::Layers(v)),
        Method::Crown => crown_bounds(net, pert, strategy, Depth::Full),
        Method::CrownIbp => hybrid_bounds(net, pert, strategy, HybridBase::Ibp),
        Method::CrownLbp => hybrid_bounds(net, pert, strategy, HybridBase::Lbp),
    }
}

/// Bounds of the network output together with a lower bound of a linear
/// objective `obj z(m)` of it, sharing the hidden-layer computation.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective_lower: Vec<f64>,
}

/// Computes [`OutputBounds`] for `method`.
///
/// The objective is walked back through the output layer directly, so no
/// extra relaxation is introduced. For IBP this is the interval image of
/// `obj W(m)` over the last hidden box.
pub fn output_bounds(
    method: Method,
    net: &Network,
    pert: &PerturbationSpec,
    obj: &MarginSpec,
    strategy: Strategy,
) -> Result<OutputBounds> {
    check_input(net, pert)?;
    let k = net.depth() - 1;
    let last = &net.layers()[k].affine;
    if obj.weight.cols() != last.outputs() {
        return Err(Error::DimensionMismatch { layer: k, what: "objective", expected: last.outputs(), found: obj.weight.cols() });
    }
    let (prefix, depth) = match method {
        Method::Ibp => {
            let w = obj.weight.matmul(&last.weight);
            let mut b = obj.weight.matvec(&last.bias);
            for (bi, oi) in b.iter_mut().zip(&obj.bias) {
                *bi += oi;
            }
            if k == 0 {
                let (lower, upper) = first_layer(net, pert)?;
                let objective_lower = concretize_side(&w, &b, pert, Side::Lower)?;
                return Ok(OutputBounds { lower, upper, objective_lower });
            }
            let hidden = ibp_upto(net, pert, k)?;
            let (pl, pu) = (&hidden.post_lower[k - 1], &hidden.post_upper[k - 1]);
            let (lower, upper) = ibp_layer(&last.weight, &last.bias, pl, pu)?;
            let objective_lower = ibp_layer(&w, &b, pl, pu)?.0;
            return Ok(OutputBounds { lower, upper, objective_lower });
        }
        Method::Lbp => (lbp_upto(net, pert, strategy, k)?, Depth::Layers(1)),
        Method::RelaxedCrown(v) => {
            Depth::Layers(v).check()?;
            (crown_upto(net, pert, strategy, Depth::Layers(v), k)?, Depth::Layers(v))
        }
        Method::Crown => (crown_upto(net, pert, strategy, Depth::Full, k)?, Depth::Full),
        Method::CrownIbp => (hidden_prefix(net, pert, strategy, HybridBase::Ibp)?, Depth::Full),
        Method::CrownLbp => (hidden_prefix(net, pert, strategy, HybridBase::Lbp)?, Depth::Full),
    };
    let aff = backsub_both(net, k, None, &prefix.lines, &prefix.affine, depth)?;
    let (lower, upper) = concretize(&aff, pert)?;
    let (w, b) = backsub_side(net, k, Some(obj), &prefix.lines, &prefix.affine, depth, Side::Lower)?;
    let objective_lower = concretize_side(&w, &b, pert, Side::Lower)?;
    Ok(OutputBounds { lower, upper, objective_lower })
}

/// Lower bound of a linear objective over the network output, `obj z(m)`.
pub fn objective_lower_bound(
    method: Method,
    net: &Network,
    pert: &PerturbationSpec,
    obj: &MarginSpec,
    strategy: Strategy,
) -> Result<Vec<f64>> {
    Ok(output_bounds(method, net, pert, obj, strategy)?.objective_lower)
}

/// Lower bound `l_omega` of the margin `z_y - z_i` over the perturbation set.
pub fn margin_lower_bound(method: Method, net: &Network, pert: &PerturbationSpec, y: usize, strategy: Strategy) -> Result<Vec<f64>> {
    let spec = MarginSpec::from_label(y, net.output_dim())?;
    objective_lower_bound(method, net, pert, &spec, strategy)
}

/// Restricts interval bounds to the first `layers` layers.
pub fn truncate_bounds(b: &IntervalBounds, layers: usize) -> IntervalBounds {
    b.truncated(layers.min(b.len()))
}
