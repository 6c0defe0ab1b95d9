//! Certified training: IBP and CROWN-IBP losses recorded on the tape,
//! schedules, SGD, ramp-point initialization and a PGD attack.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::bounds::{method_bounds, Method, Norm, ThreatModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{cross_entropy, sqrt};
use crate::netdef::{ActivationKind, ActivationSpec, Network};
use crate::oracle::sample_point;
use crate::relax::{ramp_lines, relu_lines, Dual3, Strategy};
use crate::verify::{verified_error, clean_error};

/// Parameters of a network as tape leaves.
struct TapeNet {
    w: Vec<Var>,
    b: Vec<Var>,
    r: Vec<Option<Var>>,
}

impl TapeNet {
    fn record(tape: &mut Tape, net: &Network) -> Self {
        let mut out = Self { w: Vec::new(), b: Vec::new(), r: Vec::new() };
        for layer in net.layers() {
            let w = &layer.affine.weight;
            out.w.push(tape.leaf(w.data().to_vec(), &[w.rows(), w.cols()]));
            out.b.push(tape.leaf(layer.affine.bias.clone(), &[w.rows()]));
            let r = layer.activation.as_ref().and_then(|a| a.ramp_points()).map(|r| tape.leaf(r.to_vec(), &[r.len()]));
            out.r.push(r);
        }
        out
    }
}

/// Activation of a `[batch, n]` node; `r` is the broadcast ramp points.
fn act_tape(tape: &mut Tape, spec: &ActivationSpec, z: Var, r: Option<Var>) -> Var {
    let eta = spec.eta();
    let zv = tape.value(z).to_vec();
    match r {
        None => {
            let val = zv.iter().map(|&v| crate::netdef::leaky(v, eta)).collect();
            let dz = zv.iter().map(|&v| if v < 0.0 { eta } else { 1.0 }).collect();
            tape.local(val, vec![(z, dz)])
        }
        Some(r) => {
            let rv = tape.value(r).to_vec();
            let n = zv.len();
            let (mut val, mut dz, mut dr) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for (&v, &rr) in zv.iter().zip(&rv) {
                val.push(crate::netdef::ramp(v, eta, rr));
                let (a, b) = if v < 0.0 {
                    (eta, 0.0)
                } else if v < rr {
                    (1.0, 0.0)
                } else {
                    (eta, 1.0 - eta)
                };
                dz.push(a);
                dr.push(b);
            }
            tape.local(val, vec![(z, dz), (r, dr)])
        }
    }
}

/// Where the last back-substituted or interval objective is concretized.
enum Region {
    /// Per-instance box `mid +- rad`, both `[batch, n]`.
    Box { mid: Var, rad: Var },
    /// `l_2` ball of radius `eps` around `center`.
    Ball { center: Var, eps: f64 },
}

/// Lower and upper interval of `a W^T + b` over `region`, shared `W`.
fn interval_affine(tape: &mut Tape, w: Var, b: Var, region: &Region) -> (Var, Var) {
    match *region {
        Region::Box { mid, rad } => {
            let mu = tape.matmul(mid, w, true);
            let mu = tape.add_bias(mu, b);
            let aw = tape.abs(w);
            let spread = tape.matmul(rad, aw, true);
            (tape.sub(mu, spread), tape.add(mu, spread))
        }
        Region::Ball { center, eps } => {
            let batch = tape.shape(center)[0];
            let mu = tape.matmul(center, w, true);
            let mu = tape.add_bias(mu, b);
            let n = tape.norm2_last(w);
            let n = tape.scale(n, eps);
            let spread = tape.broadcast_rows(n, batch);
            (tape.sub(mu, spread), tape.add(mu, spread))
        }
    }
}

/// Lower bound of `lam z + c` (`lam: [batch, C, n]`, `c: [batch, C]`).
fn concretize_lower(tape: &mut Tape, lam: Var, c: Var, region: &Region) -> Var {
    match *region {
        Region::Box { mid, rad } => {
            let a = tape.batch_row_dot(lam, mid);
            let al = tape.abs(lam);
            let s = tape.batch_row_dot(al, rad);
            let lo = tape.add(c, a);
            tape.sub(lo, s)
        }
        Region::Ball { center, eps } => {
            let a = tape.batch_row_dot(lam, center);
            let n = tape.norm2_last(lam);
            let n = tape.scale(n, eps);
            let lo = tape.add(c, a);
            tape.sub(lo, n)
        }
    }
}

fn input_region(tape: &mut Tape, x: &[Vec<f64>], threat: &ThreatModel) -> (Var, Region) {
    let (b, n0) = (x.len(), x[0].len());
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let xv = tape.leaf(flat, &[b, n0]);
    let region = match threat.norm {
        Norm::LInf => {
            let (mut mid, mut rad) = (Vec::with_capacity(b * n0), Vec::with_capacity(b * n0));
            for xi in x {
                let (lo, hi) = threat.around(xi).input_box();
                mid.extend(lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)));
                rad.extend(lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)));
            }
            Region::Box { mid: tape.leaf(mid, &[b, n0]), rad: tape.leaf(rad, &[b, n0]) }
        }
        Norm::L2 => Region::Ball { center: xv, eps: threat.epsilon },
    };
    (xv, region)
}

/// Pre-activation interval nodes of the hidden layers and the margin lower
/// bound of the IBP pass.
struct IbpPass {
    lower: Vec<Var>,
    upper: Vec<Var>,
    margin: Var,
}

fn ibp_tape(tape: &mut Tape, net: &Network, p: &TapeNet, region: &Region, r_b: &[Option<Var>], labels: &[usize]) -> IbpPass {
    let m = net.depth();
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    let mut post: Option<Region> = None;
    for k in 0..m - 1 {
        let (l, u) = interval_affine(tape, p.w[k], p.b[k], post.as_ref().unwrap_or(region));
        let spec = net.activation(k).expect("hidden activation");
        let pl = act_tape(tape, spec, l, r_b[k]);
        let pu = act_tape(tape, spec, u, r_b[k]);
        let s = tape.add(pu, pl);
        let mid = tape.scale(s, 0.5);
        let d = tape.sub(pu, pl);
        let rad = tape.scale(d, 0.5);
        lower.push(l);
        upper.push(u);
        post = Some(Region::Box { mid, rad });
    }
    let (lam, c) = margin_objective(tape, p, m - 1, labels);
    let margin = concretize_lower(tape, lam, c, post.as_ref().unwrap_or(region));
    IbpPass { lower, upper, margin }
}

/// `C_y W(k)` and `C_y b(k)` for every instance, `C_y` the margin rows.
fn margin_objective(tape: &mut Tape, p: &TapeNet, k: usize, labels: &[usize]) -> (Var, Var) {
    let lam = tape.gather_margin(p.w[k], labels);
    let c = tape.shape(p.b[k])[0];
    let b2 = tape.reshape(p.b[k], &[c, 1]);
    let cb = tape.gather_margin(b2, labels);
    let cb = tape.reshape(cb, &[labels.len(), c]);
    (lam, cb)
}

/// Bounding-line coefficient nodes `(sl, tl, su, tu)` of a hidden layer,
/// differentiated through `l`, `u` and the ramp points.
fn lines_tape(tape: &mut Tape, spec: &ActivationSpec, strategy: Strategy, l: Var, u: Var, r: Option<Var>) -> Result<[Var; 4]> {
    let lv = tape.value(l).to_vec();
    let uv = tape.value(u).to_vec();
    let rv = r.map(|r| tape.value(r).to_vec());
    let n = lv.len();
    let mut vals = [(); 4].map(|_| Vec::with_capacity(n));
    let mut parts = [(); 4].map(|_| [(); 3].map(|_| Vec::with_capacity(n)));
    for i in 0..n {
        let (dl, du) = (Dual3::var(lv[i], 0), Dual3::var(uv[i], 1));
        let lines = match &rv {
            Some(rv) => ramp_lines(strategy, dl, du, Dual3::var(rv[i], 2), spec.eta())?,
            None => relu_lines(strategy, dl, du, spec.eta())?,
        };
        for (slot, d) in [lines.sl, lines.tl, lines.su, lines.tu].iter().enumerate() {
            vals[slot].push(d.v);
            for j in 0..3 {
                parts[slot][j].push(d.d[j]);
            }
        }
    }
    let mut out = [l; 4];
    for (slot, (val, [pl, pu, pr])) in vals.into_iter().zip(parts).enumerate() {
        let mut inputs = vec![(l, pl), (u, pu)];
        if let Some(r) = r {
            inputs.push((r, pr));
        }
        out[slot] = tape.local(val, inputs);
    }
    Ok(out)
}

/// Margin lower bound by full back-substitution over the IBP intervals.
fn crown_ibp_tape(
    tape: &mut Tape,
    net: &Network,
    p: &TapeNet,
    region: &Region,
    r_b: &[Option<Var>],
    ibp: &IbpPass,
    labels: &[usize],
    strategy: Strategy,
) -> Result<Var> {
    let m = net.depth();
    let (b, classes) = (labels.len(), net.output_dim());
    let (mut lam, mut c) = margin_objective(tape, p, m - 1, labels);
    for j in (0..m - 1).rev() {
        let spec = net.activation(j).expect("hidden activation");
        let [sl, tl, su, tu] = lines_tape(tape, spec, strategy, ibp.lower[j], ibp.upper[j], r_b[j])?;
        let pos = tape.pos_part(lam);
        let neg = tape.neg_part(lam);
        let ct = tape.batch_row_dot(pos, tl);
        let cu = tape.batch_row_dot(neg, tu);
        c = tape.add(c, ct);
        c = tape.add(c, cu);
        let a = tape.mul_bcast(pos, sl);
        let bb = tape.mul_bcast(neg, su);
        lam = tape.add(a, bb);
        // Through the affine layer j.
        let n = tape.shape(p.b[j])[0];
        let bias_row = tape.reshape(p.b[j], &[1, n]);
        let cb = tape.matmul(lam, bias_row, true);
        let cb = tape.reshape(cb, &[b, classes]);
        c = tape.add(c, cb);
        lam = tape.matmul(lam, p.w[j], false);
    }
    Ok(concretize_lower(tape, lam, c, region))
}

/// Value of the loss and its two cross-entropy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub clean: f64,
    pub robust: f64,
}

/// Gradients of the loss with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub ramps: Vec<Option<Vec<f64>>>,
}

impl ParamGrads {
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for w in &self.weights {
            s += w.data().iter().map(|v| v * v).sum::<f64>();
        }
        for v in self.biases.iter().chain(self.ramps.iter().flatten()) {
            s += v.iter().map(|x| x * x).sum::<f64>();
        }
        sqrt(s)
    }
}

/// Loss hyperparameters of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kappa: f64,
    /// Weight of the CROWN-IBP margin; `0` is the pure IBP loss.
    pub beta: f64,
    pub strategy: Strategy,
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value: v })
    }
}

struct Recorded {
    tape: Tape,
    params: TapeNet,
    root: Var,
    breakdown: LossBreakdown,
    margin: Var,
}

fn record(net: &Network, x: &[Vec<f64>], y: &[usize], threat: &ThreatModel, spec: LossSpec) -> Result<Recorded> {
    check_unit("kappa", spec.kappa)?;
    check_unit("beta", spec.beta)?;
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(x.to_vec(), y.to_vec(), "batch")?.check_for(net)?;
    let mut tape = Tape::new();
    let params = TapeNet::record(&mut tape, net);
    let batch = x.len();
    let r_b: Vec<Option<Var>> = params.r.iter().map(|r| r.map(|r| tape.broadcast_rows(r, batch))).collect();
    let (xv, region) = input_region(&mut tape, x, threat);

    // Clean logits.
    let mut a = xv;
    for k in 0..net.depth() {
        let z = tape.matmul(a, params.w[k], true);
        let z = tape.add_bias(z, params.b[k]);
        a = match net.activation(k) {
            Some(act) => act_tape(&mut tape, act, z, r_b[k]),
            None => z,
        };
    }
    let clean = tape.cross_entropy_mean(a, y);

    let ibp = ibp_tape(&mut tape, net, &params, &region, &r_b, y);
    let mut margin = ibp.margin;
    if spec.beta > 0.0 && net.depth() > 1 {
        let ci = crown_ibp_tape(&mut tape, net, &params, &region, &r_b, &ibp, y, spec.strategy)?;
        let a = tape.scale(ibp.margin, 1.0 - spec.beta);
        let b = tape.scale(ci, spec.beta);
        margin = tape.add(a, b);
    } else if spec.beta > 0.0 {
        // One affine layer: both bounds are exact interval images.
        margin = ibp.margin;
    }
    let neg = tape.scale(margin, -1.0);
    let robust = tape.cross_entropy_mean(neg, y);
    let ck = tape.scale(clean, spec.kappa);
    let rk = tape.scale(robust, 1.0 - spec.kappa);
    let root = tape.add(ck, rk);
    let breakdown = LossBreakdown { total: tape.value(root)[0], clean: tape.value(clean)[0], robust: tape.value(robust)[0] };
    Ok(Recorded { tape, params, root, breakdown, margin })
}

fn grads(rec: &Recorded, net: &Network) -> ParamGrads {
    let g = rec.tape.backward(rec.root);
    let mut out = ParamGrads { weights: Vec::new(), biases: Vec::new(), ramps: Vec::new() };
    for (k, layer) in net.layers().iter().enumerate() {
        let w = &layer.affine.weight;
        out.weights.push(Matrix::new(w.rows(), w.cols(), g.of(&rec.tape, rec.params.w[k])).expect("gradient shape"));
        out.biases.push(g.of(&rec.tape, rec.params.b[k]));
        out.ramps.push(rec.params.r[k].map(|r| g.of(&rec.tape, r)));
    }
    out
}

/// `kappa CE(z(m)(x), y) + (1 - kappa) CE(-l_omega, y)` averaged over the
/// batch, with the IBP margin bound.
pub fn ibp_loss(net: &Network, x: &[Vec<f64>], y: &[usize], threat: &ThreatModel, kappa: f64) -> Result<LossBreakdown> {
    Ok(record(net, x, y, threat, LossSpec { kappa, beta: 0.0, strategy: Strategy::Tight })?.breakdown)
}

/// As [`ibp_loss`] with `l_omega = (1 - beta) l_IBP + beta l_CROWN-IBP`.
pub fn crown_ibp_loss(
    net: &Network,
    x: &[Vec<f64>],
    y: &[usize],
    threat: &ThreatModel,
    kappa: f64,
    beta: f64,
    strategy: Strategy,
) -> Result<LossBreakdown> {
    Ok(record(net, x, y, threat, LossSpec { kappa, beta, strategy })?.breakdown)
}

/// The margin lower bound used by the loss, one row per instance.
pub fn loss_margin(net: &Network, x: &[Vec<f64>], y: &[usize], threat: &ThreatModel, beta: f64, strategy: Strategy) -> Result<Vec<Vec<f64>>> {
    let rec = record(net, x, y, threat, LossSpec { kappa: 1.0, beta, strategy })?;
    Ok(rec.tape.value(rec.margin).chunks(net.output_dim()).map(|c| c.to_vec()).collect())
}

/// Loss value and gradients with respect to every weight, bias and ramp point.
pub fn loss_and_gradients(net: &Network, x: &[Vec<f64>], y: &[usize], threat: &ThreatModel, spec: LossSpec) -> Result<(LossBreakdown, ParamGrads)> {
    let rec = record(net, x, y, threat, spec)?;
    let g = grads(&rec, net);
    Ok((rec.breakdown, g))
}

/// Leakage-slope schedule over training epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSchedule {
    Constant(f64),
    /// Linear from `start` at the first epoch to `end` at the last.
    Linear { start: f64, end: f64 },
}

impl EtaSchedule {
    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        match *self {
            EtaSchedule::Constant(eta) => eta,
            EtaSchedule::Linear { start, end } => {
                if epochs <= 1 {
                    return start;
                }
                let t = (epoch.min(epochs - 1)) as f64 / (epochs - 1) as f64;
                start + (end - start) * t
            }
        }
    }
}

/// How ramp points are initialized before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampInit {
    /// Every `r = 1`.
    Default,
    /// Per neuron, the 90th percentile of `|z|` over a warm-up batch.
    WarmUp,
    /// Every `r` set to the given value, clamped into `[0.1, 10]`.
    Constant(f64),
}

pub const RAMP_MIN: f64 = 0.01;

/// Initializes every ramp point. Returns the number of neurons whose
/// warm-up value had to be clamped into `[0.1, 10]`.
pub fn init_param_ramp(net: &mut Network, mode: RampInit, warmup: &[Vec<f64>]) -> Result<usize> {
    let mut clamped = 0;
    let preacts: Vec<Vec<Vec<f64>>> = match mode {
        RampInit::Default | RampInit::Constant(_) => Vec::new(),
        RampInit::WarmUp => {
            if warmup.is_empty() {
                return Err(Error::EmptyDataset);
            }
            warmup.iter().map(|x| net.forward(x).map(|f| f.preacts)).collect::<Result<_>>()?
        }
    };
    for (k, layer) in net.layers_mut().iter_mut().enumerate() {
        let Some(act) = layer.activation.as_mut() else { continue };
        let Some(r) = act.ramp_points_mut() else { continue };
        for (i, ri) in r.iter_mut().enumerate() {
            *ri = match mode {
                RampInit::Default => 1.0,
                RampInit::Constant(v) => {
                    let c = v.clamp(0.1, 10.0);
                    if c != v {
                        clamped += 1;
                    }
                    c
                }
                RampInit::WarmUp => {
                    let mut v: Vec<f64> = preacts.iter().map(|p| p[k][i].abs()).collect();
                    v.sort_by(f64::total_cmp);
                    let q = v[libm::round((v.len() - 1) as f64 * 0.9) as usize];
                    let c = q.clamp(0.1, 10.0);
                    if c != q {
                        clamped += 1;
                    }
                    c
                }
            };
        }
    }
    Ok(clamped)
}

/// Which robust loss to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Ibp,
    CrownIbp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `None` is plain SGD.
    pub momentum: Option<f64>,
    /// Multiply the learning rate by 0.1 at each of these epochs.
    pub lr_milestones: Vec<usize>,
    pub loss: LossKind,
    pub eps_train: f64,
    pub eps_eval: f64,
    pub norm: Norm,
    pub domain: Option<(f64, f64)>,
    /// First epoch of the epsilon ramp; `None` is a tenth of the epochs.
    pub eps_start_epoch: Option<usize>,
    /// Length of the ramp in epochs; `None` is half of the epochs.
    pub eps_ramp_epochs: Option<usize>,
    pub kappa_start: f64,
    pub kappa_end: f64,
    /// Lines used for the CROWN-IBP margin while `beta > 0`.
    pub strategy: Strategy,
    pub eta: EtaSchedule,
    pub ramp_init: RampInit,
    /// Weight decay on ramp points only.
    pub ramp_weight_decay: f64,
    /// Clip the gradient to this global norm.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 50,
            learning_rate: 0.05,
            momentum: Some(0.9),
            lr_milestones: Vec::new(),
            loss: LossKind::Ibp,
            eps_train: 0.1,
            eps_eval: 0.1,
            norm: Norm::LInf,
            domain: Some((0.0, 1.0)),
            eps_start_epoch: None,
            eps_ramp_epochs: None,
            kappa_start: 1.0,
            kappa_end: 0.5,
            strategy: Strategy::Tight,
            eta: EtaSchedule::Constant(0.0),
            ramp_init: RampInit::Default,
            ramp_weight_decay: 0.0,
            grad_clip: None,
            seed: 0,
        }
    }
}

/// Values of the schedules at one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub eps: f64,
    pub kappa: f64,
    pub beta: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter { name: "learning_rate", value: self.learning_rate });
        }
        ThreatModel::new(self.eps_train, self.norm)?;
        ThreatModel::new(self.eps_eval, self.norm)?;
        check_unit("kappa_start", self.kappa_start)?;
        check_unit("kappa_end", self.kappa_end)?;
        if let Some(m) = self.momentum {
            check_unit("momentum", m)?;
        }
        Ok(())
    }

    fn ramp_window(&self) -> (usize, usize) {
        let start = self.eps_start_epoch.unwrap_or(self.epochs / 10);
        let len = self.eps_ramp_epochs.unwrap_or(self.epochs / 2).max(1);
        (start, len)
    }

    /// Schedules at `step` with `steps_per_epoch` steps per epoch: epsilon,
    /// kappa and beta move linearly over the ramp window.
    pub fn schedule(&self, step: usize, steps_per_epoch: usize) -> ScheduleState {
        let (start, len) = self.ramp_window();
        let (s0, n) = (start * steps_per_epoch, len * steps_per_epoch);
        let t = if step < s0 { 0.0 } else { ((step - s0 + 1) as f64 / n as f64).min(1.0) };
        ScheduleState {
            eps: self.eps_train * t,
            kappa: self.kappa_start + (self.kappa_end - self.kappa_start) * t,
            beta: match self.loss {
                LossKind::Ibp => 0.0,
                LossKind::CrownIbp => 1.0 - t,
            },
        }
    }

    fn threat(&self, eps: f64) -> ThreatModel {
        ThreatModel { epsilon: eps, norm: self.norm, domain: self.domain }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub eps: f64,
    pub kappa: f64,
    pub beta: f64,
    pub eta: f64,
    pub loss: f64,
    pub clean_err: f64,
    pub ibp_verified_err: f64,
}

/// Trains `net` on `data`. The per-epoch log evaluates clean and IBP
/// verified error at `eps_eval` on `eval` (the training set if `None`).
pub fn train(net: Network, data: &Dataset, eval: Option<&Dataset>, config: &TrainConfig) -> Result<(Network, Vec<EpochLog>)> {
    train_with(net, data, eval, config, &mut |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    mut net: Network,
    data: &Dataset,
    eval: Option<&Dataset>,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(Network, Vec<EpochLog>)> {
    config.validate()?;
    data.check_for(&net)?;
    let eval = eval.unwrap_or(data);
    eval.check_for(&net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let is_ramp = net.layers().iter().any(|l| l.activation.as_ref().map(|a| a.kind()) == Some(ActivationKind::ParamRamp));
    if is_ramp {
        let n = config.batch_size.min(data.len());
        init_param_ramp(&mut net, config.ramp_init, &data.inputs[..n])?;
    }
    let steps_per_epoch = data.len().div_ceil(config.batch_size);
    let mut velocity: Option<ParamGrads> = None;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut lr = config.learning_rate;
    let mut step = 0;
    for epoch in 0..config.epochs {
        if config.lr_milestones.contains(&epoch) {
            lr *= 0.1;
        }
        let eta = config.eta.at(epoch, config.epochs);
        net.set_eta(eta)?;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut state = config.schedule(step, steps_per_epoch);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            state = config.schedule(step, steps_per_epoch);
            let x: Vec<Vec<f64>> = chunk.iter().map(|&i| data.inputs[i].clone()).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let spec = LossSpec { kappa: state.kappa, beta: state.beta, strategy: config.strategy };
            let (loss, mut g) = loss_and_gradients(&net, &x, &y, &config.threat(state.eps), spec)?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged { epoch, step: bi });
            }
            loss_sum += loss.total * chunk.len() as f64;
            if let Some(clip) = config.grad_clip {
                let n = g.norm();
                if n > clip {
                    scale_grads(&mut g, clip / n);
                }
            }
            if config.ramp_weight_decay > 0.0 {
                for (gr, layer) in g.ramps.iter_mut().zip(net.layers()) {
                    if let (Some(gr), Some(r)) = (gr.as_mut(), layer.activation.as_ref().and_then(|a| a.ramp_points())) {
                        for (a, b) in gr.iter_mut().zip(r) {
                            *a += config.ramp_weight_decay * b;
                        }
                    }
                }
            }
            let update = match config.momentum {
                Some(mu) => {
                    let v = match velocity.take() {
                        Some(mut v) => {
                            combine(&mut v, mu, &g);
                            v
                        }
                        None => g,
                    };
                    velocity = Some(v.clone());
                    v
                }
                None => g,
            };
            apply_update(&mut net, &update, lr)?;
            step += 1;
        }
        let threat = config.threat(config.eps_eval);
        let entry = EpochLog {
            epoch,
            eps: state.eps,
            kappa: state.kappa,
            beta: state.beta,
            eta,
            loss: loss_sum / data.len() as f64,
            clean_err: clean_error(&net, eval)?,
            ibp_verified_err: verified_error(&net, eval, &threat, Method::Ibp, Strategy::Tight)?,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok((net, log))
}

fn scale_grads(g: &mut ParamGrads, c: f64) {
    for w in &mut g.weights {
        w.data_mut().iter_mut().for_each(|v| *v *= c);
    }
    for v in g.biases.iter_mut().chain(g.ramps.iter_mut().flatten()) {
        v.iter_mut().for_each(|x| *x *= c);
    }
}

/// `v = mu v + g`.
fn combine(v: &mut ParamGrads, mu: f64, g: &ParamGrads) {
    for (a, b) in v.weights.iter_mut().zip(&g.weights) {
        a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x = mu * *x + y);
    }
    for (a, b) in v.biases.iter_mut().zip(&g.biases) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x = mu * *x + y);
    }
    for (a, b) in v.ramps.iter_mut().zip(&g.ramps) {
        if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x = mu * *x + y);
        }
    }
}

/// Gradient step followed by the projection `r >= RAMP_MIN`.
pub fn apply_update(net: &mut Network, g: &ParamGrads, lr: f64) -> Result<()> {
    for (k, layer) in net.layers_mut().iter_mut().enumerate() {
        layer.affine.weight.data_mut().iter_mut().zip(g.weights[k].data()).for_each(|(w, d)| *w -= lr * d);
        layer.affine.bias.iter_mut().zip(&g.biases[k]).for_each(|(b, d)| *b -= lr * d);
        if !layer.affine.weight.is_finite() || !layer.affine.bias.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("parameters after update"));
        }
        if let (Some(act), Some(gr)) = (layer.activation.as_mut(), g.ramps[k].as_ref()) {
            if let Some(r) = act.ramp_points_mut() {
                for (ri, d) in r.iter_mut().zip(gr) {
                    *ri = (*ri - lr * d).max(RAMP_MIN);
                }
            }
        }
    }
    Ok(())
}

/// Cross-entropy at `x` and its gradient with respect to `x`.
pub fn input_gradient(net: &Network, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    input_gradient_pred(net, x, y).map(|(l, g, _)| (l, g))
}

/// As [`input_gradient`], also returning the predicted class at `x`.
fn input_gradient_pred(net: &Network, x: &[f64], y: usize) -> Result<(f64, Vec<f64>, usize)> {
    let f = net.forward(x)?;
    let logits = f.logits();
    let pred = crate::netdef::argmax(logits);
    let loss = cross_entropy(logits, y);
    let lse = crate::math::log_sum_exp(logits);
    let mut delta: Vec<f64> = logits.iter().enumerate().map(|(i, &z)| crate::math::exp(z - lse) - if i == y { 1.0 } else { 0.0 }).collect();
    for k in (0..net.depth()).rev() {
        let w = &net.layers()[k].affine.weight;
        let mut da = vec![0.0; w.cols()];
        for (i, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                for (a, &wij) in da.iter_mut().zip(w.row(i)) {
                    *a += d * wij;
                }
            }
        }
        if k == 0 {
            return Ok((loss, da, pred));
        }
        let act = net.activation(k - 1).ok_or(Error::MissingBounds(k - 1))?;
        delta = da.iter().enumerate().map(|(i, &a)| a * act.derivative_scalar(f.preacts[k - 1][i], i)).collect();
    }
    unreachable!("network has at least one layer")
}

/// Attack hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub steps: usize,
    pub restarts: usize,
    /// `None` is `2.5 eps / steps`.
    pub step_size: Option<f64>,
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self { steps: 200, restarts: 10, step_size: None, seed: 0 }
    }
}

fn project(x: &mut [f64], x0: &[f64], threat: &ThreatModel) {
    match threat.norm {
        Norm::LInf => {
            for (v, &c) in x.iter_mut().zip(x0) {
                *v = v.clamp(c - threat.epsilon, c + threat.epsilon);
            }
        }
        Norm::L2 => {
            let n = sqrt(x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum());
            if n > threat.epsilon {
                let s = threat.epsilon / n;
                for (v, &c) in x.iter_mut().zip(x0) {
                    *v = c + (*v - c) * s;
                }
            }
        }
    }
    if let Some((lo, hi)) = threat.domain {
        for (v, &c) in x.iter_mut().zip(x0) {
            // Never leave the box, and never push the center itself out.
            *v = v.clamp(lo.min(c), hi.max(c));
        }
    }
}

/// Projected gradient ascent on the cross-entropy with random starts.
/// Returns the last point tried and whether it is misclassified.
pub fn pgd_attack(net: &Network, x0: &[f64], y: usize, threat: &ThreatModel, config: &PgdConfig) -> Result<(Vec<f64>, bool)> {
    if net.predict(x0)? != y {
        return Ok((x0.to_vec(), true));
    }
    if threat.epsilon == 0.0 {
        return Ok((x0.to_vec(), false));
    }
    let alpha = config.step_size.unwrap_or(2.5 * threat.epsilon / config.steps.max(1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pert = threat.around(x0);
    let mut best = x0.to_vec();
    let mut best_loss = f64::NEG_INFINITY;
    for _ in 0..config.restarts.max(1) {
        let mut x = sample_point(&pert, &mut rng);
        project(&mut x, x0, threat);
        for _ in 0..config.steps {
            let (loss, g, pred) = input_gradient_pred(net, &x, y)?;
            if loss > best_loss {
                best_loss = loss;
                best.clone_from(&x);
            }
            if pred != y {
                return Ok((x, true));
            }
            match threat.norm {
                Norm::LInf => {
                    for (v, d) in x.iter_mut().zip(&g) {
                        *v += alpha * if *d > 0.0 { 1.0 } else if *d < 0.0 { -1.0 } else { 0.0 };
                    }
                }
                Norm::L2 => {
                    let n = sqrt(g.iter().map(|d| d * d).sum());
                    if n > 0.0 {
                        for (v, d) in x.iter_mut().zip(&g) {
                            *v += alpha * d / n;
                        }
                    }
                }
            }
            project(&mut x, x0, threat);
        }
        if net.predict(&x)? != y {
            return Ok((x, true));
        }
    }
    Ok((best, false))
}

/// Fraction of instances that PGD misclassifies (clean errors included).
pub fn pgd_error(net: &Network, data: &Dataset, threat: &ThreatModel, config: &PgdConfig) -> Result<f64> {
    data.check_for(net)?;
    let mut wrong = 0;
    for i in 0..data.len() {
        let (x, y) = data.get(i);
        let cfg = PgdConfig { seed: config.seed.wrapping_add(i as u64), ..*config };
        if pgd_attack(net, x, y, threat, &cfg)?.1 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Random labelled batch from a network's own predictions; handy for tests
/// and warm-up statistics.
pub fn random_batch<R: Rng + ?Sized>(net: &Network, n: usize, lo: f64, hi: f64, rng: &mut R) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..net.input_dim()).map(|_| rng.gen_range(lo..hi)).collect()).collect();
    let y = x.iter().map(|xi| net.predict(xi)).collect::<Result<_>>()?;
    Ok((x, y))
}

/// IBP bounds of the hidden layers, exposed for histogram-style analyses of
/// trained networks.
pub fn hidden_intervals(net: &Network, x0: &[f64], threat: &ThreatModel) -> Result<crate::bounds::IntervalBounds> {
    method_bounds(Method::Ibp, net, &threat.around(x0), Strategy::Tight)
}
