//! Brute-force reference bounds: sampling, a low-dimensional grid with a
//! Lipschitz correction, and corner enumeration for single affine maps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{ibp_layer, Norm, PerturbationSpec};
use crate::error::{Error, Result};
use crate::math::{powf, sqrt, standard_normal};
use crate::netdef::{MarginSpec, Network};

/// Quantity whose range over the perturbation set is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Pre-activation `z(k)` of layer `k` (0-based).
    PreActivation(usize),
    /// Margin `z_y - z_i` of the output.
    Margin(usize),
}

impl Objective {
    pub fn eval(&self, net: &Network, x: &[f64]) -> Result<Vec<f64>> {
        let f = net.forward(x)?;
        match *self {
            Objective::PreActivation(k) => f.preacts.get(k).cloned().ok_or(Error::MissingBounds(k)),
            Objective::Margin(y) => Ok(MarginSpec::from_label(y, net.output_dim())?.apply(f.logits())),
        }
    }

    /// A Lipschitz constant of the objective in the `l_inf` norms: the product
    /// of `max(1, eta) * ||W||_inf` over the layers it depends on.
    pub fn lipschitz(&self, net: &Network) -> Result<f64> {
        let (last, extra) = match *self {
            Objective::PreActivation(k) => (k, 1.0),
            Objective::Margin(y) => {
                MarginSpec::from_label(y, net.output_dim())?;
                (net.depth() - 1, 2.0)
            }
        };
        if last >= net.depth() {
            return Err(Error::MissingBounds(last));
        }
        let mut lip = extra;
        for (k, layer) in net.layers()[..=last].iter().enumerate() {
            lip *= layer.affine.weight.inf_operator_norm();
            if k > 0 {
                lip *= net.activation(k - 1).map_or(1.0, |a| a.eta().max(1.0));
            }
        }
        Ok(lip)
    }
}

/// A bound coordinate that failed to contain the empirical range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: usize,
    pub coordinate: usize,
    /// Negative amount by which the bound missed.
    pub slack: f64,
    pub side: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub empirical_min: Vec<f64>,
    pub empirical_max: Vec<f64>,
    pub samples: usize,
    pub method: String,
    pub violations: Vec<Violation>,
}

impl OracleReport {
    fn new(first: Vec<f64>) -> Self {
        Self { empirical_min: first.clone(), empirical_max: first, samples: 1, method: String::new(), violations: Vec::new() }
    }

    fn add(&mut self, v: &[f64]) {
        for (i, &x) in v.iter().enumerate() {
            self.empirical_min[i] = self.empirical_min[i].min(x);
            self.empirical_max[i] = self.empirical_max[i].max(x);
        }
        self.samples += 1;
    }

    /// Records every coordinate where `lower > empirical_min + tol` or
    /// `upper < empirical_max - tol`. Returns the number of new violations.
    pub fn check(&mut self, method: &str, instance: usize, lower: &[f64], upper: Option<&[f64]>, tol: f64) -> usize {
        self.method = method.into();
        let before = self.violations.len();
        for (i, &l) in lower.iter().enumerate() {
            let slack = self.empirical_min[i] - l;
            if slack < -tol {
                self.violations.push(Violation { instance, coordinate: i, slack, side: "lower".into() });
            }
        }
        if let Some(upper) = upper {
            for (i, &u) in upper.iter().enumerate() {
                let slack = u - self.empirical_max[i];
                if slack < -tol {
                    self.violations.push(Violation { instance, coordinate: i, slack, side: "upper".into() });
                }
            }
        }
        self.violations.len() - before
    }

    pub fn is_sound(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Draws a uniform point of the perturbation set.
pub fn sample_point<R: Rng + ?Sized>(pert: &PerturbationSpec, rng: &mut R) -> Vec<f64> {
    match pert.norm {
        Norm::LInf => {
            let (lo, hi) = pert.input_box();
            lo.iter().zip(&hi).map(|(&a, &b)| if b > a { rng.gen_range(a..=b) } else { a }).collect()
        }
        Norm::L2 => {
            let n = pert.center.len();
            let dir: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
            let norm = sqrt(dir.iter().map(|v| v * v).sum());
            let radius = pert.epsilon * powf(rng.gen::<f64>(), 1.0 / n as f64);
            let scale = if norm > 0.0 { radius / norm } else { 0.0 };
            pert.center.iter().zip(&dir).map(|(c, d)| c + scale * d).collect()
        }
    }
}

/// Empirical envelope of `objective` over `n_samples` points of the
/// perturbation set; the center is always the first point.
pub fn sampling_oracle(net: &Network, pert: &PerturbationSpec, objective: Objective, n_samples: usize, seed: u64) -> Result<OracleReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter { name: "n_samples", value: 0.0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new(objective.eval(net, &pert.center)?);
    for _ in 1..n_samples {
        let x = sample_point(pert, &mut rng);
        report.add(&objective.eval(net, &x)?);
    }
    Ok(report)
}

/// Grid envelope widened into an interval certified to contain the true range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedInterval {
    pub grid_min: Vec<f64>,
    pub grid_max: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lipschitz: f64,
    pub points: usize,
}

fn axis(lo: f64, hi: f64, delta: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let n = libm::ceil((hi - lo) / delta) as usize;
    let mut v: Vec<f64> = (0..n).map(|i| lo + i as f64 * delta).collect();
    v.push(hi);
    v
}

/// Evaluates `objective` on a grid of spacing `delta` over an `l_inf`
/// perturbation box of dimension at most 2 and widens the envelope by
/// `Lambda * delta * sqrt(n0)`.
pub fn exact_oracle_lowdim(net: &Network, pert: &PerturbationSpec, objective: Objective, delta: f64) -> Result<CertifiedInterval> {
    if pert.norm != Norm::LInf {
        return Err(Error::Unsupported("grid oracle needs an l_inf box"));
    }
    let n0 = pert.center.len();
    if n0 == 0 || n0 > 2 {
        return Err(Error::Unsupported("grid oracle needs input dimension 1 or 2"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter { name: "delta", value: delta });
    }
    let (lo, hi) = pert.input_box();
    let axes: Vec<Vec<f64>> = (0..n0).map(|i| axis(lo[i], hi[i], delta)).collect();
    let mut report: Option<OracleReport> = None;
    let mut visit = |x: &[f64]| -> Result<()> {
        let v = objective.eval(net, x)?;
        match report.as_mut() {
            Some(r) => r.add(&v),
            None => report = Some(OracleReport::new(v)),
        }
        Ok(())
    };
    if n0 == 1 {
        for &a in &axes[0] {
            visit(&[a])?;
        }
    } else {
        for &a in &axes[0] {
            for &b in &axes[1] {
                visit(&[a, b])?;
            }
        }
    }
    let report = report.ok_or(Error::EmptyDataset)?;
    let lipschitz = objective.lipschitz(net)?;
    let widen = lipschitz * delta * sqrt(n0 as f64);
    Ok(CertifiedInterval {
        lower: report.empirical_min.iter().map(|v| v - widen).collect(),
        upper: report.empirical_max.iter().map(|v| v + widen).collect(),
        grid_min: report.empirical_min,
        grid_max: report.empirical_max,
        lipschitz,
        points: report.samples,
    })
}

/// Exact range of `W x + b` over the box `[lo, hi]`, computed both by the
/// closed form and by enumerating all `2^d` corners (`d <= 12`). Fails if
/// they disagree beyond `1e-12` relative.
pub fn corner_oracle_affine(w: &crate::linalg::Matrix, b: &[f64], lo: &[f64], hi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = w.cols();
    if d > 12 {
        return Err(Error::Unsupported("corner enumeration needs at most 12 inputs"));
    }
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return Err(Error::InvalidInterval { lower: lo[0], upper: hi[0] });
    }
    let (cl, cu) = ibp_layer(w, b, lo, hi)?;
    let mut el = vec![f64::INFINITY; w.rows()];
    let mut eu = vec![f64::NEG_INFINITY; w.rows()];
    let mut x = vec![0.0; d];
    for mask in 0u32..(1 << d) {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = if mask >> j & 1 == 1 { hi[j] } else { lo[j] };
        }
        for (i, v) in w.matvec(&x).iter().enumerate() {
            let v = v + b[i];
            el[i] = el[i].min(v);
            eu[i] = eu[i].max(v);
        }
    }
    for i in 0..w.rows() {
        let tol = 1e-12 * (1.0 + cl[i].abs().max(cu[i].abs()));
        if (cl[i] - el[i]).abs() > tol || (cu[i] - eu[i]).abs() > tol {
            return Err(Error::OracleMismatch(alloc::format!(
                "row {i}: closed form [{}, {}] vs corners [{}, {}]",
                cl[i], cu[i], el[i], eu[i]
            )));
        }
    }
    Ok((cl, cu))
}
