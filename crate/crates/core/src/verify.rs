//! Instance verification, verified error, neuron-status histograms and
//! method-comparison summaries.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bounds::{method_bounds, output_bounds, Method, Norm, ThreatModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::netdef::{argmax, MarginSpec, Network};
use crate::relax::{classify, NeuronStatus, Strategy};

/// Source of wall-clock time, in seconds. The core crate has no clock of
/// its own; [`NoClock`] reports zero.
pub trait Clock: Sync {
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub id: usize,
    pub label: usize,
    pub clean_correct: bool,
    pub verified_robust: bool,
    pub margin_lower: Vec<f64>,
    pub method: Method,
    pub strategy: Strategy,
    /// Mean of `u(m) - l(m)` over the output logits.
    pub bound_range: f64,
    pub wall_time: f64,
}

impl VerificationResult {
    /// `min_{i != y} l_omega_i`, or `+inf` for a single-class network.
    pub fn min_margin(&self) -> f64 {
        min_margin(&self.margin_lower, self.label)
    }

    /// Counted as verified: certified and correctly classified.
    pub fn verified(&self) -> bool {
        self.verified_robust && self.clean_correct
    }
}

fn min_margin(margin: &[f64], y: usize) -> f64 {
    margin
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min)
}

/// Verifies one instance: the prediction is certified iff every non-label
/// entry of the margin lower bound is positive.
#[allow(clippy::too_many_arguments)]
pub fn verify_instance(
    net: &Network,
    id: usize,
    x0: &[f64],
    y: usize,
    threat: &ThreatModel,
    method: Method,
    strategy: Strategy,
    clock: &dyn Clock,
) -> Result<VerificationResult> {
    if y >= net.output_dim() {
        return Err(Error::LabelOutOfRange { label: y, classes: net.output_dim() });
    }
    let start = clock.now();
    let pert = threat.around(x0);
    let spec = MarginSpec::from_label(y, net.output_dim())?;
    let out = output_bounds(method, net, &pert, &spec, strategy)?;
    let wall_time = clock.now() - start;
    let clean_correct = argmax(&net.logits(x0)?) == y;
    let n = out.lower.len() as f64;
    let bound_range = out.upper.iter().zip(&out.lower).map(|(u, l)| u - l).sum::<f64>() / n;
    let verified_robust = min_margin(&out.objective_lower, y) > 0.0;
    Ok(VerificationResult {
        id,
        label: y,
        clean_correct,
        verified_robust,
        margin_lower: out.objective_lower,
        method,
        strategy,
        bound_range,
        wall_time,
    })
}

/// Verifies every instance of `data` in order.
pub fn verify_dataset(
    net: &Network,
    data: &Dataset,
    threat: &ThreatModel,
    method: Method,
    strategy: Strategy,
) -> Result<Vec<VerificationResult>> {
    data.check_for(net)?;
    (0..data.len())
        .map(|i| {
            let (x, y) = data.get(i);
            verify_instance(net, i, x, y, threat, method, strategy, &NoClock)
        })
        .collect()
}

/// Fraction of instances that are not both correctly classified and
/// certified.
pub fn verified_error(net: &Network, data: &Dataset, threat: &ThreatModel, method: Method, strategy: Strategy) -> Result<f64> {
    let results = verify_dataset(net, data, threat, method, strategy)?;
    Ok(error_rate(&results))
}

fn error_rate(results: &[VerificationResult]) -> f64 {
    let failed = results.iter().filter(|r| !r.verified()).count();
    failed as f64 / results.len() as f64
}

/// Fraction of misclassified instances.
pub fn clean_error(net: &Network, data: &Dataset) -> Result<f64> {
    data.check_for(net)?;
    let mut wrong = 0usize;
    for i in 0..data.len() {
        let (x, y) = data.get(i);
        if net.predict(x)? != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Per hidden layer, the fraction of neurons in each status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusHistogram {
    pub layers: Vec<Vec<(NeuronStatus, f64)>>,
}

impl StatusHistogram {
    pub fn fraction(&self, layer: usize, status: NeuronStatus) -> f64 {
        self.layers[layer].iter().find(|(s, _)| *s == status).map_or(0.0, |(_, f)| *f)
    }

    /// Fraction of dead neurons (dead, left dead or right dead).
    pub fn dead_fraction(&self, layer: usize) -> f64 {
        self.layers[layer].iter().filter(|(s, _)| s.is_dead()).map(|(_, f)| f).sum()
    }
}

/// Raw status counts of the hidden layers of one instance.
pub fn status_counts(net: &Network, x0: &[f64], threat: &ThreatModel, method: Method, strategy: Strategy) -> Result<Vec<Vec<usize>>> {
    let b = method_bounds(method, net, &threat.around(x0), strategy)?;
    (0..net.depth() - 1)
        .map(|k| {
            let act = net.activation(k).ok_or(Error::MissingBounds(k))?;
            let statuses = NeuronStatus::for_kind(act.kind());
            let mut counts = vec![0usize; statuses.len()];
            for (i, (&l, &u)) in b.pre_lower[k].iter().zip(&b.pre_upper[k]).enumerate() {
                let s = classify(act.kind(), l, u, act.ramp_point(i))?;
                let at = statuses.iter().position(|&t| t == s).ok_or(Error::Unsupported("status"))?;
                counts[at] += 1;
            }
            Ok(counts)
        })
        .collect()
}

/// Turns summed per-instance counts into a histogram.
pub fn histogram_from_counts(net: &Network, counts: &[Vec<usize>]) -> StatusHistogram {
    let layers = counts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let kind = net.activation(k).map(|a| a.kind()).unwrap_or(crate::netdef::ActivationKind::Relu);
            let total: usize = c.iter().sum();
            NeuronStatus::for_kind(kind)
                .iter()
                .zip(c)
                .map(|(&s, &n)| (s, if total == 0 { 0.0 } else { n as f64 / total as f64 }))
                .collect()
        })
        .collect();
    StatusHistogram { layers }
}

/// Sums per-layer counts elementwise in slice order.
pub fn add_counts(acc: &mut Vec<Vec<usize>>, counts: &[Vec<usize>]) {
    if acc.is_empty() {
        *acc = counts.to_vec();
        return;
    }
    for (a, c) in acc.iter_mut().zip(counts) {
        for (x, y) in a.iter_mut().zip(c) {
            *x += y;
        }
    }
}

/// Status fractions of every hidden layer, computed from `method`'s bounds
/// on each instance and averaged over the dataset.
pub fn status_histogram(net: &Network, threat: &ThreatModel, method: Method, data: &Dataset) -> Result<StatusHistogram> {
    data.check_for(net)?;
    let mut acc = Vec::new();
    for x in &data.inputs {
        add_counts(&mut acc, &status_counts(net, x, threat, method, Strategy::Tight)?);
    }
    Ok(histogram_from_counts(net, &acc))
}

/// One line of a method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    /// `None` when the method ignores the strategy.
    pub strategy: Option<Strategy>,
    pub epsilon: f64,
    pub norm: Norm,
    pub verified_error: f64,
    pub clean_error: f64,
    pub mean_bound_range: f64,
    pub mean_margin_lb: f64,
    pub mean_time_s: f64,
}

/// Aggregates per-instance results of one method/strategy, in order.
pub fn summarize(results: &[VerificationResult], threat: &ThreatModel) -> Result<ComparisonRow> {
    let first = results.first().ok_or(Error::EmptyDataset)?;
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&VerificationResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Ok(ComparisonRow {
        method: first.method.name(),
        strategy: first.method.uses_strategy().then_some(first.strategy),
        epsilon: threat.epsilon,
        norm: threat.norm,
        verified_error: error_rate(results),
        clean_error: results.iter().filter(|r| !r.clean_correct).count() as f64 / n,
        mean_bound_range: mean(&|r| r.bound_range),
        mean_margin_lb: mean(&|r| r.min_margin()),
        mean_time_s: mean(&|r| r.wall_time),
    })
}

/// The (method, strategy) pairs of a sweep; strategy-free methods appear
/// once.
pub fn sweep(methods: &[Method], strategies: &[Strategy]) -> Vec<(Method, Strategy)> {
    let mut out = Vec::new();
    for &m in methods {
        if m.uses_strategy() {
            out.extend(strategies.iter().map(|&s| (m, s)));
        } else {
            out.push((m, strategies.first().copied().unwrap_or(Strategy::Tight)));
        }
    }
    out
}

/// Sequential method comparison.
pub fn compare_methods(
    net: &Network,
    data: &Dataset,
    threat: &ThreatModel,
    methods: &[Method],
    strategies: &[Strategy],
) -> Result<Vec<ComparisonRow>> {
    sweep(methods, strategies)
        .into_iter()
        .map(|(m, s)| summarize(&verify_dataset(net, data, threat, m, s)?, threat))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::netdef::{ActivationSpec, AffineLayer, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Network::random(&[2, 8, 8, 3], &ActivationSpec::relu(), &mut rng).unwrap()
    }

    fn data(net: &Network, n: usize) -> Dataset {
        let d = crate::data::synth_dataset(crate::data::SynthKind::TwoClusters, n, 3).unwrap();
        // Relabel by the network itself so every instance is clean-correct.
        let labels = d.inputs.iter().map(|x| net.predict(x).unwrap()).collect();
        Dataset::new(d.inputs, labels, "self").unwrap()
    }

    #[test]
    fn zero_radius_verifies_correct_instances() {
        let n = net(1);
        let d = data(&n, 20);
        let t = ThreatModel::new(0.0, Norm::LInf).unwrap();
        for m in [Method::Ibp, Method::Crown, Method::CrownLbp] {
            let res = verify_dataset(&n, &d, &t, m, Strategy::Tight).unwrap();
            for r in &res {
                // Exact ties make the margin zero, which is not certified.
                assert_eq!(r.verified_robust, r.min_margin() > 0.0);
                assert!(r.verified_robust);
                assert!(r.bound_range.abs() < 1e-12);
            }
            assert_eq!(error_rate(&res), 0.0);
        }
        let wrong = Dataset::new(d.inputs.clone(), d.labels.iter().map(|l| (l + 1) % 3).collect(), "w").unwrap();
        assert_eq!(verified_error(&n, &wrong, &t, Method::Ibp, Strategy::Tight).unwrap(), 1.0);
        assert_eq!(clean_error(&n, &wrong).unwrap(), 1.0);
    }

    #[test]
    fn constant_classifier_verifies_any_radius() {
        let hidden = AffineLayer::new(Matrix::from_rows(&[[1.0, -2.0], [0.5, 0.5]]).unwrap(), vec![0.0, 0.1]).unwrap();
        let out = AffineLayer::new(Matrix::zeros(3, 2), vec![0.0, 1.0, 0.0]).unwrap();
        let net = Network::new(vec![
            Layer { affine: hidden, activation: Some(ActivationSpec::relu()) },
            Layer { affine: out, activation: None },
        ])
        .unwrap();
        let t = ThreatModel::new(1e6, Norm::L2).unwrap();
        let r = verify_instance(&net, 0, &[0.3, 0.3], 1, &t, Method::Crown, Strategy::Adaptive, &NoClock).unwrap();
        assert!(r.verified());
        assert_eq!(r.margin_lower, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn huge_radius_verifies_nothing() {
        let n = net(2);
        let d = data(&n, 10);
        let t = ThreatModel::new(100.0, Norm::LInf).unwrap();
        assert_eq!(verified_error(&n, &d, &t, Method::CrownLbp, Strategy::Tight).unwrap(), 1.0);
        let h = status_histogram(&n, &t, Method::Ibp, &d).unwrap();
        for k in 0..2 {
            assert!(h.fraction(k, NeuronStatus::Unstable) > 0.99);
        }
    }

    #[test]
    fn histogram_sums_to_one_and_alive_case() {
        let n = net(5);
        let d = data(&n, 15);
        let t = ThreatModel::new(0.05, Norm::LInf).unwrap();
        let h = status_histogram(&n, &t, Method::Ibp, &d).unwrap();
        assert_eq!(h.layers.len(), 2);
        for layer in &h.layers {
            let s: f64 = layer.iter().map(|(_, f)| f).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let lin = AffineLayer::new(Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        let net = Network::new(vec![
            Layer { affine: lin.clone(), activation: Some(ActivationSpec::relu()) },
            Layer { affine: lin, activation: None },
        ])
        .unwrap();
        let d = Dataset::new(vec![vec![0.2, 0.4]], vec![0], "p").unwrap();
        let t = ThreatModel::new(0.0, Norm::LInf).unwrap();
        let h = status_histogram(&net, &t, Method::Ibp, &d).unwrap();
        assert_eq!(h.fraction(0, NeuronStatus::Alive), 1.0);
    }

    #[test]
    fn comparison_rows_are_deterministic_and_ordered() {
        let n = net(9);
        let d = data(&n, 12);
        let t = ThreatModel::new(0.02, Norm::LInf).unwrap();
        let methods = [Method::Ibp, Method::CrownIbp, Method::Lbp, Method::CrownLbp, Method::Crown];
        let rows = compare_methods(&n, &d, &t, &methods, &[Strategy::Tight]).unwrap();
        assert_eq!(rows, compare_methods(&n, &d, &t, &methods, &[Strategy::Tight]).unwrap());
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].strategy, None);
        for w in [(0, 1), (0, 2), (2, 3), (1, 3), (3, 4)] {
            assert!(rows[w.0].mean_bound_range + 1e-9 >= rows[w.1].mean_bound_range, "{w:?}");
            assert!(rows[w.0].verified_error + 1e-12 >= rows[w.1].verified_error, "{w:?}");
        }
        let single = compare_methods(&n, &d, &t, &[Method::Lbp], &[Strategy::Adaptive]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(sweep(&[Method::Ibp, Method::Lbp], &Strategy::ALL).len(), 4);
    }

    #[test]
    fn errors_propagate() {
        let n = net(1);
        let t = ThreatModel::new(0.1, Norm::LInf).unwrap();
        let empty = Dataset::new(vec![], vec![], "e").unwrap();
        assert_eq!(verified_error(&n, &empty, &t, Method::Ibp, Strategy::Tight).unwrap_err(), Error::EmptyDataset);
        assert!(verify_instance(&n, 0, &[0.0, 0.0], 7, &t, Method::Ibp, Strategy::Tight, &NoClock).is_err());
        assert!(verify_instance(&n, 0, &[0.0], 0, &t, Method::Ibp, Strategy::Tight, &NoClock).is_err());
    }
}
