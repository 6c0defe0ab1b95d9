#![allow(dead_code)]

use certiprop_core::bounds::{Norm, PerturbationSpec};
use certiprop_core::{ActivationSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random net with `layers` affine layers of width in `widths`, random
/// biases and (for ramp nets) random bend points.
pub fn random_net(rng: &mut ChaCha8Rng, layers: usize, widths: std::ops::RangeInclusive<usize>, ramp: bool) -> Network {
    let n0 = rng.gen_range(widths.clone());
    random_net_from(rng, n0, layers, widths, ramp)
}

/// Like [`random_net`] with a fixed input dimension `n0`.
pub fn random_net_from(rng: &mut ChaCha8Rng, n0: usize, layers: usize, widths: std::ops::RangeInclusive<usize>, ramp: bool) -> Network {
    let mut dims = vec![n0];
    dims.extend((1..layers).map(|_| rng.gen_range(widths.clone())));
    dims.push(rng.gen_range(2..=5));
    let act = if ramp {
        ActivationSpec::param_ramp(0.01, vec![1.0]).unwrap()
    } else {
        ActivationSpec::relu()
    };
    let mut layers = Network::random(&dims, &act, rng).unwrap().layers().to_vec();
    for layer in &mut layers {
        for b in layer.affine.bias.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        if let Some(act) = layer.activation.as_mut() {
            if act.ramp_points().is_some() {
                let r = (0..layer.affine.outputs()).map(|_| rng.gen_range(0.2..2.0)).collect();
                act.set_ramp_points(r).unwrap();
            }
        }
    }
    Network::new(layers).unwrap()
}

pub fn random_pert(rng: &mut ChaCha8Rng, net: &Network, eps: f64, norm: Norm) -> PerturbationSpec {
    let x = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    PerturbationSpec::new(x, eps, norm).unwrap()
}

/// The 50 networks of the ordering suites: 3-5 layers, 8-16 neurons, ReLU
/// and ParamRamp alternating, radius alternating between 0.01 and 0.1.
pub fn ordering_suite(seed: u64) -> Vec<(Network, PerturbationSpec)> {
    let mut rng = rng(seed);
    (0..50)
        .map(|i| {
            let layers = rng.gen_range(3..=5);
            let net = random_net(&mut rng, layers, 8..=16, i % 2 == 1);
            let eps = if (i / 2) % 2 == 0 { 0.01 } else { 0.1 };
            let p = random_pert(&mut rng, &net, eps, Norm::LInf);
            (net, p)
        })
        .collect()
}
