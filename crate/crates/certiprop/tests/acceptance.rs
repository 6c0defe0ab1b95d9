//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use certiprop::idx::{dataset_from_idx, encode_images, encode_labels, load_mnist_idx};
use certiprop::model_io::{load_model, save_model};
use certiprop_core::bounds::{margin_lower_bound, method_bounds, output_bounds, IntervalBounds, Method, Norm, PerturbationSpec, ThreatModel};
use certiprop_core::oracle::{exact_oracle_lowdim, sampling_oracle, Objective};
use certiprop_core::relax::{NeuronStatus, Strategy};
use certiprop_core::train::{loss_and_gradients, pgd_error, train_with, EtaSchedule, LossSpec, ParamGrads, PgdConfig, RampInit, TrainConfig};
use certiprop_core::verify::{status_histogram, sweep, verified_error, StatusHistogram};
use certiprop_core::data::Dataset;
use certiprop_core::{ActivationSpec, MarginSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Random networks

fn random_net(rng: &mut ChaCha8Rng, n0: usize, layers: usize, widths: std::ops::RangeInclusive<usize>, ramp: bool) -> Network {
    let mut dims = vec![n0];
    dims.extend((1..layers).map(|_| rng.gen_range(widths.clone())));
    dims.push(rng.gen_range(2..=5));
    let act = if ramp { ActivationSpec::param_ramp(0.01, vec![1.0]).unwrap() } else { ActivationSpec::relu() };
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

fn random_pert(rng: &mut ChaCha8Rng, net: &Network, eps: f64, norm: Norm) -> PerturbationSpec {
    let x = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    PerturbationSpec::new(x, eps, norm).unwrap()
}

/// 50 nets: 3-5 layers, 8-16 neurons, ReLU and ParamRamp alternating,
/// radius 0.01 and 0.1 alternating in pairs.
fn ordering_suite() -> Vec<(Network, PerturbationSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    (0..50)
        .map(|i| {
            let layers = rng.gen_range(3..=5);
            let n0 = rng.gen_range(8..=16);
            let net = random_net(&mut rng, n0, layers, 8..=16, i % 2 == 1);
            let eps = if (i / 2) % 2 == 0 { 0.01 } else { 0.1 };
            let p = random_pert(&mut rng, &net, eps, Norm::LInf);
            (net, p)
        })
        .collect()
}

fn all_engines() -> Vec<Method> {
    let mut m = vec![Method::Ibp, Method::Lbp];
    m.extend((1..=4).map(Method::RelaxedCrown));
    m.extend([Method::Crown, Method::CrownIbp, Method::CrownLbp]);
    m
}

// ---------------------------------------------------------------------------
// 1, 2: ordering and constant-line degeneration

fn le(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| *x <= y + TOL)
}

fn ordering(suite: &[(Network, PerturbationSpec)]) -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for (i, (net, p)) in suite.iter().enumerate() {
        let b = |m| method_bounds(m, net, p, Strategy::Tight).unwrap();
        let (ibp, ci, lbp, cl, cr) = (b(Method::Ibp), b(Method::CrownIbp), b(Method::Lbp), b(Method::CrownLbp), b(Method::Crown));
        for k in 0..net.depth() {
            let lo = |x: &IntervalBounds| x.pre_lower[k].clone();
            let hi = |x: &IntervalBounds| x.pre_upper[k].clone();
            let ok = le(&lo(&ibp), &lo(&ci))
                && le(&lo(&ibp), &lo(&lbp))
                && le(&lo(&lbp), &lo(&cl))
                && le(&lo(&ci), &lo(&cl))
                && le(&lo(&cl), &lo(&cr))
                && le(&hi(&ci), &hi(&ibp))
                && le(&hi(&lbp), &hi(&ibp))
                && le(&hi(&cl), &hi(&lbp))
                && le(&hi(&cl), &hi(&ci))
                && le(&hi(&cr), &hi(&cl));
            if !ok {
                bad.push(format!("net {i} layer {k}"));
            }
        }
        let spec = MarginSpec::from_label(0, net.output_dim()).unwrap();
        let mg = |m| output_bounds(m, net, p, &spec, Strategy::Tight).unwrap().objective_lower;
        let (mi, mci, ml, mcl, mc) = (mg(Method::Ibp), mg(Method::CrownIbp), mg(Method::Lbp), mg(Method::CrownLbp), mg(Method::Crown));
        if !(le(&mi, &mci) && le(&mi, &ml) && le(&ml, &mcl) && le(&mci, &mcl) && le(&mcl, &mc)) {
            bad.push(format!("net {i} margin"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(bad.is_empty() && secs < 120.0, format!("50 nets, {} violations, {secs:.1}s (limit 120s) {bad:?}", bad.len()))
}

fn rel_close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0))
}

fn degeneration(suite: &[(Network, PerturbationSpec)]) -> Outcome {
    let mut bad = Vec::new();
    for (i, (net, p)) in suite.iter().enumerate() {
        let ibp = method_bounds(Method::Ibp, net, p, Strategy::Constant).unwrap();
        let spec = MarginSpec::from_label(1, net.output_dim()).unwrap();
        let ibp_margin = output_bounds(Method::Ibp, net, p, &spec, Strategy::Constant).unwrap().objective_lower;
        for m in all_engines().into_iter().skip(1) {
            let b = method_bounds(m, net, p, Strategy::Constant).unwrap();
            let same = (0..net.depth()).all(|k| rel_close(&b.pre_lower[k], &ibp.pre_lower[k]) && rel_close(&b.pre_upper[k], &ibp.pre_upper[k]));
            let mg = output_bounds(m, net, p, &spec, Strategy::Constant).unwrap().objective_lower;
            if !same || !rel_close(&mg, &ibp_margin) {
                bad.push(format!("net {i} {}", m.name()));
            }
        }
    }
    outcome(bad.is_empty(), format!("8 engines x 50 nets, {} mismatches {bad:?}", bad.len()))
}

// ---------------------------------------------------------------------------
// 3: soundness

fn violations(net: &Network, p: &PerturbationSpec, y: usize, env: &[(Vec<f64>, Vec<f64>)], margin: &[f64]) -> usize {
    let mut bad = 0;
    for m in all_engines() {
        for s in Strategy::ALL {
            let b = method_bounds(m, net, p, s).unwrap();
            for (k, (lo, hi)) in env.iter().enumerate() {
                bad += (0..lo.len()).filter(|&j| b.pre_lower[k][j] > lo[j] + TOL || b.pre_upper[k][j] < hi[j] - TOL).count();
            }
            let ml = margin_lower_bound(m, net, p, y, s).unwrap();
            bad += ml.iter().zip(margin).filter(|(l, e)| **l > **e + TOL).count();
        }
    }
    bad
}

fn soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let (mut sampled, mut grid) = (0, 0);
    for i in 0..20 {
        let layers = rng.gen_range(2..=5);
        let n0 = rng.gen_range(4..=16);
        let net = random_net(&mut rng, n0, layers, 4..=16, i % 2 == 1);
        let mut p = random_pert(&mut rng, &net, [0.01, 0.05, 0.1, 0.3][i % 4], Norm::LInf);
        if i % 5 == 0 {
            p.center.iter_mut().for_each(|c| *c = c.abs());
            p.domain = Some((0.0, 1.0));
        }
        let y = rng.gen_range(0..net.output_dim());
        let env: Vec<_> = (0..net.depth())
            .map(|k| {
                let r = sampling_oracle(&net, &p, Objective::PreActivation(k), 10_000, i as u64).unwrap();
                (r.empirical_min, r.empirical_max)
            })
            .collect();
        let margin = sampling_oracle(&net, &p, Objective::Margin(y), 10_000, i as u64).unwrap().empirical_min;
        sampled += violations(&net, &p, y, &env, &margin);
    }
    for i in 0..20 {
        let layers = rng.gen_range(2..=4);
        let net = random_net(&mut rng, 1 + i % 2, layers, 4..=12, i % 2 == 1);
        let p = random_pert(&mut rng, &net, [0.05, 0.1][i % 2], Norm::LInf);
        let y = rng.gen_range(0..net.output_dim());
        let env: Vec<_> = (0..net.depth())
            .map(|k| {
                let c = exact_oracle_lowdim(&net, &p, Objective::PreActivation(k), 1e-3).unwrap();
                (c.grid_min, c.grid_max)
            })
            .collect();
        let margin = exact_oracle_lowdim(&net, &p, Objective::Margin(y), 1e-3).unwrap().grid_min;
        grid += violations(&net, &p, y, &env, &margin);
    }
    outcome(
        sampled == 0 && grid == 0,
        format!("9 engines x 3 strategies; sampling (10^4/instance, 20 nets): {sampled} violations; grid (delta 1e-3, n0<=2, 20 nets): {grid} violations"),
    )
}

// ---------------------------------------------------------------------------
// 4, 5, 6, 8: MNIST training

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-5k")
}

struct Trained {
    name: String,
    net: Network,
}

fn mnist_config(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 30, batch_size: 50, learning_rate: 0.05, eps_train: 0.44, eps_eval: 0.4, seed, ..TrainConfig::default() }
}

fn train_mnist(train: &Dataset, act: &ActivationSpec, config: &TrainConfig) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = Network::random(&[784, 100, 100, 10], act, &mut rng).unwrap();
    train_with(net, train, None, config, &mut |_| {}).unwrap().0
}

fn eval_threat() -> ThreatModel {
    ThreatModel::new(0.4, Norm::LInf).unwrap().with_domain(0.0, 1.0)
}

fn last_hidden(h: &StatusHistogram) -> usize {
    h.layers.len() - 1
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

struct MnistOutcomes {
    inversion: Outcome,
    dead: Outcome,
    ramp: Outcome,
    pgd: Outcome,
}

fn mnist() -> MnistOutcomes {
    let dir = data_dir();
    let train = load_mnist_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"), Some(2000)).unwrap();
    let test = load_mnist_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"), Some(500)).unwrap();
    let threat = eval_threat();
    let start = Instant::now();

    let mut nets = Vec::new();
    for seed in 1..=3 {
        let net = train_mnist(&train, &ActivationSpec::relu(), &mnist_config(seed));
        nets.push(Trained { name: format!("relu seed {seed}"), net });
    }
    for seed in 1..=3 {
        let config = TrainConfig { eta: EtaSchedule::Linear { start: 0.01, end: 0.0 }, ramp_init: RampInit::Constant(2.0), ..mnist_config(seed) };
        let net = train_mnist(&train, &ActivationSpec::param_ramp(0.01, vec![1.0]).unwrap(), &config);
        nets.push(Trained { name: format!("ramp seed {seed}"), net });
    }
    let clean_config = TrainConfig { eps_train: 0.0, kappa_start: 1.0, kappa_end: 1.0, ..mnist_config(1) };
    let clean = train_mnist(&train, &ActivationSpec::relu(), &clean_config);
    nets.push(Trained { name: "clean relu seed 1".into(), net: clean });
    let train_secs = start.elapsed().as_secs_f64();

    let ibp = |net: &Network| verified_error(net, &test, &threat, Method::Ibp, Strategy::Tight).unwrap();

    // 4: inversion on the first IBP-trained ReLU net.
    let relu = &nets[0].net;
    let (e_ibp, e_tight, e_adaptive) = (
        ibp(relu),
        verified_error(relu, &test, &threat, Method::CrownLbp, Strategy::Tight).unwrap(),
        verified_error(relu, &test, &threat, Method::CrownLbp, Strategy::Adaptive).unwrap(),
    );
    let inversion = outcome(
        e_adaptive >= e_ibp && e_tight <= e_ibp && train_secs < 1800.0,
        format!("IBP {e_ibp:.3}, CROWN-LBP tight {e_tight:.3}, CROWN-LBP adaptive {e_adaptive:.3}; 7 trainings took {train_secs:.0}s (limit 1800s)"),
    );

    // 5: dead neurons in the last hidden layer.
    let h_robust = status_histogram(relu, &threat, Method::Ibp, &test).unwrap();
    let h_clean = status_histogram(&nets[6].net, &threat, Method::Ibp, &test).unwrap();
    let (d_robust, d_clean) = (h_robust.dead_fraction(last_hidden(&h_robust)), h_clean.dead_fraction(last_hidden(&h_clean)));
    let dead = outcome(
        d_robust > 0.5 && d_robust - d_clean >= 0.2,
        format!("last hidden layer dead: IBP-trained {:.1}%, clean-trained {:.1}%", 100.0 * d_robust, 100.0 * d_clean),
    );

    // 6: ramp vs ReLU, 3 seeds each.
    let mut relu_errs: Vec<f64> = nets[0..3].iter().map(|t| ibp(&t.net)).collect();
    let mut ramp_errs: Vec<f64> = nets[3..6].iter().map(|t| ibp(&t.net)).collect();
    let right_dead: Vec<f64> = nets[3..6]
        .iter()
        .map(|t| {
            let h = status_histogram(&t.net, &threat, Method::Ibp, &test).unwrap();
            (0..h.layers.len()).map(|k| h.fraction(k, NeuronStatus::RightDead)).fold(0.0, f64::max)
        })
        .collect();
    let detail = format!("IBP verified error relu {relu_errs:.3?}, ramp {ramp_errs:.3?}; best right_dead per ramp net {right_dead:.3?}");
    let (m_relu, m_ramp) = (median(&mut relu_errs), median(&mut ramp_errs));
    let ramp = outcome(
        m_ramp <= m_relu && right_dead.iter().all(|&r| r >= 0.05),
        format!("median ramp {m_ramp:.3} vs relu {m_relu:.3}; {detail}"),
    );

    // 8: PGD never beats a sound certificate on the same instances.
    let mut bad = Vec::new();
    let mut summary = Vec::new();
    for t in &nets {
        let pgd = pgd_error(&t.net, &test, &threat, &PgdConfig::default()).unwrap();
        let mut lowest = f64::INFINITY;
        for (m, s) in sweep(&all_engines(), &Strategy::ALL) {
            let e = verified_error(&t.net, &test, &threat, m, s).unwrap();
            lowest = lowest.min(e);
            if pgd > e {
                bad.push(format!("{} {} {}: pgd {pgd} > {e}", t.name, m.name(), s.name()));
            }
        }
        summary.push(format!("{}: pgd {pgd:.3} <= {lowest:.3}", t.name));
    }
    let pgd = outcome(bad.is_empty(), format!("7 nets x 25 engine configs on 500 test images; {}; {bad:?}", summary.join(", ")));

    MnistOutcomes { inversion, dead, ramp, pgd }
}

// ---------------------------------------------------------------------------
// 7: gradient checks

const H: f64 = 1e-5;

fn flatten(g: &ParamGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..g.weights.len() {
        out.extend_from_slice(g.weights[k].data());
        out.extend_from_slice(&g.biases[k]);
        if let Some(r) = &g.ramps[k] {
            out.extend_from_slice(r);
        }
    }
    out
}

fn nudge(net: &Network, mut idx: usize, h: f64) -> Network {
    let mut layers = net.layers().to_vec();
    for layer in &mut layers {
        let nw = layer.affine.weight.data().len();
        if idx < nw {
            layer.affine.weight.data_mut()[idx] += h;
            return Network::new(layers).unwrap();
        }
        idx -= nw;
        if idx < layer.affine.bias.len() {
            layer.affine.bias[idx] += h;
            return Network::new(layers).unwrap();
        }
        idx -= layer.affine.bias.len();
        if let Some(act) = layer.activation.as_mut() {
            if let Some(r) = act.ramp_points() {
                if idx < r.len() {
                    let mut r = r.to_vec();
                    r[idx] += h;
                    act.set_ramp_points(r).unwrap();
                    return Network::new(layers).unwrap();
                }
                idx -= r.len();
            }
        }
    }
    unreachable!("parameter index out of range")
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let (mut worst, mut checked, mut total) = (0.0_f64, 0, 0);
    for beta in [0.0, 0.5] {
        for i in 0..10 {
            let n0 = rng.gen_range(4..=8);
            let net = random_net(&mut rng, n0, 3, 4..=8, i % 2 == 1);
            let threat = ThreatModel::new(0.05, Norm::LInf).unwrap();
            let x: Vec<Vec<f64>> = (0..3).map(|_| (0..n0).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let y: Vec<usize> = (0..3).map(|_| rng.gen_range(0..net.output_dim())).collect();
            let spec = LossSpec { kappa: 0.5, beta, strategy: Strategy::Tight };
            let loss = |n: &Network| loss_and_gradients(n, &x, &y, &threat, spec).unwrap().0.total;
            let (base, g) = loss_and_gradients(&net, &x, &y, &threat, spec).unwrap();
            for (j, a) in flatten(&g).into_iter().enumerate() {
                total += 1;
                let (fp, fm) = (loss(&nudge(&net, j, H)), loss(&nudge(&net, j, -H)));
                let (fwd, bwd) = ((fp - base.total) / H, (base.total - fm) / H);
                // One-sided slopes that disagree mean a kink inside the stencil.
                if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-6) {
                    continue;
                }
                let num = (fp - fm) / (2.0 * H);
                worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && checked * 10 >= total * 8 && secs < 60.0,
        format!("IBP and CROWN-IBP (beta 0.5) losses, 10 nets each: max relative error {worst:.2e} over {checked}/{total} parameters, {secs:.1}s (limit 60s)"),
    )
}

// ---------------------------------------------------------------------------
// 9: scaling

fn scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let mut ratios = Vec::new();
    for m in [4usize, 8, 16] {
        let mut dims = vec![32; m];
        dims.push(10);
        let net = Network::random(&dims, &ActivationSpec::relu(), &mut rng).unwrap();
        let perts: Vec<_> = (0..10).map(|_| random_pert(&mut rng, &net, 0.01, Norm::LInf)).collect();
        let spec = MarginSpec::from_label(0, 10).unwrap();
        // Minimum over repetitions of the mean per-instance time.
        let time = |method: Method| {
            (0..5)
                .map(|_| {
                    let t = Instant::now();
                    for p in &perts {
                        std::hint::black_box(output_bounds(method, &net, p, &spec, Strategy::Tight).unwrap());
                    }
                    t.elapsed().as_secs_f64() / perts.len() as f64
                })
                .fold(f64::INFINITY, f64::min)
        };
        let (lbp, crown) = (time(Method::Lbp), time(Method::Crown));
        ratios.push((m, crown / lbp, lbp, crown));
    }
    let increasing = ratios.windows(2).all(|w| w[1].1 > w[0].1);
    let detail: Vec<String> = ratios.iter().map(|(m, r, l, c)| format!("m={m}: crown {:.2}ms / lbp {:.2}ms = {r:.2}", c * 1e3, l * 1e3)).collect();
    outcome(increasing, detail.join(", "))
}

// ---------------------------------------------------------------------------
// 10: formats and reproducibility

fn certiprop(args: &[&str]) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_certiprop")).args(args).output().expect("binary runs");
    (out.status.success(), out.stdout)
}

fn formats() -> Outcome {
    let mut failures = Vec::new();

    let images = encode_images(&[vec![0u8; 4], vec![255u8; 4]], 2, 2);
    let labels = encode_labels(&[3, 7]);
    if dataset_from_idx(&images, &labels, None, "ok").is_err() {
        failures.push("valid IDX rejected".to_string());
    }
    let mut bad_magic = images.clone();
    bad_magic[3] ^= 0x01;
    let mut bad_label_magic = labels.clone();
    bad_label_magic[3] ^= 0x02;
    let corrupt = [
        ("image magic", dataset_from_idx(&bad_magic, &labels, None, "x").is_err()),
        ("label magic", dataset_from_idx(&images, &bad_label_magic, None, "x").is_err()),
        ("truncated images", dataset_from_idx(&images[..images.len() - 1], &labels, None, "x").is_err()),
        ("truncated labels", dataset_from_idx(&images, &labels[..labels.len() - 1], None, "x").is_err()),
        ("truncated header", dataset_from_idx(&images[..10], &labels, None, "x").is_err()),
        ("trailing bytes", dataset_from_idx(&[images.as_slice(), &[0]].concat(), &labels, None, "x").is_err()),
    ];
    failures.extend(corrupt.iter().filter(|(_, rejected)| !rejected).map(|(what, _)| format!("{what} accepted")));

    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for i in 0..10 {
        let net = random_net(&mut rng, 5, 3, 3..=7, i % 2 == 0);
        let text = save_model(&net).unwrap();
        let back = load_model(&text).unwrap();
        let bits = |n: &Network| {
            n.layers()
                .iter()
                .flat_map(|l| {
                    let mut v: Vec<u64> = l.affine.weight.data().iter().chain(&l.affine.bias).map(|x| x.to_bits()).collect();
                    if let Some(a) = &l.activation {
                        v.push(a.eta().to_bits());
                        v.extend(a.ramp_points().unwrap_or(&[]).iter().map(|x| x.to_bits()));
                    }
                    v
                })
                .collect::<Vec<u64>>()
        };
        if bits(&back) != bits(&net) || save_model(&back).unwrap() != text {
            failures.push(format!("model {i} round-trip differs"));
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let model = dir.path().join(format!("{tag}.json"));
        let log = dir.path().join(format!("{tag}.csv"));
        let (ok_train, _) = certiprop(&[
            "train", "--data", "synth:two-moons:200:1", "--activation", "ramp", "--eta", "0.01:0", "--eps-train", "0.05", "--epochs", "5",
            "--hidden", "16,16", "--seed", "3", "--out", model.to_str().unwrap(), "--log", log.to_str().unwrap(),
        ]);
        let (ok_compare, compare) = certiprop(&[
            "compare", "--model", model.to_str().unwrap(), "--data", "synth:two-moons:50:9", "--eps", "0.05", "--no-timing", "--workers", "1",
        ]);
        let (ok_attack, attack) = certiprop(&["attack", "--model", model.to_str().unwrap(), "--data", "synth:two-moons:50:9", "--eps", "0.05", "--seed", "4"]);
        let ok = ok_train && ok_compare && ok_attack;
        (ok, std::fs::read(&model).unwrap_or_default(), std::fs::read(&log).unwrap_or_default(), compare, attack)
    };
    let (a, b) = (run("a"), run("b"));
    if !a.0 || !b.0 {
        failures.push("CLI run failed".into());
    } else if a != b {
        failures.push("CLI runs differ".into());
    }
    outcome(failures.is_empty(), format!("6 IDX corruptions, 10 model round-trips, 2 fixed-seed CLI train/compare/attack runs; {failures:?}"))
}

// ---------------------------------------------------------------------------

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {n:>2} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    let suite = ordering_suite();
    report(1, "tight-line ordering", ordering(&suite));
    report(2, "constant lines degenerate to IBP", degeneration(&suite));
    report(3, "oracle soundness", soundness());
    let m = mnist();
    report(4, "adaptive inversion on MNIST", m.inversion);
    report(5, "dead neurons after IBP training", m.dead);
    report(6, "ParamRamp vs ReLU", m.ramp);
    report(7, "gradient checks", gradients());
    report(8, "PGD below verified error", m.pgd);
    report(9, "CROWN/LBP time ratio grows with depth", scaling());
    report(10, "format fidelity and reproducibility", formats());
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
