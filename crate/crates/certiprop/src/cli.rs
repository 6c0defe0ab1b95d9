//! Subcommands: verify, compare, train, attack, analyze, oracle-check.

use std::path::{Path, PathBuf};
use std::time::Instant;

use certiprop_core::bounds::{margin_lower_bound, method_bounds, Method, Norm, ThreatModel};
use certiprop_core::data::Dataset;
use certiprop_core::oracle::{exact_oracle_lowdim, sampling_oracle, Objective, Violation};
use certiprop_core::relax::Strategy;
use certiprop_core::train::{pgd_attack, train_with, EtaSchedule, LossKind, PgdConfig, RampInit, TrainConfig};
use certiprop_core::verify::{add_counts, histogram_from_counts, status_counts, summarize, sweep, Clock, NoClock, VerificationResult};
use certiprop_core::{ActivationSpec, Network};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::model_io::{read_model, write_model};
use crate::report;
use crate::source::{DataSource, Split};

#[derive(Debug, Parser)]
#[command(name = "certiprop", version, about = "Certified bound propagation for feed-forward networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify every instance with one bound method.
    Verify(VerifyArgs),
    /// Sweep methods and bounding-line strategies over one dataset.
    Compare(CompareArgs),
    /// Train a network with a certified (or clean) loss.
    Train(TrainArgs),
    /// PGD attack with random restarts.
    Attack(AttackArgs),
    /// Neuron-status statistics of the hidden layers.
    Analyze(AnalyzeArgs),
    /// Check every engine against sampling and grid oracles.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ibp,
    Lbp,
    Crown,
    CrownIbp,
    CrownLbp,
    RelaxedCrown,
}

impl MethodArg {
    fn resolve(self, depth: Option<usize>) -> Result<Method> {
        Ok(match self {
            MethodArg::Ibp => Method::Ibp,
            MethodArg::Lbp => Method::Lbp,
            MethodArg::Crown => Method::Crown,
            MethodArg::CrownIbp => Method::CrownIbp,
            MethodArg::CrownLbp => Method::CrownLbp,
            MethodArg::RelaxedCrown => match depth {
                Some(0) => return Err(CliError::Usage("--depth must be at least 1".into())),
                Some(v) => Method::RelaxedCrown(v),
                None => return Err(CliError::Usage("relaxed-crown needs --depth".into())),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Constant,
    Tight,
    Adaptive,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Constant => Strategy::Constant,
            StrategyArg::Tight => Strategy::Tight,
            StrategyArg::Adaptive => Strategy::Adaptive,
        }
    }
}

/// Input domain used to clip `l_inf` boxes; `none` disables clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain(pub Option<(f64, f64)>);

fn parse_domain(s: &str) -> std::result::Result<Domain, String> {
    if s == "none" {
        return Ok(Domain(None));
    }
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI or none, got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad bound {a:?}"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad bound {b:?}"))?;
    if !(lo <= hi) {
        return Err(format!("empty domain [{lo}, {hi}]"));
    }
    Ok(Domain(Some((lo, hi))))
}

fn parse_norm(s: &str) -> std::result::Result<Norm, String> {
    s.parse().map_err(|e: certiprop_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// MNIST IDX directory, or `synth:KIND:N:SEED` (two-moons, two-clusters).
    #[arg(long)]
    pub data: DataSource,
    /// Which split to read (defaults to test, or train for `train`).
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// Keep only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl DataArgs {
    fn load(&self, default: Split) -> Result<Dataset> {
        self.data.load(self.split.unwrap_or(default), self.limit)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ThreatArgs {
    #[arg(long, default_value = "inf", value_parser = parse_norm)]
    pub norm: Norm,
    /// Input domain `LO,HI` for clipping `l_inf` boxes, or `none`.
    #[arg(long, default_value = "0,1", value_parser = parse_domain)]
    pub domain: Domain,
}

impl ThreatArgs {
    fn threat(&self, eps: f64) -> Result<ThreatModel> {
        let t = ThreatModel::new(eps, self.norm)?;
        Ok(match self.domain.0 {
            Some((lo, hi)) => t.with_domain(lo, hi),
            None => t,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "CERTIPROP_WORKERS", default_value_t = 0)]
    pub workers: usize,
    /// Report zero wall time so that outputs are bit-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub eps: f64,
    #[command(flatten)]
    pub threat: ThreatArgs,
    #[arg(long, value_enum, default_value = "crown")]
    pub method: MethodArg,
    /// Back-substitution depth for relaxed-crown.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum, default_value = "tight")]
    pub strategy: StrategyArg,
    /// Summary CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Per-instance CSV.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// One or more radii.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[command(flatten)]
    pub threat: ThreatArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ibp,lbp,crown-ibp,crown-lbp,crown")]
    pub methods: Vec<MethodArg>,
    /// Depths swept for relaxed-crown.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub depths: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "constant,tight,adaptive")]
    pub strategies: Vec<StrategyArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Ibp,
    CrownIbp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Leaky,
    Ramp,
}

fn parse_ramp_init(s: &str) -> std::result::Result<RampInit, String> {
    match s {
        "default" => Ok(RampInit::Default),
        "warmup" => Ok(RampInit::WarmUp),
        v => match v.parse::<f64>() {
            Ok(r) if r.is_finite() && r > 0.0 => Ok(RampInit::Constant(r)),
            _ => Err(format!("expected default, warmup or a positive number, got {v:?}")),
        },
    }
}

fn parse_eta(s: &str) -> std::result::Result<EtaSchedule, String> {
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad slope {v:?}"));
    let eta = match s.split_once(':') {
        Some((a, b)) => EtaSchedule::Linear { start: num(a)?, end: num(b)? },
        None => EtaSchedule::Constant(num(s)?),
    };
    let ok = |v: f64| (0.0..1.0).contains(&v);
    match eta {
        EtaSchedule::Constant(v) if ok(v) => Ok(eta),
        EtaSchedule::Linear { start, end } if ok(start) && ok(end) => Ok(eta),
        _ => Err(format!("slopes must lie in [0, 1), got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Evaluation data for the per-epoch log (defaults to the training set).
    #[arg(long)]
    pub eval_data: Option<DataSource>,
    #[arg(long, value_enum, default_value = "test")]
    pub eval_split: Split,
    #[arg(long)]
    pub eval_limit: Option<usize>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ibp")]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value = "relu")]
    pub activation: ActivationArg,
    /// Leakage slope, constant `E` or linear `START:END` over the epochs.
    #[arg(long, default_value = "0", value_parser = parse_eta)]
    pub eta: EtaSchedule,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    pub hidden: Vec<usize>,
    /// Training radius; 0 gives clean training.
    #[arg(long)]
    pub eps_train: f64,
    /// Radius of the logged IBP verified error (defaults to eps-train).
    #[arg(long)]
    pub eps_eval: Option<f64>,
    #[command(flatten)]
    pub threat: ThreatArgs,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// SGD momentum; 0 disables it.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Epochs at which the learning rate drops tenfold.
    #[arg(long, value_delimiter = ',')]
    pub lr_milestones: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub kappa_start: f64,
    #[arg(long, default_value_t = 0.5)]
    pub kappa_end: f64,
    /// Epochs before the radius ramp starts (default: a tenth).
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    /// Length of the radius ramp in epochs (default: half).
    #[arg(long)]
    pub ramp_epochs: Option<usize>,
    /// `default` (r = 1), `warmup`, or a constant initial r.
    #[arg(long, value_parser = parse_ramp_init, default_value = "default")]
    pub ramp_init: RampInit,
    /// Weight decay applied to ramp points only (e.g. 5e-4).
    #[arg(long, default_value_t = 0.0)]
    pub ramp_weight_decay: f64,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Lines of the CROWN-IBP margin.
    #[arg(long, value_enum, default_value = "tight")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub eps: f64,
    #[command(flatten)]
    pub threat: ThreatArgs,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Step size (default 2.5 eps / steps).
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-instance CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub eps: f64,
    #[command(flatten)]
    pub threat: ThreatArgs,
    /// Emit the per-layer neuron-status histogram.
    #[arg(long)]
    pub histogram: bool,
    /// Method whose intermediate bounds define the statuses.
    #[arg(long, value_enum, default_value = "ibp")]
    pub method: MethodArg,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum, default_value = "tight")]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Model to check; without it, random networks are generated.
    #[arg(long, requires = "data")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<DataSource>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// Instances per model (model mode).
    #[arg(long, default_value_t = 5)]
    pub limit: usize,
    /// Random networks to check (random mode).
    #[arg(long, default_value_t = 20)]
    pub random: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[command(flatten)]
    pub threat: ThreatArgs,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Grid spacing of the certified oracle, used when the input has at most
    /// two dimensions.
    #[arg(long, default_value_t = 1e-3)]
    pub grid_delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Shift every lower bound up by this amount (exercises the failure path).
    #[arg(long, hide = true)]
    pub tamper: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Seconds since construction.
pub struct WallClock(Instant);

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))
}

/// Maps `f` over `0..n` on `workers` threads, keeping input order.
fn par_map<T: Send>(workers: usize, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    pool(workers)?.install(|| (0..n).into_par_iter().map(f).collect())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn verify_all(net: &Network, data: &Dataset, threat: &ThreatModel, method: Method, strategy: Strategy, run: &RunArgs) -> Result<Vec<VerificationResult>> {
    data.check_for(net)?;
    par_map(run.workers, data.len(), |i| {
        let (x, y) = data.get(i);
        let clock: Box<dyn Clock> = if run.no_timing { Box::new(NoClock) } else { Box::new(WallClock(Instant::now())) };
        Ok(certiprop_core::verify::verify_instance(net, i, x, y, threat, method, strategy, clock.as_ref())?)
    })
}

fn warn_depth(method: MethodArg, depth: Option<usize>) {
    if method != MethodArg::RelaxedCrown && depth.is_some() {
        eprintln!("warning: --depth only applies to relaxed-crown; ignored");
    }
}

fn verify(a: &VerifyArgs) -> Result<()> {
    warn_depth(a.method, a.depth);
    let method = a.method.resolve(a.depth)?;
    let net = read_model(&a.model)?;
    let data = a.data.load(Split::Test)?;
    let threat = a.threat.threat(a.eps)?;
    let results = verify_all(&net, &data, &threat, method, a.strategy.into(), &a.run)?;
    let row = summarize(&results, &threat)?;
    let csv = report::comparison_csv(std::slice::from_ref(&row));
    print!("{csv}");
    if let Some(p) = &a.out {
        write(p, &csv)?;
    }
    if let Some(p) = &a.json {
        write(p, &report::to_json(&[row]))?;
    }
    if let Some(p) = &a.instances {
        write(p, &report::instances_csv(&results))?;
    }
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let net = read_model(&a.model)?;
    let data = a.data.load(Split::Test)?;
    let mut methods = Vec::new();
    for &m in &a.methods {
        if m == MethodArg::RelaxedCrown {
            for &v in &a.depths {
                methods.push(m.resolve(Some(v))?);
            }
        } else {
            methods.push(m.resolve(None)?);
        }
    }
    let strategies: Vec<Strategy> = a.strategies.iter().map(|&s| s.into()).collect();
    let mut rows = Vec::new();
    for &eps in &a.eps {
        let threat = a.threat.threat(eps)?;
        for (m, s) in sweep(&methods, &strategies) {
            rows.push(summarize(&verify_all(&net, &data, &threat, m, s, &a.run)?, &threat)?);
        }
    }
    let csv = report::comparison_csv(&rows);
    print!("{csv}");
    if let Some(p) = &a.out {
        write(p, &csv)?;
    }
    if let Some(p) = &a.json {
        write(p, &report::to_json(&rows))?;
    }
    Ok(())
}

/// Sidecar written next to a trained model.
#[derive(Debug, Serialize)]
struct TrainingState<'a> {
    config: &'a TrainConfig,
    architecture: Vec<usize>,
    activation: &'static str,
    epochs_completed: usize,
    log: &'a [certiprop_core::train::EpochLog],
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".train.json");
    PathBuf::from(s)
}

fn train(a: &TrainArgs) -> Result<()> {
    let data = a.data.load(Split::Train)?;
    let eval = match &a.eval_data {
        Some(src) => Some(src.load(a.eval_split, a.eval_limit)?),
        None => None,
    };
    let first_eta = match a.eta {
        EtaSchedule::Constant(v) => v,
        EtaSchedule::Linear { start, .. } => start,
    };
    let act = match a.activation {
        ActivationArg::Relu => {
            if first_eta != 0.0 {
                return Err(CliError::Usage("relu has no leakage slope; use --activation leaky".into()));
            }
            ActivationSpec::relu()
        }
        ActivationArg::Leaky => ActivationSpec::leaky_relu(first_eta)?,
        ActivationArg::Ramp => ActivationSpec::param_ramp(first_eta, vec![1.0])?,
    };
    if a.hidden.contains(&0) {
        return Err(CliError::Usage("hidden widths must be positive".into()));
    }
    let classes = data.labels.iter().max().map_or(1, |&m| m + 1).max(2);
    let mut dims = vec![data.input_dim()];
    dims.extend(&a.hidden);
    dims.push(classes);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let net = Network::random(&dims, &act, &mut rng)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        momentum: (a.momentum > 0.0).then_some(a.momentum),
        lr_milestones: a.lr_milestones.clone(),
        loss: match a.loss {
            LossArg::Ibp => LossKind::Ibp,
            LossArg::CrownIbp => LossKind::CrownIbp,
        },
        eps_train: a.eps_train,
        eps_eval: a.eps_eval.unwrap_or(a.eps_train),
        norm: a.threat.norm,
        domain: a.threat.domain.0,
        eps_start_epoch: a.warmup_epochs,
        eps_ramp_epochs: a.ramp_epochs,
        kappa_start: a.kappa_start,
        kappa_end: a.kappa_end,
        strategy: a.strategy.into(),
        eta: a.eta,
        ramp_init: a.ramp_init,
        ramp_weight_decay: a.ramp_weight_decay,
        grad_clip: a.grad_clip,
        seed: a.seed,
    };
    let mut log_text = report::TRAINING_LOG_HEADER.to_string() + "\n";
    let (net, log) = train_with(net, &data, eval.as_ref(), &config, &mut |e| {
        let row = report::training_log_row(e);
        eprint!("{row}");
        log_text.push_str(&row);
    })?;
    write_model(&a.out, &net)?;
    let state = TrainingState {
        config: &config,
        architecture: dims,
        activation: act.kind().name(),
        epochs_completed: log.len(),
        log: &log,
    };
    write(&sidecar_path(&a.out), &report::to_json(&state))?;
    if let Some(p) = &a.log {
        write(p, &log_text)?;
    }
    Ok(())
}

fn attack(a: &AttackArgs) -> Result<()> {
    let net = read_model(&a.model)?;
    let data = a.data.load(Split::Test)?;
    data.check_for(&net)?;
    let threat = a.threat.threat(a.eps)?;
    let cfg = PgdConfig { steps: a.steps, restarts: a.restarts, step_size: a.step_size, seed: a.seed };
    let rows = par_map(a.run.workers, data.len(), |i| {
        let (x, y) = data.get(i);
        let (_, attacked) = pgd_attack(&net, x, y, &threat, &PgdConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg })?;
        Ok(report::AttackRow { id: i, label: y, clean_correct: net.predict(x)? == y, attacked })
    })?;
    let err = rows.iter().filter(|r| r.attacked).count() as f64 / rows.len() as f64;
    println!("pgd_error,{err}");
    if let Some(p) = &a.out {
        write(p, &report::attack_csv(&rows))?;
    }
    Ok(())
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    if !a.histogram {
        return Err(CliError::Usage("nothing to analyze; pass --histogram".into()));
    }
    warn_depth(a.method, a.depth);
    let method = a.method.resolve(a.depth)?;
    let net = read_model(&a.model)?;
    let data = a.data.load(Split::Test)?;
    data.check_for(&net)?;
    let threat = a.threat.threat(a.eps)?;
    let strategy: Strategy = a.strategy.into();
    let counts = par_map(a.run.workers, data.len(), |i| Ok(status_counts(&net, data.get(i).0, &threat, method, strategy)?))?;
    let mut acc = Vec::new();
    for c in &counts {
        add_counts(&mut acc, c);
    }
    let csv = report::histogram_csv(&histogram_from_counts(&net, &acc));
    print!("{csv}");
    if let Some(p) = &a.out {
        write(p, &csv)?;
    }
    Ok(())
}

/// Engine configurations exercised by `oracle-check`.
pub fn released_engines() -> Vec<(Method, Strategy)> {
    let mut methods = vec![Method::Ibp, Method::Lbp];
    methods.extend((1..=4).map(Method::RelaxedCrown));
    methods.extend([Method::Crown, Method::CrownIbp, Method::CrownLbp]);
    sweep(&methods, &Strategy::ALL)
}

#[derive(Debug, Serialize)]
struct OracleFinding {
    network: usize,
    method: String,
    strategy: &'static str,
    objective: String,
    #[serde(flatten)]
    violation: Violation,
}

#[derive(Debug, Serialize)]
struct OracleSummary {
    networks: usize,
    engines: usize,
    checks: usize,
    samples_per_instance: usize,
    grid_instances: usize,
    violations: Vec<OracleFinding>,
}

struct OracleCase {
    net: Network,
    center: Vec<f64>,
    label: usize,
}

fn oracle_cases(a: &OracleArgs) -> Result<Vec<OracleCase>> {
    if let Some(path) = &a.model {
        let net = read_model(path)?;
        let src = a.data.as_ref().ok_or_else(|| CliError::Usage("--model needs --data".into()))?;
        let data = src.load(a.split, Some(a.limit))?;
        data.check_for(&net)?;
        return Ok((0..data.len()).map(|i| OracleCase { net: net.clone(), center: data.inputs[i].clone(), label: data.labels[i] }).collect());
    }
    if a.random == 0 {
        return Err(CliError::Usage("--random must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    (0..a.random)
        .map(|i| {
            // Every other net has a two-dimensional input so the grid oracle
            // applies; ramp and ReLU alternate in pairs.
            let n0 = if i % 2 == 0 { 2 } else { rng.gen_range(4..=16) };
            let layers = rng.gen_range(2..=5);
            let mut dims = vec![n0];
            dims.extend((1..layers).map(|_| rng.gen_range(4..=16)));
            dims.push(rng.gen_range(2..=5));
            let act = if (i / 2) % 2 == 1 { ActivationSpec::param_ramp(0.01, vec![1.0])? } else { ActivationSpec::relu() };
            let mut layers = Network::random(&dims, &act, &mut rng)?.layers().to_vec();
            for layer in &mut layers {
                layer.affine.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
                if let Some(act) = layer.activation.as_mut() {
                    if act.ramp_points().is_some() {
                        act.set_ramp_points((0..layer.affine.outputs()).map(|_| rng.gen_range(0.2..2.0)).collect())?;
                    }
                }
            }
            let net = Network::new(layers)?;
            let center = (0..n0).map(|_| rng.gen_range(0.0..1.0)).collect();
            let label = rng.gen_range(0..net.output_dim());
            Ok(OracleCase { net, center, label })
        })
        .collect()
}

fn oracle_check(a: &OracleArgs) -> Result<()> {
    let cases = oracle_cases(a)?;
    let threat = a.threat.threat(a.eps)?;
    let engines = released_engines();
    let per_case = par_map(a.run.workers, cases.len(), |i| {
        let c = &cases[i];
        let pert = threat.around(&c.center);
        let mut objectives: Vec<Objective> = (0..c.net.depth()).map(Objective::PreActivation).collect();
        objectives.push(Objective::Margin(c.label));
        let use_grid = pert.norm == Norm::LInf && c.net.input_dim() <= 2;
        let mut envelopes = Vec::new();
        for &obj in &objectives {
            let mut rep = sampling_oracle(&c.net, &pert, obj, a.samples, a.seed.wrapping_add(i as u64))?;
            if use_grid {
                let g = exact_oracle_lowdim(&c.net, &pert, obj, a.grid_delta)?;
                for j in 0..rep.empirical_min.len() {
                    rep.empirical_min[j] = rep.empirical_min[j].min(g.grid_min[j]);
                    rep.empirical_max[j] = rep.empirical_max[j].max(g.grid_max[j]);
                }
            }
            envelopes.push(rep);
        }
        let mut findings = Vec::new();
        let mut checks = 0;
        for &(m, s) in &engines {
            let b = method_bounds(m, &c.net, &pert, s)?;
            let margin = margin_lower_bound(m, &c.net, &pert, c.label, s)?;
            for (obj, env) in objectives.iter().zip(envelopes.iter_mut()) {
                let shift = a.tamper.unwrap_or(0.0);
                let (mut lower, upper) = match *obj {
                    Objective::PreActivation(k) => (b.pre_lower[k].clone(), Some(b.pre_upper[k].clone())),
                    Objective::Margin(_) => (margin.clone(), None),
                };
                lower.iter_mut().for_each(|v| *v += shift);
                let before = env.violations.len();
                env.check(&m.name(), i, &lower, upper.as_deref(), 1e-9);
                checks += lower.len() + upper.as_ref().map_or(0, |u| u.len());
                for v in env.violations.drain(before..) {
                    findings.push(OracleFinding {
                        network: i,
                        method: m.name(),
                        strategy: s.name(),
                        objective: format!("{obj:?}"),
                        violation: v,
                    });
                }
            }
        }
        Ok((findings, checks, use_grid))
    })?;
    let mut summary = OracleSummary {
        networks: cases.len(),
        engines: engines.len(),
        checks: 0,
        samples_per_instance: a.samples,
        grid_instances: 0,
        violations: Vec::new(),
    };
    for (f, c, g) in per_case {
        summary.violations.extend(f);
        summary.checks += c;
        summary.grid_instances += g as usize;
    }
    let json = report::to_json(&summary);
    if let Some(p) = &a.out {
        write(p, &json)?;
    }
    println!("networks,{},engines,{},checks,{},violations,{}", summary.networks, summary.engines, summary.checks, summary.violations.len());
    if summary.violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Soundness(summary.violations.len()))
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Compare(a) => compare(a),
        Command::Train(a) => train(a),
        Command::Attack(a) => attack(a),
        Command::Analyze(a) => analyze(a),
        Command::OracleCheck(a) => oracle_check(a),
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
