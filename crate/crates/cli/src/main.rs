//! `dpzo` command-line front end.
//!
//! Every command prints its resolved configuration as `key=value` lines,
//! then its results in the same format. Warnings go to stderr.
//!
//! Exit codes: 0 success, 2 usage error, 3 computation failure.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dpzo_core::accountant::{
    account, calibrate_sigma, AccountOptions, AccountantError, AccountingBudget, Mechanism,
    McOptions, Method, PrivacyReport, PrivacySpec,
};
use dpzo_core::audit::{paired_gap, run_mia, AuditError, AuditSpec, CanaryKind, ScoreRule};
use dpzo_core::optimizer::{replay, train_dpzo, OptimError, Sampling, TrainConfig, UpdateLog};
use dpzo_core::report::Report;
use dpzo_core::rng::derive_seed;
use dpzo_core::tasks::{evaluate_accuracy, make_synthetic_split, Model, SyntheticSpec};
use dpzo_core::{CoreError, Dataset, ParamVector};

const STREAM_INIT: u64 = 30;

#[derive(Parser, Debug)]
#[command(name = "dpzo", version, about = "Differentially private zeroth-order optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Epsilon bounds for a mechanism, sample rate and step count.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Account(AccountArgs),
    /// Smallest noise multiplier meeting a target epsilon.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Calibrate(CalibrateArgs),
    /// Train on a task and write the update log and final parameters.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Train(TrainCmd),
    /// Rebuild parameters from an update log.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Replay(ReplayArgs),
    /// Canary membership-inference audit.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Audit(AuditCmd),
}

#[derive(Args, Debug, Clone)]
struct AccountingArgs {
    /// Accounting route: pld, rr-pld, mc or pure.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, default_value_t = 10_000_000)]
    mc_samples: u64,
    #[arg(long, default_value_t = 0.999)]
    mc_confidence: f64,
    /// Seed for Monte Carlo accounting.
    #[arg(long, default_value_t = 0)]
    mc_seed: u64,
    /// Width budget for the discretization error on epsilon.
    #[arg(long, default_value_t = 1e-3)]
    eps_error: f64,
    /// Delta budget for truncation and concentration error.
    #[arg(long, default_value_t = 1e-10)]
    delta_error: f64,
}

impl AccountingArgs {
    fn method_for(&self, mechanism: Mechanism) -> Method {
        self.method.unwrap_or(match mechanism {
            Mechanism::Gaussian => Method::Pld,
            Mechanism::Laplace => Method::RrPld,
        })
    }

    fn options(&self) -> AccountOptions {
        AccountOptions {
            budget: AccountingBudget {
                eps_error: self.eps_error,
                delta_error: self.delta_error,
            },
            monte_carlo: McOptions {
                samples: self.mc_samples,
                confidence: self.mc_confidence,
                seed: self.mc_seed,
            },
        }
    }

    fn describe(&self, method: Method, r: &mut Report) {
        r.push("method", method);
        match method {
            Method::Pld | Method::RrPld => {
                r.push("eps_error", self.eps_error);
                r.push("delta_error", self.delta_error);
            }
            Method::MonteCarlo => {
                r.push("mc_samples", self.mc_samples);
                r.push("mc_confidence", self.mc_confidence);
                r.push("mc_seed", self.mc_seed);
            }
            Method::ClosedFormPure => {}
        }
    }
}

#[derive(Args, Debug)]
struct AccountArgs {
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Mechanism,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    sample_rate: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[command(flatten)]
    accounting: AccountingArgs,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Mechanism,
    #[arg(long)]
    target_eps: f64,
    #[arg(long)]
    sample_rate: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[command(flatten)]
    accounting: AccountingArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Task {
    Synthetic,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    Logistic,
    Mlp,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Task::Synthetic)]
    task: Task,
    /// Training CSV (features then label) for `--task csv`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out CSV for `--task csv`.
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    margin: f64,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    /// Held-out synthetic examples for test accuracy.
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Seed of the synthetic dataset; defaults to `--seed`.
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModelArg::Logistic)]
    model: ModelArg,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    /// Initial parameters: `zeros`, `random`, or a parameter file.
    #[arg(long, default_value = "zeros")]
    init: String,
    #[arg(long, value_parser = parse_mechanism, default_value = "gaussian")]
    mechanism: Mechanism,
    /// Calibrate sigma to this epsilon at `--delta`.
    #[arg(long, conflicts_with = "sigma")]
    target_eps: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Clipping threshold on per-example loss differences.
    #[arg(long, default_value_t = 0.01)]
    clip: f64,
    #[arg(long, default_value_t = 1e-3)]
    phi: f64,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Expected batch size.
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 100)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimates averaged per step (n-SPSA).
    #[arg(long, default_value_t = 1)]
    n_spsa: usize,
    /// Shuffled batches, no clipping, no noise.
    #[arg(long)]
    non_private: bool,
    #[arg(long, default_value_t = 0)]
    eval_every: u64,
    #[command(flatten)]
    accounting: AccountingArgs,
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out_log: Option<PathBuf>,
    #[arg(long)]
    out_params: Option<PathBuf>,
    /// Store coefficients in half precision (lossy).
    #[arg(long)]
    compact_log: bool,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
    /// Initial parameters: `zeros` or a parameter file.
    #[arg(long, default_value = "zeros")]
    init: String,
    #[arg(long)]
    out_params: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CanaryArg {
    Outlier,
    Mislabeled,
}

#[derive(Args, Debug)]
struct AuditCmd {
    #[command(flatten)]
    train: TrainArgs,
    /// Canaries per trial; half are inserted.
    #[arg(long, default_value_t = 20)]
    canaries: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, value_enum, default_value_t = CanaryArg::Outlier)]
    canary_kind: CanaryArg,
    /// Also audit a non-private run on the same seeds and report the gap.
    #[arg(long)]
    paired: bool,
    /// Write per-canary scores as CSV.
    #[arg(long)]
    scores_csv: Option<PathBuf>,
    #[arg(long, hide = true)]
    null_scores: bool,
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Compute(String),
}

impl From<AccountantError> for CliError {
    fn from(e: AccountantError) -> Self {
        match e {
            AccountantError::InvalidSpec(_) | AccountantError::WrongMechanism { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::Accountant(a) => a.into(),
            OptimError::InvalidConfig(_) | OptimError::DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::InvalidSpec(m) => CliError::Usage(m),
            AuditError::Optim(o) => o.into(),
            AuditError::Io(io) => CliError::Compute(io.to_string()),
        }
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn input_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("cannot read {what}: {e}"))
}

fn output_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Compute(format!("cannot write {what}: {e}"))
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Prints a report block and flushes so configuration precedes results.
fn emit(r: &Report) {
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "{r}");
    let _ = out.flush();
}

fn cmd_account(a: &AccountArgs) -> Result<(), CliError> {
    let method = a.accounting.method_for(a.mechanism);
    let mut cfg = Report::new();
    cfg.push("command", "account")
        .push("mechanism", a.mechanism)
        .push("sigma", a.sigma)
        .push("sample_rate", a.sample_rate)
        .push("steps", a.steps)
        .push("delta", a.delta);
    a.accounting.describe(method, &mut cfg);
    emit(&cfg);
    if method == Method::ClosedFormPure && a.delta > 0.0 {
        warn("the pure route ignores delta");
    }
    let spec = PrivacySpec::new(a.mechanism, a.sigma, a.sample_rate, a.steps, a.delta)?;
    let report = account(&spec, method, &a.accounting.options())?;
    let mut out = Report::new();
    push_privacy(&mut out, &report);
    emit(&out);
    Ok(())
}

fn push_privacy(r: &mut Report, p: &PrivacyReport) {
    r.push("eps_low", p.epsilon.lower)
        .push("eps_est", p.epsilon.estimate)
        .push("eps_up", p.epsilon.upper);
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let method = a.accounting.method_for(a.mechanism);
    let mut cfg = Report::new();
    cfg.push("command", "calibrate")
        .push("mechanism", a.mechanism)
        .push("target_eps", a.target_eps)
        .push("sample_rate", a.sample_rate)
        .push("steps", a.steps)
        .push("delta", a.delta);
    a.accounting.describe(method, &mut cfg);
    emit(&cfg);
    let c = calibrate_sigma(
        a.mechanism,
        a.target_eps,
        a.delta,
        a.sample_rate,
        a.steps,
        method,
        &a.accounting.options(),
    )?;
    let mut out = Report::new();
    out.push("sigma", c.sigma).push("eps_up", c.epsilon);
    if let Some(s) = c.infeasible_below {
        out.push("sigma_infeasible", s);
    }
    emit(&out);
    Ok(())
}

struct Prepared {
    train: Dataset,
    test: Option<Dataset>,
    model: Model,
    init: ParamVector,
}

fn prepare(a: &TrainArgs) -> Result<Prepared, CliError> {
    let (train, test) = match a.task {
        Task::Synthetic => {
            let spec = SyntheticSpec {
                n: a.n,
                d: a.dim,
                margin: a.margin,
                label_noise: a.label_noise,
                seed: a.data_seed.unwrap_or(a.seed),
            };
            let (train, test) = make_synthetic_split(&spec, a.n_test)
                .map_err(|e| usage(e.to_string()))?;
            (train, (a.n_test > 0).then_some(test))
        }
        Task::Csv => {
            let path = a.data.as_ref().ok_or_else(|| usage("--task csv needs --data"))?;
            let train = Dataset::load_csv(path).map_err(|e| input_err("dataset", e))?;
            let test = match &a.test_data {
                Some(p) => Some(Dataset::load_csv(p).map_err(|e| input_err("test dataset", e))?),
                None => None,
            };
            (train, test)
        }
    };
    let d = train.dim();
    let model = match a.model {
        ModelArg::Logistic => Model::logistic(d),
        ModelArg::Mlp => Model::mlp(d, a.hidden, a.init_scale).map_err(|e| usage(e.to_string()))?,
    };
    let init = match a.init.as_str() {
        "zeros" => ParamVector::zeros(model.param_count()),
        "random" => ParamVector::new(model.init_params(derive_seed(a.seed, STREAM_INIT, 0)))
            .map_err(|e| CliError::Compute(e.to_string()))?,
        path => load_params(path)?,
    };
    if init.dim() != model.param_count() {
        return Err(usage(format!(
            "initial parameters have dimension {}, model needs {}",
            init.dim(),
            model.param_count()
        )));
    }
    Ok(Prepared {
        train,
        test,
        model,
        init,
    })
}

fn load_params(path: &str) -> Result<ParamVector, CliError> {
    ParamVector::load(path).map_err(|e: CoreError| input_err("parameters", e))
}

/// Builds the training configuration, calibrating sigma if requested.
/// `n` is the training-set size the sample rate refers to.
fn resolve_config(a: &TrainArgs, n: usize, cfg: &mut Report) -> Result<TrainConfig, CliError> {
    let method = a.accounting.method_for(a.mechanism);
    let base = TrainConfig {
        lr: a.lr,
        phi: a.phi,
        clip: a.clip,
        sigma: 0.0,
        mechanism: a.mechanism,
        expected_batch: a.batch,
        steps: a.steps,
        root_seed: a.seed,
        n_spsa: a.n_spsa,
        sampling: Sampling::Poisson,
        delta: a.delta,
        accounting: method,
        eval_every: a.eval_every,
    };
    cfg.push("model", format!("{:?}", a.model).to_lowercase())
        .push("lr", a.lr)
        .push("phi", a.phi)
        .push("batch", a.batch)
        .push("steps", a.steps)
        .push("seed", a.seed)
        .push("n_spsa", a.n_spsa)
        .push("init", &a.init);
    if a.non_private {
        if a.target_eps.is_some() || a.sigma.is_some() {
            warn("--non-private ignores --sigma and --target-eps");
        }
        cfg.push("private", false)
            .push("sampling", "shuffled")
            .push("clip", "inf")
            .push("sigma", 0);
        return Ok(base.non_private());
    }
    let sigma = match (a.target_eps, a.sigma) {
        (Some(target), None) => {
            let rate = a.batch as f64 / n as f64;
            let c = calibrate_sigma(
                a.mechanism,
                target,
                a.delta,
                rate,
                a.steps,
                method,
                &a.accounting.options(),
            )
            .map_err(|e| match e {
                AccountantError::InvalidSpec(m) => CliError::Usage(m),
                other => CliError::Compute(format!("calibration failed: {other}")),
            })?;
            cfg.push("target_eps", target);
            c.sigma
        }
        (None, Some(s)) => s,
        _ => return Err(usage("give one of --sigma or --target-eps, or --non-private")),
    };
    cfg.push("private", true)
        .push("sampling", "poisson")
        .push("mechanism", a.mechanism)
        .push("clip", a.clip)
        .push("sigma", sigma)
        .push("delta", a.delta);
    a.accounting.describe(method, cfg);
    Ok(TrainConfig { sigma, ..base })
}

fn describe_task(a: &TrainArgs, p: &Prepared, cfg: &mut Report) {
    match a.task {
        Task::Synthetic => {
            cfg.push("task", "synthetic")
                .push("n", a.n)
                .push("dim", a.dim)
                .push("margin", a.margin)
                .push("label_noise", a.label_noise)
                .push("n_test", a.n_test)
                .push("data_seed", a.data_seed.unwrap_or(a.seed));
        }
        Task::Csv => {
            cfg.push("task", "csv")
                .push("n", p.train.len())
                .push("dim", p.train.dim());
        }
    }
    if a.model == ModelArg::Mlp {
        cfg.push("hidden", a.hidden).push("init_scale", a.init_scale);
    }
}

fn cmd_train(c: &TrainCmd) -> Result<(), CliError> {
    let a = &c.train;
    let p = prepare(a)?;
    let mut cfg = Report::new();
    cfg.push("command", "train");
    describe_task(a, &p, &mut cfg);
    let config = resolve_config(a, p.train.len(), &mut cfg)?;
    if let Some(path) = &c.out_log {
        cfg.push("out_log", path.display()).push("compact_log", c.compact_log);
    }
    if let Some(path) = &c.out_params {
        cfg.push("out_params", path.display());
    }
    emit(&cfg);

    let result = train_dpzo(&config, &p.train, &p.model, &p.init)?;
    let mut out = Report::new();
    out.push("records", result.log.len());
    if let Some(last) = result.history.last() {
        out.push("train_loss", last.train_loss);
    }
    let acc = |d: &Dataset| evaluate_accuracy(&result.params, d, &p.model);
    out.push("train_accuracy", acc(&p.train).map_err(|e| CliError::Compute(e.to_string()))?);
    if let Some(test) = &p.test {
        out.push("test_accuracy", acc(test).map_err(|e| CliError::Compute(e.to_string()))?);
    }
    match &result.privacy {
        Some(report) => {
            push_privacy(&mut out, report);
        }
        None => {
            out.push("privacy", "none");
        }
    }
    if let Some(path) = &c.out_log {
        let log = if c.compact_log {
            result.log.to_compact()
        } else {
            result.log.clone()
        };
        log.save(path).map_err(|e| output_err("log", e))?;
    }
    if let Some(path) = &c.out_params {
        result.params.save(path).map_err(|e| output_err("parameters", e))?;
    }
    emit(&out);
    Ok(())
}

fn cmd_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let log = UpdateLog::load(&a.log).map_err(|e| input_err("log", e))?;
    let init = match a.init.as_str() {
        "zeros" => ParamVector::zeros(log.dim as usize),
        path => load_params(path)?,
    };
    let mut cfg = Report::new();
    cfg.push("command", "replay")
        .push("log", a.log.display())
        .push("init", &a.init);
    if let Some(path) = &a.out_params {
        cfg.push("out_params", path.display());
    }
    emit(&cfg);
    let params = replay(&init, &log)?;
    if let Some(path) = &a.out_params {
        params.save(path).map_err(|e| output_err("parameters", e))?;
    }
    let mut out = Report::new();
    out.push("dim", log.dim)
        .push("records", log.len())
        .push("root_seed", log.root_seed)
        .push("compact", log.compact)
        .push("param_norm", params.iter().map(|v| v * v).sum::<f64>().sqrt());
    emit(&out);
    Ok(())
}

fn cmd_audit(c: &AuditCmd) -> Result<(), CliError> {
    let a = &c.train;
    let p = prepare(a)?;
    let mut cfg = Report::new();
    cfg.push("command", "audit");
    describe_task(a, &p, &mut cfg);
    let members = c.canaries / 2;
    let config = resolve_config(a, p.train.len() + members, &mut cfg)?;
    let kind = match c.canary_kind {
        CanaryArg::Outlier => CanaryKind::Outlier,
        CanaryArg::Mislabeled => CanaryKind::Mislabeled,
    };
    cfg.push("canaries", c.canaries)
        .push("trials", c.trials)
        .push("canary_kind", format!("{:?}", c.canary_kind).to_lowercase())
        .push("paired", c.paired)
        .push("score", if c.null_scores { "random" } else { "loss_threshold" });
    if let Some(path) = &c.scores_csv {
        cfg.push("scores_csv", path.display());
    }
    emit(&cfg);
    if c.trials < 2 {
        warn("fewer than two trials: the confidence interval is unbounded");
    }
    if c.paired && a.non_private {
        warn("--paired with --non-private compares a run with itself");
    }

    let spec = AuditSpec {
        n_canaries: c.canaries,
        kind,
        trials: c.trials,
        score: if c.null_scores {
            ScoreRule::Random
        } else {
            ScoreRule::LossThreshold
        },
        train: config,
        seed: a.seed,
    };
    let result = run_mia(&spec, &p.train, &p.model, &p.init)?;
    let mut out = Report::new();
    out.push("auc", result.auc)
        .push("auc_ci_low", result.ci_low)
        .push("auc_ci_high", result.ci_high);
    if c.paired {
        let baseline = AuditSpec {
            train: config.non_private(),
            ..spec
        };
        let np = run_mia(&baseline, &p.train, &p.model, &p.init)?;
        out.push("auc_non_private", np.auc)
            .push("auc_non_private_ci_low", np.ci_low)
            .push("auc_non_private_ci_high", np.ci_high);
        match paired_gap(&np.trial_aucs, &result.trial_aucs) {
            Ok(g) => {
                out.push("auc_gap", g.mean)
                    .push("auc_gap_lower95", g.lower95)
                    .push("auc_gap_significant", g.significant());
            }
            Err(_) => {
                out.push("auc_gap", np.auc - result.auc);
            }
        }
    }
    if let Some(path) = &c.scores_csv {
        result.save_scores_csv(path).map_err(|e| output_err("scores", e))?;
    }
    emit(&out);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Account(a) => cmd_account(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Train(a) => cmd_train(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Audit(a) => cmd_audit(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand_config(std::env::args().collect()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
