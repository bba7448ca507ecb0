//! `dcfair` command-line tool.
//!
//! Every command writes its outputs and a `manifest.json` (resolved
//! configuration, versions, seed, output list) into `--out`. All
//! randomness comes from `--seed`:
//!
//! * synthetic data: `derive_seed(seed, [100])`
//! * train/validation/test split: `derive_seed(seed, [101])`
//! * model init and shuffling: from the training seed, which is `seed`
//! * convergence references: `derive_seed(seed, [102])`
//!
//! `tradeoff` runs seeds `seed, seed + 1, ...`, so its cell for seed `s`
//! matches `train --seed s` with the same data and flags.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use dcfair::dataio::{load_prepared, prepare_dataset, read_numeric_columns, synth_biased, SplitFractions, Splits};
use dcfair::derive_seed;
use dcfair::experiments::{
    aggregate, convergence_study_cdc, convergence_study_dc, output_path, reference_cdc, reference_dc, tradeoff_sweep,
    write_cells_csv, write_points_csv, write_summary_json, write_trials_csv, CdcDistribution, DcDistribution,
    StudySpec, THREADS_ENV,
};
use dcfair::fairtrain::{evaluate, fit_with, BandwidthPolicy, PenaltyKind, TrainConfig};
use dcfair::metrics::EoMode;
use dcfair::nn::Mlp;
use dcfair::stats::{cdc_stat, cdc_stat_direct, dcov, dcov_direct, silverman_bandwidth, SampleBatch};

const DATA_STREAM: u64 = 100;
const SPLIT_STREAM: u64 = 101;
const REFERENCE_STREAM: u64 = 102;

#[derive(Parser)]
#[command(name = "dcfair", version, about = "Distance-covariance fairness penalties: statistics, training, studies")]
#[command(after_help = format!("Set {THREADS_ENV}=N to cap worker threads."))]
struct Cli {
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = "dcfair-out")]
    out: PathBuf,

    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More progress on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance covariance or conditional distance covariance of CSV columns.
    Stat {
        #[command(subcommand)]
        which: StatCommand,
    },
    /// Train a classifier, optionally with a fairness penalty.
    #[command(allow_negative_numbers = true)]
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a saved model on the test split.
    #[command(allow_negative_numbers = true)]
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = EoArg::Binary)]
        eo_mode: EoArg,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Monte Carlo convergence of the statistics as the sample size grows.
    #[command(allow_negative_numbers = true)]
    Converge(ConvergeArgs),
    /// Sweep the initial penalty weight and emit accuracy/fairness points.
    #[command(allow_negative_numbers = true)]
    Tradeoff {
        /// Initial penalty weights.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,2,8,20")]
        lambdas: Vec<f64>,
        /// Penalties to sweep (none, dc, cdc).
        #[arg(long, value_delimiter = ',', default_value = "dc,cdc")]
        kinds: Vec<PenaltyKind>,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 10)]
        num_seeds: u64,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Subcommand)]
enum StatCommand {
    Dcov {
        #[command(flatten)]
        cols: StatColumns,
    },
    Cdcov {
        #[command(flatten)]
        cols: StatColumns,
        /// Conditioning columns.
        #[arg(long, value_delimiter = ',', required = true)]
        u: Vec<String>,
        /// File holding the U columns (default: --input).
        #[arg(long)]
        u_input: Option<PathBuf>,
        /// Kernel bandwidth.
        #[arg(long, conflicts_with = "silverman", required_unless_present = "silverman")]
        h: Option<f64>,
        /// Use Silverman's rule with the dimension of U.
        #[arg(long)]
        silverman: bool,
    },
}

#[derive(Args)]
struct StatColumns {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated Y columns
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<String>,
    /// Comma-separated Z columns
    #[arg(long, value_delimiter = ',', required = true)]
    z: Vec<String>,
    /// File holding the Z columns (default: --input).
    #[arg(long)]
    z_input: Option<PathBuf>,
    /// Also run the brute-force route and report the relative gap.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Serialize)]
struct DataArgs {
    /// CSV data file; needs --schema. Without it synthetic data is used.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    /// Schema file (TOML or JSON) describing --data.
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    /// Reuse prepared splits from this directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 4000)]
    synth_n: usize,
    #[arg(long, default_value_t = 0.9)]
    synth_bias: f64,
    #[arg(long, default_value_t = 0.5)]
    synth_balance: f64,
    #[arg(long, default_value_t = 0.70)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    test_frac: f64,
}

impl DataArgs {
    fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train_frac,
            val: self.val_frac,
            test: self.test_frac,
        }
    }

    fn splits(&self, seed: u64) -> dcfair::dataio::Result<Splits> {
        let split_seed = derive_seed(seed, &[SPLIT_STREAM]);
        match (&self.data, &self.schema) {
            (Some(data), Some(schema)) => {
                load_prepared(schema, data, self.fractions(), split_seed, self.cache_dir.as_deref())
            }
            _ => {
                let ds = synth_biased(self.synth_n, self.synth_bias, self.synth_balance, derive_seed(seed, &[DATA_STREAM]))?;
                prepare_dataset(&ds, self.fractions(), split_seed)
            }
        }
    }

    fn load(&self, seed: u64) -> Result<Splits> {
        self.splits(seed).context("preparing data")
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EoArg {
    Binary,
    AllClasses,
}

impl From<EoArg> for EoMode {
    fn from(m: EoArg) -> Self {
        match m {
            EoArg::Binary => EoMode::Binary,
            EoArg::AllClasses => EoMode::AllClasses,
        }
    }
}

/// Flags override values from `--config`, which override the defaults.
#[derive(Args)]
struct TrainArgs {
    /// Training config file (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// none, dc (demographic parity) or cdc (equalized odds) [default: none]
    #[arg(long)]
    penalty: Option<PenaltyKind>,
    /// [default: 40]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 1024]
    #[arg(long)]
    batch_size: Option<usize>,
    /// [default: 0.1]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 0.9]
    #[arg(long)]
    momentum: Option<f64>,
    /// Divide the learning rate by this at each milestone [default: 10]
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    /// 0-based epochs where the learning rate drops [default: 15,30]
    #[arg(long, value_delimiter = ',')]
    lr_milestones: Option<Vec<usize>>,
    /// [default: 2]
    #[arg(long)]
    lambda_init: Option<f64>,
    /// Dual step size [default: 0.5]
    #[arg(long)]
    beta: Option<f64>,
    /// Upper bound on the penalty weight during dual ascent
    #[arg(long)]
    lambda_ceiling: Option<f64>,
    /// Fixed kernel bandwidth for cdc (default: Silverman per batch).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Hidden layer widths [default: 128,128,128]
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    eo_mode: Option<EoArg>,
}

impl TrainArgs {
    fn resolve(&self, cli_seed: Option<u64>) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                if path.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                } else {
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
            }
            None => TrainConfig::default(),
        };
        if let Some(k) = self.penalty {
            c.penalty.kind = k;
        }
        macro_rules! overlay {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { c.$f = v; })*};
        }
        overlay!(epochs, batch_size, lr, momentum, lr_decay_factor, lr_milestones, lambda_init, beta, hidden);
        if self.lambda_ceiling.is_some() {
            c.lambda_ceiling = self.lambda_ceiling;
        }
        if let Some(h) = self.bandwidth {
            c.penalty.bandwidth = BandwidthPolicy::Fixed(h);
        }
        if let Some(m) = self.eo_mode {
            c.eo_mode = m.into();
        }
        if let Some(s) = cli_seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Statistic {
    Dc,
    Cdc,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Dependence {
    /// Independent (dc) or conditionally independent (cdc); target 0.
    Independent,
    /// Z = Y; target from one large reference draw.
    Dependent,
}

#[derive(Args, Serialize)]
struct ConvergeArgs {
    #[arg(long, value_enum, default_value_t = Statistic::Dc)]
    statistic: Statistic,
    #[arg(long, value_enum, default_value_t = Dependence::Independent)]
    dist: Dependence,
    #[arg(long, value_delimiter = ',', default_value = "32,128,512")]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Dimension of Y (dc only).
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Dimension of Z (dc, independent only).
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Population value to measure against, instead of a reference draw.
    #[arg(long)]
    target: Option<f64>,
    /// Sample size of the reference draw [default: 8192 for dc, 2048 for cdc]
    #[arg(long)]
    reference_n: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    dcfair_version: &'a str,
    cli_version: &'a str,
    threads_env: Option<String>,
    created_unix: u64,
    config: Value,
    outputs: Vec<String>,
}

struct Run {
    out: PathBuf,
    seed: u64,
    verbose: u8,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }

    fn write_with(&mut self, path: PathBuf, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(self, command: &str, config: Value) -> Result<()> {
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = Manifest {
            command,
            seed: self.seed,
            dcfair_version: dcfair::VERSION,
            cli_version: env!("CARGO_PKG_VERSION"),
            threads_env: std::env::var(THREADS_ENV).ok(),
            created_unix,
            config,
            outputs: self
                .outputs
                .iter()
                .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
                .collect(),
        };
        let path = self.out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        if self.verbose > 0 {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn read_batch(path: &Path, cols: &[String]) -> Result<SampleBatch> {
    let m = read_numeric_columns(path, cols).with_context(|| format!("reading {}", path.display()))?;
    Ok(SampleBatch::new(m)?)
}

fn cmd_stat(run: &mut Run, which: &StatCommand) -> Result<Value> {
    let (cols, config) = match which {
        StatCommand::Dcov { cols } => (cols, json!({ "statistic": "dcov" })),
        StatCommand::Cdcov { cols, u, h, silverman, .. } => {
            (cols, json!({ "statistic": "cdcov", "u": u, "h": h, "silverman": silverman }))
        }
    };
    let y = read_batch(&cols.input, &cols.y)?;
    let z = read_batch(cols.z_input.as_deref().unwrap_or(&cols.input), &cols.z)?;
    let mut result = json!({ "n": y.n() });
    match which {
        StatCommand::Dcov { .. } => {
            let value = dcov(&y, &z)?.value;
            result["statistic"] = json!("dcov");
            result["value"] = json!(value);
            if cols.check {
                let oracle = dcov_direct(&y, &z)?.value;
                result["check"] = json!({ "oracle_value": oracle, "relative_gap": relative_gap(value, oracle) });
            }
        }
        StatCommand::Cdcov { u, u_input, h, .. } => {
            let u = read_batch(u_input.as_deref().unwrap_or(&cols.input), u)?;
            let h = match h {
                Some(h) => *h,
                None => silverman_bandwidth(u.n(), u.dim())?,
            };
            let value = cdc_stat(&y, &z, &u, h)?.value;
            result["statistic"] = json!("cdcov");
            result["value"] = json!(value);
            result["h"] = json!(h);
            if cols.check {
                let oracle = cdc_stat_direct(&y, &z, &u, h)?.value;
                result["check"] = json!({ "oracle_value": oracle, "relative_gap": relative_gap(value, oracle) });
            }
        }
    }
    println!("{}", serde_json::to_string(&result)?);
    run.write_json(run.path("stat.json"), &result)?;
    let mut config = config;
    config["input"] = json!(cols.input);
    config["y"] = json!(cols.y);
    config["z"] = json!(cols.z);
    config["check"] = json!(cols.check);
    if let Some(h) = result.get("h") {
        config["h"] = h.clone();
    }
    config["result"] = result;
    Ok(config)
}

fn cmd_train(run: &mut Run, data: &DataArgs, args: &TrainArgs, cli_seed: Option<u64>) -> Result<Value> {
    let config = args.resolve(cli_seed)?;
    run.seed = config.seed;
    let splits = data.load(config.seed)?;
    let verbose = run.verbose;
    let (model, history) = fit_with(&splits.train, Some(&splits.val), &config, |r| {
        if verbose > 0 {
            eprintln!(
                "epoch {:>3}  loss {:.4}  penalty {:.5}  lambda {:.4}  val acc {}",
                r.epoch,
                r.train_loss,
                r.penalty_mean,
                r.lambda_next,
                r.val_accuracy.map_or("-".into(), |a| format!("{a:.4}"))
            );
        }
    })?;
    let path = run.path("model.json");
    model.save(&path)?;
    run.outputs.push(path);
    run.write_with(run.path("history.jsonl"), |w| Ok(history.write_jsonl(w)?))?;
    let test = evaluate(&model, &splits.test, config.eo_mode)?;
    let report = json!({
        "split": "test",
        "n_train": splits.train.n(),
        "n_val": splits.val.n(),
        "n_test": splits.test.n(),
        "unseen_categories": splits.unseen_categories,
        "penalty": config.penalty.kind,
        "final_lambda": history.records.last().map(|r| r.lambda_next).unwrap_or(config.lambda_init),
        "report": test,
    });
    println!(
        "accuracy {:.4}  delta_dp {:.4}  delta_eo {:.4}",
        test.accuracy, test.delta_dp, test.delta_eo
    );
    run.write_json(run.path("report.json"), &report)?;
    Ok(json!({ "train": config, "data": data }))
}

fn cmd_eval(run: &mut Run, model_path: &Path, eo_mode: EoArg, data: &DataArgs) -> Result<Value> {
    let model = Mlp::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let splits = data.load(run.seed)?;
    if model.input_dim() != splits.test.dim() {
        bail!("model expects {} features, data has {}", model.input_dim(), splits.test.dim());
    }
    let report = evaluate(&model, &splits.test, eo_mode.into())?;
    println!(
        "accuracy {:.4}  delta_dp {:.4}  delta_eo {:.4}",
        report.accuracy, report.delta_dp, report.delta_eo
    );
    run.write_json(run.path("report.json"), &json!({ "split": "test", "report": report }))?;
    Ok(json!({ "model": model_path, "eo_mode": eo_mode, "data": data }))
}

fn cmd_converge(run: &mut Run, args: &ConvergeArgs) -> Result<Value> {
    let spec = StudySpec {
        grid: args.grid.clone(),
        trials: args.trials,
        epsilon: args.epsilon,
        seed: run.seed,
    };
    let ref_seed = derive_seed(run.seed, &[REFERENCE_STREAM]);
    let mut reference = None;
    let (name, results) = match args.statistic {
        Statistic::Dc => {
            let dist = match args.dist {
                Dependence::Independent => DcDistribution::IndependentNormal { p: args.p, q: args.q },
                Dependence::Dependent => DcDistribution::Identical { p: args.p },
            };
            let target = match (args.target, dist.known_target()) {
                (Some(t), _) => Some(t),
                (None, Some(_)) => None,
                (None, None) => {
                    let n = args.reference_n.unwrap_or(8192);
                    let t = reference_dc(dist, n, ref_seed)?;
                    reference = Some(json!({ "n": n, "seed": ref_seed, "value": t }));
                    Some(t)
                }
            };
            ("dc", convergence_study_dc(dist, &spec, target)?)
        }
        Statistic::Cdc => {
            let dist = match args.dist {
                Dependence::Independent => CdcDistribution::ConditionallyIndependent,
                Dependence::Dependent => CdcDistribution::Dependent,
            };
            let target = match (args.target, dist.known_target()) {
                (Some(t), _) => Some(t),
                (None, Some(_)) => None,
                (None, None) => {
                    let n = args.reference_n.unwrap_or(2048);
                    let t = reference_cdc(dist, n, ref_seed)?;
                    reference = Some(json!({ "n": n, "seed": ref_seed, "value": t }));
                    Some(t)
                }
            };
            ("cdc", convergence_study_cdc(dist, &spec, target)?)
        }
    };
    let dist = match args.dist {
        Dependence::Independent => "independent",
        Dependence::Dependent => "dependent",
    };
    let prefix = format!("converge_{name}_{dist}");
    let key = json!({ "grid": args.grid, "trials": args.trials, "epsilon": args.epsilon, "p": args.p, "q": args.q, "target": args.target });
    run.write_with(output_path(&run.out, &prefix, run.seed, &key, "csv"), |w| Ok(write_trials_csv(w, &results)?))?;
    run.write_with(output_path(&run.out, &prefix, run.seed, &key, "json"), |w| {
        Ok(write_summary_json(w, &results)?)
    })?;
    for r in &results {
        println!(
            "n {:>6}  mean {:.6}  median {:.6}  exceed {:.3}{}",
            r.n,
            r.summary.mean,
            r.summary.median,
            r.exceed_rate,
            r.bandwidth.map_or(String::new(), |h| format!("  h {h:.5}"))
        );
    }
    Ok(json!({ "study": args, "reference": reference }))
}

fn cmd_tradeoff(
    run: &mut Run,
    lambdas: &[f64],
    kinds: &[PenaltyKind],
    num_seeds: u64,
    data: &DataArgs,
    args: &TrainArgs,
) -> Result<Value> {
    if num_seeds == 0 {
        bail!("--num-seeds must be positive");
    }
    let base = args.resolve(Some(run.seed))?;
    let seeds: Vec<u64> = (0..num_seeds).map(|i| run.seed + i).collect();
    let points = tradeoff_sweep(|s| Ok(data.splits(s)?), lambdas, kinds, &seeds, &base)?;
    let cells = aggregate(&points);
    let key = json!({ "lambdas": lambdas, "kinds": kinds, "num_seeds": num_seeds });
    run.write_with(output_path(&run.out, "tradeoff_points", run.seed, &key, "csv"), |w| {
        Ok(write_points_csv(w, &points)?)
    })?;
    run.write_with(output_path(&run.out, "tradeoff_cells", run.seed, &key, "csv"), |w| {
        Ok(write_cells_csv(w, &cells)?)
    })?;
    for c in &cells {
        println!(
            "{:<4} lambda {:>6}  acc {:.4}±{:.4}  ddp {:.4}±{:.4}  deo {:.4}±{:.4}",
            c.kind, c.lambda_init, c.accuracy_mean, c.accuracy_std, c.delta_dp_mean, c.delta_dp_std, c.delta_eo_mean,
            c.delta_eo_std
        );
    }
    Ok(json!({ "lambdas": lambdas, "kinds": kinds, "seeds": seeds, "train": base, "data": data }))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut run = Run {
        out: cli.out.clone(),
        seed: cli.seed.unwrap_or(0),
        verbose: cli.verbose,
        outputs: Vec::new(),
    };
    let (name, config) = match &cli.command {
        Command::Stat { which } => ("stat", cmd_stat(&mut run, which)?),
        Command::Train { data, train } => ("train", cmd_train(&mut run, data, train, cli.seed)?),
        Command::Eval { model, eo_mode, data } => ("eval", cmd_eval(&mut run, model, *eo_mode, data)?),
        Command::Converge(args) => ("converge", cmd_converge(&mut run, args)?),
        Command::Tradeoff {
            lambdas,
            kinds,
            num_seeds,
            data,
            train,
        } => ("tradeoff", cmd_tradeoff(&mut run, lambdas, kinds, *num_seeds, data, train)?),
    };
    run.finish(name, config)
}
