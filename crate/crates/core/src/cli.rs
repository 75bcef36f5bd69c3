//! Experiment runner behind the `dpauc` binary.
//!
//! Every subcommand reads an optional TOML config file and then applies
//! command-line flags on top of it; flags win. All randomness derives from
//! one seed, which is written into every output row.
//!
//! ```toml
//! seed = 7
//! trials = 100
//!
//! [dataset]            # either `path = "scores.csv"` or a synthetic spec
//! m = 10000
//! base_rate = 0.2
//! separation = 1.19
//! family = "logit-gaussian"
//!
//! [sweep]
//! protocols = ["threshold-laplace", "rank-rr"]
//! epsilons = [1.0, 8.0]
//! clients = [10, 1000]
//! grid_sizes = [100]
//! partitions = ["iid", "non-iid"]
//!
//! [[predict.local_laplace]]
//! k = 100
//! p = 50
//! n = 50
//! eps = 1.0
//!
//! [attack]
//! k = [1, 10, 100]
//! bins = 20
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::analysis::{check_prediction, monte_carlo, score_density, topk_attack, PredictionParams};
use crate::data::{gen_synthetic, load_csv, write_csv, ScoreFamily, SyntheticSpec};
use crate::error::{invalid, Error, Result};
use crate::federation::{
    PartitionMode, Protocol, ProtocolConfig, ProtocolKind, SensitivityMode, ThresholdMechanism,
};
use crate::mechanisms::{eps_per_stat, RrSpec};
use crate::metrics::{auc_rank, Dataset, ThresholdGrid};
use crate::rng::{SeededRng, DATA_STREAM};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_PREDICT_TRIALS: usize = 10_000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_ALL_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dpauc", version, about = "Private federated AUC experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file (stdout when omitted; required for `gen`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic score/label CSV
    Gen(GenArgs),
    /// Run a Monte Carlo sweep over protocol settings
    Run(RunArgs),
    /// Compare closed-form AUC variance predictions with simulation
    Predict(PredictArgs),
    /// Top-k label inference and per-class score histograms
    Attack(AttackArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub base_rate: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    /// `logit-gaussian` or `beta-pair`
    #[arg(long)]
    pub family: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct GenArgs {
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Dataset CSV; a synthetic dataset is generated when absent
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long, value_delimiter = ',')]
    pub protocols: Vec<String>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub clients: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub grid_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub partitions: Vec<String>,
    #[arg(long)]
    pub sensitivity: Option<String>,
    /// Per-statistic delta for `threshold-gaussian`
    #[arg(long)]
    pub delta: Option<f64>,
    /// Use true class totals (analysis only; not private)
    #[arg(long)]
    pub exact_pn: bool,
    /// Report the randomized-response AUC without debiasing
    #[arg(long)]
    pub no_debias: bool,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct PredictArgs {
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct AttackArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Histogram output (default: `<out>_density.csv`, or stdout)
    #[arg(long)]
    pub density_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub trials: Option<usize>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub attack: AttackSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub m: Option<usize>,
    pub base_rate: Option<f64>,
    pub separation: Option<f64>,
    pub family: Option<String>,
    /// Seed for synthetic generation; defaults to the global seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub protocols: Option<Vec<String>>,
    pub epsilons: Option<Vec<f64>>,
    pub clients: Option<Vec<usize>>,
    pub grid_sizes: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
    pub partitions: Option<Vec<String>>,
    pub sensitivity: Option<String>,
    pub delta: Option<f64>,
    pub exact_pn: Option<bool>,
    pub debias: Option<bool>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalLaplaceRow {
    pub k: usize,
    pub p: usize,
    pub n: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalLaplaceRow {
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrNoisyRow {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub eps: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub trials: Option<usize>,
    #[serde(default)]
    pub local_laplace: Vec<LocalLaplaceRow>,
    #[serde(default)]
    pub global_laplace: Vec<GlobalLaplaceRow>,
    #[serde(default)]
    pub rr_noisy: Vec<RrNoisyRow>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub k: Option<Vec<usize>>,
    pub bins: Option<usize>,
    pub density_out: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))
        }
    }
}

/// Where a command's dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Path(PathBuf),
    Synthetic { spec: SyntheticSpec, seed: u64 },
}

impl DatasetSource {
    fn resolve(
        file: &DatasetSection,
        path_flag: Option<&PathBuf>,
        synth: &SyntheticArgs,
        seed: u64,
    ) -> Result<Self> {
        if let Some(p) = path_flag.or(file.path.as_ref()) {
            return Ok(DatasetSource::Path(p.clone()));
        }
        let family = match synth.family.as_ref().or(file.family.as_ref()) {
            Some(f) => f.parse()?,
            None => ScoreFamily::LogitGaussian,
        };
        let spec = SyntheticSpec {
            m: synth.m.or(file.m).unwrap_or(10_000),
            base_rate: synth.base_rate.or(file.base_rate).unwrap_or(0.2),
            separation: synth.separation.or(file.separation).unwrap_or(1.19),
            family,
        };
        spec.validate()?;
        Ok(DatasetSource::Synthetic {
            spec,
            seed: file.seed.unwrap_or(seed),
        })
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Path(p) => load_csv(p),
            DatasetSource::Synthetic { spec, seed } => {
                gen_synthetic(spec, &mut SeededRng::with_stream(*seed, DATA_STREAM))
            }
        }
    }
}

/// Fully resolved sweep for `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub protocols: Vec<ProtocolKind>,
    pub epsilons: Vec<f64>,
    pub clients: Vec<usize>,
    pub grid_sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub partitions: Vec<PartitionMode>,
    pub sensitivity: SensitivityMode,
    pub delta: f64,
    pub use_exact_pn: bool,
    pub debias: bool,
    pub trials: usize,
    pub seed: u64,
}

fn pick<T: Clone>(flag: &[T], file: &Option<Vec<T>>, default: Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else {
        file.clone().unwrap_or(default)
    }
}

fn parse_all<T: std::str::FromStr<Err = Error>>(xs: &[String]) -> Result<Vec<T>> {
    xs.iter().map(|s| s.parse()).collect()
}

impl RunConfig {
    pub fn resolve(common: &CommonArgs, args: &RunArgs, file: &FileConfig) -> Result<Self> {
        let seed = common.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let sweep = &file.sweep;
        let cfg = Self {
            dataset: DatasetSource::resolve(&file.dataset, args.data.as_ref(), &args.synthetic, seed)?,
            protocols: parse_all(&pick(&args.protocols, &sweep.protocols, vec!["threshold-laplace".into()]))?,
            epsilons: pick(&args.epsilons, &sweep.epsilons, vec![1.0]),
            clients: pick(&args.clients, &sweep.clients, vec![10]),
            grid_sizes: pick(&args.grid_sizes, &sweep.grid_sizes, vec![100]),
            alphas: pick(&args.alphas, &sweep.alphas, vec![0.5]),
            partitions: parse_all(&pick(&args.partitions, &sweep.partitions, vec!["iid".into()]))?,
            sensitivity: match args.sensitivity.as_ref().or(sweep.sensitivity.as_ref()) {
                Some(s) => s.parse()?,
                None => SensitivityMode::LocalMaxRank,
            },
            delta: args.delta.or(sweep.delta).unwrap_or(1e-5),
            use_exact_pn: args.exact_pn || sweep.exact_pn.unwrap_or(false),
            debias: !args.no_debias && sweep.debias.unwrap_or(true),
            trials: args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks on every sweep axis, before any dataset is loaded or
    /// trial is run.
    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("protocols", self.protocols.is_empty()),
            ("epsilons", self.epsilons.is_empty()),
            ("clients", self.clients.is_empty()),
            ("grid_sizes", self.grid_sizes.is_empty()),
            ("alphas", self.alphas.is_empty()),
            ("partitions", self.partitions.is_empty()),
        ];
        if let Some((name, _)) = nonempty.iter().find(|(_, empty)| *empty) {
            return Err(invalid(format!("sweep axis `{name}` is empty")));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0)) {
            return Err(invalid(format!("epsilon values must be > 0, got {e}")));
        }
        if self.clients.contains(&0) {
            return Err(invalid("client counts must be at least 1"));
        }
        if self.grid_sizes.contains(&0) {
            return Err(invalid("grid sizes must be at least 1"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(invalid(format!("alpha values must be in (0, 1), got {a}")));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        Ok(())
    }

    /// Grid cells in output order: protocol, partition, clients, epsilon,
    /// then grid size (threshold protocols) or alpha (rank Laplace).
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for &kind in &self.protocols {
            for &partition in &self.partitions {
                for &clients in &self.clients {
                    for &epsilon in &self.epsilons {
                        let base = Cell {
                            kind,
                            partition,
                            clients,
                            epsilon,
                            eps_per_stat: None,
                            alpha: None,
                            grid_size: None,
                            sensitivity: None,
                            config: None,
                        };
                        match kind {
                            ProtocolKind::ThresholdLaplace | ProtocolKind::ThresholdGaussian => {
                                for &size in &self.grid_sizes {
                                    let mechanism = if kind == ProtocolKind::ThresholdLaplace {
                                        ThresholdMechanism::Laplace
                                    } else {
                                        ThresholdMechanism::Gaussian { delta: self.delta }
                                    };
                                    cells.push(Cell {
                                        eps_per_stat: Some(eps_per_stat(size, epsilon)),
                                        grid_size: Some(size),
                                        config: Some(self.config(Protocol::Threshold {
                                            grid: ThresholdGrid::uniform(size)?,
                                            eps_total: epsilon,
                                            mechanism,
                                        }, clients, partition)),
                                        ..base.clone()
                                    });
                                }
                            }
                            ProtocolKind::RankRr => {
                                RrSpec::new(epsilon)?;
                                cells.push(Cell {
                                    config: Some(self.config(
                                        Protocol::RankRr { epsilon, debias: self.debias },
                                        clients,
                                        partition,
                                    )),
                                    ..base
                                });
                            }
                            ProtocolKind::RankLaplace => {
                                let alphas: Vec<Option<f64>> = if self.use_exact_pn {
                                    vec![None]
                                } else {
                                    self.alphas.iter().copied().map(Some).collect()
                                };
                                for alpha in alphas {
                                    cells.push(Cell {
                                        alpha,
                                        sensitivity: Some(self.sensitivity),
                                        config: Some(self.config(
                                            Protocol::RankLaplace {
                                                eps_total: epsilon,
                                                alpha: alpha.unwrap_or(0.5),
                                                sensitivity: self.sensitivity,
                                            },
                                            clients,
                                            partition,
                                        )),
                                        ..base.clone()
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        for cell in &cells {
            if let Some(cfg) = &cell.config {
                cfg.validate()?;
            }
        }
        Ok(cells)
    }

    fn config(&self, protocol: Protocol, clients: usize, partition: PartitionMode) -> ProtocolConfig {
        ProtocolConfig {
            protocol,
            clients,
            partition,
            use_exact_pn: self.use_exact_pn,
        }
    }
}

/// One sweep cell and its protocol configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub kind: ProtocolKind,
    pub partition: PartitionMode,
    pub clients: usize,
    pub epsilon: f64,
    pub eps_per_stat: Option<f64>,
    pub alpha: Option<f64>,
    pub grid_size: Option<usize>,
    pub sensitivity: Option<SensitivityMode>,
    config: Option<ProtocolConfig>,
}

impl Cell {
    pub fn config(&self) -> &ProtocolConfig {
        self.config.as_ref().expect("cells are built with a config")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub cell: Cell,
    pub trials: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub failures: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub ground_truth: f64,
    pub rows: Vec<RunRow>,
    pub seed: u64,
    pub dataset_size: usize,
}

impl SweepOutput {
    pub fn any_cell_failed(&self) -> bool {
        self.rows.iter().any(|r| r.mean.is_none())
    }
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    let dataset = cfg.dataset.load()?;
    if let Some(k) = cfg.clients.iter().find(|&&k| k > dataset.len()) {
        return Err(invalid(format!("{k} clients exceed the {} samples", dataset.len())));
    }
    let ground_truth = auc_rank(&dataset)?;
    let rows = cells
        .into_par_iter()
        .map(|cell| match monte_carlo(cell.config(), &dataset, cfg.trials, cfg.seed) {
            Ok(r) => RunRow {
                cell,
                trials: r.trials,
                mean: Some(r.mean),
                std: Some(r.std),
                failures: r.failures,
                error: r.last_error,
            },
            Err(e) => RunRow {
                cell,
                trials: cfg.trials,
                mean: None,
                std: None,
                failures: cfg.trials,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(SweepOutput {
        ground_truth,
        rows,
        seed: cfg.seed,
        dataset_size: dataset.len(),
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn clean_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub const RUN_HEADER: &str = "row_type,protocol,epsilon,eps_per_stat,alpha,clients,grid_size,partition,sensitivity,trials,mean,std,failures,seed,error";

pub fn write_sweep_csv<W: Write>(out: &SweepOutput, mut w: W) -> Result<()> {
    writeln!(w, "{RUN_HEADER}")?;
    writeln!(
        w,
        "ground_truth,central,,,,,,,,,{},0,0,{},",
        out.ground_truth, out.seed
    )?;
    for row in &out.rows {
        let c = &row.cell;
        writeln!(
            w,
            "result,{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.kind,
            c.epsilon,
            opt(c.eps_per_stat),
            opt(c.alpha),
            c.clients,
            opt(c.grid_size),
            c.partition,
            opt(c.sensitivity),
            row.trials,
            opt(row.mean),
            opt(row.std),
            row.failures,
            out.seed,
            clean_field(row.error.as_deref().unwrap_or("")),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter grid for `predict`; the built-in default covers each
/// predictor at a few sizes and budgets.
pub fn default_prediction_grid() -> Vec<PredictionParams> {
    let mut grid = vec![
        PredictionParams::LocalLaplace { k: 100, p: 50, n: 50, eps: 1.0 },
        PredictionParams::LocalLaplace { k: 100, p: 50, n: 50, eps: 4.0 },
        PredictionParams::LocalLaplace { k: 1000, p: 200, n: 800, eps: 1.0 },
        PredictionParams::GlobalLaplace { k: 10, m: 100, p: 50, n: 50, eps: 1.0 },
        PredictionParams::GlobalLaplace { k: 10, m: 100, p: 50, n: 50, eps: 2.0 },
        PredictionParams::GlobalLaplace { k: 100, m: 1000, p: 500, n: 500, eps: 1.0 },
    ];
    for eps in [0.5, 1.0, 2.0] {
        grid.push(PredictionParams::RrNoisy { m: 1000, p: 200, n: 800, eps });
    }
    grid
}

fn prediction_grid(section: &PredictSection) -> Vec<PredictionParams> {
    let mut grid: Vec<PredictionParams> = section
        .local_laplace
        .iter()
        .map(|r| PredictionParams::LocalLaplace { k: r.k, p: r.p, n: r.n, eps: r.eps })
        .chain(section.global_laplace.iter().map(|r| PredictionParams::GlobalLaplace {
            k: r.k,
            m: r.m,
            p: r.p,
            n: r.n,
            eps: r.eps,
        }))
        .chain(section.rr_noisy.iter().map(|r| PredictionParams::RrNoisy { m: r.m, p: r.p, n: r.n, eps: r.eps }))
        .collect();
    if grid.is_empty() {
        grid = default_prediction_grid();
    }
    grid
}

pub const PREDICT_HEADER: &str =
    "formula,k,m,p,n,epsilon,trials,predicted_std,empirical_std,relative_error,failures,seed";

pub fn run_predictions(grid: &[PredictionParams], trials: usize, seed: u64) -> Result<Vec<crate::analysis::PredictionCheck>> {
    if trials < 2 {
        return Err(invalid("predict needs at least 2 trials"));
    }
    for p in grid {
        p.predict()?;
    }
    grid.iter().map(|&p| check_prediction(p, trials, seed)).collect()
}

pub fn write_predictions_csv<W: Write>(
    checks: &[crate::analysis::PredictionCheck],
    seed: u64,
    mut w: W,
) -> Result<()> {
    writeln!(w, "{PREDICT_HEADER}")?;
    for c in checks {
        let (k, m, p, n, eps) = c.params.values();
        writeln!(
            w,
            "{},{k},{m},{p},{n},{eps},{},{},{},{},{},{seed}",
            c.params.formula(),
            c.trials,
            c.predicted_std,
            c.empirical_std,
            c.relative_error,
            c.failures,
        )?;
    }
    w.flush()?;
    Ok(())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p.as_os_str() != "-" => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        _ => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn density_path(out: Option<&Path>) -> Option<PathBuf> {
    let out = out.filter(|p| p.as_os_str() != "-")?;
    let stem = out.file_stem()?.to_string_lossy().into_owned();
    Some(out.with_file_name(format!("{stem}_density.csv")))
}

/// Exit code for an error: 2 when every trial failed, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::AllTrialsFailed { .. } => EXIT_ALL_FAILED,
        _ => EXIT_VALIDATION,
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let file = load_config(cli.common.config.as_deref())?;
    let seed = cli.common.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out = cli.common.out.clone().or(file.out.clone());
    let workers = cli.common.workers.or(file.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;

    pool.install(|| match &cli.command {
        Command::Gen(args) => {
            let out = out.ok_or_else(|| invalid("gen requires --out"))?;
            let source = DatasetSource::resolve(&file.dataset, None, &args.synthetic, seed)?;
            let dataset = source.load()?;
            write_csv(&dataset, fs::File::create(out)?)?;
            Ok(EXIT_OK)
        }
        Command::Run(args) => {
            let cfg = RunConfig::resolve(&cli.common, args, &file)?;
            let result = run_sweep(&cfg)?;
            write_sweep_csv(&result, open_out(out.as_deref())?)?;
            Ok(if result.any_cell_failed() { EXIT_ALL_FAILED } else { EXIT_OK })
        }
        Command::Predict(args) => {
            let trials = args.trials.or(file.predict.trials).or(file.trials).unwrap_or(DEFAULT_PREDICT_TRIALS);
            let checks = run_predictions(&prediction_grid(&file.predict), trials, seed)?;
            write_predictions_csv(&checks, seed, open_out(out.as_deref())?)?;
            Ok(EXIT_OK)
        }
        Command::Attack(args) => {
            let source = DatasetSource::resolve(&file.dataset, args.data.as_ref(), &args.synthetic, seed)?;
            let ks = pick(&args.k, &file.attack.k, vec![1, 10, 100]);
            let bins = args.bins.or(file.attack.bins).unwrap_or(20);
            if bins == 0 {
                return Err(invalid("bins must be at least 1"));
            }
            let dataset = source.load()?;
            let attacks = ks.iter().map(|&k| topk_attack(&dataset, k)).collect::<Result<Vec<_>>>()?;
            let density = score_density(&dataset, bins)?;

            let mut w = open_out(out.as_deref())?;
            writeln!(w, "k,tp_in_topk,precision,recall,seed")?;
            for a in &attacks {
                writeln!(w, "{},{},{},{},{seed}", a.k, a.true_positives_in_topk, a.precision, a.recall)?;
            }
            w.flush()?;

            let density_out = args
                .density_out
                .clone()
                .or(file.attack.density_out.clone())
                .or_else(|| density_path(out.as_deref()));
            let mut w = open_out(density_out.as_deref())?;
            writeln!(w, "bin,lower,upper,positive,negative,seed")?;
            for b in 0..density.bins {
                let (lo, hi) = density.bin_edges(b);
                writeln!(w, "{b},{lo},{hi},{},{},{seed}", density.positive[b], density.negative[b])?;
            }
            w.flush()?;
            Ok(EXIT_OK)
        }
    })
}

/// Parses `args`, runs the command, reports errors on stderr and returns
/// the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
