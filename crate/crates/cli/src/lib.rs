//! Command-line front end for `slnp-core`: loads a dataset, runs the
//! subsample → fit → 1-NN protocol and writes plot-ready CSV/JSON.

mod dataset;
mod output;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use slnp_core::baselines::AffinityParams;
use slnp_core::data_io::subsample_per_class;
use slnp_core::eval::{fit_method, run_experiment, sweep, write_reports_csv, ExperimentReport};
use slnp_core::{ErrorKind, ExperimentConfig, LabeledDataset, Method, SweepAxis, TrainConfig};

pub use dataset::{parse_geometry, DatasetSpec, TOY_DEFAULT_PER_CLASS};
pub use output::{
    emit_similarity_evolution, heat_kernel_path, similarity_evolution_csv, write_atomic,
    EVOLUTION_HEADER, HEAT_KERNEL_HEADER,
};

use output::{into_bytes, Artifact};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable naming the root that relative dataset paths resolve against.
pub const DATA_DIR_ENV: &str = "SLNP_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] slnp_core::Error),
    #[error("config {}: {msg}", .path.display())]
    Config { path: PathBuf, msg: String },
    #[error("writing {}: {source}", .path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => EXIT_USAGE,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            },
            CliError::Output { .. } | CliError::Csv(_) | CliError::Internal(_) => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "slnp",
    version,
    about = "Similarity-learning neighborhood projections: experiments and traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum CommandKind {
    Train,
    Compare,
    Sweep,
    Trace,
    Toy,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit each method once and save the projection models.
    Train(Opts),
    /// Recognition rate of each method over seeded per-class splits.
    Compare(Opts),
    /// Repeat `compare` over values of K, d or n_per_class.
    Sweep(Opts),
    /// Convergence trace and similarity evolution of one SLNP fit.
    Trace(Opts),
    /// Two-feature synthetic problem: data, learned directions and rates.
    Toy(Opts),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        self != Format::Json
    }

    fn json(self) -> bool {
        self != Format::Csv
    }
}

/// Flags shared by every subcommand. The JSON config file uses the same
/// names (snake_case); flags given on the command line win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Opts {
    /// idx:DIR, csv:FILE[:LABEL], manifest:FILE or toy[:N]
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated subset of slnp,pca,lda,lpp,lfda
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// PCA pre-reduction dimension for the non-PCA methods
    #[arg(long)]
    d_pca: Option<usize>,
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Number of seeded splits; seeds run 0..N
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long, value_name = "BOOL")]
    include_self: Option<bool>,
    /// Heat-kernel bandwidth for LPP/LFDA (median squared distance if unset)
    #[arg(long)]
    heat_t: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// JSON file with flat keys mirroring the flags
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    watch_class: Option<usize>,
    #[arg(long)]
    watch_sample: Option<usize>,
    /// Keep a seeded random subset of this many samples
    #[arg(long)]
    subset: Option<usize>,
    /// Area-average images to WxH before anything else
    #[arg(long, value_name = "WxH")]
    resize: Option<String>,
    /// Noise scale of the synthetic toy
    #[arg(long)]
    toy_noise: Option<f64>,
    /// Sweep axis: k, d or n_per_class
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated sweep values
    #[arg(long)]
    values: Option<String>,
    /// Write 0 for every timing column so identical runs give identical bytes
    #[arg(long, action = ArgAction::SetTrue)]
    no_timing: bool,
}

impl Opts {
    /// Fills every unset flag from `file`.
    fn or(self, file: Opts) -> Opts {
        Opts {
            dataset: self.dataset.or(file.dataset),
            methods: self.methods.or(file.methods),
            k: self.k.or(file.k),
            d: self.d.or(file.d),
            d_pca: self.d_pca.or(file.d_pca),
            n_per_class: self.n_per_class.or(file.n_per_class),
            seeds: self.seeds.or(file.seeds),
            max_iters: self.max_iters.or(file.max_iters),
            rel_tol: self.rel_tol.or(file.rel_tol),
            ridge: self.ridge.or(file.ridge),
            include_self: self.include_self.or(file.include_self),
            heat_t: self.heat_t.or(file.heat_t),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            config: self.config,
            watch_class: self.watch_class.or(file.watch_class),
            watch_sample: self.watch_sample.or(file.watch_sample),
            subset: self.subset.or(file.subset),
            resize: self.resize.or(file.resize),
            toy_noise: self.toy_noise.or(file.toy_noise),
            axis: self.axis.or(file.axis),
            values: self.values.or(file.values),
            no_timing: self.no_timing || file.no_timing,
        }
    }
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    command: CommandKind,
    pub dataset: DatasetSpec,
    pub methods: Vec<Method>,
    pub experiment: ExperimentConfig,
    pub n_per_class: Option<usize>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub format: Format,
    pub subset: Option<usize>,
    pub resize: Option<(usize, usize)>,
    pub toy_noise: f64,
    pub sweep: Option<(SweepAxis, Vec<usize>)>,
    pub timing: bool,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_config_file(path: &Path) -> Result<Opts, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: Method = part.parse().map_err(|_| usage(format!("unknown method {part:?}")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(usage("no methods given"));
    }
    Ok(out)
}

fn parse_values(s: &str) -> Result<Vec<usize>, CliError> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| usage(format!("bad sweep value {p:?}"))))
        .collect::<Result<Vec<usize>, _>>()?;
    if values.is_empty() {
        return Err(usage("--values is empty"));
    }
    Ok(values)
}

impl CliConfig {
    fn resolve(command: CommandKind, opts: Opts, data_root: Option<&Path>) -> Result<Self, CliError> {
        let opts = match &opts.config {
            Some(path) => {
                let file = read_config_file(path)?;
                opts.or(file)
            }
            None => opts,
        };
        let is = |c| command == c;

        let dataset = match (&opts.dataset, command) {
            (Some(s), _) => DatasetSpec::parse(s, data_root)?,
            (None, CommandKind::Toy) => DatasetSpec::Toy {
                per_class: TOY_DEFAULT_PER_CLASS,
            },
            (None, _) => return Err(usage("--dataset is required")),
        };
        if is(CommandKind::Toy) && !matches!(dataset, DatasetSpec::Toy { .. }) {
            return Err(usage("toy only runs on the synthetic toy dataset"));
        }

        let methods = match &opts.methods {
            Some(s) => parse_methods(s)?,
            None if is(CommandKind::Compare) || is(CommandKind::Toy) => Method::ALL.to_vec(),
            None => vec![Method::Slnp],
        };
        if is(CommandKind::Trace) && methods != [Method::Slnp] {
            return Err(usage("trace requires --methods slnp"));
        }

        let defaults = TrainConfig::default();
        let watch = match (opts.watch_class, opts.watch_sample) {
            (Some(c), Some(s)) => Some((c, s)),
            (None, None) if is(CommandKind::Trace) => Some((0, 0)),
            (None, None) => None,
            _ => return Err(usage("--watch-class and --watch-sample go together")),
        };
        if watch.is_some() && !is(CommandKind::Trace) {
            return Err(usage("--watch-class/--watch-sample only apply to trace"));
        }
        let train = TrainConfig {
            k: opts.k.unwrap_or(defaults.k),
            d: opts
                .d
                .unwrap_or(if is(CommandKind::Toy) { 1 } else { defaults.d }),
            d_pca: opts.d_pca,
            max_iters: opts.max_iters.unwrap_or(defaults.max_iters),
            rel_tol: opts.rel_tol.unwrap_or(defaults.rel_tol),
            ridge: opts.ridge.unwrap_or(defaults.ridge),
            include_self: opts.include_self.unwrap_or(defaults.include_self),
            seed: 0,
            watch,
        };
        let affinity = AffinityParams {
            heat_t: opts.heat_t,
            ..AffinityParams::default()
        };

        let n_per_class = match opts.n_per_class {
            Some(0) => return Err(usage("--n-per-class must be positive")),
            Some(n) => Some(n),
            None if is(CommandKind::Toy) => Some(10),
            None => None,
        };
        if n_per_class.is_none() && (is(CommandKind::Compare) || is(CommandKind::Sweep)) {
            return Err(usage("--n-per-class is required"));
        }
        let seed_count = opts.seeds.unwrap_or(5);
        if seed_count == 0 {
            return Err(usage("--seeds must be positive"));
        }

        let sweep = if is(CommandKind::Sweep) {
            let axis: SweepAxis = opts
                .axis
                .as_deref()
                .ok_or_else(|| usage("sweep requires --axis"))?
                .parse()
                .map_err(|e: slnp_core::Error| usage(e.to_string()))?;
            let values = parse_values(
                opts.values
                    .as_deref()
                    .ok_or_else(|| usage("sweep requires --values"))?,
            )?;
            Some((axis, values))
        } else {
            if opts.axis.is_some() || opts.values.is_some() {
                return Err(usage("--axis/--values only apply to sweep"));
            }
            None
        };

        let toy_noise = opts.toy_noise.unwrap_or(1.0);
        if !(toy_noise > 0.0) {
            return Err(usage("--toy-noise must be positive"));
        }

        Ok(CliConfig {
            command,
            dataset,
            methods,
            experiment: ExperimentConfig { train, affinity },
            n_per_class,
            seeds: (0..seed_count).collect(),
            out: opts.out.unwrap_or_else(|| PathBuf::from("out")),
            format: opts.format.unwrap_or(Format::Csv),
            subset: opts.subset,
            resize: opts.resize.as_deref().map(parse_geometry).transpose()?,
            toy_noise,
            sweep,
            timing: !opts.no_timing,
        })
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status. Diagnostics go to stderr as a single line.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let data_root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    match run(cli, data_root.as_deref()) {
        Ok(paths) => {
            let mut stdout = std::io::stdout().lock();
            for p in paths {
                let _ = writeln!(stdout, "{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("slnp: error: {msg}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli, data_root: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let (kind, opts) = match cli.command {
        Command::Train(o) => (CommandKind::Train, o),
        Command::Compare(o) => (CommandKind::Compare, o),
        Command::Sweep(o) => (CommandKind::Sweep, o),
        Command::Trace(o) => (CommandKind::Trace, o),
        Command::Toy(o) => (CommandKind::Toy, o),
    };
    let cfg = CliConfig::resolve(kind, opts, data_root)?;
    let ds = dataset::load(&cfg.dataset, cfg.resize, cfg.subset, cfg.toy_noise)?;
    let artifacts = match kind {
        CommandKind::Train => train(&cfg, &ds)?,
        CommandKind::Compare => compare(&cfg, &ds)?,
        CommandKind::Sweep => run_sweep(&cfg, &ds)?,
        CommandKind::Trace => trace(&cfg, &ds)?,
        CommandKind::Toy => toy(&cfg, &ds)?,
    };
    output::write_all(&cfg.out, &artifacts)
}

fn strip_timing(rep: &mut ExperimentReport) {
    rep.seconds = 0.0;
    for t in &mut rep.traces {
        t.records.iter_mut().for_each(|r| r.seconds = 0.0);
    }
}

fn report_artifacts(stem: &str, cfg: &CliConfig, mut reports: Vec<ExperimentReport>) -> Result<Vec<Artifact>, CliError> {
    if !cfg.timing {
        reports.iter_mut().for_each(strip_timing);
    }
    let mut out = Vec::new();
    if cfg.format.csv() {
        let mut buf = Vec::new();
        write_reports_csv(&reports, &mut buf)?;
        out.push(Artifact::new(format!("{stem}.csv"), buf));
    }
    if cfg.format.json() {
        let json = serde_json::to_vec_pretty(&reports).map_err(slnp_core::Error::from)?;
        out.push(Artifact::new(format!("{stem}.json"), json));
    }
    Ok(out)
}

fn n_per_class(cfg: &CliConfig) -> usize {
    cfg.n_per_class.expect("resolved for this command")
}

fn compare(cfg: &CliConfig, ds: &LabeledDataset) -> Result<Vec<Artifact>, CliError> {
    let reports = cfg
        .methods
        .iter()
        .map(|&m| run_experiment(ds, m, &cfg.experiment, n_per_class(cfg), &cfg.seeds))
        .collect::<Result<Vec<_>, _>>()?;
    report_artifacts("report", cfg, reports)
}

fn run_sweep(cfg: &CliConfig, ds: &LabeledDataset) -> Result<Vec<Artifact>, CliError> {
    let (axis, values) = cfg.sweep.as_ref().expect("resolved for sweep");
    let mut reports = Vec::new();
    for &m in &cfg.methods {
        reports.extend(sweep(ds, m, &cfg.experiment, n_per_class(cfg), *axis, values, &cfg.seeds)?);
    }
    report_artifacts("sweep", cfg, reports)
}

/// Training set of the first seed when `--n-per-class` is set, else everything.
fn training_set(cfg: &CliConfig, ds: &LabeledDataset) -> Result<LabeledDataset, CliError> {
    Ok(match cfg.n_per_class {
        Some(n) => subsample_per_class(ds, n, cfg.seeds[0])?.train,
        None => ds.clone(),
    })
}

fn trace_csv(trace: &slnp_core::TrainTrace, timing: bool) -> Result<Vec<u8>, CliError> {
    let mut t = trace.clone();
    if !timing {
        t.records.iter_mut().for_each(|r| r.seconds = 0.0);
    }
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

fn train(cfg: &CliConfig, ds: &LabeledDataset) -> Result<Vec<Artifact>, CliError> {
    let train = training_set(cfg, ds)?;
    let mut out = Vec::new();
    for &m in &cfg.methods {
        let (model, trace) = fit_method(&train, m, &cfg.experiment)?;
        let json = serde_json::to_vec_pretty(&model).map_err(slnp_core::Error::from)?;
        out.push(Artifact::new(format!("model_{m}.json"), json));
        if let Some(t) = trace {
            out.push(Artifact::new(format!("trace_{m}.csv"), trace_csv(&t, cfg.timing)?));
        }
    }
    Ok(out)
}

fn trace(cfg: &CliConfig, ds: &LabeledDataset) -> Result<Vec<Artifact>, CliError> {
    let train = training_set(cfg, ds)?;
    let (_, trace) = fit_method(&train, Method::Slnp, &cfg.experiment)?;
    let trace = trace.ok_or_else(|| CliError::Internal("SLNP fit returned no trace".into()))?;
    let mut out = Vec::new();
    if cfg.format.csv() {
        let (evo, heat) = similarity_evolution_csv(&trace)?;
        out.push(Artifact::new("trace.csv", trace_csv(&trace, cfg.timing)?));
        out.push(Artifact::new("similarity_evolution.csv", evo));
        out.push(Artifact::new("similarity_evolution_heat_kernel.csv", heat));
    }
    if cfg.format.json() {
        let mut t = trace;
        if !cfg.timing {
            t.records.iter_mut().for_each(|r| r.seconds = 0.0);
        }
        out.push(Artifact::new("trace.json", t.to_json()?.into_bytes()));
    }
    Ok(out)
}

fn toy(cfg: &CliConfig, ds: &LabeledDataset) -> Result<Vec<Artifact>, CliError> {
    let mut data = csv::Writer::from_writer(Vec::new());
    data.write_record(["x1", "x2", "label"])?;
    for (col, label) in ds.features().column_iter().zip(ds.labels()) {
        data.write_record([col[0].to_string(), col[1].to_string(), label.to_string()])?;
    }
    // first learned direction of each method, fitted on all samples
    let mut dirs = csv::Writer::from_writer(Vec::new());
    dirs.write_record(["method", "w1", "w2"])?;
    for &m in &cfg.methods {
        let (model, _) = fit_method(ds, m, &cfg.experiment)?;
        let w = model.composed.column(0);
        let w = w / w.norm();
        // fix the sign so the second component is non-negative
        let s = if w[1] < 0.0 { -1.0 } else { 1.0 };
        dirs.write_record([m.to_string(), (s * w[0]).to_string(), (s * w[1]).to_string()])?;
    }
    let reports = cfg
        .methods
        .iter()
        .map(|&m| run_experiment(ds, m, &cfg.experiment, n_per_class(cfg), &cfg.seeds))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = vec![
        Artifact::new("toy.csv", into_bytes(data)?),
        Artifact::new("toy_directions.csv", into_bytes(dirs)?),
    ];
    out.extend(report_artifacts("report", cfg, reports)?);
    Ok(out)
}
