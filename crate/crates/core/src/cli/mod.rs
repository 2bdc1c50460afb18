//! Command-line front end: dataset generation, training, reference solves,
//! evaluation against references, and figure export.
//!
//! Every command ends with one `key=value` status line on stdout. Exit code
//! 0 is success, 1 a usage or input error, 2 a numeric failure.

mod export;
mod manifest;
mod metrics;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use manifest::{git_blob_sha256, ArtifactEntry, RunManifest};
pub use metrics::{evaluate_fields, predict_field, Metrics, METRIC_HEADER};

use manifest::{unix_now, Outputs};

use crate::kinetics::VelocityQuadrature;
use crate::networks::{read_checkpoint, write_checkpoint, NetworkError, OperatorTriple};
use crate::refsolver::{
    highfield_limit_solve, kinetic_integrate, read_field_csv, write_field_csv, KineticSetup, LimitSetup, PhaseGrid,
    RefError, SolutionField, TimeStepping,
};
use crate::training::{
    sample_dataset, train_with, Dataset, ExperimentConfig, LogRecord, TrainError, TrainHistory, TrainObserver,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite(_) | TrainError::Diverged { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<RefError> for CliError {
    fn from(e: RefError) -> Self {
        match e {
            RefError::Stability { .. } | RefError::NonConvergence { .. } | RefError::Singular(_) => {
                CliError::Numeric(e.to_string())
            }
            RefError::Io(e) => CliError::Io(e),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "apmionet", version, about = "Asymptotic-preserving neural operators for high-field kinetic equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    /// ε-resolved kinetic integrator.
    Kinetic,
    /// High-field limit equation.
    Limit,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the train/test input couples.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the operator triple.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train the two-network baseline loss instead of the AP loss.
        #[arg(long)]
        baseline_pi: bool,
    },
    /// Solve for reference fields of test couples.
    Reference {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Solver::Kinetic)]
        solver: Solver,
        /// First test couple.
        #[arg(long, default_value_t = 0)]
        couple: usize,
        /// Number of consecutive test couples.
        #[arg(long, default_value_t = 1)]
        couples: usize,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        nv: usize,
        #[arg(long, default_value_t = 50)]
        snapshots: usize,
    },
    /// Compare a trained model (or a prediction field) with references.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Reference CSV, or a directory of `reference_<i>.csv`.
        #[arg(long)]
        reference: PathBuf,
        /// Model checkpoint evaluated on the reference grid.
        #[arg(long, conflicts_with = "prediction", required_unless_present = "prediction")]
        checkpoint: Option<PathBuf>,
        /// Prediction CSV (or directory) with the layout of the reference.
        #[arg(long)]
        prediction: Option<PathBuf>,
        /// Test couple of a single reference file.
        #[arg(long, default_value_t = 0)]
        couple: usize,
        /// The checkpoint was trained with the baseline loss; its density is `⟨F⟩`.
        #[arg(long)]
        baseline_pi: bool,
    },
    /// Write figure CSVs and PNGs for a field or a trained model.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        field: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        couple: usize,
        #[arg(long, default_value_t = 128)]
        nx: usize,
        #[arg(long, default_value_t = 50)]
        snapshots: usize,
        /// The checkpoint was trained with the baseline loss; its density is `⟨F⟩`.
        #[arg(long)]
        baseline_pi: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Train { .. } => "train",
            Command::Reference { .. } => "reference",
            Command::Evaluate { .. } => "evaluate",
            Command::Export { .. } => "export",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Generate { common }
            | Command::Train { common, .. }
            | Command::Reference { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Export { common, .. } => common,
        }
    }
}

/// Loaded configuration plus the bookkeeping every command shares.
struct Context {
    config: ExperimentConfig,
    manifest: RunManifest,
    seed: u64,
}

impl Context {
    fn new(command: &'static str, common: &Common) -> Result<Self, CliError> {
        let bytes = fs::read(&common.config)
            .map_err(|e| CliError::Usage(format!("{}: {e}", common.config.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Usage(format!("{}: not UTF-8", common.config.display())))?;
        let mut config = ExperimentConfig::from_toml_str(&text)?;
        config.runtime.seed = common.seed;
        Ok(Context {
            config,
            seed: common.seed,
            manifest: RunManifest {
                command: command.into(),
                config_path: common.config.display().to_string(),
                config_hash: git_blob_sha256(&bytes),
                seed: common.seed,
                output_dir: String::new(),
                started_unix: unix_now(),
                finished_unix: 0.0,
                artifacts: Vec::new(),
            },
        })
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        Ok(sample_dataset(&self.config, self.seed)?)
    }

    fn grid(&self, nx: usize, nv: usize) -> Result<PhaseGrid, CliError> {
        let d = &self.config.domain;
        Ok(PhaseGrid::new(nx, nv, (d.x_min, d.x_max), (d.v_min, d.v_max))?)
    }

    /// Velocity rule for `ρ = ⟨F⟩` when evaluating a baseline model.
    fn moment_density(&self) -> Result<Option<VelocityQuadrature>, CliError> {
        if !self.config.runtime.baseline_pi {
            return Ok(None);
        }
        Ok(Some(self.config.collision_spec()?.quad))
    }

    fn epsilon(&self) -> f64 {
        self.config.problem.epsilon.nominal()
    }
}

/// What a successful command reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub command: &'static str,
    pub manifest: RunManifest,
    pub metrics: Option<Metrics>,
}

struct Progress<'a> {
    out: &'a mut Outputs,
}

impl TrainObserver for Progress<'_> {
    fn logged(&mut self, r: &LogRecord) -> Result<(), TrainError> {
        eprintln!("{}", TrainHistory::csv_row(r));
        Ok(())
    }

    fn checkpoint(&mut self, iter: u64, triple: &OperatorTriple) -> Result<(), TrainError> {
        let io = |e: CliError| TrainError::Config(e.to_string());
        let w = self.out.create(&format!("checkpoint_{iter:07}.bin")).map_err(io)?;
        write_checkpoint(triple, w)?;
        Ok(())
    }
}

fn load_checkpoint(path: &Path) -> Result<OperatorTriple, CliError> {
    let f = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(read_checkpoint(BufReader::new(f))?)
}

fn load_field(path: &Path, ctx: &Context) -> Result<SolutionField, CliError> {
    let f = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(read_field_csv(BufReader::new(f), ctx.config.problem.id, ctx.epsilon())?)
}

fn reference_name(i: usize) -> String {
    format!("reference_{i}.csv")
}

/// `(couple index, path)` of every reference file in `dir`, by index.
fn reference_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(i) = name.strip_prefix("reference_").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(i) = i.parse() {
                found.push((i, p));
            }
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(CliError::Usage(format!("no reference_<i>.csv in {}", dir.display())));
    }
    Ok(found)
}

fn test_couple(ds: &Dataset, i: usize) -> Result<usize, CliError> {
    if i < ds.test.len() {
        Ok(i)
    } else {
        Err(CliError::Usage(format!("test couple {i} out of range ({} test couples)", ds.test.len())))
    }
}

fn cmd_generate(ctx: &Context, out: &mut Outputs) -> Result<Option<Metrics>, CliError> {
    let ds = ctx.dataset()?;
    let json = serde_json::json!({ "train": ds.train.couples, "test": ds.test.couples });
    out.write("dataset.json", serde_json::to_string(&json).expect("dataset serializes").as_bytes())?;
    let mut w = out.create("couples.csv")?;
    writeln!(w, "split,index,h,alpha")?;
    for (name, split) in [("train", &ds.train), ("test", &ds.test)] {
        for (i, c) in split.couples.iter().enumerate() {
            writeln!(w, "{name},{i},{:e},{:e}", c.h, c.alpha)?;
        }
    }
    w.flush()?;
    Ok(None)
}

fn cmd_train(ctx: &Context, out: &mut Outputs) -> Result<Option<Metrics>, CliError> {
    let ds = ctx.dataset()?;
    let (triple, history) = train_with(&ctx.config, &ds, &mut Progress { out: &mut *out })?;
    write_checkpoint(&triple, out.create("model.bin")?)?;
    history.write_csv(out.create("train_log.csv")?)?;
    if !history.validation.is_empty() {
        let mut w = out.create("validation.csv")?;
        writeln!(w, "iter,loss")?;
        for (i, l) in &history.validation {
            writeln!(w, "{i},{l:e}")?;
        }
        w.flush()?;
    }
    Ok(None)
}

fn solve_reference(ctx: &Context, init: &crate::residuals::InitialData, solver: Solver, grid: &PhaseGrid, snapshots: usize) -> Result<SolutionField, CliError> {
    let p = &ctx.config.problem;
    let stepping = TimeStepping { t_end: ctx.config.domain.t_max, dt: None, snapshots, keep_f: false };
    Ok(match solver {
        Solver::Kinetic => {
            let setup = KineticSetup { init: init.clone(), collision: p.collision, cross_section: p.cross_section, eps: p.epsilon };
            kinetic_integrate(&setup, grid, &stepping)?
        }
        Solver::Limit => {
            let setup = LimitSetup {
                init: init.clone(),
                collision: p.collision,
                cross_section: p.cross_section,
                nv: grid.nv,
                table_e: 201,
                table_rho: 17,
            };
            highfield_limit_solve(&setup, grid, &stepping)?
        }
    })
}

fn cmd_reference(
    ctx: &Context,
    solver: Solver,
    (first, count): (usize, usize),
    (nx, nv, snapshots): (usize, usize, usize),
    out: &mut Outputs,
) -> Result<Option<Metrics>, CliError> {
    let ds = ctx.dataset()?;
    let grid = ctx.grid(nx, nv)?;
    for i in first..first + count.max(1) {
        let i = test_couple(&ds, i)?;
        let field = solve_reference(ctx, &ds.test.initial[i], solver, &grid, snapshots)?;
        write_field_csv(&field, out.create(&reference_name(i))?)?;
    }
    Ok(None)
}

fn cmd_evaluate(
    ctx: &Context,
    reference: &Path,
    source: Result<&Path, &Path>,
    couple: usize,
    out: &mut Outputs,
) -> Result<Option<Metrics>, CliError> {
    let refs: Vec<(usize, PathBuf)> =
        if reference.is_dir() { reference_files(reference)? } else { vec![(couple, reference.to_path_buf())] };
    let mut pairs = Vec::new();
    match source {
        Ok(ckpt) => {
            let triple = load_checkpoint(ckpt)?;
            let ds = ctx.dataset()?;
            for (i, path) in &refs {
                let r = load_field(path, ctx)?;
                let i = test_couple(&ds, *i)?;
                let p = predict_field(
                    &triple,
                    &ds.test.couples[i],
                    r.problem,
                    r.epsilon,
                    (&r.times, &r.x),
                    ctx.moment_density()?.as_ref(),
                )?;
                pairs.push((p, r));
            }
        }
        Err(pred) => {
            for (_, path) in &refs {
                let r = load_field(path, ctx)?;
                let p = if pred.is_dir() { pred.join(path.file_name().unwrap_or_default()) } else { pred.to_path_buf() };
                pairs.push((load_field(&p, ctx)?, r));
            }
        }
    }
    let m = evaluate_fields(&pairs)?;
    m.write_csv(out.create("metrics.csv")?, ctx.config.problem.id, ctx.epsilon())?;
    for (name, v) in m.rows() {
        println!("{name},{v:e},{},{:e},{}", ctx.config.problem.id, ctx.epsilon(), m.n_test);
    }
    Ok(Some(m))
}

fn cmd_export(
    ctx: &Context,
    source: Result<&Path, &Path>,
    couple: usize,
    (nx, snapshots): (usize, usize),
    out: &mut Outputs,
) -> Result<Option<Metrics>, CliError> {
    let field = match source {
        Ok(field) => load_field(field, ctx)?,
        Err(ckpt) => {
            let triple = load_checkpoint(ckpt)?;
            let ds = ctx.dataset()?;
            let i = test_couple(&ds, couple)?;
            let grid = ctx.grid(nx, 8)?;
            let t_max = ctx.config.domain.t_max;
            let n = snapshots.max(1);
            let times: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
            let quad = ctx.moment_density()?;
            let x = grid.x();
            predict_field(&triple, &ds.test.couples[i], ctx.config.problem.id, ctx.epsilon(), (&times, &x), quad.as_ref())?
        }
    };
    export::export_figures(&field, out)?;
    Ok(None)
}

/// Run a parsed command.
pub fn run(cli: Cli) -> Result<Summary, CliError> {
    let name = cli.command.name();
    let common = cli.command.common().clone();
    let mut ctx = Context::new(name, &common)?;
    if let Command::Train { baseline_pi: true, .. }
    | Command::Evaluate { baseline_pi: true, .. }
    | Command::Export { baseline_pi: true, .. } = cli.command
    {
        ctx.config.runtime.baseline_pi = true;
    }
    let mut out = Outputs::open(&common.out)?;
    let metrics = match cli.command {
        Command::Generate { .. } => cmd_generate(&ctx, &mut out),
        Command::Train { .. } => cmd_train(&ctx, &mut out),
        Command::Reference { solver, couple, couples, nx, nv, snapshots, .. } => {
            cmd_reference(&ctx, solver, (couple, couples), (nx, nv, snapshots), &mut out)
        }
        Command::Evaluate { reference, checkpoint, prediction, couple, .. } => {
            let source = match (&checkpoint, &prediction) {
                (Some(c), _) => Ok(c.as_path()),
                (None, Some(p)) => Err(p.as_path()),
                (None, None) => return Err(CliError::Usage("--checkpoint or --prediction is required".into())),
            };
            cmd_evaluate(&ctx, &reference, source, couple, &mut out)
        }
        Command::Export { field, checkpoint, couple, nx, snapshots, .. } => {
            let source = match (&field, &checkpoint) {
                (Some(f), _) => Ok(f.as_path()),
                (None, Some(c)) => Err(c.as_path()),
                (None, None) => return Err(CliError::Usage("--field or --checkpoint is required".into())),
            };
            cmd_export(&ctx, source, couple, (nx, snapshots), &mut out)
        }
    }?;
    let manifest = out.finish(ctx.manifest)?;
    Ok(Summary { command: name, manifest, metrics })
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse `args`, run, print the status line to `stdout` and return the
/// process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            eprint!("{e}");
            let _ = writeln!(stdout, "status=error code=1 command=none cause=\"{}\"", one_line(&e.kind().to_string()));
            return 1;
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(s) => {
            let _ = writeln!(
                stdout,
                "status=ok code=0 command={name} artifacts={} out={}",
                s.manifest.artifacts.len() + 1,
                s.manifest.output_dir
            );
            0
        }
        Err(e) => {
            let cause = one_line(&e.to_string()).replace('"', "'");
            eprintln!("error: {cause}");
            let _ = writeln!(stdout, "status=error code={} command={name} cause=\"{cause}\"", e.exit_code());
            e.exit_code()
        }
    }
}
