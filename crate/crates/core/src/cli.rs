//! `dualpath` command-line tool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::benchmark::{fit_all, run_comparison, ComparisonFits, ComparisonGrid, RatioTable};
use crate::chain::{build_dual_path, build_single_path, DetectionModel};
use crate::config::{MethodArg, RunConfig};
use crate::entanglement::{witness_report, Verdict, WitnessReport};
use crate::error::{invalid, Error, Result};
use crate::estimate::estimate_moments_blocks;
use crate::gaussian::GaussianState;
use crate::io::{ingest_table, read_shots_file, write_json, write_shots_file};
use crate::math::mix_seed;
use crate::reconstruction::{
    digest_tables, dpm_reconstruct, reference_noise_joint, reference_output_moments, spm_reconstruct, AncillaPrior, Method, NoiseJointTable, Provenance,
    ReconstructionResult,
};
use crate::sampler::sample;
use crate::tables::JointMomentTable;
use crate::C64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_WITHHELD: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Parser, Debug)]
#[command(name = "dualpath", version, about = "Simulate amplified detection chains and reconstruct field moments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample shots from a detection model and write the ground truth.
    Simulate(SimulateArgs),
    /// Reconstruct moments from shot files.
    Reconstruct(ReconstructArgs),
    /// Run the dual-path versus single-path comparison grid.
    Compare(CompareArgs),
    /// Evaluate the entanglement witness on reconstructed output moments.
    Witness(WitnessArgs),
    /// Convert an external table of quadratures into a shot file.
    Ingest(IngestArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// TOML config, or a JSON report to rerun from its embedded config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub single_path: bool,
    /// Also sample a vacuum-input run through the same chain.
    #[arg(long)]
    pub reference: bool,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub shots: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Scaled,
    Full,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reference-state report, or a bare output-moment table.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Multiplies every value, e.g. to convert volts to quadrature units.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// JSON document written by every subcommand.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report<T> {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub result: T,
}

fn report<T>(command: &str, config: &RunConfig, result: T) -> Report<T> {
    Report { command: command.into(), version: env!("CARGO_PKG_VERSION").into(), config: config.clone(), seed: config.sampling.seed, result }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefstateResult {
    /// Normally ordered joint moments of the two beam-splitter outputs.
    pub outputs: JointMomentTable,
    pub noise: NoiseJointTable,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareResult {
    pub table: RatioTable,
    pub fits: ComparisonFits,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.out_dir {
        cfg.output.dir = Some(d.clone());
    }
    Ok(cfg)
}

fn ensure_dir(d: &Path) -> Result<()> {
    std::fs::create_dir_all(d)?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.seed {
        cfg.sampling.seed = s;
    }
    if let Some(n) = args.shots {
        cfg.sampling.shots = n;
    }
    cfg.sampling.single_path |= args.single_path;
    cfg.sampling.reference |= args.reference;
    cfg.validate()?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let build = |s: &GaussianState| if cfg.sampling.single_path { build_single_path(s, &cfg.chain) } else { build_dual_path(s, &cfg.chain) };
    let model = build(&cfg.input.state()?)?;
    let mut written = Vec::new();
    let shots = dir.join("shots.csv");
    write_shots_file(&sample(&model, cfg.sampling.shots, cfg.sampling.seed)?, &shots)?;
    written.push(shots);
    if cfg.sampling.reference {
        let reference = build(&GaussianState::vacuum(1)?)?;
        let path = dir.join("reference.csv");
        write_shots_file(&sample(&reference, cfg.sampling.shots, mix_seed(cfg.sampling.seed, &[1]))?, &path)?;
        written.push(path);
    }
    let path = dir.join("model.json");
    write_json(&report::<DetectionModel>("simulate", &cfg, model), &path)?;
    written.push(path);
    Ok(written)
}

pub fn reconstruct(args: &ReconstructArgs) -> Result<PathBuf> {
    let mut cfg = load_config(&args.common)?;
    let r = &mut cfg.reconstruct;
    r.method = args.method.or(r.method);
    r.shots = args.shots.clone().or(r.shots.take());
    r.reference = args.reference.clone().or(r.reference.take());
    r.order = args.order.unwrap_or(r.order);
    r.blocks = args.blocks.unwrap_or(r.blocks);
    cfg.validate()?;
    let r = &cfg.reconstruct;
    let method = r.method.ok_or_else(|| invalid("no reconstruction method given"))?;
    let shots_path = r.shots.as_ref().ok_or_else(|| invalid("no shot file given"))?;
    let reference_path = match (method, &r.reference) {
        (MethodArg::Dpm, _) => None,
        (_, Some(p)) => Some(p),
        (_, None) => return Err(invalid(format!("method {method:?} needs a reference run"))),
    };
    let gains = cfg.chain.effective_gains();
    let (k, blocks) = (r.order, r.blocks);
    let chains = if method == MethodArg::Spm { 1 } else { 2 };
    let read = |p: &Path| -> Result<JointMomentTable> {
        let batch = read_shots_file(p, gains[..chains].to_vec())?;
        if batch.chains() != chains {
            return Err(invalid(format!("{}: method {method:?} needs {}-column shots", p.display(), 2 * chains)));
        }
        estimate_moments_blocks(&batch, k, blocks)
    };
    let env = read(shots_path)?;
    let reference = reference_path.map(|p| read(p)).transpose()?;
    let dir = cfg.out_dir();
    let out = args.out.clone().unwrap_or_else(|| dir.join(format!("reconstruct-{}.json", format!("{method:?}").to_lowercase())));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    match (method, reference) {
        (MethodArg::Dpm, _) => {
            let res: ReconstructionResult = dpm_reconstruct(&env, &AncillaPrior::thermal(cfg.chain.n_anc), k)?;
            write_json(&report("reconstruct", &cfg, res), &out)?;
        }
        (MethodArg::Spm, Some(reference)) => {
            let alpha = C64::new(r.reference_alpha[0], r.reference_alpha[1]);
            let res = spm_reconstruct(&env, &reference, gains[0], alpha, r.spm, k)?;
            write_json(&report("reconstruct", &cfg, res), &out)?;
        }
        (MethodArg::Refstate, Some(reference)) => {
            let noise = reference_noise_joint(&reference, k)?;
            let outputs = reference_output_moments(&env, &noise, k)?;
            let provenance = Provenance { method: Method::ReferenceState, inputs_digest: digest_tables(Method::ReferenceState, [&env, &reference], &[k as f64]) };
            write_json(&report("reconstruct", &cfg, RefstateResult { outputs, noise, provenance }), &out)?;
        }
        _ => unreachable!("reference presence checked above"),
    }
    Ok(out)
}

pub fn compare(args: &CompareArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.seed {
        cfg.sampling.seed = s;
    }
    let mut grid = match (cfg.compare.take(), args.preset) {
        (Some(g), None) => g,
        (_, preset) => {
            let base = if matches!(preset, Some(Preset::Full)) { ComparisonGrid::full() } else { ComparisonGrid::scaled() };
            ComparisonGrid { chain: cfg.chain.clone(), seed: cfg.sampling.seed, ..base }
        }
    };
    if let Some(s) = args.seed {
        grid.seed = s;
    }
    grid.repeats = args.repeats.unwrap_or(grid.repeats);
    grid.blocks = args.blocks.unwrap_or(grid.blocks);
    cfg.compare = Some(grid.clone());
    cfg.validate()?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let table = run_comparison(&grid, &cfg.input.state()?)?;
    let csv = dir.join("ratios.csv");
    std::fs::write(&csv, table.to_csv())?;
    let fits = fit_all(&table);
    let json = dir.join("compare.json");
    write_json(&report("compare", &cfg, CompareResult { table, fits }), &json)?;
    Ok(vec![csv, json])
}

/// Writes the witness report; the verdict decides the exit status.
pub fn witness(args: &WitnessArgs) -> Result<(PathBuf, WitnessReport)> {
    let text = std::fs::read_to_string(&args.report)?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let embedded = doc.get("config").cloned();
    let table_json = doc.get("result").and_then(|r| r.get("outputs")).cloned().unwrap_or(doc);
    let outputs: JointMomentTable = serde_json::from_value(table_json).map_err(|e| Error::Format(format!("no output-moment table: {e}")))?;
    let mut cfg = match (&args.common.config, embedded) {
        (Some(_), _) | (None, None) => load_config(&args.common)?,
        (None, Some(c)) => {
            let mut c: RunConfig = serde_json::from_value(c).map_err(|e| Error::Format(e.to_string()))?;
            if let Some(d) = &args.common.out_dir {
                c.output.dir = Some(d.clone());
            }
            c
        }
    };
    cfg.witness.sigma = args.sigma.unwrap_or(cfg.witness.sigma);
    cfg.validate()?;
    let w = witness_report(&outputs, cfg.witness.sigma)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.out_dir().join("witness.json"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_json(&report("witness", &cfg, w.clone()), &out)?;
    Ok((out, w))
}

pub fn ingest(args: &IngestArgs) -> Result<PathBuf> {
    if !args.scale.is_finite() || args.scale == 0.0 {
        return Err(invalid("scale must be finite and nonzero"));
    }
    let batch = ingest_table(std::io::BufReader::new(std::fs::File::open(&args.input)?), vec![], args.scale)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_shots_file(&batch, &args.out)?;
    Ok(args.out.clone())
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => print_paths(&simulate(a)?),
        Command::Reconstruct(a) => print_paths(&[reconstruct(a)?]),
        Command::Compare(a) => print_paths(&compare(a)?),
        Command::Ingest(a) => print_paths(&[ingest(a)?]),
        Command::Witness(a) => {
            let (path, w) = witness(a)?;
            print_paths(&[path]);
            if w.verdict == Verdict::Withheld {
                eprintln!("verdict withheld: {}", w.note);
                return Ok(EXIT_WITHHELD);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs; returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
