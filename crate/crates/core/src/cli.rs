//! Command-line front end. Every command reads and writes files only.

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::decomposition::InitScheme;
use crate::error::Error;
use crate::extraction::{select_salient, Selection};
use crate::interactions::{matching_error, matching_precision, InteractionSpectrum, ValueTable};
use crate::io::{
    build_report, read_decomposition, read_primitive_set, read_spectrum, read_value_table_files,
    to_json_bytes, write_file, write_mask_spec, write_report, DecompositionFile, PrimitiveSetFile,
    ReportFormat, ReportInputs, SpectrumFile, ValueTableFile,
};
use crate::objective::{LossConfig, LossMode, DEFAULT_ALPHA};
use crate::optimizer::{
    optimize, reinit_stability_experiment, Method, OptimizerConfig, DEFAULT_ITERATIONS,
};
use crate::synth::{eval_formula, noise_variance_experiment, plant_instance, toy_formula, PlantingParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_OPTIMIZATION: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

/// Full-Ω reconstruction tolerance used by `verify`.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

pub const OUT_DIR_ENV: &str = "INTERPRIM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "interprim", version, about = "Sparse, shared AND-OR interaction primitives")]
pub struct Cli {
    /// TOML file whose keys override the corresponding flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the canonical mask enumeration for n variables.
    GenMasks(GenMasksArgs),
    /// Write synthetic value tables (toy formula or planted pair).
    Synth(SynthArgs),
    /// Learn the decomposition and extract primitives from one or more tables.
    Extract(ExtractArgs),
    /// Plain AND (Harsanyi) spectrum of one table, no optimization.
    Harsanyi(HarsanyiArgs),
    /// Check a spectrum and decomposition against the table they came from.
    Verify(VerifyArgs),
    /// Generalization metrics from spectrum files.
    Metrics(MetricsArgs),
    /// Re-initialization stability of the extracted primitives.
    Stability(StabilityArgs),
    /// Variance of effects under Gaussian output noise.
    Variance(VarianceArgs),
}

#[derive(Debug, Args)]
pub struct GenMasksArgs {
    #[arg(long)]
    pub n: usize,
    /// Comma-separated variable labels.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Toy,
    Planted,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "planted")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct OptimizerArgs {
    #[arg(long, default_value = "joint_full")]
    pub mode: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    /// Step size (subgradient) or primal scale (primal-dual); derived from the tables when omitted.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "primal_dual")]
    pub method: String,
    /// `zeros`, `gaussian:<sigma>` or `uniform:<low>,<high>`.
    #[arg(long, default_value = "zeros")]
    pub init: String,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(required = true)]
    pub tables: Vec<PathBuf>,
    #[command(flatten)]
    pub opt: OptimizerArgs,
    /// `threshold`, `threshold:<fraction>`, `topk:<k>` or `topk-per-kind:<k>`.
    #[arg(long, default_value = "threshold")]
    pub select: String,
    /// k values for matching precision.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20])]
    pub precision_k: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarsanyiArgs {
    pub table: PathBuf,
    #[arg(long, default_value = "threshold")]
    pub select: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub spectrum: PathBuf,
    /// Decomposition holding ε; without it ε is taken as zero.
    #[arg(long)]
    pub decomposition: Option<PathBuf>,
    /// Primitive set to report the truncated matching error for.
    #[arg(long)]
    pub omega: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20])]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(required = true)]
    pub spectra: Vec<PathBuf>,
    #[arg(long, default_value = "threshold")]
    pub select: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(required = true)]
    pub tables: Vec<PathBuf>,
    #[command(flatten)]
    pub opt: OptimizerArgs,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// CSV output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub alpha: Option<f64>,
    pub iters: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub init: Option<String>,
    pub select: Option<String>,
    pub log_every: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss { .. } => EXIT_OPTIMIZATION,
            _ => EXIT_INPUT,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

impl OptimizerArgs {
    fn apply(&mut self, cfg: &FileConfig) {
        if let Some(v) = &cfg.mode {
            self.mode = v.clone();
        }
        if let Some(v) = cfg.alpha {
            self.alpha = v;
        }
        if let Some(v) = cfg.iters {
            self.iters = v;
        }
        if cfg.lr.is_some() {
            self.lr = cfg.lr;
        }
        if let Some(v) = cfg.seed {
            self.seed = v;
        }
        if let Some(v) = &cfg.method {
            self.method = v.clone();
        }
        if let Some(v) = &cfg.init {
            self.init = v.clone();
        }
    }

    fn resolve(&self, log_every: usize) -> CliResult<(LossConfig, OptimizerConfig)> {
        let mode: LossMode = self.mode.parse()?;
        let loss = LossConfig::new(mode, self.alpha)?;
        let opt = OptimizerConfig {
            method: self.method.parse::<Method>()?,
            iterations: self.iters,
            learning_rate: self.lr,
            seed: self.seed,
            init: self.init.parse::<InitScheme>()?,
            log_every,
            ..OptimizerConfig::default()
        };
        opt.validate()?;
        Ok((loss, opt))
    }
}

fn header(command: &str, loss: &LossConfig, opt: &OptimizerConfig, extra: &str) -> String {
    let lr = opt
        .learning_rate
        .map_or_else(|| "auto".to_string(), |v| v.to_string());
    format!(
        "interprim {command}: mode={} alpha={} iters={} method={} lr={lr} seed={} init={}{extra}",
        loss.mode, loss.alpha, opt.iterations, opt.method, opt.seed, opt.init
    )
}

fn out_dir(flag: Option<PathBuf>, cfg: &FileConfig) -> PathBuf {
    cfg.out
        .clone()
        .or(flag)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_tables(paths: &[PathBuf]) -> CliResult<(Vec<ValueTableFile>, Vec<ValueTable>)> {
    let files = read_value_table_files(paths)?;
    let tables = files
        .iter()
        .map(ValueTableFile::to_table)
        .collect::<crate::Result<Vec<_>>>()?;
    Ok((files, tables))
}

fn select_all(spectra: &[InteractionSpectrum], rule: Selection) -> CliResult<Vec<crate::extraction::PrimitiveSet>> {
    Ok(spectra
        .iter()
        .map(|s| select_salient(s, rule))
        .collect::<crate::Result<Vec<_>>>()?)
}

fn write_report_files(dir: &Path, report: &crate::io::ExtractionReport) -> CliResult<()> {
    for (name, format) in [
        ("report.json", ReportFormat::Json),
        ("sparsity.csv", ReportFormat::SparsityCsv),
        ("order_profile.csv", ReportFormat::OrderProfileCsv),
        ("metrics.csv", ReportFormat::MetricsCsv),
    ] {
        write_file(dir.join(name), &write_report(report, format))?;
    }
    Ok(())
}

/// Parse, run, and map the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenMasks(a) => gen_masks(a),
        Command::Synth(a) => synth(a, &cfg),
        Command::Extract(a) => extract(a, &cfg),
        Command::Harsanyi(a) => harsanyi(a, &cfg),
        Command::Verify(a) => verify(a),
        Command::Metrics(a) => metrics(a, &cfg),
        Command::Stability(a) => stability(a, &cfg),
        Command::Variance(a) => variance(a, &cfg),
    }
}

fn gen_masks(a: GenMasksArgs) -> CliResult<()> {
    let bytes = write_mask_spec(a.n, &a.labels)?.to_bytes();
    match a.out {
        Some(path) => write_file(path, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn synth(a: SynthArgs, cfg: &FileConfig) -> CliResult<()> {
    let dir = out_dir(a.out, cfg);
    match a.kind {
        SynthKind::Toy => {
            let n = a.n.unwrap_or(5);
            let mut table = eval_formula(&toy_formula(), n)?;
            table.model_id = "toy".into();
            let file = ValueTableFile::from_table(&table, "toy", Vec::new());
            let path = dir.join("toy.json");
            write_file(&path, &file.to_bytes())?;
            println!("{}", path.display());
        }
        SynthKind::Planted => {
            let params = PlantingParams {
                n: a.n.unwrap_or(PlantingParams::default().n),
                ..PlantingParams::default()
            };
            let instance = plant_instance(&params, a.seed)?;
            for table in &instance.tables {
                let file = ValueTableFile::from_table(table, format!("planted-{}", a.seed), Vec::new());
                let path = dir.join(format!("{}.json", table.model_id));
                write_file(&path, &file.to_bytes())?;
                println!("{}", path.display());
            }
            write_file(dir.join("planted.json"), &to_json_bytes(&instance))?;
        }
    }
    Ok(())
}

fn extract(mut a: ExtractArgs, cfg: &FileConfig) -> CliResult<()> {
    a.opt.apply(cfg);
    if let Some(v) = &cfg.select {
        a.select = v.clone();
    }
    if let Some(v) = cfg.log_every {
        a.log_every = v;
    }
    let (loss, opt) = a.opt.resolve(a.log_every)?;
    let rule: Selection = a.select.parse()?;
    let dir = out_dir(a.out, cfg);
    if loss.mode.is_joint() && a.tables.len() < 2 {
        return Err(input_error(format!("mode {} needs at least two tables", loss.mode)));
    }
    let (_, tables) = load_tables(&a.tables)?;
    eprintln!("{}", header("extract", &loss, &opt, &format!(" select={rule} tables={}", tables.len())));

    let ex = optimize(&tables, &loss, &opt)?;
    let sets = select_all(&ex.spectra, rule)?;
    for (i, (spectrum, set)) in ex.spectra.iter().zip(&sets).enumerate() {
        let idx = i + 1;
        write_file(
            dir.join(format!("spectrum_{idx}.json")),
            &to_json_bytes(&SpectrumFile::from_spectrum(spectrum)),
        )?;
        write_file(
            dir.join(format!("primitives_{idx}.json")),
            &to_json_bytes(&PrimitiveSetFile {
                format_version: crate::io::FORMAT_VERSION,
                primitives: set.clone(),
            }),
        )?;
    }
    write_file(
        dir.join("decomposition.json"),
        &to_json_bytes(&DecompositionFile {
            format_version: crate::io::FORMAT_VERSION,
            model_ids: tables.iter().map(|t| t.model_id.clone()).collect(),
            decomposition: ex.decomposition.clone(),
        }),
    )?;
    let mut trace = String::new();
    for r in &ex.trace.records {
        let line = serde_json::to_string(r).map_err(Error::from)?;
        let _ = writeln!(trace, "{line}");
    }
    write_file(dir.join("trace.jsonl"), trace.as_bytes())?;

    let report = build_report(&ReportInputs {
        tables: &tables,
        spectra: &ex.spectra,
        sets: &sets,
        loss: Some(loss),
        trace: &ex.trace.records,
        precision_ks: &a.precision_k,
    })?;
    write_report_files(&dir, &report)?;

    println!(
        "loss {:.6} -> {:.6}",
        ex.initial_loss.total, ex.final_loss.total
    );
    for (i, id) in report.model_ids.iter().enumerate() {
        println!(
            "{id}: {} primitives, s_and {:.4}, s_or {:.4}",
            sets[i].len(),
            report.s_and[i],
            report.s_or[i]
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn harsanyi(a: HarsanyiArgs, cfg: &FileConfig) -> CliResult<()> {
    let select = cfg.select.clone().unwrap_or(a.select);
    let rule: Selection = select.parse()?;
    let dir = out_dir(a.out, cfg);
    let (_, tables) = load_tables(std::slice::from_ref(&a.table))?;
    let spectrum = InteractionSpectrum::harsanyi(&tables[0])?;
    let set = select_salient(&spectrum, rule)?;
    write_file(
        dir.join("spectrum_1.json"),
        &to_json_bytes(&SpectrumFile::from_spectrum(&spectrum)),
    )?;
    write_file(
        dir.join("primitives_1.json"),
        &to_json_bytes(&PrimitiveSetFile {
            format_version: crate::io::FORMAT_VERSION,
            primitives: set.clone(),
        }),
    )?;
    for (s, v) in &set.and_primitives {
        println!("AND {s} {v}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult<()> {
    let (_, tables) = load_tables(std::slice::from_ref(&a.table))?;
    let table = &tables[0];
    let spectrum = read_spectrum(&a.spectrum)?;
    if spectrum.n() != table.n() {
        return Err(input_error(format!(
            "spectrum n={} but table n={}",
            spectrum.n(),
            table.n()
        )));
    }
    let mut reconstructed = spectrum.reconstruct();
    if let Some(path) = &a.decomposition {
        let file = read_decomposition(path)?;
        let model = file
            .model_ids
            .iter()
            .position(|id| *id == spectrum.model_id)
            .ok_or_else(|| {
                input_error(format!(
                    "{}: no model {:?} in decomposition",
                    path.display(),
                    spectrum.model_id
                ))
            })?;
        if file.decomposition.n != table.n() {
            return Err(input_error("decomposition n differs from table n"));
        }
        reconstructed.add_scaled(1.0, &file.decomposition.epsilon[model]);
    }
    let mut max_err = 0.0f64;
    let mut worst = 0usize;
    let mut sum = 0.0;
    for (k, (v, r)) in table.values.values().iter().zip(reconstructed.values()).enumerate() {
        let e = (v - r).abs();
        sum += e;
        if e > max_err || e.is_nan() {
            max_err = e;
            worst = k;
        }
    }
    println!(
        "full matching: max error {max_err:e} at mask {worst}, mean {:e}",
        sum / table.values.len() as f64
    );
    if let Some(path) = &a.omega {
        let set = read_primitive_set(path)?;
        let err = matching_error(table, &spectrum, &set.and_subsets(), &set.or_subsets())?;
        println!(
            "truncated matching ({} primitives): max {:e}, mean {:e}",
            set.len(),
            err.max_abs(),
            err.l1_norm() / err.len() as f64
        );
    }
    let pool = 2 * (table.values.len() - 1);
    for &k in a.k.iter().filter(|&&k| k >= 1 && k <= pool) {
        println!("precision@{k}: {:.6}", matching_precision(table, &spectrum, k)?);
    }
    if !(max_err <= VERIFY_TOLERANCE) {
        return Err(CliError {
            code: EXIT_VERIFICATION,
            message: format!("max matching error {max_err:e} exceeds {VERIFY_TOLERANCE:e}"),
        });
    }
    println!("ok");
    Ok(())
}

fn metrics(a: MetricsArgs, cfg: &FileConfig) -> CliResult<()> {
    let select = cfg.select.clone().unwrap_or(a.select);
    let rule: Selection = select.parse()?;
    let dir = out_dir(a.out, cfg);
    let spectra = a
        .spectra
        .iter()
        .map(read_spectrum)
        .collect::<crate::Result<Vec<_>>>()?;
    let sets = select_all(&spectra, rule)?;
    let gen = crate::extraction::generalization_report(&spectra, &sets)?;
    let report = crate::io::ExtractionReport {
        selection: Some(rule),
        model_ids: gen.model_ids,
        s_and: gen.s_and,
        s_or: gen.s_or,
        shared_and: gen.shared_and,
        shared_or: gen.shared_or,
        order_profiles: gen.order_profiles,
        sparsity: crate::io::sparsity_curve(&spectra),
        ..Default::default()
    };
    write_report_files(&dir, &report)?;
    for (i, id) in report.model_ids.iter().enumerate() {
        println!("{id}: s_and {:.4}, s_or {:.4}", report.s_and[i], report.s_or[i]);
    }
    Ok(())
}

fn csv_output(path: Option<PathBuf>, cfg: &FileConfig, default_name: &str, bytes: &[u8]) -> CliResult<()> {
    let path = match path {
        Some(p) => cfg.out.as_ref().map_or(p.clone(), |d| d.join(p.file_name().unwrap_or_default())),
        None => out_dir(None, cfg).join(default_name),
    };
    write_file(&path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn stability(mut a: StabilityArgs, cfg: &FileConfig) -> CliResult<()> {
    a.opt.apply(cfg);
    let (loss, opt) = a.opt.resolve(opt_log_every(cfg))?;
    if loss.mode.is_joint() && a.tables.len() < 2 {
        return Err(input_error(format!("mode {} needs at least two tables", loss.mode)));
    }
    let (_, tables) = load_tables(&a.tables)?;
    eprintln!(
        "{}",
        header("stability", &loss, &opt, &format!(" trials={} k={}", a.trials, a.k))
    );
    let report = reinit_stability_experiment(&tables, &loss, &opt, a.trials, a.k)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial_a", "trial_b", "model", "s_and", "s_or", "merged"])
        .map_err(Error::from)?;
    for p in &report.pairs {
        w.write_record([
            p.trial_a.to_string(),
            p.trial_b.to_string(),
            p.model_id.clone(),
            p.s_and.to_string(),
            p.s_or.to_string(),
            p.merged.to_string(),
        ])
        .map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| input_error(e.to_string()))?;
    println!(
        "mean overlap: s_and {:.4}, s_or {:.4}, merged {:.4}",
        report.mean_s_and, report.mean_s_or, report.mean_merged
    );
    csv_output(a.out, cfg, "stability.csv", &bytes)
}

fn opt_log_every(cfg: &FileConfig) -> usize {
    cfg.log_every.unwrap_or(100)
}

fn variance(a: VarianceArgs, cfg: &FileConfig) -> CliResult<()> {
    let seed = cfg.seed.unwrap_or(a.seed);
    eprintln!(
        "interprim variance: n={} sigma={} trials={} seed={seed}",
        a.n, a.sigma, a.trials
    );
    let report = noise_variance_experiment(a.n, a.sigma, a.trials, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "order",
        "subsets",
        "expected",
        "and_variance",
        "or_variance",
        "and_ratio",
        "or_ratio",
    ])
    .map_err(Error::from)?;
    for r in &report.rows {
        w.write_record([
            r.order.to_string(),
            r.subsets.to_string(),
            r.expected.to_string(),
            r.and_variance.to_string(),
            r.or_variance.to_string(),
            r.and_ratio.to_string(),
            r.or_ratio.to_string(),
        ])
        .map_err(Error::from)?;
        println!(
            "order {}: and {:.4} or {:.4}",
            r.order, r.and_ratio, r.or_ratio
        );
    }
    let bytes = w.into_inner().map_err(|e| input_error(e.to_string()))?;
    csv_output(a.out, cfg, "variance.csv", &bytes)
}
