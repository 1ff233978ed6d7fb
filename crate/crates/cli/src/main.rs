#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use prank::benchmark::{
    add_noise, add_offsets, eigen, modal_frf, synthesize_direct, Boundary, ChainSystem, FrequencyGrid, NoiseModel,
    OffsetSpec, Quantity,
};
use prank::dataset::{self, to_frequency, to_time};
use prank::filters::{run, PrankConfig, Variant};
use prank::metrics::{cmif, consist, write_cmif_csv, zero_bins, DEFAULT_PROMINENCE};
use prank::selection::SelectionStrategy;
use prank::tsvd::Window;
use prank::{Domain, ResponseDataset};

/// Truncated-SVD denoising of MIMO vibration response datasets.
#[derive(Parser, Debug)]
#[command(name = "prank", version, about)]
struct Cli {
    /// key=value file supplying defaults for flags not given on the command line
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the FRFs of a mass-spring-damper chain
    Synth(SynthArgs),
    /// Add Gaussian noise and real offsets to a frequency-domain dataset
    Corrupt(CorruptArgs),
    /// Run a TSVD filter or PRANK pipeline
    Filter(FilterArgs),
    /// Compare a dataset against a reference
    Metrics(MetricsArgs),
    /// Convert between file formats and domains
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BoundaryArg {
    FixedFree,
    FreeFree,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Direct,
    Modal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum QuantityArg {
    Receptance,
    Accelerance,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DomainArg {
    Time,
    Freq,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Target {
    Binary,
    Csv,
    Time,
    Freq,
    Entries,
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    dofs: usize,
    /// One value for every mass, or one per DoF
    #[arg(long, default_value = "1.0")]
    mass: String,
    /// Link damping, one value or one per link
    #[arg(long, default_value = "0.002")]
    damp: String,
    /// Link stiffness, one value or one per link
    #[arg(long, default_value = "1.0")]
    stiff: String,
    #[arg(long, value_enum, default_value = "fixed-free")]
    boundary: BoundaryArg,
    /// Highest angular frequency (rad/s)
    #[arg(long, default_value_t = 2.0)]
    fmax: f64,
    /// Frequency step (rad/s); ignored when --bins is given
    #[arg(long, default_value_t = 0.001)]
    df: f64,
    /// Number of bins from 0 to fmax inclusive
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum, default_value = "direct")]
    method: Method,
    /// Modes kept by the modal method (default all)
    #[arg(long)]
    modes: Option<usize>,
    /// Modal damping ratio for every mode (default: equivalent damping of the links)
    #[arg(long)]
    modal_damping: Option<f64>,
    #[arg(long, value_enum, default_value = "receptance")]
    quantity: QuantityArg,
    /// 1-based output DoFs, comma separated (default all)
    #[arg(long)]
    outputs: Option<String>,
    /// 1-based input DoFs, comma separated (default all)
    #[arg(long)]
    inputs: Option<String>,
}

#[derive(clap::Args, Debug)]
struct CorruptArgs {
    #[arg(long = "in", short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// a,b,c,d with σ_re = a|Y| + b and σ_im = c|Y| + d
    #[arg(long, default_value = "0,0,0,0")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// o:v adds v to every bin of output o (1-based). Repeat for the same
    /// output to give one value per input, in input order.
    #[arg(long)]
    offset: Vec<String>,
}

#[derive(clap::Args, Debug)]
struct FilterArgs {
    #[arg(long = "in", short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Report path stem (default: <out stem>_report)
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "hip")]
    variant: String,
    #[arg(long, value_enum, default_value = "time")]
    domain: DomainArg,
    /// e15 tolerance for both stages
    #[arg(long, default_value_t = 0.10)]
    mu: f64,
    /// Fraction of trailing singular values used for the noise fit
    #[arg(long, default_value_t = 0.5)]
    mp_tail: f64,
    /// Fixed rank for the PRF (and classic) stage instead of e15
    #[arg(long)]
    prf_rank: Option<usize>,
    /// Fixed rank for the Hankel stage instead of e15
    #[arg(long)]
    hankel_rank: Option<usize>,
    /// Hankel window length, or auto
    #[arg(long, default_value = "auto")]
    window: String,
    /// Disable the thread pool for independent Hankel problems
    #[arg(long)]
    sequential: bool,
}

#[derive(clap::Args, Debug)]
struct MetricsArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Prefix for the CSV outputs
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the CMIF of the test dataset
    #[arg(long)]
    cmif: bool,
    /// o:i entry (1-based) whose zeros are listed; repeatable
    #[arg(long)]
    zeros: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_PROMINENCE)]
    prominence: f64,
}

#[derive(clap::Args, Debug)]
struct ConvertArgs {
    #[arg(long = "in", short)]
    input: PathBuf,
    /// Output file, or directory for --to entries
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum)]
    to: Target,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<prank::Error> for CliError {
    fn from(e: prank::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_list(name: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("--{name}: '{v}' is not a number"))))
        .collect()
}

fn parse_indices(name: &str, s: &str, n: usize) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|v| match v.trim().parse::<usize>() {
            Ok(k) if k >= 1 && k <= n => Ok(k - 1),
            _ => Err(usage(format!("--{name}: '{v}' is not a DoF in 1..={n}"))),
        })
        .collect()
}

fn parse_pair(name: &str, s: &str) -> CliResult<(String, String)> {
    s.split_once(':')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(|| usage(format!("--{name}: expected a:b, got '{s}'")))
}

fn per_element(name: &str, s: &str, n: usize) -> CliResult<Vec<f64>> {
    let v = parse_list(name, s)?;
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        len if len == n => Ok(v),
        len => Err(usage(format!("--{name}: expected 1 or {n} values, got {len}"))),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load(path: &Path) -> CliResult<ResponseDataset> {
    let ds = if is_csv(path) {
        dataset::read_dataset_csv(path)
    } else {
        dataset::read_dataset(path)
    };
    ds.map_err(|e| match e {
        prank::Error::Io(io) => usage(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn save(ds: &ResponseDataset, path: &Path) -> CliResult<()> {
    if is_csv(path) {
        dataset::write_dataset_csv(ds, path)?;
    } else {
        dataset::write_dataset(ds, path)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    if a.dofs == 0 {
        return Err(usage("--dofs must be at least 1"));
    }
    if !(a.fmax > 0.0 && a.fmax.is_finite()) {
        return Err(usage("--fmax must be positive"));
    }
    let (boundary, links) = match a.boundary {
        BoundaryArg::FixedFree => (Boundary::FixedFree, a.dofs),
        BoundaryArg::FreeFree => (Boundary::FreeFree, a.dofs - 1),
    };
    let sys = ChainSystem::new(
        per_element("mass", &a.mass, a.dofs)?,
        per_element("damp", &a.damp, links)?,
        per_element("stiff", &a.stiff, links)?,
        boundary,
    )?;
    let grid = match a.bins {
        Some(n) => FrequencyGrid::linspace(a.fmax, n),
        None => {
            if !(a.df > 0.0) {
                return Err(usage("--df must be positive"));
            }
            FrequencyGrid::new(a.df, (a.fmax / a.df).round() as usize + 1)
        }
    }
    .map_err(|e| usage(e.to_string()))?;
    let all = (0..a.dofs).collect::<Vec<_>>();
    let outputs = match &a.outputs {
        Some(s) => parse_indices("outputs", s, a.dofs)?,
        None => all.clone(),
    };
    let inputs = match &a.inputs {
        Some(s) => parse_indices("inputs", s, a.dofs)?,
        None => all,
    };
    let quantity = match a.quantity {
        QuantityArg::Receptance => Quantity::Receptance,
        QuantityArg::Accelerance => Quantity::Accelerance,
    };
    let ds = match a.method {
        Method::Direct => {
            let syn = synthesize_direct(&sys, &grid, &outputs, &inputs)?;
            if !syn.pinv_bins.is_empty() {
                eprintln!("warning: pseudoinverse used at bins {:?}", syn.pinv_bins);
            }
            match quantity {
                Quantity::Receptance => syn.dataset,
                Quantity::Accelerance => {
                    let (_, _, n_k) = syn.dataset.shape();
                    let data = syn
                        .dataset
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(j, y)| y * -grid.omega(j % n_k).powi(2))
                        .collect();
                    syn.dataset.with_data(data)?
                }
            }
        }
        Method::Modal => {
            let mut model = eigen(&sys)?.with_quantity(quantity);
            if let Some(m) = a.modes {
                model = model.truncated(m);
            }
            if let Some(z) = a.modal_damping {
                if !(z >= 0.0) {
                    return Err(usage("--modal-damping must be >= 0"));
                }
                model = model.with_damping(z);
            }
            modal_frf(&model, &grid, &outputs, &inputs)?
        }
    };
    save(&ds, &a.out)?;
    let (n_o, n_i, n_k) = ds.shape();
    println!("wrote {} ({n_o}x{n_i}x{n_k}, step {} rad/s)", a.out.display(), grid.step);
    Ok(())
}

fn offsets(specs: &[String]) -> CliResult<OffsetSpec> {
    let mut spec = OffsetSpec::default();
    for s in specs {
        let (o, v) = parse_pair("offset", s)?;
        let o: usize = o
            .parse()
            .ok()
            .filter(|&o| o >= 1)
            .ok_or_else(|| usage(format!("--offset: '{o}' is not a 1-based output")))?;
        let v: f64 = v.parse().map_err(|_| usage(format!("--offset: '{v}' is not a number")))?;
        match spec.entries.iter_mut().find(|(out, _)| *out == o - 1) {
            Some((_, values)) => values.push(v),
            None => spec.entries.push((o - 1, vec![v])),
        }
    }
    Ok(spec)
}

fn cmd_corrupt(a: CorruptArgs) -> CliResult<()> {
    let c = parse_list("noise", &a.noise)?;
    if c.len() != 4 {
        return Err(usage(format!("--noise: expected a,b,c,d, got {} values", c.len())));
    }
    let nm = NoiseModel {
        a: c[0],
        b: c[1],
        c: c[2],
        d: c[3],
        seed: a.seed,
    };
    let spec = offsets(&a.offset)?;
    let ds = load(&a.input)?;
    let out = add_offsets(&add_noise(&ds, &nm)?, &spec)?;
    save(&out, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn selector(rank: Option<usize>, mu: f64, tail: f64) -> SelectionStrategy {
    match rank {
        Some(r) => SelectionStrategy::FixedRank(r),
        None => SelectionStrategy::E15 { mu, tail },
    }
}

fn cmd_filter(a: FilterArgs) -> CliResult<()> {
    let variant: Variant = a.variant.parse()?;
    let window = if a.window.eq_ignore_ascii_case("auto") {
        Window::Auto
    } else {
        Window::Length(
            a.window
                .parse()
                .map_err(|_| usage(format!("--window: expected auto or a length, got '{}'", a.window)))?,
        )
    };
    let cfg = PrankConfig {
        variant,
        domain: match a.domain {
            DomainArg::Time => Domain::Time,
            DomainArg::Freq => Domain::Frequency,
        },
        prf_selector: selector(a.prf_rank, a.mu, a.mp_tail),
        hankel_selector: selector(a.hankel_rank, a.mu, a.mp_tail),
        hankel_window: window,
        parallel: !a.sequential,
    };
    cfg.prf_selector.validate()?;
    cfg.hankel_selector.validate()?;
    let ds = load(&a.input)?;
    let (out, report) = run(&ds, &cfg)?;
    save(&out, &a.out)?;
    let stem = a.report.unwrap_or_else(|| {
        let name = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        a.out.with_file_name(format!("{name}_report"))
    });
    let written = report.write(&stem)?;
    println!("variant: {}", report.variant);
    for stage in &report.stages {
        let ranks: Vec<usize> = stage.records.iter().map(|r| r.rank).collect();
        let shown = if ranks.len() <= 8 {
            format!("{ranks:?}")
        } else {
            format!("{} instances, max {}", ranks.len(), ranks.iter().max().unwrap_or(&0))
        };
        println!("{}: {} svd calls, ranks {shown}, {:.3} s", stage.name, stage.svd_calls(), stage.seconds);
    }
    for flag in &report.flags {
        eprintln!("warning: {flag}");
    }
    println!("total: {:.3} s", report.total_seconds);
    println!("wrote {} and {} report files", a.out.display(), written.len());
    Ok(())
}

fn sibling(prefix: &Path, suffix: &str) -> PathBuf {
    let name = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    prefix.with_file_name(format!("{name}_{suffix}"))
}

fn cmd_metrics(a: MetricsArgs) -> CliResult<()> {
    let reference = load(&a.reference)?;
    let test = load(&a.test)?;
    let report = consist(&reference, &test)?;
    dataset::write_atomic(sibling(&a.out, "coherence.csv"), &report.to_csv()?)?;
    dataset::write_atomic(sibling(&a.out, "coherence_per_bin.csv"), &report.per_bin_csv()?)?;
    println!("consist: {:.6}", report.overall);
    if a.cmif {
        let curves = cmif(&test)?;
        write_cmif_csv(&test, &curves, sibling(&a.out, "cmif.csv"))?;
    }
    if !a.zeros.is_empty() {
        let mut rows = String::from("output,input,dataset,bin,axis_value\n");
        for z in &a.zeros {
            let (o, i) = parse_pair("zeros", z)?;
            let parse = |s: &str| s.parse::<usize>().ok().filter(|&k| k >= 1).map(|k| k - 1);
            let (o, i) = parse(&o)
                .zip(parse(&i))
                .ok_or_else(|| usage(format!("--zeros: '{z}' is not a 1-based o:i pair")))?;
            for (label, ds) in [("ref", &reference), ("test", &test)] {
                let bins = zero_bins(ds, o, i, a.prominence)?;
                println!("zeros Y{},{} {label}: {:?}", o + 1, i + 1, bins.iter().map(|&k| ds.axis().value(k)).collect::<Vec<_>>());
                for k in bins {
                    rows.push_str(&format!("{},{},{label},{k},{}\n", o + 1, i + 1, ds.axis().value(k)));
                }
            }
        }
        dataset::write_atomic(sibling(&a.out, "zeros.csv"), rows.as_bytes())?;
    }
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> CliResult<()> {
    let ds = load(&a.input)?;
    match a.to {
        Target::Binary => dataset::write_dataset(&ds, &a.out)?,
        Target::Csv => dataset::write_dataset_csv(&ds, &a.out)?,
        Target::Time => save(&to_time(&ds)?, &a.out)?,
        Target::Freq => save(&to_frequency(&ds)?, &a.out)?,
        Target::Entries => {
            std::fs::create_dir_all(&a.out).map_err(prank::Error::from)?;
            let files = dataset::export_all_csv(&ds, &a.out)?;
            println!("wrote {} entry files", files.len());
            return Ok(());
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

/// Flags a subcommand accepts, by long name.
fn long_flags(sub: &str) -> Vec<(String, bool)> {
    let cmd = Cli::command();
    cmd.find_subcommand(sub)
        .map(|c| {
            c.get_arguments()
                .filter_map(|a| {
                    let takes_value = a.get_num_args().is_none_or(|n| n.takes_values());
                    a.get_long().map(|l| (l.to_string(), takes_value))
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Inserts `--key value` for config-file entries the command line leaves
/// unset. Keys valid for another subcommand are ignored.
fn apply_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = match strs.iter().position(|a| a == "--config") {
        Some(p) => strs.get(p + 1).cloned(),
        None => strs.iter().find_map(|a| a.strip_prefix("--config=").map(str::to_string)),
    };
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("config {path}: {e}")))?;
    let subs: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let Some(sub_pos) = strs.iter().position(|a| subs.contains(a)) else {
        return Ok(args);
    };
    let sub = &strs[sub_pos];
    let own = long_flags(sub);
    let known: Vec<String> = subs.iter().flat_map(|s| long_flags(s)).map(|(l, _)| l).collect();
    let mut extra: Vec<OsString> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim().replace('_', "-"), v.trim().to_string()))
            .ok_or_else(|| usage(format!("config {path}:{}: expected key = value", lineno + 1)))?;
        let flag = format!("--{key}");
        let given = strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        match own.iter().find(|(l, _)| *l == key) {
            Some(_) if given => {}
            Some((_, true)) => {
                // repeatable flags take whitespace-separated values
                let parts: Vec<&str> = if key == "offset" || key == "zeros" {
                    value.split_whitespace().collect()
                } else {
                    vec![value.as_str()]
                };
                for p in parts {
                    extra.push(flag.clone().into());
                    extra.push(p.into());
                }
            }
            Some((_, false)) => match value.as_str() {
                "true" | "yes" | "1" => extra.push(flag.into()),
                "false" | "no" | "0" => {}
                other => return Err(usage(format!("config {path}: {key} expects true or false, got '{other}'"))),
            },
            None if known.contains(&key) => {}
            None => return Err(usage(format!("config {path}:{}: unknown key '{key}'", lineno + 1))),
        }
    }
    let mut out = args;
    out.splice(sub_pos + 1..sub_pos + 1, extra);
    Ok(out)
}

fn main() -> ExitCode {
    let args = match apply_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Corrupt(a) => cmd_corrupt(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Runtime(_) => 1,
            })
        }
    }
}
