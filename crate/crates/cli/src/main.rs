use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use distspectral::datagen::{
    load_dataset, partition_scenario, sample_mixture, write_dataset, Dataset, LoadOptions,
    MixtureSpec, ScenarioSpec,
};
use distspectral::eval::{distortion_slope, run_lemma1_battery, Lemma1Battery};
use distspectral::seeding::derive_seed;
use distspectral::{
    compare_runs, run_distributed, run_nondistributed, BandwidthChoice, CodewordWeighting,
    DmlConfig, DmlMethod, Exchange, GridSpec, RunOptions, SiteShard,
};

/// Distributed spectral clustering experiments.
#[derive(Parser, Debug)]
#[command(name = "distspectral", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a Gaussian mixture preset to a labelled CSV file.
    Gen(GenArgs),
    /// Split a labelled file into per-site shard files.
    Split(SplitArgs),
    /// Run the distributed pipeline or the single-site baseline.
    Run(RunArgs),
    /// Run a theory check battery.
    Check {
        #[command(subcommand)]
        battery: Battery,
    },
}

#[derive(Args, Debug)]
struct Output {
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// toy2d or mix10d
    #[arg(long, default_value = "toy2d")]
    preset: String,
    /// AR(1) correlation for mix10d.
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Scenario preset, e.g. toy-d1, toy-d2, d3, hepmass-3site-d2.
    #[arg(long)]
    scenario: String,
    /// Site count (D3 only; fractional presets fix their own).
    #[arg(long, default_value_t = 2)]
    sites: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    outdir: PathBuf,
    #[command(flatten)]
    input_format: InputFormat,
}

#[derive(Args, Debug, Clone)]
struct InputFormat {
    /// Input files start with a header line.
    #[arg(long)]
    header: bool,
    /// Label column (negative counts from the end).
    #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
    label_col: isize,
    /// Input files carry no label column.
    #[arg(long, conflicts_with = "label_col")]
    unlabeled: bool,
    /// Scale features to zero mean and unit variance.
    #[arg(long)]
    standardize: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Dml {
    Kmeans,
    Rptree,
}

impl From<Dml> for DmlMethod {
    fn from(d: Dml) -> Self {
        match d {
            Dml::Kmeans => DmlMethod::Kmeans,
            Dml::Rptree => DmlMethod::Rptree,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// One labelled file; runs the single-site baseline.
    #[arg(long, conflicts_with_all = ["shards", "preset"])]
    input: Option<PathBuf>,
    /// One file per site; runs the distributed pipeline.
    #[arg(long, num_args = 1.., conflicts_with = "preset")]
    shards: Vec<PathBuf>,
    /// Generate data in memory from a mixture preset instead of reading files.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    /// Points to generate with --preset.
    #[arg(long, default_value_t = 4000)]
    n: usize,
    /// Scenario preset used to split generated data.
    #[arg(long, default_value = "d3")]
    scenario: String,
    #[arg(long, default_value_t = 2)]
    sites: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "kmeans")]
    dml: Dml,
    /// Points per codeword.
    #[arg(long, default_value_t = 40.0)]
    ratio: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    /// A positive value, `median`, or `grid` (label-driven desk search).
    #[arg(long, default_value = "median", allow_hyphen_values = true)]
    bandwidth: String,
    /// Search the full fine grid on (0, 200] (slow).
    #[arg(long)]
    paper_grid: bool,
    /// Scale codeword affinities by group sizes.
    #[arg(long)]
    weighted: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Repeat with this many consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Also run the baseline on the pooled data and report the deltas.
    #[arg(long)]
    compare: bool,
    /// Exchange codebooks and labels through files in this directory.
    #[arg(long)]
    exchange_dir: Option<PathBuf>,
    /// Site co-located with the coordinator (its traffic is not counted).
    #[arg(long)]
    host_site: Option<u32>,
    /// Write per-point cluster labels (one per line, input order).
    #[arg(long)]
    labels_out: Option<PathBuf>,
    #[command(flatten)]
    input_format: InputFormat,
    #[command(flatten)]
    output: Output,
}

#[derive(Subcommand, Debug)]
enum Battery {
    /// Perturbation stability of the spectral bipartition.
    Lemma1(Lemma1Args),
    /// Distortion-rate slope of k-means on Gaussian data.
    DistortionSlope(SlopeArgs),
}

#[derive(Args, Debug)]
struct Lemma1Args {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Noise level as a fraction of the data scale.
    #[arg(long, default_value_t = 0.01)]
    sigma_eps: f64,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    bandwidth: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SlopeArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

/// Bad input or options; reported with exit code 1.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use distspectral::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_)
                | E::EigenSolver(_)
                | E::DegenerateSpectrum
                | E::IsolatedVertex(_)
                | E::ZeroVolume(_)
                | E::NotPositiveDefinite => 2,
                _ => 1,
            };
        }
    }
    2
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(w: &mut dyn Write, value: &Value) -> Result<()> {
    writeln!(w, "{value}")?;
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = MixtureSpec::preset(&args.preset, args.rho)?;
    let (points, labels) = sample_mixture(&spec, args.n, args.seed)?;
    let mut w = sink(&args.output.out)?;
    write_dataset(&mut w, &points, Some(&labels))?;
    w.flush()?;
    Ok(())
}

fn load_options(f: &InputFormat, keep_label_values: bool) -> LoadOptions {
    LoadOptions {
        header: f.header,
        label_col: (!f.unlabeled).then_some(f.label_col),
        standardize: f.standardize,
        keep_label_values,
        ..Default::default()
    }
}

fn load(path: &Path, f: &InputFormat, keep_label_values: bool) -> Result<Dataset> {
    load_dataset(path, &load_options(f, keep_label_values)).with_context(|| format!("reading {}", path.display()))
}

fn split(args: SplitArgs) -> Result<()> {
    let spec = ScenarioSpec::preset(&args.scenario, args.sites)?;
    let data = load(&args.input, &args.input_format, false)?;
    let labels = data
        .labels
        .ok_or_else(|| invalid("splitting by scenario needs a label column"))?;
    let shards = partition_scenario(&data.points, &labels, &spec, args.seed)?;
    std::fs::create_dir_all(&args.outdir)?;
    let mut report = Vec::new();
    for shard in &shards {
        let path = args.outdir.join(format!("shard_{}.csv", shard.site_id));
        let mut w = BufWriter::new(File::create(&path)?);
        write_dataset(&mut w, shard.points(), shard.true_labels())?;
        w.flush()?;
        report.push(json!({"site": shard.site_id, "rows": shard.len(), "path": path}));
    }
    let mut out = io::stdout().lock();
    for line in report {
        emit(&mut out, &line)?;
    }
    Ok(())
}

fn parse_bandwidth(args: &RunArgs) -> Result<BandwidthChoice> {
    if args.paper_grid {
        return Ok(BandwidthChoice::Search(GridSpec::Paper));
    }
    match args.bandwidth.as_str() {
        "median" => Ok(BandwidthChoice::Median),
        "grid" => Ok(BandwidthChoice::Search(GridSpec::Desk)),
        other => match other.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(BandwidthChoice::Fixed(v)),
            _ => Err(invalid(format!(
                "--bandwidth must be a positive number, `median` or `grid`, not `{other}`"
            ))),
        },
    }
}

/// Everything that defines one experiment, echoed into its report.
#[derive(Debug, Clone)]
struct ExperimentConfig {
    source: String,
    scenario: Option<String>,
    sites: usize,
    k: usize,
    dml: DmlMethod,
    compression_ratio: f64,
    bandwidth: BandwidthChoice,
    seed: u64,
    output: Option<PathBuf>,
}

impl ExperimentConfig {
    fn to_json(&self) -> Value {
        let bandwidth = match &self.bandwidth {
            BandwidthChoice::Fixed(v) => json!(v),
            BandwidthChoice::Median => json!("median"),
            BandwidthChoice::Search(GridSpec::Paper) => json!("paper-grid"),
            BandwidthChoice::Search(_) => json!("grid"),
        };
        json!({
            "source": self.source,
            "scenario": self.scenario,
            "sites": self.sites,
            "k": self.k,
            "dml": self.dml.to_string(),
            "compression_ratio": self.compression_ratio,
            "bandwidth": bandwidth,
            "seed": self.seed,
            "output": self.output,
        })
    }
}

/// Shards for one seed plus a description of where they came from.
fn build_shards(args: &RunArgs, seed: u64) -> Result<(Vec<SiteShard>, String, Option<String>)> {
    if let Some(preset) = &args.preset {
        let spec = MixtureSpec::preset(preset, args.rho)?;
        let (points, labels) = sample_mixture(&spec, args.n, seed)?;
        let layout = ScenarioSpec::preset(&args.scenario, args.sites)?;
        let shards = partition_scenario(&points, &labels, &layout, derive_seed(seed, 7))?;
        return Ok((shards, format!("{preset} n={}", args.n), Some(args.scenario.clone())));
    }
    if let Some(path) = &args.input {
        let data = load(path, &args.input_format, false)?;
        let shard = SiteShard::new(0, data.points, data.labels)?;
        return Ok((vec![shard], path.display().to_string(), None));
    }
    if args.shards.is_empty() {
        return Err(invalid("give --input, --shards or --preset"));
    }
    let mut shards = Vec::new();
    for (i, path) in args.shards.iter().enumerate() {
        let data = load(path, &args.input_format, true)?;
        shards.push(SiteShard::new(i as u32, data.points, data.labels)?);
    }
    let names: Vec<String> = args.shards.iter().map(|p| p.display().to_string()).collect();
    Ok((shards, names.join(","), None))
}

fn pooled(shards: &[SiteShard]) -> (Vec<Vec<f64>>, Option<Vec<usize>>) {
    let points = shards.iter().flat_map(|s| s.points().to_vec()).collect();
    let labels = shards
        .iter()
        .map(|s| s.true_labels().map(<[usize]>::to_vec))
        .collect::<Option<Vec<_>>>()
        .map(|v| v.concat());
    (points, labels)
}

fn run(args: RunArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(invalid("--seeds must be at least 1"));
    }
    let bandwidth = parse_bandwidth(&args)?;
    let mut w = sink(&args.output.out)?;
    for seed in args.seed..args.seed + args.seeds {
        let (shards, source, scenario) = build_shards(&args, seed)?;
        let mut dml = DmlConfig::new(args.dml.into(), args.ratio, seed);
        if let Some(m) = args.max_iter {
            dml.max_iter = m;
        }
        let mut opts = RunOptions::new(args.k, dml, bandwidth.clone());
        if args.weighted {
            opts.weighting = CodewordWeighting::PointMass;
        }
        opts.host_site = args.host_site;
        if let Some(dir) = &args.exchange_dir {
            opts.exchange = Exchange::Directory(dir.clone());
        }
        let config = ExperimentConfig {
            source,
            scenario,
            sites: shards.len(),
            k: args.k,
            dml: args.dml.into(),
            compression_ratio: args.ratio,
            bandwidth: bandwidth.clone(),
            seed,
            output: args.output.out.clone(),
        };
        log::info!("seed {seed}: {} site(s)", shards.len());

        let result = run_distributed(&shards, &opts)?;
        let mode = if shards.len() == 1 { "nondistributed" } else { "distributed" };
        let mut line = json!({
            "mode": mode,
            "config": config.to_json(),
            "report": serde_json::to_value(&result.report)?,
        });
        if args.compare {
            let (points, labels) = pooled(&shards);
            let (_, base) = run_nondistributed(&points, labels.as_deref(), &opts)?;
            let cmp = compare_runs(&result.report, &base)?;
            line["baseline"] = serde_json::to_value(&base)?;
            line["comparison"] = serde_json::to_value(&cmp)?;
        }
        emit(&mut w, &line)?;
        if let Some(path) = &args.labels_out {
            let mut lw = BufWriter::new(File::create(path)?);
            for label in result.labels.concat() {
                writeln!(lw, "{label}")?;
            }
            lw.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

fn lemma1(args: Lemma1Args) -> Result<()> {
    if args.trials == 0 {
        return Err(invalid("--trials must be at least 1"));
    }
    let cfg = Lemma1Battery {
        trials: args.trials,
        n: args.n,
        sigma_eps_fraction: args.sigma_eps,
        separation: args.separation,
        bandwidth: args.bandwidth,
        seed: args.seed,
    };
    let reports = run_lemma1_battery(&cfg)?;
    let mut w = sink(&args.output.out)?;
    for (trial, r) in reports.iter().enumerate() {
        emit(
            &mut w,
            &json!({
                "trial": trial,
                "rho": r.rho,
                "frob_sq": r.frob_sq,
                "eig_dist_sq": r.eig_dist_sq,
                "middle_holds": r.middle_holds,
                "outer_holds": r.outer_holds,
                "holds": r.bound_holds,
            }),
        )?;
    }
    let count = |f: fn(&distspectral::eval::HarnessReport) -> bool| reports.iter().filter(|r| f(r)).count();
    emit(
        &mut w,
        &json!({
            "summary": "lemma1",
            "trials": reports.len(),
            "middle_holds": count(|r| r.middle_holds),
            "outer_holds": count(|r| r.outer_holds),
            "holds": count(|r| r.bound_holds),
        }),
    )?;
    w.flush()?;
    Ok(())
}

fn slope(args: SlopeArgs) -> Result<()> {
    if args.d == 0 || args.ks.len() < 2 {
        return Err(invalid("need --d >= 1 and at least two --ks values"));
    }
    let report = distortion_slope(args.d, args.n, &args.ks, args.seeds, args.max_iter, args.seed)?;
    let mut w = sink(&args.output.out)?;
    emit(&mut w, &serde_json::to_value(&report)?)?;
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Split(a) => split(a),
        Command::Run(a) => run(a),
        Command::Check { battery } => match battery {
            Battery::Lemma1(a) => lemma1(a),
            Battery::DistortionSlope(a) => slope(a),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let usage: anyhow::Error = distspectral::Error::ZeroClusters.into();
        assert_eq!(exit_code(&usage), 1);
        let runtime: anyhow::Error = distspectral::Error::DegenerateSpectrum.into();
        assert_eq!(exit_code(&runtime), 2);
        assert_eq!(exit_code(&invalid("bad")), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("disk on fire")), 2);
    }

    #[test]
    fn bandwidth_flag_forms() {
        let parse = |extra: &[&str]| {
            let mut argv = vec!["distspectral", "run", "--input", "x", "--k", "2"];
            argv.extend_from_slice(extra);
            let Command::Run(args) = Cli::try_parse_from(argv).unwrap().command else {
                unreachable!()
            };
            parse_bandwidth(&args)
        };
        assert_eq!(parse(&[]).unwrap(), BandwidthChoice::Median);
        assert_eq!(parse(&["--bandwidth", "2.5"]).unwrap(), BandwidthChoice::Fixed(2.5));
        assert_eq!(
            parse(&["--bandwidth", "grid"]).unwrap(),
            BandwidthChoice::Search(GridSpec::Desk)
        );
        assert_eq!(parse(&["--paper-grid"]).unwrap(), BandwidthChoice::Search(GridSpec::Paper));
        assert!(parse(&["--bandwidth", "-1"]).is_err());
    }
}
