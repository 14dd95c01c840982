//! `whet`: Wasserstein heterogeneity from the command line.
//!
//! Exit codes: 0 success, 1 bad input or arguments, 2 internal failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use whet_core::heterogeneity::{estimate_with, EstimateOptions, HeterogeneityReport, TestResult};
use whet_core::io::{
    self, AnalysisBundle, CsvTable, DistanceFormat, Provenance, ReportFormat, Timestamps,
};
use whet_core::measures::{Measure, MeasureCollection};
use whet_core::models::{synthetic_groups, SyntheticConfig};
use whet_core::plugin::{plugin_check, PluginOptions, DEFAULT_SURROGATE_ATOMS};
use whet_core::simulate::{self, SimulationSpec};
use whet_core::transforms::{Transform, TransformSpec};
use whet_core::twosample::compare;
use whet_core::wasserstein::{pairwise_distances, DistanceMatrix, W2Options};
use whet_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "whet", version, about = "Pairwise Wasserstein heterogeneity of populations of measures")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Root seed. When omitted a seed is drawn and printed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that receives every output file.
    #[arg(short, long = "output", global = true, default_value = "whet-out")]
    output: PathBuf,
    /// Report file format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Transform: power:<p>, bounded:<c0>, bounded:auto or identity (a `psi=` prefix is accepted).
    #[arg(long, global = true, default_value = "power:2")]
    psi: TransformSpec,
    /// Confidence level of the Wald intervals.
    #[arg(long, global = true, default_value_t = 0.95)]
    level: f64,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Record the creation time in reports (off by default so reruns are byte-identical).
    #[arg(long, global = true)]
    timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn report(self) -> ReportFormat {
        match self {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }

    fn distance(self) -> DistanceFormat {
        match self {
            Format::Json => DistanceFormat::Json,
            Format::Csv => DistanceFormat::Csv,
        }
    }

    fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Exactly one of a measure collection or a distance matrix.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Input {
    /// Distance matrix (.csv or .json).
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Measure collection (.json); distances are computed exactly.
    #[arg(long)]
    measures: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact pairwise W2 distances of a measure collection.
    Distances {
        #[arg(long)]
        measures: PathBuf,
    },
    /// U-statistic, standard error, Wald interval and degeneracy flag.
    Estimate {
        #[command(flatten)]
        input: Input,
        /// Also test H0: D = d0.
        #[arg(long)]
        d0: Option<f64>,
        /// Cut-off for the degeneracy ratio (default 2/sqrt(n)).
        #[arg(long)]
        degeneracy_threshold: Option<f64>,
    },
    /// Empirical eccentricities sorted in decreasing order.
    Eccentricity {
        #[command(flatten)]
        input: Input,
    },
    /// Two-sample comparison of heterogeneity.
    Compare {
        /// Group A: distance matrix or measure collection.
        #[arg(long)]
        group_a: PathBuf,
        /// Group B: distance matrix or measure collection.
        #[arg(long)]
        group_b: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        delta0: f64,
    },
    /// Plug-in stability check of estimated measures against the truth.
    PluginCheck {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        approx: PathBuf,
        /// Atoms per surrogate when Gaussian truth meets sample-based estimates.
        #[arg(long, default_value_t = DEFAULT_SURROGATE_ATOMS)]
        surrogate_atoms: usize,
    },
    /// Monte Carlo study described by a JSON spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Regenerate the synthetic three-group data and its plot-ready tables.
    ReproduceSynthetic {
        /// Generator config (default: the built-in synthetic_v1 settings).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Per-group estimate, interval and rank over a directory of distance matrices.
    Table1 {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(2)
        }
    }
}

struct Ctx<'a> {
    g: &'a Global,
    w2: W2Options,
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        match self.g.seed {
            Some(s) => s,
            None => {
                let s = rand::random::<u64>();
                println!("seed: {s}");
                s
            }
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.g.output.join(name)
    }

    fn bundle<T>(&self, prov: Provenance, payload: T) -> AnalysisBundle<T> {
        let mut b = AnalysisBundle::new(prov, payload);
        if self.g.timestamp {
            b.timestamps = Some(Timestamps::now());
        }
        b
    }

    fn emit<T: Serialize + CsvTable>(&self, b: &AnalysisBundle<T>, stem: &str, format: Format) -> Result<PathBuf> {
        let path = self.path(&format!("{stem}.{}", format.ext()));
        io::emit_report(b, &path, format.report())?;
        Ok(path)
    }

    fn provenance(&self, command: &str, inputs: &[&Path]) -> Result<Provenance> {
        Provenance::new(command).with_inputs(inputs)?.with_level(self.g.level)
    }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.global.workers == Some(0) {
        return Err(Error::InvalidArgument {
            name: "workers",
            message: "must be at least 1".into(),
        });
    }
    let ctx = Ctx {
        g: &cli.global,
        w2: W2Options {
            workers: cli.global.workers,
            ..W2Options::default()
        },
    };
    match &cli.command {
        Command::Distances { measures } => cmd_distances(&ctx, measures),
        Command::Estimate {
            input,
            d0,
            degeneracy_threshold,
        } => cmd_estimate(&ctx, input, *d0, *degeneracy_threshold),
        Command::Eccentricity { input } => cmd_eccentricity(&ctx, input),
        Command::Compare { group_a, group_b, delta0 } => cmd_compare(&ctx, group_a, group_b, *delta0),
        Command::PluginCheck {
            truth,
            approx,
            surrogate_atoms,
        } => cmd_plugin(&ctx, truth, approx, *surrogate_atoms),
        Command::Simulate { spec } => cmd_simulate(&ctx, spec),
        Command::ReproduceSynthetic { config } => cmd_reproduce(&ctx, config.as_deref()),
        Command::Table1 { dir } => cmd_table1(&ctx, dir),
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn load_collection(path: &Path) -> Result<MeasureCollection> {
    let (c, w) = io::load_measures(path)?;
    warn_all(&w);
    Ok(c)
}

fn distances_of(ctx: &Ctx, c: &MeasureCollection) -> Result<DistanceMatrix> {
    pairwise_distances(c, &ctx.w2)
}

/// A `.json` file with a `family` key is a measure collection; anything
/// else is read as a distance matrix.
fn load_any(ctx: &Ctx, path: &Path) -> Result<DistanceMatrix> {
    if DistanceFormat::from_path(path)? == DistanceFormat::Json {
        let text = io::read_to_string(path)?;
        let is_measures = serde_json::from_str::<serde_json::Value>(&text)
            .map(|v| v.get("family").is_some())
            .unwrap_or(false);
        if is_measures {
            return distances_of(ctx, &load_collection(path)?);
        }
    }
    let (d, w) = io::load_distance_matrix(path, None)?;
    warn_all(&w);
    Ok(d)
}

fn load_input(ctx: &Ctx, input: &Input) -> Result<(DistanceMatrix, PathBuf)> {
    match (&input.distances, &input.measures) {
        (Some(p), None) => {
            let (d, w) = io::load_distance_matrix(p, None)?;
            warn_all(&w);
            Ok((d, p.clone()))
        }
        (None, Some(p)) => Ok((distances_of(ctx, &load_collection(p)?)?, p.clone())),
        _ => unreachable!("clap enforces exactly one input"),
    }
}

fn cmd_distances(ctx: &Ctx, measures: &Path) -> Result<()> {
    let d = distances_of(ctx, &load_collection(measures)?)?;
    let format = ctx.g.format;
    let path = ctx.path(&format!("distances.{}", format.ext()));
    io::save_distance_matrix(&d, &path, format.distance())?;
    let prov = Provenance::new("distances").with_inputs(&[measures])?;
    io::write_json(&ctx.bundle(prov, ()), &ctx.path("distances.provenance.json"))?;
    println!("n = {}; wrote {}", d.n(), path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    report: HeterogeneityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    d0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<TestResult>,
}

impl CsvTable for EstimateOutput {
    fn csv_header(&self) -> Vec<String> {
        ["n", "estimate", "se", "lower", "upper", "level", "degeneracy_flag", "d0", "z", "p_value"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let r = &self.report;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![vec![
            r.n.to_string(),
            r.u_stat.to_string(),
            r.std_error.to_string(),
            r.ci.0.to_string(),
            r.ci.1.to_string(),
            r.ci_level.to_string(),
            r.degeneracy_flag.to_string(),
            opt(self.d0),
            opt(self.test.map(|t| t.z)),
            opt(self.test.map(|t| t.p_value)),
        ]]
    }
}

fn print_report(r: &HeterogeneityReport) {
    println!("n            {}", r.n);
    println!("psi          {}", r.transform_used);
    println!("U_n          {}", r.u_stat);
    println!("SE           {}", r.std_error);
    println!("{:<12} [{}, {}]", format!("{}% CI", r.ci_level * 100.0), r.ci.0, r.ci.1);
    println!("degenerate   {}", if r.degeneracy_flag { "FLAGGED" } else { "no" });
    warn_all(&r.warnings);
}

fn cmd_estimate(ctx: &Ctx, input: &Input, d0: Option<f64>, threshold: Option<f64>) -> Result<()> {
    let (d, path) = load_input(ctx, input)?;
    let t = ctx.g.psi.resolve(&[&d])?;
    let opts = EstimateOptions {
        level: ctx.g.level,
        degeneracy_threshold: threshold,
    };
    let report = estimate_with(&d, t, &opts)?;
    print_report(&report);
    let test = match d0 {
        Some(v) => {
            let r = report.one_sample_test(v)?;
            println!("H0: D = {v}   z = {}   p = {}", r.z, r.p_value);
            Some(r)
        }
        None => None,
    };
    let prov = ctx.provenance("estimate", &[&path])?.with_transform(&ctx.g.psi, Some(t));
    let out = ctx.emit(&ctx.bundle(prov, EstimateOutput { report, d0, test }), "estimate", ctx.g.format)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eccentricity(ctx: &Ctx, input: &Input) -> Result<()> {
    let (d, path) = load_input(ctx, input)?;
    let t = ctx.g.psi.resolve(&[&d])?;
    let report = estimate_with(
        &d,
        t,
        &EstimateOptions {
            level: ctx.g.level,
            ..EstimateOptions::default()
        },
    )?;
    println!("{:>5} {:>6} {:>12} {}", "rank", "index", "label", "eccentricity");
    for r in io::eccentricity_table(&report) {
        println!("{:>5} {:>6} {:>12} {}", r.rank, r.index, r.label.unwrap_or_default(), r.eccentricity);
    }
    let prov = ctx.provenance("eccentricity", &[&path])?.with_transform(&ctx.g.psi, Some(t));
    let b = ctx.bundle(prov, report);
    // the sorted table is always written; the full report follows --format
    ctx.emit(&b, "eccentricity", Format::Csv)?;
    if ctx.g.format == Format::Json {
        ctx.emit(&b, "eccentricity", Format::Json)?;
    }
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: &Path, b: &Path, delta0: f64) -> Result<()> {
    let da = load_any(ctx, a)?;
    let db = load_any(ctx, b)?;
    let r = compare(&da, &db, ctx.g.psi, delta0, ctx.g.level)?;
    println!("U_A - U_B    {}", r.delta_hat);
    println!("SE           {}", r.se_pooled);
    println!("z            {}", r.z);
    println!("p            {}", r.p_value);
    println!("{:<12} [{}, {}]", format!("{}% CI", r.ci_level * 100.0), r.ci.0, r.ci.1);
    warn_all(&r.warnings);
    let prov = ctx.provenance("compare", &[a, b])?.with_transform(&ctx.g.psi, Some(r.transform_used));
    let out = ctx.emit(&ctx.bundle(prov, r), "compare", ctx.g.format)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_plugin(ctx: &Ctx, truth: &Path, approx: &Path, atoms: usize) -> Result<()> {
    let tc = load_collection(truth)?;
    let ac = load_collection(approx)?;
    let t = match ctx.g.psi {
        TransformSpec::Fixed(t) => t,
        TransformSpec::BoundedAuto => ctx.g.psi.resolve(&[&distances_of(ctx, &tc)?])?,
    };
    let seed = ctx.seed();
    let opts = PluginOptions {
        w2: ctx.w2.clone(),
        surrogate_atoms: atoms,
        seed,
    };
    let r = plugin_check(&tc, &ac, t, &opts)?;
    println!("n            {}", r.n);
    println!("L            {}", r.lipschitz_l);
    println!("|gap|        {}", r.observed_gap);
    println!("bound        {}", r.bound);
    println!("within bound {}", r.within_bound(1e-9));
    let prov = ctx
        .provenance("plugin-check", &[truth, approx])?
        .with_seed(seed)
        .with_transform(&ctx.g.psi, Some(t));
    let out = ctx.emit(&ctx.bundle(prov, r), "plugin", ctx.g.format)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, spec_path: &Path) -> Result<()> {
    let text = io::read_to_string(spec_path)?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: spec_path.display().to_string(),
        message: e.to_string(),
    })?;
    // --seed wins over the file; with neither, a seed is drawn and printed
    let seed = match (ctx.g.seed, value.get("seed").and_then(|s| s.as_u64())) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => ctx.seed(),
    };
    if let Some(obj) = value.as_object_mut() {
        obj.insert("seed".into(), seed.into());
    }
    let spec: SimulationSpec = serde_json::from_value(value).map_err(|e| Error::Schema {
        path: spec_path.display().to_string(),
        message: e.to_string(),
    })?;
    let result = simulate::run(&spec, ctx.g.workers)?;
    let mut prov = ctx
        .provenance("simulate", &[spec_path])?
        .with_seed(seed)
        .with_transform(&TransformSpec::Fixed(spec.transform), Some(spec.transform));
    prov = prov.with_level(spec.level)?;
    let b = ctx.bundle(prov, result);
    let json = ctx.emit(&b, "simulate", Format::Json)?;
    let csv = ctx.emit(&b, "simulate", Format::Csv)?;
    let header = b.payload.csv_header();
    for row in b.payload.csv_rows() {
        let cells: Vec<String> = header
            .iter()
            .zip(&row)
            .filter(|(_, v)| !v.is_empty())
            .map(|(h, v)| format!("{h}={v}"))
            .collect();
        println!("{}", cells.join(" "));
    }
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

impl CsvTable for Table {
    fn csv_header(&self) -> Vec<String> {
        self.header.clone()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows.clone()
    }
}

fn gaussian_summary(m: &Measure) -> (Vec<f64>, Vec<f64>) {
    match m {
        Measure::Gaussian(g) => {
            let c = g.covariance_matrix();
            (g.mean().to_vec(), (0..g.dim()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
        }
        _ => unreachable!("synthetic groups are Gaussian"),
    }
}

fn cmd_reproduce(ctx: &Ctx, config: Option<&Path>) -> Result<()> {
    let (cfg, inputs): (SyntheticConfig, Vec<&Path>) = match config {
        Some(p) => (io::read_json(p)?, vec![p]),
        None => (SyntheticConfig::default(), vec![]),
    };
    let seed = match (ctx.g.seed, cfg.seed) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => ctx.seed(),
    };
    let groups = synthetic_groups(&cfg.groups, seed)?;
    let sq = Transform::power(2.0)?;
    let level = ctx.g.level;
    let opts = EstimateOptions {
        level,
        ..EstimateOptions::default()
    };

    let mut dists = Vec::with_capacity(groups.len());
    for g in &groups {
        let d = distances_of(ctx, &g.collection)?;
        io::save_measures(&g.collection, &ctx.path(&format!("groups/{}.json", g.name)))?;
        io::save_distance_matrix(&d, &ctx.path(&format!("distances/{}.csv", g.name)), DistanceFormat::Csv)?;
        dists.push(d);
    }
    let refs: Vec<&DistanceMatrix> = dists.iter().collect();
    let bounded = TransformSpec::BoundedAuto.resolve(&refs)?;

    let mut measures_t = Table::new(&["group", "index", "label", "component", "mean_1", "mean_2", "std_1", "std_2"]);
    let mut estimates_t = Table::new(&["group", "n", "estimate", "se", "lower", "upper", "target"]);
    let mut ecc_t = Table::new(&["group", "rank", "index", "label", "component", "eccentricity"]);
    let mut transforms_t = Table::new(&["group", "transform", "estimate", "se", "lower", "upper"]);
    println!("{:<6} {:>12} {:>12} {:>26} {:>12}", "group", "U_n", "SE", "CI", "target");
    for (g, d) in groups.iter().zip(&dists) {
        let labels = g.collection.labels().map(|l| l.to_vec()).unwrap_or_default();
        for (i, m) in g.collection.items().iter().enumerate() {
            let (mean, std) = gaussian_summary(m);
            let mut row = vec![g.name.clone(), i.to_string(), labels[i].clone(), g.membership[i].to_string()];
            row.extend(mean.iter().chain(&std).map(|x| x.to_string()));
            measures_t.push(row);
        }
        let r = estimate_with(d, sq, &opts)?;
        println!(
            "{:<6} {:>12.5} {:>12.5} {:>26} {:>12.5}",
            g.name,
            r.u_stat,
            r.std_error,
            format!("[{:.4}, {:.4}]", r.ci.0, r.ci.1),
            g.target_squared
        );
        estimates_t.push(vec![
            g.name.clone(),
            r.n.to_string(),
            r.u_stat.to_string(),
            r.std_error.to_string(),
            r.ci.0.to_string(),
            r.ci.1.to_string(),
            g.target_squared.to_string(),
        ]);
        for e in io::eccentricity_table(&r) {
            ecc_t.push(vec![
                g.name.clone(),
                e.rank.to_string(),
                e.index.to_string(),
                e.label.unwrap_or_default(),
                g.membership[e.index].to_string(),
                e.eccentricity.to_string(),
            ]);
        }
        for (t, r) in [(sq, r.clone()), (bounded, estimate_with(d, bounded, &opts)?)] {
            transforms_t.push(vec![
                g.name.clone(),
                t.to_string(),
                r.u_stat.to_string(),
                r.std_error.to_string(),
                r.ci.0.to_string(),
                r.ci.1.to_string(),
            ]);
        }
    }
    let prov = ctx
        .provenance("reproduce-synthetic", &inputs)?
        .with_seed(seed)
        .with_transform(&TransformSpec::Fixed(sq), Some(sq));
    for (stem, table) in [("synthetic_measures", measures_t), ("synthetic_estimates", estimates_t), ("synthetic_eccentricity", ecc_t)] {
        ctx.emit(&ctx.bundle(prov.clone(), table), stem, Format::Csv)?;
    }
    let prov2 = prov.with_transform(&TransformSpec::BoundedAuto, Some(bounded));
    ctx.emit(&ctx.bundle(prov2, transforms_t), "synthetic_transforms", Format::Csv)?;
    io::write_json(&cfg, &ctx.path("config_used.json"))?;
    println!("bounded transform: {bounded}");
    println!("wrote plot-ready tables under {}", ctx.g.output.display());
    Ok(())
}

fn cmd_table1(ctx: &Ctx, dir: &Path) -> Result<()> {
    let files = io::distance_files(dir)?;
    let groups = files
        .iter()
        .map(|p| {
            let (d, w) = io::load_distance_matrix(p, None)?;
            warn_all(&w);
            Ok((io::group_name(p), d))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = io::group_table(&groups, &ctx.g.psi, ctx.g.level)?;
    println!("{:<10} {:>6} {:>12} {:>10} {:>12} {:>12} {:>5}", "group", "n", "estimate", "se", "lower", "upper", "rank");
    for r in &table.rows {
        println!(
            "{:<10} {:>6} {:>12.4} {:>10.4} {:>12.4} {:>12.4} {:>5}",
            r.group, r.n, r.estimate, r.std_error, r.lower, r.upper, r.rank
        );
    }
    let paths: Vec<&Path> = files.iter().map(|p| p.as_path()).collect();
    let prov = ctx
        .provenance("table1", &paths)?
        .with_transform(&ctx.g.psi, Some(table.transform_used));
    let out = ctx.emit(&ctx.bundle(prov, table), "table1", ctx.g.format)?;
    println!("wrote {}", out.display());
    Ok(())
}
