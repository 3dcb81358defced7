use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fcsimpute::estimators::{rubin_pool, DfMode, McfVariance};
use fcsimpute::fcs::{run_multiple_imputation, Dependency, HistoryMode, ImputationConfig, RateBound, TtreRateMode};
use fcsimpute::io::{load_dataset_dir, save_dataset, save_imputations};
use fcsimpute::rng::StreamKey;
use fcsimpute::sim::{simulate_trial, CensoringMechanism, Preset, SimulationConfig};
use fcsimpute::study::{estimate, run_study, Estimand, Method, StudyConfig};
use fcsimpute::{Error, Result};

/// Multiple imputation for monotone-missing longitudinal trial data.
#[derive(Parser)]
#[command(name = "fcsimpute", version)]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config for the subcommand; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trial dataset.
    Simulate(SimulateArgs),
    /// Impute a censored dataset m times.
    Impute(ImputeArgs),
    /// Estimate arm-level targets on one or more datasets.
    Estimate(EstimateArgs),
    /// Pool per-imputation estimates with Rubin's rules.
    Pool(PoolArgs),
    /// Run a full simulation study.
    Study(StudyArgs),
    /// Check a dataset against the schema and monotone-missingness rules.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    PaperMain,
    PaperReducedDependency,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::PaperMain => Preset::PaperMain,
            PresetArg::PaperReducedDependency => Preset::PaperReducedDependency,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CensoringArg {
    Independent,
    Dependent,
}

impl From<CensoringArg> for CensoringMechanism {
    fn from(c: CensoringArg) -> Self {
        match c {
            CensoringArg::Independent => CensoringMechanism::Independent,
            CensoringArg::Dependent => CensoringMechanism::Dependent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HistoryArg {
    Full,
    Composite,
}

#[derive(Clone, Copy, ValueEnum)]
enum DependencyArg {
    Full,
    Separated,
}

#[derive(Clone, Copy, ValueEnum)]
enum TtreRateArg {
    AsPaper,
    OffsetConsistent,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateBoundArg {
    Unbounded,
    ObservedMax,
}

#[derive(Clone, Copy, ValueEnum)]
enum McfVarianceArg {
    Poisson,
    Robust,
}

impl From<McfVarianceArg> for McfVariance {
    fn from(v: McfVarianceArg) -> Self {
        match v {
            McfVarianceArg::Poisson => McfVariance::Poisson,
            McfVarianceArg::Robust => McfVariance::Robust,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DfArg {
    Normal,
    BarnardRubin,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Named parameter set; replaces the config's simulation settings.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Censoring mechanism used with --preset.
    #[arg(long, value_enum, default_value = "independent")]
    censoring: CensoringArg,
    /// Subjects per trial.
    #[arg(long)]
    n: Option<usize>,
}

impl ScenarioArgs {
    fn apply(&self, cfg: &mut SimulationConfig) {
        if let Some(p) = self.preset {
            let n = cfg.n;
            *cfg = Preset::from(p).config(self.censoring.into());
            cfg.n = n;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
    }
}

#[derive(Args)]
struct ImputationArgs {
    /// Number of imputations.
    #[arg(long)]
    m: Option<usize>,
    /// Fit and impute each arm separately.
    #[arg(long)]
    by_group: bool,
    #[arg(long, value_enum)]
    history: Option<HistoryArg>,
    #[arg(long, value_enum)]
    dependency: Option<DependencyArg>,
    /// How the recurrent-event rate is scaled.
    #[arg(long, value_enum)]
    ttre_rate: Option<TtreRateArg>,
    /// Cap imputed recurrent-event rates.
    #[arg(long, value_enum)]
    rate_bound: Option<RateBoundArg>,
}

impl ImputationArgs {
    fn apply(&self, cfg: &mut ImputationConfig) {
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if self.by_group {
            cfg.by_group = true;
        }
        if let Some(h) = self.history {
            cfg.history_mode = match h {
                HistoryArg::Full => HistoryMode::Full,
                HistoryArg::Composite => HistoryMode::Composite,
            };
        }
        if let Some(d) = self.dependency {
            cfg.dependency = match d {
                DependencyArg::Full => Dependency::Full,
                DependencyArg::Separated => Dependency::Separated,
            };
        }
        if let Some(r) = self.ttre_rate {
            cfg.ttre_rate_mode = match r {
                TtreRateArg::AsPaper => TtreRateMode::AsPaper,
                TtreRateArg::OffsetConsistent => TtreRateMode::OffsetConsistent,
            };
        }
        if let Some(b) = self.rate_bound {
            cfg.rate_bound = match b {
                RateBoundArg::Unbounded => RateBound::Unbounded,
                RateBoundArg::ObservedMax => RateBound::ObservedMax,
            };
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Directory for the censored dataset.
    #[arg(long)]
    out: PathBuf,
    /// Also write the uncensored dataset here.
    #[arg(long)]
    complete_out: Option<PathBuf>,
}

#[derive(Args)]
struct ImputeArgs {
    /// Dataset directory (subjects.csv, events.csv, schema.json).
    #[arg(long)]
    data: PathBuf,
    /// Output directory; imputations go to imp_001, imp_002, ...
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    imputation: ImputationArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset directories.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Target such as survival@12, mcf@12, mean:y3@12, proportion:y4@12.
    /// Defaults to all four at the last visit.
    #[arg(long)]
    estimand: Vec<String>,
    /// Variance estimator for MCF targets.
    #[arg(long, value_enum, default_value = "robust")]
    mcf_variance: McfVarianceArg,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoolArgs {
    /// CSV written by `estimate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "normal")]
    df: DfArg,
    /// Complete-data degrees of freedom for --df barnard-rubin.
    #[arg(long)]
    complete_df: Option<f64>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    imputation: ImputationArgs,
    #[arg(long)]
    replicates: Option<usize>,
    /// Variance estimator for MCF targets.
    #[arg(long, value_enum)]
    mcf_variance: Option<McfVarianceArg>,
    /// Comma-separated imputation methods: full, reduced, composite.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Subjects in the reference sample.
    #[arg(long)]
    reference_n: Option<usize>,
    /// JSON file caching reference values between runs.
    #[arg(long)]
    reference_cache: Option<PathBuf>,
    /// Directory for summary.csv, replicates.csv, curves.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                file: p.display().to_string(),
                line: e.line(),
                column: String::new(),
                message: e.to_string(),
            })
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let mut cfg: SimulationConfig = read_config(cli.config.as_deref())?;
    args.scenario.apply(&mut cfg);
    let (complete, censored) = simulate_trial(&cfg, &StreamKey::new(cli.seed.unwrap_or(0)))?;
    save_dataset(&censored, &args.out)?;
    if let Some(dir) = &args.complete_out {
        save_dataset(&complete, dir)?;
    }
    let n_censored = censored.subjects.iter().filter(|s| s.censor_time < cfg.grid.t_max()).count();
    eprintln!("simulated {} subjects, {n_censored} censored before t = {}", cfg.n, cfg.grid.t_max());
    Ok(())
}

fn impute(cli: &Cli, args: &ImputeArgs) -> Result<()> {
    let mut cfg: ImputationConfig = read_config(cli.config.as_deref())?;
    args.imputation.apply(&mut cfg);
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let d = load_dataset_dir(&args.data)?;
    let imputed = run_multiple_imputation(&d, &cfg)?;
    let paths = save_imputations(&imputed, &args.out)?;
    eprintln!("wrote {} imputations to {}", paths.len(), args.out.display());
    Ok(())
}

fn estimate_cmd(args: &EstimateArgs) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["dataset", "estimand", "group", "estimate", "variance"])?;
    for dir in &args.data {
        let d = load_dataset_dir(dir)?;
        let estimands = if args.estimand.is_empty() {
            Estimand::standard_set(d.grid.t_max())
        } else {
            args.estimand.iter().map(|s| s.parse()).collect::<Result<_>>()?
        };
        for e in &estimands {
            for g in 0..2u8 {
                let (est, var) = estimate(&d, e, g, args.mcf_variance.into())?;
                w.write_record([
                    dir.display().to_string(),
                    e.to_string(),
                    g.to_string(),
                    est.to_string(),
                    var.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn pool(args: &PoolArgs) -> Result<()> {
    let df_mode = match args.df {
        DfArg::Normal => DfMode::Normal,
        DfArg::BarnardRubin => DfMode::BarnardRubin {
            complete_df: args.complete_df,
        },
    };
    let file = args.input.display().to_string();
    let mut rdr = csv::Reader::from_path(&args.input)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            file: file.clone(),
            line: 1,
            column: name.into(),
            message: "column not found in header".into(),
        })
    };
    let (c_e, c_g, c_est, c_var) = (col("estimand")?, col("group")?, col("estimate")?, col("variance")?);

    // Groups keep their first-appearance order.
    let mut groups: Vec<((String, String), Vec<f64>, Vec<f64>)> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize, name: &str| -> Result<f64> {
            let cell = row.get(i).unwrap_or("").trim();
            cell.parse().map_err(|_| Error::Parse {
                file: file.clone(),
                line,
                column: name.into(),
                message: format!("`{cell}` is not a number"),
            })
        };
        let key = (row[c_e].to_owned(), row[c_g].to_owned());
        let (est, var) = (num(c_est, "estimate")?, num(c_var, "variance")?);
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                g.1.push(est);
                g.2.push(var);
            }
            None => groups.push((key, vec![est], vec![var])),
        }
    }

    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record([
        "estimand", "group", "m", "estimate", "se", "ci_lower", "ci_upper", "within", "between", "df",
    ])?;
    for ((e, g), ests, vars) in &groups {
        let p = rubin_pool(ests, vars, df_mode)?;
        w.write_record([
            e.clone(),
            g.clone(),
            p.m.to_string(),
            p.theta_bar.to_string(),
            p.se().to_string(),
            p.ci.0.to_string(),
            p.ci.1.to_string(),
            p.v_within.to_string(),
            p.v_between.to_string(),
            p.df.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn study(cli: &Cli, args: &StudyArgs) -> Result<()> {
    let mut cfg: StudyConfig = read_config(cli.config.as_deref())?;
    args.scenario.apply(&mut cfg.simulation);
    args.imputation.apply(&mut cfg.imputation);
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(v) = args.mcf_variance {
        cfg.mcf_variance = v.into();
    }
    if !args.methods.is_empty() {
        cfg.methods = args
            .methods
            .iter()
            .map(|m| match m.as_str() {
                "full" => Ok(Method::full()),
                "reduced" => Ok(Method::reduced()),
                "composite" => Ok(Method {
                    history_mode: Some(HistoryMode::Composite),
                    ..Method::named("composite")
                }),
                other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
            })
            .collect::<Result<_>>()?;
    }
    if let Some(n) = args.reference_n {
        cfg.reference_n = n;
    }
    if args.reference_cache.is_some() {
        cfg.reference_cache = args.reference_cache.clone();
    }
    if args.out.is_some() {
        cfg.output_dir = args.out.clone();
    }

    let out = run_study(&cfg)?;
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "{:<18} {:>5} {:<14} {:>9} {:>9} {:>9} {:>9} {:>6}",
        "estimand", "group", "method", "truth", "mean", "sd", "mean_se", "cp"
    )?;
    for r in &out.summary.rows {
        writeln!(
            stdout,
            "{:<18} {:>5} {:<14} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>6.3}",
            r.estimand, r.group, r.method, r.truth, r.mean, r.sd, r.mean_se, r.coverage
        )?;
    }
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<()> {
    let d = load_dataset_dir(&args.data)?;
    println!(
        "valid: {} subjects, {} missing longitudinal values",
        d.subjects.len(),
        d.count_missing()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Impute(a) => impute(cli, a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Pool(a) => pool(a),
        Command::Study(a) => study(cli, a),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Error::Validation(violations) = &e {
                for v in violations {
                    eprintln!("{v}");
                }
            }
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
