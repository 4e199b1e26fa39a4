use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netmrt::estimators::{estimate, EstimateReport};
use netmrt::harness::{self, OutputFormat};
use netmrt::meanfield::{mf_derivative_at, mf_fixed_point, FixedPointOptions};
use netmrt::oracle::{exact_mean, exact_stationary, stationary_sde};
use netmrt::simulate::{simulate, SimOptions, Trajectory};
use netmrt::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "netmrt", version, about = "Micro-randomized trials on interference networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the contraction and smoothness constants of a configuration.
    Validate(Common),
    /// Simulate one replication and dump its trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Horizon to simulate; the longest configured horizon by default.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Mean-field fixed point, policy derivative along 1 and truths.
    Meanfield(Common),
    /// Exact stationary distribution and estimand values (small n only).
    Oracle(Common),
    /// Run the configured estimators on a saved trajectory.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Run a full experiment.
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Shipped scenario name instead of a config file.
    #[arg(long)]
    scenario: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        let inner = match &e {
            Error::Replication { source, .. } => source.as_ref(),
            other => other,
        };
        match inner {
            Error::ConfigInvalid(_)
            | Error::InvalidSpec(_)
            | Error::InvalidKernel(_)
            | Error::InvalidProbability(_)
            | Error::PolicyOutOfRange { .. }
            | Error::RangeViolation { .. }
            | Error::LengthMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::SelfLoop(_)
            | Error::Parse(_)
            | Error::ContractionViolated(_)
            | Error::TooLarge { .. } => Failure::Validation(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => ExperimentConfig::from_file(path).map_err(|e| match e {
                Error::Io(io) => Failure::Validation(format!("cannot read {}: {io}", path.display())),
                other => other.into(),
            })?,
            (None, Some(name)) => harness::scenario(name)?,
            (None, None) => return Err(Failure::Validation("pass --config PATH or --scenario NAME".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    /// Writes `name` under `--out`, or prints it.
    fn emit(&self, name: &str, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(name), text)?;
            }
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn validate(c: &Common) -> Result<(), Failure> {
    let cfg = c.load()?;
    let g = cfg.build_graph()?;
    let m = cfg.build_model(&g)?;
    let r = m.assumption_constants(&g);
    let text = match c.format {
        Format::Json => json(&r)?,
        Format::Csv => format!(
            "lipschitz,self_feedback,second_derivative,max_degree,contraction,smoothness,contraction_ok,smoothness_ok\n{},{},{},{},{},{},{},{}\n",
            r.lipschitz, r.self_feedback, r.second_derivative, r.max_degree, r.contraction, r.smoothness, r.contraction_ok, r.smoothness_ok
        ),
    };
    c.emit(&format!("assumptions.{}", ext(c.format)), &text)?;
    if !r.contraction_ok {
        return Err(Failure::Validation(format!("contraction constant C = {} ≥ 1", r.contraction)));
    }
    Ok(())
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn simulate_cmd(c: &Common, replication: u64, horizon: Option<usize>) -> Result<(), Failure> {
    let cfg = c.load()?;
    let exp = cfg.resolve()?;
    let horizon = horizon.unwrap_or_else(|| cfg.horizons.iter().copied().max().unwrap_or(0));
    let opts = SimOptions::new(cfg.seed)
        .replication(replication)
        .burn_in(cfg.burn_in())
        .init(cfg.init.clone());
    let traj = simulate(&exp.graph, &exp.model, &exp.policy, horizon, &opts)?;
    match (&c.out, c.format) {
        (Some(dir), Format::Json) => {
            std::fs::create_dir_all(dir)?;
            traj.save(dir.join("trajectory.bin"))?;
            std::fs::write(dir.join("trajectory.json"), json(&traj.meta)?)?;
        }
        (Some(dir), Format::Csv) => {
            std::fs::create_dir_all(dir)?;
            traj.save(dir.join("trajectory.csv"))?;
        }
        (None, _) => traj.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn meanfield_cmd(c: &Common) -> Result<(), Failure> {
    let cfg = c.load()?;
    let exp = cfg.resolve()?;
    let (g, m, pi) = (&exp.graph, &exp.model, &exp.policy);
    let sol = mf_fixed_point(g, m, pi, &FixedPointOptions::default())?;
    let deriv = mf_derivative_at(g, m, &sol, pi, &vec![1.0; g.n()])?;
    let truths = harness::Experiment { truth: netmrt::TruthMode::Meanfield, ..exp }.truths(&cfg.estimands)?;
    match c.format {
        Format::Json => {
            let v = serde_json::json!({
                "solution": sol,
                "derivative": deriv,
                "estimands": cfg.estimands.iter().zip(&truths).map(|(e, t)| serde_json::json!({"estimand": e.name(), "value": t})).collect::<Vec<_>>(),
            });
            c.emit("meanfield.json", &json(&v)?)
        }
        Format::Csv => {
            let mut text = sol.to_report();
            text.push_str(&format!("# derivative along 1: mean = {} residual = {:e}\n", deriv.average(), deriv.residual));
            for (e, t) in cfg.estimands.iter().zip(&truths) {
                text.push_str(&format!("# {} = {}\n", e.name(), t.unwrap_or(f64::NAN)));
            }
            c.emit("meanfield.csv", &text)
        }
    }
}

fn oracle_cmd(c: &Common) -> Result<(), Failure> {
    let cfg = c.load()?;
    let exp = harness::Experiment {
        truth: netmrt::TruthMode::Oracle,
        ..cfg.resolve()?
    };
    let dist = exact_stationary(&exp.graph, &exp.model, &exp.policy)?;
    let mean = exact_mean(&dist);
    let sde = stationary_sde(&exp.graph, &exp.model, &dist)?;
    let truths = exp.truths(&cfg.estimands)?;
    let avg = mean.iter().sum::<f64>() / mean.len().max(1) as f64;
    match c.format {
        Format::Json => {
            let v = serde_json::json!({
                "stationary_mean": mean,
                "average_stationary_mean": avg,
                "stationary_sde": sde,
                "residual": dist.residual,
                "estimands": cfg.estimands.iter().zip(&truths).map(|(e, t)| serde_json::json!({"estimand": e.name(), "value": t})).collect::<Vec<_>>(),
            });
            c.emit("oracle.json", &json(&v)?)?;
        }
        Format::Csv => {
            let mut text = format!(
                "# exact stationary law: residual = {:e}, iterations = {}\n# stationary_sde = {sde}\n",
                dist.residual, dist.iterations
            );
            for (e, t) in cfg.estimands.iter().zip(&truths) {
                text.push_str(&format!("# {} = {}\n", e.name(), t.unwrap_or(f64::NAN)));
            }
            text.push_str("unit,stationary_mean\n");
            for (i, p) in mean.iter().enumerate() {
                text.push_str(&format!("{i},{p}\n"));
            }
            c.emit("oracle.csv", &text)?;
        }
    }
    if let Some(dir) = &c.out {
        dist.write_csv(std::fs::File::create(dir.join("distribution.csv"))?)?;
    }
    Ok(())
}

fn estimate_cmd(c: &Common, path: &Path) -> Result<(), Failure> {
    let cfg = c.load()?;
    let exp = cfg.resolve()?;
    let traj = Trajectory::load(path).map_err(|e| match e {
        Error::Io(io) => Failure::Validation(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })?;
    traj.check_against(&exp.graph)?;
    let reports: Vec<EstimateReport> = cfg
        .estimands
        .iter()
        .map(|e| estimate(&traj, &exp.graph, &exp.policy, e))
        .collect::<Result<_, _>>()?;
    match c.format {
        Format::Json => c.emit("estimates.json", &json(&reports)?),
        Format::Csv => {
            let text: String = reports.iter().map(|r| r.to_record() + "\n").collect();
            c.emit("estimates.txt", &text)
        }
    }
}

fn experiment_cmd(c: &Common) -> Result<(), Failure> {
    let cfg = c.load()?;
    let out = harness::run_experiment(&cfg)?;
    match c.out.clone().or_else(|| cfg.output_dir()) {
        Some(dir) => {
            for path in out.write(&dir, c.format.into())? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => match c.format {
            Format::Csv => print!("{}", out.summary_csv()),
            Format::Json => print!("{}", json(&out.summary)?),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(c) => validate(c),
        Command::Simulate { common, replication, horizon } => simulate_cmd(common, *replication, *horizon),
        Command::Meanfield(c) => meanfield_cmd(c),
        Command::Oracle(c) => oracle_cmd(c),
        Command::Estimate { common, trajectory } => estimate_cmd(common, trajectory),
        Command::Experiment(c) => experiment_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
