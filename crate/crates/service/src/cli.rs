use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use combitrial::config::Design;
use combitrial::export;
use combitrial::inference::PosteriorDraws;
use combitrial::simulator::{build_scenario, run_oc_grid, OcReport, Scenario, ScenarioSpec};
use combitrial::stage1::estimate_mtd_curve;
use serde::de::DeserializeOwned;

use crate::api::AppState;
use crate::error::ServiceError;
use crate::store::EventStore;

#[derive(Debug, Parser)]
#[command(name = "combitrial", version, about = "Two-stage dual-agent dose-finding: simulate, conduct, report")]
pub struct Cli {
    /// Design configuration document (JSON). Defaults to the cisplatin/cabazitaxel design.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo operating characteristics of a scenario.
    Simulate(SimulateArgs),
    /// Constructs a scenario from its specification.
    BuildScenario(BuildScenarioArgs),
    /// MTD curve grid at the posterior medians of stored toxicity draws.
    MtdCurve(MtdCurveArgs),
    /// Starts the trial-conduct HTTP API.
    Serve(ServeArgs),
    /// Plot-data CSVs from a stored OC report.
    Report(ReportArgs),
    /// Prints the design document in effect (the `--config` file or a default).
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Reduced MCMC settings for Monte-Carlo work; ignored with `--config`.
    #[arg(long)]
    pub desk: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON, or a scenario specification to construct first.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Number of simulated trials.
    #[arg(long = "M", short = 'm', default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Borrowing weights to compare on common random numbers. Defaults to the design's w.
    #[arg(long = "w", value_delimiter = ',')]
    pub w: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct BuildScenarioArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MtdCurveArgs {
    /// Toxicity posterior draws CSV.
    #[arg(long)]
    pub draws: PathBuf,
    /// Target toxicity. Defaults to the design's theta.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Grid points. Defaults to the design's grid size.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Persistence root for event logs.
    #[arg(long, env = "COMBITRIAL_DATA", default_value = "combitrial-data")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// OC report JSON written by `simulate`.
    #[arg(long)]
    pub oc: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        combitrial::Error::Config {
            path: format!("{}:{}", path.display(), e.path().to_string().replace('.', "/")),
            message: e.into_inner().to_string(),
        }
        .into()
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), ServiceError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_design(path: Option<&Path>) -> Result<Design, ServiceError> {
    match path {
        Some(p) => Ok(Design::from_json(&fs::read_to_string(p)?)?),
        None => Ok(Design::ciscab()),
    }
}

/// Reads a scenario, constructing it when the file holds a specification.
pub fn load_scenario(path: &Path) -> Result<Scenario, ServiceError> {
    let value: serde_json::Value = read_json(path)?;
    let sc = if value.get("true_tox").is_some() {
        read_json::<Scenario>(path)?
    } else {
        build_scenario(&read_json::<ScenarioSpec>(path)?)?
    };
    sc.validate()?;
    Ok(sc)
}

fn create_file(path: &Path) -> Result<fs::File, ServiceError> {
    Ok(fs::File::create(path)?)
}

pub fn simulate(design: &Design, args: &SimulateArgs) -> Result<OcReport, ServiceError> {
    let scenario = load_scenario(&args.scenario)?;
    let ws = if args.w.is_empty() { vec![design.hyper.w] } else { args.w.clone() };
    let run = run_oc_grid(&scenario, args.m, design, &ws, args.seed, args.workers)?;
    let report = OcReport::new(&scenario, design, args.seed, &run)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("oc_report.json"), &report)?;
    export::write_oc_table(create_file(&args.out.join("oc_table.csv"))?, &report.summaries)?;
    Ok(report)
}

/// Writes the table, power-by-w, true-curve grid and one surface file per summary.
pub fn report(args: &ReportArgs) -> Result<Vec<PathBuf>, ServiceError> {
    let rep: OcReport = read_json(&args.oc)?;
    fs::create_dir_all(&args.out)?;
    let mut written = Vec::new();
    let mut emit = |name: String| -> Result<fs::File, ServiceError> {
        let p = args.out.join(name);
        written.push(p.clone());
        create_file(&p)
    };
    export::write_oc_table(emit("oc_table.csv".into())?, &rep.summaries)?;
    export::write_power_by_w(emit("power_by_w.csv".into())?, &rep.summaries)?;
    export::write_curve_grid(emit("true_curve.csv".into())?, &rep.true_curve_grid, &rep.design.agents)?;
    for (k, s) in rep.summaries.iter().enumerate() {
        export::write_surface(emit(format!("surface_w{}.csv", s.w))?, &rep, k)?;
    }
    Ok(written)
}

pub fn mtd_curve(design: &Design, args: &MtdCurveArgs, out: &mut dyn Write) -> Result<(), ServiceError> {
    let draws = PosteriorDraws::read_csv(fs::File::open(&args.draws)?)?;
    let theta = args.theta.unwrap_or(design.stage1.theta);
    let curve = estimate_mtd_curve(&draws, theta)?;
    let grid = curve.grid(args.points.unwrap_or(design.stage2.grid_size));
    match &args.out {
        Some(p) => export::write_curve_grid(create_file(p)?, &grid.points, &design.agents)?,
        None => export::write_curve_grid(out, &grid.points, &design.agents)?,
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), ServiceError> {
    let design = load_design(cli.config.as_deref())?;
    match cli.command {
        Command::Config(args) => {
            let d = if args.desk && cli.config.is_none() { Design::ciscab_desk() } else { design };
            println!("{}", d.to_json_pretty());
        }
        Command::Simulate(args) => {
            let rep = simulate(&design, &args)?;
            for s in &rep.summaries {
                println!("w = {}: reject rate {:.3} over {} trials", s.w, s.reject_rate, s.m);
            }
        }
        Command::BuildScenario(args) => {
            let sc = build_scenario(&read_json(&args.spec)?)?;
            match args.out {
                Some(p) => write_json(&p, &sc)?,
                None => println!("{}", serde_json::to_string_pretty(&sc)?),
            }
        }
        Command::MtdCurve(args) => mtd_curve(&design, &args, &mut std::io::stdout().lock())?,
        Command::Serve(args) => {
            let store = EventStore::open(&args.data)?;
            let app = AppState::load(store, design)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((args.bind.as_str(), args.port)).await?;
                log::info!("listening on {}", listener.local_addr()?);
                crate::api::serve(listener, app).await
            })?;
        }
        Command::Report(args) => {
            for p in report(&args)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
