use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use sdtm::driver::study::{
    convergence_study, fit_study, scheme_slopes, support_table, width_sweep, FitTarget, SweepRow,
};
use sdtm::driver::{NetworkConfig, SolverConfig};
use sdtm::problems::{Benchmark, PdeProblem};
use sdtm::spectral::{ReferenceCache, DEFAULT_DT, DEFAULT_N};
use sdtm::{Error, Solver};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "sdtm", version, about = "Time marching with random neural bases")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark preset used when no config file is given.
    #[arg(long)]
    problem: Option<Benchmark>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Solve(Common),
    /// Final error over schemes and step sizes, with fitted orders.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "euler,rk2,bdf2,rk4,bdf4")]
        schemes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "4e-3,2e-3,1e-3,5e-4")]
        dts: Vec<f64>,
    },
    /// Final error over hidden widths.
    Widths {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "25,50,100,200,400")]
        widths: Vec<i64>,
    },
    /// Supervised least-squares fits over initialization coefficients.
    Fit {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// `sin:<k>` for sin(kπx) or `burgers:<t>` for a reference snapshot.
        #[arg(long, default_value = "sin:1")]
        target: String,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        rs: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        width: usize,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        features: Vec<u32>,
        #[arg(long, default_value_t = 1025)]
        points: usize,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// ε-support of tanh(k sin x) for a list of k.
    Support {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Comma list, or `a..b` for the integers a through b.
        #[arg(long, default_value = "1..50")]
        ks: String,
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        #[arg(long, default_value_t = 1024)]
        grid_n: usize,
    },
    /// Compute and cache spectral reference snapshots.
    Reference {
        #[arg(long)]
        problem: Benchmark,
        #[arg(long, default_value = "reference")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(anyhow::Error),
    Divergence(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Divergence(_) => 2,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Divergence(e) | Failure::Other(e) => e,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.into()),
            e if e.is_divergence() => Failure::Divergence(e.into()),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

type Outcome = Result<(), Failure>;

fn load_config(common: &Common) -> Result<SolverConfig, Failure> {
    let mut cfg = match (&common.config, common.problem) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Config)?;
            SolverConfig::from_json_str(&text)?
        }
        (None, Some(p)) => SolverConfig::preset(p),
        (None, None) => {
            return Err(Failure::Config(anyhow::anyhow!(
                "either --config or --problem is required"
            )))
        }
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Other)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.into()))?;
    fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Other)
}

fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Other)?;
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Other(e.into()))?;
    }
    w.flush().map_err(|e| Failure::Other(e.into()))
}

#[derive(Serialize)]
struct Metadata<'a, E: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a SolverConfig,
    #[serde(flatten)]
    extra: E,
}

fn metadata<E: Serialize>(dir: &Path, command: &str, config: &SolverConfig, extra: E) -> Outcome {
    write_json(&dir.join("config.json"), config)?;
    write_json(
        &dir.join("metadata.json"),
        &Metadata {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            extra,
        },
    )
}

fn solve(common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    out_dir(&common.out_dir)?;
    let dir = &common.out_dir;
    let mut solver = Solver::new(cfg.clone())?;
    let result = solver.run();
    solver.record().write_csv_file(&dir.join("record.csv"))?;
    let mut snaps = solver.snapshots().to_vec();
    if !snaps.iter().any(|s| (s.t - solver.time()).abs() < 1e-12) {
        snaps.push(solver.snapshot()?);
    }
    for s in &snaps {
        s.write_csv_file(&dir.join(format!("snapshot_t{:.6}.csv", s.t)))?;
    }
    let rec = solver.record();
    #[derive(Serialize)]
    struct Summary {
        steps: usize,
        final_t: f64,
        final_rel_l2: f64,
        final_linf: f64,
        total_ms: f64,
        reinit_times: Vec<f64>,
        solves: usize,
        diverged: Option<String>,
    }
    let summary = Summary {
        steps: solver.step_index(),
        final_t: solver.time(),
        final_rel_l2: rec.final_rel_l2(),
        final_linf: rec.final_linf(),
        total_ms: rec.total_ms,
        reinit_times: rec.reinit_times(),
        solves: solver.solves(),
        diverged: result.as_ref().err().map(|e| e.to_string()),
    };
    metadata(dir, "solve", &cfg, &summary)?;
    result?;
    println!(
        "{} {} t={} rel_l2={:e} linf={:e}",
        cfg.problem,
        cfg.scheme,
        solver.time(),
        rec.final_rel_l2(),
        rec.final_linf()
    );
    Ok(())
}

fn any_diverged(rows: &[SweepRow]) -> Outcome {
    let n = rows.iter().filter(|r| r.diverged).count();
    if n > 0 {
        return Err(Failure::Divergence(anyhow::anyhow!("{n} run(s) diverged")));
    }
    Ok(())
}

fn convergence(common: &Common, schemes: &[String], dts: &[f64]) -> Outcome {
    let cfg = load_config(common)?;
    out_dir(&common.out_dir)?;
    let rows = convergence_study(&cfg, schemes, dts, common.threads)?;
    let slopes = scheme_slopes(&rows);
    #[derive(Serialize)]
    struct Row<'a> {
        scheme: &'a str,
        dt: f64,
        rel_l2: f64,
        linf: f64,
        wall_ms: f64,
        diverged: bool,
        slope: Option<f64>,
    }
    let table: Vec<Row> = rows
        .iter()
        .map(|r| Row {
            scheme: &r.scheme,
            dt: r.dt,
            rel_l2: r.rel_l2,
            linf: r.linf,
            wall_ms: r.wall_ms,
            diverged: r.diverged,
            slope: slopes.iter().find(|s| s.0 == r.scheme).and_then(|s| s.1),
        })
        .collect();
    write_rows(&common.out_dir.join("convergence.csv"), &table)?;
    #[derive(Serialize)]
    struct Extra<'a> {
        schemes: &'a [String],
        dts: &'a [f64],
    }
    metadata(&common.out_dir, "convergence", &cfg, Extra { schemes, dts })?;
    for (s, k) in &slopes {
        match k {
            Some(k) => println!("{s}: slope {k:.3}"),
            None => println!("{s}: slope -"),
        }
    }
    any_diverged(&rows)
}

fn widths(common: &Common, widths: &[i64]) -> Outcome {
    if widths.iter().any(|&w| w <= 0) {
        return Err(Failure::Config(anyhow::anyhow!("widths must be positive")));
    }
    let widths: Vec<usize> = widths.iter().map(|&w| w as usize).collect();
    let mut cfg = load_config(common)?;
    // narrow networks fit the initial state poorly by design
    cfg.init_abort = f64::INFINITY;
    out_dir(&common.out_dir)?;
    let rows = width_sweep(&cfg, &widths, common.threads)?;
    #[derive(Serialize)]
    struct Row {
        width: usize,
        rel_l2: f64,
        linf: f64,
        wall_ms: f64,
        diverged: bool,
    }
    let table: Vec<Row> = rows
        .iter()
        .map(|r| Row {
            width: r.width,
            rel_l2: r.rel_l2,
            linf: r.linf,
            wall_ms: r.wall_ms,
            diverged: r.diverged,
        })
        .collect();
    write_rows(&common.out_dir.join("widths.csv"), &table)?;
    #[derive(Serialize)]
    struct Extra<'a> {
        widths: &'a [usize],
    }
    metadata(&common.out_dir, "widths", &cfg, Extra { widths: &widths })?;
    for r in &rows {
        println!("width {}: rel_l2 {:e}", r.width, r.rel_l2);
    }
    any_diverged(&rows)
}

fn parse_target(s: &str) -> Result<FitTarget, Failure> {
    let bad = || Failure::Config(anyhow::anyhow!("target must be sin:<k> or burgers:<t>, got {s}"));
    let (kind, v) = s.split_once(':').ok_or_else(bad)?;
    let v: f64 = v.parse().map_err(|_| bad())?;
    match kind {
        "sin" => Ok(FitTarget::Sine { k: v }),
        "burgers" => Ok(FitTarget::Burgers { t: v }),
        _ => Err(bad()),
    }
}

#[allow(clippy::too_many_arguments)]
fn fit(
    dir: &Path,
    threads: usize,
    target: &str,
    rs: &[f64],
    width: usize,
    features: &[u32],
    points: usize,
    seeds: u64,
) -> Outcome {
    let target = parse_target(target)?;
    if width == 0 {
        return Err(Failure::Config(anyhow::anyhow!("width must be positive")));
    }
    let net = NetworkConfig {
        hidden: vec![width],
        features: Some(features.to_vec()),
        ..NetworkConfig::default()
    };
    out_dir(dir)?;
    let (rows, summary) = fit_study(&target, &net, points, rs, seeds, threads)?;
    write_rows(&dir.join("fit.csv"), &rows)?;
    write_rows(&dir.join("fit_summary.csv"), &summary)?;
    #[derive(Serialize)]
    struct Meta<'a> {
        command: &'a str,
        target: String,
        network: &'a NetworkConfig,
        points: usize,
        rs: &'a [f64],
        seeds: u64,
    }
    write_json(
        &dir.join("metadata.json"),
        &Meta {
            command: "fit",
            target: target.label(),
            network: &net,
            points,
            rs,
            seeds,
        },
    )?;
    for s in &summary {
        println!("r {}: mse {:e} ± {:e}", s.r, s.mse_mean, s.mse_std);
    }
    Ok(())
}

fn parse_ks(s: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Config(anyhow::anyhow!("cannot parse k list {s}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..=b).map(f64::from).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn support(dir: &Path, ks: &str, epsilon: f64, grid_n: usize) -> Outcome {
    let ks = parse_ks(ks)?;
    if !(epsilon > 0.0) || ks.iter().any(|&k| !(k >= 0.0)) {
        return Err(Failure::Config(anyhow::anyhow!("need epsilon > 0 and k >= 0")));
    }
    out_dir(dir)?;
    let rows = support_table(&ks, epsilon, grid_n).map_err(|e| match e {
        Error::InvalidArgument(_) => Failure::Config(e.into()),
        e => Failure::from(e),
    })?;
    write_rows(&dir.join("support.csv"), &rows)?;
    #[derive(Serialize)]
    struct Meta<'a> {
        command: &'a str,
        ks: &'a [f64],
        epsilon: f64,
        grid_n: usize,
    }
    write_json(
        &dir.join("metadata.json"),
        &Meta {
            command: "support",
            ks: &ks,
            epsilon,
            grid_n,
        },
    )?;
    let max = rows
        .iter()
        .map(|r| r.ratio)
        .filter(|v| v.is_finite())
        .fold(f64::NAN, f64::max);
    println!("max S_k/k = {max}");
    Ok(())
}

fn reference(problem: Benchmark, dir: &Path, n: usize, dt: f64, times: &[f64]) -> Outcome {
    let p = PdeProblem::<f64>::new(problem);
    let snaps = ReferenceCache::new(dir).get_or_compute(&p, n, dt, times)?;
    for s in &snaps {
        info!("{} t={} cached", problem, s.t);
    }
    println!("{} snapshot(s) in {}", snaps.len(), dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.cmd {
        Command::Solve(c) => solve(&c),
        Command::Convergence {
            common,
            schemes,
            dts,
        } => convergence(&common, &schemes, &dts),
        Command::Widths { common, widths: w } => widths(&common, &w),
        Command::Fit {
            out_dir,
            threads,
            target,
            rs,
            width,
            features,
            points,
            seeds,
        } => fit(&out_dir, threads, &target, &rs, width, &features, points, seeds),
        Command::Support {
            out_dir,
            ks,
            epsilon,
            grid_n,
        } => support(&out_dir, &ks, epsilon, grid_n),
        Command::Reference {
            problem,
            out_dir,
            n,
            dt,
            times,
        } => reference(problem, &out_dir, n, dt, &times),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
