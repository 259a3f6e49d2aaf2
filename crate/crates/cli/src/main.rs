use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use coverbcd::ctsp::{check_permutation, optimize_points, route_length_of, TourProblem};
use coverbcd::heuristics::{solve, HeuristicConfig, HeuristicError};
use coverbcd::io::{
    generate_instance, load_instance, preprocess, render_svg, save_instance, write_file,
    GeneratorParams, IoError, RenderSpec,
};
use coverbcd::{BcdConfig, CtspError, Instance, OracleParams, Point2, Tour};

#[derive(Debug, Parser)]
#[command(
    name = "coverbcd",
    version,
    about = "Continuous TSP over polygons by block coordinate descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cheapest insertion followed by relocation local search.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        alpha: f64,
        /// Search log as CSV.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Optimize the points of a fixed visiting order.
    OptimizeRoute {
        #[arg(long)]
        instance: PathBuf,
        /// Comma-separated 1-based polygon ids; defaults to 1,2,...,p.
        #[arg(long)]
        perm: Option<String>,
        #[arg(long, value_enum, default_value_t = Init::Random)]
        init: Init,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        alpha: f64,
        /// Route length at the end of each cycle as CSV.
        #[arg(long)]
        cycles_table: Option<PathBuf>,
        /// Per-iteration BCD trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// SVG of the route after every cycle.
        #[arg(long)]
        trail: Option<PathBuf>,
    },
    /// Subsample and shrink every polygon.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        target: usize,
        #[arg(long, default_value_t = 0.8)]
        shrink: f64,
    },
    /// Write a random instance.
    Generate {
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        spread: f64,
        #[arg(long, default_value_t = 1.5)]
        min_size: f64,
        #[arg(long, default_value_t = 4.0)]
        max_size: f64,
    },
    /// Validate an instance file.
    Check {
        #[arg(long)]
        instance: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Init {
    Random,
    Centroid,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CtspError> for CliError {
    fn from(e: CtspError) -> Self {
        match e {
            CtspError::Bcd(_) => CliError::Solver(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<HeuristicError> for CliError {
    fn from(e: HeuristicError) -> Self {
        match e {
            HeuristicError::Ctsp(c) => c.into(),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

fn bcd_config(alpha: f64) -> Result<BcdConfig, CliError> {
    let config = BcdConfig {
        alpha,
        ..BcdConfig::default()
    };
    config
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(config)
}

fn parse_perm(text: &str, p: usize) -> Result<Vec<usize>, CliError> {
    let perm = text
        .split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(id) if id >= 1 => Ok(id - 1),
            _ => Err(CliError::Validation(format!(
                "bad polygon id {t:?} in --perm"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if perm.len() != p {
        return Err(CliError::Validation(format!(
            "--perm lists {} ids for {p} polygons",
            perm.len()
        )));
    }
    check_permutation(&perm, p)?;
    Ok(perm)
}

fn run_solve(
    instance: &Instance,
    seed: u64,
    alpha: f64,
    threads: usize,
    stats: Option<PathBuf>,
    svg: Option<PathBuf>,
) -> Result<(), CliError> {
    let config = HeuristicConfig {
        bcd: bcd_config(alpha)?,
        oracle: OracleParams::default(),
        threads: threads.max(1),
    };
    let out = solve(instance, &config, seed)?;
    print!("{}", out.stats.to_table());
    println!("constructed route length: {:.2}", out.constructed_length);
    println!("final route length: {:.2}", out.route_length);
    println!(
        "calls: {}  cycles: {}  time: {:.2} s",
        out.stats.total_calls(),
        out.stats.total_cycles(),
        out.stats.wall_time.as_secs_f64()
    );
    let order: Vec<String> = out.tour.perm.iter().map(|c| (c + 1).to_string()).collect();
    println!("order: {}", order.join(","));
    if let Some(path) = stats {
        write_file(&path, &out.stats.to_csv())?;
    }
    if let Some(path) = svg {
        let spec = RenderSpec {
            show_points: true,
            ..RenderSpec::default()
        };
        write_file(&path, &render_svg(instance, Some(&out.tour), &[], &spec)?)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_optimize_route(
    instance: &Instance,
    perm: Option<String>,
    init: Init,
    seed: u64,
    alpha: f64,
    cycles_table: Option<PathBuf>,
    trace: Option<PathBuf>,
    trail: Option<PathBuf>,
) -> Result<(), CliError> {
    let p = instance.len();
    let perm = match perm {
        Some(text) => parse_perm(&text, p)?,
        None => (0..p).collect(),
    };
    let x0: Vec<Point2> = match init {
        Init::Centroid => instance
            .polygons()
            .iter()
            .map(|poly| poly.interior_point())
            .collect(),
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            instance
                .polygons()
                .iter()
                .map(|poly| poly.sample_interior(&mut rng))
                .collect()
        }
    };
    let config = BcdConfig {
        keep_cycle_snapshots: trail.is_some(),
        ..bcd_config(alpha)?
    };
    let params = OracleParams::default();
    let out = optimize_points(instance, &perm, &x0, &config, &params)?;

    let initial = route_length_of(&perm, &x0);
    let mut table = String::from("cycle,route_length\n");
    let _ = writeln!(table, "0,{initial:.16e}");
    println!("{:>6} {:>16}", "cycle", "route length");
    println!("{:>6} {:>16.2}", 0, initial);
    for (k, v) in out.bcd.cycle_values.iter().enumerate() {
        let _ = writeln!(table, "{},{v:.16e}", k + 1);
        println!("{:>6} {:>16.2}", k + 1, v);
    }
    println!("stop: {:?} after {} cycles", out.bcd.stop, out.bcd.cycles);
    if let Some(path) = cycles_table {
        write_file(&path, &table)?;
    }
    if let Some(path) = trace {
        write_file(&path, &coverbcd::bcd::trace_csv(&out.bcd.trace))?;
    }
    if let Some(path) = trail {
        let problem = TourProblem::new(instance, &perm, params, config.delta)?;
        let trail: Vec<Vec<Point2>> = out
            .bcd
            .snapshots
            .iter()
            .map(|x| {
                let mut pts = x0.clone();
                problem.write_points(x, &mut pts);
                pts
            })
            .collect();
        let tour = Tour::new(perm, out.points)?;
        write_file(
            &path,
            &render_svg(instance, Some(&tour), &trail, &RenderSpec::default())?,
        )?;
    }
    Ok(())
}

fn run_check(instance: &Instance) {
    let sizes: Vec<usize> = instance.polygons().iter().map(|poly| poly.len()).collect();
    println!(
        "ok: {} polygons, {} to {} vertices",
        instance.len(),
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0)
    );
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            instance,
            seed,
            alpha,
            stats,
            svg,
            threads,
        } => run_solve(&load_instance(&instance)?, seed, alpha, threads, stats, svg),
        Command::OptimizeRoute {
            instance,
            perm,
            init,
            seed,
            alpha,
            cycles_table,
            trace,
            trail,
        } => run_optimize_route(
            &load_instance(&instance)?,
            perm,
            init,
            seed,
            alpha,
            cycles_table,
            trace,
            trail,
        ),
        Command::Preprocess {
            input,
            out,
            target,
            shrink,
        } => {
            let (result, report) = preprocess(&load_instance(&input)?, target, shrink)?;
            println!("{:>6} {:>8} {:>8}", "id", "before", "after");
            for r in &report {
                println!("{:>6} {:>8} {:>8}", r.id, r.before, r.after);
            }
            save_instance(&result, &out)?;
            Ok(())
        }
        Command::Generate {
            p,
            seed,
            out,
            spread,
            min_size,
            max_size,
        } => {
            let params = GeneratorParams {
                spread,
                size_range: (min_size, max_size),
            };
            save_instance(&generate_instance(p, seed, params)?, &out)?;
            Ok(())
        }
        Command::Check { instance } => {
            run_check(&load_instance(&instance)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
