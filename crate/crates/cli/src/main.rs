//! `dynsched`: solve single instances, reproduce the reference tables,
//! precompute the lattice and serve it over HTTP.
//!
//! Exit codes: 0 success, 1 a reproduced table has failing cells,
//! 2 usage or input error.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynsched_core::expdp::solve_homogeneous;
use dynsched_core::optim::OptimizerConfig;
use dynsched_core::phasedp::{solve_phase_dp, Grid};
use dynsched_core::sim::experiments::{experiment, ExperimentOptions, TableId};
use dynsched_core::store::{precompute_lattice, Lattice, ScheduleArchive, Store};
use dynsched_core::{fit_phase_type, CostWeights};

#[derive(Parser)]
#[command(name = "dynsched", version, about = "Dynamic appointment scheduling")]
struct Cli {
    /// Worker threads for parallel solves (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one instance and print the interarrival table at zero elapsed service.
    Solve {
        #[arg(long, default_value_t = 1.0)]
        scv: f64,
        #[arg(long, default_value_t = 1.0)]
        mean: f64,
        #[arg(long, default_value_t = 0.5)]
        omega: f64,
        #[arg(long, default_value_t = 15)]
        n: usize,
        /// Grid step of the phase-type recursion (default 0.01 mean).
        #[arg(long)]
        delta: Option<f64>,
        /// Write the archive here and its CSV dump next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the table as CSV `i,k,tau` with full precision.
        #[arg(long)]
        csv: bool,
    },
    /// Recompute a reference table and compare with the published values.
    Reproduce {
        #[arg(long, value_parser = parse_table)]
        table: TableId,
        /// Simulation runs per cell.
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiply the phase grid step by this factor (smoke runs).
        #[arg(long, default_value_t = 1)]
        coarsen: u32,
        /// Restrict phase-type tables to these SCVs, comma separated.
        #[arg(long, value_delimiter = ',')]
        scvs: Option<Vec<f64>>,
        /// Restrict to these weights, comma separated.
        #[arg(long, value_delimiter = ',')]
        omegas: Option<Vec<f64>>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve every lattice cell and write archives plus a manifest.
    Precompute {
        #[arg(long, default_value = "archives")]
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// SCVs, comma separated (default 0.2..2 by 0.05).
        #[arg(long, value_delimiter = ',')]
        scvs: Option<Vec<f64>>,
        /// Weights, comma separated (default 0.1..0.9 by 0.1).
        #[arg(long, value_delimiter = ',')]
        omegas: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        coarsen: u32,
    },
    /// Serve a precomputed lattice over HTTP.
    Serve {
        #[arg(long, env = dynsched_service::ARCHIVE_DIR_ENV, default_value = "archives")]
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// 0 picks a free port; the bound address is printed.
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn parse_table(s: &str) -> Result<TableId, String> {
    s.parse().map_err(|_| {
        let ids: Vec<&str> = TableId::ALL.iter().map(|t| t.name()).collect();
        format!("unknown table {s:?}; expected one of {}", ids.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs.unwrap_or(0);
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let r = match cli.cmd {
        Cmd::Solve { scv, mean, omega, n, delta, out, csv } => solve(scv, mean, omega, n, delta, out, csv),
        Cmd::Reproduce { table, runs, seed, coarsen, scvs, omegas, out } => {
            reproduce(table, ExperimentOptions { runs, seed, coarsen, scvs, omegas }, out)
        }
        Cmd::Precompute { dir, n, scvs, omegas, coarsen } => precompute(dir, n, scvs, omegas, coarsen, jobs),
        Cmd::Serve { dir, host, port } => serve(dir, host, port),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

type Outcome = Result<ExitCode, Box<dyn std::error::Error>>;

fn print_matrix(rows: &[Vec<f64>], csv: bool) {
    if csv {
        println!("i,k,tau");
    }
    for (i, row) in rows.iter().enumerate() {
        if csv {
            for (k, t) in row.iter().enumerate() {
                println!("{},{},{}", i + 1, k + 1, t);
            }
        } else {
            let cells: Vec<String> = row.iter().map(|t| format!("{t:6.2}")).collect();
            println!("{:>3} {}", i + 1, cells.join(" "));
        }
    }
}

fn solve(scv: f64, mean: f64, omega: f64, n: usize, delta: Option<f64>, out: Option<PathBuf>, csv: bool) -> Outcome {
    let w = CostWeights::new(omega)?;
    let fit = fit_phase_type(mean, scv)?;
    if n == 0 {
        return Err("n must be at least 1".into());
    }
    let grid = match delta {
        Some(d) => {
            let g = Grid::fine(mean);
            let factor = d / g.delta;
            Grid::new(d, g.m_values.iter().map(|&m| (m as f64 / factor).round() as u32).collect::<std::collections::BTreeSet<_>>().into_iter().collect(), None)?
        }
        None => Grid::fine(mean),
    };
    let exact = (scv - 1.0).abs() < 1e-12;
    let phase = if !exact || out.is_some() { Some(solve_phase_dp(&fit, n, w, &grid)?) } else { None };
    let (cost, rows, method) = if exact {
        let sol = solve_homogeneous(n, 1.0 / mean, w, OptimizerConfig::default())?;
        (sol.cost, sol.tau.clone(), "exponential")
    } else {
        let sol = phase.as_ref().unwrap();
        let rows = (1..n).map(|i| (1..=i).map(|k| sol.query_tau(i, k, 0.0).unwrap().tau).collect()).collect();
        (sol.cost, rows, "phase-type")
    };
    println!("# scv={scv} mean={mean} omega={omega} n={n} method={method} delta={}", grid.delta);
    println!("cost: {cost:.4}");
    print_matrix(&rows, csv);
    if let (Some(path), Some(sol)) = (out, phase) {
        let arc = ScheduleArchive::from_solution(sol);
        arc.save(&path)?;
        let table = path.with_extension("csv");
        std::fs::write(&table, arc.to_csv())?;
        eprintln!("wrote {} and {}", path.display(), table.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn reproduce(table: TableId, opts: ExperimentOptions, out: Option<PathBuf>) -> Outcome {
    let rep = experiment(table, &opts)?;
    match out {
        Some(p) => std::fs::write(p, rep.to_csv())?,
        None => print!("{}", rep.to_csv()),
    }
    for c in &rep.checks {
        eprintln!("{}", c.line());
    }
    let failed = rep.failures().count();
    eprintln!("{}: {} checks, {} failed", table.name(), rep.checks.len(), failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn precompute(dir: PathBuf, n: usize, scvs: Option<Vec<f64>>, omegas: Option<Vec<f64>>, coarsen: u32, jobs: usize) -> Outcome {
    let d = Lattice::default();
    let lattice = Lattice {
        scvs: scvs.unwrap_or(d.scvs),
        omegas: omegas.unwrap_or(d.omegas),
        n,
        grid: d.grid.coarsened(coarsen.max(1)),
    };
    let total = lattice.scvs.len() * lattice.omegas.len();
    let count = std::sync::atomic::AtomicUsize::new(0);
    let jobs = if jobs == 0 { rayon::current_num_threads() } else { jobs };
    let m = precompute_lattice(&dir, &lattice, jobs, &|c| {
        let j = count.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        eprintln!("[{j}/{total}] scv={} omega={} cost={:.4}", c.scv, c.omega, c.cost);
    })?;
    println!("wrote {} cells and manifest to {}", m.cells.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn serve(dir: PathBuf, host: String, port: u16) -> Outcome {
    if !dir.is_dir() {
        return Err(format!("archive directory {} does not exist; run `dynsched precompute --dir {}` first", dir.display(), dir.display()).into());
    }
    let store = Store::open(&dir)?;
    store.preload()?;
    let addr: SocketAddr = format!("{host}:{port}").parse()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        use std::io::Write;
        std::io::stdout().flush()?;
        dynsched_service::serve_on(listener, store).await
    })?;
    Ok(ExitCode::SUCCESS)
}
