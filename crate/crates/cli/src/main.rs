//! `multicake` command-line front end.
//!
//! Exit codes: 0 on success, 2 when a run completes with a negative outcome
//! (not converged, envy above tolerance, a certificate with solutions, a
//! failed lemma check), 1 on errors.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use multicake::config::RunConfig;
use multicake::geometry::{CakeConfig, Division, PieceSelection};
use multicake::grid_lemma::{run_lemma_checks, PLANE_WEIGHT};
use multicake::preferences::{ModelSpec, PreferenceModel, Role, DEFAULT_EPSILON};
use multicake::sperner::solve_different_selections;
use multicake::verifier::{
    envy_report, grid_sweep, player_name, write_hits_csv, SweepCertificate, SweepMode,
    DEFAULT_SWEEP_CAP,
};
use serde::Serialize;
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "multicake",
    version,
    about = "Envy-free division of several cakes"
)]
struct Cli {
    /// Worker threads (default: all cores; 1 gives a serial run).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reseed `log_utility` players.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on triangulation cells and sweep divisions.
    #[arg(long)]
    cap: Option<u128>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    CertifyNone,
    Collect,
}

#[derive(Subcommand)]
enum Command {
    /// Refine through the mesh schedule until an envy-free allocation is found.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Mesh schedule, e.g. 4,8,16.
        #[arg(long, value_delimiter = ',')]
        mesh: Option<Vec<u32>>,
        #[arg(long)]
        tol: Option<f64>,
        /// Find pairwise different selections at the last mesh instead.
        #[arg(long)]
        different_selections: bool,
    },
    /// Score a division and allocation against the configured players.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Division file: an array of rows, or a solve report.
        #[arg(long)]
        division: PathBuf,
        /// Allocation file: a player-to-selection map, an array of
        /// selections, or a solve report.
        #[arg(long)]
        allocation: PathBuf,
        /// Reseed `log_utility` players as `solve --seed` does.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Examine every lattice division at resolution `grid`.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        grid: Option<u32>,
        #[arg(long, value_enum, default_value = "certify-none")]
        mode: Mode,
        /// One row per hit.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Component-bound checks on the three-cake, four-piece grid.
    Lemma {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect sweep on four cakes of four pieces with poker players.
    ExploreM4 {
        #[arg(long, default_value_t = 6)]
        grid: u32,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        cap: Option<u128>,
    },
    /// Run the session server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Append-only session journal; replayed on start.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Solve {
            run,
            mesh,
            tol,
            different_selections,
        } => {
            let mut cfg = load_config(&run)?;
            if let Some(mesh) = mesh {
                cfg.schedule = mesh;
            }
            if let Some(tol) = tol {
                cfg.tol = tol;
            }
            cfg.validate()?;
            if different_selections {
                cmd_different(&cfg)
            } else {
                cmd_solve(&cfg)
            }
        }
        Command::Verify {
            config,
            division,
            allocation,
            seed,
            tol,
            out,
        } => {
            let mut cfg = RunConfig::from_json(&read(&config)?)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            cmd_verify(
                &cfg,
                &division,
                &allocation,
                tol.unwrap_or(cfg.tol),
                out.as_deref(),
            )
        }
        Command::Sweep {
            run,
            grid,
            mode,
            csv,
        } => {
            let mut cfg = load_config(&run)?;
            if let Some(g) = grid {
                cfg.grid = g;
            }
            cfg.validate()?;
            let mode = match mode {
                Mode::CertifyNone => SweepMode::CertifyNone,
                Mode::Collect => SweepMode::Collect,
            };
            cmd_sweep(&cfg, mode, csv.as_deref())
        }
        Command::Lemma { seed, count, out } => {
            let report = run_lemma_checks(count, seed)?;
            let c = &report.center_cell;
            println!(
                "center cell {}: {} containing cells, weights strictly positive: {}, max plane deviation {:.1e}, max component {}",
                c.cell_index,
                c.containing_cells,
                c.weights_strictly_positive,
                c.lemma.plane_weights.iter().map(|w| (w - PLANE_WEIGHT).abs()).fold(0.0, f64::max),
                c.lemma.max_component
            );
            let r = &report.random;
            println!(
                "random sets: {} (seed {}, {} drawn), smallest max component {}, failures {}",
                r.count,
                r.seed,
                r.drawn,
                r.min_max_component,
                r.failures.len()
            );
            for (case, n) in &r.case_counts {
                println!("  {case}: {n}");
            }
            println!("{}", if report.pass { "PASS" } else { "FAIL" });
            write_json(out.as_deref(), &report)?;
            Ok(report.pass)
        }
        Command::ExploreM4 {
            grid,
            epsilon,
            out,
            csv,
            cap,
        } => {
            let config = CakeConfig::uniform(4, 4)?;
            let players = vec![
                ModelSpec::Poker {
                    epsilon,
                    role: Role::A,
                },
                ModelSpec::Poker {
                    epsilon,
                    role: Role::B,
                },
            ];
            let mut cfg = RunConfig::new(config, players);
            cfg.grid = grid;
            cfg.out = out;
            cfg.caps.divisions = Some(cap.unwrap_or(DEFAULT_SWEEP_CAP));
            cfg.validate()?;
            cmd_sweep(&cfg, SweepMode::Collect, csv.as_deref())?;
            // exploratory: the hit count is the result, either way
            Ok(true)
        }
        Command::Serve { addr, journal } => {
            let store = match &journal {
                Some(path) => multicake_service::Store::open(path)?,
                None => multicake_service::Store::in_memory(),
            };
            let runtime = tokio::runtime::Runtime::new()?;
            println!(
                "listening on http://{addr} ({} sessions restored)",
                store.len()
            );
            runtime.block_on(multicake_service::serve(Arc::new(store), addr))?;
            Ok(true)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_json(&read(&args.config)?)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if let Some(cap) = args.cap {
        cfg.caps.cells = Some(cap);
        cfg.caps.divisions = Some(cap);
    }
    Ok(cfg)
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    if let Some(path) = path {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn models_without_humans(cfg: &RunConfig) -> anyhow::Result<Vec<Arc<dyn PreferenceModel>>> {
    if cfg.players.iter().any(ModelSpec::is_human) {
        bail!("human players answer through the session server (`multicake serve`)");
    }
    Ok(cfg.build_models()?)
}

fn cmd_solve(cfg: &RunConfig) -> anyhow::Result<bool> {
    models_without_humans(cfg)?;
    let report = cfg.solve()?;
    println!(
        "{} on {}: mesh {}, {} full cells, delta {:.3e}, disjoint {}",
        if report.converged {
            "converged"
        } else {
            "not converged"
        },
        cfg.config,
        report.mesh_used,
        report.cells_found,
        report.delta,
        report.disjoint
    );
    for (player, s) in &report.allocation {
        println!("  {player}: {s}");
    }
    for row in report.division.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
        println!("  [{}]", cells.join(", "));
    }
    for flag in &report.flags {
        println!("  flag: {flag}");
    }
    write_json(cfg.out.as_deref(), &report)?;
    Ok(report.converged)
}

fn cmd_different(cfg: &RunConfig) -> anyhow::Result<bool> {
    let models = models_without_humans(cfg)?;
    let mesh = *cfg.schedule.last().expect("validated schedule");
    let found = solve_different_selections(&cfg.config, &models, mesh)?;
    println!("cell {} at mesh {mesh}:", found.cell_index);
    for (player, s) in &found.selections {
        println!("  {player}: {s}");
    }
    write_json(cfg.out.as_deref(), &found)?;
    Ok(true)
}

fn parse_division(value: &Value) -> anyhow::Result<Division> {
    let rows = value.get("division").unwrap_or(value);
    serde_json::from_value(rows.clone()).context("division")
}

fn parse_allocation(value: &Value) -> anyhow::Result<BTreeMap<String, PieceSelection>> {
    let v = value.get("allocation").unwrap_or(value);
    if let Some(list) = v.as_array() {
        let selections: Vec<PieceSelection> =
            serde_json::from_value(Value::Array(list.clone())).context("allocation")?;
        return Ok(selections
            .into_iter()
            .enumerate()
            .map(|(i, s)| (player_name(i), s))
            .collect());
    }
    serde_json::from_value(v.clone()).context("allocation")
}

fn cmd_verify(
    cfg: &RunConfig,
    division: &Path,
    allocation: &Path,
    tol: f64,
    out: Option<&Path>,
) -> anyhow::Result<bool> {
    let division = parse_division(&serde_json::from_str(&read(division)?)?)?;
    let allocation = parse_allocation(&serde_json::from_str(&read(allocation)?)?)?;
    let models = models_without_humans(cfg)?;
    let models: BTreeMap<String, Arc<dyn PreferenceModel>> = models
        .into_iter()
        .enumerate()
        .map(|(i, m)| (player_name(i), m))
        .collect();
    let report = envy_report(&cfg.config, &division, &allocation, &models)?;
    for p in &report.players {
        println!(
            "{}: {} (best {}), gap {:.3e}, normalized {:.3e}",
            p.player, p.allocated, p.best, p.gap, p.normalized_gap
        );
    }
    println!(
        "delta {:.3e}, disjoint {}, pareto {}",
        report.delta, report.disjoint, report.pareto
    );
    write_json(out, &report)?;
    Ok(report.max_gap() <= tol)
}

fn cmd_sweep(cfg: &RunConfig, mode: SweepMode, csv: Option<&Path>) -> anyhow::Result<bool> {
    let models = models_without_humans(cfg)?;
    let [a, b] = models.as_slice() else {
        return Err(anyhow!(
            "sweeps compare exactly 2 players, got {}",
            models.len()
        ));
    };
    let cert: SweepCertificate = grid_sweep(&cfg.config, [a, b], cfg.grid, mode, cfg.sweep_cap())?;
    println!(
        "{} at G={}: {} divisions examined, {} with disjoint preferred selections ({} ms)",
        cfg.config, cert.grid, cert.divisions_examined, cert.solutions_found, cert.runtime_ms
    );
    if let Some(w) = &cert.witness {
        println!(
            "  first at index {}: {} / {}",
            w.index, w.selections[0], w.selections[1]
        );
    }
    if let Some(c) = &cert.closest_approach {
        println!(
            "  closest approach at index {}: margin {:.3e}",
            c.index, c.margin
        );
    }
    if let Some(certified) = cert.certified {
        println!("  certified: {certified}");
    }
    if let Some(path) = csv {
        let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_hits_csv(&cert, file)?;
    }
    write_json(cfg.out.as_deref(), &cert)?;
    Ok(cert.certified != Some(false))
}
