use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pedflow::config::load_config;
use pedflow::run::{compare_runs, load_run, psi_table_for, run, write_comparison};

#[derive(Parser)]
#[command(
    name = "pedflow",
    version,
    about = "Meshfree pedestrian-flow simulator"
)]
struct Cli {
    /// Worker threads for the parallel phases (default: all cores).
    /// Physics results are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured run and write snapshots, series and report.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's [output] dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Scenario seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Align evacuation series and runtimes of finished runs.
    Compare {
        /// report.toml files of the runs to compare (two or more).
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "compare_out")]
        out_dir: PathBuf,
    },
    /// Build (and cache) the local-model kernel table for a config.
    PsiTable {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Parse and validate a config, reporting problems.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("pedflow: could not size the thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pedflow: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> pedflow::Result<()> {
    match cmd {
        Command::Run {
            config,
            out_dir,
            seed,
        } => {
            let (mut cfg, hash) = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
            }
            let dir = out_dir.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let report = run(&cfg, &hash, &dir)?;
            println!(
                "run {}: steps={} completed={} completion_time={} physics={:.3}s -> {}",
                report.mode,
                report.steps,
                report.completed,
                report
                    .completion_time
                    .map(|t| format!("{t:.2}s"))
                    .unwrap_or_else(|| "-".into()),
                report.physics_seconds,
                dir.display()
            );
            Ok(())
        }
        Command::Compare { reports, out_dir } => {
            let runs = reports
                .iter()
                .map(|p| load_run(p))
                .collect::<pedflow::Result<Vec<_>>>()?;
            let cmp = compare_runs(&runs)?;
            write_comparison(&cmp, &out_dir)?;
            println!("run,completion_time,physics_seconds,runtime_ratio_vs_first");
            for k in 0..cmp.labels.len() {
                println!(
                    "{},{},{:.3},{:.3}",
                    cmp.labels[k],
                    cmp.completion_times[k]
                        .map(|t| format!("{t:.2}"))
                        .unwrap_or_else(|| "none".into()),
                    cmp.physics_seconds[k],
                    cmp.runtime_ratio_vs_first[k]
                );
            }
            println!("tables written to {}", out_dir.display());
            Ok(())
        }
        Command::PsiTable { config, out_dir } => {
            let (cfg, _hash) = load_config(&config)?;
            let dir = out_dir.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            pedflow::output::ensure_dir(&dir)?;
            let table = psi_table_for(&cfg, &dir)?;
            println!(
                "psi table: {} speeds x {} cells, cap {}, key {} -> {}",
                table.spec.n_speeds,
                table.spec.n_cells,
                table.spec.zeta_cap,
                table.cache_key(),
                dir.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let (cfg, hash) = load_config(&config)?;
            println!(
                "ok: mode={} particles={} hash={}",
                cfg.step.mode.as_str(),
                cfg.scenario.count_per_group.iter().sum::<usize>(),
                hash
            );
            Ok(())
        }
    }
}
