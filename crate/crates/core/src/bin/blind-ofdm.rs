use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blind_ofdm::harness::{
    self, dump_constellation, monte_carlo, parse_record_row, simulate_seeded, write_summary_json,
    SimOptions,
};

#[derive(Parser)]
#[command(version, about = "Blind EM channel estimation for PSK-OFDM: Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write per-iteration results.
    Simulate {
        /// TOML file with the same keys as the flags; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        opts: SimOptions,
    },
    /// Regenerate one run from a results CSV row.
    Replay {
        /// A data row copied from a results CSV.
        #[arg(long = "seed-record", allow_hyphen_values = true)]
        seed_record: String,
        #[arg(long = "dump-constellation")]
        dump_constellation: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        opts: SimOptions,
    },
}

fn load(config: Option<PathBuf>, opts: SimOptions) -> blind_ofdm::Result<SimOptions> {
    Ok(match config {
        Some(path) => opts.merge(SimOptions::from_file(&path)?),
        None => opts,
    })
}

fn simulate(opts: SimOptions) -> blind_ofdm::Result<usize> {
    let cfg = opts.resolve()?;
    let result = monte_carlo(&cfg)?;
    let out = opts.out.unwrap_or_else(|| PathBuf::from("results.csv"));
    harness::write_results_file(&out, &result.records)?;
    if let Some(summary) = &opts.summary {
        write_summary_json(summary, &result.table, &result.errors)?;
    }
    for &snr in &cfg.snr_db {
        if let Some(fr) = result.table.final_failure_rate(snr, cfg.mode) {
            println!("{} snr={snr} dB final FR={:.1}%", cfg.mode, 100.0 * fr);
        }
    }
    for e in &result.errors {
        eprintln!("run {} at {} dB (seed {}): {}", e.run_id, e.snr_db, e.seed, e.message);
    }
    Ok(result.errors.len())
}

fn replay(record: &str, dump: Option<PathBuf>, opts: SimOptions) -> blind_ofdm::Result<()> {
    let row = parse_record_row(record)?;
    let cfg = opts.resolve()?;
    let run = simulate_seeded(&cfg, row.mode, row.snr_db, row.run_id, row.seed)?;
    let rec = &run.record;
    println!(
        "run {} mode={} snr={} dB seed={} theta={:.6} final MSE={:.3e} failed={}",
        rec.run_id,
        rec.mode,
        rec.snr_db,
        rec.seed,
        rec.theta,
        rec.mse.last().copied().unwrap_or(f64::NAN),
        rec.failed
    );
    if let Some(d) = &rec.detection {
        println!(
            "detected l={} confident={} evidence gap={:.3}",
            d.shift, d.confident, d.evidence_gap
        );
    }
    if let Some(path) = dump {
        dump_constellation(&path, &run.rx.grid, &run.rx.estimate, &run.tx.symbol_indices)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, opts } => load(config, opts).and_then(simulate),
        Command::Replay {
            seed_record,
            dump_constellation,
            config,
            opts,
        } => load(config, opts)
            .and_then(|o| replay(&seed_record, dump_constellation, o))
            .map(|_| 0),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(errors) => {
            eprintln!("{errors} run(s) failed with errors");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
