use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dipe_harness::config::{Axis, Experiment, GridConfig};
use dipe_harness::sweep::{csv_path, run_sweep, write_outputs, OUT_DIR_ENV};
use dipe_harness::verify::verify;
use dipe_net::channel::to_json_lines;
use dipe_net::referee::{bind, StateRecipe};
use dipe_net::{alice_run, bob_run, referee_serve, ClientReport, RefereeConfig};

#[derive(Parser)]
#[command(name = "dipe", version, about = "Inner-product and bilinear-form estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites and write a JSON report.
    Verify {
        /// haar, povm, truncation, gdipe-mean, gdipe-variance, gdipe-moments,
        /// dipe, scaling, decision, net or all.
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplies every sample count.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// DIPE sweep over planted state pairs.
    Dipe(SweepArgs),
    /// GDIPE sweep over random observables and states.
    Gdipe(SweepArgs),
    /// YES/NO decision sweep.
    Decision(SweepArgs),
    /// Serve one networked DIPE run.
    Referee(RefereeArgs),
    /// Client for Alice.
    Alice(ClientArgs),
    /// Client for Bob.
    Bob(ClientArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML or JSON config; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    /// Block dimension.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    target_pairs: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// CSV path; the JSON summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn grid(&self, experiment: Experiment) -> Result<GridConfig> {
        let mut g = match &self.config {
            Some(p) => GridConfig::load(p, experiment)?,
            None => GridConfig::new(experiment),
        };
        if let Some(v) = self.seed {
            g.seed = v;
        }
        if let Some(v) = self.d {
            g.d = Axis::One(v);
        }
        if let Some(v) = self.q {
            g.q = Axis::One(v);
        }
        if let Some(v) = self.k {
            g.k = Axis::One(v);
        }
        if let Some(v) = self.eps {
            g.epsilon = Axis::One(v);
        }
        if let Some(v) = self.overlap {
            g.overlap = Axis::One(v);
        }
        if self.target_pairs.is_some() {
            g.target_pairs = self.target_pairs;
        }
        if let Some(v) = self.trials {
            g.trials = v;
        }
        Ok(g)
    }
}

#[derive(Args)]
struct RefereeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    /// TOML or JSON config; the `[net]` table applies.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    target_pairs: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Transcript path (JSON lines); the run summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    connect: String,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Transcript path (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_out(name: &str) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(name)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sweep(args: &SweepArgs, experiment: Experiment) -> Result<ExitCode> {
    let grid = args.grid(experiment)?;
    let csv = csv_path(args.out.as_deref(), &grid);
    let out = run_sweep(&grid)?;
    let json = write_outputs(&out, &csv)?;
    for p in &out.points {
        println!(
            "grid {} d={} q={} k={} eps={} trials={}: mean |error| {:.4} +- {:.4}, success {:.3}",
            p.grid,
            p.config.d,
            p.config.q,
            p.config.k,
            p.config.epsilon,
            p.trials,
            p.mean_abs_error,
            p.abs_error_std_error,
            p.success_rate
        );
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(ExitCode::SUCCESS)
}

fn referee(args: &RefereeArgs) -> Result<ExitCode> {
    let grid = match &args.config {
        Some(p) => GridConfig::load(p, Experiment::Net)?,
        None => GridConfig::new(Experiment::Net),
    };
    let base = grid.points()?.remove(0);
    let mut cfg =
        RefereeConfig::new(args.d.unwrap_or(base.d), args.q.unwrap_or(base.q), args.seed.unwrap_or(base.seed));
    cfg.copies_constant = base.constants.c;
    cfg.max_rounds = base.max_rounds;
    if let Some(t) = args.target_pairs.or(base.target_pairs) {
        cfg.target_pairs = t;
    }
    cfg.states = StateRecipe::Planted { overlap_sq: args.overlap.unwrap_or(base.overlap) };
    cfg.timeout = Duration::from_millis(args.timeout_ms);
    let (listener, addr) = bind(&args.listen)?;
    eprintln!("referee listening on {addr}");
    let summary = referee_serve(&cfg, &listener)?;
    let path = args.out.clone().unwrap_or_else(|| default_out("referee.jsonl"));
    write_file(&path, &to_json_lines(&summary.transcript))?;
    let report = serde_json::json!({
        "seed": cfg.seed,
        "d": cfg.d,
        "q": cfg.q,
        "k": cfg.k(),
        "estimate": summary.estimate,
        "estimate_bits": format!("{:016x}", summary.estimate.to_bits()),
        "m": summary.m,
        "s": summary.s,
        "rounds": summary.rounds.len(),
        "copies_used": summary.ledger.copies_used(),
        "qubit_equivalents": summary.ledger.qubit_equivalents(),
        "classical_bits": summary.ledger.classical_bits,
    });
    write_file(&path.with_extension("json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    println!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn client(
    args: &ClientArgs,
    run: fn(&str, Duration) -> dipe_net::Result<ClientReport>,
    name: &str,
) -> Result<ExitCode> {
    let report = run(&args.connect, Duration::from_millis(args.timeout_ms))?;
    let path = args.out.clone().unwrap_or_else(|| default_out(&format!("{name}.jsonl")));
    write_file(&path, &to_json_lines(&report.transcript))?;
    let line = serde_json::json!({
        "role": name,
        "seed": report.seed,
        "estimate": report.estimate,
        "estimate_bits": format!("{:016x}", report.estimate.to_bits()),
        "status": format!("{:?}", report.status),
        "rounds": report.rounds,
        "pairs": report.pairs,
    });
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Verify { suite, seed, scale, out } => {
            let report = verify(suite, *seed, *scale)?;
            for c in &report.checks {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} [{}] {}: observed {:.6e}, expected {:.6e}, tol {:.3e}",
                    c.suite, c.name, c.observed, c.expected, c.tolerance
                );
            }
            let path = out.clone().unwrap_or_else(|| default_out("verify.json"));
            write_file(&path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            println!("{} checks, {failed} failed; report at {}", report.checks.len(), path.display());
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Dipe(a) => sweep(a, Experiment::Dipe),
        Command::Gdipe(a) => sweep(a, Experiment::Gdipe),
        Command::Decision(a) => sweep(a, Experiment::Decision),
        Command::Referee(a) => referee(a),
        Command::Alice(a) => client(a, alice_run, "alice"),
        Command::Bob(a) => client(a, bob_run, "bob"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
