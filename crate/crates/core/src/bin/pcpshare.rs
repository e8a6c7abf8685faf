use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pcpshare::bench::{bench_crypto, BenchConfig};
use pcpshare::matching::DemandPolicy;
use pcpshare::orchestrator::{Market, MarketConfig};
use pcpshare::protocol::Scenario;
use pcpshare::sim::{
    check_run, cost_report, gen_scenario, matches_csv, sweep_scenario, verify, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "pcpshare", version, about = "Privacy-preserving charging pile matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario file.
    Gen(GenArgs),
    /// Run the encrypted protocol on a scenario.
    Simulate(SimArgs),
    /// Compare the encrypted protocol with the plaintext reference.
    Verify(VerifyArgs),
    /// Time encryption and decryption variants.
    Bench(BenchArgs),
    /// Check operation counts for a one-round market against closed forms.
    Counters(CountersArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(short = 'i', long, default_value_t = 5)]
    buyers: usize,
    #[arg(short = 'j', long, default_value_t = 5)]
    sellers: usize,
    #[arg(short, long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 3000)]
    area: u32,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Entities arrive uniformly in rounds 0..=N.
    #[arg(long, default_value_t = 0)]
    arrival_rounds: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MarketArgs {
    /// Round key size in bits.
    #[arg(long, default_value_t = 1024)]
    bits: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "relaxed")]
    policy: DemandPolicy,
    #[arg(long, default_value_t = 1)]
    proxies: u32,
}

impl MarketArgs {
    fn config(&self) -> MarketConfig {
        MarketConfig {
            bits: self.bits,
            policy: self.policy,
            proxies: self.proxies,
            ..MarketConfig::default()
        }
    }
}

#[derive(Args)]
struct SimArgs {
    scenario: PathBuf,
    #[command(flatten)]
    market: MarketArgs,
    /// Write the match list here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the message log (one JSON record per line) here.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario file; omit with --random.
    scenario: Option<PathBuf>,
    #[command(flatten)]
    market: MarketArgs,
    /// Verify this many generated scenarios (seeds 1..=N) instead of a file.
    #[arg(long)]
    random: Option<u64>,
    /// Largest buyer and seller count for --random.
    #[arg(long, default_value_t = 10)]
    max_entities: usize,
    /// Largest demand count for --random.
    #[arg(long, default_value_t = 4)]
    max_k: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2048)]
    bits: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    warmup: usize,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct CountersArgs {
    #[arg(short = 'i', long)]
    buyers: usize,
    #[arg(short = 'j', long)]
    sellers: usize,
    #[arg(short, long)]
    k: usize,
    #[arg(long, default_value_t = 256)]
    bits: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

enum Failure {
    /// An invariant or verification check failed.
    Check(String),
    /// Bad input, I/O, or configuration.
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(Scenario::from_json(&text)?)
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let cfg = ScenarioConfig {
        buyers: a.buyers,
        sellers: a.sellers,
        k: a.k,
        area: a.area,
        demand_density: a.density,
        arrival_rounds: a.arrival_rounds,
        seed: a.seed,
        ..ScenarioConfig::default()
    };
    let mut json = gen_scenario(&cfg)?.to_json();
    json.push('\n');
    emit(a.out.as_deref(), &json)
}

fn cmd_simulate(a: SimArgs) -> CmdResult {
    let scenario = load(&a.scenario)?;
    let run = Market::new(scenario.clone(), a.market.config(), a.market.seed)?.run()?;
    let matches = run.matches();
    if let Some(p) = &a.log {
        fs::write(p, run.log.export_lines()).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    }
    let totals = run.total_counts();
    match a.format {
        Format::Csv => {
            emit(a.out.as_deref(), &matches_csv(&matches))?;
            eprint!("{totals}");
        }
        Format::Text => {
            let mut text = String::new();
            for m in &matches {
                text.push_str(&format!(
                    "round {}: buyer {} -> seller {} (W = {})\n",
                    m.round, m.buyer_id, m.seller_id, m.w_index
                ));
            }
            text.push_str(&format!(
                "{} matches over {} rounds, {} messages, {} bytes on the wire\n\n{totals}",
                matches.len(),
                run.rounds.len(),
                run.log.len(),
                run.log.total_bytes()
            ));
            emit(a.out.as_deref(), &text)?;
        }
    }
    let violations = check_run(&scenario, &run);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(violations.join("\n")))
    }
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let scenarios: Vec<(String, Scenario)> = match (&a.scenario, a.random) {
        (Some(p), None) => vec![(p.display().to_string(), load(p)?)],
        (None, Some(n)) => (1..=n)
            .map(|seed| Ok((format!("seed {seed}"), sweep_scenario(seed, a.max_entities, a.max_k)?)))
            .collect::<Result<_, Failure>>()?,
        _ => return Err(Failure::Usage("pass either a scenario file or --random N".into())),
    };
    let mut failures = Vec::new();
    for (name, s) in &scenarios {
        let report = verify(s, a.market.config(), a.market.seed)?;
        if report.is_clean() {
            println!("{name}: ok ({} matches)", report.pipeline.len());
        } else {
            println!("{name}: DIVERGED");
            for d in &report.diff {
                println!("  {d:?}");
            }
            for v in &report.violations {
                println!("  {v}");
            }
            failures.push(name.clone());
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} of {} scenarios diverged", failures.len(), scenarios.len())))
    }
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        bits: a.bits,
        trials: a.trials,
        warmup: a.warmup,
        repeats: a.repeats,
        seed: a.seed,
    };
    let report = bench_crypto(&cfg)?;
    let text = match a.format {
        Format::Csv => report.to_csv(),
        Format::Text => report.to_string(),
    };
    emit(a.out.as_deref(), &text)
}

fn cmd_counters(a: CountersArgs) -> CmdResult {
    let cfg = ScenarioConfig {
        buyers: a.buyers,
        sellers: a.sellers,
        k: a.k,
        seed: a.seed,
        ..ScenarioConfig::default()
    };
    let scenario = gen_scenario(&cfg)?;
    let market_cfg = MarketConfig {
        bits: a.bits,
        ..MarketConfig::default()
    };
    let run = Market::new(scenario, market_cfg, a.seed)?.run()?;
    let first = &run.rounds[0];
    let report = cost_report(&first.counts, a.buyers, a.sellers, a.k);
    match a.format {
        Format::Csv => print!("{report}"),
        Format::Text => {
            for l in &report.lines {
                println!(
                    "{:<20} {:<20} expected {:>8}  observed {:>8}  {}",
                    l.name,
                    l.formula,
                    l.expected,
                    l.observed,
                    if l.holds() { "ok" } else { "MISMATCH" }
                );
            }
        }
    }
    if report.holds() {
        Ok(())
    } else {
        Err(Failure::Check("operation counts differ from the closed forms".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Counters(a) => cmd_counters(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
