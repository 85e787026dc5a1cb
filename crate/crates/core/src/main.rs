use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use acceptcap::acceptability::{capital_report, is_acceptable, CapitalStatus, Market};
use acceptcap::hedging::{
    alpha_sweep_detailed, build_two_factor_tree, call_payoff, superhedge_price, HedgeProblem,
    TwoFactorModel,
};
use acceptcap::io::{self, number_or, report_json, strategy_json, sweep_csv, write_atomic, write_json};
use acceptcap::opt::ConcaveOptions;
use acceptcap::risk::{capital_identity_check, rho, rho_g, RiskSpec};
use acceptcap::selftest::{run_selftest, SelftestConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_UNBOUNDED: u8 = 2;
const EXIT_SCENARIOS_EMPTY: u8 = 3;
const EXIT_SELFTEST_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "acceptcap", version, about = "Minimal acceptable capital and efficient hedging on finite trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal acceptable capital by primal and dual LPs, with certificate.
    Capital {
        #[command(flatten)]
        inputs: MarketScenarios,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Whether a given initial capital is acceptable.
    Accept {
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[command(flatten)]
        inputs: MarketScenarios,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scenario risk of a claim, before and after hedging.
    Rho {
        #[command(flatten)]
        inputs: MarketScenarios,
        #[arg(long)]
        claim: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Efficient hedging prices on the two-factor tree (or a market file).
    Hedge(HedgeArgs),
    /// Efficient hedging prices for a claim file on a market file.
    Sweep(HedgeArgs),
    /// Randomized self-test suites.
    Selftest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Replace every suite tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

#[derive(Args)]
struct MarketScenarios {
    #[arg(long)]
    market: PathBuf,
    #[arg(long)]
    scenarios: PathBuf,
}

#[derive(Args)]
struct HedgeArgs {
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = 1)]
    steps: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1.0)]
    s0: f64,
    /// Call strike; the claim is `(S_T - strike)+` unless `--claim` is given.
    #[arg(long, default_value_t = 1.0)]
    strike: f64,
    #[arg(long)]
    market: Option<PathBuf>,
    #[arg(long)]
    claim: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report; defaults to the CSV path with a `.json` extension.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn emit(out: Option<&Path>, value: &Value) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn load(inputs: &MarketScenarios) -> anyhow::Result<(Market, acceptcap::scenario::ScenarioSet)> {
    let market = io::load_market(&inputs.market)?;
    let scen = io::load_scenarios(&inputs.scenarios, &market.space)?;
    Ok((market, scen))
}

fn status_code(status: CapitalStatus) -> u8 {
    match status {
        CapitalStatus::Finite => 0,
        CapitalStatus::UnboundedBelow => EXIT_UNBOUNDED,
        CapitalStatus::ScenariosEmpty => EXIT_SCENARIOS_EMPTY,
    }
}

fn run_capital(inputs: &MarketScenarios, seed: u64, out: Option<&Path>) -> anyhow::Result<u8> {
    let (market, scen) = load(inputs)?;
    let report = capital_report(&scen, &market, Some(seed))?;
    emit(out, &report_json(&report))?;
    Ok(status_code(report.status))
}

fn run_accept(x: f64, inputs: &MarketScenarios, out: Option<&Path>) -> anyhow::Result<u8> {
    let (market, scen) = load(inputs)?;
    let (ok, witness) = is_acceptable(x, &scen, &market)?;
    let value = json!({
        "x": x,
        "acceptable": ok,
        "witness": witness.as_ref().map(strategy_json),
    });
    emit(out, &value)?;
    Ok(0)
}

fn run_rho(inputs: &MarketScenarios, claim: &Path, out: Option<&Path>) -> anyhow::Result<u8> {
    let (market, scen) = load(inputs)?;
    let claim = io::load_claim(claim, &market.space)?;
    let spec = RiskSpec::from_scenarios(&market.space, &scen, claim.clone())?;
    let plain = rho(&market.space, &claim, &spec)?;
    let hedged = rho_g(&claim, &spec, &market)?;
    let identity = capital_identity_check(&spec, &market)?;
    let value = json!({
        "rho": plain,
        "rho_g": number_or(hedged.value, "unbounded"),
        "hedge": hedged.hedge.as_ref().map(strategy_json),
        "identity": {
            "capital": number_or(identity.lhs, "unbounded"),
            "rho_g": number_or(identity.rhs, "unbounded"),
            "pass": identity.pass,
        },
    });
    emit(out, &value)?;
    Ok(if hedged.value.is_some() { 0 } else { EXIT_UNBOUNDED })
}

fn run_hedge(args: &HedgeArgs, from_files: bool) -> anyhow::Result<u8> {
    let (market, claim, model) = match (&args.market, from_files) {
        (Some(m), _) => {
            let market = io::load_market(m)?;
            let claim = match &args.claim {
                Some(c) => io::load_claim(c, &market.space)?,
                None => call_payoff(&market, args.strike),
            };
            (market, claim, None)
        }
        (None, true) => anyhow::bail!("sweep needs --market"),
        (None, false) => {
            let (Some(mu), Some(sigma1), Some(sigma2)) = (args.mu, args.sigma1, args.sigma2) else {
                anyhow::bail!("hedge needs --mu, --sigma1 and --sigma2, or --market");
            };
            let model = TwoFactorModel {
                mu,
                sigma1,
                sigma2,
                steps: args.steps,
                horizon: args.horizon,
                s0: args.s0,
            };
            let market = build_two_factor_tree(&model)?;
            let claim = match &args.claim {
                Some(c) => io::load_claim(c, &market.space)?,
                None => call_payoff(&market, args.strike),
            };
            (market, claim, Some(model))
        }
    };
    let prob = HedgeProblem::new(claim, args.q, 0.0, args.cap)?;
    let opts = ConcaveOptions {
        seed: args.seed,
        ..ConcaveOptions::default()
    };
    let results = alpha_sweep_detailed(&prob, &market, &args.alphas, &opts)?;
    let rows: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
    let prices: Vec<f64> = rows.iter().filter_map(|r| r.price).collect();
    if prices.windows(2).any(|w| w[1] > w[0] + 1e-9) {
        log::warn!("prices are not monotone in alpha");
    }
    let superhedge = superhedge_price(&prob.claim, &market).ok().map(|s| s.price);
    let csv = sweep_csv(&rows);
    let report = json!({
        "model": model,
        "market_file": args.market,
        "claim_file": args.claim,
        "strike": if args.claim.is_none() { Some(args.strike) } else { None },
        "q": args.q,
        "p": number_or(Some(prob.p()), "unbounded"),
        "cap": args.cap,
        "seed": args.seed,
        "outside_guarantee": prob.outside_guarantee(),
        "superhedge_price": number_or(superhedge, "unbounded"),
        "rows": results.iter().map(|(row, detail)| json!({
            "alpha": row.alpha,
            "price": number_or(row.price, "empty"),
            "status": row.status,
            "density_norm2": detail.as_ref().map(|d| d.density_norm2),
            "cap_multiplier": detail.as_ref().map(|d| d.cap_multiplier),
            "vertices": detail.as_ref().map(|d| d.vertices),
            "iterations": detail.as_ref().map(|d| d.iterations),
        })).collect::<Vec<_>>(),
    });
    match &args.out {
        Some(p) => {
            write_atomic(p, csv.as_bytes())?;
            let json_path = args.report.clone().unwrap_or_else(|| p.with_extension("json"));
            write_json(&json_path, &report)?;
        }
        None => {
            print!("{csv}");
            if let Some(r) = &args.report {
                write_json(r, &report)?;
            }
        }
    }
    Ok(0)
}

fn run_selftest_cmd(cfg: SelftestConfig) -> u8 {
    let results = run_selftest(&cfg);
    let mut ok = true;
    for r in &results {
        ok &= r.ok();
        let worst = r.worst.map(|w| format!(" worst={w:e}")).unwrap_or_default();
        println!(
            "{:<14} {} passed={} failed={}{}",
            r.name,
            if r.ok() { "PASS" } else { "FAIL" },
            r.passed,
            r.failed,
            worst
        );
    }
    println!("seed={}", cfg.seed);
    if ok {
        0
    } else {
        EXIT_SELFTEST_FAILED
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Capital { inputs, seed, out } => run_capital(inputs, *seed, out.as_deref()),
        Command::Accept { x, inputs, out } => run_accept(*x, inputs, out.as_deref()),
        Command::Rho { inputs, claim, out } => run_rho(inputs, claim, out.as_deref()),
        Command::Hedge(args) => run_hedge(args, false),
        Command::Sweep(args) => run_hedge(args, true),
        Command::Selftest {
            seed,
            instances,
            samples,
            tolerance,
        } => Ok(run_selftest_cmd(SelftestConfig {
            seed: *seed,
            instances: *instances,
            samples: *samples,
            tolerance: *tolerance,
        })),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
