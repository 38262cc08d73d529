use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use otn_core::games::read_payoff_csv;
use otn_core::harness::experiments::{self, DIVERGENCE_DELTAS, DIVERGENCE_NOISE_VARS, RATE_SCAN_SIZES};
use otn_core::harness::{
    build_traffic_game, quartile_trend, rounds_to_congestion, run_experiment, uniform_congestion, write_artifacts, ExperimentConfig, GameConfig, SummaryTable,
    CONGESTION_WINDOW, SEED_ENV,
};
use otn_core::metrics::{duality_gap, solve_nash_with, DEFAULT_NASH_MAX_ITERS, DEFAULT_NASH_TOL};
use otn_core::tntp::load_network;

#[derive(Parser)]
#[command(name = "otn", version, about = "Optimism-then-no-regret experiments")]
struct Cli {
    /// Master seed; `OTN_SEED` takes precedence when set.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run a config once per master seed, each into `<out>/seed_<s>`.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Divergence rate on the counterexample over a delta x noise grid.
    Divergence {
        #[arg(long, default_value = "ts-rm")]
        agent: String,
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        noise_vars: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long, default_value_t = 500)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Radar anti-jamming game against the adaptive jammer.
    Radar {
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Routing game on a TNTP network.
    Traffic {
        network: PathBuf,
        #[arg(long, default_value_t = 20)]
        players: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 2000)]
        horizon: usize,
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<String>>,
        /// Average-congestion level for rounds-to-threshold; half the
        /// uniform-routing level when absent.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a zero-sum game given as a headerless payoff CSV.
    Nash {
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_NASH_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_NASH_MAX_ITERS)]
        max_iters: usize,
    },
    /// Slope of log average regret against log matrix size.
    RateScan {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', default_value = "iwe-hedge,ots-hedge")]
        agents: Vec<String>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 100_000)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the TOML of a named experiment.
    Preset {
        name: String,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn master_seed(flag: Option<u64>, fallback: u64) -> anyhow::Result<u64> {
    if let Ok(s) = std::env::var(SEED_ENV) {
        return s.trim().parse().with_context(|| format!("{SEED_ENV} must be an unsigned integer, got `{s}`"));
    }
    Ok(flag.unwrap_or(fallback))
}

fn finish(cfg: &ExperimentConfig) -> anyhow::Result<SummaryTable> {
    let res = run_experiment(cfg)?;
    println!("{}", res.summary);
    if let Some(dir) = &cfg.output {
        println!("wrote {}", dir.display());
    }
    Ok(res.summary)
}

fn write_to(path: &Path, f: impl FnOnce(fs::File) -> otn_core::Result<()>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    f(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn preset(name: &str, seed: u64, runs: Option<usize>, horizon: Option<usize>) -> anyhow::Result<ExperimentConfig> {
    let r = |d| runs.unwrap_or(d);
    let t = |d| horizon.unwrap_or(d);
    Ok(match name {
        "divergence" => experiments::divergence(seed, r(200), t(500), "ts-rm", 0.1, 0.1),
        "table2" => experiments::table2(seed, r(100), t(1000)),
        "ordering" => experiments::ordering(seed, r(20), t(100_000)),
        "rate-scan" => experiments::rate_scan_config(seed, r(20), t(100_000), 10, &["iwe-hedge", "ots-hedge"]),
        "full-info" => experiments::full_info(seed, r(50), t(10_000), 10),
        "radar" => experiments::radar(seed, r(20), t(10_000)),
        "traffic" => experiments::traffic(seed, r(10), t(2000), None),
        other => bail!("unknown experiment `{other}`; known: {}", experiments::EXPERIMENT_NAMES.join(", ")),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            runs,
            horizon,
        } => {
            let mut cfg =
                ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            cfg.seed = master_seed(cli.seed, cfg.seed)?;
            if let Some(o) = out {
                cfg.output = Some(o);
            }
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(t) = horizon {
                cfg.horizon = t;
            }
            finish(&cfg)?;
        }
        Cmd::Sweep { config, seeds, out } => {
            let base = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            for s in seeds {
                let mut cfg = base.clone();
                cfg.seed = s;
                cfg.output = Some(out.join(format!("seed_{s}")));
                println!("seed {s}");
                finish(&cfg)?;
            }
        }
        Cmd::Divergence {
            agent,
            deltas,
            noise_vars,
            runs,
            horizon,
            out,
        } => {
            let seed = master_seed(cli.seed, 2024)?;
            let deltas = deltas.unwrap_or_else(|| DIVERGENCE_DELTAS.to_vec());
            let noise_vars = noise_vars.unwrap_or_else(|| DIVERGENCE_NOISE_VARS.to_vec());
            let cells = experiments::divergence_grid(seed, runs, horizon, &agent, &deltas, &noise_vars)?;
            println!("{:>8} {:>10} {:>8}", "delta", "noise_var", "rate");
            for c in &cells {
                println!("{:>8} {:>10} {:>8.3}", c.delta, c.noise_var, c.rate());
            }
            if let Some(p) = out {
                write_to(&p, |f| experiments::write_divergence_csv(f, &cells))?;
            }
        }
        Cmd::Radar { runs, horizon, out } => {
            let mut cfg = experiments::radar(master_seed(cli.seed, 2024)?, runs, horizon);
            cfg.output = out;
            finish(&cfg)?;
        }
        Cmd::Traffic {
            network,
            players,
            runs,
            horizon,
            agents,
            threshold,
            out,
        } => {
            let net = load_network(&network).with_context(|| format!("loading {}", network.display()))?;
            println!("{}: {} nodes, {} links", network.display(), net.n_nodes, net.n_edges());
            let mut cfg = experiments::traffic(master_seed(cli.seed, 2024)?, runs, horizon, Some(network));
            if let Some(a) = agents {
                cfg.agents = a.iter().map(|n| n.as_str().into()).collect();
            }
            if let GameConfig::Traffic(tc) = &mut cfg.game {
                tc.players = players;
            }
            let threshold = match threshold {
                Some(th) => th,
                None => {
                    let GameConfig::Traffic(tc) = &cfg.game else { unreachable!() };
                    let base = uniform_congestion(&build_traffic_game(tc, cfg.seed)?, 1000, cfg.seed)?;
                    println!("uniform-routing congestion {base:.5}; threshold {:.5}", 0.5 * base);
                    0.5 * base
                }
            };
            let res = run_experiment(&cfg)?;
            println!("{}", res.summary);
            println!("{:<12} {:>5} {:>12} {:>14}", "agent", "run", "trend", "rounds_to_thr");
            for r in &res.runs {
                let series = r.congestion.as_deref().unwrap_or_default();
                let hit = rounds_to_congestion(series, threshold, CONGESTION_WINDOW);
                println!(
                    "{:<12} {:>5} {:>12.5} {:>14}",
                    r.agent,
                    r.run,
                    quartile_trend(series),
                    hit.map_or("-".to_string(), |h| h.to_string())
                );
            }
            if let Some(dir) = out {
                write_artifacts(&dir, &cfg, &res.runs, &res.summary)?;
                println!("wrote {}", dir.display());
            }
        }
        Cmd::Nash { matrix, tol, max_iters } => {
            let file = fs::File::open(&matrix).with_context(|| format!("opening {}", matrix.display()))?;
            let payoff = read_payoff_csv(file)?;
            let nash = solve_nash_with(&payoff, tol, max_iters)?;
            let gap = duality_gap(&payoff, &nash.x, &nash.y)?;
            println!("value {:.8}", nash.value);
            println!("duality_gap {gap:.3e}");
            println!("x {:?}", nash.x.probs());
            println!("y {:?}", nash.y.probs());
        }
        Cmd::RateScan {
            sizes,
            agents,
            runs,
            horizon,
            out,
        } => {
            let seed = master_seed(cli.seed, 2024)?;
            let sizes = sizes.unwrap_or_else(|| RATE_SCAN_SIZES.to_vec());
            if sizes.len() < 2 {
                bail!("rate scan needs at least two sizes");
            }
            let names: Vec<&str> = agents.iter().map(String::as_str).collect();
            let scan = experiments::rate_scan(seed, runs, horizon, &sizes, &names)?;
            for (a, m, v) in &scan.points {
                println!("{a:<12} M={m:<4} avg_regret {v:.6}");
            }
            for (a, s) in &scan.slopes {
                println!("{a:<12} slope {s:.4}");
            }
            if let Some(p) = out {
                write_to(&p, |f| scan.write_csv(f))?;
            }
        }
        Cmd::Preset { name, runs, horizon } => {
            let cfg = preset(&name, master_seed(cli.seed, 2024)?, runs, horizon)?;
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
