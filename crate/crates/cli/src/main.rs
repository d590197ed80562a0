use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sgnash_core::diagnostics::{eps_nash_certify, kkt_residual, kktn_check, lambda_prime};
use sgnash_core::game::{strategy_value, validate_game, JointStrategy, StochasticGame, ValueVector};
use sgnash_core::nlp::{census, Nlp};
use sgnash_core::solver::{solve, trace_export, SolverConfig};
use sgnash_core::terrain::{build_terrain_game, parse_objects, TerrainSpec};
use sgnash_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "sgnash", version, about = "Nash equilibria of two-player discounted stochastic games")]
struct Cli {
    /// Seed for randomized components (the pipeline itself is deterministic).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the grid exploration game as JSON.
    GenTerrain {
        #[arg(long, default_value_t = 4)]
        side: usize,
        /// Object cells as "(x,y);(x,y)".
        #[arg(long, default_value = "(0,3);(3,3)")]
        objects: String,
        #[arg(long, default_value_t = 0.75)]
        discount: f64,
    },
    /// Solve a game; writes point.json, report.json and trace.csv.
    Solve {
        game: PathBuf,
        #[command(flatten)]
        cfg: SolveArgs,
    },
    /// Check a point: KKT residuals, KKT-N test and best-response gap.
    Verify {
        game: PathBuf,
        point: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        act_tol: f64,
        /// Slack allowed above the bound f/(1-β).
        #[arg(long, default_value_t = 1e-6)]
        slack: f64,
    },
    /// Print variable and constraint counts.
    Census { game: PathBuf },
    /// Values of the strategies in a point file.
    Eval { game: PathBuf, point: PathBuf },
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Override the game's discount factor.
    #[arg(long)]
    discount: Option<f64>,
    /// Two-stage direction parameter.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    rho0: f64,
    /// Margin of the initial value constraints.
    #[arg(long, default_value_t = 0.5)]
    init_slack: f64,
    #[arg(long, default_value_t = 1.0)]
    weight: f64,
    #[arg(long, default_value_t = 0.9)]
    delta0: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 2.0)]
    nu: f64,
    #[arg(long, default_value_t = 1e6)]
    t_cap: f64,
    #[arg(long, default_value_t = 1e-14)]
    t_min: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol_s: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol_f: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
}

impl SolveArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            init_slack: self.init_slack,
            ts_alpha: self.alpha,
            rho0: self.rho0,
            weight: self.weight,
            delta0: self.delta0,
            eta: self.eta,
            nu: self.nu,
            t_cap: self.t_cap,
            t_min: self.t_min,
            tol_s: self.tol_s,
            tol_f: self.tol_f,
            max_iters: self.max_iters,
            ..SolverConfig::default()
        }
    }
}

#[derive(serde::Deserialize)]
struct PointFile {
    v: [Vec<f64>; 2],
    pi: [Vec<Vec<f64>>; 2],
    #[serde(default)]
    lambda: Option<Vec<f64>>,
}

fn load_game(path: &Path) -> Result<StochasticGame> {
    StochasticGame::load(path)
}

fn load_point(game: &StochasticGame, path: &Path) -> Result<(ValueVector, JointStrategy, Option<Vec<f64>>)> {
    let p: PointFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let v = ValueVector { v: p.v };
    let pi = JointStrategy { pi: p.pi };
    v.check_dims(game)?;
    pi.check(game, 1e-8)?;
    Ok((v, pi, p.lambda))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::GenTerrain { side, objects, discount } => {
            let spec = TerrainSpec::new(side, parse_objects(&objects)?, discount);
            let tg = build_terrain_game(&spec)?;
            if !cli.quiet {
                eprintln!("terrain game: {} states", tg.game.num_states());
            }
            emit(out, &tg.game.to_json_string()?)?;
            Ok(true)
        }
        Command::Census { game } => {
            let g = load_game(&game)?;
            let c = census(&g);
            let text = format!(
                "states {}\nvariables {}\nconstraints {}\neliminated variables {}\neliminated constraints {}",
                c.states, c.paper_variables, c.paper_constraints, c.variables, c.constraints
            );
            emit(out, &text)?;
            Ok(true)
        }
        Command::Eval { game, point } => {
            let g = load_game(&game)?;
            let (_, pi, _) = load_point(&g, &point)?;
            let v = strategy_value(&g, &pi)?;
            emit(out, &serde_json::to_string_pretty(&json!({ "v": v.v }))?)?;
            Ok(true)
        }
        Command::Solve { game, cfg } => {
            let mut g = load_game(&game)?;
            if let Some(b) = cfg.discount {
                g = g.with_discount(b);
                if let Some(v) = validate_game(&g).first() {
                    return Err(Error::InvalidGame(v.to_string()));
                }
            }
            let config = cfg.config();
            let report = solve(&g, &config)?;
            let dir = out.unwrap_or(Path::new("."));
            fs::create_dir_all(dir)?;
            let point = json!({ "v": report.v.v, "pi": report.pi.pi, "lambda": report.gamma });
            fs::write(dir.join("point.json"), serde_json::to_string_pretty(&point)?)?;
            fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            trace_export(&report, dir.join("trace.csv"))?;
            if !cli.quiet {
                eprintln!(
                    "{}: f = {:.3e}, eps = {:.3e} after {} iterations ({:.1} s)",
                    report.stop_reason, report.f, report.epsilon, report.iterations, report.seconds
                );
            }
            Ok(report.failure.is_none())
        }
        Command::Verify { game, point, act_tol, slack } => {
            let g = load_game(&game)?;
            let (v, pi, lambda) = load_point(&g, &point)?;
            let nlp = Nlp::new(&g);
            let z = nlp.layout().pack(&v, &pi);
            let f = nlp.objective(&z)?;
            let bound = f / (1.0 - g.discount());
            let lam = match lambda {
                Some(l) => l,
                None => lambda_prime(&g, &z)?.into_iter().map(|x| -x).collect(),
            };
            let kkt = kkt_residual(&g, &z, &lam, act_tol)?;
            let kktn = kktn_check(&g, &z, act_tol)?;
            let cert = eps_nash_certify(&g, &pi)?;
            let pass = kkt.primal < 0.0 + act_tol && cert.within(bound, slack);
            let report = json!({
                "f": f,
                "epsilon_bound": bound,
                "kkt": {
                    "stationarity": kkt.stationarity,
                    "complementarity": kkt.complementarity,
                    "primal": kkt.primal,
                    "dual": kkt.dual,
                    "active": kkt.active.len(),
                },
                "kktn": kktn,
                "certificate": cert,
                "pass": pass,
            });
            emit(out, &serde_json::to_string_pretty(&report)?)?;
            if !cli.quiet {
                eprintln!("{}", if pass { "PASS" } else { "FAIL" });
            }
            Ok(pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
