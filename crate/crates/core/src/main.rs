use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vpflow::commands::{
    cmd_check, cmd_flow, cmd_foliate, cmd_stability, cmd_sweep, exit_code_for_error, exit_code_for_status,
};
use vpflow::config::{CheckName, RunConfig};
use vpflow::io::fmt_f64;
use vpflow::Result;

#[derive(Parser)]
#[command(name = "vpflow", version, about = "Equidistant foliations and volume-preserving mean curvature flow")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Leaf geometry summaries over a range of heights.
    Foliate(Common),
    /// Run the flow from one leaf.
    Flow {
        #[command(flatten)]
        common: Common,
        /// Continue the run stored in --out from its last snapshot.
        #[arg(long)]
        resume: bool,
    },
    /// Independent flows over a range of heights, tabulating c(r).
    Sweep(Common),
    /// Lowest eigenvalue of the stability operator.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Run directory whose final surface and trajectory are analysed.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Diagnostics on a completed run directory.
    Check {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated subset of checks.
        #[arg(long)]
        checks: Option<String>,
    },
}

/// Settings shared by the run-producing subcommands. Each flag is also a key
/// of the config file.
#[derive(Args)]
struct Common {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gen: Option<String>,
    #[arg(long)]
    amp: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    zero_mean_trace: bool,
    #[arg(long, allow_hyphen_values = true)]
    lam1: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lam2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    v_const: Option<String>,
    #[arg(long)]
    v_amp: Option<String>,
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    max_wavenumber: Option<String>,
    /// Reference data file (overrides the generator).
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    ny: Option<String>,
    #[arg(long)]
    lx: Option<String>,
    #[arg(long)]
    ly: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    r_min: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    r_max: Option<String>,
    #[arg(long)]
    r_count: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    perturb: Option<String>,
    #[arg(long)]
    dt_init: Option<String>,
    #[arg(long)]
    cfl_safety: Option<String>,
    #[arg(long)]
    t_max: Option<String>,
    #[arg(long)]
    eps_converge: Option<String>,
    #[arg(long)]
    eps_volume_drift: Option<String>,
    #[arg(long)]
    record_every: Option<String>,
    /// explicit-rk2 or semi-implicit.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    checks: Option<String>,
    /// Concurrent sweep rows.
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<String>,
    #[arg(long)]
    dt_probe: Option<String>,
}

impl Common {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let opts: [(&'static str, &Option<String>); 31] = [
            ("gen", &self.gen),
            ("amp", &self.amp),
            ("seed", &self.seed),
            ("lam1", &self.lam1),
            ("lam2", &self.lam2),
            ("v-const", &self.v_const),
            ("v-amp", &self.v_amp),
            ("modes", &self.modes),
            ("max-wavenumber", &self.max_wavenumber),
            ("data", &self.data),
            ("nx", &self.nx),
            ("ny", &self.ny),
            ("lx", &self.lx),
            ("ly", &self.ly),
            ("r", &self.r),
            ("r-min", &self.r_min),
            ("r-max", &self.r_max),
            ("r-count", &self.r_count),
            ("perturb", &self.perturb),
            ("dt-init", &self.dt_init),
            ("cfl-safety", &self.cfl_safety),
            ("t-max", &self.t_max),
            ("eps-converge", &self.eps_converge),
            ("eps-volume-drift", &self.eps_volume_drift),
            ("record-every", &self.record_every),
            ("scheme", &self.scheme),
            ("out", &self.out),
            ("checks", &self.checks),
            ("jobs", &self.jobs),
            ("checkpoint-every", &self.checkpoint_every),
            ("dt-probe", &self.dt_probe),
        ];
        let mut out: Vec<(&'static str, String)> =
            opts.iter().filter_map(|(k, v)| v.as_ref().map(|v| (*k, v.clone()))).collect();
        if self.zero_mean_trace {
            out.push(("zero-mean-trace", "true".into()));
        }
        out
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::read(path)?,
            None => RunConfig::default(),
        };
        let pairs = self.pairs();
        cfg.apply_pairs(pairs.iter().map(|(k, v)| (*k, v.as_str())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Command::Foliate(common) => {
            let cfg = common.resolve()?;
            let rows = cmd_foliate(&cfg)?;
            println!("wrote {} leaves to {}", rows.len(), cfg.out.display());
            Ok(0)
        }
        Command::Flow { common, resume } => {
            let mut cfg = common.resolve()?;
            if resume {
                // the stored configuration is the base; flags still override
                let stored = RunConfig::read(&cfg.out.join(vpflow::commands::CONFIG_FILE))?;
                let out = cfg.out.clone();
                cfg = stored;
                let pairs = common.pairs();
                cfg.apply_pairs(pairs.iter().map(|(k, v)| (*k, v.as_str())))?;
                cfg.out = out;
                cfg.validate()?;
            }
            let outcome = cmd_flow(&cfg, resume)?;
            println!(
                "status={} t={} steps={} c_limit={} max_volume_drift={}",
                outcome.status,
                fmt_f64(outcome.final_state.t),
                outcome.steps,
                outcome.c_limit.map(fmt_f64).unwrap_or_default(),
                fmt_f64(outcome.max_volume_drift)
            );
            Ok(exit_code_for_status(outcome.status))
        }
        Command::Sweep(common) => {
            let cfg = common.resolve()?;
            let rows = cmd_sweep(&cfg)?;
            for r in &rows {
                println!(
                    "r={} status={} c={} band=[{}, {}]",
                    fmt_f64(r.r),
                    r.status,
                    r.c.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.lower),
                    fmt_f64(r.upper)
                );
            }
            Ok(0)
        }
        Command::Stability { common, run } => {
            let cfg = common.resolve()?;
            let out = cmd_stability(&cfg, run.as_deref())?;
            println!(
                "lambda_min={} strictly_stable={} fitted_decay_rate={} operator={}",
                fmt_f64(out.report.lambda_min),
                out.report.strictly_stable,
                out.report.fitted_decay_rate.map(fmt_f64).unwrap_or_default(),
                if out.hyperbolic { "hyperbolic" } else { "model stability operator" }
            );
            Ok(0)
        }
        Command::Check { run, checks } => {
            let names: Vec<CheckName> = match checks {
                Some(list) => list
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?,
                None => Vec::new(),
            };
            let results = cmd_check(&run, &names)?;
            let mut failed = false;
            for r in &results {
                println!("check={} status={} value={}", r.name, r.status, fmt_f64(r.value));
                failed |= r.status == vpflow::commands::CheckStatus::Fail;
            }
            Ok(if failed { 1 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for_error(&e) as u8)
        }
    }
}
