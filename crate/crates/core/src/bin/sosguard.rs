use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sosguard::harness::{
    read_seed_dir, run_experiment, trailing_median, write_summary, Algorithm, ExperimentConfig, HarnessError,
    FULL_SCALE_EPISODES,
};

#[derive(Parser)]
#[command(name = "sosguard", about = "Safe DDPG on the pendulum with SOS barrier filters")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train and log one algorithm over several seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        algorithm: Option<String>,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// 150 episodes of 200 steps.
        #[arg(long)]
        full_paper_scale: bool,
    },
    /// Rebuild summary.csv from a run directory and print per-seed totals.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(
    config: PathBuf,
    algorithm: Option<String>,
    seeds: Option<String>,
    episodes: Option<usize>,
    steps: Option<usize>,
    out: Option<PathBuf>,
    full: bool,
) -> Result<ExitCode, HarnessError> {
    let mut cfg = ExperimentConfig::from_text(&std::fs::read_to_string(&config)?)?;
    if let Some(a) = algorithm {
        cfg.set("run.algorithm", &a)?;
    }
    if let Some(s) = seeds {
        cfg.set("run.seeds", &s)?;
    }
    if full {
        cfg.episodes = FULL_SCALE_EPISODES;
        cfg.steps = 200;
    }
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    if let Some(n) = steps {
        cfg.steps = n;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    cfg.validate()?;
    let outcomes = run_experiment(&cfg)?;
    let mut code = ExitCode::SUCCESS;
    for o in &outcomes {
        println!(
            "seed {}: {} episodes, {} steps, {} violations, {} non-sos_ok steps{}",
            o.seed,
            o.episodes.len(),
            o.steps(),
            o.violations(),
            o.non_ok_steps(),
            o.error.as_deref().map(|e| format!(", stopped: {e}")).unwrap_or_default()
        );
        if o.error.is_some() {
            code = ExitCode::from(1);
        }
    }
    if cfg.algorithm == Algorithm::DdpgSosp {
        let breach = outcomes.iter().any(|o| o.violations() > 0 && o.non_ok_steps() == 0 && o.steps() > 0);
        if breach {
            eprintln!("safety violation although every filter step was certified");
            return Ok(ExitCode::from(2));
        }
    }
    Ok(code)
}

fn report(dir: PathBuf) -> Result<ExitCode, HarnessError> {
    let mut seeds: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("seed_")))
        .collect();
    seeds.sort();
    if seeds.is_empty() {
        return Err(HarnessError::Config(format!("no seed_* directories in {}", dir.display())));
    }
    let mut per_seed = Vec::new();
    println!("seed,episodes,steps,violations,non_sos_ok,final_trailing_median_cost,partial");
    for path in &seeds {
        let r = read_seed_dir(path)?;
        let steps: usize = r.safety.iter().map(|(_, v)| v[1] + v[2] + v[3]).sum();
        let viol: usize = r.safety.iter().map(|(_, v)| v[0]).sum();
        let non_ok: usize = r.safety.iter().map(|(_, v)| v[2] + v[3]).sum();
        let costs: Vec<f64> = r.episodes.iter().map(|(_, v)| v[2]).collect();
        let tm = trailing_median(&costs, 5).last().copied().unwrap_or(f64::NAN);
        println!(
            "{},{},{},{},{},{},{}",
            path.file_name().unwrap().to_string_lossy(),
            r.episodes.len(),
            steps,
            viol,
            non_ok,
            tm,
            r.partial.is_some()
        );
        per_seed.push(r.episodes);
    }
    write_summary(&dir.join("summary.csv"), &per_seed)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, algorithm, seeds, episodes, steps, out, full_paper_scale } => {
            run(config, algorithm, seeds, episodes, steps, out, full_paper_scale)
        }
        Cmd::Report { input } => report(input),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
