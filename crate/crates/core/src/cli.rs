//! Command implementations behind the `pistam` binary.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::action::{action_table, ActionId};
use crate::config::ExperimentConfig;
use crate::env::HandoverEnv;
use crate::error::Error;
use crate::policy::PolicyModel;
use crate::run::{compare, evaluate_policy, run};
use crate::social::SocialDemo;
use crate::stam::{log_grid_csv, rasterize, rasterize_log, AffordanceSignature, GridSpec, DEFAULT_CELL_SIZE, DEFAULT_GRID_CELLS};
use crate::state::ATTENTION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pistam", version, about = "Policy improvement with spatio-temporal affordance maps")]
pub struct Cli {
    /// Master seed; overrides `run.master_seed` from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "pistam-out")]
    pub out: PathBuf,

    /// TOML configuration file with [env], [search] and [run] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print the action index/name table and exit.
    #[arg(long)]
    pub list_actions: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run initialization plus N improvement iterations and write artifacts.
    Train,
    /// Run the same seeded experiment with and without affordance gating.
    Compare,
    /// Evaluate a saved policy.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 30)]
        episode_len: usize,
    },
    /// Rasterize one action's affordance over the floor plane.
    Heatmap {
        #[arg(long)]
        signature: PathBuf,
        /// Action name or index.
        #[arg(long)]
        action: String,
        #[arg(long, default_value_t = DEFAULT_CELL_SIZE)]
        cell_size: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_CELLS)]
        width: usize,
        #[arg(long, default_value_t = DEFAULT_GRID_CELLS)]
        height: usize,
        /// Grid origin; defaults to centering the grid on the target.
        #[arg(long, requires = "origin_y", allow_hyphen_values = true)]
        origin_x: Option<f64>,
        #[arg(long, requires = "origin_x", allow_hyphen_values = true)]
        origin_y: Option<f64>,
        /// Attention bit of the template state.
        #[arg(long, default_value_t = 1)]
        attention: u8,
        /// Write log densities instead of densities.
        #[arg(long)]
        log: bool,
        /// Output file; defaults to `<out>/heatmap_<action>.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the eye-contact prior and write per-action affordance bars.
    SocialDemo,
    /// Print the action index/name table.
    ListActions,
}

struct Failure {
    code: i32,
    error: Error,
}

fn usage(error: Error) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn runtime(error: Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.master_seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if cli.list_actions {
        print!("{}", action_table());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(usage(Error::InvalidArgument("no subcommand given; see --help".into())));
    };
    match command {
        Command::ListActions => {
            print!("{}", action_table());
            Ok(())
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let art = run(&cfg).map_err(runtime)?;
            art.write(&cli.out).map_err(runtime)?;
            println!("wrote {} iteration(s) to {}", art.metrics.len(), cli.out.display());
            Ok(())
        }
        Command::Compare => {
            let cfg = load_config(cli)?;
            let cmp = compare(&cfg).map_err(runtime)?;
            cmp.write(&cli.out).map_err(runtime)?;
            print!("{}", cmp.summary_csv());
            Ok(())
        }
        Command::Eval {
            policy,
            trials,
            episode_len,
        } => {
            let cfg = load_config(cli)?;
            let policy = PolicyModel::load(policy).map_err(usage)?;
            let seed = cfg.run.master_seed;
            let delta = (cfg.run.delta_min, cfg.run.delta_max);
            let stats = evaluate_policy(&mut &policy, &cfg.env, delta, *trials, *episode_len, seed).map_err(|e| match e {
                Error::InvalidArgument(_) => usage(e),
                e => runtime(e),
            })?;
            let mut csv = String::from("trial,mean_reward\n");
            for (k, r) in stats.trials.iter().enumerate() {
                csv.push_str(&format!("{k},{r:.9}\n"));
            }
            csv.push_str(&format!("mean,{:.9}\nstd,{:.9}\nmin,{:.9}\nmax,{:.9}\nsuccess_rate,{:.3}\n", stats.mean, stats.std, stats.min, stats.max, stats.success_rate));
            write_file(&cli.out.join("eval.csv"), &csv)?;
            println!("mean reward {:.4} (std {:.4}) over {trials} trials", stats.mean, stats.std);
            Ok(())
        }
        Command::Heatmap {
            signature,
            action,
            cell_size,
            width,
            height,
            origin_x,
            origin_y,
            attention,
            log,
            output,
        } => {
            let cfg = load_config(cli)?;
            let a: ActionId = action.parse().map_err(|e| {
                eprint!("valid actions:\n{}", action_table());
                usage(e)
            })?;
            if *attention > 1 {
                return Err(usage(Error::InvalidArgument("attention must be 0 or 1".into())));
            }
            let sig = AffordanceSignature::load(signature).map_err(usage)?;
            let [tx, ty, _] = cfg.env.target_position;
            let mut spec = GridSpec::around([tx, ty]);
            spec.cell_size = *cell_size;
            spec.width = *width;
            spec.height = *height;
            spec.origin = match (origin_x, origin_y) {
                (Some(x), Some(y)) => [*x, *y],
                _ => [tx - 0.5 * cell_size * *width as f64, ty - 0.5 * cell_size * *height as f64],
            };
            let mut template = *heatmap_template(&cfg).map_err(runtime)?.state();
            template.set(ATTENTION, f64::from(*attention));
            let csv = if *log {
                log_grid_csv(a, &spec, &rasterize_log(&sig, a, &template, &spec, [tx, ty]).map_err(usage)?)
            } else {
                rasterize(&sig, a, &template, &spec, [tx, ty]).map_err(usage)?.to_csv()
            };
            let path = output.clone().unwrap_or_else(|| cli.out.join(format!("heatmap_{}.csv", a.name())));
            write_file(&path, &csv)
        }
        Command::SocialDemo => {
            let cfg = load_config(cli)?;
            let demo = SocialDemo::build(&cfg.env, cfg.run.master_seed).map_err(runtime)?;
            demo.write(&cli.out).map_err(runtime)?;
            println!("wrote eye-contact prior affordances to {}", cli.out.display());
            Ok(())
        }
    }
}

/// The spawn pose at mid-range distance: facing the target, head centered,
/// arms at rest, hands open.
pub fn heatmap_template(cfg: &ExperimentConfig) -> crate::Result<HandoverEnv> {
    let mid = 0.5 * (cfg.run.delta_min + cfg.run.delta_max);
    HandoverEnv::reset(cfg.env.clone(), mid, mid, 0)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| runtime(e.into()))?;
    }
    fs::write(path, text).map_err(|e| runtime(e.into()))
}
