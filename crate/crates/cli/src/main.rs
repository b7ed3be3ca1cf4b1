use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use regolith_cli::bench::cmd_bench;
use regolith_cli::episodes::{load_config, load_scoop, Exports, PolicySetup};
use regolith_cli::generate::{cmd_generate, Target};
use regolith_cli::run::{cmd_eval_heldout, cmd_run, render_table, HeldoutArgs, RunArgs};
use regolith_cli::{CliError, CliResult, PolicyKind, EXIT_OK};
use regolith_core::env::EnvConfig;

#[derive(Parser)]
#[command(name = "regolith", version, about = "Granular excavation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Environment config JSON; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the particle count.
    #[arg(long)]
    particles: Option<usize>,
    /// Bit-exact mode.
    #[arg(long)]
    deterministic: bool,
    /// First episode seed; defaults to the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> CliResult<(EnvConfig, u64)> {
        let mut c = load_config(self.config.as_deref())?;
        if let Some(n) = self.particles {
            c.particle_count = n;
        }
        if self.deterministic {
            c.deterministic = true;
        }
        c.validate()?;
        let seed = self.seed.unwrap_or(c.seed);
        Ok((c, seed))
    }
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "zero")]
    policy: PolicyKind,
    /// Seed of the random policy's action stream.
    #[arg(long, default_value_t = 0)]
    policy_seed: u64,
    /// JSON overrides for the scoop-script waypoints and gains.
    #[arg(long)]
    scoop: Option<PathBuf>,
}

impl PolicyArgs {
    fn resolve(&self) -> CliResult<PolicySetup> {
        Ok(PolicySetup {
            kind: self.policy,
            seed: self.policy_seed,
            scoop: load_scoop(self.scoop.as_deref())?,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run scripted-policy episodes and write metrics.csv and manifest.json.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write one step-level CSV per episode.
        #[arg(long)]
        episode_csv: bool,
        /// Dump PLY particle frames every N control steps.
        #[arg(long, value_name = "N")]
        ply_every: Option<usize>,
    },
    /// Evaluate on the 8 held-out tools; writes per-episode and per-tool tables.
    EvalHeldout {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 50)]
        episodes_per_tool: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the schedule only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Generate a tool mesh (OBJ, STL, spec JSON) or a terrain heightfield.
    #[command(group(ArgGroup::new("target").required(true).args(["tool_seed", "tool_spec", "terrain_seed"])))]
    Generate {
        #[arg(long)]
        tool_seed: Option<u64>,
        #[arg(long)]
        tool_spec: Option<PathBuf>,
        /// Seed of the terrain stream itself.
        #[arg(long)]
        terrain_seed: Option<u64>,
        /// Terrain parameters are taken from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Measure stepping throughput.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        steps: u64,
        #[arg(long, value_enum, default_value = "scoop-script")]
        policy: PolicyKind,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            common,
            policy,
            episodes,
            out,
            episode_csv,
            ply_every,
        } => {
            let (config, seed) = common.resolve()?;
            let exports = Exports {
                step_csv: episode_csv.then(|| out.join("episodes")),
                ply: ply_every.map(|n| (out.join("frames"), n)),
            };
            let rows = cmd_run(&RunArgs {
                config,
                policy: policy.resolve()?,
                seed,
                episodes,
                out: out.clone(),
                exports,
                command: command_line(),
            })?;
            let mean = rows.iter().map(|r| r.metrics.excavated_volume).sum::<f64>() / rows.len() as f64;
            println!("{} episodes, mean volume {mean:.4} L -> {}", rows.len(), out.display());
        }
        Command::EvalHeldout {
            common,
            policy,
            episodes_per_tool,
            out,
            dry_run,
        } => {
            let (config, seed) = common.resolve()?;
            let outcome = cmd_eval_heldout(&HeldoutArgs {
                config,
                policy: policy.resolve()?,
                seed,
                episodes_per_tool,
                out: out.clone(),
                dry_run,
                command: command_line(),
            })?;
            println!("scheduled {} episodes", outcome.scheduled);
            if let Some(table) = outcome.table {
                print!("{}", render_table(&table));
            }
        }
        Command::Generate {
            tool_seed,
            tool_spec,
            terrain_seed,
            config,
            out,
        } => {
            let target = match (tool_seed, tool_spec, terrain_seed) {
                (Some(s), None, None) => Target::ToolSeed(s),
                (None, Some(p), None) => Target::ToolSpec(p),
                (None, None, Some(s)) => Target::TerrainSeed(s),
                _ => return Err(CliError::Usage("exactly one generation target is required".into())),
            };
            let terrain = load_config(config.as_deref())?.terrain;
            for p in cmd_generate(&target, &terrain, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Bench {
            common,
            steps,
            policy,
            json,
        } => {
            let (config, seed) = common.resolve()?;
            let report = cmd_bench(&config, steps, seed, policy)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(regolith_core::Error::from)?);
            } else {
                print!("{}", report.render());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
