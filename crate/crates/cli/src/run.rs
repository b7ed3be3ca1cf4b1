//! `run` and `eval-heldout`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use regolith_core::env::{EnvConfig, ManifestEpisode, RunManifest, ToolChoice};
use regolith_core::procgen::{heldout_set, HeldoutOrigin};

use crate::episodes::{create_file, metric_values, run_jobs, write_metrics_csv, write_text, EpisodeOutput, Exports, Job, PolicySetup, METRICS_COLUMNS};
use crate::error::{CliError, CliResult};

pub struct RunArgs {
    pub config: EnvConfig,
    pub policy: PolicySetup,
    pub seed: u64,
    pub episodes: usize,
    pub out: PathBuf,
    pub exports: Exports,
    pub command: String,
}

fn manifest(config: &EnvConfig, command: &str, policy: &PolicySetup, rows: &[EpisodeOutput]) -> CliResult<RunManifest> {
    let mut m = RunManifest::new(config, command, policy.kind.name())?;
    m.seeds = rows.iter().map(|r| r.seed).collect();
    m.episodes = rows
        .iter()
        .map(|r| ManifestEpisode {
            seed: r.seed,
            tool_id: r.tool_id.clone(),
            metrics: r.metrics,
        })
        .collect();
    Ok(m)
}

/// Runs seeds `seed, seed + 1, …` and writes metrics.csv and manifest.json.
pub fn cmd_run(args: &RunArgs) -> CliResult<Vec<EpisodeOutput>> {
    if args.episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let jobs: Vec<Job> = (0..args.episodes)
        .map(|i| Job {
            index: i,
            group: 0,
            seed: args.seed.wrapping_add(i as u64),
        })
        .collect();
    let rows = run_jobs(std::slice::from_ref(&args.config), &jobs, &args.policy, &args.exports)?;
    let path = args.out.join("metrics.csv");
    write_metrics_csv(create_file(&path)?, &rows, None)?;
    let m = manifest(&args.config, &args.command, &args.policy, &rows)?;
    write_text(&args.out.join("manifest.json"), &m.to_json()?)?;
    Ok(rows)
}

pub struct HeldoutArgs {
    pub config: EnvConfig,
    pub policy: PolicySetup,
    pub seed: u64,
    pub episodes_per_tool: usize,
    pub out: PathBuf,
    pub dry_run: bool,
    pub command: String,
}

/// Mean and sample standard deviation; the deviation is 0 for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct ToolSummary {
    pub tool: String,
    pub origin: String,
    pub tool_id: String,
    pub episodes: usize,
    /// (mean, std) per metric, in [`METRICS_COLUMNS`] order from `volume_L` on.
    pub stats: Vec<(f64, f64)>,
}

/// Held-out schedule: every tool sees the same seeds, so tools are compared
/// on identical terrains and materials.
pub fn heldout_jobs(seed: u64, episodes_per_tool: usize) -> Vec<Job> {
    let tools = heldout_set().len();
    (0..tools)
        .flat_map(|t| {
            (0..episodes_per_tool).map(move |k| Job {
                index: t * episodes_per_tool + k,
                group: t,
                seed: seed.wrapping_add(k as u64),
            })
        })
        .collect()
}

pub fn summarize(rows: &[EpisodeOutput]) -> Vec<ToolSummary> {
    heldout_set()
        .iter()
        .enumerate()
        .map(|(t, tool)| {
            let mine: Vec<&EpisodeOutput> = rows.iter().filter(|r| r.group == t).collect();
            let stats = (0..9)
                .map(|c| mean_std(&mine.iter().map(|r| metric_values(&r.metrics)[c]).collect::<Vec<_>>()))
                .collect();
            ToolSummary {
                tool: tool.name.to_string(),
                origin: match tool.origin {
                    HeldoutOrigin::ReservedSeed(s) => format!("procedural:{s}"),
                    HeldoutOrigin::Manual => "manual".into(),
                },
                tool_id: mine.first().map(|r| r.tool_id.clone()).unwrap_or_default(),
                episodes: mine.len(),
                stats,
            }
        })
        .collect()
}

fn write_summary(path: &Path, table: &[ToolSummary]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let mut header: Vec<String> = ["tool", "origin", "tool_id", "episodes"].map(String::from).to_vec();
    for c in &METRICS_COLUMNS[2..] {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    w.write_record(&header)?;
    for s in table {
        let mut row = vec![s.tool.clone(), s.origin.clone(), s.tool_id.clone(), s.episodes.to_string()];
        for (m, sd) in &s.stats {
            row.push(m.to_string());
            row.push(sd.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Human-readable per-tool table of the headline metrics.
pub fn render_table(table: &[ToolSummary]) -> String {
    let mut s = format!(
        "{:<14} {:>4}  {:>22}  {:>22}  {:>26}\n",
        "tool", "n", "volume_L", "dust_fraction", "msj"
    );
    for t in table {
        let cell = |c: usize| format!("{:.4} ± {:.4}", t.stats[c].0, t.stats[c].1);
        s.push_str(&format!(
            "{:<14} {:>4}  {:>22}  {:>22}  {:>26}\n",
            t.tool,
            t.episodes,
            cell(0),
            cell(1),
            format!("{:.4e} ± {:.4e}", t.stats[2].0, t.stats[2].1)
        ));
    }
    s
}

/// Output of `eval-heldout`: the schedule size and, unless dry, the table.
pub struct HeldoutOutcome {
    pub scheduled: usize,
    pub table: Option<Vec<ToolSummary>>,
}

pub fn cmd_eval_heldout(args: &HeldoutArgs) -> CliResult<HeldoutOutcome> {
    if args.episodes_per_tool == 0 {
        return Err(CliError::Usage("--episodes-per-tool must be at least 1".into()));
    }
    let tools = heldout_set();
    let jobs = heldout_jobs(args.seed, args.episodes_per_tool);
    if args.dry_run {
        let mut w = csv::Writer::from_writer(create_file(&args.out.join("schedule.csv"))?);
        w.write_record(["index", "tool", "seed"])?;
        for j in &jobs {
            w.write_record([j.index.to_string(), tools[j.group].name.to_string(), j.seed.to_string()])?;
        }
        w.flush().map_err(|e| CliError::io(&args.out, e))?;
        return Ok(HeldoutOutcome {
            scheduled: jobs.len(),
            table: None,
        });
    }
    let configs: Vec<EnvConfig> = tools
        .iter()
        .map(|t| EnvConfig {
            tool: ToolChoice::Fixed { spec: t.spec.clone() },
            ..args.config.clone()
        })
        .collect();
    let rows = run_jobs(&configs, &jobs, &args.policy, &Exports::default())?;
    let name = |r: &EpisodeOutput| tools[r.group].name.to_string();
    write_metrics_csv(create_file(&args.out.join("episodes.csv"))?, &rows, Some(("tool", &name)))?;
    let table = summarize(&rows);
    write_summary(&args.out.join("summary.csv"), &table)?;
    let m = manifest(&args.config, &args.command, &args.policy, &rows)?;
    write_text(&args.out.join("manifest.json"), &m.to_json()?)?;
    Ok(HeldoutOutcome {
        scheduled: jobs.len(),
        table: Some(table),
    })
}
