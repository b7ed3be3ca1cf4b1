//! Episode execution on a worker pool and the per-episode metrics table.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use regolith_core::env::{tool_id, write_episode_csv, Env, EnvConfig, EpisodeMetrics};
use regolith_core::Result;

use crate::error::{CliError, CliResult};
use crate::policy::{PolicyKind, ScoopParams, ScriptedPolicy};

/// Columns of metrics.csv, in order.
pub const METRICS_COLUMNS: [&str; 11] = [
    "seed",
    "tool_id",
    "volume_L",
    "dust_fraction",
    "msj",
    "r_approach",
    "r_lift",
    "r_stabilize",
    "p_dust",
    "p_jerk",
    "total",
];

#[derive(Clone, Debug)]
pub struct PolicySetup {
    pub kind: PolicyKind,
    pub seed: u64,
    pub scoop: ScoopParams,
}

/// Optional per-episode files.
#[derive(Clone, Debug, Default)]
pub struct Exports {
    /// Directory for one step CSV per episode.
    pub step_csv: Option<PathBuf>,
    /// Directory for PLY particle frames, with the frame interval in control steps.
    pub ply: Option<(PathBuf, usize)>,
}

/// One scheduled episode. `group` selects the config it runs under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Job {
    pub index: usize,
    pub group: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeOutput {
    pub index: usize,
    pub group: usize,
    pub seed: u64,
    pub tool_id: String,
    pub metrics: EpisodeMetrics,
}

fn episode_stem(job: &Job) -> String {
    format!("episode_{:04}_seed_{}", job.index, job.seed)
}

fn write_ply(env: &Env, dir: &Path, step: usize) -> Result<()> {
    let mut out = BufWriter::new(File::create(dir.join(format!("frame_{step:04}.ply")))?);
    env.write_particles_ply(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Resets `env` to the job's seed and drives it to truncation.
pub fn run_episode(env: &mut Env, job: &Job, policy: &PolicySetup, exports: &Exports) -> Result<EpisodeOutput> {
    let mut obs = env.reset(job.seed)?;
    let mut actor = ScriptedPolicy::for_episode(policy.kind, policy.seed, job.seed, env, &obs, &policy.scoop)?;
    let frames = match &exports.ply {
        Some((root, every)) => {
            let dir = root.join(episode_stem(job));
            fs::create_dir_all(&dir)?;
            write_ply(env, &dir, 0)?;
            Some((dir, (*every).max(1)))
        }
        None => None,
    };
    loop {
        let action = actor.act(&obs)?;
        let r = env.step(&action)?;
        if let Some((dir, every)) = &frames {
            if r.info.step % every == 0 || r.truncated {
                write_ply(env, dir, r.info.step)?;
            }
        }
        obs = r.observation;
        if r.truncated {
            break;
        }
    }
    if let Some(dir) = &exports.step_csv {
        let out = BufWriter::new(File::create(dir.join(format!("{}.csv", episode_stem(job))))?);
        write_episode_csv(out, env.record()?)?;
    }
    Ok(EpisodeOutput {
        index: job.index,
        group: job.group,
        seed: job.seed,
        tool_id: tool_id(&env.reset_info()?.tool_spec)?,
        metrics: env.metrics()?,
    })
}

/// Runs every job, spreading them over the rayon pool. Each worker owns its
/// environments, so settle and tool caches are never shared. Results come
/// back in job order; the first failing job by index is reported.
pub fn run_jobs(
    configs: &[EnvConfig],
    jobs: &[Job],
    policy: &PolicySetup,
    exports: &Exports,
) -> CliResult<Vec<EpisodeOutput>> {
    for c in configs {
        c.validate()?;
    }
    for dir in exports.step_csv.iter().chain(exports.ply.iter().map(|(d, _)| d)) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let workers = rayon::current_num_threads().clamp(1, jobs.len().max(1));
    let mut results: Vec<(Job, Result<EpisodeOutput>)> = (0..workers)
        .into_par_iter()
        .flat_map_iter(|w| {
            let mut envs: HashMap<usize, Env> = HashMap::new();
            jobs.iter()
                .skip(w)
                .step_by(workers)
                .map(|job| {
                    let out = match envs.entry(job.group) {
                        std::collections::hash_map::Entry::Occupied(e) => run_episode(e.into_mut(), job, policy, exports),
                        std::collections::hash_map::Entry::Vacant(v) => Env::new(configs[job.group].clone())
                            .and_then(|env| run_episode(v.insert(env), job, policy, exports)),
                    };
                    (*job, out)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    results.sort_by_key(|(job, _)| job.index);
    results
        .into_iter()
        .map(|(job, r)| {
            r.map_err(|source| CliError::Episode {
                index: job.index,
                seed: job.seed,
                source,
            })
        })
        .collect()
}

/// Metric values in [`METRICS_COLUMNS`] order after `seed` and `tool_id`.
pub fn metric_values(m: &EpisodeMetrics) -> [f64; 9] {
    let s = &m.reward_sums;
    [
        m.excavated_volume,
        m.dust_fraction,
        m.mean_squared_jerk,
        s.r_approach,
        s.r_lift,
        s.r_stabilize,
        s.p_dust,
        s.p_jerk,
        s.total,
    ]
}

/// Header and value of an extra leading column.
pub type RowLabel<'a> = (&'a str, &'a dyn Fn(&EpisodeOutput) -> String);

/// Writes the per-episode table; `label` adds a leading column (e.g. the tool name).
pub fn write_metrics_csv(out: impl Write, rows: &[EpisodeOutput], label: Option<RowLabel<'_>>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = label.iter().map(|(name, _)| *name).collect();
    header.extend(METRICS_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        let mut row: Vec<String> = label.iter().map(|(_, f)| f(r)).collect();
        row.push(r.seed.to_string());
        row.push(r.tool_id.clone());
        row.extend(metric_values(&r.metrics).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io("metrics table", e))?;
    Ok(())
}

/// Loads a config file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> CliResult<EnvConfig> {
    let Some(path) = path else {
        return Ok(EnvConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    EnvConfig::from_json(&text).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })
}

/// Loads scoop-script parameters, or the defaults.
pub fn load_scoop(path: Option<&Path>) -> CliResult<ScoopParams> {
    let Some(path) = path else {
        return Ok(ScoopParams::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    f.flush().map_err(|e| CliError::io(path, e))
}
