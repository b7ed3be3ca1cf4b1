use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use regolith_cli::bench::BenchReport;
use regolith_cli::episodes::{metric_values, METRICS_COLUMNS};
use regolith_cli::run::mean_std;
use regolith_cli::{PolicyKind, ScoopParams, ScriptedPolicy};
use regolith_core::env::{BoundEnv, Env, EnvConfig};
use regolith_core::procgen::TriMesh;
use tempfile::TempDir;

fn regolith(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regolith")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = regolith(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn records(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    (header, r.records().map(|x| x.unwrap()).collect())
}

fn column(header: &csv::StringRecord, name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn run_writes_one_row_per_episode() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "run");
    ok(&["run", "--particles", "300", "--seed", "7", "--episodes", "1", "--out", &out, "--episode-csv"]);
    let (header, rows) = records(&dir.path().join("run/metrics.csv"));
    assert_eq!(header.len(), 11);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][column(&header, "seed")], "7");
    let volume: f64 = rows[0][column(&header, "volume_L")].parse().unwrap();
    let dust: f64 = rows[0][column(&header, "dust_fraction")].parse().unwrap();
    assert!(volume >= 0.0);
    assert!((0.0..=1.0).contains(&dust));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
    let steps = fs::read_dir(dir.path().join("run/episodes")).unwrap().count();
    assert_eq!(steps, 1);
}

#[test]
fn deterministic_runs_give_identical_metrics() {
    let dir = TempDir::new().unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = path(&dir, name);
        ok(&[
            "run", "--particles", "300", "--deterministic", "--seed", "3", "--episodes", "2", "--policy", "random",
            "--policy-seed", "5", "--out", &out,
        ]);
        files.push(fs::read(dir.path().join(name).join("metrics.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn generated_tools_are_reproducible_and_closed() {
    let dir = TempDir::new().unwrap();
    let mut objs = Vec::new();
    for name in ["a", "b"] {
        ok(&["generate", "--tool-seed", "42", "--out", &path(&dir, name)]);
        objs.push(fs::read(dir.path().join(name).join("tool.obj")).unwrap());
        assert_eq!(
            fs::read(dir.path().join("a/tool.stl")).unwrap(),
            fs::read(dir.path().join(name).join("tool.stl")).unwrap()
        );
    }
    assert_eq!(objs[0], objs[1]);
    let file = fs::File::open(dir.path().join("a/tool.obj")).unwrap();
    let mesh = TriMesh::read_obj(&mut BufReader::new(file)).unwrap();
    mesh.check_watertight().unwrap();
    assert!(mesh.volume() > 0.0);

    ok(&["generate", "--terrain-seed", "9", "--out", &path(&dir, "t")]);
    assert!(dir.path().join("t/terrain.bin").metadata().unwrap().len() > 0);
}

#[test]
fn bad_tool_spec_names_the_field() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"width": -1.0}"#).unwrap();
    let out = regolith(&["generate", "--tool-spec", spec.to_str().unwrap(), "--out", &path(&dir, "o")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
}

#[test]
fn config_errors_exit_2_and_runtime_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let out_dir = path(&dir, "o");
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"particle_count": 0}"#).unwrap();
    let out = regolith(&["run", "--config", bad.to_str().unwrap(), "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(regolith(&["run", "--config", bad.to_str().unwrap(), "--out", &out_dir]).status.code(), Some(2));
    assert_eq!(regolith(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(regolith(&["generate", "--tool-seed", "1", "--terrain-seed", "2"]).status.code(), Some(2));

    // a start pose that can never be placed fails at reset
    let far = dir.path().join("far.json");
    fs::write(&far, r#"{"particle_count": 200, "start": {"clearance": 5.0}}"#).unwrap();
    let out = regolith(&["run", "--config", far.to_str().unwrap(), "--seed", "11", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("episode 0") && err.contains("seed 11"), "{err}");
}

#[test]
fn heldout_dry_run_schedules_every_tool() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(&["eval-heldout", "--dry-run", "--episodes-per-tool", "50", "--out", &path(&dir, "h")]);
    assert!(stdout.contains("scheduled 400 episodes"), "{stdout}");
    let (header, rows) = records(&dir.path().join("h/schedule.csv"));
    assert_eq!(rows.len(), 400);
    let tool = column(&header, "tool");
    let tools: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.get(tool).unwrap()).collect();
    assert_eq!(tools.len(), 8);
}

#[test]
fn heldout_summary_matches_the_episode_table() {
    let dir = TempDir::new().unwrap();
    ok(&["eval-heldout", "--particles", "200", "--episodes-per-tool", "2", "--out", &path(&dir, "h")]);
    let (eh, episodes) = records(&dir.path().join("h/episodes.csv"));
    let (sh, summary) = records(&dir.path().join("h/summary.csv"));
    assert_eq!(episodes.len(), 16);
    assert_eq!(summary.len(), 8);
    let tool = column(&eh, "tool");
    for row in &summary {
        let name = &row[column(&sh, "tool")];
        let mine: Vec<_> = episodes.iter().filter(|e| &e[tool] == name).collect();
        assert_eq!(mine.len(), 2);
        assert_eq!(&row[column(&sh, "episodes")], "2");
        for metric in ["volume_L", "dust_fraction", "msj", "total"] {
            let values: Vec<f64> = mine.iter().map(|e| e[column(&eh, metric)].parse().unwrap()).collect();
            let (mean, std) = mean_std(&values);
            let got_mean: f64 = row[column(&sh, &format!("{metric}_mean"))].parse().unwrap();
            let got_std: f64 = row[column(&sh, &format!("{metric}_std"))].parse().unwrap();
            assert!((got_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{name} {metric}");
            assert!((got_std - std).abs() <= 1e-12 * std.abs().max(1.0), "{name} {metric}");
        }
    }
}

#[test]
fn bench_counts_are_exact() {
    let mut counts = Vec::new();
    for mode in [&["--deterministic"][..], &[][..]] {
        let mut args = vec!["bench", "--particles", "300", "--steps", "60", "--json"];
        args.extend_from_slice(mode);
        let report: BenchReport = serde_json::from_str(&ok(&args)).unwrap();
        assert_eq!(report.control_steps, 60);
        assert_eq!(report.physics_steps, 300);
        assert_eq!(report.solver_substeps, report.physics_steps * 3);
        let rate = report.control_steps as f64 / report.wall_seconds;
        assert!((report.control_steps_per_s - rate).abs() <= 1e-9 * rate);
        let updates = report.particles as f64 * report.physics_steps as f64 / report.wall_seconds;
        assert!((report.particle_updates_per_s - updates).abs() <= 1e-9 * updates);
        assert!((report.realtime_factor - rate / 50.0).abs() <= 1e-9 * rate);
        counts.push((report.control_steps, report.physics_steps, report.solver_substeps));
    }
    assert_eq!(counts[0], counts[1]);
}

#[test]
fn bench_crosses_episode_boundaries() {
    let report: BenchReport =
        serde_json::from_str(&ok(&["bench", "--particles", "200", "--steps", "760", "--policy", "zero", "--json"]))
            .unwrap();
    assert_eq!(report.physics_steps, 760 * 5);
}

#[test]
fn scripted_episode_through_the_binding_reproduces_cli_metrics() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s");
    ok(&["run", "--policy", "scoop-script", "--particles", "300", "--deterministic", "--seed", "4", "--out", &out]);
    let (header, rows) = records(&dir.path().join("s/metrics.csv"));

    let config = EnvConfig {
        particle_count: 300,
        deterministic: true,
        ..EnvConfig::default()
    };
    let mut native = Env::new(config.clone()).unwrap();
    let mut obs = native.reset(4).unwrap();
    let mut policy =
        ScriptedPolicy::for_episode(PolicyKind::ScoopScript, 0, 4, &native, &obs, &ScoopParams::default()).unwrap();
    let mut actions = Vec::new();
    loop {
        let a = policy.act(&obs).unwrap();
        let r = native.step(&a).unwrap();
        actions.push(a);
        obs = r.observation;
        if r.truncated {
            break;
        }
    }

    let mut bound = BoundEnv::new(config).unwrap();
    bound.reset(4).unwrap();
    for a in &actions {
        assert!(!bound.step(a).unwrap().terminated);
    }
    let values = metric_values(&bound.env().metrics().unwrap());
    for (name, v) in METRICS_COLUMNS[2..].iter().zip(values) {
        let cli: f64 = rows[0][column(&header, name)].parse().unwrap();
        assert_eq!(cli.to_bits(), v.to_bits(), "{name}");
    }
}
