use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
preset = "desk"
runner = "pbt-me"
seed = 11

[budget]
total = 20000
checkpoints = 2

[population]
size = 4
train_steps = 100
buffer_size = 1000

[variation]
offspring = 6

[tessellation]
num_cells = 32
init_points = 640

[network]
hidden = [8, 8]

[hyperparams.batch_size]
value = 16
"#;

fn pbtme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbtme"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pbtme(&args)
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_into(&cfg, &a, &[]).status.success());
    assert!(run_into(&cfg, &b, &["--set", "population.parallel=true"])
        .status
        .success());
    for file in [
        "metrics.csv",
        "snapshots/final.json",
        "snapshots/checkpoint_01.json",
        "snapshots/checkpoint_02.json",
        "heatmaps/final/fitness.csv",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("budget_steps,max_fitness,coverage,qd_score,wall_seconds\n"));
}

#[test]
fn zero_budget_logs_only_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("zero");
    let o = run_into(&cfg, &out, &["--set", "budget.total=0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    // (P + M) * T = (4 + 6) * 100
    assert!(rows[0].starts_with("1000,"));
}

#[test]
fn eval_reproduces_every_stored_fitness() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("run");
    assert!(run_into(&cfg, &out, &[]).status.success());
    let snapshot = out.join("snapshots/final.json");
    let json: serde_json_probe::Cells =
        serde_json_probe::cells(&fs::read_to_string(&snapshot).unwrap());
    assert!(!json.is_empty());
    for (index, fitness) in json {
        let o = pbtme(&[
            "eval",
            snapshot.to_str().unwrap(),
            "--cell",
            &index.to_string(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8(o.stdout).unwrap();
        let printed = stdout
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("fitness="))
            .unwrap();
        assert_eq!(printed, fitness);
    }
}

#[test]
fn heatmap_export_writes_one_row_per_occupied_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("run");
    assert!(run_into(&cfg, &out, &[]).status.success());
    let snapshot = out.join("snapshots/final.json");
    let cells = serde_json_probe::cells(&fs::read_to_string(&snapshot).unwrap());
    let dest = tmp.path().join("maps");
    let o = pbtme(&[
        "export-heatmap",
        snapshot.to_str().unwrap(),
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for name in [
        "fitness",
        "discount",
        "exploration_noise",
        "policy_noise",
        "noise_clip",
        "policy_lr",
        "critic_lr",
    ] {
        let text = fs::read_to_string(dest.join(format!("{name}.csv"))).unwrap();
        assert_eq!(text.lines().count(), cells.len() + 1, "{name}");
    }
    let fitness = fs::read_to_string(dest.join("fitness.csv")).unwrap();
    for (line, (index, f)) in fitness.lines().skip(1).zip(&cells) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], index.to_string());
        assert_eq!(cols[3], f);
    }
}

#[test]
fn failures_exit_with_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "[population]\nsizes = 3\n");
    let o = run_into(&bad, &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.contains("population.sizes"));

    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("once");
    assert!(run_into(&cfg, &out, &["--set", "budget.total=0"])
        .status
        .success());
    assert_eq!(
        run_into(&cfg, &out, &["--set", "budget.total=0"])
            .status
            .code(),
        Some(4)
    );

    let missing = tmp.path().join("nope.json");
    assert_eq!(
        pbtme(&["eval", missing.to_str().unwrap(), "--cell", "0"])
            .status
            .code(),
        Some(5)
    );

    let garbage = tmp.path().join("garbage.json");
    fs::write(&garbage, "{\"cells\": 3}").unwrap();
    assert_eq!(
        pbtme(&["export-heatmap", garbage.to_str().unwrap()])
            .status
            .code(),
        Some(6)
    );
}

/// Minimal extraction of `(index, fitness)` pairs from a snapshot, using the
/// literal fitness text so comparisons are exact.
mod serde_json_probe {
    pub type Cells = Vec<(usize, String)>;

    pub fn cells(json: &str) -> Cells {
        let mut out = Vec::new();
        let mut index = None;
        for line in json.lines().map(str::trim) {
            if let Some(v) = line.strip_prefix("\"index\": ") {
                index = Some(v.trim_end_matches(',').parse().unwrap());
            } else if let Some(v) = line.strip_prefix("\"fitness\": ") {
                if let Some(i) = index.take() {
                    out.push((i, v.trim_end_matches(',').to_string()));
                }
            }
        }
        out
    }
}
