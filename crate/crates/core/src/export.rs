//! Files written by a run: resolved config echo, metrics log, repertoire
//! snapshots and per-quantity heatmap tables.
//!
//! ```text
//! <output_dir>/config.toml
//! <output_dir>/metrics.csv
//! <output_dir>/snapshots/checkpoint_01.json ... final.json
//! <output_dir>/heatmaps/checkpoint_01/fitness.csv ... heatmaps/final/
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::orchestrator::{self, MetricsRow, RunObserver, RunResult};
use crate::repertoire::{Repertoire, Snapshot, SnapshotMeta};

pub const METRICS_HEADER: &str = "budget_steps,max_fitness,coverage,qd_score,wall_seconds";
pub const HEATMAP_HEADER: &str = "cell,x,y,value";

/// One metrics line. Missing max fitness is an empty field; wall time is
/// written as 0 unless requested.
pub fn metrics_line(row: &MetricsRow, log_wall_time: bool) -> String {
    let max = row
        .metrics
        .max_fitness
        .map(|m| m.to_string())
        .unwrap_or_default();
    let wall = if log_wall_time { row.wall_seconds } else { 0.0 };
    format!(
        "{},{},{},{},{}",
        row.budget_steps, max, row.metrics.coverage, row.metrics.qd_score, wall
    )
}

pub fn metrics_csv(rows: &[MetricsRow], log_wall_time: bool) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&metrics_line(r, log_wall_time));
        out.push('\n');
    }
    out
}

/// Per-quantity tables of an archive: `fitness` then every ranged
/// hyperparameter, each a CSV mapping occupied cells to values.
pub fn heatmap_tables(snapshot: &Snapshot) -> Result<Vec<(String, String)>> {
    if snapshot.bounds.len() != 2 {
        return Err(Error::UnsupportedExport(format!(
            "heatmaps need a 2-dimensional descriptor, snapshot has {}",
            snapshot.bounds.len()
        )));
    }
    let mut quantities = vec!["fitness".to_string()];
    quantities.extend(snapshot.schema.ranged_names().map(str::to_string));
    let mut tables = Vec::with_capacity(quantities.len());
    for q in quantities {
        let mut csv = format!("{HEATMAP_HEADER}\n");
        for cell in &snapshot.cells {
            let c = snapshot
                .centroids
                .get(cell.index)
                .ok_or_else(|| Error::snapshot(Some(cell.index), "no centroid for cell"))?;
            let value = if q == "fitness" {
                cell.fitness
            } else {
                *cell.hyperparams.get(&q).ok_or_else(|| {
                    Error::snapshot(Some(cell.index), format!("missing hyperparameter {q}"))
                })?
            };
            csv.push_str(&format!("{},{},{},{}\n", cell.index, c[0], c[1], value));
        }
        tables.push((q, csv));
    }
    Ok(tables)
}

/// Writes `<name>.csv` for every heatmap quantity into `dir`.
pub fn export_heatmaps(snapshot: &Snapshot, dir: &Path) -> Result<Vec<PathBuf>> {
    let tables = heatmap_tables(snapshot)?;
    fs::create_dir_all(dir)?;
    tables
        .into_iter()
        .map(|(name, csv)| {
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, csv)?;
            Ok(path)
        })
        .collect()
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    Snapshot::from_json(&fs::read_to_string(path)?)
}

fn ensure_fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Streams run outputs into the configured directory. Refuses to write into
/// a directory that already holds files.
pub struct RunWriter {
    dir: PathBuf,
    metrics: BufWriter<File>,
    log_wall_time: bool,
}

impl RunWriter {
    pub fn create(config: &RunConfig) -> Result<Self> {
        let dir = config.output_dir.clone();
        ensure_fresh_dir(&dir)?;
        fs::write(dir.join("config.toml"), config.to_toml())?;
        let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(metrics, "{METRICS_HEADER}")?;
        Ok(RunWriter {
            dir,
            metrics,
            log_wall_time: config.logging.log_wall_time,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_archive(&self, name: &str, snapshot: &Snapshot) -> Result<()> {
        let snapshots = self.dir.join("snapshots");
        fs::create_dir_all(&snapshots)?;
        fs::write(snapshots.join(format!("{name}.json")), snapshot.to_json())?;
        if snapshot.bounds.len() == 2 {
            export_heatmaps(snapshot, &self.dir.join("heatmaps").join(name))?;
        }
        Ok(())
    }

    pub fn finish(mut self, result: &RunResult) -> Result<()> {
        self.metrics.flush()?;
        self.write_archive("final", &result.final_snapshot())
    }
}

impl RunObserver for RunWriter {
    fn on_metrics(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.metrics, "{}", metrics_line(row, self.log_wall_time))?;
        self.metrics.flush()?;
        Ok(())
    }

    fn on_checkpoint(
        &mut self,
        index: usize,
        repertoire: &Repertoire,
        meta: &SnapshotMeta,
    ) -> Result<()> {
        self.write_archive(
            &format!("checkpoint_{index:02}"),
            &repertoire.snapshot(meta),
        )
    }
}

/// Runs `config` and writes every output under its output directory.
pub fn execute(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let mut writer = RunWriter::create(config)?;
    let result = orchestrator::run(config, &mut writer)?;
    writer.finish(&result)?;
    Ok(result)
}
