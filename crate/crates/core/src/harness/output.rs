//! Result files. Every file carries the config digest and PRNG identifier;
//! per-run files also carry the seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::RNG_ALGORITHM;
use crate::trajectory::fmt_f64;

use super::runner::{RunResult, RunSummary};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Error rates per logged step for a classification run.
pub fn curve_csv(run: &RunResult) -> String {
    let mut out = format!(
        "# config_digest: {}\n# seed: {}\n# prng: {}\nstep,train_error,clean_train_error,test_error\n",
        run.config_digest, run.seed, RNG_ALGORITHM
    );
    for p in &run.curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.step,
            fmt_f64(p.train_error),
            p.clean_train_error.map(fmt_f64).unwrap_or_default(),
            fmt_f64(p.test_error)
        ));
    }
    out
}

fn snapshot_csv(run: &RunResult) -> Option<String> {
    let records = run.trajectory.records();
    let dim = records.first()?.snapshot.as_ref()?.dim();
    let mut out = format!(
        "# config_digest: {}\n# seed: {}\n# prng: {}\nstep",
        run.config_digest, run.seed, RNG_ALGORITHM
    );
    for i in 0..dim {
        out.push_str(&format!(",theta_{i}"));
    }
    out.push('\n');
    for r in records {
        let Some(s) = &r.snapshot else { continue };
        out.push_str(&r.step.to_string());
        for v in s.iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    Some(out)
}

/// Writes `trajectory_seed<S>.csv` (plus curve and snapshot files when
/// present) for every run, then `summary.json`. Returns the paths written.
pub fn write_run_outputs(dir: &Path, summary: &RunSummary) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for run in &summary.runs {
        let path = dir.join(format!("trajectory_seed{}.csv", run.seed));
        let mut buf = Vec::new();
        run.trajectory.write_csv(&mut buf, RNG_ALGORITHM)?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        if !run.curve.is_empty() {
            let path = dir.join(format!("errors_seed{}.csv", run.seed));
            write_text(&path, &curve_csv(run))?;
            written.push(path);
        }
        if let Some(text) = snapshot_csv(run) {
            let path = dir.join(format!("snapshots_seed{}.csv", run.seed));
            write_text(&path, &text)?;
            written.push(path);
        }
    }
    let path = dir.join("summary.json");
    write_json(&path, summary)?;
    written.push(path);
    Ok(written)
}
