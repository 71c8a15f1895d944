//! Recorded optimizer runs and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::ParamVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub test_error: Option<f64>,
    pub snapshot: Option<ParamVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub config_digest: String,
    records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn new(seed: u64, config_digest: impl Into<String>) -> Self {
        Self {
            seed,
            config_digest: config_digest.into(),
            records: Vec::new(),
        }
    }

    /// Appends a record; step indices must increase strictly.
    pub fn push(&mut self, record: TrajectoryRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.step <= last.step {
                return Err(Error::invalid(
                    "step",
                    format!("step {} does not follow {}", record.step, last.step),
                ));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    pub fn min_grad_norm_sq(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.grad_norm_sq)
            .min_by(f64::total_cmp)
    }

    /// Columns `step,loss,grad_norm_sq[,test_error]`, preceded by `#` provenance lines.
    pub fn write_csv<W: Write>(&self, mut out: W, rng_algorithm: &str) -> Result<()> {
        let with_test = self.records.iter().any(|r| r.test_error.is_some());
        let io = |e| Error::io("<trajectory csv>", e);
        writeln!(out, "# config_digest: {}", self.config_digest).map_err(io)?;
        writeln!(out, "# seed: {}", self.seed).map_err(io)?;
        writeln!(out, "# prng: {rng_algorithm}").map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        if with_test {
            w.write_record(["step", "loss", "grad_norm_sq", "test_error"])?;
        } else {
            w.write_record(["step", "loss", "grad_norm_sq"])?;
        }
        for r in &self.records {
            let mut row = vec![r.step.to_string(), fmt_f64(r.loss), fmt_f64(r.grad_norm_sq)];
            if with_test {
                row.push(r.test_error.map(fmt_f64).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64) -> TrajectoryRecord {
        TrajectoryRecord {
            step,
            loss: 1.0 / (step + 1) as f64,
            grad_norm_sq: 0.5,
            test_error: None,
            snapshot: None,
        }
    }

    #[test]
    fn steps_must_increase() {
        let mut t = Trajectory::new(1, "abc");
        t.push(rec(0)).unwrap();
        t.push(rec(5)).unwrap();
        assert!(t.push(rec(5)).is_err());
        assert!(t.push(rec(3)).is_err());
        assert_eq!(t.records().len(), 2);
    }

    #[test]
    fn csv_layout() {
        let mut t = Trajectory::new(9, "d1g3st");
        t.push(rec(0)).unwrap();
        t.push(TrajectoryRecord { test_error: Some(0.25), ..rec(1) }).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, "prng-x").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config_digest: d1g3st");
        assert_eq!(lines[1], "# seed: 9");
        assert_eq!(lines[2], "# prng: prng-x");
        assert_eq!(lines[3], "step,loss,grad_norm_sq,test_error");
        assert_eq!(lines[4], "0,1.0,0.5,");
        assert_eq!(lines[5], "1,0.5,0.5,0.25");
    }
}
