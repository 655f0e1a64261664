//! Per-iteration training records and their metrics-log persistence.

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// One line of the metrics log. Columns that were not produced in a given
/// iteration stay `None` and serialize as empty fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss_discriminator: Option<f64>,
    pub loss_policy: Option<f64>,
    pub loss_barrier: Option<f64>,
    pub loss_derivative: Option<f64>,
    pub estimate_y: Option<f64>,
    pub success_rate: Option<f64>,
    pub collision_rate: Option<f64>,
}

/// Ordered per-iteration records for one training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
}

const HEADER: &str = "iteration,loss_discriminator,loss_policy,loss_barrier,loss_derivative,estimate_y,success_rate,collision_rate";

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{}", x),
        None => String::new(),
    }
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    let t = s.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse(format!("bad metric value '{}'", t)))
}

impl TrainReport {
    pub fn new() -> Self {
        TrainReport::default()
    }

    pub fn push(&mut self, record: TrainRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: TrainReport) {
        self.records.extend(other.records);
    }

    /// Last record that carries evaluation metrics, if any.
    pub fn last_evaluated(&self) -> Option<&TrainRecord> {
        self.records.iter().rev().find(|r| r.success_rate.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.iteration,
                fmt_opt(r.loss_discriminator),
                fmt_opt(r.loss_policy),
                fmt_opt(r.loss_barrier),
                fmt_opt(r.loss_derivative),
                fmt_opt(r.estimate_y),
                fmt_opt(r.success_rate),
                fmt_opt(r.collision_rate),
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<TrainReport> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty metrics log".to_string()))?;
        if header.trim() != HEADER {
            return Err(Error::Parse(format!("unexpected metrics header '{}'", header)));
        }
        let mut report = TrainReport::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Parse(format!(
                    "metrics row has {} fields, expected 8",
                    fields.len()
                )));
            }
            report.push(TrainRecord {
                iteration: fields[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad iteration '{}'", fields[0])))?,
                loss_discriminator: parse_opt(fields[1])?,
                loss_policy: parse_opt(fields[2])?,
                loss_barrier: parse_opt(fields[3])?,
                loss_derivative: parse_opt(fields[4])?,
                estimate_y: parse_opt(fields[5])?,
                success_rate: parse_opt(fields[6])?,
                collision_rate: parse_opt(fields[7])?,
            });
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainReport> {
        TrainReport::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_including_missing_fields() {
        let mut report = TrainReport::new();
        report.push(TrainRecord {
            iteration: 0,
            loss_discriminator: Some(1.3862943611198906),
            loss_policy: Some(-0.01),
            ..Default::default()
        });
        report.push(TrainRecord {
            iteration: 1,
            loss_discriminator: Some(0.9),
            loss_policy: Some(0.2),
            loss_barrier: Some(0.004),
            loss_derivative: Some(12.5),
            estimate_y: Some(f64::INFINITY),
            success_rate: Some(0.95),
            collision_rate: Some(0.25),
        });
        let parsed = TrainReport::from_csv(&report.to_csv()).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn rejects_malformed_rows() {
        let text = format!("{}\n1,2,3\n", HEADER);
        assert!(TrainReport::from_csv(&text).is_err());
    }
}
