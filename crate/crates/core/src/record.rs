//! Metric time series keyed by the number of fresh samples consumed.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub samples: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub config: serde_json::Value,
    pub seed: u64,
}

impl RunRecord {
    pub fn new(columns: Vec<String>, config: serde_json::Value, seed: u64) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            config,
            seed,
        }
    }

    pub fn push(&mut self, samples: u64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::Format(format!(
                "row has {} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if self.rows.last().is_some_and(|r| r.samples >= samples) {
            return Err(Error::Format(format!("sample count {samples} is not increasing")));
        }
        self.rows.push(Row { samples, values });
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[idx]).collect())
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last().copied())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# seed: {}", self.seed);
        let _ = writeln!(out, "# config: {}", self.config);
        let _ = writeln!(out, "samples,{}", self.columns.join(","));
        for row in &self.rows {
            out.push_str(&row.samples.to_string());
            for v in &row.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut seed = 0;
        let mut config = serde_json::Value::Null;
        let mut columns = None;
        let mut record: Option<RunRecord> = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(rest) = line.strip_prefix("# seed: ") {
                seed = rest.trim().parse().map_err(|_| Error::Format("bad seed line".into()))?;
            } else if let Some(rest) = line.strip_prefix("# config: ") {
                config = serde_json::from_str(rest)?;
            } else if line.starts_with('#') {
                continue;
            } else if columns.is_none() {
                let mut cols = line.split(',');
                if cols.next() != Some("samples") {
                    return Err(Error::Format("header must start with `samples`".into()));
                }
                let cols: Vec<String> = cols.map(str::to_owned).collect();
                columns = Some(cols.clone());
                record = Some(RunRecord::new(cols, config.clone(), seed));
            } else {
                let rec = record.as_mut().expect("header parsed");
                let mut fields = line.split(',');
                let samples = fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad sample count in `{line}`")))?;
                let values = fields
                    .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("bad value `{v}`"))))
                    .collect::<Result<Vec<_>>>()?;
                rec.push(samples, values)?;
            }
        }
        record.ok_or_else(|| Error::Format("missing header".into()))
    }
}

/// Per-sample-count mean and sample standard deviation across runs.
///
/// Runs that stopped early contribute their last row to later sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub columns: Vec<String>,
    pub rows: Vec<(u64, usize, Vec<(f64, f64)>)>,
}

impl Aggregate {
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::Format("no records to aggregate".into()))?;
        if records.iter().any(|r| r.columns != first.columns) {
            return Err(Error::Format("records have different columns".into()));
        }
        let grid: BTreeSet<u64> = records.iter().flat_map(|r| r.rows.iter().map(|row| row.samples)).collect();
        let mut cursors = vec![0usize; records.len()];
        let mut rows = Vec::with_capacity(grid.len());
        for &s in &grid {
            let mut present = Vec::new();
            for (rec, cur) in records.iter().zip(cursors.iter_mut()) {
                while *cur + 1 < rec.rows.len() && rec.rows[*cur + 1].samples <= s {
                    *cur += 1;
                }
                if rec.rows.first().is_some_and(|r| r.samples <= s) {
                    present.push(&rec.rows[*cur].values);
                }
            }
            let stats = (0..first.columns.len())
                .map(|c| mean_std(present.iter().map(|v| v[c])))
                .collect();
            rows.push((s, present.len(), stats));
        }
        Ok(Self {
            columns: first.columns.clone(),
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("samples,n_runs");
        for c in &self.columns {
            let _ = write!(out, ",{c}_mean,{c}_std");
        }
        out.push('\n');
        for (s, n, stats) in &self.rows {
            let _ = write!(out, "{s},{n}");
            for (m, sd) in stats {
                let _ = write!(out, ",{m},{sd}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut r = RunRecord::new(vec!["a".into(), "b".into()], serde_json::json!({"x": 1}), 3);
        r.push(10, vec![0.1, f64::NAN]).unwrap();
        r.push(20, vec![1.0 / 3.0, -2.5e-17]).unwrap();
        assert!(r.push(20, vec![0.0, 0.0]).is_err());
        assert!(r.push(30, vec![0.0]).is_err());
        let back = RunRecord::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back.to_csv(), r.to_csv());
        assert_eq!(back.rows[1].values[0], 1.0 / 3.0);
        assert_eq!(back.seed, 3);
    }

    #[test]
    fn aggregate_carries_forward() {
        let mut a = RunRecord::new(vec!["m".into()], serde_json::Value::Null, 0);
        a.push(1, vec![1.0]).unwrap();
        a.push(2, vec![3.0]).unwrap();
        let mut b = RunRecord::new(vec!["m".into()], serde_json::Value::Null, 1);
        b.push(1, vec![3.0]).unwrap();
        let agg = Aggregate::from_records(&[a, b]).unwrap();
        assert_eq!(agg.rows[0], (1, 2, vec![(2.0, 2f64.sqrt())]));
        assert_eq!(agg.rows[1], (2, 2, vec![(3.0, 0.0)]));
    }
}

/// Bit-exact float encoding: each `f64` is written as the 16-digit hex of
/// its IEEE-754 bit pattern.
pub mod hexfloat {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn encode(v: f64) -> String {
        format!("{:016x}", v.to_bits())
    }

    pub fn decode(s: &str) -> Option<f64> {
        u64::from_str_radix(s, 16).ok().map(f64::from_bits)
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(values.iter().map(|&v| encode(v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| decode(s).ok_or_else(|| D::Error::custom(format!("bad hexfloat `{s}`"))))
            .collect()
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(values) => super::serialize(values, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
            Option::<Vec<String>>::deserialize(d)?
                .map(|raw| {
                    raw.iter()
                        .map(|s| decode(s).ok_or_else(|| D::Error::custom(format!("bad hexfloat `{s}`"))))
                        .collect()
                })
                .transpose()
        }
    }

    pub mod scalar {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&encode(*v))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            let raw = String::deserialize(d)?;
            decode(&raw).ok_or_else(|| D::Error::custom(format!("bad hexfloat `{raw}`")))
        }
    }
}
