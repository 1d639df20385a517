//! Long-format run traces: one `(iteration, metric, value)` row per entry.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, iteration: usize, metric: impl Into<String>, value: f64) {
        self.rows.push(TraceRow {
            iteration,
            metric: metric.into(),
            value,
        });
    }

    /// Pushes `values[i]` as `metric[i]`.
    pub fn push_indexed(&mut self, iteration: usize, metric: &str, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.push(iteration, format!("{metric}[{i}]"), *v);
        }
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// All `(iteration, value)` pairs of one metric, in insertion order.
    pub fn series(&self, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.iteration, r.value))
            .collect()
    }

    pub fn last(&self, metric: &str) -> Option<f64> {
        self.rows.iter().rev().find(|r| r.metric == metric).map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self { rows })
    }
}
