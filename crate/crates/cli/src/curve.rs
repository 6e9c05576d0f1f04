//! Flat evaluation tables: one row per (budget, run, metric).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub budget: usize,
    pub run: usize,
    /// `<method>:<metric>`, e.g. `exact:kl`.
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| CliError::Usage(format!("writing curve table: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> CliResult<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<Result<Vec<CurveRow>, _>>().map_err(csv_error)?;
        Ok(CurveTable { rows })
    }

    /// Sorts rows by budget, run, then metric.
    pub fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| (a.budget, a.run, &a.metric).cmp(&(b.budget, b.run, &b.metric)));
    }

    pub fn budgets(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.rows.iter().map(|r| r.budget).collect();
        b.sort_unstable();
        b.dedup();
        b
    }

    /// Mean of `metric` per budget.
    pub fn mean(&self, metric: &str) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.metric == metric) {
            let e = acc.entry(r.budget).or_default();
            e.0 += r.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(b, (s, n))| (b, s / n as f64)).collect()
    }

    /// Every metric must have the same number of runs at every budget.
    pub fn check_shape(&self) -> CliResult<()> {
        let mut counts: BTreeMap<(&str, usize), usize> = BTreeMap::new();
        for r in &self.rows {
            *counts.entry((&r.metric, r.budget)).or_default() += 1;
        }
        let mut distinct: Vec<usize> = counts.values().copied().collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() > 1 {
            return Err(CliError::Usage(format!(
                "uneven run counts across budgets: {distinct:?}"
            )));
        }
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Usage(format!("curve table: {e}"))
}
