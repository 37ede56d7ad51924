use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{BacktestResult, MetricsBlock};
use crate::Result;

/// Compact JSON summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub config_hash: String,
    pub metrics: MetricsBlock,
}

impl BacktestResult {
    pub fn summary(&self, config_hash: &str) -> RunSummary {
        RunSummary { strategy: self.strategy.clone(), config_hash: config_hash.to_string(), metrics: self.metrics }
    }

    /// Plot-ready series, one row per decision date: `date,value,cost,turnover,w_1..w_N`.
    /// `value` is the portfolio value at the end of the holding period.
    pub fn write_curve_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string(), "value".into(), "cost".into(), "turnover".into()];
        header.extend((1..=self.tickers.len()).map(|i| format!("w_{i}")));
        out.write_record(&header).map_err(csv_err)?;
        for k in 0..self.periods() {
            let mut row = vec![self.dates[k].to_string(), fmt(self.value_curve[k + 1]), fmt(self.period_costs[k]), fmt(self.turnovers[k])];
            row.extend(self.weights[k].iter().map(|&w| fmt(w)));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Weights per decision date with ticker columns.
    pub fn write_weights_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header).map_err(csv_err)?;
        for (d, w) in self.dates.iter().zip(&self.weights) {
            let mut row = vec![d.to_string()];
            row.extend(w.iter().map(|&v| fmt(v)));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Data(format!("csv write failed: {e}"))
}
