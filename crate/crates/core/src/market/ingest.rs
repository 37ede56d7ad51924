use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::PriceSeries;
use crate::{Error, Result};

/// Assets with more than this share of forward-filled cells are rejected.
pub const MAX_FILLED_FRACTION: f64 = 0.10;

/// Column names of the OHLC file. The default is the canonical header
/// `date,ticker,open,high,low,close`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub date: String,
    pub ticker: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            ticker: "ticker".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
        }
    }
}

type Bar = [f64; 4];

pub fn ingest_ohlc(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PriceSeries> {
    ingest_ohlc_reader(File::open(path)?, schema)
}

/// Parses one-row-per-(date, ticker) OHLC records into a calendar-aligned series.
///
/// The calendar starts at the latest first observation across assets; later gaps are
/// forward-filled with a flat bar at the previous close.
pub fn ingest_ohlc_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let cols = [
        col(&schema.date)?,
        col(&schema.ticker)?,
        col(&schema.open)?,
        col(&schema.high)?,
        col(&schema.low)?,
        col(&schema.close)?,
    ];

    let mut by_ticker: BTreeMap<String, BTreeMap<NaiveDate, Bar>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| -> Result<&str> {
            record
                .get(cols[k])
                .map(str::trim)
                .ok_or_else(|| Error::Parse { line, message: "row has too few fields".into() })
        };
        let date = NaiveDate::parse_from_str(field(0)?, "%Y-%m-%d")
            .map_err(|e| Error::Parse { line, message: format!("bad date `{}`: {e}", field(0).unwrap_or("")) })?;
        let ticker = field(1)?.to_string();
        if ticker.is_empty() {
            return Err(Error::Parse { line, message: "empty ticker".into() });
        }
        let mut bar = [0.0; 4];
        for (slot, k) in bar.iter_mut().zip(2..6) {
            let raw = field(k)?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse { line, message: format!("bad price `{raw}`") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite price `{raw}`") });
            }
            if v <= 0.0 {
                return Err(Error::Validation { line, message: format!("non-positive price {raw} for {ticker} on {date}") });
            }
            *slot = v;
        }
        let [o, h, l, c] = bar;
        if l > h || o < l || o > h || c < l || c > h {
            return Err(Error::Validation { line, message: format!("inconsistent bar for {ticker} on {date}: o={o} h={h} l={l} c={c}") });
        }
        if by_ticker.entry(ticker.clone()).or_default().insert(date, bar).is_some() {
            return Err(Error::Parse { line, message: format!("duplicate row for {ticker} on {date}") });
        }
    }
    if by_ticker.is_empty() {
        return Err(Error::Data("file contains no rows".into()));
    }

    let start = by_ticker.values().filter_map(|m| m.keys().next()).max().copied().expect("non-empty");
    let calendar: Vec<NaiveDate> = {
        let mut all: Vec<NaiveDate> = by_ticker.values().flat_map(|m| m.range(start..).map(|(d, _)| *d)).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    if calendar.is_empty() {
        return Err(Error::Data("empty intersection calendar".into()));
    }

    let tickers: Vec<String> = by_ticker.keys().cloned().collect();
    let n = tickers.len();
    let cells = calendar.len() * n;
    let (mut open, mut high, mut low, mut close) =
        (vec![0.0; cells], vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]);
    for (i, (ticker, bars)) in by_ticker.iter().enumerate() {
        let mut last_close = None;
        let mut filled = 0usize;
        for (t, d) in calendar.iter().enumerate() {
            let bar = match bars.get(d) {
                Some(b) => *b,
                None => {
                    filled += 1;
                    let c = last_close.expect("calendar starts at every asset's first observation");
                    [c, c, c, c]
                }
            };
            last_close = Some(bar[3]);
            let k = t * n + i;
            (open[k], high[k], low[k], close[k]) = (bar[0], bar[1], bar[2], bar[3]);
        }
        if filled as f64 > MAX_FILLED_FRACTION * calendar.len() as f64 {
            return Err(Error::Data(format!(
                "{ticker}: {filled} of {} dates forward-filled (limit {:.0}%)",
                calendar.len(),
                MAX_FILLED_FRACTION * 100.0
            )));
        }
    }
    PriceSeries::new(tickers, calendar, open, high, low, close)
}

/// Writes the series in the canonical schema, one row per (date, ticker) in date then
/// asset order. Re-ingesting the output reproduces the series exactly.
pub fn write_ohlc<W: Write>(series: &PriceSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["date", "ticker", "open", "high", "low", "close"]).map_err(csv_err)?;
    for t in 0..series.len() {
        let date = series.date(t).format("%Y-%m-%d").to_string();
        for (i, ticker) in series.tickers().iter().enumerate() {
            w.write_record([
                date.as_str(),
                ticker.as_str(),
                &series.open(t, i).to_string(),
                &series.high(t, i).to_string(),
                &series.low(t, i).to_string(),
                &series.close(t, i).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<PriceSeries> {
        ingest_ohlc_reader(text.as_bytes(), &CsvSchema::default())
    }

    const TWO_BY_THREE: &str = "date,ticker,open,high,low,close
2021-01-04,AAA,10,11,9,10.5
2021-01-04,BBB,20,21,19,20.5
2021-01-05,BBB,20.5,22,20,21
2021-01-05,AAA,10.5,11,10,10.8
2021-01-06,AAA,10.8,11.2,10.1,11
2021-01-06,BBB,21,21.5,20.2,20.9
";

    #[test]
    fn two_tickers_three_dates() {
        let s = ingest(TWO_BY_THREE).unwrap();
        assert_eq!((s.len(), s.n_assets()), (3, 2));
        assert_eq!(s.tickers(), &["AAA".to_string(), "BBB".to_string()]);
        assert_eq!(s.close_row(1), &[10.8, 21.0]);
    }

    #[test]
    fn forward_fills_missing_date() {
        let mut text = String::from("date,ticker,open,high,low,close\n");
        // B lacks the second date; 11 dates keep the filled share under 10%.
        for d in 1..=11 {
            text += &format!("2021-02-{d:02},A,1,1,1,1\n");
            if d != 2 {
                text += &format!("2021-02-{d:02},B,5,6,4,{}\n", 4.0 + d as f64 / 10.0);
            }
        }
        let s = ingest(&text).unwrap();
        assert_eq!(s.len(), 11);
        assert_eq!(s.close(1, 1), s.close(0, 1));
        assert_eq!(s.high(1, 1), s.close(0, 1));
    }

    #[test]
    fn rejects_heavily_filled_asset() {
        let text = "date,ticker,open,high,low,close
2021-01-04,A,1,1,1,1
2021-01-04,B,1,1,1,1
2021-01-05,A,1,1,1,1
";
        assert!(matches!(ingest(text), Err(Error::Data(_))));
    }

    #[test]
    fn leading_dates_dropped_for_all() {
        let mut text = String::from("date,ticker,open,high,low,close\n2021-01-01,A,1,1,1,1\n");
        for d in 2..=5 {
            text += &format!("2021-01-{d:02},A,1,1,1,1\n2021-01-{d:02},B,2,2,2,2\n");
        }
        let s = ingest(&text).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.date(0), NaiveDate::from_ymd_opt(2021, 1, 2).unwrap());
    }

    #[test]
    fn negative_price_names_row() {
        let text = "date,ticker,open,high,low,close\n2021-01-04,A,1,1,1,1\n2021-01-04,B,1,1,1,-3.0\n";
        match ingest(text) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "date,ticker,open,high,low,close\n2021-01-04,A,1,1,1,1\n2021-01-05,A,1,x,1,1\n";
        assert!(matches!(ingest(text), Err(Error::Parse { line: 3, .. })));
        let text = "date,ticker,open,high,low,close\n2021/01/04,A,1,1,1,1\n";
        assert!(matches!(ingest(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn custom_schema() {
        let text = "Day,Sym,O,H,L,C\n2021-01-04,A,1,2,0.5,1.5\n";
        let schema = CsvSchema {
            date: "Day".into(),
            ticker: "Sym".into(),
            open: "O".into(),
            high: "H".into(),
            low: "L".into(),
            close: "C".into(),
        };
        let s = ingest_ohlc_reader(text.as_bytes(), &schema).unwrap();
        assert_eq!(s.close(0, 0), 1.5);
    }

    #[test]
    fn empty_file_is_data_error() {
        assert!(matches!(ingest("date,ticker,open,high,low,close\n"), Err(Error::Data(_))));
    }

    #[test]
    fn serialize_round_trip() {
        let s = ingest(TWO_BY_THREE).unwrap();
        let mut buf = Vec::new();
        write_ohlc(&s, &mut buf).unwrap();
        let again = ingest(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again, s);
        let mut buf2 = Vec::new();
        write_ohlc(&again, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
