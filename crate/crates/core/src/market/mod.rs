//! Market data: validated OHLC series, synthetic markets, state tensors and price relatives.

mod ingest;
mod series;
mod synth;
mod tensor;
mod view;

pub use ingest::{ingest_ohlc, ingest_ohlc_reader, write_ohlc, CsvSchema, MAX_FILLED_FRACTION};
pub use series::{split_train_test, PriceSeries, CASH_TICKER};
pub use synth::{synth_gbm, SynthSpec};
pub use tensor::{build_price_tensor, price_relatives, PriceTensor, RelativeVector, CHANNELS};
pub use view::HistoryView;

/// State window used throughout: 50 daily bars.
pub const DEFAULT_WINDOW: usize = 50;
