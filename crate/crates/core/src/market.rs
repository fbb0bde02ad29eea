//! Daily OHLCV panels: loading, validation, standardization, windowing into
//! per-day training batches, and train/val/test splitting.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{mean, std_dev, Real};
use crate::tensor::Tensor;

/// Standard deviation floor for z-scoring constant series.
pub const STD_FLOOR: f64 = 1e-8;

/// One validated daily bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar<F> {
    pub date: NaiveDate,
    pub open: F,
    pub high: F,
    pub low: F,
    pub close: F,
    pub adj_close: F,
    pub volume: F,
}

/// The five model-input series of a bar, in tensor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Series {
    Open,
    High,
    Low,
    Close,
    Volume,
}

impl Series {
    pub const ALL: [Series; 5] = [
        Series::Open,
        Series::High,
        Series::Low,
        Series::Close,
        Series::Volume,
    ];

    pub fn index(self) -> usize {
        match self {
            Series::Open => 0,
            Series::High => 1,
            Series::Low => 2,
            Series::Close => 3,
            Series::Volume => 4,
        }
    }
}

/// Contiguous per-ticker series aligned to a slice of the panel calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerSeries<F> {
    pub name: String,
    /// Calendar index of this ticker's first bar.
    pub start: usize,
    pub open: Vec<F>,
    pub high: Vec<F>,
    pub low: Vec<F>,
    pub close: Vec<F>,
    pub adj_close: Vec<F>,
    pub volume: Vec<F>,
    /// Raw adjusted closes, untouched by standardization; forward returns
    /// are always computed on this series.
    pub returns_basis: Vec<F>,
    /// Pre-standardization price and volume series, populated by
    /// [`Panel::standardize`]. Indicator formulas that divide by price
    /// read these so the ratio keeps its market scale.
    pub raw: Option<RawSeries<F>>,
}

/// Price and volume series in original market units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries<F> {
    pub high: Vec<F>,
    pub low: Vec<F>,
    pub close: Vec<F>,
    pub volume: Vec<F>,
}

impl<F: Real> TickerSeries<F> {
    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    /// Calendar range covered by this ticker.
    pub fn span(&self) -> Range<usize> {
        self.start..self.start + self.len()
    }

    pub fn series(&self, s: Series) -> &[F] {
        match s {
            Series::Open => &self.open,
            Series::High => &self.high,
            Series::Low => &self.low,
            Series::Close => &self.close,
            Series::Volume => &self.volume,
        }
    }

    fn series_mut(&mut self, i: usize) -> &mut Vec<F> {
        match i {
            0 => &mut self.open,
            1 => &mut self.high,
            2 => &mut self.low,
            3 => &mut self.close,
            4 => &mut self.adj_close,
            _ => &mut self.volume,
        }
    }

    /// Local index for a calendar index, if covered.
    pub fn local(&self, cal_idx: usize) -> Option<usize> {
        if self.span().contains(&cal_idx) {
            Some(cal_idx - self.start)
        } else {
            None
        }
    }

    /// High series in market units; the stored series on a panel that was
    /// never standardized.
    pub fn basis_high(&self) -> &[F] {
        self.raw.as_ref().map_or(&self.high, |r| &r.high)
    }

    /// Low series in market units.
    pub fn basis_low(&self) -> &[F] {
        self.raw.as_ref().map_or(&self.low, |r| &r.low)
    }

    /// Close series in market units.
    pub fn basis_close(&self) -> &[F] {
        self.raw.as_ref().map_or(&self.close, |r| &r.close)
    }

    /// Volume series in market units.
    pub fn basis_volume(&self) -> &[F] {
        self.raw.as_ref().map_or(&self.volume, |r| &r.volume)
    }
}

/// Aligned multi-ticker panel over a shared trading calendar.
///
/// Immutable after construction; standardization returns a new panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel<F> {
    pub calendar: Vec<NaiveDate>,
    /// Sorted by name.
    pub tickers: Vec<TickerSeries<F>>,
    /// Tickers rejected at load time (calendar gaps), for diagnostics.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

/// Train/val/test lengths in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_days: usize,
    pub val_days: usize,
    pub test_days: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_days: 250,
            val_days: 30,
            test_days: 90,
        }
    }
}

/// One trading day's cross-section: standardized trailing windows plus
/// realized forward returns for every eligible ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct DayBatch<F> {
    pub date: NaiveDate,
    /// Calendar index of `date`.
    pub day: usize,
    pub tickers: Vec<String>,
    /// Shape (m, 5, n): ticker-major, then series, then time.
    pub inputs: Tensor<F>,
    pub forward_returns: Vec<F>,
}

impl<F: Real> DayBatch<F> {
    pub fn m(&self) -> usize {
        self.tickers.len()
    }

    pub fn window(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// Flatten inputs to (m, 5·n) row-major for the extractor: feature
    /// column s·n + j holds series s at window offset j.
    pub fn flat_inputs(&self) -> Tensor<F> {
        self.inputs.clone().reshape(&[self.m(), 5 * self.window()]).unwrap()
    }
}

impl<F: Real> Panel<F> {
    pub fn ticker_index(&self, name: &str) -> Result<usize> {
        self.tickers
            .binary_search_by(|t| t.name.as_str().cmp(name))
            .map_err(|_| Error::UnknownTicker(name.to_string()))
    }

    pub fn ticker(&self, name: &str) -> Result<&TickerSeries<F>> {
        Ok(&self.tickers[self.ticker_index(name)?])
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    /// `adj_close[t+a] / adj_close[t] − 1` on the raw (never standardized)
    /// adjusted closes.
    pub fn forward_return(&self, ticker: &str, t: usize, a: usize) -> Result<F> {
        let series = self.ticker(ticker)?;
        let now = series
            .local(t)
            .ok_or(Error::InsufficientHistory {
                what: format!("ticker {}", series.name),
                day: t,
            })?;
        let later = now + a;
        if later >= series.len() {
            return Err(Error::InsufficientFuture { day: t, horizon: a });
        }
        Ok(series.returns_basis[later] / series.returns_basis[now] - F::one())
    }

    /// Z-score every series using statistics computed over `train_range`
    /// (calendar indices) only. Constant series go to zero via the std floor.
    /// Tickers with no bars inside the range are dropped.
    pub fn standardize(&self, train_range: Range<usize>) -> Panel<F> {
        let floor = F::cast(STD_FLOOR);
        let mut out: Vec<TickerSeries<F>> = Vec::with_capacity(self.tickers.len());
        let mut dropped = self.dropped.clone();
        for t in &self.tickers {
            let lo = train_range.start.max(t.start);
            let hi = train_range.end.min(t.start + t.len());
            if lo >= hi {
                dropped.push(t.name.clone());
                continue;
            }
            let (llo, lhi) = (lo - t.start, hi - t.start);
            let mut scaled = t.clone();
            if scaled.raw.is_none() {
                scaled.raw = Some(RawSeries {
                    high: t.high.clone(),
                    low: t.low.clone(),
                    close: t.close.clone(),
                    volume: t.volume.clone(),
                });
            }
            for s in 0..6 {
                let series = scaled.series_mut(s);
                let m = mean(&series[llo..lhi]);
                let sd = std_dev(&series[llo..lhi]).max(floor);
                for x in series.iter_mut() {
                    *x = (*x - m) / sd;
                }
            }
            out.push(scaled);
        }
        Panel {
            calendar: self.calendar.clone(),
            tickers: out,
            dropped,
        }
    }

    /// Contiguous, disjoint train/val/test calendar ranges from day 0.
    pub fn split(&self, spec: SplitSpec) -> Result<(Range<usize>, Range<usize>, Range<usize>)> {
        let needed = spec.train_days + spec.val_days + spec.test_days;
        if spec.train_days == 0 || spec.val_days == 0 || spec.test_days == 0 {
            return Err(Error::InvalidConfig("split lengths must be >= 1".into()));
        }
        if needed > self.calendar.len() {
            return Err(Error::CalendarTooShort {
                needed,
                have: self.calendar.len(),
            });
        }
        let a = spec.train_days;
        let b = a + spec.val_days;
        Ok((0..a, a..b, b..needed))
    }

    /// Build the cross-section for calendar day `day`: every ticker with a
    /// full n-day trailing window and an a-day forward return.
    pub fn day_batch(&self, day: usize, n: usize, a: usize) -> Result<DayBatch<F>> {
        if day >= self.calendar.len() {
            return Err(Error::InsufficientHistory {
                what: "calendar".into(),
                day,
            });
        }
        let mut names = Vec::new();
        let mut rows: Vec<&TickerSeries<F>> = Vec::new();
        for t in &self.tickers {
            let local = match t.local(day) {
                Some(l) => l,
                None => continue,
            };
            if local + 1 < n || local + a >= t.len() {
                continue;
            }
            names.push(t.name.clone());
            rows.push(t);
        }
        if names.len() < 2 {
            return Err(Error::DegenerateCrossSection {
                day,
                count: names.len(),
            });
        }
        let m = names.len();
        let mut data = Vec::with_capacity(m * 5 * n);
        let mut fwd = Vec::with_capacity(m);
        for t in &rows {
            let local = t.local(day).unwrap();
            let from = local + 1 - n;
            for s in Series::ALL {
                data.extend_from_slice(&t.series(s)[from..=local]);
            }
            fwd.push(t.returns_basis[local + a] / t.returns_basis[local] - F::one());
        }
        Ok(DayBatch {
            date: self.calendar[day],
            day,
            tickers: names,
            inputs: Tensor::from_vec(&[m, 5, n], data)?,
            forward_returns: fwd,
        })
    }

    /// Input windows only, without requiring future data: every ticker with
    /// a full n-day trailing window at `day`. Used for scoring and for
    /// pre-training targets, where no forward return is needed.
    pub fn input_batch(&self, day: usize, n: usize) -> Result<(Vec<String>, Tensor<F>)> {
        if day >= self.calendar.len() {
            return Err(Error::InsufficientHistory {
                what: "calendar".into(),
                day,
            });
        }
        let mut names = Vec::new();
        let mut data = Vec::new();
        for t in &self.tickers {
            let local = match t.local(day) {
                Some(l) if l + 1 >= n => l,
                _ => continue,
            };
            names.push(t.name.clone());
            let from = local + 1 - n;
            for s in Series::ALL {
                data.extend_from_slice(&t.series(s)[from..=local]);
            }
        }
        if names.is_empty() {
            return Err(Error::DegenerateCrossSection { day, count: 0 });
        }
        let m = names.len();
        Ok((names, Tensor::from_vec(&[m, 5, n], data)?))
    }

    /// Days in `range` on which `day_batch(day, n, a)` can succeed, i.e.
    /// with a full window behind and a full holding period ahead.
    pub fn eligible_days(&self, range: Range<usize>, n: usize, a: usize) -> Vec<usize> {
        range
            .filter(|&day| {
                let mut count = 0;
                for t in &self.tickers {
                    if let Some(local) = t.local(day) {
                        if local + 1 >= n && local + a < t.len() {
                            count += 1;
                            if count >= 2 {
                                return true;
                            }
                        }
                    }
                }
                false
            })
            .collect()
    }
}

fn parse_field<F: Real>(raw: &str, field: &str, row: usize) -> Result<F> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::MalformedRow {
        row,
        reason: format!("cannot parse {field} from {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow {
            row,
            reason: format!("{field} is not finite"),
        });
    }
    Ok(F::cast(v))
}

/// Load and validate a CSV panel.
///
/// Expected header: `date,ticker,open,high,low,close,adj_close,volume`.
/// Rows violating bar invariants are rejected with their 1-based file row;
/// tickers whose dates leave gaps in the merged calendar are dropped and
/// listed in [`Panel::dropped`].
pub fn load_panel<F: Real>(path: &Path) -> Result<Panel<F>> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => Error::MalformedRow {
                row: 1,
                reason: format!("{other:?}"),
            },
        })?;

    let mut bars: BTreeMap<String, BTreeMap<NaiveDate, Bar<F>>> = BTreeMap::new();
    let mut row = 1usize;
    for record in reader.records() {
        row += 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != 8 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected 8 fields, got {}", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| {
            Error::MalformedRow {
                row,
                reason: format!("bad date {:?}", &record[0]),
            }
        })?;
        let ticker = record[1].to_string();
        if ticker.is_empty() {
            return Err(Error::MalformedRow {
                row,
                reason: "empty ticker".into(),
            });
        }
        let bar = Bar {
            date,
            open: parse_field(&record[2], "open", row)?,
            high: parse_field(&record[3], "high", row)?,
            low: parse_field(&record[4], "low", row)?,
            close: parse_field(&record[5], "close", row)?,
            adj_close: parse_field(&record[6], "adj_close", row)?,
            volume: parse_field(&record[7], "volume", row)?,
        };
        validate_bar(&bar, row)?;
        let by_date = bars.entry(ticker.clone()).or_default();
        if by_date.insert(date, bar).is_some() {
            return Err(Error::DuplicateBar {
                ticker,
                date: date.to_string(),
                row,
            });
        }
    }
    if bars.is_empty() {
        return Err(Error::EmptyPanel {
            path: path.display().to_string(),
        });
    }
    assemble_panel(bars)
}

fn validate_bar<F: Real>(bar: &Bar<F>, row: usize) -> Result<()> {
    let fail = |reason: &str| Error::InvalidBar {
        row,
        reason: reason.to_string(),
    };
    let zero = F::zero();
    if bar.open <= zero || bar.high <= zero || bar.low <= zero || bar.close <= zero {
        return Err(fail("non-positive price"));
    }
    if bar.adj_close <= zero {
        return Err(fail("non-positive adj_close"));
    }
    if bar.volume < zero {
        return Err(fail("negative volume"));
    }
    if bar.low > bar.high {
        return Err(fail("low > high"));
    }
    if bar.open < bar.low || bar.open > bar.high {
        return Err(fail("open outside [low, high]"));
    }
    if bar.close < bar.low || bar.close > bar.high {
        return Err(fail("close outside [low, high]"));
    }
    Ok(())
}

fn assemble_panel<F: Real>(bars: BTreeMap<String, BTreeMap<NaiveDate, Bar<F>>>) -> Result<Panel<F>> {
    let mut calendar: Vec<NaiveDate> = bars
        .values()
        .flat_map(|by_date| by_date.keys().copied())
        .collect();
    calendar.sort_unstable();
    calendar.dedup();

    let mut tickers = Vec::with_capacity(bars.len());
    let mut dropped = Vec::new();
    for (name, by_date) in bars {
        let first = *by_date.keys().next().unwrap();
        let start = calendar.binary_search(&first).unwrap();
        let contiguous = by_date
            .keys()
            .zip(&calendar[start..])
            .filter(|(d, c)| d == c)
            .count()
            == by_date.len();
        if !contiguous {
            dropped.push(name);
            continue;
        }
        let mut series = TickerSeries {
            name,
            start,
            open: Vec::with_capacity(by_date.len()),
            high: Vec::with_capacity(by_date.len()),
            low: Vec::with_capacity(by_date.len()),
            close: Vec::with_capacity(by_date.len()),
            adj_close: Vec::with_capacity(by_date.len()),
            volume: Vec::with_capacity(by_date.len()),
            returns_basis: Vec::with_capacity(by_date.len()),
            raw: None,
        };
        for bar in by_date.into_values() {
            series.open.push(bar.open);
            series.high.push(bar.high);
            series.low.push(bar.low);
            series.close.push(bar.close);
            series.adj_close.push(bar.adj_close);
            series.volume.push(bar.volume);
            series.returns_basis.push(bar.adj_close);
        }
        tickers.push(series);
    }
    Ok(Panel {
        calendar,
        tickers,
        dropped,
    })
}

/// Write a panel in the load format, tickers then dates ascending.
pub fn save_panel<F: Real>(panel: &Panel<F>, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "date,ticker,open,high,low,close,adj_close,volume").map_err(io_err)?;
    for t in &panel.tickers {
        for i in 0..t.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                panel.calendar[t.start + i],
                t.name,
                t.open[i],
                t.high[i],
                t.low[i],
                t.close[i],
                t.adj_close[i],
                t.volume[i],
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}
