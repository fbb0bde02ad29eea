//! Classical technical indicators: pre-training targets for the neural
//! miner and the hand-crafted ("prior knowledge") baseline factor pool.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Panel, TickerSeries};
use crate::num::{mean, std_dev, Real};

/// Divisor floor: indicators stay finite on standardized panels where
/// prices cross zero.
const DIV_FLOOR: f64 = 1e-8;

fn pdiv<F: Real>(num: F, den: F) -> F {
    let floor = F::cast(DIV_FLOOR);
    let den = if den < F::zero() {
        den.min(-floor)
    } else {
        den.max(floor)
    };
    num / den
}

/// One indicator with its window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum IndicatorSpec {
    #[serde(rename = "MA")]
    Ma { n: usize },
    #[serde(rename = "EMA")]
    Ema { n: usize },
    #[serde(rename = "MACD")]
    Macd { fast: usize, slow: usize },
    #[serde(rename = "PVT")]
    Pvt,
    #[serde(rename = "TOP10")]
    Top10,
    #[serde(rename = "DC")]
    Dc { n: usize },
    #[serde(rename = "BOLL")]
    Boll { n: usize },
}

impl fmt::Display for IndicatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndicatorSpec::Ma { n } => write!(f, "MA({n})"),
            IndicatorSpec::Ema { n } => write!(f, "EMA({n})"),
            IndicatorSpec::Macd { fast, slow } => write!(f, "MACD({fast},{slow})"),
            IndicatorSpec::Pvt => write!(f, "PVT"),
            IndicatorSpec::Top10 => write!(f, "TOP10"),
            IndicatorSpec::Dc { n } => write!(f, "DC({n})"),
            IndicatorSpec::Boll { n } => write!(f, "BOLL({n})"),
        }
    }
}

impl IndicatorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match *self {
            IndicatorSpec::Ma { n }
            | IndicatorSpec::Ema { n }
            | IndicatorSpec::Dc { n }
            | IndicatorSpec::Boll { n } => {
                if n == 0 {
                    return bad(format!("{self}: window must be >= 1"));
                }
            }
            IndicatorSpec::Macd { fast, slow } => {
                if fast == 0 {
                    return bad(format!("{self}: window must be >= 1"));
                }
                if fast >= slow {
                    return bad(format!("{self}: fast window must be < slow window"));
                }
            }
            IndicatorSpec::Pvt | IndicatorSpec::Top10 => {}
        }
        Ok(())
    }

    /// Minimum local index at which the indicator is defined.
    pub fn lookback(&self) -> usize {
        match *self {
            IndicatorSpec::Ma { n } | IndicatorSpec::Dc { n } | IndicatorSpec::Boll { n } => n - 1,
            // recursions run from the series start
            IndicatorSpec::Ema { .. } | IndicatorSpec::Macd { .. } | IndicatorSpec::Pvt => 0,
            IndicatorSpec::Top10 => 9,
        }
    }
}

/// Ordered indicator list used as pre-training priors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorCatalog {
    pub entries: Vec<IndicatorSpec>,
}

impl Default for PriorCatalog {
    fn default() -> Self {
        PriorCatalog {
            entries: vec![
                IndicatorSpec::Ma { n: 5 },
                IndicatorSpec::Ma { n: 20 },
                IndicatorSpec::Ema { n: 12 },
                IndicatorSpec::Ema { n: 26 },
                IndicatorSpec::Macd { fast: 12, slow: 26 },
                IndicatorSpec::Pvt,
                IndicatorSpec::Top10,
                IndicatorSpec::Dc { n: 5 },
                IndicatorSpec::Dc { n: 15 },
                IndicatorSpec::Boll { n: 20 },
            ],
        }
    }
}

impl PriorCatalog {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidConfig("prior catalog is empty".into()));
        }
        for e in &self.entries {
            e.validate()?;
        }
        for (i, a) in self.entries.iter().enumerate() {
            if self.entries[i + 1..].contains(a) {
                return Err(Error::InvalidConfig(format!(
                    "prior catalog lists {a} twice"
                )));
            }
        }
        Ok(())
    }
}

fn rolling_mean<F: Real>(x: &[F], n: usize) -> Vec<Option<F>> {
    (0..x.len())
        .map(|t| {
            if t + 1 >= n {
                Some(mean(&x[t + 1 - n..=t]))
            } else {
                None
            }
        })
        .collect()
}

fn ema_series<F: Real>(x: &[F], n: usize) -> Vec<F> {
    let alpha = F::cast(2.0) / F::cast(n as f64 + 1.0);
    let mut out = Vec::with_capacity(x.len());
    let mut prev = match x.first() {
        Some(&v) => v,
        None => return out,
    };
    out.push(prev);
    for &v in &x[1..] {
        prev = alpha * v + (F::one() - alpha) * prev;
        out.push(prev);
    }
    out
}

/// Per-ticker indicator values aligned to the ticker's local indices.
/// `None` marks days with insufficient lookback. Cross-sectional specs
/// (TOP10) are not served here.
///
/// The additive smoothers (MA, EMA, MACD) read the close series as
/// stored, inheriting any standardization. Formulas that divide by price
/// or weight by volume (PVT, DC, BOLL) read the market-unit basis series:
/// their ratios exist to cancel price scale, and a zero-crossing
/// standardized close would put a pole in the quotient.
fn ticker_series_values<F: Real>(spec: &IndicatorSpec, t: &TickerSeries<F>) -> Vec<Option<F>> {
    match *spec {
        IndicatorSpec::Ma { n } => rolling_mean(&t.close, n),
        IndicatorSpec::Ema { n } => ema_series(&t.close, n).into_iter().map(Some).collect(),
        IndicatorSpec::Macd { fast, slow } => {
            let f = ema_series(&t.close, fast);
            let s = ema_series(&t.close, slow);
            f.into_iter().zip(s).map(|(a, b)| Some(a - b)).collect()
        }
        IndicatorSpec::Pvt => {
            let close = t.basis_close();
            let volume = t.basis_volume();
            let mut out = Vec::with_capacity(t.len());
            let mut acc = F::zero();
            for i in 0..t.len() {
                if i > 0 {
                    acc += volume[i] * pdiv(close[i] - close[i - 1], close[i - 1]);
                }
                out.push(Some(acc));
            }
            out
        }
        IndicatorSpec::Dc { n } => {
            let close = t.basis_close();
            let scaled =
                |s: &[F]| -> Vec<F> {
                    s.iter()
                        .zip(&t.returns_basis)
                        .zip(close)
                        .map(|((&v, &adj), &close)| v * pdiv(adj, close))
                        .collect()
                };
            let h = rolling_mean(&scaled(t.basis_high()), n);
            let l = rolling_mean(&scaled(t.basis_low()), n);
            h.into_iter()
                .zip(l)
                .zip(&t.returns_basis)
                .map(|((h, l), &adj)| {
                    let (h, l) = (h?, l?);
                    Some(pdiv(adj, (h + l) / F::cast(2.0)))
                })
                .collect()
        }
        IndicatorSpec::Boll { n } => {
            let close = t.basis_close();
            (0..t.len())
                .map(|i| {
                    if i + 1 < n {
                        return None;
                    }
                    let window = &close[i + 1 - n..=i];
                    let lb = mean(window) - std_dev(window);
                    Some(pdiv(lb, close[i]))
                })
                .collect()
        }
        IndicatorSpec::Top10 => unreachable!("TOP10 is cross-sectional"),
    }
}

/// One value per eligible ticker at calendar `day`, ticker order matching
/// [`Panel::day_batch`]. Tickers lacking the required lookback are excluded.
pub fn indicator_cross_section<F: Real>(
    spec: &IndicatorSpec,
    panel: &Panel<F>,
    day: usize,
) -> Result<(Vec<String>, Vec<F>)> {
    spec.validate()?;
    let lookback = spec.lookback();
    let mut names = Vec::new();
    let mut values = Vec::new();
    if let IndicatorSpec::Top10 = spec {
        // ratio against the decile leaders, so market-unit closes
        let mut ma10 = Vec::new();
        for t in &panel.tickers {
            if let Some(local) = t.local(day) {
                if local >= lookback {
                    names.push(t.name.clone());
                    ma10.push(mean(&t.basis_close()[local - 9..=local]));
                }
            }
        }
        if names.is_empty() {
            return Err(Error::NoEligibleDays);
        }
        let mut sorted = ma10.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let decile = ((names.len() as f64) * 0.1).ceil() as usize;
        let top = mean(&sorted[..decile.max(1)]);
        values = ma10.into_iter().map(|v| pdiv(v, top) - F::one()).collect();
        return Ok((names, values));
    }
    for t in &panel.tickers {
        if let Some(local) = t.local(day) {
            if local >= lookback {
                let series = ticker_series_values(spec, t);
                if let Some(Some(v)) = series.get(local) {
                    names.push(t.name.clone());
                    values.push(*v);
                }
            }
        }
    }
    if names.is_empty() {
        return Err(Error::NoEligibleDays);
    }
    Ok((names, values))
}

/// Indicator value for one (ticker, day) pair.
pub fn compute_indicator<F: Real>(
    spec: &IndicatorSpec,
    panel: &Panel<F>,
    ticker: &str,
    day: usize,
) -> Result<F> {
    spec.validate()?;
    if let IndicatorSpec::Top10 = spec {
        let (names, values) = indicator_cross_section(spec, panel, day)?;
        return names
            .iter()
            .position(|n| n == ticker)
            .map(|i| values[i])
            .ok_or_else(|| Error::InsufficientHistory {
                what: format!("{spec} for {ticker}"),
                day,
            });
    }
    let t = panel.ticker(ticker)?;
    let local = t.local(day).filter(|&l| l >= spec.lookback()).ok_or_else(|| {
        Error::InsufficientHistory {
            what: format!("{spec} for {ticker}"),
            day,
        }
    })?;
    ticker_series_values(spec, t)[local].ok_or_else(|| Error::InsufficientHistory {
        what: format!("{spec} for {ticker}"),
        day,
    })
}
