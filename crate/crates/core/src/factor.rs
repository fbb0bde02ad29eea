//! Common interface for anything that produces a daily factor
//! cross-section: indicators, neural factor models, GP expressions.

use std::collections::HashMap;
use std::ops::Range;

use crate::analysis::spearman_ic;
use crate::error::{Error, Result};
use crate::indicators::{indicator_cross_section, IndicatorSpec};
use crate::market::Panel;
use crate::num::{mean, std_dev, Real};

/// A factor: given a panel and a calendar day, yields one value per
/// eligible ticker. Implementations decide their own eligibility (window
/// or lookback), so callers align by ticker name.
pub trait FactorSource<F: Real>: Send + Sync {
    fn label(&self) -> String;

    /// Cross-section at `day`: (tickers, values), ticker order following
    /// the panel's.
    fn values(&self, panel: &Panel<F>, day: usize) -> Result<(Vec<String>, Vec<F>)>;
}

/// A classical indicator used directly as a factor ("prior knowledge" pool).
#[derive(Debug, Clone)]
pub struct IndicatorFactor {
    pub spec: IndicatorSpec,
}

impl<F: Real> FactorSource<F> for IndicatorFactor {
    fn label(&self) -> String {
        self.spec.to_string()
    }

    fn values(&self, panel: &Panel<F>, day: usize) -> Result<(Vec<String>, Vec<F>)> {
        indicator_cross_section(&self.spec, panel, day)
    }
}

/// Daily IC aggregates for one factor over a day range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcStats<F> {
    pub mean_ic: F,
    pub ic_std: F,
    /// Days entering the mean.
    pub days: usize,
    /// Days excluded for a constant cross-section.
    pub degenerate_days: usize,
}

/// One day's rank IC of a source against realized forward returns, on the
/// tickers where both the source and the return batch are defined.
pub fn source_day_ic<F: Real>(
    source: &dyn FactorSource<F>,
    panel: &Panel<F>,
    day: usize,
    n: usize,
    a: usize,
) -> Result<(F, bool)> {
    let batch = panel.day_batch(day, n, a)?;
    let (names, values) = source.values(panel, day)?;
    let by_name: HashMap<&str, F> = names
        .iter()
        .map(String::as_str)
        .zip(values.iter().copied())
        .collect();
    let mut x = Vec::with_capacity(batch.m());
    let mut y = Vec::with_capacity(batch.m());
    for (ticker, &ret) in batch.tickers.iter().zip(&batch.forward_returns) {
        if let Some(&v) = by_name.get(ticker.as_str()) {
            x.push(v);
            y.push(ret);
        }
    }
    if x.len() < 2 {
        return Err(Error::DegenerateCrossSection {
            day,
            count: x.len(),
        });
    }
    let out = spearman_ic(&x, &y)?;
    Ok((out.value, out.degenerate))
}

/// Mean and std of daily rank IC over the eligible days of `range`.
/// Degenerate days are excluded from the mean but counted.
pub fn evaluate_source<F: Real>(
    source: &dyn FactorSource<F>,
    panel: &Panel<F>,
    range: Range<usize>,
    n: usize,
    a: usize,
) -> Result<IcStats<F>> {
    let days = panel.eligible_days(range, n, a);
    if days.is_empty() {
        return Err(Error::NoEligibleDays);
    }
    let mut ics = Vec::with_capacity(days.len());
    let mut degenerate = 0usize;
    for &day in &days {
        let (ic, flat) = source_day_ic(source, panel, day, n, a)?;
        if flat {
            degenerate += 1;
        } else {
            ics.push(ic);
        }
    }
    if ics.is_empty() {
        return Ok(IcStats {
            mean_ic: F::zero(),
            ic_std: F::zero(),
            days: 0,
            degenerate_days: degenerate,
        });
    }
    Ok(IcStats {
        mean_ic: mean(&ics),
        ic_std: std_dev(&ics),
        days: ics.len(),
        degenerate_days: degenerate,
    })
}
