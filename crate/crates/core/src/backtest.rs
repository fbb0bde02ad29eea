//! Hedged long-portfolio backtest: per-day extreme-mover labels, a boosted
//! scorer over factor pools, a top-fraction equal-weight portfolio with
//! entry-charged round-trip commission, and performance metrics on the
//! excess equity curve.

use std::collections::HashMap;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::boost::{self, BoostConfig, Scorer};
use crate::error::{Error, Result};
use crate::factor::FactorSource;
use crate::market::Panel;
use crate::num::Real;

/// Days per year used to annualize returns and Sharpe.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;
/// Cross-sections smaller than this are skipped when labeling.
pub const MIN_LABEL_CROSS_SECTION: usize = 10;
/// Top and bottom share of each day's cross-section that receives a label.
pub const LABEL_FRACTION: f64 = 0.3;
/// Daily excess-return std below this reports a Sharpe of 0.
const SHARPE_STD_FLOOR: f64 = 1e-12;

/// Portfolio construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Holding period and rebalance cadence, in trading days.
    pub holding_period: usize,
    /// Share of the scored universe held long; 1.0 holds everything.
    pub long_fraction: f64,
    /// Round-trip commission rate, charged at entry on swapped-in weight.
    pub commission: f64,
    /// Features kept by importance selection for the combined pool.
    pub keep: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            holding_period: 5,
            long_fraction: 0.1,
            commission: 0.005,
            keep: 50,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.holding_period == 0 {
            return Err(Error::InvalidConfig("holding_period must be >= 1".into()));
        }
        if !(self.long_fraction > 0.0 && self.long_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "long_fraction {} outside (0, 1]",
                self.long_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.commission) {
            return Err(Error::InvalidConfig(format!(
                "commission {} outside [0, 1)",
                self.commission
            )));
        }
        if self.keep == 0 {
            return Err(Error::InvalidConfig("keep must be >= 1".into()));
        }
        Ok(())
    }
}

/// One labeled training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow<F> {
    pub date: NaiveDate,
    pub ticker: String,
    pub features: Vec<F>,
    /// 1 for the day's top movers, 0 for the bottom; middle rows are absent.
    pub label: u8,
}

/// Extreme-mover training set over a date range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet<F> {
    pub rows: Vec<LabeledRow<F>>,
    pub n_features: usize,
    /// Days dropped for having fewer than the minimum cross-section.
    pub skipped_days: usize,
}

impl<F: Real> LabeledSet<F> {
    /// Copy of the set keeping only the given feature columns, in order.
    pub fn project(&self, kept: &[usize]) -> LabeledSet<F> {
        LabeledSet {
            rows: self
                .rows
                .iter()
                .map(|r| LabeledRow {
                    date: r.date,
                    ticker: r.ticker.clone(),
                    features: kept.iter().map(|&f| r.features[f]).collect(),
                    label: r.label,
                })
                .collect(),
            n_features: kept.len(),
            skipped_days: self.skipped_days,
        }
    }
}

/// A day's cross-section with every pool factor evaluated and aligned.
struct PooledDay<F> {
    date: NaiveDate,
    tickers: Vec<String>,
    /// Ticker-major, one column per pool factor.
    features: Vec<Vec<F>>,
    forward_returns: Vec<F>,
}

/// Evaluate the pool on one day and intersect tickers across all factors
/// and the day batch. Ticker order follows the batch (sorted by name).
fn pooled_day<F: Real>(
    panel: &Panel<F>,
    day: usize,
    pool: &[&dyn FactorSource<F>],
    window: usize,
    horizon: usize,
) -> Result<PooledDay<F>> {
    let batch = panel.day_batch(day, window, horizon)?;
    let mut maps: Vec<HashMap<&str, F>> = Vec::with_capacity(pool.len());
    let evaluated: Vec<(Vec<String>, Vec<F>)> = pool
        .iter()
        .map(|f| f.values(panel, day))
        .collect::<Result<_>>()?;
    for (names, vals) in &evaluated {
        maps.push(names.iter().map(|n| n.as_str()).zip(vals.iter().copied()).collect());
    }
    let mut tickers = Vec::new();
    let mut features = Vec::new();
    let mut forward_returns = Vec::new();
    for (i, name) in batch.tickers.iter().enumerate() {
        let row: Option<Vec<F>> = maps.iter().map(|m| m.get(name.as_str()).copied()).collect();
        if let Some(row) = row {
            tickers.push(name.clone());
            features.push(row);
            forward_returns.push(batch.forward_returns[i]);
        }
    }
    if tickers.len() < 2 {
        return Err(Error::DegenerateCrossSection {
            day,
            count: tickers.len(),
        });
    }
    Ok(PooledDay {
        date: batch.date,
        tickers,
        features,
        forward_returns,
    })
}

/// Label each eligible day's top and bottom movers by realized forward
/// return. Ties keep ticker order; the middle of the cross-section is
/// dropped; days under the minimum size are skipped and counted.
pub fn build_labels<F: Real>(
    panel: &Panel<F>,
    range: Range<usize>,
    pool: &[&dyn FactorSource<F>],
    window: usize,
    horizon: usize,
) -> Result<LabeledSet<F>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool("label pool".into()));
    }
    let mut rows = Vec::new();
    let mut skipped_days = 0usize;
    for day in panel.eligible_days(range, window, horizon) {
        let pooled = match pooled_day(panel, day, pool, window, horizon) {
            Ok(p) => p,
            Err(Error::DegenerateCrossSection { .. }) => {
                skipped_days += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let m = pooled.tickers.len();
        if m < MIN_LABEL_CROSS_SECTION {
            skipped_days += 1;
            continue;
        }
        let k = (LABEL_FRACTION * m as f64).floor() as usize;
        if k == 0 {
            skipped_days += 1;
            continue;
        }
        // one stable descending sort: front k are 1s, back k are 0s,
        // so tied returns resolve by ticker order and never overlap
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            pooled.forward_returns[b]
                .partial_cmp(&pooled.forward_returns[a])
                .expect("forward returns are finite")
        });
        let mut labels: HashMap<usize, u8> = HashMap::new();
        for &i in &order[..k] {
            labels.insert(i, 1);
        }
        for &i in &order[m - k..] {
            labels.insert(i, 0);
        }
        for i in 0..m {
            if let Some(&label) = labels.get(&i) {
                rows.push(LabeledRow {
                    date: pooled.date,
                    ticker: pooled.tickers[i].clone(),
                    features: pooled.features[i].clone(),
                    label,
                });
            }
        }
    }
    Ok(LabeledSet {
        rows,
        n_features: pool.len(),
        skipped_days,
    })
}

/// Fit the boosted logistic scorer on a labeled set.
pub fn train_classifier<F: Real>(set: &LabeledSet<F>, cfg: &BoostConfig) -> Result<Scorer<F>> {
    let rows: Vec<Vec<F>> = set.rows.iter().map(|r| r.features.clone()).collect();
    let labels: Vec<u8> = set.rows.iter().map(|r| r.label).collect();
    boost::train_classifier(&rows, &labels, cfg)
}

/// Importance-ranked feature subset chosen on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Feature indices in descending importance, truncated to `keep`.
    pub kept: Vec<usize>,
    pub importances: Vec<f64>,
    /// True when the union had no more than `keep` features and all were kept.
    pub undersized: bool,
}

/// Train a scorer on the union pool's labeled set and keep the `keep` most
/// important features. A union no larger than `keep` is kept whole.
pub fn select_features<F: Real>(
    train: &LabeledSet<F>,
    keep: usize,
    cfg: &BoostConfig,
) -> Result<FeatureSelection> {
    if keep == 0 {
        return Err(Error::InvalidConfig("keep must be >= 1".into()));
    }
    if train.n_features <= keep {
        let importances = vec![1.0 / train.n_features.max(1) as f64; train.n_features];
        return Ok(FeatureSelection {
            kept: (0..train.n_features).collect(),
            importances,
            undersized: true,
        });
    }
    let scorer = train_classifier(train, cfg)?;
    let importances = scorer.importances().to_vec();
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| {
        importances[b]
            .partial_cmp(&importances[a])
            .expect("importances are finite")
            .then(a.cmp(&b))
    });
    order.truncate(keep);
    Ok(FeatureSelection {
        kept: order,
        importances,
        undersized: false,
    })
}

/// Daily NAV paths of the strategy, its hedge, and their ratio, all
/// normalized to 1 at the first rebalance date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub dates: Vec<NaiveDate>,
    pub strategy: Vec<f64>,
    pub hedge: Vec<f64>,
    /// strategy / hedge.
    pub excess: Vec<f64>,
}

impl EquityCurve {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Performance of the excess NAV curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Geometric annualization of the final excess NAV.
    pub annualized_return: f64,
    /// Mean over std of daily excess returns, annualized by sqrt(252).
    pub sharpe: f64,
    /// Worst peak-to-trough decline of the excess NAV, in [0, 1].
    pub max_drawdown: f64,
}

/// Buy-and-hold daily NAV path of an equal-weight basket: entry prices are
/// fixed at the rebalance day, so weights drift with prices.
fn basket_path<F: Real>(
    panel: &Panel<F>,
    names: &[String],
    day: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    let mut rel = vec![0.0f64; horizon];
    for name in names {
        let series = panel.ticker(name)?;
        let local = series.local(day).ok_or(Error::InsufficientHistory {
            what: format!("ticker {name}"),
            day,
        })?;
        let entry = series.returns_basis[local].to_f64_lossy();
        for (j, slot) in rel.iter_mut().enumerate() {
            *slot += series.returns_basis[local + j + 1].to_f64_lossy() / entry;
        }
    }
    let m = names.len() as f64;
    for slot in rel.iter_mut() {
        *slot /= m;
    }
    Ok(rel)
}

/// Simulate the long-hedge strategy over a range: every `holding_period`
/// days, score the aligned universe, hold the top fraction equal-weight,
/// charge the round-trip commission on newly entered weight, and mark both
/// the portfolio and the equal-weight hedge daily.
pub fn simulate<F: Real>(
    panel: &Panel<F>,
    range: Range<usize>,
    pool: &[&dyn FactorSource<F>],
    score: &dyn Fn(&[F]) -> f64,
    window: usize,
    cfg: &StrategyConfig,
) -> Result<EquityCurve> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyPool("strategy pool".into()));
    }
    let a = cfg.holding_period;
    let eligible = panel.eligible_days(range.clone(), window, a);
    let Some(&first) = eligible.first() else {
        return Err(Error::NoEligibleDays);
    };

    let mut dates = Vec::new();
    let mut strategy = Vec::new();
    let mut hedge = Vec::new();
    let mut excess = Vec::new();
    let mut nav_s = 1.0f64;
    let mut nav_h = 1.0f64;
    let mut prev_held: Vec<String> = Vec::new();

    let mut day = first;
    while day < range.end {
        let pooled = match pooled_day(panel, day, pool, window, a) {
            Ok(p) => p,
            Err(_) if !dates.is_empty() => break,
            Err(e) => return Err(e),
        };
        if dates.is_empty() {
            dates.push(pooled.date);
            strategy.push(1.0);
            hedge.push(1.0);
            excess.push(1.0);
        }
        let m = pooled.tickers.len();
        let k = ((cfg.long_fraction * m as f64).floor() as usize).clamp(1, m);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| {
            let sx = score(&pooled.features[x]);
            let sy = score(&pooled.features[y]);
            sy.partial_cmp(&sx)
                .expect("scores are finite")
                .then(pooled.tickers[x].cmp(&pooled.tickers[y]))
        });
        // name order makes the basket sum independent of score ranking, so
        // holding the whole universe reproduces the hedge bit for bit
        let mut held: Vec<String> =
            order[..k].iter().map(|&i| pooled.tickers[i].clone()).collect();
        held.sort();
        let swapped_in = held.iter().filter(|n| !prev_held.contains(n)).count();
        let turnover = swapped_in as f64 / k as f64;
        let entry_factor = 1.0 - cfg.commission * turnover;

        let path_s = basket_path(panel, &held, day, a)?;
        let path_h = basket_path(panel, &pooled.tickers, day, a)?;
        for j in 0..a {
            let s = nav_s * entry_factor * path_s[j];
            let h = nav_h * path_h[j];
            dates.push(panel.calendar[day + j + 1]);
            strategy.push(s);
            hedge.push(h);
            excess.push(s / h);
        }
        nav_s *= entry_factor * path_s[a - 1];
        nav_h *= path_h[a - 1];
        prev_held = held;
        day += a;
    }
    Ok(EquityCurve {
        dates,
        strategy,
        hedge,
        excess,
    })
}

/// Metrics on the excess NAV: geometric annualized return, daily Sharpe
/// annualized by sqrt(252) with a zero risk-free rate, and max drawdown.
pub fn performance(curve: &EquityCurve) -> Result<PerfReport> {
    let n = curve.excess.len();
    if n < 2 || curve.strategy.len() != n || curve.hedge.len() != n || curve.dates.len() != n {
        return Err(Error::InvalidConfig(
            "equity curve needs >= 2 aligned points".into(),
        ));
    }
    let steps = (n - 1) as f64;
    let final_excess = curve.excess[n - 1] / curve.excess[0];
    let annualized_return = final_excess.powf(TRADING_DAYS_PER_YEAR / steps) - 1.0;

    let daily: Vec<f64> = curve
        .excess
        .windows(2)
        .map(|w| w[1] / w[0] - 1.0)
        .collect();
    let mean = daily.iter().sum::<f64>() / daily.len() as f64;
    let var = daily.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / daily.len() as f64;
    let std = var.sqrt();
    let sharpe = if std < SHARPE_STD_FLOOR {
        0.0
    } else {
        mean / std * TRADING_DAYS_PER_YEAR.sqrt()
    };

    let mut peak = f64::NEG_INFINITY;
    let mut max_drawdown = 0.0f64;
    for &nav in &curve.excess {
        peak = peak.max(nav);
        max_drawdown = max_drawdown.max(1.0 - nav / peak);
    }
    Ok(PerfReport {
        annualized_return,
        sharpe,
        max_drawdown,
    })
}
