//! Per-window trade value/volume sums and the two families of price moments.
//!
//! The market-based moment of order `n` is the ratio of the `n`-th value and
//! volume moments, `p(n) = C(n) / U(n)` with `C(n) = sum C_i^n` and
//! `U(n) = sum U_i^n`. The frequency-based moment is the plain mean of price
//! powers, `pi(n) = sum p_i^n / N`. The two coincide when every trade volume
//! is one.

use serde::Serialize;
use thiserror::Error;

use crate::summation::CompensatedSum;
use crate::trade_model::{TradeTick, Window};

pub const DEFAULT_MAX_ORDER: usize = 4;

/// Agreement required between the two volatility evaluations, relative to
/// the magnitude of `p(2)`.
pub const VOLATILITY_FORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("window is empty")]
    EmptyWindow,
    #[error("moment order {n} outside 1..={n_max}")]
    OrderOutOfRange { n: usize, n_max: usize },
    #[error("the two volatility forms disagree: {first} vs {second}")]
    FormDisagreement { first: f64, second: f64 },
}

/// Power sums of trade values and volumes over one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowAggregates {
    pub n_max: usize,
    pub count: usize,
    /// `C(n)` for `n = 1..=n_max` (entry `n - 1`).
    pub value_sums: Vec<f64>,
    /// `U(n)` for `n = 1..=n_max` (entry `n - 1`).
    pub volume_sums: Vec<f64>,
}

impl WindowAggregates {
    fn check(&self, n: usize) -> Result<(), MomentError> {
        if n == 0 || n > self.n_max {
            return Err(MomentError::OrderOutOfRange { n, n_max: self.n_max });
        }
        Ok(())
    }

    pub fn value_sum(&self, n: usize) -> Result<f64, MomentError> {
        self.check(n)?;
        Ok(self.value_sums[n - 1])
    }

    pub fn volume_sum(&self, n: usize) -> Result<f64, MomentError> {
        self.check(n)?;
        Ok(self.volume_sums[n - 1])
    }

    /// `C_m(n) = C(n) / N`.
    pub fn value_mean(&self, n: usize) -> Result<f64, MomentError> {
        Ok(self.value_sum(n)? / self.count as f64)
    }

    /// `U_m(n) = U(n) / N`.
    pub fn volume_mean(&self, n: usize) -> Result<f64, MomentError> {
        Ok(self.volume_sum(n)? / self.count as f64)
    }
}

struct PowerSums {
    value: Vec<CompensatedSum>,
    volume: Vec<CompensatedSum>,
    price: Vec<CompensatedSum>,
}

fn power_sums(ticks: &[TradeTick], n_max: usize, with_price: bool) -> PowerSums {
    let mut value = vec![CompensatedSum::new(); n_max];
    let mut volume = vec![CompensatedSum::new(); n_max];
    let mut price = vec![CompensatedSum::new(); if with_price { n_max } else { 0 }];
    for tick in ticks {
        let (mut c, mut u, mut p) = (tick.value, tick.volume, tick.price);
        for n in 0..n_max {
            value[n].add(c);
            volume[n].add(u);
            if with_price {
                price[n].add(p);
                p *= tick.price;
            }
            c *= tick.value;
            u *= tick.volume;
        }
    }
    PowerSums { value, volume, price }
}

/// Accumulates `C(n)` and `U(n)` over the window with compensated sums.
pub fn aggregate(window: &Window<'_>, n_max: usize) -> Result<WindowAggregates, MomentError> {
    aggregate_ticks(window.ticks, n_max)
}

/// [`aggregate`] over a bare tick slice.
pub fn aggregate_ticks(ticks: &[TradeTick], n_max: usize) -> Result<WindowAggregates, MomentError> {
    if ticks.is_empty() {
        return Err(MomentError::EmptyWindow);
    }
    if n_max == 0 {
        return Err(MomentError::OrderOutOfRange { n: 0, n_max });
    }
    let sums = power_sums(ticks, n_max, false);
    Ok(WindowAggregates {
        n_max,
        count: ticks.len(),
        value_sums: sums.value.iter().map(CompensatedSum::value).collect(),
        volume_sums: sums.volume.iter().map(CompensatedSum::value).collect(),
    })
}

/// Market-based price moment `p(n) = C(n) / U(n)`; `p(1)` is the VWAP.
pub fn market_price_moment(agg: &WindowAggregates, n: usize) -> Result<f64, MomentError> {
    Ok(agg.value_sum(n)? / agg.volume_sum(n)?)
}

/// Market-based volatility and its two independent evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketVolatility {
    /// `p(2) - p(1)^2`.
    pub variance: f64,
    /// `C_m(2)/U_m(2) - C_m(1)^2/U_m(1)^2`.
    pub from_means: f64,
    /// `C(2)/U(2) - C(1)^2/U(1)^2`.
    pub from_sums: f64,
    pub negative: bool,
}

/// `sigma^2(p) = p(2) - p(1)^2`, cross-checked against the mean-based and
/// sum-based forms.
///
/// The disagreement between forms is measured against `p(2)`, the size of
/// the terms being cancelled, since the variance itself may sit at zero or
/// below. A signed result below zero sets `negative`.
pub fn market_volatility(agg: &WindowAggregates) -> Result<MarketVolatility, MomentError> {
    let p1 = market_price_moment(agg, 1)?;
    let p2 = market_price_moment(agg, 2)?;
    let variance = p2 - p1 * p1;
    let (cm1, cm2) = (agg.value_mean(1)?, agg.value_mean(2)?);
    let (um1, um2) = (agg.volume_mean(1)?, agg.volume_mean(2)?);
    let from_means = cm2 / um2 - (cm1 * cm1) / (um1 * um1);
    let (c1, c2) = (agg.value_sums[0], agg.value_sums[1]);
    let (u1, u2) = (agg.volume_sums[0], agg.volume_sums[1]);
    let from_sums = c2 / u2 - (c1 * c1) / (u1 * u1);
    let scale = p2.abs().max(p1 * p1);
    for (first, second) in [(from_means, from_sums), (variance, from_sums)] {
        if (first - second).abs() > VOLATILITY_FORM_TOLERANCE * scale {
            return Err(MomentError::FormDisagreement { first, second });
        }
    }
    Ok(MarketVolatility {
        variance,
        from_means,
        from_sums,
        negative: variance < 0.0,
    })
}

/// Third central moment under the market-based measure,
/// `a_3 = p(3) - 3 p(1) sigma^2(p) - p(1)^3`.
pub fn third_central_moment(agg: &WindowAggregates) -> Result<f64, MomentError> {
    let p1 = market_price_moment(agg, 1)?;
    let p2 = market_price_moment(agg, 2)?;
    let p3 = market_price_moment(agg, 3)?;
    let variance = p2 - p1 * p1;
    Ok(p3 - 3.0 * p1 * variance - p1 * p1 * p1)
}

/// Frequency-based price moment `pi(n) = sum p_i^n / N`.
pub fn frequency_moment(window: &Window<'_>, n: usize) -> Result<f64, MomentError> {
    if window.is_empty() {
        return Err(MomentError::EmptyWindow);
    }
    if n == 0 {
        return Err(MomentError::OrderOutOfRange { n, n_max: usize::MAX });
    }
    let sum = window
        .ticks
        .iter()
        .map(|t| t.price.powi(n as i32))
        .sum::<CompensatedSum>();
    Ok(sum.value() / window.len() as f64)
}

/// Market-based price moments of one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketMoments {
    /// `p(n)` for `n = 1..=n_max` (entry `n - 1`).
    pub p_n: Vec<f64>,
    pub vwap: f64,
    /// `p(2) - p(1)^2`, signed; `None` when `n_max < 2`.
    pub variance: Option<f64>,
    pub negative_variance: bool,
    /// `a_3`; `None` when `n_max < 3`.
    pub gamma3: Option<f64>,
    /// `gamma3 / sigma^3` when the variance is positive.
    pub skew_normalized: Option<f64>,
}

impl MarketMoments {
    pub fn from_aggregates(agg: &WindowAggregates) -> Result<Self, MomentError> {
        let p_n = (1..=agg.n_max)
            .map(|n| market_price_moment(agg, n))
            .collect::<Result<Vec<_>, _>>()?;
        let vol = if agg.n_max >= 2 {
            Some(market_volatility(agg)?)
        } else {
            None
        };
        let gamma3 = if agg.n_max >= 3 {
            Some(third_central_moment(agg)?)
        } else {
            None
        };
        let skew_normalized = match (vol, gamma3) {
            (Some(v), Some(g)) if v.variance > 0.0 => Some(g / v.variance.powf(1.5)),
            _ => None,
        };
        Ok(Self {
            vwap: p_n[0],
            p_n,
            variance: vol.map(|v| v.variance),
            negative_variance: vol.is_some_and(|v| v.negative),
            gamma3,
            skew_normalized,
        })
    }

    /// `p(n)`, 1-based.
    pub fn moment(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.p_n.get(i).copied())
    }

    pub fn max_order(&self) -> usize {
        self.p_n.len()
    }
}

/// A distinct observed level and the number of trades at it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelCount {
    pub level: f64,
    pub count: usize,
}

/// Frequency-based price moments and the value/volume frequency tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyMoments {
    /// `pi(n)` for `n = 1..=n_max` (entry `n - 1`).
    pub pi_n: Vec<f64>,
    /// `pi(2) - pi(1)^2`, accumulated around the mean so it never goes negative.
    pub variance_freq: f64,
    pub value_hist: Option<Vec<LevelCount>>,
    pub volume_hist: Option<Vec<LevelCount>>,
}

/// Rounds to 12 significant digits and returns an exact integer key for the
/// rounded level plus the level itself.
fn level_key(x: f64) -> ((i32, i64), f64) {
    if x == 0.0 {
        return ((0, 0), 0.0);
    }
    let mut exp = x.abs().log10().floor() as i32;
    let mut mantissa = (x * 10f64.powi(11 - exp)).round();
    if mantissa.abs() >= 1e12 {
        exp += 1;
        mantissa = (x * 10f64.powi(11 - exp)).round();
    }
    let level = mantissa / 10f64.powi(11 - exp);
    ((exp, mantissa as i64), level)
}

/// Frequency table of levels rounded to 12 significant digits, ascending.
pub fn level_histogram<I: IntoIterator<Item = f64>>(values: I) -> Vec<LevelCount> {
    let mut keyed: Vec<((i32, i64), f64)> = values.into_iter().map(level_key).collect();
    keyed.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<LevelCount> = Vec::new();
    let mut last_key = None;
    for (key, level) in keyed {
        if last_key == Some(key) {
            out.last_mut().unwrap().count += 1;
        } else {
            out.push(LevelCount { level, count: 1 });
            last_key = Some(key);
        }
    }
    out
}

fn frequency_from_sums(ticks: &[TradeTick], price_sums: &[CompensatedSum], histograms: bool) -> FrequencyMoments {
    let n = ticks.len() as f64;
    let pi_n: Vec<f64> = price_sums.iter().map(|s| s.value() / n).collect();
    let mean = pi_n[0];
    let variance_freq = ticks
        .iter()
        .map(|t| (t.price - mean) * (t.price - mean))
        .sum::<CompensatedSum>()
        .value()
        / n;
    let (value_hist, volume_hist) = if histograms {
        (
            Some(level_histogram(ticks.iter().map(|t| t.value))),
            Some(level_histogram(ticks.iter().map(|t| t.volume))),
        )
    } else {
        (None, None)
    };
    FrequencyMoments {
        pi_n,
        variance_freq,
        value_hist,
        volume_hist,
    }
}

/// Frequency-based moments up to `n_max`, with frequency tables.
pub fn frequency_moments(window: &Window<'_>, n_max: usize) -> Result<FrequencyMoments, MomentError> {
    if window.is_empty() {
        return Err(MomentError::EmptyWindow);
    }
    if n_max == 0 {
        return Err(MomentError::OrderOutOfRange { n: 0, n_max });
    }
    let sums = power_sums(window.ticks, n_max, true);
    Ok(frequency_from_sums(window.ticks, &sums.price, true))
}

/// Market and frequency moments of one window side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub index: i64,
    pub center: f64,
    pub count: usize,
    pub aggregates: WindowAggregates,
    pub market: MarketMoments,
    pub frequency: FrequencyMoments,
    /// `|p(n) - pi(n)| / |pi(n)|` for `n = 1..=n_max`.
    pub gaps: Vec<f64>,
}

/// Flat per-window record as written into run reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub window: i64,
    pub center: f64,
    pub n: usize,
    pub p_n: Vec<f64>,
    pub pi_n: Vec<f64>,
    pub variance: Option<f64>,
    pub negative_variance: bool,
    pub variance_freq: f64,
    pub a3: Option<f64>,
    pub gaps: Vec<f64>,
}

impl MomentReport {
    pub fn record(&self) -> WindowRecord {
        WindowRecord {
            window: self.index,
            center: self.center,
            n: self.count,
            p_n: self.market.p_n.clone(),
            pi_n: self.frequency.pi_n.clone(),
            variance: self.market.variance,
            negative_variance: self.market.negative_variance,
            variance_freq: self.frequency.variance_freq,
            a3: self.market.gamma3,
            gaps: self.gaps.clone(),
        }
    }
}

/// Both moment families over one window, including frequency tables.
pub fn moment_report(window: &Window<'_>, n_max: usize) -> Result<MomentReport, MomentError> {
    moment_report_with(window, n_max, true)
}

/// [`moment_report`] with the frequency tables optional; all sums share a
/// single pass over the ticks.
pub fn moment_report_with(window: &Window<'_>, n_max: usize, histograms: bool) -> Result<MomentReport, MomentError> {
    if window.is_empty() {
        return Err(MomentError::EmptyWindow);
    }
    if n_max == 0 {
        return Err(MomentError::OrderOutOfRange { n: 0, n_max });
    }
    let sums = power_sums(window.ticks, n_max, true);
    let aggregates = WindowAggregates {
        n_max,
        count: window.len(),
        value_sums: sums.value.iter().map(CompensatedSum::value).collect(),
        volume_sums: sums.volume.iter().map(CompensatedSum::value).collect(),
    };
    let market = MarketMoments::from_aggregates(&aggregates)?;
    let frequency = frequency_from_sums(window.ticks, &sums.price, histograms);
    let gaps = market
        .p_n
        .iter()
        .zip(&frequency.pi_n)
        .map(|(p, pi)| (p - pi).abs() / pi.abs())
        .collect();
    Ok(MomentReport {
        index: window.index,
        center: window.center,
        count: window.len(),
        aggregates,
        market,
        frequency,
        gaps,
    })
}
