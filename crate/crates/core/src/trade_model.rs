//! Trade ticks, the tick CSV format and partitioning into averaging windows.
//!
//! A tick carries its time, price, volume and value, with the value tied to
//! the other two by `value = price * volume`. Windows of width `delta` are
//! centered on `origin + k * delta` and are half-open on the right, so a tick
//! sitting exactly on a boundary belongs to the later window.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance of the `value = price * volume` identity for ticks
/// built in memory.
pub const VALUE_IDENTITY_TOLERANCE: f64 = 1e-9;

/// Relative tolerance applied to a `value` column read from a file.
pub const VALUE_COLUMN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TickError {
    #[error("row {row}: malformed row: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: {field} must be positive, got {value}")]
    NonPositiveField {
        row: usize,
        field: &'static str,
        value: f64,
    },
    #[error("row {row}: value {value} deviates from price*volume = {expected}")]
    ValueMismatch { row: usize, value: f64, expected: f64 },
    #[error("row {row}: time {t} precedes previous time {previous}")]
    NonMonotoneTime { row: usize, t: f64, previous: f64 },
    #[error("window width must be finite and positive, got {0}")]
    InvalidDelta(f64),
}

/// One market trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeTick {
    /// Seconds.
    pub t: f64,
    pub price: f64,
    pub volume: f64,
    pub value: f64,
}

/// A single violated tick invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TickViolation {
    NonFinite,
    NonPositiveField,
    ValueMismatch,
}

impl TradeTick {
    /// Builds a tick with `value = price * volume`.
    pub fn new(t: f64, price: f64, volume: f64) -> Self {
        Self {
            t,
            price,
            volume,
            value: price * volume,
        }
    }

    /// Lists every violated invariant; an empty list means the tick is valid.
    pub fn validate(&self) -> Vec<TickViolation> {
        let mut out = Vec::new();
        let finite = [self.t, self.price, self.volume, self.value]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            out.push(TickViolation::NonFinite);
            return out;
        }
        if self.price <= 0.0 || self.volume <= 0.0 || self.value <= 0.0 {
            out.push(TickViolation::NonPositiveField);
        }
        if !value_matches(self.value, self.price * self.volume, VALUE_IDENTITY_TOLERANCE) {
            out.push(TickViolation::ValueMismatch);
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// Free-function form of [`TradeTick::validate`].
pub fn validate_tick(tick: &TradeTick) -> Vec<TickViolation> {
    tick.validate()
}

fn value_matches(value: f64, expected: f64, rel: f64) -> bool {
    let scale = value.abs().max(expected.abs());
    (value - expected).abs() <= rel * scale
}

fn parse_field(raw: &str, row: usize, name: &str) -> Result<f64, TickError> {
    let v: f64 = raw.trim().parse().map_err(|_| TickError::MalformedRow {
        row,
        reason: format!("{name} field {raw:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(TickError::MalformedRow {
            row,
            reason: format!("{name} field {raw:?} is not finite"),
        });
    }
    Ok(v)
}

/// Parses tick CSV content.
///
/// The first line must be `t,price,volume` or `t,price,volume,value`. Row
/// numbers in errors are 1-based and count the header as row 1.
pub fn parse_ticks(input: &str) -> Result<Vec<TradeTick>, TickError> {
    let input = input.strip_prefix('\u{feff}').unwrap_or(input);
    let mut lines = input.split('\n');
    let header = lines
        .next()
        .map(|h| h.trim_end_matches('\r').trim())
        .unwrap_or("");
    let has_value = match header {
        "t,price,volume" => false,
        "t,price,volume,value" => true,
        other => {
            return Err(TickError::MalformedRow {
                row: 1,
                reason: format!("unexpected header {other:?}"),
            })
        }
    };
    let columns = if has_value { 4 } else { 3 };

    let mut ticks = Vec::with_capacity(input.len() / 24);
    let mut previous_t = f64::NEG_INFINITY;
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = [""; 4];
        let mut count = 0;
        for part in line.split(',') {
            if count == columns {
                count += 1;
                break;
            }
            fields[count] = part;
            count += 1;
        }
        if count != columns {
            return Err(TickError::MalformedRow {
                row,
                reason: format!("expected {columns} columns"),
            });
        }
        let t = parse_field(fields[0], row, "t")?;
        let price = parse_field(fields[1], row, "price")?;
        let volume = parse_field(fields[2], row, "volume")?;
        if price <= 0.0 {
            return Err(TickError::NonPositiveField {
                row,
                field: "price",
                value: price,
            });
        }
        if volume <= 0.0 {
            return Err(TickError::NonPositiveField {
                row,
                field: "volume",
                value: volume,
            });
        }
        let expected = price * volume;
        let value = if has_value {
            let value = parse_field(fields[3], row, "value")?;
            if !value_matches(value, expected, VALUE_COLUMN_TOLERANCE) {
                return Err(TickError::ValueMismatch {
                    row,
                    value,
                    expected,
                });
            }
            value
        } else {
            expected
        };
        if t < previous_t {
            return Err(TickError::NonMonotoneTime {
                row,
                t,
                previous: previous_t,
            });
        }
        previous_t = t;
        ticks.push(TradeTick {
            t,
            price,
            volume,
            value,
        });
    }
    Ok(ticks)
}

/// Reads and parses a tick CSV file.
pub fn read_ticks(path: &Path) -> io::Result<Result<Vec<TradeTick>, TickError>> {
    let content = std::fs::read_to_string(path)?;
    Ok(parse_ticks(&content))
}

/// Serializes ticks in the tick CSV format, optionally with the value column.
///
/// Numbers are written in shortest round-trip form.
pub fn format_ticks(ticks: &[TradeTick], with_value: bool) -> String {
    let mut out = String::with_capacity(ticks.len() * 32 + 24);
    out.push_str(if with_value {
        "t,price,volume,value\n"
    } else {
        "t,price,volume\n"
    });
    for tick in ticks {
        if with_value {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                tick.t, tick.price, tick.volume, tick.value
            );
        } else {
            let _ = writeln!(out, "{},{},{}", tick.t, tick.price, tick.volume);
        }
    }
    out
}

/// Placement of the averaging windows on the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Center of window 0.
    pub origin: f64,
    /// Window width, seconds.
    pub delta: f64,
}

impl WindowSpec {
    pub fn new(origin: f64, delta: f64) -> Result<Self, TickError> {
        if !(delta.is_finite() && delta > 0.0) || !origin.is_finite() {
            return Err(TickError::InvalidDelta(delta));
        }
        Ok(Self { origin, delta })
    }

    /// Index of the window containing time `t`.
    #[inline]
    pub fn index_of(&self, t: f64) -> i64 {
        ((t - self.origin + 0.5 * self.delta) / self.delta).floor() as i64
    }

    pub fn center(&self, index: i64) -> f64 {
        self.origin + index as f64 * self.delta
    }

    /// `[start, end)` of window `index`.
    pub fn bounds(&self, index: i64) -> (f64, f64) {
        let c = self.center(index);
        (c - 0.5 * self.delta, c + 0.5 * self.delta)
    }
}

/// One averaging interval and the ticks that fall into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub index: i64,
    pub center: f64,
    pub ticks: &'a [TradeTick],
}

impl<'a> Window<'a> {
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }
}

/// Splits time-ordered ticks into consecutive windows.
///
/// Windows borrow contiguous slices of `ticks`. Empty windows between the
/// first and last occupied ones are included with no ticks.
pub fn partition<'a>(ticks: &'a [TradeTick], spec: &WindowSpec) -> Result<Vec<Window<'a>>, TickError> {
    if ticks.is_empty() {
        return Ok(Vec::new());
    }
    for (i, pair) in ticks.windows(2).enumerate() {
        if pair[1].t < pair[0].t {
            return Err(TickError::NonMonotoneTime {
                row: i + 2,
                t: pair[1].t,
                previous: pair[0].t,
            });
        }
    }
    let first = spec.index_of(ticks[0].t);
    let last = spec.index_of(ticks[ticks.len() - 1].t);
    let mut windows = Vec::with_capacity((last - first + 1) as usize);
    let mut start = 0;
    for index in first..=last {
        let mut end = start;
        while end < ticks.len() && spec.index_of(ticks[end].t) == index {
            end += 1;
        }
        windows.push(Window {
            index,
            center: spec.center(index),
            ticks: &ticks[start..end],
        });
        start = end;
    }
    debug_assert_eq!(start, ticks.len());
    Ok(windows)
}
