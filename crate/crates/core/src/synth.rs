//! Seeded synthetic tick streams.
//!
//! Streams are reproducible bit for bit from the seed. Inter-trade times are
//! exponential with the configured mean spacing; prices and volumes are
//! drawn from the configured processes, optionally rank-coupled, and every
//! emitted number is rounded to 12 significant digits.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trade_model::TradeTick;

pub const EMITTED_DIGITS: i32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriceProcess {
    Constant { price: f64 },
    /// `p_{i+1} = p_i exp(s z - s^2 / 2)` with standard normal `z`.
    RandomWalk { start: f64, step_vol: f64 },
    /// Square wave alternating between `base (1 + amplitude)` and
    /// `base (1 - amplitude)`, each held for half of `period` seconds.
    RegimeStep { base: f64, amplitude: f64, period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolumeDist {
    /// Every volume exactly 1.
    Const1,
    /// Uniform over the listed levels.
    Uniform { levels: Vec<f64> },
    /// Pareto with unit scale and the given tail shape.
    Pareto { shape: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_ticks: usize,
    pub tick_spacing: f64,
    pub price_process: PriceProcess,
    pub volume_dist: VolumeDist,
    /// Rank coupling in `[-1, 1]`.
    pub coupling: f64,
}

impl SynthConfig {
    /// Constant-volume random walk starting at 100.
    pub fn unit_volume_walk(seed: u64, n_ticks: usize, step_vol: f64) -> Self {
        Self {
            seed,
            n_ticks,
            tick_spacing: 1.0,
            price_process: PriceProcess::RandomWalk { start: 100.0, step_vol },
            volume_dist: VolumeDist::Const1,
            coupling: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_ticks == 0 {
            return Err(invalid("n_ticks must be at least 1"));
        }
        if !(self.tick_spacing > 0.0 && self.tick_spacing.is_finite()) {
            return Err(invalid(format!("tick spacing must be positive, got {}", self.tick_spacing)));
        }
        if !(-1.0..=1.0).contains(&self.coupling) {
            return Err(invalid(format!("coupling must lie in [-1, 1], got {}", self.coupling)));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        match self.price_process {
            PriceProcess::Constant { price } => positive("price", price)?,
            PriceProcess::RandomWalk { start, step_vol } => {
                positive("start price", start)?;
                if !(step_vol >= 0.0 && step_vol.is_finite()) {
                    return Err(invalid(format!("step volatility must be non-negative, got {step_vol}")));
                }
            }
            PriceProcess::RegimeStep { base, amplitude, period } => {
                positive("base price", base)?;
                positive("period", period)?;
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(invalid(format!("amplitude must lie in [0, 1), got {amplitude}")));
                }
            }
        }
        match &self.volume_dist {
            VolumeDist::Const1 => {}
            VolumeDist::Uniform { levels } => {
                if levels.is_empty() {
                    return Err(invalid("uniform volume needs at least one level"));
                }
                for &l in levels {
                    positive("volume level", l)?;
                }
            }
            VolumeDist::Pareto { shape } => positive("pareto shape", *shape)?,
        }
        Ok(())
    }
}

/// Rounds to `digits` significant decimal digits.
pub fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mut exponent = x.abs().log10().floor() as i32;
    // log10 can land one off near exact powers of ten
    if 10f64.powi(exponent) > x.abs() {
        exponent -= 1;
    } else if 10f64.powi(exponent + 1) <= x.abs() {
        exponent += 1;
    }
    let shift = digits - 1 - exponent;
    if (0..=22).contains(&shift) {
        let scale = POW10[shift as usize];
        (x * scale).round() / scale
    } else if (-22..0).contains(&shift) {
        let scale = POW10[(-shift) as usize];
        (x / scale).round() * scale
    } else {
        format!("{:.*e}", (digits - 1) as usize, x).parse().unwrap_or(x)
    }
}

const POW10: [f64; 23] = [
    1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15, 1e16, 1e17, 1e18, 1e19, 1e20,
    1e21, 1e22,
];

fn emit(x: f64) -> f64 {
    round_significant(x, EMITTED_DIGITS)
}

/// Generates the tick stream for `config`.
pub fn generate(config: &SynthConfig) -> Result<Vec<TradeTick>, SynthError> {
    config.validate()?;
    let n = config.n_ticks;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gaps = Exp::new(1.0 / config.tick_spacing).map_err(|e| invalid(e.to_string()))?;

    let mut times = Vec::with_capacity(n);
    let mut t = 0.0;
    for _ in 0..n {
        t += gaps.sample(&mut rng);
        times.push(emit(t));
    }

    let prices: Vec<f64> = match config.price_process {
        PriceProcess::Constant { price } => vec![emit(price); n],
        PriceProcess::RandomWalk { start, step_vol } => {
            let drift = -0.5 * step_vol * step_vol;
            let mut p = start;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(emit(p));
                let z: f64 = StandardNormal.sample(&mut rng);
                p *= (step_vol * z + drift).exp();
            }
            out
        }
        PriceProcess::RegimeStep { base, amplitude, period } => {
            let high = emit(base * (1.0 + amplitude));
            let low = emit(base * (1.0 - amplitude));
            times
                .iter()
                .map(|&t| if (t / (0.5 * period)).floor() as i64 % 2 == 0 { high } else { low })
                .collect()
        }
    };

    let mut volumes: Vec<f64> = match &config.volume_dist {
        VolumeDist::Const1 => vec![1.0; n],
        VolumeDist::Uniform { levels } => {
            let levels: Vec<f64> = levels.iter().map(|&l| emit(l)).collect();
            (0..n).map(|_| levels[rng.random_range(0..levels.len())]).collect()
        }
        VolumeDist::Pareto { shape } => {
            let dist = Pareto::new(1.0, *shape).map_err(|e| invalid(e.to_string()))?;
            (0..n).map(|_| emit(dist.sample(&mut rng))).collect()
        }
    };

    if config.coupling != 0.0 {
        rank_couple(&prices, &mut volumes, config.coupling, &mut rng);
    }

    Ok(times
        .into_iter()
        .zip(prices)
        .zip(volumes)
        .map(|((t, p), v)| TradeTick::new(t, p, v))
        .collect())
}

/// Reorders a random subset of the volumes so their ranks follow the price
/// ranks (or their reverse for negative coupling).
///
/// Each tick joins the subset with probability `|coupling|`. The multiset of
/// volumes is unchanged.
fn rank_couple(prices: &[f64], volumes: &mut [f64], coupling: f64, rng: &mut ChaCha8Rng) {
    let strength = coupling.abs();
    let mut chosen: Vec<usize> = (0..prices.len()).filter(|_| rng.random::<f64>() < strength).collect();
    if chosen.len() < 2 {
        return;
    }
    let mut pool: Vec<f64> = chosen.iter().map(|&i| volumes[i]).collect();
    pool.sort_by(f64::total_cmp);
    if coupling < 0.0 {
        pool.reverse();
    }
    // ties in price are broken at random rather than by time
    chosen.shuffle(rng);
    chosen.sort_by(|&a, &b| prices[a].total_cmp(&prices[b]));
    for (&i, v) in chosen.iter().zip(pool) {
        volumes[i] = v;
    }
}

fn parse_f64(field: &str, what: &str) -> Result<f64, SynthError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| invalid(format!("bad {what} '{field}'")))
}

impl FromStr for PriceProcess {
    type Err = SynthError;

    /// `const:P`, `walk:START:VOL` or `step:BASE:AMPLITUDE:PERIOD`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["const", p] => Ok(Self::Constant { price: parse_f64(p, "price")? }),
            ["walk", start, vol] => Ok(Self::RandomWalk {
                start: parse_f64(start, "start price")?,
                step_vol: parse_f64(vol, "step volatility")?,
            }),
            ["step", base, amp, period] => Ok(Self::RegimeStep {
                base: parse_f64(base, "base price")?,
                amplitude: parse_f64(amp, "amplitude")?,
                period: parse_f64(period, "period")?,
            }),
            _ => Err(invalid(format!(
                "unknown price spec '{s}' (expected const:P, walk:START:VOL or step:BASE:AMP:PERIOD)"
            ))),
        }
    }
}

impl FromStr for VolumeDist {
    type Err = SynthError;

    /// `const1`, `uniform:L1,L2,...` or `pareto:SHAPE`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "const1" {
            return Ok(Self::Const1);
        }
        if let Some(levels) = s.strip_prefix("uniform:") {
            let levels = levels
                .split(',')
                .map(|l| parse_f64(l, "volume level"))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(Self::Uniform { levels });
        }
        if let Some(shape) = s.strip_prefix("pareto:") {
            return Ok(Self::Pareto { shape: parse_f64(shape, "pareto shape")? });
        }
        Err(invalid(format!(
            "unknown volume spec '{s}' (expected const1, uniform:L1,L2,... or pareto:SHAPE)"
        )))
    }
}

impl fmt::Display for PriceProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { price } => write!(f, "const:{price}"),
            Self::RandomWalk { start, step_vol } => write!(f, "walk:{start}:{step_vol}"),
            Self::RegimeStep { base, amplitude, period } => write!(f, "step:{base}:{amplitude}:{period}"),
        }
    }
}

impl fmt::Display for VolumeDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const1 => write!(f, "const1"),
            Self::Uniform { levels } => {
                let joined: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
                write!(f, "uniform:{}", joined.join(","))
            }
            Self::Pareto { shape } => write!(f, "pareto:{shape}"),
        }
    }
}

/// Mean absolute change between consecutive non-empty window VWAPs.
pub fn lag1_dispersion(vwaps: &[f64]) -> f64 {
    if vwaps.len() < 2 {
        return 0.0;
    }
    vwaps.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (vwaps.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_moments::{aggregate, frequency_moment, market_price_moment, market_volatility};
    use crate::trade_model::{partition, WindowSpec};
    use proptest::prelude::*;

    fn config(price: &str, volume: &str, coupling: f64) -> SynthConfig {
        SynthConfig {
            seed: 7,
            n_ticks: 500,
            tick_spacing: 1.0,
            price_process: price.parse().unwrap(),
            volume_dist: volume.parse().unwrap(),
            coupling,
        }
    }

    #[test]
    fn constant_stream_moments() {
        let mut c = config("const:5", "const1", 0.0);
        c.n_ticks = 100;
        let ticks = generate(&c).unwrap();
        assert_eq!(ticks.len(), 100);
        let spec = WindowSpec::new(0.0, 10.0).unwrap();
        for w in partition(&ticks, &spec).unwrap().iter().filter(|w| !w.is_empty()) {
            let agg = aggregate(w, 4).unwrap();
            for n in 1..=4 {
                assert_eq!(market_price_moment(&agg, n).unwrap(), 5f64.powi(n as i32));
                assert_eq!(frequency_moment(w, n).unwrap(), 5f64.powi(n as i32));
            }
            assert_eq!(market_volatility(&agg).unwrap().variance, 0.0);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        for (price, volume, coupling) in [
            ("walk:100:0.01", "pareto:2.5", 0.7),
            ("step:50:0.1:30", "uniform:1,2,5", -0.4),
            ("const:3", "const1", 0.0),
        ] {
            let c = config(price, volume, coupling);
            let a = generate(&c).unwrap();
            let b = generate(&c).unwrap();
            assert_eq!(crate::trade_model::format_ticks(&a, false), crate::trade_model::format_ticks(&b, false));
        }
        let mut other = config("walk:100:0.01", "pareto:2.5", 0.7);
        let a = generate(&other).unwrap();
        other.seed += 1;
        assert_ne!(a, generate(&other).unwrap());
    }

    #[test]
    fn unit_volume_walk_matches_frequency_moments() {
        let ticks = generate(&SynthConfig::unit_volume_walk(3, 2000, 0.02)).unwrap();
        assert!(ticks.iter().all(|t| t.volume == 1.0));
        let spec = WindowSpec::new(0.0, 25.0).unwrap();
        for w in partition(&ticks, &spec).unwrap().iter().filter(|w| !w.is_empty()) {
            let agg = aggregate(w, 4).unwrap();
            for n in 1..=4 {
                let p = market_price_moment(&agg, n).unwrap();
                let pi = frequency_moment(w, n).unwrap();
                assert!((p - pi).abs() <= 1e-12 * pi.abs());
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = config("const:5", "const1", 0.0);
        c.n_ticks = 0;
        assert!(generate(&c).is_err());
        assert!(generate(&config("const:5", "const1", 1.5)).is_err());
        assert!(generate(&config("const:-1", "const1", 0.0)).is_err());
        assert!(generate(&config("step:10:1.2:5", "const1", 0.0)).is_err());
        assert!("walk:1".parse::<PriceProcess>().is_err());
        assert!("uniform:".parse::<VolumeDist>().is_err());
        assert!("lognormal:1".parse::<VolumeDist>().is_err());
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["const:5", "walk:100:0.01", "step:100:0.05:600"] {
            assert_eq!(s.parse::<PriceProcess>().unwrap().to_string(), s);
        }
        for s in ["const1", "uniform:1,2,5", "pareto:2.5"] {
            assert_eq!(s.parse::<VolumeDist>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn rounding_to_twelve_digits() {
        assert_eq!(round_significant(1.234567890123456, 12), 1.23456789012);
        assert_eq!(round_significant(98765.43210987654, 12), 98765.4321099);
        assert_eq!(round_significant(1e-30 * 3.0, 12), 3e-30);
        assert_eq!(round_significant(1000.0, 12), 1000.0);
        assert_eq!(round_significant(0.0, 12), 0.0);
    }

    fn window_vwaps(ticks: &[TradeTick], delta: f64) -> Vec<f64> {
        let spec = WindowSpec::new(0.0, delta).unwrap();
        partition(ticks, &spec)
            .unwrap()
            .iter()
            .filter(|w| !w.is_empty())
            .map(|w| market_price_moment(&aggregate(w, 1).unwrap(), 1).unwrap())
            .collect()
    }

    #[test]
    fn slow_disturbances_move_window_means_more() {
        let delta = 20.0;
        let stream = |period: f64| {
            let c = SynthConfig {
                seed: 11,
                n_ticks: 20_000,
                tick_spacing: 0.1,
                price_process: PriceProcess::RegimeStep { base: 100.0, amplitude: 0.05, period },
                volume_dist: "uniform:1,2,5".parse().unwrap(),
                coupling: 0.0,
            };
            generate(&c).unwrap()
        };
        let slow = window_vwaps(&stream(4.0 * delta), delta);
        let fast = window_vwaps(&stream(delta / 4.0), delta);
        assert!(slow.len() >= 100 && fast.len() >= 100);
        assert!(lag1_dispersion(&slow) > lag1_dispersion(&fast));
    }

    proptest! {
        #[test]
        fn coupling_preserves_volume_multiset(seed in any::<u64>(), coupling in -1.0f64..=1.0) {
            let base = SynthConfig {
                seed,
                n_ticks: 200,
                tick_spacing: 1.0,
                price_process: PriceProcess::RandomWalk { start: 10.0, step_vol: 0.05 },
                volume_dist: VolumeDist::Pareto { shape: 2.0 },
                coupling: 0.0,
            };
            let coupled = SynthConfig { coupling, ..base.clone() };
            let a = generate(&base).unwrap();
            let b = generate(&coupled).unwrap();
            let sorted = |ticks: &[TradeTick]| {
                let mut v: Vec<f64> = ticks.iter().map(|t| t.volume).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let prices = |ticks: &[TradeTick]| ticks.iter().map(|t| t.price).collect::<Vec<_>>();
            prop_assert_eq!(prices(&a), prices(&b));
            prop_assert_eq!(sorted(&a), sorted(&b));
        }

        #[test]
        fn generated_ticks_are_valid(seed in any::<u64>(), spacing in 0.01f64..10.0, vol in 0.0f64..0.1) {
            let c = SynthConfig {
                seed,
                n_ticks: 300,
                tick_spacing: spacing,
                price_process: PriceProcess::RandomWalk { start: 50.0, step_vol: vol },
                volume_dist: VolumeDist::Uniform { levels: vec![1.0, 3.0, 10.0] },
                coupling: 0.3,
            };
            let ticks = generate(&c).unwrap();
            prop_assert!(ticks.iter().all(TradeTick::is_valid));
            prop_assert!(ticks.windows(2).all(|w| w[0].t <= w[1].t));
            prop_assert!(ticks.iter().all(|t| round_significant(t.price, 12) == t.price));
        }
    }
}
