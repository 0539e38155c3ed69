//! Exponential-polynomial approximations of the price characteristic
//! function and the probability measures they generate.
//!
//! The order-`k` approximation is
//! `F_k(x) = exp(sum_{m=1..k} (i^m / m!) a_m x^m)`, so the coefficients are
//! the first `k` cumulants of the price: `a_1 = p(1)`, `a_2 = sigma^2(p)` and
//! `a_3` the third central moment. `k = 1` is a point mass at the VWAP,
//! `k = 2` a Gaussian, and `k = 3` a signed quasi-density obtained only by
//! numerical inversion.
//!
//! Fourier convention: `F(x) = int eta(p) e^{ixp} dp` and
//! `eta(p) = (1/2pi) int F(x) e^{-ixp} dx`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::market_moments::MarketMoments;

pub const MAX_ORDER: usize = 3;

/// Densities below this on a `k = 3` grid mark it as not a true density.
pub const NEGATIVE_DENSITY_THRESHOLD: f64 = -1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("price variance must be positive for order {k}, got {variance}")]
    NonPositiveVariance { k: usize, variance: f64 },
    #[error("order {k} needs moments up to {k}, only {available} available")]
    InsufficientMoments { k: usize, available: usize },
    #[error("approximation order must be 1, 2 or 3, got {0}")]
    UnsupportedOrder(usize),
    #[error("this operation needs order {expected}, got {got}")]
    WrongOrder { expected: &'static str, got: usize },
    #[error("grid spacing {spacing} cannot resolve frequencies up to {freq_limit}")]
    GridTooCoarse { spacing: f64, freq_limit: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Order-`k` characteristic-function approximation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharFuncApprox {
    coefficients: Vec<f64>,
}

impl CharFuncApprox {
    /// Builds an approximation from `a_1..a_k` directly.
    pub fn new(coefficients: Vec<f64>) -> Result<Self, MeasureError> {
        let k = coefficients.len();
        if k == 0 || k > MAX_ORDER {
            return Err(MeasureError::UnsupportedOrder(k));
        }
        if k >= 2 && !(coefficients[1] > 0.0) {
            return Err(MeasureError::NonPositiveVariance {
                k,
                variance: coefficients[1],
            });
        }
        Ok(Self { coefficients })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn mean(&self) -> f64 {
        self.coefficients[0]
    }

    /// `a_2` for `k >= 2`.
    pub fn variance(&self) -> Option<f64> {
        self.coefficients.get(1).copied()
    }

    /// Evaluates `F_k(x)`.
    pub fn eval(&self, x: f64) -> Complex64 {
        let a = &self.coefficients;
        // i^m / m! for m = 1, 2, 3
        let mut exponent = Complex64::new(0.0, a[0] * x);
        if let Some(&a2) = a.get(1) {
            exponent.re -= 0.5 * a2 * x * x;
        }
        if let Some(&a3) = a.get(2) {
            exponent.im -= a3 * x * x * x / 6.0;
        }
        exponent.exp()
    }

    /// `n`-th raw moment implied by the approximation, from the cumulant
    /// recursion `mu_n = sum_{j=1..n} C(n-1, j-1) a_j mu_{n-j}` with
    /// `a_j = 0` for `j > k`.
    pub fn moment(&self, n: usize) -> f64 {
        let mut mu = vec![1.0f64; n + 1];
        for m in 1..=n {
            let mut acc = 0.0;
            let mut binom = 1.0; // C(m-1, j-1)
            for j in 1..=m.min(self.order()) {
                acc += binom * self.coefficients[j - 1] * mu[m - j];
                binom = binom * (m - j) as f64 / j as f64;
            }
            mu[m] = acc;
        }
        mu[n]
    }
}

/// Fits `F_k` so that its first `k` moments equal the source `p(1..k)`.
pub fn fit_coefficients(moments: &MarketMoments, k: usize) -> Result<CharFuncApprox, MeasureError> {
    if k == 0 || k > MAX_ORDER {
        return Err(MeasureError::UnsupportedOrder(k));
    }
    if moments.max_order() < k {
        return Err(MeasureError::InsufficientMoments {
            k,
            available: moments.max_order(),
        });
    }
    let p1 = moments.p_n[0];
    let mut a = vec![p1];
    if k >= 2 {
        let variance = moments.p_n[1] - p1 * p1;
        if !(variance > 0.0) {
            return Err(MeasureError::NonPositiveVariance { k, variance });
        }
        a.push(variance);
        if k == 3 {
            a.push(moments.p_n[2] - 3.0 * p1 * variance - p1 * p1 * p1);
        }
    }
    CharFuncApprox::new(a)
}

/// `F_k(x)`.
pub fn charfunc_eval(approx: &CharFuncApprox, x: f64) -> Complex64 {
    approx.eval(x)
}

/// `p_k(n) = i^{-n} d^n F_k / dx^n` at zero, computed analytically.
pub fn moment_from_charfunc(approx: &CharFuncApprox, n: usize) -> f64 {
    approx.moment(n)
}

/// Gaussian density generated by an order-2 approximation.
pub fn gaussian_density(approx: &CharFuncApprox, p: f64) -> Result<f64, MeasureError> {
    if approx.order() != 2 {
        return Err(MeasureError::WrongOrder {
            expected: "2",
            got: approx.order(),
        });
    }
    let variance = approx.coefficients[1];
    let d = p - approx.coefficients[0];
    Ok((-d * d / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt())
}

/// Unit point mass; the order-1 measure has no density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
    pub singular: bool,
}

impl Atom {
    pub fn moment(&self, n: usize) -> f64 {
        self.mass * self.location.powi(n as i32)
    }
}

/// The order-1 measure, a unit mass at `a_1`.
pub fn delta_measure(approx: &CharFuncApprox) -> Result<Atom, MeasureError> {
    if approx.order() != 1 {
        return Err(MeasureError::WrongOrder {
            expected: "1",
            got: approx.order(),
        });
    }
    Ok(Atom {
        location: approx.coefficients[0],
        mass: 1.0,
        singular: true,
    })
}

/// Layout of a density grid, in units of the approximation's `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub points: usize,
    /// Grid covers `a_1 +- half_width_sigmas * sigma`.
    pub half_width_sigmas: f64,
    /// Inversion integrates over `|x| <= freq_limit_sigmas / sigma`.
    pub freq_limit_sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 4096,
            half_width_sigmas: 8.0,
            freq_limit_sigmas: 12.0,
        }
    }
}

impl GridSpec {
    pub fn with_points(points: usize) -> Self {
        Self {
            points,
            ..Self::default()
        }
    }
}

/// Density (or signed quasi-density) sampled on a uniform price grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureGrid {
    pub order: usize,
    pub prices: Vec<f64>,
    pub densities: Vec<f64>,
    pub spacing: f64,
    /// `sum eta_j * h`.
    pub normalization: f64,
    /// Set when some density falls below [`NEGATIVE_DENSITY_THRESHOLD`].
    pub has_negative: bool,
}

impl MeasureGrid {
    /// `n`-th raw moment by grid quadrature, `sum eta_j p_j^n h`.
    pub fn moment(&self, n: usize) -> f64 {
        self.prices
            .iter()
            .zip(&self.densities)
            .map(|(p, eta)| eta * p.powi(n as i32))
            .sum::<f64>()
            * self.spacing
    }

    /// Central moment of order `n` about `center`.
    pub fn central_moment(&self, n: usize, center: f64) -> f64 {
        self.prices
            .iter()
            .zip(&self.densities)
            .map(|(p, eta)| eta * (p - center).powi(n as i32))
            .sum::<f64>()
            * self.spacing
    }

    /// Index of the largest density.
    pub fn argmax(&self) -> usize {
        self.densities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Plot-ready `p,eta` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.prices.len() * 40 + 6);
        out.push_str("p,eta\n");
        for (p, eta) in self.prices.iter().zip(&self.densities) {
            let _ = writeln!(out, "{p},{eta}");
        }
        out
    }
}

/// Inverts `F_k` (`k` in {2, 3}) numerically onto a uniform price grid.
///
/// The frequency integral uses the trapezoidal rule on `[0, X]` with
/// `F(-x) = conj F(x)`. Its node spacing is chosen so the periodic images
/// the rule introduces lie at least four grid spans away.
pub fn invert_charfunc_numeric(approx: &CharFuncApprox, spec: &GridSpec) -> Result<MeasureGrid, MeasureError> {
    let k = approx.order();
    if k < 2 {
        return Err(MeasureError::WrongOrder {
            expected: "2 or 3",
            got: k,
        });
    }
    if spec.points < 2 || !(spec.half_width_sigmas > 0.0) || !(spec.freq_limit_sigmas > 0.0) {
        return Err(MeasureError::InvalidGrid(format!("{spec:?}")));
    }
    let variance = approx.coefficients[1];
    if !(variance > 0.0) {
        return Err(MeasureError::NonPositiveVariance { k, variance });
    }
    let sigma = variance.sqrt();
    let mean = approx.coefficients[0];
    let lo = mean - spec.half_width_sigmas * sigma;
    let span = 2.0 * spec.half_width_sigmas * sigma;
    let spacing = span / (spec.points - 1) as f64;
    let freq_limit = spec.freq_limit_sigmas / sigma;
    if PI / spacing < freq_limit {
        return Err(MeasureError::GridTooCoarse { spacing, freq_limit });
    }

    let period = 4.0 * span;
    let nodes = (freq_limit * period / (2.0 * PI)).ceil() as usize;
    let dx = freq_limit / nodes as f64;
    // trapezoid weights on [0, X], doubled for the mirrored half
    let samples: Vec<(f64, Complex64)> = (0..=nodes)
        .map(|m| {
            let x = m as f64 * dx;
            let w = if m == 0 || m == nodes { 0.5 } else { 1.0 };
            (x, approx.eval(x) * w)
        })
        .collect();

    let prices: Vec<f64> = (0..spec.points).map(|j| lo + j as f64 * spacing).collect();
    let densities: Vec<f64> = prices
        .iter()
        .map(|&p| {
            let re: f64 = samples
                .iter()
                .map(|&(x, f)| (f * Complex64::from_polar(1.0, -x * p)).re)
                .sum();
            re * dx / PI
        })
        .collect();
    let normalization = densities.iter().sum::<f64>() * spacing;
    let has_negative = densities.iter().any(|&d| d < NEGATIVE_DENSITY_THRESHOLD);
    Ok(MeasureGrid {
        order: k,
        prices,
        densities,
        spacing,
        normalization,
        has_negative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn moments(p: &[f64]) -> MarketMoments {
        let variance = if p.len() >= 2 { Some(p[1] - p[0] * p[0]) } else { None };
        MarketMoments {
            p_n: p.to_vec(),
            vwap: p[0],
            variance,
            negative_variance: variance.is_some_and(|v| v < 0.0),
            gamma3: None,
            skew_normalized: None,
        }
    }

    #[test]
    fn fit_reads_off_mean_and_variance() {
        let a = fit_coefficients(&moments(&[3.0, 10.0]), 2).unwrap();
        assert_eq!(a.coefficients(), &[3.0, 1.0]);
    }

    #[test]
    fn fit_third_order() {
        // unit volumes at prices {1, 1, 4}
        let a = fit_coefficients(&moments(&[2.0, 6.0, 22.0]), 3).unwrap();
        assert_eq!(a.coefficients(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn fit_rejects_negative_variance() {
        let p1 = 20.0 / 11.0;
        let m = moments(&[p1, 200.0 / 101.0]);
        match fit_coefficients(&m, 2) {
            Err(MeasureError::NonPositiveVariance { variance, .. }) => assert!((variance + 1.326).abs() < 1e-3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_coefficients(&m, 1).is_ok());
        assert_eq!(
            fit_coefficients(&m, 3),
            Err(MeasureError::InsufficientMoments { k: 3, available: 2 })
        );
        assert_eq!(fit_coefficients(&m, 4), Err(MeasureError::UnsupportedOrder(4)));
    }

    #[test]
    fn charfunc_values() {
        let g = CharFuncApprox::new(vec![3.0, 1.0]).unwrap();
        assert_eq!(g.eval(0.0), Complex64::new(1.0, 0.0));
        let f = g.eval(1.0);
        assert!((f.re + 0.60046).abs() < 1e-5);
        assert!((f.im - 0.08559).abs() < 1e-5);
        let d = CharFuncApprox::new(vec![3.0]).unwrap();
        let f = d.eval(PI / 3.0);
        assert!((f.re + 1.0).abs() < 1e-15 && f.im.abs() < 1e-15);
    }

    #[test]
    fn analytic_moments() {
        let g = CharFuncApprox::new(vec![3.0, 1.0]).unwrap();
        assert_eq!(g.moment(1), 3.0);
        assert_eq!(g.moment(2), 10.0);
        // Gaussian third moment mu^3 + 3 mu sigma^2
        assert_eq!(g.moment(3), 36.0);
        let s = CharFuncApprox::new(vec![2.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.moment(3), 22.0);
        assert_eq!(s.moment(0), 1.0);
    }

    #[test]
    fn gaussian_values() {
        let g = CharFuncApprox::new(vec![3.0, 1.0]).unwrap();
        assert_relative_eq!(gaussian_density(&g, 3.0).unwrap(), 0.398_942_280_401_432_7, max_relative = 1e-12);
        assert!((gaussian_density(&g, 4.0).unwrap() - 0.241971).abs() < 1e-6);
        for d in [0.1, 0.7, 2.5] {
            assert_eq!(gaussian_density(&g, 3.0 + d).unwrap(), gaussian_density(&g, 3.0 - d).unwrap());
        }
        let s = CharFuncApprox::new(vec![2.0, 2.0, 2.0]).unwrap();
        assert!(matches!(gaussian_density(&s, 1.0), Err(MeasureError::WrongOrder { .. })));
    }

    #[test]
    fn delta_atoms() {
        let a = CharFuncApprox::new(vec![3.0]).unwrap();
        let atom = delta_measure(&a).unwrap();
        assert_eq!(atom, Atom { location: 3.0, mass: 1.0, singular: true });
        assert_eq!(atom.moment(4), 81.0);
        assert_eq!(delta_measure(&CharFuncApprox::new(vec![3.0]).unwrap()).unwrap(), atom);
        assert!(delta_measure(&CharFuncApprox::new(vec![3.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn gaussian_inversion_matches_closed_form() {
        let g = CharFuncApprox::new(vec![3.0, 1.0]).unwrap();
        let grid = invert_charfunc_numeric(&g, &GridSpec::default()).unwrap();
        assert_eq!(grid.prices.len(), 4096);
        assert!((grid.prices[0] - (-5.0)).abs() < 1e-12);
        for (p, eta) in grid.prices.iter().zip(&grid.densities) {
            assert!((eta - gaussian_density(&g, *p).unwrap()).abs() < 1e-6);
            assert!(*eta >= 0.0 || eta.abs() < 1e-15);
        }
        assert!((grid.normalization - 1.0).abs() < 1e-8);
        assert_relative_eq!(grid.moment(1), 3.0, max_relative = 1e-6);
        assert_relative_eq!(grid.central_moment(2, 3.0), 1.0, max_relative = 1e-6);
    }

    #[test]
    fn zero_cubic_term_equals_gaussian() {
        let spec = GridSpec::with_points(512);
        let a = invert_charfunc_numeric(&CharFuncApprox::new(vec![2.0, 2.0, 0.0]).unwrap(), &spec).unwrap();
        let b = invert_charfunc_numeric(&CharFuncApprox::new(vec![2.0, 2.0]).unwrap(), &spec).unwrap();
        assert_eq!(a.prices, b.prices);
        assert_eq!(a.densities, b.densities);
    }

    #[test]
    fn cubic_inversion_reproduces_moments() {
        let s = CharFuncApprox::new(vec![2.0, 2.0, 2.0]).unwrap();
        let grid = invert_charfunc_numeric(&s, &GridSpec::default()).unwrap();
        assert_eq!(grid.order, 3);
        for (n, expected) in [(1, 2.0), (2, 6.0), (3, 22.0)] {
            assert_relative_eq!(grid.moment(n), expected, max_relative = 1e-4);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = CharFuncApprox::new(vec![3.0, 1.0]).unwrap();
        assert!(matches!(
            invert_charfunc_numeric(&g, &GridSpec::with_points(16)),
            Err(MeasureError::GridTooCoarse { .. })
        ));
        assert!(invert_charfunc_numeric(&CharFuncApprox::new(vec![3.0]).unwrap(), &GridSpec::default()).is_err());
    }

    #[test]
    fn csv_export() {
        let g = CharFuncApprox::new(vec![0.0, 1.0]).unwrap();
        let grid = invert_charfunc_numeric(&g, &GridSpec::with_points(128)).unwrap();
        let csv = grid.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("p,eta"));
        assert_eq!(lines.count(), 128);
    }

    /// Fourth-order central differences of `F` at zero, converted to moments.
    fn fd_moment(a: &CharFuncApprox, n: usize, h: f64) -> f64 {
        let f = |m: f64| a.eval(m * h);
        let d = match n {
            1 => (f(-2.0) - f(2.0) * 1.0 + (f(1.0) - f(-1.0)) * 8.0) / (12.0 * h),
            2 => (-f(2.0) + f(1.0) * 16.0 - f(0.0) * 30.0 + f(-1.0) * 16.0 - f(-2.0)) / (12.0 * h * h),
            _ => unreachable!(),
        };
        (d / Complex64::i().powi(n as i32)).re
    }

    proptest! {
        #[test]
        fn conjugate_symmetry_and_bound(a1 in -50.0f64..50.0, a2 in 0.01f64..10.0, a3 in -5.0f64..5.0, x in -20.0f64..20.0) {
            for approx in [CharFuncApprox::new(vec![a1]).unwrap(), CharFuncApprox::new(vec![a1, a2]).unwrap()] {
                prop_assert!(approx.eval(x).norm() <= 1.0 + 1e-15);
            }
            let s = CharFuncApprox::new(vec![a1, a2, a3]).unwrap();
            let (f, g) = (s.eval(x), s.eval(-x));
            prop_assert!((f - g.conj()).norm() <= 1e-12);
        }

        #[test]
        fn finite_differences_agree(a1 in 1.0f64..20.0, a2 in 0.1f64..4.0) {
            let g = CharFuncApprox::new(vec![a1, a2]).unwrap();
            let h = 1e-3 / a1;
            prop_assert!((fd_moment(&g, 1, h) - a1).abs() <= 1e-6 * a1);
            let p2 = a2 + a1 * a1;
            prop_assert!((fd_moment(&g, 2, h) - p2).abs() <= 1e-6 * p2);
        }

        #[test]
        fn shift_moves_density(a1 in -5.0f64..5.0, a2 in 0.2f64..3.0, s in -10.0f64..10.0) {
            let spec = GridSpec::with_points(257);
            let a = invert_charfunc_numeric(&CharFuncApprox::new(vec![a1, a2]).unwrap(), &spec).unwrap();
            let b = invert_charfunc_numeric(&CharFuncApprox::new(vec![a1 + s, a2]).unwrap(), &spec).unwrap();
            prop_assert_eq!(a.argmax(), b.argmax());
            for j in 0..a.prices.len() {
                prop_assert!((b.prices[j] - a.prices[j] - s).abs() <= 1e-9 * (1.0 + a.prices[j].abs()));
                prop_assert!((a.densities[j] - b.densities[j]).abs() <= 1e-9);
            }
        }
    }
}
