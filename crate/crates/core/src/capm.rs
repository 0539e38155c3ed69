//! Two-period consumption pricing under power utility, expanded in the
//! price and payoff fluctuations over the averaging interval.
//!
//! An investor with base consumptions `e_t`, `e_{t+1}` buys `xi` units at
//! price `p`, consuming `c_t = e_t - p xi` now and `c_{t+1} = e_{t+1} + x xi`
//! next period. Utility is `u(c) = c^{1-alpha} / (1 - alpha)`. The linearized
//! first-order condition in `xi`, with consumptions taken at the mean price
//! `p0` and mean payoff `x0`, reads
//!
//! ```text
//! u'(c_t0) p0 - xi u''(c_t0) var_p = beta u'(c_t1) x0 + beta xi u''(c_t1) var_x
//! ```
//!
//! Because `c_t0` and `c_t1` themselves depend on `xi`, the root is found by
//! damped fixed-point iteration. [`utility_oracle`] evaluates the exact
//! expected utility over a discrete payoff distribution and serves as the
//! reference for every expansion here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `|denominator|` below this at `xi = 0` is treated as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-14;
pub const FIXED_POINT_DAMPING: f64 = 0.5;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 200;
pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
/// Relative width of the small/high volatility boundary band.
pub const REGIME_BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapmError {
    #[error("consumption must be positive, got {0}")]
    NonPositiveConsumption(f64),
    #[error("alpha must lie in (0, 1] (and below 1 for utility values), got {0}")]
    AlphaOutOfRange(f64),
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("infeasible consumption at xi = {xi}: c_t = {c_t}, c_t1 = {c_t1}")]
    InfeasibleConsumption { xi: f64, c_t: f64, c_t1: f64 },
    #[error("degenerate denominator {0:e} in the first-order condition")]
    DegenerateDenominator(f64),
    #[error("fixed-point iteration did not converge after {iterations} iterations (last xi = {xi})")]
    NoConvergence { iterations: usize, xi: f64 },
    #[error("implied price {0} is not positive; xi lies outside the positivity bound")]
    NegativePrice(f64),
    #[error("discount factor {0} is not available for this variant")]
    MissingFactor(&'static str),
    #[error("discount factors violate m0 > 0, m1 < 0: m0 = {m0}, m1 = {m1}")]
    InvalidFactors { m0: f64, m1: f64 },
    #[error("payoff variance is zero")]
    ZeroVariance,
    #[error("payoff skewness {sk} does not exceed the lower limit {lower}")]
    SkewnessBelowBound { sk: f64, lower: f64 },
    #[error("m0 * R_f = {0} is not below 1")]
    RiskFreeInconsistent(f64),
    #[error("bad payoff distribution: {0}")]
    BadDistribution(String),
}

/// Power utility `u(c) = c^{1-alpha} / (1 - alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerUtility {
    alpha: f64,
}

/// `u` and its first three derivatives at one consumption level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityDerivs {
    /// `None` at `alpha = 1`, where the power form is singular.
    pub value: Option<f64>,
    pub first: f64,
    pub second: f64,
    pub third: f64,
}

impl PowerUtility {
    pub fn new(alpha: f64) -> Result<Self, CapmError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CapmError::AlphaOutOfRange(alpha));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn check(c: f64) -> Result<(), CapmError> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(CapmError::NonPositiveConsumption(c));
        }
        Ok(())
    }

    pub fn value(&self, c: f64) -> Result<f64, CapmError> {
        Self::check(c)?;
        if self.alpha >= 1.0 {
            return Err(CapmError::AlphaOutOfRange(self.alpha));
        }
        Ok(c.powf(1.0 - self.alpha) / (1.0 - self.alpha))
    }

    /// `u'(c) = c^{-alpha}`.
    pub fn first(&self, c: f64) -> Result<f64, CapmError> {
        Self::check(c)?;
        Ok(c.powf(-self.alpha))
    }

    /// `u''(c) = -alpha c^{-alpha-1}`.
    pub fn second(&self, c: f64) -> Result<f64, CapmError> {
        Self::check(c)?;
        Ok(-self.alpha * c.powf(-self.alpha - 1.0))
    }

    /// `u'''(c) = alpha (1 + alpha) c^{-alpha-2}`.
    pub fn third(&self, c: f64) -> Result<f64, CapmError> {
        Self::check(c)?;
        Ok(self.alpha * (1.0 + self.alpha) * c.powf(-self.alpha - 2.0))
    }

    pub fn derivs(&self, c: f64) -> Result<UtilityDerivs, CapmError> {
        Ok(UtilityDerivs {
            value: if self.alpha < 1.0 { Some(self.value(c)?) } else { None },
            first: self.first(c)?,
            second: self.second(c)?,
            third: self.third(c)?,
        })
    }
}

/// `(u, u', u'', u''')` at consumption `c`.
pub fn utility_derivs(c: f64, alpha: f64) -> Result<UtilityDerivs, CapmError> {
    PowerUtility::new(alpha)?.derivs(c)
}

/// Investor preferences and base consumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub alpha: f64,
    pub beta: f64,
    pub e_t: f64,
    pub e_t1: f64,
}

impl UtilityParams {
    pub fn new(alpha: f64, beta: f64, e_t: f64, e_t1: f64) -> Result<Self, CapmError> {
        let params = Self { alpha, beta, e_t, e_t1 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), CapmError> {
        PowerUtility::new(self.alpha)?;
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(CapmError::InvalidParameter { name: "beta", value: self.beta });
        }
        for (name, value) in [("e_t", self.e_t), ("e_t1", self.e_t1)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(CapmError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    pub fn utility(&self) -> PowerUtility {
        PowerUtility { alpha: self.alpha }
    }

    /// `(c_t0, c_t1_0) = (e_t - p0 xi, e_t1 + x0 xi)`.
    pub fn consumptions(&self, xi: f64, p0: f64, x0: f64) -> (f64, f64) {
        (self.e_t - p0 * xi, self.e_t1 + x0 * xi)
    }
}

/// Mean price and its variance at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceStats {
    pub p0: f64,
    pub var_p: f64,
}

impl PriceStats {
    pub fn new(p0: f64, var_p: f64) -> Result<Self, CapmError> {
        if !(p0 > 0.0) || !p0.is_finite() {
            return Err(CapmError::InvalidParameter { name: "p0", value: p0 });
        }
        if !(var_p >= 0.0) || !var_p.is_finite() {
            return Err(CapmError::InvalidParameter { name: "var_p", value: var_p });
        }
        Ok(Self { p0, var_p })
    }
}

/// Payoff distribution summary at `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffStats {
    pub x0: f64,
    pub var_x: f64,
    /// Third central moment.
    pub gamma3_x: f64,
}

impl PayoffStats {
    pub fn new(x0: f64, var_x: f64, gamma3_x: f64) -> Result<Self, CapmError> {
        if !x0.is_finite() {
            return Err(CapmError::InvalidParameter { name: "x0", value: x0 });
        }
        if !(var_x >= 0.0) || !var_x.is_finite() {
            return Err(CapmError::InvalidParameter { name: "var_x", value: var_x });
        }
        if !gamma3_x.is_finite() {
            return Err(CapmError::InvalidParameter { name: "gamma3_x", value: gamma3_x });
        }
        Ok(Self { x0, var_x, gamma3_x })
    }

    /// Builds the stats from the normalized skewness `Sk = gamma3 / sigma^3`.
    pub fn from_skewness(x0: f64, var_x: f64, sk_x: f64) -> Result<Self, CapmError> {
        Self::new(x0, var_x, sk_x * var_x.max(0.0).powf(1.5))
    }

    /// Mean of `p_{t+1} + d_{t+1}`.
    pub fn from_price_and_dividend(mean_price_next: f64, mean_dividend: f64, var_x: f64, gamma3_x: f64) -> Result<Self, CapmError> {
        Self::new(mean_price_next + mean_dividend, var_x, gamma3_x)
    }

    pub fn sigma(&self) -> f64 {
        self.var_x.sqrt()
    }

    pub fn skewness(&self) -> Option<f64> {
        (self.var_x > 0.0).then(|| self.gamma3_x / self.var_x.powf(1.5))
    }
}

/// Which printed form of the mean discount factors to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorVariant {
    /// `m0 = beta u'(c_t1)/u'(c_t)`, `m1 = beta u''(c_t1)/u'(c_t)`.
    Eq4_9,
    /// As `Eq4_9` with the current-period point at `c_t0`, plus
    /// `m2 = u''(c_t0)/u'(c_t0)`.
    Eq4_11,
    /// `m0 = beta u'/u'`, `m1 = beta u''/u''`, `m3 = beta u'''/u'''`.
    Eq4_26,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscountFactors {
    pub variant: FactorVariant,
    pub m0: f64,
    pub m1: f64,
    pub m2: Option<f64>,
    pub m3: Option<f64>,
}

/// Mean discount factors at holding `xi`.
///
/// The current-period consumption is taken at the mean price,
/// `c_t = e_t - p0 xi`, in every variant.
pub fn discount_factors(params: &UtilityParams, xi: f64, p0: f64, x0: f64, variant: FactorVariant) -> Result<DiscountFactors, CapmError> {
    let (c_t, c_t1) = params.consumptions(xi, p0, x0);
    if !(c_t > 0.0 && c_t1 > 0.0) {
        return Err(CapmError::InfeasibleConsumption { xi, c_t, c_t1 });
    }
    let u = params.utility();
    let now = u.derivs(c_t)?;
    let next = u.derivs(c_t1)?;
    let beta = params.beta;
    Ok(match variant {
        FactorVariant::Eq4_9 => DiscountFactors {
            variant,
            m0: beta * (next.first / now.first),
            m1: beta * (next.second / now.first),
            m2: None,
            m3: None,
        },
        FactorVariant::Eq4_11 => DiscountFactors {
            variant,
            m0: beta * (next.first / now.first),
            m1: beta * (next.second / now.first),
            m2: Some(now.second / now.first),
            m3: None,
        },
        FactorVariant::Eq4_26 => DiscountFactors {
            variant,
            m0: beta * (next.first / now.first),
            m1: beta * (next.second / now.second),
            m2: None,
            m3: Some(beta * (next.third / now.third)),
        },
    })
}

/// Which linearized first-order condition [`xi_max_linear`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearMode {
    /// Price and payoff both fluctuate over the interval.
    Eq4_5,
    /// The current price is taken as known; only the payoff fluctuates.
    Eq4_6,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolutionFlags {
    pub infeasible_consumption: bool,
    pub bound_4_10_violated: bool,
    pub degenerate_denominator: bool,
}

impl SolutionFlags {
    pub fn any(&self) -> bool {
        self.infeasible_consumption || self.bound_4_10_violated || self.degenerate_denominator
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.infeasible_consumption {
            out.push("infeasible_consumption");
        }
        if self.bound_4_10_violated {
            out.push("bound_4_10_violated");
        }
        if self.degenerate_denominator {
            out.push("degenerate_denominator");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricingSolution {
    pub mode: LinearMode,
    pub method: SolveMethod,
    pub xi_max: f64,
    /// Right-hand side evaluated once at `xi = 0`.
    pub single_pass_xi: f64,
    pub c_t0: f64,
    pub c_t1_0: f64,
    /// Linearized first-order residual at `xi_max`, relative to the size of
    /// its terms.
    pub residual: f64,
    pub iterations: usize,
    pub flags: SolutionFlags,
}

struct LinearTerms {
    numerator: f64,
    denominator: f64,
    /// Sum of absolute values of the four terms of the condition.
    scale: f64,
}

fn linear_terms(params: &UtilityParams, price: &PriceStats, payoff: &PayoffStats, mode: LinearMode, xi: f64) -> Result<LinearTerms, CapmError> {
    let (c_t, c_t1) = params.consumptions(xi, price.p0, payoff.x0);
    if !(c_t > 0.0 && c_t1 > 0.0) {
        return Err(CapmError::InfeasibleConsumption { xi, c_t, c_t1 });
    }
    let u = params.utility();
    let (u1_now, u2_now) = (u.first(c_t)?, u.second(c_t)?);
    let (u1_next, u2_next) = (u.first(c_t1)?, u.second(c_t1)?);
    let beta = params.beta;
    let lhs = u1_now * price.p0;
    let rhs = beta * u1_next * payoff.x0;
    let payoff_term = beta * u2_next * payoff.var_x;
    let price_term = match mode {
        LinearMode::Eq4_5 => u2_now * price.var_p,
        LinearMode::Eq4_6 => 0.0,
    };
    let denominator = price_term + payoff_term;
    Ok(LinearTerms {
        numerator: lhs - rhs,
        denominator,
        scale: lhs.abs() + rhs.abs() + (xi * price_term).abs() + (xi * payoff_term).abs(),
    })
}

/// Relative residual of the linearized first-order condition at `xi`.
pub fn linear_residual(params: &UtilityParams, price: &PriceStats, payoff: &PayoffStats, mode: LinearMode, xi: f64) -> Result<f64, CapmError> {
    let terms = linear_terms(params, price, payoff, mode, xi)?;
    Ok((terms.numerator - xi * terms.denominator).abs() / terms.scale)
}

/// How [`xi_max_linear_with`] handles a fixed-point iteration that fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub damping: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Re-solve by bisection on the feasible interval when the iteration
    /// leaves it or stops contracting.
    pub bracket_fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: FIXED_POINT_DAMPING,
            max_iterations: FIXED_POINT_MAX_ITERATIONS,
            tolerance: FIXED_POINT_TOLERANCE,
            bracket_fallback: true,
        }
    }
}

impl SolverOptions {
    /// Fixed-point iteration only.
    pub fn strict() -> Self {
        Self {
            bracket_fallback: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPoint,
    Bracketed,
}

enum FixedPointOutcome {
    Converged(f64),
    /// Last feasible iterate.
    Infeasible(f64),
    Degenerate(f64),
    Stalled(f64),
}

/// Solves the linearized first-order condition for the optimal holding,
/// with the default [`SolverOptions`].
pub fn xi_max_linear(params: &UtilityParams, price: &PriceStats, payoff: &PayoffStats, mode: LinearMode) -> Result<PricingSolution, CapmError> {
    xi_max_linear_with(params, price, payoff, mode, &SolverOptions::default())
}

/// Solves the linearized first-order condition for the optimal holding.
///
/// Starting from `xi = 0`, each step moves a fraction `damping` of the way to
/// the closed-form root evaluated with the current consumptions, until the
/// step falls below `tolerance (1 + |xi|)`.
///
/// The map's slope is roughly `-(x0^2 + p0^2) / var` and the iteration
/// diverges once that exceeds `2 / damping - 1` in magnitude. When an
/// iterate leaves the feasible region or the steps stop shrinking, the same
/// equation is solved by bisection between the consumption limits. With
/// the fallback disabled, an infeasible iterate ends the solve and the last
/// feasible iterate is returned with `infeasible_consumption` set.
pub fn xi_max_linear_with(
    params: &UtilityParams,
    price: &PriceStats,
    payoff: &PayoffStats,
    mode: LinearMode,
    options: &SolverOptions,
) -> Result<PricingSolution, CapmError> {
    params.validate()?;
    let first = linear_terms(params, price, payoff, mode, 0.0)?;
    if first.denominator.abs() < DEGENERATE_DENOMINATOR {
        return Err(CapmError::DegenerateDenominator(first.denominator));
    }
    let single_pass_xi = first.numerator / first.denominator;

    let mut flags = SolutionFlags::default();
    let (outcome, mut iterations) = fixed_point(params, price, payoff, mode, options, single_pass_xi)?;
    let (xi, method) = match outcome {
        FixedPointOutcome::Converged(xi) => (xi, SolveMethod::FixedPoint),
        _ if options.bracket_fallback => {
            let (xi, steps) = bracketed_root(params, price, payoff, mode)?;
            iterations += steps;
            (xi, SolveMethod::Bracketed)
        }
        FixedPointOutcome::Infeasible(xi) => {
            flags.infeasible_consumption = true;
            (xi, SolveMethod::FixedPoint)
        }
        FixedPointOutcome::Degenerate(xi) => {
            flags.degenerate_denominator = true;
            (xi, SolveMethod::FixedPoint)
        }
        FixedPointOutcome::Stalled(xi) => return Err(CapmError::NoConvergence { iterations, xi }),
    };

    let (c_t0, c_t1_0) = params.consumptions(xi, price.p0, payoff.x0);
    let residual = linear_residual(params, price, payoff, mode, xi)?;
    if payoff.var_x > 0.0 {
        let bound = xi_bound_positivity(params, payoff)?;
        if bound.bound.is_some_and(|b| xi >= b) {
            flags.bound_4_10_violated = true;
        }
    }
    Ok(PricingSolution {
        mode,
        method,
        xi_max: xi,
        single_pass_xi,
        c_t0,
        c_t1_0,
        residual,
        iterations,
        flags,
    })
}

fn fixed_point(
    params: &UtilityParams,
    price: &PriceStats,
    payoff: &PayoffStats,
    mode: LinearMode,
    options: &SolverOptions,
    single_pass_xi: f64,
) -> Result<(FixedPointOutcome, usize), CapmError> {
    let mut xi = 0.0;
    let mut target = single_pass_xi;
    let mut last_step = f64::INFINITY;
    let mut growing = 0;
    for iteration in 1..=options.max_iterations {
        let next = xi + options.damping * (target - xi);
        let terms = match linear_terms(params, price, payoff, mode, next) {
            Ok(t) => t,
            Err(CapmError::InfeasibleConsumption { .. }) => return Ok((FixedPointOutcome::Infeasible(xi), iteration)),
            Err(e) => return Err(e),
        };
        if terms.denominator.abs() < DEGENERATE_DENOMINATOR {
            return Ok((FixedPointOutcome::Degenerate(next), iteration));
        }
        let step = (next - xi).abs();
        xi = next;
        target = terms.numerator / terms.denominator;
        let tol = options.tolerance * (1.0 + xi.abs());
        if step < tol && (target - xi).abs() < 2.0 * tol {
            return Ok((FixedPointOutcome::Converged(xi), iteration));
        }
        if options.bracket_fallback {
            growing = if step >= last_step { growing + 1 } else { 0 };
            if growing >= 3 {
                return Ok((FixedPointOutcome::Stalled(xi), iteration));
            }
        }
        last_step = step;
    }
    Ok((FixedPointOutcome::Stalled(xi), options.max_iterations))
}

/// Root of `numerator - xi * denominator` by bisection between the
/// consumption limits `e_t1 + x0 xi > 0` and `e_t - p0 xi > 0`.
fn bracketed_root(params: &UtilityParams, price: &PriceStats, payoff: &PayoffStats, mode: LinearMode) -> Result<(f64, usize), CapmError> {
    let residual = |xi: f64| linear_terms(params, price, payoff, mode, xi).map(|t| t.numerator - xi * t.denominator);
    let mut hi = params.e_t / price.p0;
    let mut lo = if payoff.x0 > 0.0 {
        -params.e_t1 / payoff.x0
    } else if payoff.x0 < 0.0 {
        hi = hi.min(params.e_t1 / -payoff.x0);
        f64::NEG_INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let span = if lo.is_finite() { hi - lo } else { hi.abs().max(1.0) };
    hi -= 1e-12 * span;
    if lo.is_finite() {
        lo += 1e-12 * span;
    } else {
        lo = hi - span;
        let mut k = 0;
        while residual(lo)? > 0.0 {
            k += 1;
            if k > 200 {
                return Err(CapmError::NoConvergence { iterations: k, xi: lo });
            }
            lo -= span * 2f64.powi(k as i32);
        }
    }
    let (mut r_lo, r_hi) = (residual(lo)?, residual(hi)?);
    if !(r_lo < 0.0 && r_hi > 0.0) {
        return Err(CapmError::NoConvergence { iterations: 0, xi: 0.0 });
    }
    let mut steps = 0;
    while steps < 400 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = residual(mid)?;
        if r == 0.0 {
            return Ok((mid, steps));
        }
        if (r < 0.0) == (r_lo < 0.0) {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), steps))
}

/// Price form of the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMode {
    /// `p = m0 x0 + xi m1 var_x`.
    Eq4_8,
    /// `p0 = m0 x0 + xi (m1 var_x + m2 var_p)`.
    Eq4_12,
}

/// Price implied by holding `xi` under the given discount factors.
pub fn price_from_xi(factors: &DiscountFactors, payoff: &PayoffStats, price_var: f64, xi: f64, mode: PriceMode) -> Result<f64, CapmError> {
    if !(factors.m0 > 0.0) || !(factors.m1 < 0.0) {
        return Err(CapmError::InvalidFactors {
            m0: factors.m0,
            m1: factors.m1,
        });
    }
    let discounted = factors.m0 * payoff.x0;
    let price = match mode {
        PriceMode::Eq4_8 => discounted + xi * factors.m1 * payoff.var_x,
        PriceMode::Eq4_12 => {
            let m2 = factors.m2.ok_or(CapmError::MissingFactor("m2"))?;
            discounted + xi * (factors.m1 * payoff.var_x + m2 * price_var)
        }
    };
    if !(price > 0.0) {
        return Err(CapmError::NegativePrice(price));
    }
    debug_assert!(!(xi > 0.0 && payoff.var_x > 0.0) || price < discounted);
    Ok(price)
}

/// Upper limit on the holding that keeps the implied price positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiBound {
    /// `None` when every positive holding satisfies the limit.
    pub bound: Option<f64>,
    pub always_valid: bool,
}

/// Solves `xi < (c_t1(xi) / alpha) x0 / var_x` for `xi`.
///
/// With `c_t1 = e_t1 + x0 xi` this becomes
/// `xi (alpha var_x - x0^2) < e_t1 x0`, which holds for every positive `xi`
/// when `alpha var_x < x0^2`.
pub fn xi_bound_positivity(params: &UtilityParams, payoff: &PayoffStats) -> Result<XiBound, CapmError> {
    if !(payoff.var_x > 0.0) {
        return Err(CapmError::ZeroVariance);
    }
    let excess = params.alpha * payoff.var_x - payoff.x0 * payoff.x0;
    if excess < 0.0 {
        return Ok(XiBound {
            bound: None,
            always_valid: true,
        });
    }
    if excess == 0.0 {
        return Ok(XiBound {
            bound: None,
            always_valid: false,
        });
    }
    Ok(XiBound {
        bound: Some(params.e_t1 * payoff.x0 / excess),
        always_valid: false,
    })
}

/// Each line of the risk-free consistency block, evaluated separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskFreeBlock {
    pub r_f: f64,
    /// `E[m] - 1/R_f`.
    pub mean_discount_gap: f64,
    /// `xi^2 var_x` at the skewness-implied holding.
    pub xi2_var: f64,
    /// `u'(c_t)/(beta R_f u'''(c_t1)) - u'(c_t1)/u'''(c_t1)`.
    pub xi2_var_from_rate: f64,
    /// `R_f m1^2 / ((1 - m0 R_f) m3)`.
    pub sk2_implied: f64,
    /// `x0^2 / ((1 + alpha)^2 var_x)`.
    pub sk2_lower: f64,
    pub normalized_volatility: f64,
    /// `(m3 / m1^2) (1 - m0 R_f) / ((1 + alpha)^2 R_f)`.
    pub vol_lower: f64,
    pub vol_above_lower: bool,
    pub factors: DiscountFactors,
}

/// Zero payoff-discount covariance under the quadratic expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdiosyncraticRelations {
    /// `e_t1 / ((1 + alpha) Sk sigma - x0)`.
    pub xi: f64,
    /// `x0 / ((1 + alpha) sigma)`.
    pub sk_lower: f64,
    /// `E[m]` at `xi`.
    pub mean_discount: f64,
    /// `u''(c_t1) xi var_x + u'''(c_t1) xi^2 gamma3`, relative to its first term.
    pub cov_residual: f64,
    pub risk_free: Option<RiskFreeBlock>,
}

/// Holding and bounds implied by a payoff uncorrelated with the discount
/// factor, with the risk-free checks when `r_f` is given.
pub fn idiosyncratic_relations(params: &UtilityParams, price: &PriceStats, payoff: &PayoffStats, r_f: Option<f64>) -> Result<IdiosyncraticRelations, CapmError> {
    params.validate()?;
    if !(payoff.var_x > 0.0) {
        return Err(CapmError::ZeroVariance);
    }
    let sigma = payoff.sigma();
    let sk = payoff.gamma3_x / (payoff.var_x * sigma);
    let alpha = params.alpha;
    let sk_lower = payoff.x0 / ((1.0 + alpha) * sigma);
    if !(sk > sk_lower) {
        return Err(CapmError::SkewnessBelowBound { sk, lower: sk_lower });
    }
    let xi = params.e_t1 / ((1.0 + alpha) * sk * sigma - payoff.x0);

    let (c_t, c_t1) = params.consumptions(xi, price.p0, payoff.x0);
    if !(c_t > 0.0 && c_t1 > 0.0) {
        return Err(CapmError::InfeasibleConsumption { xi, c_t, c_t1 });
    }
    let u = params.utility();
    let now = u.derivs(c_t)?;
    let next = u.derivs(c_t1)?;
    let beta = params.beta;
    let mean_discount = beta / now.first * (next.first + next.third * xi * xi * payoff.var_x);
    let cov_first = next.second * xi * payoff.var_x;
    let cov_second = next.third * xi * xi * payoff.gamma3_x;
    let cov_residual = (cov_first + cov_second).abs() / cov_first.abs();

    let risk_free = match r_f {
        None => None,
        Some(r_f) => {
            if !(r_f > 0.0) || !r_f.is_finite() {
                return Err(CapmError::InvalidParameter { name: "R_f", value: r_f });
            }
            let factors = discount_factors(params, xi, price.p0, payoff.x0, FactorVariant::Eq4_26)?;
            let (m0, m1, m3) = (factors.m0, factors.m1, factors.m3.expect("eq4_26 has m3"));
            if m0 * r_f >= 1.0 {
                return Err(CapmError::RiskFreeInconsistent(m0 * r_f));
            }
            let one_plus = (1.0 + alpha) * (1.0 + alpha);
            let vol_lower = m3 / (m1 * m1) * (1.0 - m0 * r_f) / (one_plus * r_f);
            let normalized_volatility = payoff.var_x / (payoff.x0 * payoff.x0);
            Some(RiskFreeBlock {
                r_f,
                mean_discount_gap: mean_discount - 1.0 / r_f,
                xi2_var: xi * xi * payoff.var_x,
                xi2_var_from_rate: now.first / (beta * r_f * next.third) - next.first / next.third,
                sk2_implied: r_f / (1.0 - m0 * r_f) * (m1 * m1) / m3,
                sk2_lower: payoff.x0 * payoff.x0 / (one_plus * payoff.var_x),
                normalized_volatility,
                vol_lower,
                vol_above_lower: normalized_volatility > vol_lower,
                factors,
            })
        }
    };

    Ok(IdiosyncraticRelations {
        xi,
        sk_lower,
        mean_discount,
        cov_residual,
        risk_free,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// The second-order condition holds for every holding and price.
    SmallVol,
    /// Holdings above the reported limit flip the sign of the price bound.
    HighVol,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// Coefficient `K` of `xi` in `xi K < e_t1 (x0^2 + var_x)`.
    pub coefficient: f64,
    /// Largest holding for which the second-order condition holds for any
    /// price; for larger holdings the price itself must exceed a lower limit.
    pub upper_bound: Option<f64>,
    pub xi: f64,
    /// Whether `xi` satisfies its regime's limit.
    pub xi_within_bound: bool,
    pub gamma3_included: bool,
}

/// Classifies the second-order maximum condition for power utility.
///
/// The right side of the price bound is negative, so the condition holds
/// for any price, when `xi K < e_t1 (x0^2 + var_x)` with
/// `K = (1 + alpha)(2 x0 var_x + gamma3) - x0 (x0^2 + var_x)`. Dropping
/// `gamma3` leaves `K = x0 ((1 + 2 alpha) var_x - x0^2)`.
pub fn second_order_regime(params: &UtilityParams, payoff: &PayoffStats, xi: f64, include_gamma3: bool) -> RegimeReport {
    let alpha = params.alpha;
    let (x0, var_x) = (payoff.x0, payoff.var_x);
    let spread = x0 * x0 + var_x;
    let (coefficient, reference) = if include_gamma3 {
        let k = (1.0 + alpha) * (2.0 * x0 * var_x + payoff.gamma3_x) - x0 * spread;
        let reference = (1.0 + alpha) * (2.0 * x0 * var_x + payoff.gamma3_x).abs() + (x0 * spread).abs();
        (k, reference)
    } else {
        let lhs = (1.0 + 2.0 * alpha) * var_x;
        (x0 * (lhs - x0 * x0), (x0 * lhs).abs().max((x0 * x0 * x0).abs()))
    };
    let regime = if coefficient.abs() <= REGIME_BOUNDARY_TOLERANCE * reference {
        Regime::Boundary
    } else if coefficient < 0.0 {
        Regime::SmallVol
    } else {
        Regime::HighVol
    };
    let upper_bound = (regime == Regime::HighVol).then(|| params.e_t1 * spread / coefficient);
    let xi_within_bound = match regime {
        Regime::SmallVol => true,
        Regime::HighVol => xi < upper_bound.unwrap(),
        Regime::Boundary => xi * coefficient < params.e_t1 * spread,
    };
    RegimeReport {
        regime,
        coefficient,
        upper_bound,
        xi,
        xi_within_bound,
        gamma3_included: include_gamma3,
    }
}

/// Discrete payoff distribution as `(payoff, probability)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffDistribution {
    pub outcomes: Vec<(f64, f64)>,
}

impl PayoffDistribution {
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self, CapmError> {
        if outcomes.is_empty() {
            return Err(CapmError::BadDistribution("no outcomes".into()));
        }
        if outcomes.iter().any(|&(x, q)| !x.is_finite() || !(q >= 0.0)) {
            return Err(CapmError::BadDistribution("non-finite payoff or negative probability".into()));
        }
        let total: f64 = outcomes.iter().map(|o| o.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CapmError::BadDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { outcomes })
    }

    /// `{x0 - d, x0 + d}` with equal weights.
    pub fn symmetric_two_point(x0: f64, d: f64) -> Result<Self, CapmError> {
        Self::new(vec![(x0 - d, 0.5), (x0 + d, 0.5)])
    }

    pub fn mean(&self) -> f64 {
        self.outcomes.iter().map(|&(x, q)| q * x).sum()
    }

    pub fn central_moment(&self, n: i32) -> f64 {
        let mean = self.mean();
        self.outcomes.iter().map(|&(x, q)| q * (x - mean).powi(n)).sum()
    }

    pub fn stats(&self) -> Result<PayoffStats, CapmError> {
        PayoffStats::new(self.mean(), self.central_moment(2), self.central_moment(3))
    }
}

/// Exact expected utility and its derivatives in `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEval {
    /// `None` at `alpha = 1`.
    pub value: Option<f64>,
    pub d1: f64,
    pub d2: f64,
}

/// `U(xi) = u(e_t - p0 xi) + beta sum_j q_j u(e_t1 + x_j xi)` and its first
/// two derivatives, without any expansion.
pub fn utility_oracle(params: &UtilityParams, price: &PriceStats, dist: &PayoffDistribution, xi: f64) -> Result<OracleEval, CapmError> {
    let u = params.utility();
    let c_t = params.e_t - price.p0 * xi;
    let check = |c_t1: f64| -> Result<(), CapmError> {
        if !(c_t > 0.0 && c_t1 > 0.0) {
            return Err(CapmError::InfeasibleConsumption { xi, c_t, c_t1 });
        }
        Ok(())
    };
    check(params.e_t1)?;
    let now = u.derivs(c_t)?;
    let mut value = now.value;
    let mut d1 = -price.p0 * now.first;
    let mut d2 = price.p0 * price.p0 * now.second;
    for &(x, q) in &dist.outcomes {
        let c = params.e_t1 + x * xi;
        check(c)?;
        let next = u.derivs(c)?;
        value = value.zip(next.value).map(|(v, n)| v + params.beta * q * n);
        d1 += params.beta * q * x * next.first;
        d2 += params.beta * q * x * x * next.second;
    }
    Ok(OracleEval { value, d1, d2 })
}

/// Open interval of holdings with every consumption positive.
pub fn feasible_interval(params: &UtilityParams, price: &PriceStats, dist: &PayoffDistribution) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = params.e_t / price.p0;
    for &(x, _) in &dist.outcomes {
        if x > 0.0 {
            lo = lo.max(-params.e_t1 / x);
        } else if x < 0.0 {
            hi = hi.min(-params.e_t1 / x);
        }
    }
    (lo, hi)
}

/// Root of the exact first-order condition by bisection.
///
/// The expected utility is concave, so its derivative decreases across the
/// feasible interval and has at most one root there.
pub fn oracle_xi_max(params: &UtilityParams, price: &PriceStats, dist: &PayoffDistribution) -> Result<f64, CapmError> {
    let (lo, hi) = feasible_interval(params, price, dist);
    let d1 = |xi: f64| utility_oracle(params, price, dist, xi).map(|e| e.d1);
    let span = if lo.is_finite() { hi - lo } else { hi.abs().max(1.0) };
    let mut a = if lo.is_finite() { lo + 1e-12 * span } else { hi - span };
    let mut b = hi - 1e-12 * span;
    let mut expand = 0;
    while d1(a)? < 0.0 {
        if lo.is_finite() || expand > 200 {
            return Err(CapmError::NoConvergence { iterations: expand, xi: a });
        }
        a -= span * 2f64.powi(expand as i32);
        expand += 1;
    }
    if d1(b)? > 0.0 {
        return Err(CapmError::NoConvergence { iterations: 0, xi: b });
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if d1(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(alpha: f64, beta: f64, e_t: f64, e_t1: f64) -> UtilityParams {
        UtilityParams::new(alpha, beta, e_t, e_t1).unwrap()
    }

    #[test]
    fn utility_derivative_values() {
        let d = utility_derivs(10.0, 0.5).unwrap();
        assert!((d.first - 0.316228).abs() < 1e-6);
        assert!((d.second + 0.0158114).abs() < 1e-7);
        assert!((d.third - 0.00237171).abs() < 1e-8);
        for alpha in [0.1, 0.5, 1.0] {
            let d = utility_derivs(1.0, alpha).unwrap();
            assert_eq!((d.first, d.second, d.third), (1.0, -alpha, alpha * (1.0 + alpha)));
        }
        assert_eq!(utility_derivs(0.0, 0.5), Err(CapmError::NonPositiveConsumption(0.0)));
        assert_eq!(utility_derivs(1.0, 0.0), Err(CapmError::AlphaOutOfRange(0.0)));
        assert_eq!(utility_derivs(1.0, 1.5), Err(CapmError::AlphaOutOfRange(1.5)));
    }

    #[test]
    fn log_limit_has_no_value() {
        let u = PowerUtility::new(1.0).unwrap();
        assert!(u.value(2.0).is_err());
        let d = u.derivs(2.0).unwrap();
        assert_eq!(d.value, None);
        assert_eq!(d.first, 0.5);
    }

    #[test]
    fn eq4_11_factors_at_equal_consumption() {
        let alpha = 0.7;
        let beta = 0.95;
        let f = discount_factors(&params(alpha, beta, 10.0, 10.0), 0.0, 1.0, 1.0, FactorVariant::Eq4_11).unwrap();
        assert_eq!(f.m0, beta);
        assert_relative_eq!(f.m2.unwrap(), -alpha / 10.0, max_relative = 1e-14);
        // m1 = beta u''(c)/u'(c) = -beta alpha / c
        assert_relative_eq!(f.m1, -beta * alpha / 10.0, max_relative = 1e-14);
        let g = discount_factors(&params(alpha, beta, 10.0, 10.0), 0.0, 1.0, 1.0, FactorVariant::Eq4_26).unwrap();
        assert_eq!((g.m0, g.m1, g.m3), (beta, beta, Some(beta)));
    }

    #[test]
    fn eq4_9_factor_value() {
        let f = discount_factors(&params(0.5, 0.99, 10.0, 12.0), 0.0, 1.0, 1.0, FactorVariant::Eq4_9).unwrap();
        // 0.99 sqrt(10/12)
        assert!((f.m0 - 0.903746).abs() < 1e-5);
        assert_relative_eq!(f.m0, 0.99 * (10.0f64 / 12.0).sqrt(), max_relative = 1e-15);
        assert!(f.m1 < 0.0);
    }

    #[test]
    fn infeasible_factors() {
        let err = discount_factors(&params(0.5, 0.99, 10.0, 12.0), 20.0, 1.0, 1.0, FactorVariant::Eq4_9).unwrap_err();
        assert!(matches!(err, CapmError::InfeasibleConsumption { .. }));
    }

    #[test]
    fn xi_zero_when_numerator_vanishes() {
        let p = params(0.5, 0.99, 10.0, 12.0);
        // p0 u'(e_t) = beta u'(e_t1) x0 at xi = 0
        let x0 = 1.0;
        let p0 = 0.99 * 12f64.powf(-0.5) / 10f64.powf(-0.5) * x0;
        let sol = xi_max_linear(&p, &PriceStats::new(p0, 0.01).unwrap(), &PayoffStats::new(x0, 0.04, 0.0).unwrap(), LinearMode::Eq4_5).unwrap();
        assert!(sol.xi_max.abs() < 1e-12);
        assert!(sol.single_pass_xi.abs() < 1e-12);
        assert!(sol.residual < 1e-14);
        assert!(!sol.flags.any());
    }

    #[test]
    fn single_pass_then_infeasible() {
        let p = params(0.5, 0.99, 10.0, 12.0);
        let price = PriceStats::new(1.0, 0.01).unwrap();
        let payoff = PayoffStats::new(1.2, 0.04, 0.0).unwrap();
        let sol = xi_max_linear_with(&p, &price, &payoff, LinearMode::Eq4_5, &SolverOptions::strict()).unwrap();
        assert!((sol.single_pass_xi - 42.115).abs() < 2e-3, "{}", sol.single_pass_xi);
        assert!(sol.flags.infeasible_consumption);
        assert_eq!(sol.xi_max, 0.0);
        assert_eq!((sol.c_t0, sol.c_t1_0), (10.0, 12.0));

        // the default solver falls back to bisection and finds the feasible root
        let sol = xi_max_linear(&p, &price, &payoff, LinearMode::Eq4_5).unwrap();
        assert_eq!(sol.method, SolveMethod::Bracketed);
        assert!(!sol.flags.any());
        assert!(sol.c_t0 > 0.0 && sol.c_t1_0 > 0.0);
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn zero_volatility_is_degenerate() {
        let p = params(0.5, 0.99, 10.0, 12.0);
        let err = xi_max_linear(&p, &PriceStats::new(1.0, 0.0).unwrap(), &PayoffStats::new(1.2, 0.0, 0.0).unwrap(), LinearMode::Eq4_5).unwrap_err();
        assert!(matches!(err, CapmError::DegenerateDenominator(_)));
        let err = xi_max_linear(&p, &PriceStats::new(1.0, 0.5).unwrap(), &PayoffStats::new(1.2, 0.0, 0.0).unwrap(), LinearMode::Eq4_6).unwrap_err();
        assert!(matches!(err, CapmError::DegenerateDenominator(_)));
    }

    #[test]
    fn converged_solution_reproduces_price() {
        let p = params(0.6, 0.97, 10.0, 11.0);
        let x0 = 1.1;
        let p0 = 0.97 * (11f64 / 10.0).powf(-0.6) * x0 * 1.002;
        let price = PriceStats::new(p0, 0.0004).unwrap();
        let payoff = PayoffStats::new(x0, 0.01, 0.0).unwrap();
        let sol = xi_max_linear(&p, &price, &payoff, LinearMode::Eq4_5).unwrap();
        assert!(!sol.flags.any());
        assert!(sol.residual < 1e-10);
        let f = discount_factors(&p, sol.xi_max, p0, x0, FactorVariant::Eq4_11).unwrap();
        let implied = price_from_xi(&f, &payoff, price.var_p, sol.xi_max, PriceMode::Eq4_12).unwrap();
        assert_relative_eq!(implied, p0, max_relative = 1e-9);

        let sol6 = xi_max_linear(&p, &price, &payoff, LinearMode::Eq4_6).unwrap();
        let f = discount_factors(&p, sol6.xi_max, p0, x0, FactorVariant::Eq4_9).unwrap();
        let implied = price_from_xi(&f, &payoff, 0.0, sol6.xi_max, PriceMode::Eq4_8).unwrap();
        assert_relative_eq!(implied, p0, max_relative = 1e-9);
    }

    fn manual_factors(m0: f64, m1: f64) -> DiscountFactors {
        DiscountFactors {
            variant: FactorVariant::Eq4_9,
            m0,
            m1,
            m2: None,
            m3: None,
        }
    }

    #[test]
    fn price_from_xi_examples() {
        let payoff = PayoffStats::new(2.0, 0.25, 0.0).unwrap();
        let f = manual_factors(0.9, -0.05);
        assert_relative_eq!(price_from_xi(&f, &payoff, 0.0, 1.0, PriceMode::Eq4_8).unwrap(), 1.7875, max_relative = 1e-15);
        assert_eq!(price_from_xi(&f, &payoff, 0.0, 0.0, PriceMode::Eq4_8).unwrap(), 0.9 * 2.0);
        assert!(matches!(price_from_xi(&f, &payoff, 0.0, 200.0, PriceMode::Eq4_8), Err(CapmError::NegativePrice(_))));
        assert_eq!(price_from_xi(&f, &payoff, 0.0, 1.0, PriceMode::Eq4_12), Err(CapmError::MissingFactor("m2")));
        assert!(matches!(price_from_xi(&manual_factors(0.9, 0.05), &payoff, 0.0, 1.0, PriceMode::Eq4_8), Err(CapmError::InvalidFactors { .. })));
    }

    #[test]
    fn positivity_bound_examples() {
        let b = xi_bound_positivity(&params(0.5, 0.99, 10.0, 10.0), &PayoffStats::new(3.0, 1.0, 0.0).unwrap()).unwrap();
        assert!(b.always_valid);
        assert_eq!(b.bound, None);
        let b = xi_bound_positivity(&params(1.0, 0.99, 10.0, 10.0), &PayoffStats::new(1.0, 9.0, 0.0).unwrap()).unwrap();
        assert!(!b.always_valid);
        assert_eq!(b.bound, Some(10.0 / 8.0));
        assert_eq!(
            xi_bound_positivity(&params(1.0, 0.99, 10.0, 10.0), &PayoffStats::new(1.0, 0.0, 0.0).unwrap()),
            Err(CapmError::ZeroVariance)
        );
    }

    #[test]
    fn bound_is_self_consistent() {
        // at the bound, xi equals (c_t1/alpha) x0 / var_x
        let p = params(1.0, 0.99, 10.0, 10.0);
        let payoff = PayoffStats::new(1.0, 9.0, 0.0).unwrap();
        let xi = xi_bound_positivity(&p, &payoff).unwrap().bound.unwrap();
        let c1 = p.e_t1 + payoff.x0 * xi;
        assert_relative_eq!(xi, c1 / p.alpha * payoff.x0 / payoff.var_x, max_relative = 1e-14);
    }

    #[test]
    fn idiosyncratic_worked_example() {
        let p = params(0.5, 0.99, 100.0, 10.0);
        let price = PriceStats::new(1.0, 0.0).unwrap();
        let payoff = PayoffStats::from_skewness(1.0, 1.0, 2.0).unwrap();
        let rel = idiosyncratic_relations(&p, &price, &payoff, None).unwrap();
        assert_eq!(rel.xi, 5.0);
        assert!((rel.sk_lower - 1.0 / 1.5).abs() < 1e-15);
        assert!(rel.cov_residual < 1e-10);
        assert!(rel.risk_free.is_none());

        let low = PayoffStats::from_skewness(1.0, 1.0, 0.5).unwrap();
        assert!(matches!(idiosyncratic_relations(&p, &price, &low, None), Err(CapmError::SkewnessBelowBound { .. })));
    }

    #[test]
    fn risk_free_block() {
        let p = params(0.5, 0.99, 10.0, 10.0);
        let price = PriceStats::new(1.0, 0.0).unwrap();
        let payoff = PayoffStats::from_skewness(1.0, 1.0, 2.0).unwrap();
        let rel = idiosyncratic_relations(&p, &price, &payoff, Some(1.01)).unwrap();
        let block = rel.risk_free.unwrap();
        assert!(block.factors.m0 * 1.01 < 1.0);
        assert!(block.vol_lower.is_finite());
        assert_eq!(block.xi2_var, 25.0);
        // first line of the block and the second are the same statement
        let u = p.utility();
        let (c_t, c_t1) = p.consumptions(rel.xi, price.p0, payoff.x0);
        let implied_gap = p.beta / u.first(c_t).unwrap() * u.third(c_t1).unwrap() * (block.xi2_var - block.xi2_var_from_rate);
        assert!((implied_gap - block.mean_discount_gap).abs() < 1e-12);

        let err = idiosyncratic_relations(&p, &price, &payoff, Some(2.0)).unwrap_err();
        assert!(matches!(err, CapmError::RiskFreeInconsistent(_)));
    }

    #[test]
    fn regime_examples() {
        let p = params(0.5, 0.99, 10.0, 10.0);
        let small = second_order_regime(&p, &PayoffStats::new(3f64.sqrt(), 1.0, 0.0).unwrap(), 1.0, false);
        assert_eq!(small.regime, Regime::SmallVol);
        assert!(small.xi_within_bound);
        let high = second_order_regime(&p, &PayoffStats::new(1.0, 4.0, 0.0).unwrap(), 1.0, false);
        assert_eq!(high.regime, Regime::HighVol);
        assert_relative_eq!(high.upper_bound.unwrap(), 50.0 / 7.0, max_relative = 1e-12);
        assert!(high.xi_within_bound);
        assert!(!second_order_regime(&p, &PayoffStats::new(1.0, 4.0, 0.0).unwrap(), 8.0, false).xi_within_bound);
        // (1 + 2 alpha) var_x = x0^2
        let edge = second_order_regime(&p, &PayoffStats::new(2.0, 2.0, 0.0).unwrap(), 1.0, false);
        assert_eq!(edge.regime, Regime::Boundary);
    }

    #[test]
    fn regime_with_gamma3_reduces_to_neglected_form() {
        let p = params(0.5, 0.99, 10.0, 10.0);
        let payoff = PayoffStats::new(1.0, 4.0, 0.0).unwrap();
        let a = second_order_regime(&p, &payoff, 1.0, false);
        let b = second_order_regime(&p, &payoff, 1.0, true);
        assert_eq!(a.regime, b.regime);
        assert_relative_eq!(a.upper_bound.unwrap(), b.upper_bound.unwrap(), max_relative = 1e-14);
        let skewed = PayoffStats::new(1.0, 4.0, -20.0).unwrap();
        assert_eq!(second_order_regime(&p, &skewed, 1.0, true).regime, Regime::SmallVol);
    }

    #[test]
    fn oracle_deterministic_payoff() {
        let p = params(0.5, 0.99, 10.0, 12.0);
        let price = PriceStats::new(1.0, 0.0).unwrap();
        let dist = PayoffDistribution::new(vec![(1.2, 1.0)]).unwrap();
        let xi = 0.7;
        let e = utility_oracle(&p, &price, &dist, xi).unwrap();
        let u = p.utility();
        let expected = -1.0 * u.first(10.0 - 0.7).unwrap() + 0.99 * 1.2 * u.first(12.0 + 1.2 * 0.7).unwrap();
        assert_relative_eq!(e.d1, expected, max_relative = 1e-14);
        // root: p = beta u'(c_t1) x0 / u'(c_t)
        let root = oracle_xi_max(&p, &price, &dist).unwrap();
        let (c_t, c_t1) = p.consumptions(root, 1.0, 1.2);
        assert_relative_eq!(0.99 * u.first(c_t1).unwrap() * 1.2 / u.first(c_t).unwrap(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn two_point_stats() {
        let d = PayoffDistribution::symmetric_two_point(2.0, 0.1).unwrap();
        let s = d.stats().unwrap();
        assert_eq!(s.x0, 2.0);
        assert_relative_eq!(s.var_x, 0.01, max_relative = 1e-12);
        assert!(s.gamma3_x.abs() < 1e-15);
        assert!(PayoffDistribution::new(vec![(1.0, 0.5)]).is_err());
        assert!(PayoffDistribution::new(vec![]).is_err());
    }

    #[test]
    fn oracle_matches_linear_eq4_6_for_small_spread() {
        let p = params(0.5, 0.98, 10.0, 10.0);
        let x0 = 1.0;
        let p_star = 0.98 * x0;
        let price = PriceStats::new(p_star * (1.0 - 5e-5), 0.0).unwrap();
        let dist = PayoffDistribution::symmetric_two_point(x0, 0.05 * x0).unwrap();
        let oracle = oracle_xi_max(&p, &price, &dist).unwrap();
        let linear = xi_max_linear(&p, &price, &dist.stats().unwrap(), LinearMode::Eq4_6).unwrap();
        assert!(oracle > 0.0);
        assert!((oracle - linear.xi_max).abs() <= 0.05 * oracle.abs(), "{oracle} vs {}", linear.xi_max);
    }

    #[test]
    fn infeasible_oracle() {
        let p = params(0.5, 0.98, 10.0, 10.0);
        let price = PriceStats::new(1.0, 0.0).unwrap();
        let dist = PayoffDistribution::symmetric_two_point(1.0, 0.05).unwrap();
        assert!(matches!(utility_oracle(&p, &price, &dist, 11.0), Err(CapmError::InfeasibleConsumption { .. })));
    }

    proptest! {
        #[test]
        fn ratio_identities(c in 0.01f64..1e4, alpha in 0.01f64..=1.0) {
            let d = utility_derivs(c, alpha).unwrap();
            prop_assert!(d.first > 0.0 && d.second < 0.0 && d.third > 0.0);
            prop_assert!((d.first / d.second + c / alpha).abs() <= 1e-12 * c / alpha);
            prop_assert!((d.second / d.third + c / (1.0 + alpha)).abs() <= 1e-12 * c / (1.0 + alpha));
        }

        #[test]
        fn factor_signs(alpha in 0.05f64..=1.0, beta in 0.5f64..1.0, e_t in 1.0f64..50.0, e_t1 in 1.0f64..50.0,
                        p0 in 0.1f64..5.0, x0 in 0.1f64..5.0, frac in -0.9f64..0.9) {
            let p = params(alpha, beta, e_t, e_t1);
            let xi = if frac >= 0.0 { frac * e_t / p0 } else { frac * e_t1 / x0 };
            for variant in [FactorVariant::Eq4_9, FactorVariant::Eq4_11] {
                let f = discount_factors(&p, xi, p0, x0, variant).unwrap();
                prop_assert!(f.m0 > 0.0 && f.m1 < 0.0);
                if variant == FactorVariant::Eq4_11 {
                    prop_assert!(f.m2.unwrap() < 0.0);
                }
            }
        }

        #[test]
        fn beta_scaling_is_exact(alpha in 0.05f64..=1.0, beta in 0.1f64..1.0, xi in -1.0f64..1.0, k in -3i32..4) {
            let lambda = 2f64.powi(k);
            let a = params(alpha, beta, 10.0, 12.0);
            let b = params(alpha, beta * lambda, 10.0, 12.0);
            for variant in [FactorVariant::Eq4_9, FactorVariant::Eq4_11, FactorVariant::Eq4_26] {
                let fa = discount_factors(&a, xi, 1.0, 1.0, variant).unwrap();
                let fb = discount_factors(&b, xi, 1.0, 1.0, variant).unwrap();
                prop_assert_eq!(fb.m0, lambda * fa.m0);
                prop_assert_eq!(fb.m1, lambda * fa.m1);
                prop_assert_eq!(fb.m3, fa.m3.map(|m| lambda * m));
                prop_assert_eq!(fb.m2, fa.m2);
            }
        }

        #[test]
        fn oracle_derivatives_match_differences(alpha in 0.1f64..0.99, beta in 0.8f64..1.0, xi in -2.0f64..2.0,
                                                x0 in 0.5f64..2.0, d in 0.0f64..0.4) {
            let p = params(alpha, beta, 10.0, 10.0);
            let price = PriceStats::new(1.0, 0.0).unwrap();
            let dist = PayoffDistribution::new(vec![(x0 - d, 0.3), (x0, 0.4), (x0 + d, 0.3)]).unwrap();
            let h = 1e-5 * (1.0 + xi.abs());
            let at = |z: f64| utility_oracle(&p, &price, &dist, z).unwrap();
            let e = at(xi);
            let (up, down) = (at(xi + h), at(xi - h));
            let fd1 = (up.value.unwrap() - down.value.unwrap()) / (2.0 * h);
            let fd2 = (up.d1 - down.d1) / (2.0 * h);
            prop_assert!((fd1 - e.d1).abs() <= 1e-6 * e.d1.abs().max(1e-3));
            prop_assert!((fd2 - e.d2).abs() <= 1e-6 * e.d2.abs());
        }

        #[test]
        fn covariance_vanishes_at_skewness_holding(alpha in 0.05f64..=1.0, sigma in 0.1f64..3.0, x0 in 0.1f64..3.0,
                                                   excess in 0.05f64..5.0, e_t1 in 1.0f64..50.0) {
            let sk = x0 / ((1.0 + alpha) * sigma) + excess;
            let p = params(alpha, 0.95, 1e6, e_t1);
            let payoff = PayoffStats::from_skewness(x0, sigma * sigma, sk).unwrap();
            let rel = idiosyncratic_relations(&p, &PriceStats::new(1.0, 0.0).unwrap(), &payoff, None).unwrap();
            prop_assert!(rel.xi > 0.0);
            prop_assert!(rel.cov_residual <= 1e-10);
        }
    }
}
