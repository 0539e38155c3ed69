//! Market-based price moments from trade ticks.
//!
//! Trades are grouped into averaging windows of width `delta`. Within each
//! window the value-weighted price moments `p(n) = sum C^n / sum U^n` are
//! compared with plain frequency moments, turned into approximate price
//! measures through a truncated characteristic function, and fed into a
//! two-period consumption pricing model expanded in price and payoff
//! volatility.

pub mod capm;
pub mod cli;
pub mod market_moments;
pub mod price_measure;
pub mod summation;
pub mod synth;
pub mod trade_model;

pub use capm::{
    discount_factors, idiosyncratic_relations, oracle_xi_max, price_from_xi, second_order_regime, utility_derivs,
    utility_oracle, xi_bound_positivity, xi_max_linear, CapmError, DiscountFactors, FactorVariant, LinearMode,
    PayoffDistribution, PayoffStats, PriceMode, PriceStats, PricingSolution, Regime, UtilityParams,
};
pub use market_moments::{
    aggregate, aggregate_ticks, frequency_moments, market_price_moment, market_volatility, moment_report,
    third_central_moment, MarketMoments, MomentError, MomentReport, WindowAggregates,
};
pub use price_measure::{
    delta_measure, fit_coefficients, invert_charfunc_numeric, CharFuncApprox, GridSpec, MeasureError, MeasureGrid,
};
pub use synth::{generate, PriceProcess, SynthConfig, SynthError, VolumeDist};
pub use trade_model::{parse_ticks, partition, read_ticks, TickError, TradeTick, Window, WindowSpec};
