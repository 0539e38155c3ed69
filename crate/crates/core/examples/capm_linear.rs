//! Optimal holding from the linearized first-order condition, compared with
//! the exact expected-utility optimum over a two-point payoff.

use mbpm::capm::{
    discount_factors, oracle_xi_max, price_from_xi, xi_max_linear, FactorVariant, LinearMode, PayoffDistribution,
    PriceMode, PriceStats, UtilityParams,
};

fn main() -> Result<(), mbpm::CapmError> {
    let params = UtilityParams::new(0.6, 0.97, 20.0, 22.0)?;
    let x0 = 1.3;
    let no_trade = params.beta * (params.e_t1 / params.e_t).powf(-params.alpha) * x0;
    let dist = PayoffDistribution::symmetric_two_point(x0, 0.05 * x0)?;
    let payoff = dist.stats()?;

    println!("{:>10} {:>14} {:>14} {:>10}  method", "p0/p*", "linear xi", "oracle xi", "implied p");
    for shift in [-3e-4, -1e-4, 1e-4, 3e-4] {
        let price = PriceStats::new(no_trade * (1.0 + shift), 0.0)?;
        let sol = xi_max_linear(&params, &price, &payoff, LinearMode::Eq4_6)?;
        let oracle = oracle_xi_max(&params, &price, &dist)?;
        let factors = discount_factors(&params, sol.xi_max, price.p0, x0, FactorVariant::Eq4_9)?;
        let implied = price_from_xi(&factors, &payoff, 0.0, sol.xi_max, PriceMode::Eq4_8)?;
        println!(
            "{:>10.5} {:>14.6e} {:>14.6e} {:>10.6}  {:?}",
            1.0 + shift,
            sol.xi_max,
            oracle,
            implied,
            sol.method
        );
    }

    // price volatility at t also enters the condition
    let price = PriceStats::new(no_trade * 0.999, (0.02 * no_trade).powi(2))?;
    let sol = xi_max_linear(&params, &price, &payoff, LinearMode::Eq4_5)?;
    println!(
        "with price volatility: xi = {:.6}, single pass {:.6}, residual {:.1e}",
        sol.xi_max, sol.single_pass_xi, sol.residual
    );
    Ok(())
}
