//! Holding at which a skewed payoff is uncorrelated with the discount
//! factor, with the risk-free consistency checks.

use mbpm::capm::{idiosyncratic_relations, PayoffStats, PriceStats, UtilityParams};

fn main() -> Result<(), mbpm::CapmError> {
    let params = UtilityParams::new(0.5, 0.99, 10.0, 10.0)?;
    let price = PriceStats::new(1.0, 0.0)?;
    for sk in [2.0, 3.0, 4.0] {
        let payoff = PayoffStats::from_skewness(1.0, 1.0, sk)?;
        let rel = idiosyncratic_relations(&params, &price, &payoff, Some(1.01))?;
        let rf = rel.risk_free.expect("R_f supplied");
        println!(
            "Sk = {sk}: xi = {:.4}, lower Sk {:.4}, E[m] = {:.5}, cov residual {:.1e}",
            rel.xi, rel.sk_lower, rel.mean_discount, rel.cov_residual
        );
        println!(
            "        volatility {:.4} vs lower limit {:.4} (above: {}), Sk^2 implied {:.4}",
            rf.normalized_volatility, rf.vol_lower, rf.vol_above_lower, rf.sk2_implied
        );
    }
    for sk in [0.5, 1.0] {
        let payoff = PayoffStats::from_skewness(1.0, 1.0, sk)?;
        println!("Sk = {sk}: {}", idiosyncratic_relations(&params, &price, &payoff, None).unwrap_err());
    }
    Ok(())
}
