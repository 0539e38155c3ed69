//! Second-order maximum condition across payoff volatilities.

use mbpm::capm::{second_order_regime, PayoffStats, UtilityParams};

fn main() -> Result<(), mbpm::CapmError> {
    let params = UtilityParams::new(0.5, 0.99, 10.0, 10.0)?;
    let x0 = 1.0;
    println!("{:>8} {:>10} {:>14}  with gamma3 = sigma^3", "var_x", "regime", "xi limit");
    for var_x in [0.1, 0.25, 0.5, 1.0, 4.0] {
        let payoff = PayoffStats::from_skewness(x0, var_x, 1.0)?;
        let plain = second_order_regime(&params, &payoff, 1.0, false);
        let full = second_order_regime(&params, &payoff, 1.0, true);
        let limit = plain.upper_bound.map_or("-".to_string(), |b| format!("{b:.4}"));
        println!("{var_x:>8} {:>10?} {limit:>14}  {:?}", plain.regime, full.regime);
    }
    Ok(())
}
