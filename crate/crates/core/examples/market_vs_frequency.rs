//! Value-weighted moments against plain frequency moments.
//!
//! Two trades at prices 1 and 10 with volumes 10 and 1 give a VWAP near 1.8
//! while the mean trade price is 5.5, and a negative market variance.
//! With unit volumes the two families coincide.

use mbpm::market_moments::moment_report;
use mbpm::trade_model::{TradeTick, Window};

fn show(label: &str, ticks: &[TradeTick]) -> Result<(), mbpm::MomentError> {
    let r = moment_report(&Window { index: 0, center: 0.0, ticks }, 3)?;
    println!("{label}");
    for n in 0..3 {
        println!("  n={}  p(n)={:<12.6} pi(n)={:<12.6} gap={:.3e}", n + 1, r.market.p_n[n], r.frequency.pi_n[n], r.gaps[n]);
    }
    println!(
        "  market variance {:.6} (negative: {}), frequency variance {:.6}",
        r.market.variance.unwrap(),
        r.market.negative_variance,
        r.frequency.variance_freq
    );
    Ok(())
}

fn main() -> Result<(), mbpm::MomentError> {
    show("volume-skewed pair", &[TradeTick::new(0.0, 1.0, 10.0), TradeTick::new(1.0, 10.0, 1.0)])?;
    let unit: Vec<TradeTick> = [3.0, 4.5, 4.0, 6.0].iter().enumerate().map(|(i, &p)| TradeTick::new(i as f64, p, 1.0)).collect();
    show("unit volumes", &unit)
}
