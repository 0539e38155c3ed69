//! Market-based price moments and VWAP for each window of a stream.

use mbpm::market_moments::{moment_report, MomentReport};
use mbpm::synth::{generate, PriceProcess, SynthConfig, VolumeDist};
use mbpm::trade_model::{partition, WindowSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ticks = generate(&SynthConfig {
        seed: 1,
        n_ticks: 600,
        tick_spacing: 1.0,
        price_process: PriceProcess::RandomWalk { start: 50.0, step_vol: 0.004 },
        volume_dist: VolumeDist::Uniform { levels: vec![1.0, 2.0, 5.0, 10.0] },
        coupling: 0.0,
    })?;
    let spec = WindowSpec::new(0.0, 60.0)?;
    println!("{:>6} {:>5} {:>10} {:>12} {:>12}", "window", "N", "vwap", "variance", "a3");
    for w in partition(&ticks, &spec)?.iter().filter(|w| !w.is_empty()) {
        let MomentReport { market, .. } = moment_report(w, 4)?;
        println!(
            "{:>6} {:>5} {:>10.4} {:>12.5e} {:>12.5e}",
            w.index,
            w.len(),
            market.vwap,
            market.variance.unwrap_or(f64::NAN),
            market.gamma3.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
