//! How window averages depend on the averaging interval.
//!
//! A price that switches level every `d / 2` seconds is averaged over
//! windows of width `delta`. Windows much shorter than `d` follow the
//! switches; windows much longer smooth them out.

use mbpm::market_moments::{aggregate, market_price_moment};
use mbpm::synth::{generate, lag1_dispersion, PriceProcess, SynthConfig, VolumeDist};
use mbpm::trade_model::{partition, WindowSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let period = 120.0;
    let ticks = generate(&SynthConfig {
        seed: 3,
        n_ticks: 50_000,
        tick_spacing: 0.5,
        price_process: PriceProcess::RegimeStep { base: 100.0, amplitude: 0.02, period },
        volume_dist: VolumeDist::Pareto { shape: 3.0 },
        coupling: 0.2,
    })?;
    println!("step period d = {period} s");
    println!("{:>8} {:>8} {:>16}", "delta", "windows", "lag-1 |dVWAP|");
    for delta in [7.5, 15.0, 30.0, 60.0, 120.0, 240.0, 480.0, 960.0] {
        let spec = WindowSpec::new(0.0, delta)?;
        let vwaps = partition(&ticks, &spec)?
            .iter()
            .filter(|w| !w.is_empty())
            .map(|w| market_price_moment(&aggregate(w, 1)?, 1))
            .collect::<Result<Vec<_>, _>>()?;
        println!("{delta:>8} {:>8} {:>16.5}", vwaps.len(), lag1_dispersion(&vwaps));
    }
    Ok(())
}
