//! Gaussian price measure from the first two market moments, recovered by
//! numerical Fourier inversion and checked against the closed form.

use mbpm::market_moments::{aggregate_ticks, MarketMoments};
use mbpm::price_measure::{fit_coefficients, gaussian_density, invert_charfunc_numeric, GridSpec};
use mbpm::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ticks = generate(&SynthConfig::unit_volume_walk(5, 400, 0.01))?;
    let moments = MarketMoments::from_aggregates(&aggregate_ticks(&ticks, 2)?)?;
    let approx = fit_coefficients(&moments, 2)?;
    let grid = invert_charfunc_numeric(&approx, &GridSpec::default())?;

    let worst = grid
        .prices
        .iter()
        .zip(&grid.densities)
        .map(|(&p, &eta)| (eta - gaussian_density(&approx, p).unwrap()).abs())
        .fold(0.0, f64::max);
    let mean = grid.moment(1);
    println!("a1 = {:.6}, a2 = {:.6}", approx.mean(), approx.variance().unwrap());
    println!("grid: {} points, spacing {:.3e}, normalization {:.12}", grid.prices.len(), grid.spacing, grid.normalization);
    println!("quadrature mean {mean:.6}, variance {:.6}", grid.central_moment(2, mean));
    println!("max |numeric - closed form| = {worst:.2e}");
    Ok(())
}
