//! Parse a tick CSV and split it into averaging windows.

use mbpm::trade_model::{parse_ticks, partition, WindowSpec};

const CSV: &str = "\
t,price,volume
0.4,101.2,3
2.9,101.5,1
4.8,100.9,7
12.1,102.0,2
13.0,101.7,5
31.5,99.8,4
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ticks = parse_ticks(CSV)?;
    let spec = WindowSpec::new(0.0, 10.0)?;
    for w in partition(&ticks, &spec)? {
        let (start, end) = spec.bounds(w.index);
        println!("window {:>2} [{start:>5.1}, {end:>5.1})  {} ticks", w.index, w.len());
    }
    Ok(())
}
