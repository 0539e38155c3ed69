//! The synth -> analyze -> measure pipeline driven through the command
//! layer, writing into a scratch directory.

use mbpm::cli::run_from;

fn main() {
    let dir = std::env::temp_dir().join(format!("mbpm-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch dir");
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: [Vec<String>; 3] = [
        ["synth", "--seed", "7", "--n", "20000", "--spacing", "0.25", "--price", "walk:100:0.001", "--volume", "const1"]
            .iter()
            .map(|s| s.to_string())
            .chain(["--out".into(), path("ticks.csv")])
            .collect(),
        ["analyze", "--delta", "60", "--max-n", "4", "--no-timestamp"]
            .iter()
            .map(|s| s.to_string())
            .chain(["--input".into(), path("ticks.csv"), "--out".into(), path("report.json")])
            .collect(),
        ["measure", "--delta", "60", "--k", "2", "--window", "10"]
            .iter()
            .map(|s| s.to_string())
            .chain(["--input".into(), path("ticks.csv"), "--out".into(), path("window10")])
            .collect(),
    ];
    for args in &steps {
        let code = run_from(std::iter::once("mbpm".to_string()).chain(args.iter().cloned()));
        println!("mbpm {} -> exit {code}", args[0]);
        if code != 0 {
            std::process::exit(code);
        }
    }
    for entry in std::fs::read_dir(&dir).expect("listing") {
        let entry = entry.expect("entry");
        println!("{:>10} bytes  {}", entry.metadata().map(|m| m.len()).unwrap_or(0), entry.path().display());
    }
    let _ = std::fs::remove_dir_all(&dir);
}
