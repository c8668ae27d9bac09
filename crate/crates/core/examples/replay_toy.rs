use std::time::Instant;
use retroseq::pipeline::{run_replay, ReplayConfig};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "/tmp/replay_toy".into());
    let t = Instant::now();
    let cfg = ReplayConfig::toy(std::path::Path::new(&out));
    let output = run_replay(&cfg).unwrap();
    println!("=== comparison ({:?}) ===", t.elapsed());
    print!("{}", output.table.to_text());
    for (name, report) in &output.classwise {
        println!("--- classwise {name} ---");
        print!("{}", report.to_text());
    }
}
