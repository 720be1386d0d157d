//! Render a path script into an IMU trace with a label sidecar.
//!
//! cargo run --example synthetic_trace [script.txt] [out_dir]

use std::path::PathBuf;

use odw::imu;
use odw::synthgen::{self, PathScript};

const SQUARE: &str = "\
# walk a 2.8 m square, then climb a flight
Stop Stop 800ms
Walking NormalStep 4
Walking LeftTurn 1
Walking NormalStep 4
Walking LeftTurn 1
Walking NormalStep 4
Walking LeftTurn 1
Walking NormalStep 4
Walking LeftTurn 1
Stop Stop 600ms
UpStairs NormalStep 6
Stop Stop 800ms
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let text = match args.next() {
        Some(path) => std::fs::read_to_string(path)?,
        None => SQUARE.to_string(),
    };
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("odw_example_trace"));

    let mut script = PathScript::parse(&text)?;
    script.seed = 42;
    let trace = synthgen::generate(&script, 50.0)?;
    std::fs::create_dir_all(&out)?;
    imu::emit_csv(
        &trace.samples,
        std::fs::File::create(out.join("trace.csv"))?,
    )?;
    imu::emit_labels(
        &trace.labels,
        std::fs::File::create(out.join("trace.labels.csv"))?,
    )?;
    println!(
        "{} segments -> {} samples ({:.1} s), {} labelled AUs, written to {}",
        script.segments.len(),
        trace.samples.len(),
        trace.samples.len() as f64 / trace.rate_hz,
        trace.labels.len(),
        out.display()
    );
    for row in trace.labels.iter().take(6) {
        println!(
            "  [{:>4}, {:>4}) {:<10} {}",
            row.start_idx, row.end_idx, row.au, row.state
        );
    }

    let suite = synthgen::make_benchmark_suite(10, 2024);
    println!(
        "benchmark suite label counts: {:?}",
        synthgen::label_counts(&suite, None)
    );
    Ok(())
}
