//! Smooth a synthetic trace, write it as CSV and read it back.
//!
//! cargo run --example smoothing_and_csv

use odw::imu;
use odw::synthgen;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = synthgen::suite_script(0, 1);
    let trace = synthgen::generate(&script, 50.0)?;

    let mut csv = Vec::new();
    imu::emit_csv(&trace.samples, &mut csv)?;
    let back = imu::ingest_csv(&csv[..])?;
    assert_eq!(back, trace.samples);
    println!(
        "{} samples, {} bytes of CSV, round trip exact",
        back.len(),
        csv.len()
    );
    for line in String::from_utf8(csv)?.lines().take(3) {
        println!("  {line}");
    }

    let smoothed = imu::smooth(&back, imu::DEFAULT_SMOOTH_N)?;
    println!(
        "smoothed with N = {}: {} samples, {:.0} Hz, {:.0} ms delay",
        smoothed.window(),
        smoothed.len(),
        smoothed.rate_hz(),
        smoothed.delay_ms()
    );
    let raw_z: Vec<f64> = back.iter().map(|s| s.accel[2]).collect();
    let z = smoothed.accel_axis(2);
    let spread = |v: &[f64]| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    println!(
        "vertical range raw {:.2} m/s², smoothed {:.2} m/s²",
        spread(&raw_z),
        spread(&z)
    );
    Ok(())
}
