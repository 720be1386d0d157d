//! Detect steps and headings on a walking trace and integrate a PDR track.
//!
//! cargo run --example step_detection

use odw::imu;
use odw::labels::{AuLabel, MoveState};
use odw::pdr;
use odw::synthgen::{self, Amount, NoiseSpec, PathScript, ScriptSegment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seg = |state, au, n| ScriptSegment {
        state,
        au,
        amount: Amount::Count(n),
    };
    let mut script = PathScript::new(vec![
        seg(MoveState::Stop, AuLabel::Stop, 1),
        seg(MoveState::Walking, AuLabel::NormalStep, 6),
        seg(MoveState::Walking, AuLabel::LeftTurn, 1),
        seg(MoveState::Walking, AuLabel::NormalStep, 6),
        seg(MoveState::Stop, AuLabel::Stop, 1),
    ]);
    script.noise = NoiseSpec {
        accel_std: 0.1,
        ..NoiseSpec::default()
    };
    let trace = synthgen::generate(&script, 50.0)?;
    let stream = imu::smooth(&trace.samples, imu::DEFAULT_SMOOTH_N)?;

    let axis = pdr::select_step_axis(&stream)?;
    let tau = pdr::threshold_above_mean(&stream, axis, pdr::DEFAULT_TAU_ABOVE_MEAN);
    let steps = pdr::detect_steps(&stream, axis, tau)?;
    let headings = pdr::headings_at_steps(&stream, &steps)?;
    println!(
        "step axis {axis:?}, threshold {tau:.2} m/s², {} steps (13 scripted, the turn included)",
        steps.len()
    );

    let mut dump = Vec::new();
    pdr::write_step_dump(&steps, &headings, &mut dump)?;
    print!("{}", String::from_utf8(dump)?);

    let track = pdr::pdr_track(&steps, &headings, 0.7)?;
    let end = track.last().copied().unwrap_or([0.0, 0.0]);
    println!("PDR endpoint ({:.2}, {:.2}) m", end[0], end[1]);
    Ok(())
}
