//! Classical pedestrian dead reckoning: step detection on the most active
//! accelerometer axis, tilt-compensated magnetic heading, and step-wise
//! position integration.
//!
//! Besides serving as a baseline, the accepted step peaks drive the
//! signal-processing window in [`crate::windowing`].

use std::f64::consts::PI;
use std::io::Write;

use crate::imu::{ImuError, ImuSample, SmoothedStream};

/// Shortest accepted gap between consecutive steps.
pub const MIN_STEP_GAP_MS: i64 = 120;
/// Longest gap for which a step still continues the current walking bout.
pub const MAX_STEP_GAP_MS: i64 = 400;
/// Default step threshold offset above the per-trace mean of the step axis.
pub const DEFAULT_TAU_ABOVE_MEAN: f64 = 1.2;

#[derive(Debug, thiserror::Error)]
pub enum PdrError {
    #[error("stream is empty")]
    EmptyStream,
    #[error("step threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("roll is undefined when both A_x and A_z are zero")]
    DegenerateAttitude,
    #[error("horizontal field components are both zero")]
    DegenerateField,
    #[error("{steps} steps but {headings} headings")]
    LengthMismatch { steps: usize, headings: usize },
    #[error("step length must be positive, got {0}")]
    InvalidStepLength(f64),
    #[error(transparent)]
    Imu(#[from] ImuError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// An accepted step: an accelerometer peak that crossed the threshold and
/// passed the inter-step gap rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub peak_idx: usize,
    pub magnitude: f64,
    pub t_ms: i64,
    /// Set when the gap to the previous accepted step exceeds
    /// [`MAX_STEP_GAP_MS`] (or for the first step): the step opens a new bout
    /// and has no predecessor for the interval rule.
    pub bout_start: bool,
}

/// Outcome of comparing a local peak with the step threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakKind {
    Step,
    LocalPeak,
}

/// Equality counts as a step.
pub fn classify_peak(magnitude: f64, tau: f64) -> PeakKind {
    if magnitude >= tau {
        PeakKind::Step
    } else {
        PeakKind::LocalPeak
    }
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Accelerometer axis with the largest sample variance; ties go to the
/// earlier axis (x, then y, then z).
pub fn select_step_axis(stream: &SmoothedStream) -> Result<Axis, PdrError> {
    if stream.is_empty() {
        return Err(PdrError::EmptyStream);
    }
    let mut best = Axis::X;
    let mut best_var = f64::NEG_INFINITY;
    for axis in Axis::ALL {
        let v = variance(&stream.accel_axis(axis.index()));
        if v > best_var {
            best = axis;
            best_var = v;
        }
    }
    Ok(best)
}

/// Indices of local maxima. A plateau counts once, at its first sample, and
/// only if the signal falls after it.
pub fn local_maxima(signal: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < signal.len() {
        if signal[i] > signal[i - 1] {
            let mut j = i;
            while j + 1 < signal.len() && signal[j + 1] == signal[i] {
                j += 1;
            }
            if j + 1 < signal.len() && signal[j + 1] < signal[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Threshold `offset` above the mean of `axis`.
pub fn threshold_above_mean(stream: &SmoothedStream, axis: Axis, offset: f64) -> f64 {
    mean(&stream.accel_axis(axis.index())) + offset
}

/// Detects steps on one accelerometer axis.
///
/// Local maxima at or above `tau` are step candidates. A candidate closer
/// than [`MIN_STEP_GAP_MS`] to the previously accepted step is dropped as a
/// double peak. A gap longer than [`MAX_STEP_GAP_MS`] breaks the bout, and the
/// candidate is accepted as the first step of a new one.
pub fn detect_steps(
    stream: &SmoothedStream,
    axis: Axis,
    tau: f64,
) -> Result<Vec<StepEvent>, PdrError> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(PdrError::InvalidThreshold(tau));
    }
    let signal = stream.accel_axis(axis.index());
    let samples = stream.samples();
    let mut steps: Vec<StepEvent> = Vec::new();
    for idx in local_maxima(&signal) {
        if classify_peak(signal[idx], tau) == PeakKind::LocalPeak {
            continue;
        }
        let t_ms = samples[idx].t_ms;
        let bout_start = match steps.last() {
            None => true,
            Some(prev) => {
                let gap = t_ms - prev.t_ms;
                if gap < MIN_STEP_GAP_MS {
                    continue;
                }
                gap > MAX_STEP_GAP_MS
            }
        };
        steps.push(StepEvent {
            peak_idx: idx,
            magnitude: signal[idx],
            t_ms,
            bout_start,
        });
    }
    Ok(steps)
}

/// Pitch, roll and tilt-compensated yaw of a device, all in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingSolution {
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
    pub xh: f64,
    pub yh: f64,
}

/// Folds an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Heading from one accelerometer + magnetometer reading.
///
/// Uses the two-argument arctangent throughout so roll and yaw keep their
/// quadrant.
pub fn estimate_heading(sample: &ImuSample) -> Result<HeadingSolution, PdrError> {
    if !sample.is_finite() {
        return Err(PdrError::DegenerateAttitude);
    }
    let [ax, ay, az] = sample.accel;
    let [mx, my, mz] = sample.mag;
    if ax == 0.0 && az == 0.0 {
        return Err(PdrError::DegenerateAttitude);
    }
    let pitch = ay.atan2((ax * ax + az * az).sqrt());
    let roll = wrap_angle((-ax).atan2(az));
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let xh = mx * cp + my * sp * sr + mz * sp * cr;
    let yh = my * cr + mz * sr;
    if xh == 0.0 && yh == 0.0 {
        return Err(PdrError::DegenerateField);
    }
    let yaw = wrap_angle((-yh).atan2(xh));
    Ok(HeadingSolution {
        pitch,
        roll,
        yaw,
        xh,
        yh,
    })
}

/// Headings sampled at each step peak.
pub fn headings_at_steps(
    stream: &SmoothedStream,
    steps: &[StepEvent],
) -> Result<Vec<HeadingSolution>, PdrError> {
    steps
        .iter()
        .map(|s| estimate_heading(&stream.samples()[s.peak_idx]))
        .collect()
}

/// Integrates steps into planar positions, starting at the origin. The
/// result has one more entry than `steps`.
pub fn pdr_track(
    steps: &[StepEvent],
    headings: &[HeadingSolution],
    step_len: f64,
) -> Result<Vec<[f64; 2]>, PdrError> {
    if steps.len() != headings.len() {
        return Err(PdrError::LengthMismatch {
            steps: steps.len(),
            headings: headings.len(),
        });
    }
    if !(step_len.is_finite() && step_len > 0.0) {
        return Err(PdrError::InvalidStepLength(step_len));
    }
    let mut pos = [0.0, 0.0];
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(pos);
    for h in headings {
        let (s, c) = h.yaw.sin_cos();
        pos = [pos[0] + step_len * c, pos[1] + step_len * s];
        out.push(pos);
    }
    Ok(out)
}

/// Writes `idx,t_ms,magnitude,yaw_rad` rows, one per step.
pub fn write_step_dump<W: Write>(
    steps: &[StepEvent],
    headings: &[HeadingSolution],
    sink: W,
) -> Result<(), PdrError> {
    if steps.len() != headings.len() {
        return Err(PdrError::LengthMismatch {
            steps: steps.len(),
            headings: headings.len(),
        });
    }
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| PdrError::Imu(ImuError::Csv(e));
    w.write_record(["idx", "t_ms", "magnitude", "yaw_rad"])
        .map_err(io)?;
    for (s, h) in steps.iter().zip(headings) {
        w.write_record([
            s.peak_idx.to_string(),
            s.t_ms.to_string(),
            format!("{:?}", s.magnitude),
            format!("{:?}", h.yaw),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| PdrError::Imu(ImuError::Io(e)))?;
    Ok(())
}
