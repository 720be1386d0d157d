//! Seeded synthetic IMU traces with ground-truth Action Unit labels.
//!
//! A [`PathScript`] is a list of `(movement state, AU, count or duration)`
//! lines. Every step AU becomes one zero-mean vertical pulse: a slow rise to
//! the peak at mid-step, a fast fall to zero at 60%, then a negative lobe
//! that returns to zero exactly at the next step boundary. Turns add a
//! gyro-z pulse whose sampled area is ±π/2 and rotate the magnetometer with
//! it; stairs add a pitch-rate pulse; Abnormal is a broadband burst.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imu::{ImuSample, LabelRow, DEFAULT_RATE_HZ};
use crate::labels::{AuLabel, MoveState, StepType};
use crate::locator::{LocatorError, StepLengthTable};
use crate::pdr::wrap_angle;

pub const GRAVITY: f64 = 9.81;
pub const MAG_HORIZONTAL: f64 = 20.0;
pub const MAG_VERTICAL: f64 = -40.0;
pub const DEFAULT_STOP_MS: u32 = 800;
pub const DEFAULT_ABNORMAL_MS: u32 = 600;
/// Fraction of the generated suite used for training.
pub const TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("invalid script at line {line}: {message}")]
    InvalidScript { line: usize, message: String },
}

fn invalid(line: usize, message: impl Into<String>) -> SynthError {
    SynthError::InvalidScript {
        line,
        message: message.into(),
    }
}

/// How much of an AU a script line asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Amount {
    Count(u32),
    DurationMs(u32),
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Amount::Count(n) => write!(f, "{n}"),
            Amount::DurationMs(ms) => write!(f, "{ms}ms"),
        }
    }
}

impl FromStr for Amount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (digits, ms) = match s.strip_suffix("ms") {
            Some(d) => (d, true),
            None => (s, false),
        };
        let v: u32 = digits.parse().map_err(|_| format!("bad amount `{s}`"))?;
        if v == 0 {
            return Err(format!("amount must be positive, got `{s}`"));
        }
        Ok(if ms {
            Amount::DurationMs(v)
        } else {
            Amount::Count(v)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptSegment {
    pub state: MoveState,
    pub au: AuLabel,
    pub amount: Amount,
}

/// Gait signature of one synthetic subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub name: String,
    /// Normal steps per second while walking.
    pub cadence_hz: f64,
    /// Vertical peak above gravity for short, normal and long steps, m/s².
    pub amplitudes: [f64; 3],
    /// Step durations relative to the normal-step period.
    pub duration_factors: [f64; 3],
    pub walking_lengths: [f64; 3],
    pub running_lengths: [f64; 3],
}

impl Default for SubjectProfile {
    fn default() -> Self {
        SubjectProfile {
            name: crate::locator::DEFAULT_SUBJECT.to_string(),
            cadence_hz: 2.5,
            amplitudes: [1.5, 2.5, 3.5],
            duration_factors: [0.75, 1.0, 1.375],
            walking_lengths: [0.55, 0.70, 0.85],
            running_lengths: [0.90, 1.10, 1.30],
        }
    }
}

impl SubjectProfile {
    /// Walking step durations in ms for short, normal and long steps.
    pub fn step_durations_ms(&self) -> [f64; 3] {
        let period = 1000.0 / self.cadence_hz;
        self.duration_factors.map(|f| f * period)
    }

    pub fn step_table(&self) -> Result<StepLengthTable, LocatorError> {
        StepLengthTable::for_subject(&self.name, self.walking_lengths, self.running_lengths)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let period = 1000.0 / self.cadence_hz;
        if !(120.0..=400.0).contains(&period) {
            return Err(invalid(
                0,
                format!(
                    "cadence {} Hz gives a {period:.0} ms step interval",
                    self.cadence_hz
                ),
            ));
        }
        let positive = |v: &[f64; 3]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !positive(&self.amplitudes) || !positive(&self.duration_factors) {
            return Err(invalid(
                0,
                "amplitudes and duration factors must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub accel_std: f64,
    pub gyro_std: f64,
    pub mag_std: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            accel_std: 0.3,
            gyro_std: 0.05,
            mag_std: 0.2,
        }
    }
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        accel_std: 0.0,
        gyro_std: 0.0,
        mag_std: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathScript {
    pub segments: Vec<ScriptSegment>,
    pub profile: SubjectProfile,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub initial_heading: f64,
}

impl PathScript {
    pub fn new(segments: Vec<ScriptSegment>) -> Self {
        PathScript {
            segments,
            profile: SubjectProfile::default(),
            seed: 0,
            noise: NoiseSpec::default(),
            initial_heading: 0.0,
        }
    }

    /// Parses `<move_state> <au_label> <count_or_ms>` lines. Blank lines
    /// and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            let [state, au, amount] = fields[..] else {
                return Err(invalid(
                    line,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            };
            let seg = ScriptSegment {
                state: state
                    .parse()
                    .map_err(|e: crate::labels::ParseLabelError| invalid(line, e.to_string()))?,
                au: au
                    .parse()
                    .map_err(|e: crate::labels::ParseLabelError| invalid(line, e.to_string()))?,
                amount: amount.parse().map_err(|e: String| invalid(line, e))?,
            };
            check_segment(&seg, line)?;
            segments.push(seg);
        }
        Ok(PathScript::new(segments))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            out.push_str(&format!("{} {} {}\n", s.state, s.au, s.amount));
        }
        out
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.profile.validate()?;
        let n = &self.noise;
        if [n.accel_std, n.gyro_std, n.mag_std]
            .iter()
            .any(|s| !s.is_finite() || *s < 0.0)
        {
            return Err(invalid(
                0,
                "noise standard deviations must be finite and non-negative",
            ));
        }
        for (i, s) in self.segments.iter().enumerate() {
            check_segment(s, i + 1)?;
        }
        Ok(())
    }
}

fn check_segment(s: &ScriptSegment, line: usize) -> Result<(), SynthError> {
    let ok = match s.state {
        MoveState::Stop => s.au == AuLabel::Stop,
        MoveState::Walking | MoveState::Running => s.au != AuLabel::Stop,
        MoveState::UpStairs | MoveState::DownStairs => s.au.step_type().is_some(),
    };
    if !ok {
        return Err(invalid(
            line,
            format!("{} cannot occur while {}", s.au, s.state),
        ));
    }
    match s.amount {
        Amount::Count(0) | Amount::DurationMs(0) => Err(invalid(line, "amount must be positive")),
        _ => Ok(()),
    }
}

/// Samples plus the label sidecar, in raw sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub samples: Vec<ImuSample>,
    pub labels: Vec<LabelRow>,
    pub rate_hz: f64,
}

/// Amplitude and duration multipliers of a step for an activity.
fn activity_scale(state: MoveState) -> (f64, f64) {
    match state {
        MoveState::Running => (2.0, 1.0 / 1.45),
        MoveState::UpStairs => (1.2, 1.25),
        MoveState::DownStairs => (1.5, 0.9),
        _ => (1.0, 1.0),
    }
}

fn stair_pitch_rate(state: MoveState) -> f64 {
    match state {
        MoveState::UpStairs => 0.8,
        MoveState::DownStairs => -0.8,
        _ => 0.0,
    }
}

/// Vertical step pulse at phase `u ∈ [0, 1)`, zero-mean over the step.
pub fn step_pulse(u: f64, amplitude: f64) -> f64 {
    const PEAK: f64 = 0.5;
    const FALL: f64 = 0.1;
    const TROUGH: f64 = 1.0 - PEAK - FALL;
    if u < PEAK {
        amplitude * (FRAC_PI_2 * u / PEAK).sin()
    } else if u < PEAK + FALL {
        amplitude * (FRAC_PI_2 * (u - PEAK) / FALL).cos()
    } else {
        // Quarter-sine areas: rise PEAK·2/π, fall FALL·2/π; half-sine TROUGH·2/π.
        let depth = amplitude * (PEAK + FALL) / TROUGH;
        -depth * (PI * (u - PEAK - FALL) / TROUGH).sin()
    }
}

fn samples_for(ms: f64, rate_hz: f64) -> usize {
    ((ms * rate_hz / 1000.0).round() as usize).max(3)
}

struct Builder<'a> {
    rate_hz: f64,
    noise: NoiseSpec,
    rng: ChaCha8Rng,
    heading: f64,
    channels: Vec<[f64; 9]>,
    labels: Vec<LabelRow>,
    profile: &'a SubjectProfile,
}

impl Builder<'_> {
    fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    fn quiet(&self) -> [f64; 9] {
        let (s, c) = self.heading.sin_cos();
        [
            0.0,
            0.0,
            GRAVITY,
            0.0,
            0.0,
            0.0,
            MAG_HORIZONTAL * c,
            -MAG_HORIZONTAL * s,
            MAG_VERTICAL,
        ]
    }

    fn push_au(&mut self, au: AuLabel, state: MoveState, samples: Vec<[f64; 9]>) {
        let start_idx = self.channels.len();
        self.channels.extend(samples);
        self.labels.push(LabelRow {
            start_idx,
            end_idx: self.channels.len(),
            au,
            state,
        });
    }

    fn step(&mut self, step: StepType, state: MoveState) -> Vec<[f64; 9]> {
        let (amp_scale, dur_scale) = activity_scale(state);
        let amp = self.profile.amplitudes[step.index()] * amp_scale;
        let dur = self.profile.step_durations_ms()[step.index()] * dur_scale;
        let n = samples_for(dur, self.rate_hz);
        let pitch = stair_pitch_rate(state);
        (0..n)
            .map(|k| {
                let u = k as f64 / n as f64;
                let mut ch = self.quiet();
                ch[2] += step_pulse(u, amp);
                ch[0] += 0.2 * amp * (2.0 * PI * u).sin();
                ch[3] = pitch * (PI * u).sin();
                ch
            })
            .collect()
    }

    fn turn(&mut self, left: bool, state: MoveState) -> Vec<[f64; 9]> {
        let (amp_scale, dur_scale) = activity_scale(state);
        let amp = 0.8 * self.profile.amplitudes[1] * amp_scale;
        let dur = 1.25 * self.profile.step_durations_ms()[1] * dur_scale;
        let n = samples_for(dur, self.rate_hz);
        let shape: Vec<f64> = (0..n).map(|k| (PI * k as f64 / n as f64).sin()).collect();
        let area: f64 = shape.iter().sum::<f64>() * self.dt();
        let sign = if left { 1.0 } else { -1.0 };
        let peak = sign * FRAC_PI_2 / area;
        let start = self.heading;
        let mut out = Vec::with_capacity(n);
        for (k, s) in shape.iter().enumerate() {
            let u = k as f64 / n as f64;
            let mut ch = self.quiet();
            ch[2] += step_pulse(u, amp);
            ch[5] = peak * s;
            out.push(ch);
            self.heading = wrap_angle(self.heading + ch[5] * self.dt());
        }
        self.heading = wrap_angle(start + sign * FRAC_PI_2);
        out
    }

    fn abnormal(&mut self, ms: f64) -> Vec<[f64; 9]> {
        let n = samples_for(ms, self.rate_hz);
        let lateral = Normal::new(0.0, 1.2).expect("valid std");
        let vertical = Normal::new(0.0, 0.6).expect("valid std");
        let rot = Normal::new(0.0, 1.0).expect("valid std");
        (0..n)
            .map(|_| {
                let mut ch = self.quiet();
                ch[0] += lateral.sample(&mut self.rng);
                ch[1] += lateral.sample(&mut self.rng);
                ch[2] += vertical.sample(&mut self.rng);
                ch[3] += rot.sample(&mut self.rng);
                ch[4] += rot.sample(&mut self.rng);
                ch
            })
            .collect()
    }

    fn stop(&mut self, ms: f64) -> Vec<[f64; 9]> {
        let n = samples_for(ms, self.rate_hz);
        vec![self.quiet(); n]
    }

    fn default_ms(&self, au: AuLabel, state: MoveState) -> f64 {
        let (_, dur_scale) = activity_scale(state);
        let d = self.profile.step_durations_ms();
        match au {
            AuLabel::Stop => f64::from(DEFAULT_STOP_MS),
            AuLabel::Abnormal => f64::from(DEFAULT_ABNORMAL_MS),
            AuLabel::LeftTurn | AuLabel::RightTurn => 1.25 * d[1] * dur_scale,
            _ => d[au.step_type().expect("step AU").index()] * dur_scale,
        }
    }

    fn segment(&mut self, seg: &ScriptSegment) {
        let per_au = self.default_ms(seg.au, seg.state);
        let (count, ms) = match (seg.au, seg.amount) {
            (_, Amount::Count(n)) => (n as usize, per_au),
            (AuLabel::Stop | AuLabel::Abnormal, Amount::DurationMs(ms)) => (1, f64::from(ms)),
            (_, Amount::DurationMs(ms)) => {
                (((f64::from(ms) / per_au).floor() as usize).max(1), per_au)
            }
        };
        for _ in 0..count {
            let samples = match seg.au {
                AuLabel::Stop => self.stop(ms),
                AuLabel::Abnormal => self.abnormal(ms),
                AuLabel::LeftTurn => self.turn(true, seg.state),
                AuLabel::RightTurn => self.turn(false, seg.state),
                step => self.step(step.step_type().expect("step AU"), seg.state),
            };
            self.push_au(seg.au, seg.state, samples);
        }
    }
}

/// Renders a script into samples and ground-truth labels.
pub fn generate(script: &PathScript, rate_hz: f64) -> Result<GeneratedTrace, SynthError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(invalid(0, format!("rate must be positive, got {rate_hz}")));
    }
    script.validate()?;
    let mut b = Builder {
        rate_hz,
        noise: script.noise,
        rng: ChaCha8Rng::seed_from_u64(script.seed),
        heading: wrap_angle(script.initial_heading),
        channels: Vec::new(),
        labels: Vec::new(),
        profile: &script.profile,
    };
    for seg in &script.segments {
        b.segment(seg);
    }
    let n = b.noise;
    let accel = (n.accel_std > 0.0).then(|| Normal::new(0.0, n.accel_std).expect("valid std"));
    let gyro = (n.gyro_std > 0.0).then(|| Normal::new(0.0, n.gyro_std).expect("valid std"));
    let mag = (n.mag_std > 0.0).then(|| Normal::new(0.0, n.mag_std).expect("valid std"));
    let mut rng = b.rng;
    let samples = b
        .channels
        .into_iter()
        .enumerate()
        .map(|(i, mut ch)| {
            for (range, dist) in [(0..3, &accel), (3..6, &gyro), (6..9, &mag)] {
                if let Some(d) = dist {
                    for c in &mut ch[range] {
                        *c += d.sample(&mut rng);
                    }
                }
            }
            let t_ms = (i as f64 * 1000.0 / rate_hz).round() as i64;
            ImuSample::from_channels(t_ms, ch)
        })
        .collect();
    Ok(GeneratedTrace {
        samples,
        labels: b.labels,
        rate_hz,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTrace {
    pub name: String,
    pub script: PathScript,
    pub trace: GeneratedTrace,
    /// Splits this trace belongs to; a one-trace suite is in both.
    pub splits: Vec<Split>,
}

impl SuiteTrace {
    pub fn in_split(&self, split: Split) -> bool {
        self.splits.contains(&split)
    }
}

fn random_steps<R: Rng>(rng: &mut R, state: MoveState, n: usize) -> Vec<ScriptSegment> {
    (0..n)
        .map(|_| ScriptSegment {
            state,
            au: AuLabel::from_step_type(StepType::ALL[rng.random_range(0..3)]),
            amount: Amount::Count(1),
        })
        .collect()
}

fn one(state: MoveState, au: AuLabel) -> ScriptSegment {
    ScriptSegment {
        state,
        au,
        amount: Amount::Count(1),
    }
}

fn stop_ms(ms: u32) -> ScriptSegment {
    ScriptSegment {
        state: MoveState::Stop,
        au: AuLabel::Stop,
        amount: Amount::DurationMs(ms),
    }
}

/// Random walk/run bout: steps with turns and Abnormal bursts spliced in at
/// interior positions.
fn bout<R: Rng>(
    rng: &mut R,
    state: MoveState,
    steps: usize,
    extras: &[AuLabel],
) -> Vec<ScriptSegment> {
    let mut body = random_steps(rng, state, steps);
    let mut events: Vec<AuLabel> = extras.to_vec();
    events.shuffle(rng);
    for au in events {
        let at = rng.random_range(1..body.len());
        body.insert(at, one(state, au));
    }
    body
}

/// Script of suite trace `index`: every AU and every movement state, ending
/// in a long Stop so the last segment has trailing context.
pub fn suite_script(index: usize, seed: u64) -> PathScript {
    let trace_seed = seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(trace_seed ^ 0x5eed_5c41_97a0_0001);
    let mut segs = vec![stop_ms(rng.random_range(600..=1000))];
    let walk_steps = rng.random_range(10..=16);
    segs.extend(bout(
        &mut rng,
        MoveState::Walking,
        walk_steps,
        &[
            AuLabel::LeftTurn,
            AuLabel::LeftTurn,
            AuLabel::RightTurn,
            AuLabel::RightTurn,
            AuLabel::Abnormal,
        ],
    ));
    segs.push(stop_ms(rng.random_range(600..=1000)));
    let run_steps = rng.random_range(8..=12);
    let run_turn = if rng.random_bool(0.5) {
        AuLabel::LeftTurn
    } else {
        AuLabel::RightTurn
    };
    segs.extend(bout(
        &mut rng,
        MoveState::Running,
        run_steps,
        &[run_turn, AuLabel::Abnormal],
    ));
    segs.push(stop_ms(rng.random_range(600..=1000)));
    for state in [MoveState::UpStairs, MoveState::DownStairs] {
        segs.push(ScriptSegment {
            state,
            au: AuLabel::NormalStep,
            amount: Amount::Count(rng.random_range(4..=6)),
        });
    }
    segs.push(stop_ms(rng.random_range(600..=1000)));
    let tail_steps = rng.random_range(4..=8);
    segs.extend(random_steps(&mut rng, MoveState::Walking, tail_steps));
    segs.push(stop_ms(1600));

    let mut script = PathScript::new(segs);
    script.seed = trace_seed;
    script.profile.cadence_hz = rng.random_range(2.5..=2.8);
    let gain: f64 = rng.random_range(0.95..=1.05);
    script.profile.amplitudes = script.profile.amplitudes.map(|a| a * gain);
    script.initial_heading = rng.random_range(-PI..PI);
    script
}

/// Generates `n_traces` scripted traces at 50 Hz and splits them 70/30 by
/// trace. With `n_traces = 1` the single trace serves both splits.
pub fn make_benchmark_suite(n_traces: usize, seed: u64) -> Vec<SuiteTrace> {
    let n_traces = n_traces.max(1);
    let n_train = if n_traces == 1 {
        1
    } else {
        ((n_traces as f64 * TRAIN_FRACTION).round() as usize).clamp(1, n_traces - 1)
    };
    let mut order: Vec<usize> = (0..n_traces).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut splits = vec![Vec::new(); n_traces];
    for (rank, &i) in order.iter().enumerate() {
        if n_traces == 1 {
            splits[i] = vec![Split::Train, Split::Test];
        } else if rank < n_train {
            splits[i] = vec![Split::Train];
        } else {
            splits[i] = vec![Split::Test];
        }
    }
    splits
        .into_iter()
        .enumerate()
        .map(|(i, splits)| {
            let script = suite_script(i, seed);
            let trace = generate(&script, DEFAULT_RATE_HZ).expect("suite scripts are valid");
            SuiteTrace {
                name: format!("trace_{i:03}"),
                script,
                trace,
                splits,
            }
        })
        .collect()
}

/// Label occurrences over the traces of a split (or all traces).
pub fn label_counts(suite: &[SuiteTrace], split: Option<Split>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in suite.iter().filter(|t| split.is_none_or(|s| t.in_split(s))) {
        for row in &t.trace.labels {
            *out.entry(format!("au:{}", row.au)).or_insert(0) += 1;
            *out.entry(format!("state:{}", row.state)).or_insert(0) += 1;
        }
    }
    out
}
