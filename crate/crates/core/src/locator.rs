//! Two-stage recognition and the moving-distance estimator.
//!
//! A movement-state classifier gates an Action Unit classifier: only walking
//! and running segments are handed to the AU model, and only recognised step
//! AUs move the user. Each step adds the subject's mode step length for that
//! step type and activity along the current heading; turns rotate the
//! heading by a fixed angle.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};
use std::time::Instant;

use crate::imu::{LabelRow, SmoothedStream};
use crate::labels::{AuLabel, Label, MoveState, StepType};
use crate::pdr::{self, wrap_angle, PdrError};
use crate::seqnet::{ClassifierVerdict, SeqnetError};
use crate::windowing::{
    conventional_dw, nlp_dw, sp_classified, sp_nlp_fusion, FusionThresholds, Segment,
    SegmentClassifier, SegmentationOutcome, SpSegmenter, StrategyKind, TokenConfig, WindowError,
    ZeroCrossingConfig, CONVENTIONAL_MAX_LEN,
};

pub const DEFAULT_SUBJECT: &str = "s1";

#[derive(Debug, thiserror::Error)]
pub enum LocatorError {
    #[error("no step length for subject `{subject}`, {step} while {state}")]
    MissingTableEntry {
        subject: String,
        step: StepType,
        state: MoveState,
    },
    #[error("invalid step length table: {0}")]
    InvalidTable(String),
    #[error("classifier emitted class {0} outside its label family")]
    UnknownClass(usize),
    #[error("at cursor {cursor}: {source}")]
    AtCursor {
        cursor: usize,
        #[source]
        source: Box<LocatorError>,
    },
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Classifier(#[from] SeqnetError),
    #[error(transparent)]
    Pdr(#[from] PdrError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Mode step length by (subject, step type, activity), in metres.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepLengthTable {
    entries: BTreeMap<(String, StepType, MoveState), f64>,
}

impl StepLengthTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Walking and running rows for one subject.
    pub fn for_subject(
        subject: &str,
        walking: [f64; 3],
        running: [f64; 3],
    ) -> Result<Self, LocatorError> {
        let mut t = StepLengthTable::new();
        for (i, step) in StepType::ALL.into_iter().enumerate() {
            t.insert(subject, step, MoveState::Walking, walking[i])?;
            t.insert(subject, step, MoveState::Running, running[i])?;
        }
        t.validate()?;
        Ok(t)
    }

    pub fn default_table() -> Self {
        Self::for_subject(DEFAULT_SUBJECT, [0.55, 0.70, 0.85], [0.90, 1.10, 1.30])
            .expect("built-in table is ordered")
    }

    pub fn insert(
        &mut self,
        subject: &str,
        step: StepType,
        state: MoveState,
        length_m: f64,
    ) -> Result<(), LocatorError> {
        if !(length_m.is_finite() && length_m > 0.0) {
            return Err(LocatorError::InvalidTable(format!(
                "length {length_m} for {subject}/{step}/{state}"
            )));
        }
        self.entries
            .insert((subject.to_string(), step, state), length_m);
        Ok(())
    }

    pub fn get(&self, subject: &str, step: StepType, state: MoveState) -> Option<f64> {
        self.entries
            .get(&(subject.to_string(), step, state))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Short < normal < long wherever two of them are present for the same
    /// subject and activity.
    pub fn validate(&self) -> Result<(), LocatorError> {
        for ((subject, step, state), len) in &self.entries {
            for longer in StepType::ALL.into_iter().filter(|s| s > step) {
                if let Some(other) = self.get(subject, longer, *state) {
                    if other <= *len {
                        return Err(LocatorError::InvalidTable(format!(
                            "{subject}/{state}: {step}={len} is not shorter than {longer}={other}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads `subject,step_type,move_state,length_m` rows.
    pub fn read_csv<R: Read>(source: R) -> Result<Self, LocatorError> {
        let mut reader = csv::Reader::from_reader(source);
        let mut t = StepLengthTable::new();
        for row in reader.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or("").trim().to_string();
            let step: StepType = field(1).parse().map_err(LocatorError::InvalidTable)?;
            let state: MoveState =
                field(2)
                    .parse()
                    .map_err(|e: crate::labels::ParseLabelError| {
                        LocatorError::InvalidTable(e.to_string())
                    })?;
            let len: f64 = field(3)
                .parse()
                .map_err(|_| LocatorError::InvalidTable(format!("bad length `{}`", field(3))))?;
            t.insert(&field(0), step, state, len)?;
        }
        t.validate()?;
        Ok(t)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), LocatorError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["subject", "step_type", "move_state", "length_m"])?;
        for ((subject, step, state), len) in &self.entries {
            w.write_record([
                subject.clone(),
                step.to_string(),
                state.to_string(),
                format!("{len:?}"),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Position, heading and history of the tracked user.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub position: [f64; 2],
    pub heading: f64,
    /// Action Units processed so far.
    pub k: usize,
    pub history: Vec<[f64; 2]>,
    /// Sum of step lengths applied.
    pub distance: f64,
}

impl Default for TrackState {
    fn default() -> Self {
        TrackState::new([0.0, 0.0], 0.0)
    }
}

impl TrackState {
    pub fn new(origin: [f64; 2], heading: f64) -> Self {
        TrackState {
            position: origin,
            heading: wrap_angle(heading),
            k: 0,
            history: vec![origin],
            distance: 0.0,
        }
    }

    /// Counts an AU that neither moves nor turns.
    pub fn hold(&mut self) {
        self.k += 1;
        self.history.push(self.position);
    }

    pub fn apply(
        &mut self,
        au: AuLabel,
        state: MoveState,
        table: &StepLengthTable,
        subject: &str,
        turn_angle: f64,
    ) -> Result<(), LocatorError> {
        match au {
            AuLabel::ShortStep | AuLabel::NormalStep | AuLabel::LongStep if state.is_planar() => {
                let step = au.step_type().expect("step AU");
                let len = table.get(subject, step, state).ok_or_else(|| {
                    LocatorError::MissingTableEntry {
                        subject: subject.to_string(),
                        step,
                        state,
                    }
                })?;
                let (s, c) = self.heading.sin_cos();
                self.position = [self.position[0] + len * c, self.position[1] + len * s];
                self.distance += len;
            }
            AuLabel::LeftTurn => self.heading = wrap_angle(self.heading + turn_angle),
            AuLabel::RightTurn => self.heading = wrap_angle(self.heading - turn_angle),
            _ => {}
        }
        self.k += 1;
        self.history.push(self.position);
        Ok(())
    }
}

/// Moving-distance update with ±90° turns: `P_k = P_{k−1} + Ψ_k · (cos θ, sin θ)`
/// for step AUs while walking or running.
pub fn apply_au(
    mut state: TrackState,
    au: AuLabel,
    move_state: MoveState,
    table: &StepLengthTable,
    subject: &str,
) -> Result<TrackState, LocatorError> {
    state.apply(au, move_state, table, subject, FRAC_PI_2)?;
    Ok(state)
}

/// Movement state, gated AU and the classifier passes spent on them.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageVerdict {
    pub state: MoveState,
    pub au: Option<AuLabel>,
    pub state_verdict: ClassifierVerdict,
    pub au_verdict: Option<ClassifierVerdict>,
}

impl TwoStageVerdict {
    pub fn evals(&self) -> u32 {
        self.state_verdict.evals + self.au_verdict.as_ref().map_or(0, |v| v.evals)
    }
}

fn as_label<L: Label>(v: &ClassifierVerdict) -> Result<L, LocatorError> {
    v.label_as::<L>().ok_or(LocatorError::UnknownClass(v.label))
}

/// Runs the movement-state model and, for walking or running, the AU model.
pub fn two_stage_classify<M, A>(
    segment: &Segment,
    lstm1: &M,
    lstm2: &A,
) -> Result<TwoStageVerdict, LocatorError>
where
    M: SegmentClassifier + ?Sized,
    A: SegmentClassifier + ?Sized,
{
    let state_verdict = lstm1.classify_window(&segment.samples)?;
    let state: MoveState = as_label(&state_verdict)?;
    let au_verdict = if state.is_planar() {
        Some(lstm2.classify_window(&segment.samples)?)
    } else {
        None
    };
    let au = au_verdict.as_ref().map(as_label::<AuLabel>).transpose()?;
    Ok(TwoStageVerdict {
        state,
        au,
        state_verdict,
        au_verdict,
    })
}

/// Two-stage gating when the AU verdict already came out of the window
/// search: only the movement-state model runs.
pub fn gate_with_au_verdict<M>(
    segment: &Segment,
    lstm1: &M,
    au_verdict: &ClassifierVerdict,
) -> Result<TwoStageVerdict, LocatorError>
where
    M: SegmentClassifier + ?Sized,
{
    let state_verdict = lstm1.classify_window(&segment.samples)?;
    let state: MoveState = as_label(&state_verdict)?;
    let (au, au_verdict) = if state.is_planar() {
        let mut v = au_verdict.clone();
        v.evals = 0;
        (Some(as_label::<AuLabel>(au_verdict)?), Some(v))
    } else {
        (None, None)
    };
    Ok(TwoStageVerdict {
        state,
        au,
        state_verdict,
        au_verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub strategy: StrategyKind,
    pub tokens: TokenConfig,
    pub thresholds: FusionThresholds,
    pub zero_crossing: ZeroCrossingConfig,
    /// Step threshold above the step-axis mean, m/s².
    pub tau_above_mean: f64,
    pub turn_angle: f64,
    pub origin: [f64; 2],
    pub initial_heading: f64,
    pub subject: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            strategy: StrategyKind::Fusion,
            tokens: TokenConfig::default(),
            thresholds: FusionThresholds::default(),
            zero_crossing: ZeroCrossingConfig::default(),
            tau_above_mean: pdr::DEFAULT_TAU_ABOVE_MEAN,
            turn_angle: FRAC_PI_2,
            origin: [0.0, 0.0],
            initial_heading: 0.0,
            subject: DEFAULT_SUBJECT.to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn with_strategy(strategy: StrategyKind) -> Self {
        PipelineConfig {
            strategy,
            ..Self::default()
        }
    }
}

/// The two trained models of the pipeline.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub move_state: &'a dyn SegmentClassifier,
    pub action_unit: &'a dyn SegmentClassifier,
}

/// One segmentation decision and what the pipeline made of it.
#[derive(Debug, Clone, PartialEq)]
pub struct AuRecord {
    pub cursor: usize,
    pub outcome: SegmentationOutcome,
    pub state: Option<MoveState>,
    pub au: Option<AuLabel>,
    /// Movement-state passes spent on top of the window search.
    pub gate_evals: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub strategy: StrategyKind,
    /// Segmentation decisions, including "no valid AU".
    pub decisions: usize,
    /// Decisions that produced an Action Unit segment.
    pub aus: usize,
    /// Classifier passes spent by the window strategy.
    pub window_evals: u64,
    /// Movement-state passes spent gating accepted segments.
    pub gate_evals: u64,
    pub wall_ns: u64,
    pub smoothing_delay_ms: f64,
    /// Samples left after the last decision.
    pub tail_samples: usize,
}

impl LatencyReport {
    pub fn evals_per_decision(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.window_evals as f64 / self.decisions as f64
        }
    }

    pub fn wall_ns_per_decision(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.wall_ns as f64 / self.decisions as f64
        }
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), LocatorError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "strategy",
            "decisions",
            "aus",
            "window_evals",
            "gate_evals",
            "evals_per_au",
            "wall_ns",
            "wall_ns_per_au",
            "smoothing_delay_ms",
            "tail_samples",
        ])?;
        w.write_record([
            self.strategy.to_string(),
            self.decisions.to_string(),
            self.aus.to_string(),
            self.window_evals.to_string(),
            self.gate_evals.to_string(),
            format!("{:.4}", self.evals_per_decision()),
            self.wall_ns.to_string(),
            format!("{:.1}", self.wall_ns_per_decision()),
            format!("{:.1}", self.smoothing_delay_ms),
            self.tail_samples.to_string(),
        ])?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub track: TrackState,
    pub records: Vec<AuRecord>,
    pub latency: LatencyReport,
    pub turn_angle: f64,
    pub initial_heading: f64,
}

impl PipelineRun {
    /// Writes `k,x_m,y_m,heading_rad,au_label,move_state,evals`, one row per
    /// history entry starting with the origin at `k = 0`.
    pub fn write_trajectory<W: Write>(&self, sink: W) -> Result<(), LocatorError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "k",
            "x_m",
            "y_m",
            "heading_rad",
            "au_label",
            "move_state",
            "evals",
        ])?;
        let h = &self.track.history;
        w.write_record([
            "0".to_string(),
            format!("{:?}", h[0][0]),
            format!("{:?}", h[0][1]),
            format!("{:?}", self.headings()[0]),
            "-".to_string(),
            "-".to_string(),
            "0".to_string(),
        ])?;
        let headings = self.headings();
        for (k, rec) in self
            .records
            .iter()
            .filter(|r| r.outcome.segment.is_some())
            .enumerate()
        {
            let p = h[k + 1];
            w.write_record([
                (k + 1).to_string(),
                format!("{:?}", p[0]),
                format!("{:?}", p[1]),
                format!("{:?}", headings[k + 1]),
                rec.au.map_or_else(|| "-".to_string(), |a| a.to_string()),
                rec.state.map_or_else(|| "-".to_string(), |s| s.to_string()),
                (rec.outcome.evals_used + rec.gate_evals).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Heading after each history entry.
    fn headings(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.track.history.len());
        let turn = self.turn_angle;
        let mut heading = self.initial_heading;
        out.push(heading);
        for rec in self.records.iter().filter(|r| r.outcome.segment.is_some()) {
            match rec.au {
                Some(AuLabel::LeftTurn) => heading = wrap_angle(heading + turn),
                Some(AuLabel::RightTurn) => heading = wrap_angle(heading - turn),
                _ => {}
            }
            out.push(heading);
        }
        out
    }
}

fn at_cursor(cursor: usize) -> impl Fn(LocatorError) -> LocatorError {
    move |e| LocatorError::AtCursor {
        cursor,
        source: Box::new(e),
    }
}

/// Segments, recognises and integrates a whole smoothed stream.
///
/// A strategy is only invoked while the stream still holds its full
/// lookahead (60 samples for the conventional window, `max_tokens` tokens
/// for the token window); the shorter remainder is reported as
/// `tail_samples`. The signal-processing strategy stops at the first cursor
/// with no zero-crossing boundary ahead.
pub fn run_pipeline(
    stream: &SmoothedStream,
    cfg: &PipelineConfig,
    models: Models<'_>,
    table: &StepLengthTable,
) -> Result<PipelineRun, LocatorError> {
    let started = Instant::now();
    let mut track = TrackState::new(cfg.origin, cfg.initial_heading);
    let mut records = Vec::new();
    let mut latency = LatencyReport {
        strategy: cfg.strategy,
        decisions: 0,
        aus: 0,
        window_evals: 0,
        gate_evals: 0,
        wall_ns: 0,
        smoothing_delay_ms: if stream.rate_hz() > 0.0 {
            stream.delay_ms()
        } else {
            0.0
        },
        tail_samples: stream.len(),
    };
    if stream.is_empty() {
        return Ok(PipelineRun {
            track,
            records,
            latency,
            turn_angle: cfg.turn_angle,
            initial_heading: cfg.initial_heading,
        });
    }
    let sp = match cfg.strategy {
        StrategyKind::Sp | StrategyKind::Fusion => {
            let axis = pdr::select_step_axis(stream)?;
            let tau = pdr::threshold_above_mean(stream, axis, cfg.tau_above_mean);
            let steps = pdr::detect_steps(stream, axis, tau)?;
            Some(SpSegmenter::new(stream, &steps, axis, &cfg.zero_crossing)?)
        }
        _ => None,
    };
    let span = cfg.tokens.span();
    let mut cursor = 0;
    while cursor < stream.len() {
        let tail = stream.len() - cursor;
        let step = match cfg.strategy {
            StrategyKind::Conventional if tail >= CONVENTIONAL_MAX_LEN => {
                Some(conventional_dw(stream, cursor, models.action_unit))
            }
            StrategyKind::Nlp if tail >= span => {
                Some(nlp_dw(stream, cursor, models.action_unit, &cfg.tokens))
            }
            StrategyKind::Sp => {
                let sp = sp.as_ref().expect("sp segmenter");
                match sp_classified(stream, cursor, sp, models.action_unit) {
                    Err(WindowError::NoBoundaryFound { .. }) => None,
                    other => Some(other),
                }
            }
            StrategyKind::Fusion => {
                let sp = sp.as_ref().expect("sp segmenter");
                if sp.next_boundary(cursor).is_ok() || tail >= span {
                    Some(sp_nlp_fusion(
                        stream,
                        cursor,
                        sp,
                        models.action_unit,
                        &cfg.tokens,
                        &cfg.thresholds,
                    ))
                } else {
                    None
                }
            }
            _ => None,
        };
        let Some(outcome) = step else { break };
        let outcome = outcome.map_err(|e| at_cursor(cursor)(e.into()))?;
        latency.decisions += 1;
        latency.window_evals += u64::from(outcome.evals_used);
        let mut record = AuRecord {
            cursor,
            outcome,
            state: None,
            au: None,
            gate_evals: 0,
        };
        if let (Some(seg), Some(verdict)) = (&record.outcome.segment, &record.outcome.verdict) {
            let gated =
                gate_with_au_verdict(seg, models.move_state, verdict).map_err(at_cursor(cursor))?;
            record.gate_evals = gated.evals();
            record.state = Some(gated.state);
            record.au = gated.au;
            match gated.au {
                Some(au) => track
                    .apply(au, gated.state, table, &cfg.subject, cfg.turn_angle)
                    .map_err(at_cursor(cursor))?,
                None => track.hold(),
            }
            latency.aus += 1;
            latency.gate_evals += u64::from(record.gate_evals);
        }
        let next = record.outcome.next_cursor;
        records.push(record);
        if next <= cursor {
            break;
        }
        cursor = next;
    }
    latency.tail_samples = stream.len() - cursor.min(stream.len());
    latency.wall_ns = started.elapsed().as_nanos() as u64;
    Ok(PipelineRun {
        track,
        records,
        latency,
        turn_angle: cfg.turn_angle,
        initial_heading: cfg.initial_heading,
    })
}

/// Replays ground-truth labels through the estimator alone, with the same
/// gating as the pipeline: AUs outside walking and running hold position.
pub fn run_ground_truth(
    labels: &[LabelRow],
    table: &StepLengthTable,
    cfg: &PipelineConfig,
) -> Result<TrackState, LocatorError> {
    let mut track = TrackState::new(cfg.origin, cfg.initial_heading);
    for row in labels {
        if row.state.is_planar() {
            track.apply(row.au, row.state, table, &cfg.subject, cfg.turn_angle)?;
        } else {
            track.hold();
        }
    }
    Ok(track)
}

pub fn endpoint_error(a: &TrackState, b: &TrackState) -> f64 {
    let dx = a.position[0] - b.position[0];
    let dy = a.position[1] - b.position[1];
    dx.hypot(dy)
}
