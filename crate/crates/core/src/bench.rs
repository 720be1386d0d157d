//! Training and evaluation over synthetic suites: ground-truth windows,
//! confusion matrices and the per-strategy benchmark report.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::imu::{self, LabelRow, SmoothedStream, DEFAULT_SMOOTH_N};
use crate::labels::{AnyLabel, AuLabel, Family, Label, MoveState};
use crate::locator::{
    endpoint_error, run_ground_truth, run_pipeline, LocatorError, Models, PipelineConfig,
    PipelineRun, StepLengthTable,
};
use crate::seqnet::{self, classify, Example, LstmParams, SeqnetError, TrainConfig};
use crate::synthgen::GeneratedTrace;
use crate::windowing::StrategyKind;

pub const MOVE_MODEL_FILE: &str = "move_state.odw";
pub const AU_MODEL_FILE: &str = "action_unit.odw";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Imu(#[from] imu::ImuError),
    #[error(transparent)]
    Seqnet(#[from] SeqnetError),
    #[error(transparent)]
    Locator(#[from] LocatorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Square count matrix, rows are ground truth and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub family: Family,
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new<L: Label>() -> Self {
        let n = L::count();
        ConfusionMatrix {
            family: L::FAMILY,
            labels: L::ALL.iter().map(|l| l.to_string()).collect(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn add<L: Label>(&mut self, truth: L, predicted: L) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, x) in row.iter_mut().zip(o) {
                *c += x;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    /// Header row `truth\predicted,<labels>` then one row per true label.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["truth\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(4)
            .max(6);
        let mut out = format!("{:>width$}", "");
        for l in &self.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l:>width$}");
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "accuracy {:.4} ({}/{})",
            self.accuracy(),
            self.correct(),
            self.total()
        );
        out
    }
}

/// A trace smoothed once, with its labels mapped into smoothed indices.
#[derive(Debug, Clone)]
pub struct PreparedTrace {
    pub name: String,
    pub stream: SmoothedStream,
    /// Ground truth with `start_idx`/`end_idx` in smoothed-stream indices.
    pub labels: Vec<LabelRow>,
    /// Ground truth as generated, in raw indices.
    pub raw_labels: Vec<LabelRow>,
}

impl PreparedTrace {
    pub fn new(name: &str, trace: &GeneratedTrace, smooth_n: usize) -> Result<Self, BenchError> {
        let mut stream = imu::smooth(&trace.samples, smooth_n)?;
        stream = SmoothedStream::from_samples(stream.samples().to_vec(), smooth_n, trace.rate_hz);
        let labels = trace
            .labels
            .iter()
            .filter_map(|r| {
                let start_idx = stream.raw_to_smoothed(r.start_idx);
                let end_idx = stream.raw_to_smoothed(r.end_idx);
                (end_idx > start_idx).then_some(LabelRow {
                    start_idx,
                    end_idx,
                    ..*r
                })
            })
            .collect();
        Ok(PreparedTrace {
            name: name.to_string(),
            stream,
            labels,
            raw_labels: trace.labels.clone(),
        })
    }

    pub fn window(&self, start: usize, end: usize) -> Vec<[f64; 6]> {
        self.stream.samples()[start..end]
            .iter()
            .map(|s| s.inertial())
            .collect()
    }
}

/// Boundary jitter used to widen the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Extra copies of each labelled window.
    pub copies: usize,
    /// Maximum boundary shift, in samples, for the copies.
    pub jitter: usize,
    /// Windows per labelled row that start on its boundary and run for a
    /// random length, labelled by the row they overlap most.
    pub spans: usize,
    /// Length range of those windows, in samples.
    pub span_len: (usize, usize),
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            copies: 2,
            jitter: 4,
            spans: 1,
            span_len: (8, 60),
            seed: 17,
        }
    }
}

fn label_of(row: &LabelRow, family: Family) -> AnyLabel {
    match family {
        Family::MoveState => AnyLabel::Move(row.state),
        Family::ActionUnit => AnyLabel::Au(row.au),
    }
}

/// Ground-truth windows of one label family, plus jittered copies and
/// boundary-anchored spans.
pub fn training_examples(
    traces: &[PreparedTrace],
    family: Family,
    aug: &AugmentConfig,
) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(aug.seed);
    let mut out = Vec::new();
    for t in traces {
        let len = t.stream.len();
        for row in &t.labels {
            let label = label_of(row, family);
            for _ in 0..aug.spans {
                let (lo, hi) = aug.span_len;
                let e = (row.start_idx + rng.random_range(lo.max(1)..=hi.max(lo.max(1)))).min(len);
                if let Some(best) = best_overlap(&t.labels, row.start_idx, e) {
                    out.push(Example {
                        window: t.window(row.start_idx, e),
                        label: label_of(best, family),
                    });
                }
            }
            out.push(Example {
                window: t.window(row.start_idx, row.end_idx),
                label,
            });
            let j = aug.jitter as i64;
            for _ in 0..aug.copies {
                let s = (row.start_idx as i64 + rng.random_range(-j..=j)).clamp(0, len as i64 - 1)
                    as usize;
                let e = (row.end_idx as i64 + rng.random_range(-j..=j))
                    .clamp(s as i64 + 1, len as i64) as usize;
                out.push(Example {
                    window: t.window(s, e),
                    label,
                });
            }
        }
    }
    out
}

/// Movement-state model and Action Unit model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair {
    pub move_state: LstmParams,
    pub action_unit: LstmParams,
}

impl ModelPair {
    pub fn models(&self) -> Models<'_> {
        Models {
            move_state: &self.move_state,
            action_unit: &self.action_unit,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), BenchError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        seqnet::save_params(&self.move_state, dir.join(MOVE_MODEL_FILE))?;
        seqnet::save_params(&self.action_unit, dir.join(AU_MODEL_FILE))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, BenchError> {
        let dir = dir.as_ref();
        Ok(ModelPair {
            move_state: seqnet::load_params(dir.join(MOVE_MODEL_FILE))?,
            action_unit: seqnet::load_params(dir.join(AU_MODEL_FILE))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub move_examples: usize,
    pub au_examples: usize,
    pub move_loss: Vec<f64>,
    pub au_loss: Vec<f64>,
}

/// Trains both models on ground-truth windows, the two in parallel.
pub fn train_models(
    traces: &[PreparedTrace],
    cfg: &TrainConfig,
    aug: &AugmentConfig,
) -> Result<(ModelPair, TrainingSummary), BenchError> {
    let move_data = training_examples(traces, Family::MoveState, aug);
    let au_data = training_examples(traces, Family::ActionUnit, aug);
    let au_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(1),
        ..*cfg
    };
    let (m, a) = rayon::join(
        || seqnet::train(&move_data, cfg),
        || seqnet::train(&au_data, &au_cfg),
    );
    let (m, a) = (m?, a?);
    let summary = TrainingSummary {
        move_examples: move_data.len(),
        au_examples: au_data.len(),
        move_loss: m.loss_history,
        au_loss: a.loss_history,
    };
    Ok((
        ModelPair {
            move_state: m.params,
            action_unit: a.params,
        },
        summary,
    ))
}

/// AU label the two-stage pipeline reports for a window whose movement
/// state is already known: non-planar states report Stop.
fn gated_au(state: MoveState, au: Option<AuLabel>) -> AuLabel {
    match au {
        Some(a) if state.is_planar() => a,
        _ => AuLabel::Stop,
    }
}

/// Ground truth AUs are scored when the user walks, runs or stands.
fn au_scored(state: MoveState) -> bool {
    state.is_planar() || state == MoveState::Stop
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthEval {
    pub move_state: ConfusionMatrix,
    pub action_unit: ConfusionMatrix,
}

/// Classifies every ground-truth window of the traces.
pub fn evaluate_ground_truth(
    models: &ModelPair,
    traces: &[PreparedTrace],
) -> Result<GroundTruthEval, BenchError> {
    let parts: Result<Vec<GroundTruthEval>, BenchError> = traces
        .par_iter()
        .map(|t| {
            let mut ms = ConfusionMatrix::new::<MoveState>();
            let mut au = ConfusionMatrix::new::<AuLabel>();
            for row in &t.labels {
                let w = t.window(row.start_idx, row.end_idx);
                let state: MoveState = classify(&models.move_state, &w)?
                    .label_as()
                    .ok_or(LocatorError::UnknownClass(usize::MAX))?;
                ms.add(row.state, state);
                if au_scored(row.state) {
                    let predicted = if state.is_planar() {
                        classify(&models.action_unit, &w)?.label_as::<AuLabel>()
                    } else {
                        None
                    };
                    au.add(row.au, gated_au(state, predicted));
                }
            }
            Ok(GroundTruthEval {
                move_state: ms,
                action_unit: au,
            })
        })
        .collect();
    let mut total = GroundTruthEval {
        move_state: ConfusionMatrix::new::<MoveState>(),
        action_unit: ConfusionMatrix::new::<AuLabel>(),
    };
    for p in parts? {
        total.move_state.merge(&p.move_state);
        total.action_unit.merge(&p.action_unit);
    }
    Ok(total)
}

/// Ground-truth row overlapping `[start, end)` the most; ties go to the
/// earlier row.
pub fn best_overlap(labels: &[LabelRow], start: usize, end: usize) -> Option<&LabelRow> {
    let mut best: Option<(&LabelRow, usize)> = None;
    for row in labels {
        let lo = row.start_idx.max(start);
        let hi = row.end_idx.min(end);
        if hi > lo && best.is_none_or(|(_, b)| hi - lo > b) {
            best = Some((row, hi - lo));
        }
    }
    best.map(|(r, _)| r)
}

/// Per-trace, per-strategy benchmark line.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub trace: String,
    pub strategy: StrategyKind,
    pub decisions: usize,
    pub aus: usize,
    pub window_evals: u64,
    pub gate_evals: u64,
    pub au_correct: u64,
    pub au_scored: u64,
    pub endpoint_error_m: f64,
    pub tail_samples: usize,
    pub wall_ns: u64,
}

impl BenchRow {
    pub fn evals_per_au(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.window_evals as f64 / self.decisions as f64
        }
    }
}

/// Confusion matrices of one strategy's accepted segments against the
/// ground-truth row each overlaps most.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentScores {
    pub action_unit: ConfusionMatrix,
    pub move_state: ConfusionMatrix,
}

impl SegmentScores {
    fn new() -> Self {
        SegmentScores {
            action_unit: ConfusionMatrix::new::<AuLabel>(),
            move_state: ConfusionMatrix::new::<MoveState>(),
        }
    }

    fn merge(&mut self, other: &SegmentScores) {
        self.action_unit.merge(&other.action_unit);
        self.move_state.merge(&other.move_state);
    }
}

/// Scores a pipeline run against a trace's smoothed-index ground truth.
pub fn score_run(run: &PipelineRun, labels: &[LabelRow]) -> SegmentScores {
    let mut scores = SegmentScores::new();
    for rec in &run.records {
        let (Some(seg), Some(state)) = (&rec.outcome.segment, rec.state) else {
            continue;
        };
        if let Some(truth) = best_overlap(labels, seg.start_idx, seg.end_idx) {
            scores.move_state.add(truth.state, state);
            if au_scored(truth.state) {
                scores.action_unit.add(truth.au, gated_au(state, rec.au));
            }
        }
    }
    scores
}

/// Runs one strategy over one trace and scores it against ground truth.
pub fn evaluate_strategy(
    models: &ModelPair,
    trace: &PreparedTrace,
    cfg: &PipelineConfig,
    table: &StepLengthTable,
) -> Result<(BenchRow, SegmentScores, PipelineRun), BenchError> {
    let run = run_pipeline(&trace.stream, cfg, models.models(), table)?;
    let scores = score_run(&run, &trace.labels);
    let gt = run_ground_truth(&trace.raw_labels, table, cfg)?;
    let row = BenchRow {
        trace: trace.name.clone(),
        strategy: cfg.strategy,
        decisions: run.latency.decisions,
        aus: run.latency.aus,
        window_evals: run.latency.window_evals,
        gate_evals: run.latency.gate_evals,
        au_correct: scores.action_unit.correct(),
        au_scored: scores.action_unit.total(),
        endpoint_error_m: endpoint_error(&run.track, &gt),
        tail_samples: run.latency.tail_samples,
        wall_ns: run.latency.wall_ns,
    };
    Ok((row, scores, run))
}

/// Aggregate of one strategy over a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub decisions: usize,
    pub aus: usize,
    pub window_evals: u64,
    pub mean_evals_per_au: f64,
    pub au_accuracy: f64,
    pub state_accuracy: f64,
    pub mean_endpoint_error_m: f64,
    pub wall_ns: u64,
    pub scores: SegmentScores,
}

impl StrategySummary {
    pub fn mean_wall_ns_per_au(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.wall_ns as f64 / self.decisions as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<StrategySummary>,
    pub ground_truth: GroundTruthEval,
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "strategy",
    "mean_evals_per_au",
    "au_accuracy",
    "state_accuracy",
    "endpoint_error_m",
    "aus_detected",
    "decisions",
    "mean_wall_ns_per_au",
];

pub const TRACE_HEADER: [&str; 12] = [
    "trace",
    "strategy",
    "decisions",
    "aus",
    "window_evals",
    "gate_evals",
    "evals_per_au",
    "au_correct",
    "au_scored",
    "endpoint_error_m",
    "tail_samples",
    "wall_ns",
];

impl BenchReport {
    pub fn summary(&self, strategy: StrategyKind) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    /// One row per strategy. Wall time is the last column and the only one
    /// that varies between seeded reruns.
    pub fn write_csv<W: Write>(&self, sink: W, with_wall_time: bool) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(sink);
        let cols = if with_wall_time {
            SUMMARY_HEADER.len()
        } else {
            SUMMARY_HEADER.len() - 1
        };
        w.write_record(&SUMMARY_HEADER[..cols])?;
        for s in &self.summaries {
            let rec = [
                s.strategy.to_string(),
                format!("{:.6}", s.mean_evals_per_au),
                format!("{:.6}", s.au_accuracy),
                format!("{:.6}", s.state_accuracy),
                format!("{:.6}", s.mean_endpoint_error_m),
                s.aus.to_string(),
                s.decisions.to_string(),
                format!("{:.1}", s.mean_wall_ns_per_au()),
            ];
            w.write_record(&rec[..cols])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-trace rows, same wall-time convention as [`BenchReport::write_csv`].
    pub fn write_trace_csv<W: Write>(
        &self,
        sink: W,
        with_wall_time: bool,
    ) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(sink);
        let cols = if with_wall_time {
            TRACE_HEADER.len()
        } else {
            TRACE_HEADER.len() - 1
        };
        w.write_record(&TRACE_HEADER[..cols])?;
        for r in &self.rows {
            let rec = [
                r.trace.clone(),
                r.strategy.to_string(),
                r.decisions.to_string(),
                r.aus.to_string(),
                r.window_evals.to_string(),
                r.gate_evals.to_string(),
                format!("{:.6}", r.evals_per_au()),
                r.au_correct.to_string(),
                r.au_scored.to_string(),
                format!("{:.6}", r.endpoint_error_m),
                r.tail_samples.to_string(),
                r.wall_ns.to_string(),
            ];
            w.write_record(&rec[..cols])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<13} {:>9} {:>11} {:>10} {:>9} {:>9} {:>11} {:>12}",
            "strategy",
            "decisions",
            "evals",
            "evals/AU",
            "AU acc",
            "state acc",
            "endpoint m",
            "us/AU"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<13} {:>9} {:>11} {:>10.3} {:>9.4} {:>9.4} {:>11.3} {:>12.1}",
                s.strategy.name(),
                s.decisions,
                s.window_evals,
                s.mean_evals_per_au,
                s.au_accuracy,
                s.state_accuracy,
                s.mean_endpoint_error_m,
                s.mean_wall_ns_per_au() / 1e3
            );
        }
        let _ = writeln!(
            out,
            "ground-truth windows: movement state {:.4}, action unit {:.4}",
            self.ground_truth.move_state.accuracy(),
            self.ground_truth.action_unit.accuracy()
        );
        out
    }
}

/// Evaluates each strategy on every trace. Traces run in parallel on the
/// current rayon pool; row order is trace-major and fixed.
pub fn run_bench(
    models: &ModelPair,
    traces: &[PreparedTrace],
    strategies: &[StrategyKind],
    base: &PipelineConfig,
    table: &StepLengthTable,
) -> Result<BenchReport, BenchError> {
    let per_trace: Result<Vec<Vec<(BenchRow, SegmentScores)>>, BenchError> = traces
        .par_iter()
        .map(|t| {
            strategies
                .iter()
                .map(|&strategy| {
                    let cfg = PipelineConfig {
                        strategy,
                        ..base.clone()
                    };
                    evaluate_strategy(models, t, &cfg, table).map(|(row, sc, _)| (row, sc))
                })
                .collect()
        })
        .collect();
    let per_trace = per_trace?;
    let mut rows = Vec::new();
    let mut summaries: Vec<StrategySummary> = strategies
        .iter()
        .map(|&strategy| StrategySummary {
            strategy,
            decisions: 0,
            aus: 0,
            window_evals: 0,
            mean_evals_per_au: 0.0,
            au_accuracy: 0.0,
            state_accuracy: 0.0,
            mean_endpoint_error_m: 0.0,
            wall_ns: 0,
            scores: SegmentScores::new(),
        })
        .collect();
    for trace_rows in per_trace {
        for (i, (row, sc)) in trace_rows.into_iter().enumerate() {
            let s = &mut summaries[i];
            s.decisions += row.decisions;
            s.aus += row.aus;
            s.window_evals += row.window_evals;
            s.mean_endpoint_error_m += row.endpoint_error_m;
            s.wall_ns += row.wall_ns;
            s.scores.merge(&sc);
            rows.push(row);
        }
    }
    for s in &mut summaries {
        s.mean_evals_per_au = if s.decisions == 0 {
            0.0
        } else {
            s.window_evals as f64 / s.decisions as f64
        };
        s.au_accuracy = s.scores.action_unit.accuracy();
        s.state_accuracy = s.scores.move_state.accuracy();
        s.mean_endpoint_error_m /= traces.len().max(1) as f64;
    }
    let ground_truth = evaluate_ground_truth(models, traces)?;
    Ok(BenchReport {
        rows,
        summaries,
        ground_truth,
    })
}

/// Smooths every trace of a suite with the default window.
pub fn prepare_all<'a, I>(traces: I) -> Result<Vec<PreparedTrace>, BenchError>
where
    I: IntoIterator<Item = (&'a str, &'a GeneratedTrace)>,
{
    traces
        .into_iter()
        .map(|(name, t)| PreparedTrace::new(name, t, DEFAULT_SMOOTH_N))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_accuracy() {
        let mut cm = ConfusionMatrix::new::<MoveState>();
        cm.add(MoveState::Walking, MoveState::Walking);
        cm.add(MoveState::Walking, MoveState::Running);
        cm.add(MoveState::Stop, MoveState::Stop);
        cm.add(MoveState::UpStairs, MoveState::UpStairs);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.accuracy(), 0.75);
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "truth\\predicted,Walking,Running,Stop,DownStairs,UpStairs\nWalking,1,1,0,0,0\n"
        ));
    }

    #[test]
    fn overlap_picks_largest() {
        let rows = [
            LabelRow {
                start_idx: 0,
                end_idx: 10,
                au: AuLabel::Stop,
                state: MoveState::Stop,
            },
            LabelRow {
                start_idx: 10,
                end_idx: 30,
                au: AuLabel::NormalStep,
                state: MoveState::Walking,
            },
        ];
        assert_eq!(best_overlap(&rows, 5, 25).unwrap().au, AuLabel::NormalStep);
        assert_eq!(best_overlap(&rows, 0, 20).unwrap().au, AuLabel::Stop);
        assert!(best_overlap(&rows, 40, 50).is_none());
    }
}
