//! Online dynamic windows: four ways of cutting the next Action Unit
//! candidate off a smoothed stream, each reporting how many classifier
//! passes it spent.
//!
//! * [`conventional_dw`] scores every length in `[20, 60]` samples.
//! * [`nlp_dw`] scores lengths that are whole multiples of a token.
//! * [`SpSegmenter`] places boundaries at rule-filtered zero crossings
//!   between step peaks and spends no classifier passes doing so.
//! * [`sp_nlp_fusion`] accepts the signal-processing cut when the classifier
//!   is confident enough, and otherwise searches token-shifted end
//!   boundaries around it.
//!
//! The caller owns the cursor: every call starts at `cursor` and the outcome
//! says where the next call should start.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::imu::SmoothedStream;
use crate::labels::Label;
use crate::pdr::{Axis, StepEvent};
use crate::seqnet::{self, ClassifierVerdict, LstmParams, SeqnetError};

pub const CONVENTIONAL_MIN_LEN: usize = 20;
pub const CONVENTIONAL_MAX_LEN: usize = 60;

pub const DEFAULT_TOKEN_LEN: usize = 10;
pub const DEFAULT_MAX_TOKENS: usize = 6;
pub const DEFAULT_K: usize = 4;
pub const DEFAULT_TAU1: f64 = 0.80;
pub const DEFAULT_TAU2: f64 = 0.70;
/// Zero-crossing vicinity as a multiple of the step-axis standard deviation.
pub const DEFAULT_EPS_SCALE: f64 = 0.3;
pub const DEFAULT_DELTA_MID: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum WindowError {
    #[error("stream exhausted at cursor {cursor}")]
    StreamExhausted { cursor: usize },
    #[error("no zero-crossing boundary after cursor {cursor}")]
    NoBoundaryFound { cursor: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Classifier(#[from] SeqnetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Conventional,
    Nlp,
    Sp,
    Fusion,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Conventional,
        StrategyKind::Nlp,
        StrategyKind::Sp,
        StrategyKind::Fusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Conventional => "conventional",
            StrategyKind::Nlp => "nlp",
            StrategyKind::Sp => "sp",
            StrategyKind::Fusion => "fusion",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = WindowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| WindowError::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

/// A contiguous slice `[start_idx, end_idx)` of the smoothed stream proposed
/// as one Action Unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start_idx: usize,
    pub end_idx: usize,
    /// Accelerometer and gyroscope channels of the slice.
    pub samples: Vec<[f64; 6]>,
    pub origin: StrategyKind,
}

impl Segment {
    pub fn from_stream(
        stream: &SmoothedStream,
        start: usize,
        end: usize,
        origin: StrategyKind,
    ) -> Self {
        debug_assert!(start < end && end <= stream.len());
        Segment {
            start_idx: start,
            end_idx: end,
            samples: stream.samples()[start..end]
                .iter()
                .map(|s| s.inertial())
                .collect(),
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx
    }

    pub fn is_empty(&self) -> bool {
        self.end_idx == self.start_idx
    }
}

/// Anything that can score a window. Each call counts as one evaluation.
pub trait SegmentClassifier {
    fn classify_window(&self, window: &[[f64; 6]]) -> Result<ClassifierVerdict, SeqnetError>;
}

impl SegmentClassifier for LstmParams {
    fn classify_window(&self, window: &[[f64; 6]]) -> Result<ClassifierVerdict, SeqnetError> {
        seqnet::classify(self, window)
    }
}

impl<C: SegmentClassifier + ?Sized> SegmentClassifier for &C {
    fn classify_window(&self, window: &[[f64; 6]]) -> Result<ClassifierVerdict, SeqnetError> {
        (**self).classify_window(window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenConfig {
    pub token_len: usize,
    pub max_tokens: usize,
    /// Neighbour tokens searched around a signal-processing boundary.
    pub k: usize,
}

impl Default for TokenConfig {
    fn default() -> Self {
        TokenConfig {
            token_len: DEFAULT_TOKEN_LEN,
            max_tokens: DEFAULT_MAX_TOKENS,
            k: DEFAULT_K,
        }
    }
}

impl TokenConfig {
    pub fn validate(&self) -> Result<(), WindowError> {
        if self.token_len == 0 || self.max_tokens == 0 {
            return Err(WindowError::InvalidConfig(
                "token_len and max_tokens must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Longest candidate the token search can build.
    pub fn span(&self) -> usize {
        self.token_len * self.max_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionThresholds {
    /// Confidence needed to accept the signal-processing segment as is.
    pub tau1: f64,
    /// Confidence needed to accept the best token-shifted candidate.
    pub tau2: f64,
}

impl Default for FusionThresholds {
    fn default() -> Self {
        FusionThresholds {
            tau1: DEFAULT_TAU1,
            tau2: DEFAULT_TAU2,
        }
    }
}

impl FusionThresholds {
    pub fn validate(&self) -> Result<(), WindowError> {
        let ok = |t: f64| (0.0..=1.0).contains(&t);
        if ok(self.tau1) && ok(self.tau2) {
            Ok(())
        } else {
            Err(WindowError::InvalidConfig(format!(
                "thresholds must lie in [0, 1], got tau1={} tau2={}",
                self.tau1, self.tau2
            )))
        }
    }
}

/// Reference level subtracted from the step axis before looking for zero
/// crossings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// Mean of the step axis over the stream; removes gravity.
    StreamMean,
    Fixed(f64),
}

/// Rules for picking an AU boundary between two consecutive step peaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCrossingConfig {
    /// Vicinity band `ε_z = eps_scale · σ` of the baseline-removed axis.
    pub eps_scale: f64,
    /// Allowed distance from the inter-peak midpoint, as a fraction of the
    /// inter-peak interval.
    pub delta_mid: f64,
    pub baseline: Baseline,
    /// Peak pairs examined after the cursor; `None` searches to the end.
    pub lookahead_pairs: Option<usize>,
}

impl Default for ZeroCrossingConfig {
    fn default() -> Self {
        ZeroCrossingConfig {
            eps_scale: DEFAULT_EPS_SCALE,
            delta_mid: DEFAULT_DELTA_MID,
            baseline: Baseline::StreamMean,
            lookahead_pairs: None,
        }
    }
}

/// How a segmentation decision was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionPath {
    /// Best of an exhaustive candidate scan (conventional and token windows).
    Scan,
    /// Signal-processing segment, classified once.
    SpSegment,
    /// Fusion: signal-processing segment confident enough.
    SpAccepted,
    /// Fusion: best token-shifted candidate accepted.
    TokenSearch,
    /// Fusion: no candidate reached the second threshold.
    NoValidAu,
    /// Fusion: no zero-crossing boundary, token window used instead.
    NlpFallback,
}

/// Result of one segmentation call.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationOutcome {
    /// `None` marks "no valid AU".
    pub segment: Option<Segment>,
    pub verdict: Option<ClassifierVerdict>,
    pub evals_used: u32,
    pub wall_ns: u64,
    pub next_cursor: usize,
    pub path: DecisionPath,
}

impl SegmentationOutcome {
    /// Same decision, ignoring elapsed time.
    pub fn same_decision(&self, other: &SegmentationOutcome) -> bool {
        self.segment == other.segment
            && self.verdict == other.verdict
            && self.evals_used == other.evals_used
            && self.next_cursor == other.next_cursor
    }
}

struct Scored {
    segment: Segment,
    verdict: ClassifierVerdict,
}

/// Scores the candidates `[cursor, end)` for each end in order and keeps the
/// most confident. Earlier candidates win ties.
fn best_of<C, I>(
    stream: &SmoothedStream,
    cursor: usize,
    ends: I,
    classifier: &C,
    origin: StrategyKind,
) -> Result<(Option<Scored>, u32), WindowError>
where
    C: SegmentClassifier + ?Sized,
    I: IntoIterator<Item = usize>,
{
    let mut best: Option<Scored> = None;
    let mut evals = 0;
    for end in ends {
        let seg = Segment::from_stream(stream, cursor, end, origin);
        let verdict = classifier.classify_window(&seg.samples)?;
        evals += verdict.evals;
        if best
            .as_ref()
            .is_none_or(|b| verdict.top() > b.verdict.top())
        {
            best = Some(Scored {
                segment: seg,
                verdict,
            });
        }
    }
    Ok((best, evals))
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

fn accepted(scored: Scored, evals: u32, start: Instant, path: DecisionPath) -> SegmentationOutcome {
    let next_cursor = scored.segment.end_idx;
    SegmentationOutcome {
        segment: Some(scored.segment),
        verdict: Some(scored.verdict),
        evals_used: evals,
        wall_ns: elapsed_ns(start),
        next_cursor,
        path,
    }
}

/// Offline-style dynamic window: classifies `[cursor, cursor + L)` for every
/// feasible `L` in `[20, 60]` and keeps the most confident (shorter wins ties).
pub fn conventional_dw<C: SegmentClassifier + ?Sized>(
    stream: &SmoothedStream,
    cursor: usize,
    classifier: &C,
) -> Result<SegmentationOutcome, WindowError> {
    let start = Instant::now();
    let tail = stream.len().saturating_sub(cursor);
    let max_len = tail.min(CONVENTIONAL_MAX_LEN);
    if max_len < CONVENTIONAL_MIN_LEN {
        return Err(WindowError::StreamExhausted { cursor });
    }
    let ends = (CONVENTIONAL_MIN_LEN..=max_len).map(|l| cursor + l);
    let (best, evals) = best_of(stream, cursor, ends, classifier, StrategyKind::Conventional)?;
    let best = best.ok_or(WindowError::StreamExhausted { cursor })?;
    Ok(accepted(best, evals, start, DecisionPath::Scan))
}

/// Token window: candidate lengths `token_len, 2·token_len, …,
/// max_tokens·token_len`, keeping only those that fit in the tail. Fewer
/// tokens win ties.
pub fn nlp_dw<C: SegmentClassifier + ?Sized>(
    stream: &SmoothedStream,
    cursor: usize,
    classifier: &C,
    cfg: &TokenConfig,
) -> Result<SegmentationOutcome, WindowError> {
    cfg.validate()?;
    let start = Instant::now();
    let tail = stream.len().saturating_sub(cursor);
    let fit = (tail / cfg.token_len).min(cfg.max_tokens);
    if fit == 0 {
        return Err(WindowError::StreamExhausted { cursor });
    }
    let ends = (1..=fit).map(|n| cursor + n * cfg.token_len);
    let (best, evals) = best_of(stream, cursor, ends, classifier, StrategyKind::Nlp)?;
    let best = best.ok_or(WindowError::StreamExhausted { cursor })?;
    Ok(accepted(best, evals, start, DecisionPath::Scan))
}

/// Zero-crossing boundary finder over one stream.
///
/// Built once per stream; the baseline-removed step axis and the vicinity
/// band are computed up front. A boundary between consecutive step peaks
/// `p < q` must:
///
/// 1. lie strictly between `p` and `q`,
/// 2. be a sign change whose sample nearest zero is within `ε_z` of zero,
/// 3. lie within `delta_mid · (q − p)` of the midpoint,
/// 4. be the only one kept for the pair: the candidate closest to the
///    midpoint (the earlier on a tie).
#[derive(Debug, Clone)]
pub struct SpSegmenter {
    signal: Vec<f64>,
    peaks: Vec<usize>,
    eps: f64,
    delta_mid: f64,
    lookahead: Option<usize>,
}

impl SpSegmenter {
    pub fn new(
        stream: &SmoothedStream,
        steps: &[StepEvent],
        axis: Axis,
        cfg: &ZeroCrossingConfig,
    ) -> Result<Self, WindowError> {
        if cfg.eps_scale.is_nan() || cfg.eps_scale < 0.0 || !(0.0..=0.5).contains(&cfg.delta_mid) {
            return Err(WindowError::InvalidConfig(format!(
                "eps_scale={} delta_mid={}",
                cfg.eps_scale, cfg.delta_mid
            )));
        }
        let raw = stream.accel_axis(axis.index());
        let level = match cfg.baseline {
            Baseline::StreamMean => crate::pdr::mean(&raw),
            Baseline::Fixed(v) => v,
        };
        let signal: Vec<f64> = raw.iter().map(|v| v - level).collect();
        let n = signal.len().max(1) as f64;
        let m = signal.iter().sum::<f64>() / n;
        let sigma = (signal.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        let mut peaks: Vec<usize> = steps.iter().map(|s| s.peak_idx).collect();
        peaks.sort_unstable();
        Ok(SpSegmenter {
            signal,
            peaks,
            eps: cfg.eps_scale * sigma,
            delta_mid: cfg.delta_mid,
            lookahead: cfg.lookahead_pairs,
        })
    }

    /// Zero-crossing vicinity band in signal units.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    /// Sign changes strictly inside `(a, b)`, each represented by whichever
    /// of its two samples is nearer zero.
    pub fn crossings_between(&self, a: usize, b: usize) -> Vec<usize> {
        let s = &self.signal;
        let mut out: Vec<usize> = Vec::new();
        for i in a + 1..=b.min(s.len().saturating_sub(1)) {
            if (s[i - 1] < 0.0) != (s[i] < 0.0) {
                let idx = if s[i - 1].abs() <= s[i].abs() {
                    i - 1
                } else {
                    i
                };
                if idx > a && idx < b && out.last() != Some(&idx) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// The boundary chosen for the peak pair `(a, b)`, if any.
    pub fn select_crossing(&self, a: usize, b: usize) -> Option<usize> {
        if b <= a + 1 {
            return None;
        }
        let mid = (a + b) as f64 / 2.0;
        let reach = self.delta_mid * (b - a) as f64;
        let mut best: Option<(usize, f64)> = None;
        for idx in self.crossings_between(a, b) {
            if self.signal[idx].abs() > self.eps {
                continue;
            }
            let d = (idx as f64 - mid).abs();
            if d > reach {
                continue;
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((idx, d));
            }
        }
        best.map(|(idx, _)| idx)
    }

    /// First boundary after the first step peak at or beyond `cursor`.
    pub fn next_boundary(&self, cursor: usize) -> Result<usize, WindowError> {
        let first = self.peaks.partition_point(|&p| p < cursor);
        let pairs = self.peaks.len().saturating_sub(first + 1);
        let limit = self.lookahead.map_or(pairs, |l| l.min(pairs));
        for j in first..first + limit {
            if let Some(c) = self.select_crossing(self.peaks[j], self.peaks[j + 1]) {
                if c > cursor {
                    return Ok(c);
                }
            }
        }
        Err(WindowError::NoBoundaryFound { cursor })
    }

    /// Segment from `cursor` to the next boundary. Spends no classifier
    /// passes.
    pub fn next_segment(
        &self,
        stream: &SmoothedStream,
        cursor: usize,
    ) -> Result<Segment, WindowError> {
        let end = self.next_boundary(cursor)?;
        Ok(Segment::from_stream(stream, cursor, end, StrategyKind::Sp))
    }
}

/// Signal-processing window as a free function; builds the boundary finder
/// on every call, so prefer [`SpSegmenter`] in loops.
pub fn sp_dw(
    stream: &SmoothedStream,
    cursor: usize,
    steps: &[StepEvent],
    axis: Axis,
    cfg: &ZeroCrossingConfig,
) -> Result<Segment, WindowError> {
    SpSegmenter::new(stream, steps, axis, cfg)?.next_segment(stream, cursor)
}

/// Signal-processing window followed by a single classification.
pub fn sp_classified<C: SegmentClassifier + ?Sized>(
    stream: &SmoothedStream,
    cursor: usize,
    sp: &SpSegmenter,
    classifier: &C,
) -> Result<SegmentationOutcome, WindowError> {
    let start = Instant::now();
    let segment = sp.next_segment(stream, cursor)?;
    let verdict = classifier.classify_window(&segment.samples)?;
    let evals = verdict.evals;
    Ok(accepted(
        Scored { segment, verdict },
        evals,
        start,
        DecisionPath::SpSegment,
    ))
}

/// Candidate end boundaries `sp_end + d · token_len` for
/// `d ∈ [−⌊k/2⌋, k − ⌊k/2⌋]`, i.e. `k + 1` ends, dropping any that leave the
/// stream or the cursor.
pub fn neighbor_ends(cursor: usize, sp_end: usize, len: usize, cfg: &TokenConfig) -> Vec<usize> {
    let half = (cfg.k / 2) as i64;
    (0..=cfg.k as i64)
        .map(|j| sp_end as i64 + (j - half) * cfg.token_len as i64)
        .filter(|&e| e > cursor as i64 && e <= len as i64)
        .map(|e| e as usize)
        .collect()
}

/// Best of the token-shifted candidates around a signal-processing
/// boundary, with the evaluations spent.
pub fn token_neighbor_search<C: SegmentClassifier + ?Sized>(
    stream: &SmoothedStream,
    cursor: usize,
    sp_end: usize,
    classifier: &C,
    cfg: &TokenConfig,
) -> Result<(Option<(Segment, ClassifierVerdict)>, u32), WindowError> {
    let ends = neighbor_ends(cursor, sp_end, stream.len(), cfg);
    let (best, evals) = best_of(stream, cursor, ends, classifier, StrategyKind::Fusion)?;
    Ok((best.map(|s| (s.segment, s.verdict)), evals))
}

/// Two-threshold cascade over the signal-processing window.
///
/// The SP segment is classified once; with top confidence `Υ ≥ tau1` it is
/// accepted. Otherwise the `k + 1` token-shifted end boundaries are scored
/// and the best (confidence `η`) is accepted if `η ≥ tau2`. Failing both,
/// the outcome is "no valid AU" and the cursor moves on by one token. When no
/// zero-crossing boundary exists the token window decides instead.
pub fn sp_nlp_fusion<C: SegmentClassifier + ?Sized>(
    stream: &SmoothedStream,
    cursor: usize,
    sp: &SpSegmenter,
    classifier: &C,
    cfg: &TokenConfig,
    th: &FusionThresholds,
) -> Result<SegmentationOutcome, WindowError> {
    cfg.validate()?;
    th.validate()?;
    let start = Instant::now();
    let sp_segment = match sp.next_segment(stream, cursor) {
        Ok(seg) => seg,
        Err(WindowError::NoBoundaryFound { .. }) => {
            let mut out = nlp_dw(stream, cursor, classifier, cfg)?;
            out.path = DecisionPath::NlpFallback;
            out.wall_ns = elapsed_ns(start);
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let sp_end = sp_segment.end_idx;
    let verdict = classifier.classify_window(&sp_segment.samples)?;
    let mut evals = verdict.evals;
    if verdict.top() >= th.tau1 {
        let mut segment = sp_segment;
        segment.origin = StrategyKind::Fusion;
        return Ok(accepted(
            Scored { segment, verdict },
            evals,
            start,
            DecisionPath::SpAccepted,
        ));
    }
    let (best, search_evals) = token_neighbor_search(stream, cursor, sp_end, classifier, cfg)?;
    evals += search_evals;
    match best {
        Some((segment, verdict)) if verdict.top() >= th.tau2 => Ok(accepted(
            Scored { segment, verdict },
            evals,
            start,
            DecisionPath::TokenSearch,
        )),
        _ => Ok(SegmentationOutcome {
            segment: None,
            verdict: None,
            evals_used: evals,
            wall_ns: elapsed_ns(start),
            next_cursor: (cursor + cfg.token_len).min(stream.len()),
            path: DecisionPath::NoValidAu,
        }),
    }
}

/// Writes `start_idx,end_idx,strategy,evals,confidence,label` rows. A
/// "no valid AU" outcome spans the samples it skipped and has an empty
/// confidence.
pub fn write_segmentation_trace<L: Label, W: Write>(
    strategy: StrategyKind,
    outcomes: &[(usize, SegmentationOutcome)],
    sink: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "start_idx",
        "end_idx",
        "strategy",
        "evals",
        "confidence",
        "label",
    ])?;
    for (cursor, o) in outcomes {
        let (start, end) = match &o.segment {
            Some(s) => (s.start_idx, s.end_idx),
            None => (*cursor, o.next_cursor),
        };
        let (conf, label) = match &o.verdict {
            Some(v) => (
                format!("{:?}", v.top()),
                v.label_as::<L>()
                    .map_or_else(|| v.label.to_string(), |l| l.to_string()),
            ),
            None => (String::new(), "NoValidAu".to_string()),
        };
        w.write_record([
            start.to_string(),
            end.to_string(),
            strategy.to_string(),
            o.evals_used.to_string(),
            conf,
            label,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu::ImuSample;
    use std::f64::consts::PI;

    /// Confidence as a function of window length.
    struct ByLength<F: Fn(usize) -> f64>(F);

    impl<F: Fn(usize) -> f64> SegmentClassifier for ByLength<F> {
        fn classify_window(&self, window: &[[f64; 6]]) -> Result<ClassifierVerdict, SeqnetError> {
            let p = (self.0)(window.len());
            Ok(ClassifierVerdict::from_probabilities(vec![p, 1.0 - p]))
        }
    }

    fn stream_of(z: &[f64]) -> SmoothedStream {
        let samples = z
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                ImuSample::new(i as i64 * 20, [0.0, 0.0, v], [0.0; 3], [20.0, 0.0, -40.0])
            })
            .collect();
        SmoothedStream::from_samples(samples, 1, 50.0)
    }

    fn flat(len: usize) -> SmoothedStream {
        stream_of(&vec![0.0; len])
    }

    fn steps_at(peaks: &[usize]) -> Vec<StepEvent> {
        peaks
            .iter()
            .map(|&p| StepEvent {
                peak_idx: p,
                magnitude: 1.0,
                t_ms: p as i64 * 20,
                bout_start: false,
            })
            .collect()
    }

    /// Period-20 sine with peaks at 5, 25, 45, ...
    fn sine(len: usize, offset: f64) -> (SmoothedStream, Vec<StepEvent>) {
        let z: Vec<f64> = (0..len)
            .map(|i| (2.0 * PI * i as f64 / 20.0).sin() + offset)
            .collect();
        let peaks: Vec<usize> = (0..len).filter(|i| i % 20 == 5).collect();
        (stream_of(&z), steps_at(&peaks))
    }

    fn fixed_zero() -> ZeroCrossingConfig {
        ZeroCrossingConfig {
            baseline: Baseline::Fixed(0.0),
            ..ZeroCrossingConfig::default()
        }
    }

    #[test]
    fn conventional_spends_41_and_prefers_shorter() {
        let s = flat(100);
        let out = conventional_dw(&s, 0, &ByLength(|_| 0.7)).unwrap();
        assert_eq!(out.evals_used, 41);
        assert_eq!(out.segment.unwrap().end_idx, 20);
        let out = conventional_dw(&s, 10, &ByLength(|l| if l == 37 { 0.9 } else { 0.6 })).unwrap();
        assert_eq!(out.next_cursor, 47);
        assert_eq!(out.path, DecisionPath::Scan);
    }

    #[test]
    fn conventional_short_tail() {
        let s = flat(100);
        assert_eq!(
            conventional_dw(&s, 70, &ByLength(|_| 0.7))
                .unwrap()
                .evals_used,
            11
        );
        assert!(matches!(
            conventional_dw(&s, 85, &ByLength(|_| 0.7)),
            Err(WindowError::StreamExhausted { cursor: 85 })
        ));
    }

    #[test]
    fn nlp_spends_max_tokens_and_prefers_fewer() {
        let s = flat(100);
        let cfg = TokenConfig::default();
        let out = nlp_dw(&s, 0, &ByLength(|_| 0.7), &cfg).unwrap();
        assert_eq!(out.evals_used, 6);
        assert_eq!(out.next_cursor, 10);
        let out = nlp_dw(&s, 0, &ByLength(|l| if l == 40 { 0.95 } else { 0.6 }), &cfg).unwrap();
        assert_eq!(out.next_cursor, 40);
    }

    #[test]
    fn nlp_clips_to_tail() {
        let s = flat(100);
        let cfg = TokenConfig::default();
        assert_eq!(
            nlp_dw(&s, 65, &ByLength(|_| 0.7), &cfg).unwrap().evals_used,
            3
        );
        assert!(matches!(
            nlp_dw(&s, 95, &ByLength(|_| 0.7), &cfg),
            Err(WindowError::StreamExhausted { .. })
        ));
        let bad = TokenConfig {
            token_len: 0,
            ..cfg
        };
        assert!(matches!(
            nlp_dw(&s, 0, &ByLength(|_| 0.7), &bad),
            Err(WindowError::InvalidConfig(_))
        ));
    }

    #[test]
    fn sinusoid_boundary_is_descending_crossing() {
        let (s, steps) = sine(200, 0.0);
        let seg = sp_dw(&s, 0, &steps, Axis::Z, &fixed_zero()).unwrap();
        assert_eq!((seg.start_idx, seg.end_idx), (0, 10));
        let seg = sp_dw(&s, 10, &steps, Axis::Z, &fixed_zero()).unwrap();
        assert_eq!((seg.start_idx, seg.end_idx), (10, 30));
    }

    #[test]
    fn offset_signal_has_no_boundary() {
        let (s, steps) = sine(200, 5.0);
        assert!(matches!(
            sp_dw(&s, 0, &steps, Axis::Z, &fixed_zero()),
            Err(WindowError::NoBoundaryFound { cursor: 0 })
        ));
    }

    #[test]
    fn nearest_midpoint_crossing_wins() {
        let mut z = vec![1.0; 101];
        for v in &mut z[31..48] {
            *v = -1.0;
        }
        z[31] = -0.01;
        z[48] = 0.01;
        let s = stream_of(&z);
        let sp = SpSegmenter::new(&s, &steps_at(&[0, 100]), Axis::Z, &fixed_zero()).unwrap();
        assert_eq!(sp.crossings_between(0, 100), vec![31, 48]);
        assert_eq!(sp.select_crossing(0, 100), Some(48));
    }

    #[test]
    fn crossing_outside_vicinity_rejected() {
        let mut z = vec![1.0; 101];
        for v in &mut z[50..] {
            *v = -1.0;
        }
        let s = stream_of(&z);
        let sp = SpSegmenter::new(&s, &steps_at(&[0, 100]), Axis::Z, &fixed_zero()).unwrap();
        assert_eq!(sp.select_crossing(0, 100), None);
    }

    #[test]
    fn neighbor_end_layout() {
        let cfg = TokenConfig::default();
        assert_eq!(neighbor_ends(0, 50, 100, &cfg), vec![30, 40, 50, 60, 70]);
        assert_eq!(neighbor_ends(25, 50, 65, &cfg), vec![30, 40, 50, 60]);
    }

    fn fusion_setup() -> (SmoothedStream, SpSegmenter, TokenConfig) {
        let (s, steps) = sine(200, 0.0);
        let sp = SpSegmenter::new(&s, &steps, Axis::Z, &fixed_zero()).unwrap();
        let cfg = TokenConfig {
            token_len: 4,
            ..TokenConfig::default()
        };
        (s, sp, cfg)
    }

    #[test]
    fn fusion_accepts_confident_sp_segment() {
        let (s, sp, cfg) = fusion_setup();
        let out = sp_nlp_fusion(
            &s,
            0,
            &sp,
            &ByLength(|_| 0.95),
            &cfg,
            &FusionThresholds::default(),
        )
        .unwrap();
        assert_eq!(out.evals_used, 1);
        assert_eq!(out.path, DecisionPath::SpAccepted);
        assert_eq!(out.next_cursor, 10);
    }

    #[test]
    fn fusion_token_search() {
        let (s, sp, cfg) = fusion_setup();
        let clf = ByLength(|l| match l {
            10 => 0.6,
            14 => 0.9,
            _ => 0.85,
        });
        let out = sp_nlp_fusion(&s, 0, &sp, &clf, &cfg, &FusionThresholds::default()).unwrap();
        assert_eq!(out.evals_used, 6);
        assert_eq!(out.path, DecisionPath::TokenSearch);
        assert_eq!(out.next_cursor, 14);
    }

    #[test]
    fn fusion_no_valid_au_advances_one_token() {
        let (s, sp, cfg) = fusion_setup();
        let out = sp_nlp_fusion(
            &s,
            0,
            &sp,
            &ByLength(|_| 0.55),
            &cfg,
            &FusionThresholds::default(),
        )
        .unwrap();
        assert_eq!(out.path, DecisionPath::NoValidAu);
        assert_eq!(out.evals_used, 6);
        assert!(out.segment.is_none());
        assert_eq!(out.next_cursor, 4);
    }

    #[test]
    fn fusion_threshold_degeneracies() {
        let (s, sp, cfg) = fusion_setup();
        let always = FusionThresholds {
            tau1: 0.0,
            tau2: 0.7,
        };
        let out = sp_nlp_fusion(&s, 0, &sp, &ByLength(|_| 0.5), &cfg, &always).unwrap();
        assert_eq!((out.evals_used, out.path), (1, DecisionPath::SpAccepted));
        let never = FusionThresholds {
            tau1: 1.0,
            tau2: 0.0,
        };
        let out = sp_nlp_fusion(&s, 0, &sp, &ByLength(|_| 0.9), &cfg, &never).unwrap();
        assert_eq!((out.evals_used, out.path), (6, DecisionPath::TokenSearch));
        let bad = FusionThresholds {
            tau1: 1.5,
            tau2: 0.0,
        };
        assert!(sp_nlp_fusion(&s, 0, &sp, &ByLength(|_| 0.9), &cfg, &bad).is_err());
    }

    #[test]
    fn fusion_falls_back_to_tokens_without_boundary() {
        let (s, steps) = sine(200, 5.0);
        let sp = SpSegmenter::new(&s, &steps, Axis::Z, &fixed_zero()).unwrap();
        let out = sp_nlp_fusion(
            &s,
            0,
            &sp,
            &ByLength(|_| 0.9),
            &TokenConfig::default(),
            &FusionThresholds::default(),
        )
        .unwrap();
        assert_eq!((out.evals_used, out.path), (6, DecisionPath::NlpFallback));
    }

    #[test]
    fn trace_csv_marks_no_valid_au() {
        let (s, sp, cfg) = fusion_setup();
        let a = sp_nlp_fusion(
            &s,
            0,
            &sp,
            &ByLength(|_| 0.95),
            &cfg,
            &FusionThresholds::default(),
        )
        .unwrap();
        let b = sp_nlp_fusion(
            &s,
            10,
            &sp,
            &ByLength(|_| 0.55),
            &cfg,
            &FusionThresholds::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_segmentation_trace::<crate::labels::MoveState, _>(
            StrategyKind::Fusion,
            &[(0, a), (10, b)],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "start_idx,end_idx,strategy,evals,confidence,label\n0,10,fusion,1,0.95,Walking\n10,14,fusion,6,,NoValidAu\n"
        );
    }
}
