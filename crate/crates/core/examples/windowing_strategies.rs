//! Segment one walking bout with all four windowing strategies and compare
//! how many classifier passes each spends per decision.
//!
//! A stand-in classifier is used so the example runs instantly: its
//! confidence falls off with the distance between the window length and one
//! step (20 samples at 50 Hz).
//!
//! cargo run --example windowing_strategies

use odw::imu;
use odw::labels::{AuLabel, Label, MoveState};
use odw::pdr;
use odw::seqnet::{ClassifierVerdict, SeqnetError};
use odw::synthgen::{self, Amount, NoiseSpec, PathScript, ScriptSegment};
use odw::windowing::{
    self, FusionThresholds, SegmentClassifier, SpSegmenter, TokenConfig, WindowError,
    ZeroCrossingConfig,
};

struct StepLength;

impl SegmentClassifier for StepLength {
    fn classify_window(&self, window: &[[f64; 6]]) -> Result<ClassifierVerdict, SeqnetError> {
        let off = (window.len() as f64 - 20.0).abs();
        let top = (-off / 6.0).exp().max(1.0 / 7.0);
        let mut p = vec![(1.0 - top) / 6.0; AuLabel::count()];
        p[AuLabel::NormalStep.index()] = top;
        Ok(ClassifierVerdict::from_probabilities(p))
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seg = |state, au, n| ScriptSegment {
        state,
        au,
        amount: Amount::Count(n),
    };
    let mut script = PathScript::new(vec![
        seg(MoveState::Stop, AuLabel::Stop, 1),
        seg(MoveState::Walking, AuLabel::NormalStep, 12),
        seg(MoveState::Stop, AuLabel::Stop, 2),
    ]);
    script.noise = NoiseSpec::NONE;
    let trace = synthgen::generate(&script, 50.0)?;
    let stream = imu::smooth(&trace.samples, imu::DEFAULT_SMOOTH_N)?;
    let axis = pdr::select_step_axis(&stream)?;
    let steps = pdr::detect_steps(&stream, axis, pdr::threshold_above_mean(&stream, axis, 1.2))?;
    let sp = SpSegmenter::new(&stream, &steps, axis, &ZeroCrossingConfig::default())?;
    let tokens = TokenConfig::default();
    let th = FusionThresholds::default();
    let clf = StepLength;

    let cursor = sp.next_boundary(0)?;
    println!("first zero-crossing boundary at smoothed sample {cursor}");
    let conv = windowing::conventional_dw(&stream, cursor, &clf)?;
    let nlp = windowing::nlp_dw(&stream, cursor, &clf, &tokens)?;
    let spc = windowing::sp_classified(&stream, cursor, &sp, &clf)?;
    let fusion = windowing::sp_nlp_fusion(&stream, cursor, &sp, &clf, &tokens, &th)?;
    for (name, o) in [
        ("conventional", &conv),
        ("nlp", &nlp),
        ("sp", &spc),
        ("fusion", &fusion),
    ] {
        let (s, e) = o
            .segment
            .as_ref()
            .map_or((cursor, o.next_cursor), |s| (s.start_idx, s.end_idx));
        let conf = o.verdict.as_ref().map_or(0.0, |v| v.top());
        println!(
            "{name:>12}: [{s}, {e}) evals {:>2} confidence {conf:.3} via {:?}",
            o.evals_used, o.path
        );
    }

    // Walk the whole bout with fusion and write the segmentation trace.
    let mut outcomes = Vec::new();
    let mut c = 0;
    loop {
        match windowing::sp_nlp_fusion(&stream, c, &sp, &clf, &tokens, &th) {
            Ok(o) => {
                let next = o.next_cursor;
                outcomes.push((c, o));
                c = next;
            }
            Err(WindowError::StreamExhausted { .. }) => break,
            Err(e) => return Err(e.into()),
        }
    }
    let mut csv = Vec::new();
    windowing::write_segmentation_trace::<AuLabel, _>(
        windowing::StrategyKind::Fusion,
        &outcomes,
        &mut csv,
    )?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}
