use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::time::Duration;

use clap::Parser;

use odw::cli::{self, Cli, CliError};
use odw::imu;
use odw::labels::{AuLabel, Label, MoveState};
use odw::locator::{self, Models, PipelineConfig, StepLengthTable};
use odw::pdr;
use odw::seqnet::{ClassifierVerdict, SeqnetError};
use odw::synthgen::{self, Amount, NoiseSpec, PathScript, ScriptSegment};
use odw::windowing::{DecisionPath, SegmentClassifier, StrategyKind};

fn seg(state: MoveState, au: AuLabel, n: u32) -> ScriptSegment {
    ScriptSegment {
        state,
        au,
        amount: Amount::Count(n),
    }
}

fn quiet_script(segments: Vec<ScriptSegment>) -> PathScript {
    let mut s = PathScript::new(segments);
    s.noise = NoiseSpec::NONE;
    s
}

#[test]
fn turn_gyro_integrates_to_quarter_turn() {
    for (au, sign) in [(AuLabel::LeftTurn, 1.0), (AuLabel::RightTurn, -1.0)] {
        let trace =
            synthgen::generate(&quiet_script(vec![seg(MoveState::Walking, au, 1)]), 50.0).unwrap();
        // Trapezoid rule over the rendered samples, independent of how the
        // generator scaled its pulse.
        let gz: Vec<f64> = trace.samples.iter().map(|s| s.gyro[2]).collect();
        let dt = 1.0 / 50.0;
        let area: f64 = gz.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
        assert!(
            (area - sign * FRAC_PI_2).abs() < 0.01 * FRAC_PI_2,
            "{au}: {area}"
        );
    }
}

#[test]
fn four_hertz_cadence_gives_250ms_intervals() {
    let mut script = quiet_script(vec![
        seg(MoveState::Stop, AuLabel::Stop, 1),
        seg(MoveState::Walking, AuLabel::NormalStep, 10),
        seg(MoveState::Stop, AuLabel::Stop, 1),
    ]);
    script.profile.cadence_hz = 4.0;
    let trace = synthgen::generate(&script, 200.0).unwrap();
    let stream = imu::smooth(&trace.samples, imu::DEFAULT_SMOOTH_N).unwrap();
    let axis = pdr::select_step_axis(&stream).unwrap();
    let tau = pdr::threshold_above_mean(&stream, axis, pdr::DEFAULT_TAU_ABOVE_MEAN);
    let steps = pdr::detect_steps(&stream, axis, tau).unwrap();
    assert_eq!(steps.len(), 10);
    for w in steps.windows(2) {
        assert_eq!(w[1].t_ms - w[0].t_ms, 250);
        assert!(!w[1].bout_start);
    }
}

#[test]
fn replay_at_double_speed_halves_elapsed_time() {
    let script = quiet_script(vec![seg(MoveState::Stop, AuLabel::Stop, 1)]);
    let trace = synthgen::generate(&script, 50.0).unwrap();
    // 800 ms of recording
    let span_ms = (trace.samples.last().unwrap().t_ms - trace.samples[0].t_ms) as f64;
    let mut seen = Vec::new();
    let stats = imu::replay(&trace.samples, 2.0, |e| seen.push(e.index)).unwrap();
    assert_eq!(seen, (0..trace.samples.len()).collect::<Vec<_>>());
    let elapsed = stats.elapsed.as_secs_f64() * 1000.0;
    assert!(elapsed >= span_ms / 2.0 - 1.0, "{elapsed}");
    assert!(elapsed < span_ms / 2.0 + 150.0, "{elapsed}");
    assert!(stats.elapsed < Duration::from_millis(span_ms as u64));
}

/// Always answers `label` with full confidence.
struct Constant {
    label: usize,
    classes: usize,
}

impl SegmentClassifier for Constant {
    fn classify_window(&self, _window: &[[f64; 6]]) -> Result<ClassifierVerdict, SeqnetError> {
        let mut p = vec![0.0; self.classes];
        p[self.label] = 1.0;
        Ok(ClassifierVerdict::from_probabilities(p))
    }
}

#[test]
fn confident_models_give_fixed_eval_counts() {
    let mut script = synthgen::suite_script(1, 3);
    script.noise = NoiseSpec::NONE;
    let trace = synthgen::generate(&script, 50.0).unwrap();
    let stream = imu::smooth(&trace.samples, imu::DEFAULT_SMOOTH_N).unwrap();
    let walking = Constant {
        label: MoveState::Walking.index(),
        classes: MoveState::count(),
    };
    let step = Constant {
        label: AuLabel::NormalStep.index(),
        classes: AuLabel::count(),
    };
    let models = Models {
        move_state: &walking,
        action_unit: &step,
    };
    let table = StepLengthTable::default_table();
    for (strategy, per_decision) in [
        (StrategyKind::Conventional, 41),
        (StrategyKind::Nlp, 6),
        (StrategyKind::Sp, 1),
    ] {
        let run = locator::run_pipeline(
            &stream,
            &PipelineConfig::with_strategy(strategy),
            models,
            &table,
        )
        .unwrap();
        let l = &run.latency;
        assert!(l.decisions > 0);
        assert_eq!(
            l.window_evals,
            per_decision * l.decisions as u64,
            "{strategy}"
        );
        assert_eq!(l.gate_evals, l.aus as u64);
        assert_eq!(run.track.k, l.aus);
    }
    // Full-confidence SP segments are accepted without a token search; only
    // stretches with no zero-crossing boundary fall back to token windows.
    let run = locator::run_pipeline(&stream, &PipelineConfig::default(), models, &table).unwrap();
    let mut expected = 0;
    for r in &run.records {
        match r.outcome.path {
            DecisionPath::SpAccepted => assert_eq!(r.outcome.evals_used, 1),
            DecisionPath::NlpFallback => assert_eq!(r.outcome.evals_used, 6),
            other => panic!("unexpected {other:?}"),
        }
        expected += u64::from(r.outcome.evals_used);
    }
    assert!(run
        .records
        .iter()
        .any(|r| r.outcome.path == DecisionPath::SpAccepted));
    assert_eq!(run.latency.window_evals, expected);
}

fn cli(args: &[&str]) -> Result<(), CliError> {
    let parsed = Cli::try_parse_from(std::iter::once("odw").chain(args.iter().copied()))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    cli::execute(parsed)
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn cli_script_replay_closes_the_square() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("square.txt");
    fs::write(
        &script,
        "# closed square\nStop Stop 800ms\n\
         Walking NormalStep 4\nWalking LeftTurn 1\nWalking NormalStep 4\nWalking LeftTurn 1\n\
         Walking NormalStep 4\nWalking LeftTurn 1\nWalking NormalStep 4\nWalking LeftTurn 1\nStop Stop 800ms\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    cli(&["gen", "--out", &s(&data), "--script", &s(&script)]).unwrap();
    let trace = data.join("trace_000.csv");
    assert!(data.join("trace_000.labels.csv").exists());
    assert!(data.join("manifest.csv").exists());
    assert!(data.join("step_lengths.csv").exists());

    let out = dir.path().join("replay");
    cli(&[
        "run",
        "--trace",
        &s(&trace),
        "--ground-truth-labels",
        "--out",
        &s(&out),
        "--data",
        &s(&data),
    ])
    .unwrap();
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,x_m,y_m,au_label,move_state"));
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "22");
    let (x, y): (f64, f64) = (last[1].parse().unwrap(), last[2].parse().unwrap());
    assert!(x.hypot(y) < 1e-9);
}

#[test]
fn cli_failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = s(&dir.path().join("out"));
    let err = cli(&[
        "run",
        "--trace",
        &s(&missing),
        "--ground-truth-labels",
        "--out",
        &out,
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);

    let err = cli(&[
        "run",
        "--trace",
        &s(&missing),
        "--strategy",
        "bogus",
        "--out",
        &out,
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let script = dir.path().join("bad.txt");
    fs::write(&script, "Stop LeftTurn 1\n").unwrap();
    let err = cli(&["gen", "--out", &out, "--script", &s(&script)]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("line 1"), "{err}");

    let models = dir.path().join("models");
    fs::create_dir_all(&models).unwrap();
    let err = cli(&[
        "bench",
        "--models",
        &s(&models),
        "--n-traces",
        "1",
        "--out",
        &out,
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn cli_full_flow_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    cli(&["gen", "--out", &s(&data), "--n-traces", "3", "--seed", "8"]).unwrap();
    cli(&[
        "train",
        "--data",
        &s(&data),
        "--epochs",
        "1",
        "--hidden",
        "6",
    ])
    .unwrap();
    assert!(data.join("models").join("move_state.odw").exists());
    assert!(data.join("models").join("training_log.csv").exists());

    let run_out = dir.path().join("run");
    let trace = data.join("trace_000.csv");
    cli(&[
        "run",
        "--trace",
        &s(&trace),
        "--data",
        &s(&data),
        "--strategy",
        "sp",
        "--out",
        &s(&run_out),
    ])
    .unwrap();
    for f in ["trajectory.csv", "latency.csv", "segments.csv", "steps.csv"] {
        assert!(run_out.join(f).exists(), "{f}");
    }
    let steps = fs::read_to_string(run_out.join("steps.csv")).unwrap();
    assert!(steps.starts_with("idx,t_ms,magnitude,yaw_rad\n"));
    assert!(steps.lines().count() > 10);

    let bench_out = dir.path().join("bench");
    cli(&[
        "bench",
        "--data",
        &s(&data),
        "--models",
        &s(&data.join("models")),
        "--out",
        &s(&bench_out),
        "--jobs",
        "2",
    ])
    .unwrap();
    let report = fs::read_to_string(bench_out.join("bench_report.csv")).unwrap();
    assert!(report.starts_with("strategy,mean_evals_per_au,"));
    assert_eq!(report.lines().count(), 5);
    for strategy in ["conventional", "nlp", "sp", "fusion", "ground_truth"] {
        assert!(bench_out.join(format!("cm_{strategy}_au.csv")).exists());
        assert!(bench_out.join(format!("cm_{strategy}_state.csv")).exists());
    }
}
