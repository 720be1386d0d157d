//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Built with `harness = false`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use odw::bench::{self, AugmentConfig, BenchReport, ModelPair, PreparedTrace};
use odw::cli::{self, Cli};
use odw::imu::{self, ImuSample, SmoothedStream};
use odw::labels::{AuLabel, MoveState};
use odw::locator::{self, PipelineConfig, StepLengthTable};
use odw::pdr::{self, Axis};
use odw::seqnet::{self, LstmParams, LstmState, TrainConfig, INPUT_DIM};
use odw::synthgen::{self, Amount, NoiseSpec, PathScript, ScriptSegment, Split};
use odw::windowing::StrategyKind;

type Outcome = Result<String, String>;

struct Shared {
    models: ModelPair,
    test: Vec<PreparedTrace>,
    train_time: Duration,
    report: BenchReport,
    bench_time: Duration,
}

fn prepare_suite() -> Result<Shared, String> {
    let suite = synthgen::make_benchmark_suite(40, 2024);
    let pick = |split: Split| {
        bench::prepare_all(
            suite
                .iter()
                .filter(|t| t.in_split(split))
                .map(|t| (t.name.as_str(), &t.trace)),
        )
    };
    let train = pick(Split::Train).map_err(|e| e.to_string())?;
    let test = pick(Split::Test).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let (models, _) =
        bench::train_models(&train, &TrainConfig::default(), &AugmentConfig::default())
            .map_err(|e| e.to_string())?;
    let train_time = t0.elapsed();
    let t1 = Instant::now();
    let report = bench::run_bench(
        &models,
        &test,
        &StrategyKind::ALL,
        &PipelineConfig::default(),
        &StepLengthTable::default_table(),
    )
    .map_err(|e| e.to_string())?;
    Ok(Shared {
        models,
        test,
        train_time,
        report,
        bench_time: t1.elapsed(),
    })
}

fn c1_eval_budget(shared: &Result<Shared, String>) -> Outcome {
    let s = shared.as_ref().map_err(Clone::clone)?;
    let get = |k: StrategyKind| s.report.summary(k).ok_or(format!("no {k} summary"));
    let (conv, nlp, sp, fusion) = (
        get(StrategyKind::Conventional)?,
        get(StrategyKind::Nlp)?,
        get(StrategyKind::Sp)?,
        get(StrategyKind::Fusion)?,
    );
    let detail = format!(
        "evals/AU sp {:.3}, fusion {:.3}, nlp {:.3}, conventional {:.3}; bench {:.1}s",
        sp.mean_evals_per_au,
        fusion.mean_evals_per_au,
        nlp.mean_evals_per_au,
        conv.mean_evals_per_au,
        s.bench_time.as_secs_f64()
    );
    let ok = sp.window_evals == sp.decisions as u64
        && conv.window_evals == 41 * conv.decisions as u64
        && sp.decisions > 0
        && conv.decisions > 0
        && fusion.mean_evals_per_au > 1.0
        && fusion.mean_evals_per_au <= 6.0
        && nlp.mean_evals_per_au > fusion.mean_evals_per_au
        && nlp.mean_evals_per_au <= 6.0
        && s.bench_time < Duration::from_secs(60);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Scalar LSTM step written element by element from the gate equations.
#[allow(clippy::needless_range_loop)]
fn oracle_step(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, l) = (p.hidden, p.input);
    let mut h_out = vec![0.0; m];
    let mut c_out = vec![0.0; m];
    for j in 0..m {
        let pre = |g: &seqnet::Gate| {
            let mut z = g.b[j];
            for q in 0..l {
                z += g.w[j * l + q] * x[q];
            }
            for q in 0..m {
                z += g.u[j * m + q] * h[q];
            }
            z
        };
        let f = sig(pre(&p.forget_gate));
        let i = sig(pre(&p.input_gate));
        let a = pre(&p.candidate).tanh();
        let o = sig(pre(&p.output_gate));
        c_out[j] = f * c[j] + i * a;
        h_out[j] = o * c_out[j].tanh();
    }
    (h_out, c_out)
}

fn random_params(rng: &mut ChaCha8Rng, m: usize, l: usize, classes: usize) -> LstmParams {
    let mut p = LstmParams::zeros(m, l, classes);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-1.5..1.5);
        }
    }
    p
}

fn c2_cell_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(1..=4);
        let l = rng.random_range(1..=6);
        let p = random_params(&mut rng, m, l, 2);
        let x: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = seqnet::cell_step(
            &p,
            &x,
            &LstmState {
                h: h.clone(),
                c: c.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        let (eh, ec) = oracle_step(&p, &x, &h, &c);
        for (a, b) in got.h.iter().zip(&eh).chain(got.c.iter().zip(&ec)) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }

    let p = random_params(&mut rng, 4, INPUT_DIM, 3);
    let xs: Vec<[f64; INPUT_DIM]> = (0..7)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let (_, grad) = seqnet::loss_and_grad(&p, &xs, 1);
    let mut worst_grad = 0.0f64;
    let eps = 1e-5;
    for _ in 0..5 {
        let t = rng.random_range(0..14);
        let e = rng.random_range(0..p.tensors()[t].len());
        let mut plus = p.clone();
        plus.tensors_mut()[t][e] += eps;
        let mut minus = p.clone();
        minus.tensors_mut()[t][e] -= eps;
        let fd = (seqnet::sequence_loss(&plus, &xs, 1) - seqnet::sequence_loss(&minus, &xs, 1))
            / (2.0 * eps);
        let g = grad.tensors()[t][e];
        worst_grad = worst_grad.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-8));
    }
    let detail = format!("cell max rel err {worst:.2e}, gradient max rel err {worst_grad:.2e}");
    if worst <= 1e-12 && worst_grad <= 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3_two_stage_accuracy(shared: &Result<Shared, String>) -> Outcome {
    let s = shared.as_ref().map_err(Clone::clone)?;
    let gt = bench::evaluate_ground_truth(&s.models, &s.test).map_err(|e| e.to_string())?;
    let fusion = s
        .report
        .summary(StrategyKind::Fusion)
        .ok_or("no fusion summary")?;
    let au = gt.action_unit.accuracy();
    let state = gt.move_state.accuracy();
    let total = s.train_time + s.bench_time;
    let detail = format!(
        "ground-truth AU {au:.4}, state {state:.4}; fusion end-to-end AU {:.4}; train {:.1}s",
        fusion.au_accuracy,
        s.train_time.as_secs_f64()
    );
    if au >= 0.90 && state >= 0.90 && fusion.au_accuracy >= 0.80 && total < Duration::from_secs(600)
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn seg(state: MoveState, au: AuLabel, n: u32) -> ScriptSegment {
    ScriptSegment {
        state,
        au,
        amount: Amount::Count(n),
    }
}

fn c4_estimator_identity() -> Outcome {
    use AuLabel::*;
    use MoveState::Walking;
    let mut script = PathScript::new(vec![
        ScriptSegment {
            state: MoveState::Stop,
            au: Stop,
            amount: Amount::DurationMs(800),
        },
        seg(Walking, NormalStep, 4),
        seg(Walking, LeftTurn, 1),
        seg(Walking, ShortStep, 3),
        seg(Walking, LeftTurn, 1),
        seg(Walking, LongStep, 2),
        seg(Walking, ShortStep, 2),
        seg(Walking, LeftTurn, 1),
        seg(Walking, ShortStep, 3),
        seg(Walking, LeftTurn, 1),
        ScriptSegment {
            state: MoveState::Stop,
            au: Stop,
            amount: Amount::DurationMs(800),
        },
    ]);
    script.noise = NoiseSpec::NONE;
    let trace = synthgen::generate(&script, 50.0).map_err(|e| e.to_string())?;
    let table = StepLengthTable::default_table();
    let cfg = PipelineConfig::default();
    let track =
        locator::run_ground_truth(&trace.labels, &table, &cfg).map_err(|e| e.to_string())?;
    let mut psi = 0.0;
    for row in &trace.labels {
        if let Some(step) = row.au.step_type() {
            psi += table
                .get(&cfg.subject, step, row.state)
                .ok_or("missing table entry")?;
        }
    }
    let end = track.position[0].hypot(track.position[1]);
    let detail = format!(
        "endpoint {end:.3e} m, distance {} m, sum of step lengths {psi} m",
        track.distance
    );
    if end < 1e-9 && track.distance == psi && track.k == trace.labels.len() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c5_step_detection() -> Outcome {
    use AuLabel as A;
    use MoveState as M;
    let scripts = [
        vec![seg(M::Walking, A::NormalStep, 12)],
        vec![
            seg(M::Walking, A::ShortStep, 3),
            seg(M::Walking, A::LongStep, 3),
            seg(M::Walking, A::NormalStep, 3),
            seg(M::Walking, A::LeftTurn, 1),
            seg(M::Walking, A::NormalStep, 3),
        ],
        vec![
            seg(M::Running, A::NormalStep, 6),
            seg(M::Running, A::RightTurn, 1),
            seg(M::Running, A::LongStep, 4),
        ],
        vec![
            seg(M::UpStairs, A::NormalStep, 5),
            seg(M::DownStairs, A::NormalStep, 5),
        ],
        vec![
            seg(M::Walking, A::NormalStep, 4),
            seg(M::Stop, A::Stop, 1),
            seg(M::Walking, A::ShortStep, 4),
            seg(M::Walking, A::RightTurn, 2),
        ],
    ];
    let mut counts = Vec::new();
    let mut all_ok = true;
    for (i, segments) in scripts.into_iter().enumerate() {
        let mut segments = segments;
        segments.insert(0, seg(M::Stop, A::Stop, 1));
        segments.push(seg(M::Stop, A::Stop, 1));
        let mut script = PathScript::new(segments);
        script.noise = NoiseSpec::NONE;
        script.seed = i as u64;
        let trace = synthgen::generate(&script, 50.0).map_err(|e| e.to_string())?;
        let expected = trace
            .labels
            .iter()
            .filter(|r| !matches!(r.au, A::Stop | A::Abnormal))
            .count();
        let stream =
            imu::smooth(&trace.samples, imu::DEFAULT_SMOOTH_N).map_err(|e| e.to_string())?;
        let axis = pdr::select_step_axis(&stream).map_err(|e| e.to_string())?;
        let tau = pdr::threshold_above_mean(&stream, axis, pdr::DEFAULT_TAU_ABOVE_MEAN);
        let found = pdr::detect_steps(&stream, axis, tau)
            .map_err(|e| e.to_string())?
            .len();
        all_ok &= found == expected;
        counts.push(format!("{found}/{expected}"));
    }

    let mut z = vec![9.81; 40];
    z[10] = 13.0;
    z[13] = 13.0;
    z[30] = 13.0;
    let samples: Vec<ImuSample> = z
        .iter()
        .enumerate()
        .map(|(i, &v)| ImuSample::new(i as i64 * 20, [0.0, 0.0, v], [0.0; 3], [20.0, 0.0, -40.0]))
        .collect();
    let stream = SmoothedStream::from_samples(samples, 1, 50.0);
    let steps = pdr::detect_steps(&stream, Axis::Z, 12.0).map_err(|e| e.to_string())?;
    let peaks: Vec<usize> = steps.iter().map(|s| s.peak_idx).collect();
    let double_ok = peaks == [10, 30];
    let detail = format!(
        "detected/scripted {}; 60 ms double peak kept peaks {peaks:?}",
        counts.join(" ")
    );
    if all_ok && double_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c6_heading() -> Outcome {
    let cases = [
        ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 0.0, 0.0, 0.0),
        ([0.0, 0.0, 1.0], [0.0, 1.0, 0.0], 0.0, 0.0, -FRAC_PI_2),
        ([0.0, 1.0, 1.0], [1.0, 0.0, 0.0], PI / 4.0, 0.0, 0.0),
    ];
    let mut worst = 0.0f64;
    for (accel, mag, pitch, roll, yaw) in cases {
        let h = pdr::estimate_heading(&ImuSample::new(0, accel, [0.0; 3], mag))
            .map_err(|e| e.to_string())?;
        worst = worst
            .max((h.pitch - pitch).abs())
            .max((h.roll - roll).abs())
            .max((h.yaw - yaw).abs());
    }
    let detail = format!("max angle error {worst:.2e} rad");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let cli = Cli::try_parse_from(std::iter::once("odw").chain(args.iter().copied()))
        .map_err(|e| e.to_string())?;
    cli::execute(cli).map_err(|e| e.to_string())
}

fn strip_last_column(path: &Path) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn c7_round_trips() -> Outcome {
    let p = LstmParams::init(5, INPUT_DIM, 7, 3);
    let bytes = p.to_bytes().map_err(|e| e.to_string())?;
    let back = LstmParams::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let weights_ok = back == p && back.to_bytes().map_err(|e| e.to_string())? == bytes;

    let mut script = synthgen::suite_script(0, 99);
    script.noise = NoiseSpec::default();
    let trace = synthgen::generate(&script, 50.0).map_err(|e| e.to_string())?;
    let mut csv_bytes = Vec::new();
    imu::emit_csv(&trace.samples, &mut csv_bytes).map_err(|e| e.to_string())?;
    let read = imu::ingest_csv(&csv_bytes[..]).map_err(|e| e.to_string())?;
    let bits = |s: &ImuSample| (s.t_ms, s.channels().map(f64::to_bits));
    let mut again = Vec::new();
    imu::emit_csv(&read, &mut again).map_err(|e| e.to_string())?;
    let samples_ok = read.len() == trace.samples.len()
        && read
            .iter()
            .zip(&trace.samples)
            .all(|(a, b)| bits(a) == bits(b))
        && again == csv_bytes;
    let mut label_bytes = Vec::new();
    imu::emit_labels(&trace.labels, &mut label_bytes).map_err(|e| e.to_string())?;
    let labels_ok =
        imu::ingest_labels(&label_bytes[..]).map_err(|e| e.to_string())? == trace.labels;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let dir = root.join(run);
        let data = dir.join("data").display().to_string();
        let out = dir.join("bench").display().to_string();
        run_cli(&["gen", "--out", &data, "--n-traces", "4", "--seed", "5"])?;
        run_cli(&["train", "--data", &data, "--epochs", "2", "--hidden", "8"])?;
        let models = dir.join("data").join("models").display().to_string();
        run_cli(&["bench", "--data", &data, "--models", &models, "--out", &out])?;
        reports.push((
            strip_last_column(&dir.join("bench").join("bench_report.csv"))?,
            strip_last_column(&dir.join("bench").join("bench_traces.csv"))?,
            fs::read(dir.join("data").join("models").join(bench::AU_MODEL_FILE))
                .map_err(|e| e.to_string())?,
        ));
    }
    let bench_ok = reports[0] == reports[1];
    let detail = format!(
        "weights {weights_ok}, imu csv {samples_ok}, labels csv {labels_ok}, rerun bench identical {bench_ok}"
    );
    if weights_ok && samples_ok && labels_ok && bench_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
        }
    };

    let t = Instant::now();
    report("C2 lstm cell fidelity", t, c2_cell_fidelity());
    let t = Instant::now();
    report("C4 estimator identity", t, c4_estimator_identity());
    let t = Instant::now();
    report("C5 step detection", t, c5_step_detection());
    let t = Instant::now();
    report("C6 heading formulas", t, c6_heading());
    let t = Instant::now();
    report("C7 determinism and round trips", t, c7_round_trips());

    let t = Instant::now();
    let shared = prepare_suite();
    let bench_started = shared
        .as_ref()
        .map_or_else(|_| Instant::now(), |s| Instant::now() - s.bench_time);
    report(
        "C1 evaluation budget ordering",
        bench_started,
        c1_eval_budget(&shared),
    );
    report("C3 two-stage accuracy", t, c3_two_stage_accuracy(&shared));

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
