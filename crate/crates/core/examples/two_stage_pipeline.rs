//! Train both models on a small suite, then run the full online pipeline on
//! a held-out trace and compare its track with the ground-truth replay.
//!
//! cargo run --release --example two_stage_pipeline

use odw::bench::{self, AugmentConfig};
use odw::locator::{self, PipelineConfig, StepLengthTable};
use odw::seqnet::TrainConfig;
use odw::synthgen::{self, Split};
use odw::windowing::StrategyKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let suite = synthgen::make_benchmark_suite(10, 11);
    let split = |s: Split| {
        bench::prepare_all(
            suite
                .iter()
                .filter(|t| t.in_split(s))
                .map(|t| (t.name.as_str(), &t.trace)),
        )
    };
    let (train, test) = (split(Split::Train)?, split(Split::Test)?);
    let cfg = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let (models, summary) = bench::train_models(&train, &cfg, &AugmentConfig::default())?;
    println!(
        "trained on {} + {} windows, final losses {:.3} / {:.3}",
        summary.move_examples,
        summary.au_examples,
        summary.move_loss.last().unwrap_or(&f64::NAN),
        summary.au_loss.last().unwrap_or(&f64::NAN)
    );

    let table = StepLengthTable::default_table();
    let trace = &test[0];
    let truth = locator::run_ground_truth(&trace.labels, &table, &PipelineConfig::default())?;
    for strategy in StrategyKind::ALL {
        let cfg = PipelineConfig::with_strategy(strategy);
        let run = locator::run_pipeline(&trace.stream, &cfg, models.models(), &table)?;
        let scores = bench::score_run(&run, &trace.labels);
        println!(
            "{:>12}: {:>3} AUs, {:>6.3} evals/AU, AU accuracy {:.3}, endpoint error {:.2} m",
            strategy.name(),
            run.latency.aus,
            run.latency.evals_per_decision(),
            scores.action_unit.accuracy(),
            locator::endpoint_error(&run.track, &truth)
        );
    }

    let run = locator::run_pipeline(
        &trace.stream,
        &PipelineConfig::default(),
        models.models(),
        &table,
    )?;
    let mut csv = Vec::new();
    run.write_trajectory(&mut csv)?;
    println!("fusion trajectory, first rows:");
    for line in String::from_utf8(csv)?.lines().take(8) {
        println!("  {line}");
    }
    Ok(())
}
