//! Benchmark the four windowing strategies on a generated suite: evals per
//! AU, accuracy, endpoint error and confusion matrices.
//!
//! cargo run --release --example benchmark [n_traces] [epochs]

use odw::bench::{self, AugmentConfig};
use odw::locator::{PipelineConfig, StepLengthTable};
use odw::seqnet::TrainConfig;
use odw::synthgen::{self, Split};
use odw::windowing::StrategyKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(12), |a| a.parse())?;
    let epochs: usize = args.next().map_or(Ok(8), |a| a.parse())?;

    let suite = synthgen::make_benchmark_suite(n, 2024);
    let split = |s: Split| {
        bench::prepare_all(
            suite
                .iter()
                .filter(|t| t.in_split(s))
                .map(|t| (t.name.as_str(), &t.trace)),
        )
    };
    let (train, test) = (split(Split::Train)?, split(Split::Test)?);
    let (models, _) = bench::train_models(
        &train,
        &TrainConfig {
            epochs,
            ..TrainConfig::default()
        },
        &AugmentConfig::default(),
    )?;

    let report = bench::run_bench(
        &models,
        &test,
        &StrategyKind::ALL,
        &PipelineConfig::default(),
        &StepLengthTable::default_table(),
    )?;
    print!("{}", report.render());
    if let Some(fusion) = report.summary(StrategyKind::Fusion) {
        println!("\nfusion AU confusion (rows truth, columns predicted):");
        print!("{}", fusion.scores.action_unit.render());
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv, false)?;
    println!("\n{}", String::from_utf8(csv)?);
    Ok(())
}
