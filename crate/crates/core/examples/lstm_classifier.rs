//! Train a small movement-state LSTM on ground-truth windows, save it and
//! classify held-out windows with the reloaded weights.
//!
//! cargo run --release --example lstm_classifier

use odw::bench::{self, AugmentConfig};
use odw::labels::{Family, MoveState};
use odw::seqnet::{self, TrainConfig};
use odw::synthgen::{self, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let suite = synthgen::make_benchmark_suite(8, 3);
    let split = |s: Split| {
        bench::prepare_all(
            suite
                .iter()
                .filter(|t| t.in_split(s))
                .map(|t| (t.name.as_str(), &t.trace)),
        )
    };
    let (train, test) = (split(Split::Train)?, split(Split::Test)?);

    let examples = bench::training_examples(&train, Family::MoveState, &AugmentConfig::default());
    let cfg = TrainConfig {
        epochs: 5,
        hidden: 12,
        ..TrainConfig::default()
    };
    let model = seqnet::train(&examples, &cfg)?;
    println!(
        "{} windows, loss by epoch {:.3?}",
        examples.len(),
        model.loss_history
    );

    let dir = std::env::temp_dir().join("odw_example_lstm");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("move_state.odw");
    seqnet::save_params(&model.params, &path)?;
    let params = seqnet::load_params(&path)?;
    println!(
        "saved {} parameters to {}",
        params.parameter_count(),
        path.display()
    );

    let (mut right, mut total) = (0, 0);
    for t in &test {
        for row in &t.labels {
            let v = seqnet::classify(&params, &t.window(row.start_idx, row.end_idx))?;
            right += usize::from(v.label_as::<MoveState>() == Some(row.state));
            total += 1;
        }
    }
    println!("held-out movement state accuracy {right}/{total}");
    Ok(())
}
