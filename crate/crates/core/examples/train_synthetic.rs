//! Trains an encoder with a fixed fan-in head and rewiring on synthetic
//! data, printing test precision after each epoch and saving a checkpoint.
//!
//! ```text
//! cargo run --release --example train_synthetic
//! ```

use fanin_xmc::data::{SyntheticConfig, SyntheticTask};
use fanin_xmc::dst::RewireConfig;
use fanin_xmc::model::{load_checkpoint, save_checkpoint, Model, ModelConfig};
use fanin_xmc::train::{train_with, TrainConfig};

fn main() -> fanin_xmc::Result<()> {
    let task = SyntheticTask::new(SyntheticConfig::new(500, 1000, 1.2, 3), 0);
    let (train_set, test_set) = task.split(3000, 1000, 1);
    let cfg = TrainConfig {
        epochs: 8,
        rewire: RewireConfig { interval: 50, ..RewireConfig::default() },
        model: ModelConfig { encoder_dims: vec![0, 128], fan_in: 16, ..ModelConfig::default() },
        ..TrainConfig::default()
    };
    let outcome = train_with::<f32>(&train_set, Some(&test_set), None, &cfg, |epoch, t| {
        let report = t.last_eval().unwrap();
        println!(
            "epoch {epoch}: P@1 {:.4} P@5 {:.4} PSP@1 {:.4}",
            report.get("P", 1).unwrap(),
            report.get("P", 5).unwrap(),
            report.get("PSP", 1).unwrap()
        );
    })?;
    let t = &outcome.telemetry;
    println!("{} steps, {} rewiring events", t.steps.len(), t.rewires.len());
    println!("fraction of head gradient entries that were non-zero: {:.4}", t.delta_density());

    let path = std::env::temp_dir().join("fanin-xmc-example-checkpoint.json");
    save_checkpoint(&outcome.model, &path)?;
    let back: Model<f32> = load_checkpoint(&path)?;
    assert_eq!(back, outcome.model);
    println!("checkpoint written to {}", path.display());
    Ok(())
}
