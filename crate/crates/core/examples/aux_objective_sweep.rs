//! Compares training without the auxiliary cluster head, with it switched
//! off halfway, and with it kept for the whole run, at a high and a low
//! head sparsity.
//!
//! ```text
//! cargo run --release --example aux_objective_sweep
//! ```

use fanin_xmc::clustering::{balanced_kmeans, build_label_features};
use fanin_xmc::data::{SyntheticConfig, SyntheticTask};
use fanin_xmc::model::{AuxCutoff, ModelConfig};
use fanin_xmc::train::{train, TrainConfig};

fn main() -> fanin_xmc::Result<()> {
    let task = SyntheticTask::new(SyntheticConfig::new(500, 1000, 1.2, 3), 0);
    let (train_set, test_set) = task.split(3000, 1000, 1);
    let clustering = balanced_kmeans(&build_label_features(&train_set), 8, 0)?;
    let epochs = 10;
    println!("{:>6} {:>10} {:>8} {:>8}", "fan_in", "aux", "P@1", "metaP@1");
    for fan_in in [12, 64] {
        for (name, aux) in [("off", None), ("cutoff 5", Some(AuxCutoff::Epoch(5))), ("always", Some(AuxCutoff::Never))]
        {
            let cfg = TrainConfig {
                epochs,
                eval_every_epoch: false,
                model: ModelConfig {
                    encoder_dims: vec![0, 128],
                    fan_in,
                    aux_enabled: aux.is_some(),
                    aux_cutoff: aux.unwrap_or(AuxCutoff::Never),
                    num_clusters: 8,
                    ..ModelConfig::default()
                },
                ..TrainConfig::default()
            };
            let c = aux.map(|_| &clustering);
            let out = train::<f32>(&train_set, Some(&test_set), c, &cfg)?;
            let r = out.telemetry.last_eval().unwrap();
            let meta = r.get("metaP", 1).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            println!("{fan_in:>6} {name:>10} {:>8.4} {meta:>8}", r.get("P", 1).unwrap());
        }
    }
    Ok(())
}
