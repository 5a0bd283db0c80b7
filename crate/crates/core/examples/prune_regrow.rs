//! Magnitude pruning with random regrowth on a fixed fan-in layer, keeping
//! optimizer moments aligned with the weights they belong to.
//!
//! ```text
//! cargo run --example prune_regrow
//! ```

use fanin_xmc::dst::{prune_regrow, should_rewire, PruneMode, RewireConfig};
use fanin_xmc::sparse::FixedFanInLayer;

fn main() -> fanin_xmc::Result<()> {
    let mut layer = FixedFanInLayer::<f32>::random(4, 32, 8, 1.0, 3)?;
    let n = layer.weights().len();
    let mut first_moment = vec![0.1f32; n];
    let mut second_moment = vec![0.01f32; n];

    let cfg = RewireConfig { mode: PruneMode::Fraction(0.25), interval: 100, stop_fraction: 0.66 };
    let total_steps = 1000;
    let events: Vec<u64> = (1..=total_steps).filter(|&s| should_rewire(s, total_steps, &cfg)).collect();
    println!("rewire steps over {total_steps} steps: {events:?}");

    println!("before: row 0 columns {:?}", layer.row_columns(0));
    println!("        row 0 weights {:.3?}", layer.row_weights(0));
    let stats = prune_regrow(&mut layer, &mut [&mut first_moment, &mut second_moment], &cfg, events[0], 7)?;
    println!("after:  row 0 columns {:?}", layer.row_columns(0));
    println!("        row 0 weights {:.3?}", layer.row_weights(0));
    println!("        row 0 first moment {:?}", &first_moment[..8]);
    println!(
        "pruned {} regrown {} smallest surviving |w| {:.3}",
        stats.pruned, stats.regrown, stats.min_surviving_magnitude
    );

    let cfg = RewireConfig { mode: PruneMode::Threshold(0.5), ..cfg };
    let stats = prune_regrow(&mut layer, &mut [&mut first_moment, &mut second_moment], &cfg, events[1], 7)?;
    println!("threshold 0.5: pruned per row {:?}", stats.per_row_pruned);
    Ok(())
}
