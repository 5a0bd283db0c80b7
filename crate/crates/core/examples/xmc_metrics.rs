//! Precision, propensity-scored precision and macro precision at k on a
//! small hand-made ranking problem.
//!
//! ```text
//! cargo run --example xmc_metrics
//! ```

use fanin_xmc::data::{compute_propensities, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B};
use fanin_xmc::metrics::{macro_p_at_k, precision_at_k, psp_at_k, MacroNormalizer, Ranking};

fn main() -> fanin_xmc::Result<()> {
    let num_labels = 6;
    let truth = vec![vec![0, 1], vec![0, 4], vec![0], vec![2, 5]];
    #[rustfmt::skip]
    let scores = [
        0.9, 0.2, 0.1, 0.0, 0.3, 0.1,
        0.1, 0.3, 0.2, 0.0, 0.8, 0.0,
        0.5, 0.5, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.1, 0.2, 0.3, 0.4,
    ];
    let ranking = Ranking::from_scores(&scores, num_labels, 3)?;
    println!("top-3 per sample {:?}", ranking.labels);

    // Label frequencies from a notional 1000-sample training set: label 0
    // is common, label 5 rare.
    let counts = [600, 120, 40, 30, 15, 2];
    let p = compute_propensities(&counts, 1000, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B)?.propensities;
    println!("propensities {p:.3?}");
    for k in [1, 3] {
        println!(
            "k={k}: P {:.4}  PSP {:.4}  MacroP {:.4}",
            precision_at_k(&truth, &ranking, k)?,
            psp_at_k(&truth, &ranking, &p, k)?,
            macro_p_at_k(&truth, &ranking, k, num_labels, MacroNormalizer::Labels)?
        );
    }
    Ok(())
}
