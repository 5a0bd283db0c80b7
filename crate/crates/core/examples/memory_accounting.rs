//! Training-memory accounting for a dense classifier head versus fixed
//! fan-in heads at several sparsity levels.
//!
//! ```text
//! cargo run --example memory_accounting
//! ```

use fanin_xmc::sparse::{memory_overhead, memory_report, sparsity_of};

fn main() {
    let (dim, labels) = (768, 1_000_000);
    println!("head {labels} labels x {dim} dims, fp32 values, 16-bit indices");
    println!("{:>6} {:>9} {:>10} {:>8}", "fan_in", "sparsity", "GiB", "ratio");
    for fan_in in [768, 256, 128, 64, 32] {
        let r = memory_report(dim, labels, fan_in, 32, 16);
        let gib = if fan_in == dim { r.dense_bytes } else { r.sparse_bytes } as f64 / (1u64 << 30) as f64;
        let ratio = if fan_in == dim { 1.0 } else { r.ratio() };
        println!("{fan_in:>6} {:>9.4} {gib:>10.3} {ratio:>8.4}", sparsity_of(fan_in, dim));
    }
    // Index storage relative to values, alone and shared by weight, gradient
    // and both optimizer moments.
    println!("index overhead: {} alone, {} shared", memory_overhead(32, 16, 0), memory_overhead(32, 16, 3));
}
