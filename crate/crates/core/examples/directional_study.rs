//! Random, BALD, BatchBALD and Core-Set on a five-class long-tail mixture.
//!
//! `cargo run --release -p albench --example directional_study -- [seeds]`

use std::time::Instant;

use albench::bench::{aggregate_all, compare_to_random, presets, Experiment};

fn main() -> albench::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let cfg = presets::directional_study((0..n).collect());
    let started = Instant::now();
    let exp = Experiment::from_config(cfg)?;
    let out = exp.execute()?;
    let curves = aggregate_all(&out.records()?)?;
    let random = curves.iter().find(|c| c.series == "random").expect("random arm");
    println!("{n} seeds in {:.1}s", started.elapsed().as_secs_f64());
    println!("series      final mean-recall   sd      vs random   area");
    for c in &curves {
        let f = c.final_point();
        let cmp = compare_to_random(c, random)?;
        println!(
            "{:<10}  {:.4}              {:.4}  {:+.4}     {:+.2}",
            c.series,
            f.mean,
            f.sd,
            cmp.mean_final_delta(),
            cmp.area_delta
        );
    }
    Ok(())
}
