//! Weighted versus plain cross-entropy on the long-tail mixture.

use albench::bench::{presets, report, Experiment};

fn main() -> albench::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let out = Experiment::from_config(presets::loss_weighting_ablation((0..seeds).collect()))?.execute()?;
    for s in &out.sweeps {
        println!(
            "seed {} {:<8} chose lr {} (val {:?})",
            s.seed,
            s.loss_weighting.name(),
            s.chosen.learning_rate,
            s.cells.iter().map(|c| c.val_metric).collect::<Vec<_>>()
        );
    }
    print!("{}", report::variant_comparison_csv(&out.records()?, "balanced", "uniform")?);
    Ok(())
}
