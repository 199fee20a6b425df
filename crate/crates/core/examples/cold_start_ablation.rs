//! Cold-start comparison on a pre-trained-representation analog, optionally
//! with smaller queries and a subsampled candidate pool.
//!
//! `cargo run --release -p albench --example cold_start_ablation -- [seeds] [query] [subsample]`

use albench::bench::{aggregate_all, presets, report, Experiment};

fn main() -> albench::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let seeds = args.next().flatten().unwrap_or(3) as u64;
    let query = args.next().flatten();
    let subsample = args.next().flatten();
    let cfg = presets::cold_start_ablation((0..seeds).collect(), query, subsample);
    let out = Experiment::from_config(cfg)?.execute()?;
    let curves = aggregate_all(&out.records()?)?;
    print!("{}", report::report_csv(&curves, "random")?);
    Ok(())
}
