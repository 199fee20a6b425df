//! Long-tail class counts, label regimes and the Hoeffding validation size.

use albench::data::{apply_longtail, generate_mixture, longtail_counts, min_val_size, regime_for, LongTailSpec, MixtureSpec, RegimeTable};
use albench::domain::RegimeName;
use albench::seed;

fn main() -> albench::Result<()> {
    let counts = longtail_counts(&LongTailSpec {
        n_max: 4500,
        imbalance_factor: 50.0,
        class_count: 10,
    })?;
    println!("rho = 50 over 10 classes: {counts:?}");

    let ds = generate_mixture(&MixtureSpec::simplex(5, 300, 2.5, 0, 3))?;
    let pool: Vec<usize> = (0..ds.len()).collect();
    let tail = longtail_counts(&LongTailSpec {
        n_max: 300,
        imbalance_factor: 20.0,
        class_count: 5,
    })?;
    let kept = apply_longtail(&ds, &pool, &tail, &mut seed::rng(0))?;
    println!("mixture pool after rho = 20: {:?}", ds.class_histogram(&kept));

    let table = RegimeTable::paper();
    for classes in [5, 10, 100] {
        for name in RegimeName::ALL {
            let r = regime_for(classes, name, &table, None)?;
            println!(
                "C = {classes:>3} {:<6}: start {:>5}, +{:>5} x {} -> {:>6}, val {}",
                name.as_str(),
                r.starting_budget,
                r.query_size,
                r.query_steps,
                r.final_budget(),
                r.val_size
            );
        }
    }
    println!("val size for a 1-point, 95% accuracy estimate: {}", min_val_size(0.01, 0.05)?);
    Ok(())
}
