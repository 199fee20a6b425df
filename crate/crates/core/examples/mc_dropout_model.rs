//! Train the MC-dropout classifier, inspect its posterior and round-trip a
//! checkpoint.

use albench::data::{generate_mixture, make_splits, MixtureSpec};
use albench::metrics::Metric;
use albench::model::{fit, Hyperparams, LabeledSet, TrainedModel, TrainingStrategy};
use albench::posterior::bald_scores;
use albench::seed;

fn main() -> albench::Result<()> {
    let ds = generate_mixture(&MixtureSpec::simplex(4, 150, 3.0, 2, 11))?;
    let splits = make_splits(&ds, 0.25, 0.15, &mut seed::rng(0))?;
    let set = |idx: &[usize]| LabeledSet::new(ds.rows(idx), ds.labels_at(idx), ds.class_count());
    let train = set(&splits.pool_indices[..80])?;
    let val = set(&splits.val_indices)?;
    let test = set(&splits.test_indices)?;

    let hp = Hyperparams {
        hidden_sizes: vec![32],
        epochs: 25,
        ..Hyperparams::default()
    };
    let model = fit(&train, &val, &hp, TrainingStrategy::FromScratch, Metric::Accuracy, 5)?;
    println!(
        "best val accuracy {:.3} at epoch {}; test accuracy {:.3}",
        model.best_val_metric,
        model.best_epoch,
        model.evaluate(&test, Metric::Accuracy)?
    );

    let unlabeled = &splits.pool_indices[80..90];
    let post = model.predict_mc(&ds.rows(unlabeled), unlabeled.to_vec(), 20, 7)?;
    for (id, b) in unlabeled.iter().zip(bald_scores(&post)) {
        println!("pool index {id:>4}: BALD {b:.4}");
    }

    let path = std::env::temp_dir().join("albench-model.json");
    model.save_checkpoint(&path)?;
    let back = TrainedModel::load_checkpoint(&path)?;
    assert_eq!(back.predict(&test.features), model.predict(&test.features));
    println!("checkpoint round-trips through {}", path.display());
    Ok(())
}
