//! Every query method on one random pool, given a posterior and embeddings.

use albench::domain::LabelState;
use albench::posterior::{JointConfig, PosteriorSamples};
use albench::query::{Embeddings, QueryContext, QueryMethod};
use albench::seed;
use ndarray::{Array2, Array3};
use rand::Rng;

fn main() -> albench::Result<()> {
    let mut rng = seed::rng(1);
    let pool: Vec<usize> = (0..40).collect();
    let state = LabelState::new(&pool, &[0, 1, 2, 3])?;
    let candidates = state.unlabeled_vec();

    // K = 8 softmax samples per candidate, 3 classes
    let (k, c) = (8, 3);
    let mut probs = Array3::<f64>::zeros((k, candidates.len(), c));
    for n in 0..candidates.len() {
        let sharp = rng.random_range(0.5..4.0);
        for ki in 0..k {
            let logits: Vec<f64> = (0..c).map(|_| sharp * rng.random_range(-1.0..1.0)).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for y in 0..c {
                probs[[ki, n, y]] = logits[y].exp() / z;
            }
        }
    }
    let post = PosteriorSamples::new(probs, candidates)?;
    let emb = Embeddings::new(Array2::from_shape_fn((40, 2), |_| rng.random_range(0.0..1.0)), pool)?;

    let ctx = QueryContext::new(&state, 5, 99).with_posterior(&post).with_embeddings(&emb);
    for qm in QueryMethod::ALL {
        let sel = qm.select(&ctx, &JointConfig::default())?;
        let scores = sel
            .scores
            .map(|s| s.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "))
            .unwrap_or_else(|| "-".into());
        println!("{:<10} {:?}  scores: {scores}", sel.qm, sel.chosen);
    }
    Ok(())
}
