//! Entropy, BALD and joint entropies on a hand-built posterior.

use albench::posterior::{self, joint_entropy, JointConfig, JointMode, PosteriorSamples};
use albench::seed;
use ndarray::array;

fn main() -> albench::Result<()> {
    println!("H([0.8, 0.2]) = {:.6} nats", posterior::entropy(&[0.8, 0.2])?);

    // two MC samples over three candidates, two classes:
    // candidate 0 disagrees across samples, 1 agrees and is unsure, 2 is certain
    let probs = array![
        [[0.9, 0.1], [0.5, 0.5], [1.0, 0.0]],
        [[0.1, 0.9], [0.5, 0.5], [1.0, 0.0]]
    ];
    let post = PosteriorSamples::new(probs, vec![10, 11, 12])?;
    let pe = posterior::predictive_entropy(&post);
    let ee = posterior::expected_entropy(&post);
    let bald = posterior::bald_scores(&post);
    println!("id  predictive  expected  BALD");
    for (j, id) in post.sample_ids().iter().enumerate() {
        println!("{id}  {:.4}      {:.4}    {:.4}", pe[j], ee[j], bald[j]);
    }

    let mut rng = seed::rng(0);
    let exact = JointConfig::default();
    let sampled = JointConfig {
        mode: JointMode::Sampled,
        sampled_config_count: 4096,
        ..exact
    };
    let h_exact = joint_entropy(&post, &[0, 1, 2], &exact, &mut rng)?;
    let h_sampled = joint_entropy(&post, &[0, 1, 2], &sampled, &mut rng)?;
    println!("joint entropy of all three: exact {h_exact:.4}, sampled {h_sampled:.4}");
    Ok(())
}
