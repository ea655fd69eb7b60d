//! The three differentiable heads on a toy episode: logits, predictions and
//! the gradient that flows back into the embeddings.
//!
//!     cargo run --release --example base_learners

use fewshot::encoder::Mat;
use fewshot::learners::{backward, forward, svm_dual_objective, svm_solve, LearnerConfig, LearnerKind};
use fewshot::meta::{argmax_lowest, cross_entropy};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, m, q, d) = (3, 2, 2, 4);
    let mut r = fewshot::rng::rng(1);
    let center = |k: usize, c: usize| if c == k { 2.0 } else { 0.0 };
    let support = Mat::from_fn(n * m, d, |i, c| center(i / m, c) + r.random_range(-0.5..0.5));
    let query = Mat::from_fn(n * q, d, |i, c| center(i / q, c) + r.random_range(-0.5..0.5));
    let labels: Vec<usize> = (0..n * m).map(|i| i / m).collect();
    let query_labels: Vec<usize> = (0..n * q).map(|i| i / q).collect();

    for kind in LearnerKind::ALL {
        let cfg = LearnerConfig::new(kind);
        let out = forward(&cfg, &support, &labels, n, &query)?;
        let preds: Vec<usize> = out.logits.row_iter().map(|row| argmax_lowest(row.iter().copied())).collect();
        let (loss, grad_logits) = cross_entropy(&out.logits, &query_labels);
        let grads = backward(kind, &out.state, &grad_logits)?;
        println!("{kind}: predictions {preds:?}, loss {loss:.4}");
        println!("  |dL/dsupport| {:.4}  |dL/dquery| {:.4}  dL/dt {:.4}", grads.support.norm(), grads.query.norm(), grads.temperature);
    }

    // the unrolled SVM solver approaches the dual optimum as iterations grow
    for iters in [1, 5, 15, 100, 500] {
        let traj = svm_solve(&support, &labels, n, 0.1, iters)?;
        let targets = Mat::from_fn(n * m, n, |i, k| if labels[i] == k { 1.0 } else { 0.0 });
        println!("svm dual objective after {iters:>3} steps: {:.6}", svm_dual_objective(&traj.gram, &targets, traj.alphas.last().unwrap()));
    }
    Ok(())
}
