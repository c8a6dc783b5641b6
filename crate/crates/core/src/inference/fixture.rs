//! Seeded random weights for the fixture models. No trained weights ship
//! with the platform; these give the engine deterministic, non-trivial work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::cnn::{BatchNorm, CnnModel, ConvLayer, DenseLayer, BATCH_NORM_EPS, DROPOUT_RATE, POOL_LENGTH};
use super::ensemble::{Tree, TreeEnsemble, TreeNode};

/// Channel / kernel / width plan for the seven-block network.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnPlan {
    pub input_length: usize,
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub dense: Vec<usize>,
}

impl Default for CnnPlan {
    fn default() -> Self {
        CnnPlan {
            input_length: crate::WINDOW_LEN,
            channels: vec![16, 16, 32, 32, 64, 64, 64],
            kernels: vec![7, 7, 5, 5, 3, 3, 3],
            dense: vec![64, 32],
        }
    }
}

// Every draw is an f32 so the model survives the f32 weight file unchanged.
fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> T {
    T::of(rng.random_range(lo..hi) as f64)
}

fn fill<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<T> {
    (0..n).map(|_| uniform(rng, -scale, scale)).collect()
}

fn random_bn<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> BatchNorm<T> {
    BatchNorm {
        gamma: (0..n).map(|_| uniform(rng, 0.8, 1.2)).collect(),
        beta: fill(rng, n, 0.1),
        mean: fill(rng, n, 0.1),
        var: (0..n).map(|_| uniform(rng, 0.5, 1.5)).collect(),
    }
}

pub fn random_cnn<T: Scalar>(model_id: &str, plan: &CnnPlan, seed: u64) -> CnnModel<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_ch = 1;
    let mut len = plan.input_length;
    let mut conv = Vec::new();
    for (&out_ch, &k) in plan.channels.iter().zip(&plan.kernels) {
        let scale = (6.0 / (in_ch * k) as f32).sqrt();
        conv.push(ConvLayer {
            in_channels: in_ch,
            out_channels: out_ch,
            kernel_length: k,
            pool_length: POOL_LENGTH,
            weight: fill(&mut rng, out_ch * in_ch * k, scale),
            bias: fill(&mut rng, out_ch, 0.05),
            bn: random_bn(&mut rng, out_ch),
        });
        in_ch = out_ch;
        len /= POOL_LENGTH;
    }
    let mut width = len * in_ch;
    let mut dense = Vec::new();
    for &out in &plan.dense {
        let scale = (6.0 / width as f32).sqrt();
        dense.push(DenseLayer {
            in_dim: width,
            out_dim: out,
            weight: fill(&mut rng, out * width, scale),
            bias: fill(&mut rng, out, 0.05),
            bn: Some(random_bn(&mut rng, out)),
            dropout_rate: DROPOUT_RATE,
        });
        width = out;
    }
    let output = DenseLayer {
        in_dim: width,
        out_dim: 1,
        weight: fill(&mut rng, width, 0.2),
        bias: fill(&mut rng, 1, 0.1),
        bn: None,
        dropout_rate: 0.0,
    };
    CnnModel {
        model_id: model_id.to_string(),
        input_length: plan.input_length,
        input_channels: 1,
        conv,
        dense,
        output,
        bn_eps: T::of(BATCH_NORM_EPS),
    }
}

/// Complete binary trees of the given depth over `feature_dim` features.
pub fn random_ensemble<T: Scalar>(model_id: &str, feature_dim: usize, n_trees: usize, depth: u32, seed: u64) -> TreeEnsemble<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..n_trees)
        .map(|_| {
            let internal = (1usize << depth) - 1;
            let total = (1usize << (depth + 1)) - 1;
            let nodes = (0..total)
                .map(|i| {
                    if i < internal {
                        TreeNode::Split {
                            feature: rng.random_range(0..feature_dim),
                            threshold: uniform(&mut rng, 0.0, 1.5),
                            left: 2 * i + 1,
                            right: 2 * i + 2,
                        }
                    } else {
                        TreeNode::Leaf { value: uniform(&mut rng, -0.2, 0.2) }
                    }
                })
                .collect();
            Tree { nodes }
        })
        .collect();
    TreeEnsemble { model_id: model_id.to_string(), feature_dim, base_score: T::zero(), trees }
}
