//! Additive tree ensemble head over the CNN embedding.

use serde::{Deserialize, Serialize};

use crate::model::sigmoid_unchecked;
use crate::scalar::Scalar;

use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T> {
    /// `embedding[feature] <= threshold` routes left.
    Split { feature: usize, threshold: T, left: usize, right: usize },
    Leaf { value: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    /// Root at index 0; children always sit at larger indices.
    pub nodes: Vec<TreeNode<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble<T> {
    pub model_id: String,
    pub feature_dim: usize,
    pub base_score: T,
    pub trees: Vec<Tree<T>>,
}

fn ensemble_err(detail: impl Into<String>) -> ModelError {
    ModelError::Shape { layer: "ensemble".into(), detail: detail.into() }
}

impl<T: Scalar> Tree<T> {
    fn validate(&self, feature_dim: usize, t: usize) -> Result<(), ModelError> {
        if self.nodes.is_empty() {
            return Err(ensemble_err(format!("tree {t} is empty")));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let TreeNode::Split { feature, left, right, .. } = *node {
                if feature >= feature_dim {
                    return Err(ensemble_err(format!(
                        "tree {t} node {i} reads feature {feature}, embedding has {feature_dim}"
                    )));
                }
                for child in [left, right] {
                    if child <= i || child >= self.nodes.len() {
                        return Err(ensemble_err(format!("tree {t} node {i} has invalid child {child}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Leaf value reached by `x`.
    pub fn leaf_value(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

impl<T: Scalar> TreeEnsemble<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.trees.iter().enumerate().try_for_each(|(t, tree)| tree.validate(self.feature_dim, t))
    }

    /// Raw additive score before the sigmoid.
    pub fn score(&self, embedding: &[T]) -> Result<T, ModelError> {
        if embedding.len() != self.feature_dim {
            return Err(ensemble_err(format!(
                "embedding has {} features, ensemble expects {}",
                embedding.len(),
                self.feature_dim
            )));
        }
        Ok(self.trees.iter().fold(self.base_score, |acc, t| acc + t.leaf_value(embedding)))
    }
}

pub fn ensemble_forward<T: Scalar>(ensemble: &TreeEnsemble<T>, embedding: &[T]) -> Result<T, ModelError> {
    let score = ensemble.score(embedding)?;
    if !score.is_finite() {
        return Err(ModelError::Numeric { layer: "ensemble".into() });
    }
    Ok(sigmoid_unchecked(score))
}

/// On-disk node form: `{"feature", "threshold", "left", "right"}` or `{"leaf"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum NodeWire {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { leaf: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct TreeWire {
    pub nodes: Vec<NodeWire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct EnsembleWire {
    pub feature_dim: usize,
    pub base_score: f64,
    pub trees: Vec<TreeWire>,
}

impl EnsembleWire {
    pub fn into_ensemble<T: Scalar>(self, model_id: &str) -> TreeEnsemble<T> {
        TreeEnsemble {
            model_id: model_id.to_string(),
            feature_dim: self.feature_dim,
            base_score: T::of(self.base_score),
            trees: self
                .trees
                .into_iter()
                .map(|t| Tree {
                    nodes: t
                        .nodes
                        .into_iter()
                        .map(|n| match n {
                            NodeWire::Split { feature, threshold, left, right } => {
                                TreeNode::Split { feature, threshold: T::of(threshold), left, right }
                            }
                            NodeWire::Leaf { leaf } => TreeNode::Leaf { value: T::of(leaf) },
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_ensemble<T: Scalar>(e: &TreeEnsemble<T>) -> Self {
        EnsembleWire {
            feature_dim: e.feature_dim,
            base_score: e.base_score.as_f64(),
            trees: e
                .trees
                .iter()
                .map(|t| TreeWire {
                    nodes: t
                        .nodes
                        .iter()
                        .map(|n| match *n {
                            TreeNode::Split { feature, threshold, left, right } => {
                                NodeWire::Split { feature, threshold: threshold.as_f64(), left, right }
                            }
                            TreeNode::Leaf { value } => NodeWire::Leaf { leaf: value.as_f64() },
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Tree<f64> {
        Tree {
            nodes: vec![
                TreeNode::Split { feature, threshold, left: 1, right: 2 },
                TreeNode::Leaf { value: left },
                TreeNode::Leaf { value: right },
            ],
        }
    }

    #[test]
    fn empty_ensemble_is_half() {
        let e = TreeEnsemble { model_id: "hcm".into(), feature_dim: 4, base_score: 0.0, trees: vec![] };
        assert_eq!(ensemble_forward(&e, &[0.0; 4]).unwrap(), 0.5);
    }

    #[test]
    fn two_stumps() {
        let e = TreeEnsemble {
            model_id: "hcm".into(),
            feature_dim: 2,
            base_score: 0.0,
            trees: vec![stump(0, 1.0, 0.3, 9.0), stump(1, 1.0, 9.0, -0.1)],
        };
        // x0 = 0.5 goes left (0.3), x1 = 2 goes right (-0.1): sigmoid(0.2)
        let p = ensemble_forward(&e, &[0.5, 2.0]).unwrap();
        assert!((p - 0.549_833_997_312_478).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_left() {
        let t = stump(0, 0.25, -1.0, 1.0);
        assert_eq!(t.leaf_value(&[0.25]), -1.0);
        assert_eq!(t.leaf_value(&[0.250_000_1]), 1.0);
    }

    #[test]
    fn feature_bound_is_checked() {
        let e = TreeEnsemble { model_id: "hcm".into(), feature_dim: 32, base_score: 0.0, trees: vec![stump(10_000, 0.0, 0.0, 0.0)] };
        assert!(matches!(e.validate(), Err(ModelError::Shape { layer, .. }) if layer == "ensemble"));
        let ok = TreeEnsemble { model_id: "hcm".into(), feature_dim: 32, base_score: 0.0, trees: vec![stump(3, 0.0, 0.0, 0.0)] };
        assert!(ok.validate().is_ok());
        assert!(matches!(ensemble_forward(&ok, &[0.0; 31]), Err(ModelError::Shape { .. })));
    }

    #[test]
    fn cycles_are_rejected() {
        let t = Tree { nodes: vec![TreeNode::Split { feature: 0, threshold: 0.0, left: 0, right: 1 }, TreeNode::Leaf { value: 0.0 }] };
        let e = TreeEnsemble { model_id: "x".into(), feature_dim: 1, base_score: 0.0, trees: vec![t] };
        assert!(e.validate().is_err());
    }
}
