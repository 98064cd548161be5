//! Random forest of Gini-split binary classification trees.
//!
//! Numeric thresholds sit at midpoints between consecutive distinct sorted
//! values, and a row goes left when its value is `<= threshold`. Among equally
//! good splits the lowest feature index wins, then the lowest threshold. Leaves
//! hold the Laplace-corrected missed fraction `(m + 1) / (n + 2)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encode::EncodedTable;
use super::ModelError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    /// `None` grows until purity or the leaf-size limit.
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
    /// `None` means `ceil(sqrt(p))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_depth: None,
            min_leaf_size: 10,
            features_per_split: None,
            bootstrap: true,
            seed: 1,
        }
    }
}

impl ForestHyperparams {
    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .max(1)
    }

    pub fn validate(&self, n_features: usize) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidHyperparams(m));
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        if self.min_leaf_size == 0 {
            return bad("min_leaf_size must be positive".into());
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be positive".into());
        }
        let mtry = self.resolved_features_per_split(n_features);
        if mtry > n_features {
            return bad(format!("features_per_split {mtry} exceeds the {n_features} available features"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

/// A binary tree stored as a flat node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Structural validity: children in range and after their parent, leaves in (0, 1).
    pub fn is_well_formed(&self, n_features: usize) -> bool {
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, n)| match *n {
                Node::Leaf { value } => value > 0.0 && value < 1.0,
                Node::Split { feature, threshold, left, right } => {
                    (feature as usize) < n_features
                        && threshold.is_finite()
                        && (left as usize) > i
                        && (right as usize) > i
                        && (left as usize) < self.nodes.len()
                        && (right as usize) < self.nodes.len()
                }
            })
    }
}

pub fn laplace_leaf(missed: usize, n: usize) -> f64 {
    (missed as f64 + 1.0) / (n as f64 + 2.0)
}

/// Grows `hp.n_trees` trees. Tree `i` draws from its own stream derived from
/// `(hp.seed, i)`, so the result does not depend on thread scheduling.
pub fn grow_forest(table: &EncodedTable, labels: &[bool], hp: &ForestHyperparams) -> Result<Vec<Tree>, ModelError> {
    let n = table.n_rows();
    if n == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if labels.len() != n {
        return Err(ModelError::LengthMismatch { left: n, right: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(ModelError::DegenerateLabels);
    }
    hp.validate(table.n_cols)?;

    let columns = table.columns();
    let builder = TreeBuilder {
        columns: &columns,
        labels,
        max_depth: hp.max_depth.unwrap_or(usize::MAX),
        min_leaf: hp.min_leaf_size,
        mtry: hp.resolved_features_per_split(table.n_cols),
    };
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(hp.seed, t as u64);
            let sample: Vec<u32> = if hp.bootstrap {
                (0..n).map(|_| rng.random_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            builder.grow(sample, &mut rng)
        })
        .collect();
    Ok(trees)
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [bool],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    /// Sum over children of `m * (n - m) / n`, proportional to weighted Gini.
    impurity: f64,
}

struct Pending {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

impl TreeBuilder<'_> {
    fn grow(&self, mut sample: Vec<u32>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.5 }];
        let mut stack = vec![Pending { node: 0, start: 0, end: sample.len(), depth: 0 }];
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(sample.len());
        let mut features: Vec<usize> = (0..self.columns.len()).collect();

        while let Some(Pending { node, start, end, depth }) = stack.pop() {
            let idx = &mut sample[start..end];
            let n = idx.len();
            let m = idx.iter().filter(|&&i| self.labels[i as usize]).count();

            let split = if depth >= self.max_depth || n < 2 * self.min_leaf || m == 0 || m == n {
                None
            } else {
                self.best_split(idx, m, rng, &mut features, &mut pairs)
            };

            match split {
                None => nodes[node] = Node::Leaf { value: laplace_leaf(m, n) },
                Some(c) => {
                    let col = &self.columns[c.feature];
                    let mid = partition(idx, |i| col[i as usize] <= c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.5 });
                    nodes.push(Node::Leaf { value: 0.5 });
                    nodes[node] = Node::Split {
                        feature: c.feature as u32,
                        threshold: c.threshold,
                        left: left as u32,
                        right: left as u32 + 1,
                    };
                    // right pushed first so the left subtree is grown first
                    stack.push(Pending { node: left + 1, start: start + mid, end, depth: depth + 1 });
                    stack.push(Pending { node: left, start, end: start + mid, depth: depth + 1 });
                }
            }
        }
        Tree { nodes }
    }

    fn best_split(
        &self,
        idx: &[u32],
        m: usize,
        rng: &mut ChaCha8Rng,
        features: &mut [usize],
        pairs: &mut Vec<(f64, bool)>,
    ) -> Option<Candidate> {
        let p = features.len();
        // partial Fisher-Yates for a uniform subset
        for i in 0..self.mtry {
            let j = rng.random_range(i..p);
            features.swap(i, j);
        }
        let mut chosen: Vec<usize> = features[..self.mtry].to_vec();
        chosen.sort_unstable();

        let n = idx.len();
        let parent = (m * (n - m)) as f64 / n as f64;
        let mut best: Option<Candidate> = None;

        for &f in &chosen {
            let col = &self.columns[f];
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (col[i as usize], self.labels[i as usize])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }

            let mut left_m = 0usize;
            for k in 0..n - 1 {
                left_m += pairs[k].1 as usize;
                let left_n = k + 1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let right_n = n - left_n;
                if left_n < self.min_leaf {
                    continue;
                }
                if right_n < self.min_leaf {
                    break;
                }
                let right_m = m - left_m;
                let impurity = (left_m * (left_n - left_m)) as f64 / left_n as f64
                    + (right_m * (right_n - right_m)) as f64 / right_n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(pairs[k].0, pairs[k + 1].0),
                        impurity,
                    });
                }
            }
        }
        best.filter(|b| b.impurity < parent - 1e-12 * n as f64)
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    // guards the case where rounding lands the midpoint on b
    if mid < b {
        mid
    } else {
        a
    }
}

/// In-place partition; returns the number of elements satisfying `pred`,
/// which end up at the front.
fn partition(idx: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut lo = 0;
    for i in 0..idx.len() {
        if pred(idx[i]) {
            idx.swap(lo, i);
            lo += 1;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[Vec<f64>]) -> EncodedTable {
        EncodedTable::from_rows("fp".into(), rows)
    }

    #[test]
    fn single_full_tree_fits_separable_data() {
        let t = table(&[vec![1.0, 5.0], vec![2.0, 3.0], vec![3.0, 9.0], vec![4.0, 1.0]]);
        let labels = [false, false, true, true];
        let hp = ForestHyperparams {
            n_trees: 1,
            bootstrap: false,
            features_per_split: Some(2),
            min_leaf_size: 1,
            max_depth: None,
            seed: 3,
        };
        let trees = grow_forest(&t, &labels, &hp).unwrap();
        assert_eq!(trees[0].nodes.len(), 3);
        assert!(matches!(trees[0].nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 2.5));
        for (i, &l) in labels.iter().enumerate() {
            let p = trees[0].predict(t.row(i));
            assert_eq!(p > 0.5, l);
        }
    }

    #[test]
    fn gini_tie_prefers_lowest_feature() {
        // both columns separate the labels perfectly
        let t = table(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let labels = [false, false, true, true];
        let hp = ForestHyperparams { n_trees: 1, bootstrap: false, features_per_split: Some(2), min_leaf_size: 1, ..Default::default() };
        let tree = &grow_forest(&t, &labels, &hp).unwrap()[0];
        assert!(matches!(tree.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn degenerate_and_empty_inputs() {
        let t = table(&[vec![1.0], vec![2.0]]);
        assert!(matches!(grow_forest(&t, &[true, true], &ForestHyperparams::default()), Err(ModelError::DegenerateLabels)));
        let empty = EncodedTable { fingerprint: "fp".into(), n_cols: 1, data: vec![] };
        assert!(matches!(grow_forest(&empty, &[], &ForestHyperparams::default()), Err(ModelError::EmptyTrainingSet)));
    }

    #[test]
    fn too_many_split_features_rejected() {
        let t = table(&[vec![1.0], vec![2.0]]);
        let hp = ForestHyperparams { features_per_split: Some(2), ..Default::default() };
        assert!(matches!(grow_forest(&t, &[true, false], &hp), Err(ModelError::InvalidHyperparams(_))));
    }

    #[test]
    fn leaf_size_and_depth_limits_hold() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let labels: Vec<bool> = (0..200).map(|i| (i * 31 % 17) < 6).collect();
        let hp = ForestHyperparams { n_trees: 5, max_depth: Some(3), min_leaf_size: 7, ..Default::default() };
        let t = table(&rows);
        for tree in grow_forest(&t, &labels, &hp).unwrap() {
            assert!(tree.depth() <= 3);
            assert!(tree.is_well_formed(2));
        }
    }

    #[test]
    fn midpoint_stays_below_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }
}
