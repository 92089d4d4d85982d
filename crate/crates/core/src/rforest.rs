//! Bagged CART classifier with Gini splits.
//!
//! Each tree draws its randomness from its own ChaCha stream keyed by
//! `(seed, tree index)`, so the forest is identical whether trees are grown
//! serially or in parallel.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{FeatureMatrix, Features, NUM_FEATURES};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct RfParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split before falling back to the rest.
    pub mtry: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 50,
            min_samples_leaf: 2,
            mtry: ((NUM_FEATURES as f64).sqrt().floor() as usize).max(1),
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        if self.mtry == 0 || self.mtry > NUM_FEATURES {
            return Err(Error::invalid(format!(
                "mtry must be in 1..={NUM_FEATURES}, got {}",
                self.mtry
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        /// `[background, foreground]` training counts.
        counts: [u32; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A single CART tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_for(&self, x: &Features) -> &TreeNode {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    /// Fraction of foreground training rows in the leaf `x` falls into.
    pub fn predict(&self, x: &Features) -> f64 {
        match self.leaf_for(x) {
            TreeNode::Leaf { counts } => {
                f64::from(counts[1]) / f64::from(counts[0] + counts[1])
            }
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub(crate) trees: Vec<DecisionTree>,
    pub(crate) params: RfParams,
}

impl RandomForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn params(&self) -> &RfParams {
        &self.params
    }

    pub(crate) fn from_parts(trees: Vec<DecisionTree>, params: RfParams) -> Self {
        RandomForest { trees, params }
    }

    pub fn predict_one(&self, x: &Features) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

pub fn rf_fit(data: &FeatureMatrix, params: &RfParams) -> Result<RandomForest> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a random forest on empty data"));
    }
    let rows = data.labeled()?;
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = tree_rng(params.seed, t);
        let sample: Vec<usize> = if params.bootstrap {
            (0..rows.len())
                .map(|_| rng.random_range(0..rows.len()))
                .collect()
        } else {
            (0..rows.len()).collect()
        };
        grow_tree(&rows, sample, params, &mut rng)
    });
    Ok(RandomForest {
        trees,
        params: params.clone(),
    })
}

/// Mean over trees of the foreground leaf frequency, one value per row.
pub fn rf_predict_proba(model: &RandomForest, features: &FeatureMatrix) -> Result<Vec<f64>> {
    let rows = features.rows();
    let mut out = vec![0.0; rows.len()];
    par::fill_chunked(&mut out, 1024, |i| model.predict_one(&rows[i].features()));
    Ok(out)
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn gini_weighted(counts: [usize; 2]) -> f64 {
    // n * gini = n - (c0^2 + c1^2) / n
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (counts[0] as f64, counts[1] as f64);
    n - (a * a + b * b) / n
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split_on(
    rows: &[(Features, bool)],
    idx: &[usize],
    feature: usize,
    min_leaf: usize,
    scratch: &mut Vec<(f64, bool)>,
) -> Option<SplitCandidate> {
    scratch.clear();
    scratch.extend(idx.iter().map(|&i| (rows[i].0[feature], rows[i].1)));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = scratch.len();
    let mut total = [0usize; 2];
    for &(_, l) in scratch.iter() {
        total[l as usize] += 1;
    }
    let mut left = [0usize; 2];
    let mut best: Option<SplitCandidate> = None;
    for i in 0..n - 1 {
        left[scratch[i].1 as usize] += 1;
        if scratch[i].0 == scratch[i + 1].0 {
            continue;
        }
        let nl = i + 1;
        if nl < min_leaf || n - nl < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let imp = gini_weighted(left) + gini_weighted(right);
        if best.as_ref().is_none_or(|b| imp < b.impurity) {
            best = Some(SplitCandidate {
                feature,
                threshold: 0.5 * (scratch[i].0 + scratch[i + 1].0),
                impurity: imp,
            });
        }
    }
    best
}

fn grow_tree(
    rows: &[(Features, bool)],
    sample: Vec<usize>,
    params: &RfParams,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut nodes = vec![TreeNode::Leaf { counts: [0, 0] }];
    let mut stack = vec![(0usize, sample)];
    let mut scratch = Vec::new();
    let mut order: [usize; NUM_FEATURES] = std::array::from_fn(|i| i);

    while let Some((slot, idx)) = stack.pop() {
        let mut counts = [0usize; 2];
        for &i in &idx {
            counts[rows[i].1 as usize] += 1;
        }
        let leaf = TreeNode::Leaf {
            counts: [counts[0] as u32, counts[1] as u32],
        };
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || idx.len() < 2 * params.min_samples_leaf {
            nodes[slot] = leaf;
            continue;
        }

        let parent_imp = gini_weighted(counts);
        order.shuffle(rng);
        let mut best: Option<SplitCandidate> = None;
        for (visited, &f) in order.iter().enumerate() {
            // Keep drawing features past mtry only while nothing useful was found.
            if visited >= params.mtry && best.is_some() {
                break;
            }
            let Some(cand) = best_split_on(rows, &idx, f, params.min_samples_leaf, &mut scratch)
            else {
                continue;
            };
            if cand.impurity >= parent_imp - 1e-12 {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    cand.impurity < b.impurity
                        || (cand.impurity == b.impurity && cand.feature < b.feature)
                }
            };
            if better {
                best = Some(cand);
            }
        }

        let Some(split) = best else {
            nodes[slot] = leaf;
            continue;
        };
        debug_assert!(split.impurity <= parent_imp);
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| rows[i].0[split.feature] <= split.threshold);
        debug_assert!(l_idx.len() >= params.min_samples_leaf);
        debug_assert!(r_idx.len() >= params.min_samples_leaf);

        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::Leaf { counts: [0, 0] });
        nodes.push(TreeNode::Leaf { counts: [0, 0] });
        nodes[slot] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, r_idx));
        stack.push((left, l_idx));
    }
    DecisionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::PixelSample;

    fn toy_separable(n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(Features, bool)> = (0..n)
            .map(|_| {
                let f = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                (f, f[0] > 0.5)
            })
            .collect();
        FeatureMatrix::from_labeled(&pts)
    }

    /// Exhaustive search over every feature/threshold for a perfect separator.
    fn has_perfect_axis_split(data: &FeatureMatrix) -> bool {
        let rows = data.labeled().unwrap();
        (0..NUM_FEATURES).any(|f| {
            rows.iter().any(|(t, _)| {
                let thr = t[f];
                let side = |x: &Features| x[f] <= thr;
                let mut seen = [None, None];
                rows.iter().all(|(x, l)| {
                    let s = side(x) as usize;
                    match seen[s] {
                        None => {
                            seen[s] = Some(*l);
                            true
                        }
                        Some(prev) => prev == *l,
                    }
                })
            })
        })
    }

    #[test]
    fn single_class_is_certain() {
        let data = FeatureMatrix::from_labeled(&[([0.1, 0.2, 0.3], true), ([0.4, 0.5, 0.6], true)]);
        let m = rf_fit(&data, &RfParams::default()).unwrap();
        for t in m.trees() {
            assert_eq!(t.nodes().len(), 1);
        }
        let p = rf_predict_proba(&m, &data).unwrap();
        assert!(p.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn separable_toy_is_learned_exactly() {
        let data = toy_separable(200, 1);
        assert!(has_perfect_axis_split(&data));
        let params = RfParams {
            n_trees: 1,
            min_samples_leaf: 1,
            bootstrap: false,
            ..RfParams::default()
        };
        let m = rf_fit(&data, &params).unwrap();
        let p = rf_predict_proba(&m, &data).unwrap();
        let acc = data
            .rows()
            .iter()
            .zip(&p)
            .filter(|(r, &p)| r.label == Some(p >= 0.5))
            .count();
        assert_eq!(acc, 200);
    }

    #[test]
    fn same_seed_same_forest() {
        let data = toy_separable(300, 2);
        let params = RfParams {
            n_trees: 10,
            seed: 99,
            ..RfParams::default()
        };
        let a = rf_fit(&data, &params).unwrap();
        let b = rf_fit(&data, &params).unwrap();
        assert_eq!(a, b);
        let c = rf_fit(&data, &RfParams { seed: 100, ..params }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pure_leaf_trace_on_single_tree() {
        let data = toy_separable(60, 3);
        let params = RfParams {
            n_trees: 1,
            min_samples_leaf: 1,
            bootstrap: false,
            ..RfParams::default()
        };
        let m = rf_fit(&data, &params).unwrap();
        let tree = &m.trees()[0];
        for row in data.rows() {
            let x = row.features();
            // walk by hand
            let mut i = 0;
            let counts = loop {
                match &tree.nodes()[i] {
                    TreeNode::Split { feature, threshold, left, right } => {
                        i = if x[*feature] <= *threshold { *left } else { *right }
                    }
                    TreeNode::Leaf { counts } => break *counts,
                }
            };
            let expected = if counts[0] == 0 { 1.0 } else { 0.0 };
            assert!(counts[0] == 0 || counts[1] == 0);
            assert_eq!(m.predict_one(&x), expected);
        }
    }

    #[test]
    fn forest_output_is_mean_of_trees() {
        let data = toy_separable(400, 4);
        let m = rf_fit(&data, &RfParams { seed: 5, ..RfParams::default() }).unwrap();
        assert_eq!(m.trees().len(), 50);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let probes: Vec<PixelSample> = (0..200)
            .map(|_| PixelSample {
                x_norm: rng.random(),
                y_norm: rng.random(),
                intensity_norm: rng.random(),
                label: None,
            })
            .collect();
        let probes = FeatureMatrix::from_rows(probes);
        let p = rf_predict_proba(&m, &probes).unwrap();
        for (row, &pv) in probes.rows().iter().zip(&p) {
            let x = row.features();
            let mut acc = 0.0;
            for t in m.trees() {
                acc += t.predict(&x);
            }
            assert_eq!(pv, acc / 50.0);
            assert!((0.0..=1.0).contains(&pv));
        }
    }

    #[test]
    fn leaves_respect_min_samples() {
        let data = toy_separable(500, 6);
        let params = RfParams { n_trees: 5, min_samples_leaf: 4, ..RfParams::default() };
        let m = rf_fit(&data, &params).unwrap();
        for t in m.trees() {
            for n in t.nodes() {
                if let TreeNode::Leaf { counts } = n {
                    assert!(counts[0] + counts[1] >= 4);
                }
            }
        }
    }

    #[test]
    fn fit_errors() {
        assert!(rf_fit(&FeatureMatrix::from_rows(vec![]), &RfParams::default()).is_err());
        let unlabeled = FeatureMatrix::from_rows(vec![PixelSample {
            x_norm: 0.0,
            y_norm: 0.0,
            intensity_norm: 0.0,
            label: None,
        }]);
        assert!(rf_fit(&unlabeled, &RfParams::default()).is_err());
        let data = toy_separable(10, 1);
        assert!(rf_fit(&data, &RfParams { mtry: 4, ..RfParams::default() }).is_err());
        assert!(rf_fit(&data, &RfParams { n_trees: 0, ..RfParams::default() }).is_err());
    }
}
