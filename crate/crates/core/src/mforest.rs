//! Mondrian forest classifier.
//!
//! Trees are sampled from a Mondrian process restricted to the bounding box of
//! the data reaching each node. Splits are paused at pure or small nodes, so
//! with the default infinite lifetime depth is bounded by the data alone.
//! Leaves keep their training points so a paused leaf can be split later when
//! [`mf_extend`] makes it impure.
//!
//! Prediction walks the root-to-leaf path and mixes node posteriors by the
//! probability that a new split would have separated the query from the node's
//! box before reaching it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::image::{FeatureMatrix, Features, NUM_FEATURES};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct MfParams {
    pub n_trees: usize,
    /// Mondrian lifetime; `f64::INFINITY` means splits stop only at the pause rule.
    pub lifetime: f64,
    pub min_samples_leaf: usize,
    /// Pseudo-count pulling each node's posterior toward its parent's.
    pub smoothing_alpha: f64,
    pub seed: u64,
}

impl Default for MfParams {
    fn default() -> Self {
        MfParams {
            n_trees: 50,
            lifetime: f64::INFINITY,
            min_samples_leaf: 2,
            smoothing_alpha: 1.0,
            seed: 0,
        }
    }
}

impl MfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if self.lifetime.is_nan() || self.lifetime <= 0.0 {
            return Err(Error::invalid("lifetime must be positive"));
        }
        if self.smoothing_alpha.is_nan() || self.smoothing_alpha <= 0.0 {
            return Err(Error::invalid("smoothing_alpha must be positive"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MondrianKind {
    Leaf {
        points: Vec<(Features, bool)>,
    },
    Split {
        dim: usize,
        loc: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MondrianNode {
    pub split_time: f64,
    pub lower: Features,
    pub upper: Features,
    /// `[background, foreground]`.
    pub counts: [u64; 2],
    pub kind: MondrianKind,
}
impl MondrianNode {
    /// L1 distance from `x` to the node's box; 0 inside.
    pub fn box_distance(&self, x: &Features) -> f64 {
        (0..NUM_FEATURES)
            .map(|d| (x[d] - self.upper[d]).max(0.0) + (self.lower[d] - x[d]).max(0.0))
            .sum()
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, MondrianKind::Leaf { .. })
    }

    fn posterior(&self, parent: f64, alpha: f64) -> f64 {
        let total = (self.counts[0] + self.counts[1]) as f64;
        (self.counts[1] as f64 + alpha * parent) / (total + alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MondrianTree {
    pub(crate) nodes: Vec<MondrianNode>,
    pub(crate) root: usize,
}

impl MondrianTree {
    pub fn nodes(&self) -> &[MondrianNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Build a tree from explicit nodes (used by deserialization and tests).
    pub fn from_nodes(nodes: Vec<MondrianNode>, root: usize) -> Result<Self> {
        if root >= nodes.len() {
            return Err(Error::invalid("root index out of range"));
        }
        for n in &nodes {
            if let MondrianKind::Split { dim, left, right, .. } = n.kind {
                if dim >= NUM_FEATURES || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::invalid("split node refers outside the tree"));
                }
            }
        }
        Ok(MondrianTree { nodes, root })
    }

    /// Predictive probability of the foreground class for `x`.
    pub fn predict(&self, x: &Features, alpha: f64) -> f64 {
        let mut out = 0.0;
        let mut mass = 1.0;
        let mut parent_time = 0.0;
        let mut parent_post = 0.5;
        let mut j = self.root;
        loop {
            let node = &self.nodes[j];
            let eta = node.box_distance(x);
            let p_branch = if eta > 0.0 {
                1.0 - (-(node.split_time - parent_time) * eta).exp()
            } else {
                0.0
            };
            let post = node.posterior(parent_post, alpha);
            match node.kind {
                MondrianKind::Leaf { .. } => {
                    // branch-off and residual mass both take the leaf posterior
                    out += mass * p_branch * post + mass * (1.0 - p_branch) * post;
                    return out;
                }
                MondrianKind::Split { dim, loc, left, right } => {
                    out += mass * p_branch * post;
                    mass *= 1.0 - p_branch;
                    parent_time = node.split_time;
                    parent_post = post;
                    j = if x[dim] <= loc { left } else { right };
                }
            }
        }
    }

    /// Checks every structural invariant; returns a description of the first violation.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let mut stack = vec![(self.root, 0.0f64)];
        let mut seen = 0usize;
        while let Some((j, parent_time)) = stack.pop() {
            seen += 1;
            let n = &self.nodes[j];
            if !(n.split_time > parent_time) {
                return Err(format!(
                    "node {j}: split time {} not after parent {}",
                    n.split_time, parent_time
                ));
            }
            for d in 0..NUM_FEATURES {
                if n.lower[d] > n.upper[d] {
                    return Err(format!("node {j}: empty box along {d}"));
                }
            }
            match &n.kind {
                MondrianKind::Leaf { points } => {
                    let mut c = [0u64; 2];
                    for (x, l) in points {
                        c[*l as usize] += 1;
                        if n.box_distance(x) > 0.0 {
                            return Err(format!("node {j}: point {x:?} outside box"));
                        }
                    }
                    if c != n.counts {
                        return Err(format!("leaf {j}: counts {:?} vs points {:?}", n.counts, c));
                    }
                }
                MondrianKind::Split { dim, loc, left, right } => {
                    if !(*loc > n.lower[*dim] && *loc < n.upper[*dim]) {
                        return Err(format!(
                            "node {j}: split {loc} not inside [{}, {}]",
                            n.lower[*dim], n.upper[*dim]
                        ));
                    }
                    let (l, r) = (&self.nodes[*left], &self.nodes[*right]);
                    if [l.counts[0] + r.counts[0], l.counts[1] + r.counts[1]] != n.counts {
                        return Err(format!("node {j}: counts differ from children"));
                    }
                    for c in [l, r] {
                        for d in 0..NUM_FEATURES {
                            if c.lower[d] < n.lower[d] || c.upper[d] > n.upper[d] {
                                return Err(format!("node {j}: child box escapes parent"));
                            }
                        }
                    }
                    if l.upper[*dim] > *loc || r.lower[*dim] <= *loc {
                        return Err(format!("node {j}: children not separated by split"));
                    }
                    stack.push((*left, n.split_time));
                    stack.push((*right, n.split_time));
                }
            }
            if seen > self.nodes.len() {
                return Err("cycle in tree".into());
            }
        }
        Ok(())
    }

    pub fn leaf_count(&self) -> usize {
        let mut stack = vec![self.root];
        let mut k = 0;
        while let Some(j) = stack.pop() {
            match self.nodes[j].kind {
                MondrianKind::Leaf { .. } => k += 1,
                MondrianKind::Split { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MondrianForest {
    pub(crate) trees: Vec<MondrianTree>,
    pub(crate) params: MfParams,
    /// Number of `mf_extend` calls so far; keys the extension RNG streams.
    pub(crate) extensions: u64,
}

impl MondrianForest {
    pub fn trees(&self) -> &[MondrianTree] {
        &self.trees
    }

    pub fn params(&self) -> &MfParams {
        &self.params
    }

    pub fn extensions(&self) -> u64 {
        self.extensions
    }

    pub fn from_parts(trees: Vec<MondrianTree>, params: MfParams, extensions: u64) -> Result<Self> {
        params.validate()?;
        if trees.len() != params.n_trees {
            return Err(Error::invalid(format!(
                "{} trees but n_trees = {}",
                trees.len(),
                params.n_trees
            )));
        }
        Ok(MondrianForest {
            trees,
            params,
            extensions,
        })
    }

    pub fn predict_one(&self, x: &Features) -> f64 {
        let a = self.params.smoothing_alpha;
        let sum: f64 = self.trees.iter().map(|t| t.predict(x, a)).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }

    pub fn audit(&self) -> std::result::Result<(), String> {
        for (i, t) in self.trees.iter().enumerate() {
            t.audit().map_err(|e| format!("tree {i}: {e}"))?;
        }
        Ok(())
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tree_rng(seed: u64, epoch: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, epoch));
    rng.set_stream(tree as u64);
    rng
}

fn draw_exp(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate > 0.0 && rate.is_finite() {
        Exp::new(rate).map(|e| e.sample(rng)).unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    }
}

/// Index drawn with probability proportional to `weights` (sum > 0).
fn draw_proportional(weights: &Features, rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (d, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = d;
        if u < w {
            return d;
        }
        u -= w;
    }
    last
}

/// Uniform draw strictly inside `(lo, hi)`, `lo < hi`.
fn draw_open(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    for _ in 0..64 {
        let v = lo + rng.random::<f64>() * (hi - lo);
        if v > lo && v < hi {
            return v;
        }
    }
    0.5 * (lo + hi)
}

struct Grower<'p> {
    params: &'p MfParams,
}

impl Grower<'_> {
    fn should_pause(&self, counts: [u64; 2]) -> bool {
        counts[0] == 0
            || counts[1] == 0
            || ((counts[0] + counts[1]) as usize) < 2 * self.params.min_samples_leaf
    }

    /// Sample a Mondrian subtree for `points` below a node split at `parent_time`.
    fn grow(
        &self,
        nodes: &mut Vec<MondrianNode>,
        points: Vec<(Features, bool)>,
        parent_time: f64,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let mut lower = [f64::INFINITY; NUM_FEATURES];
        let mut upper = [f64::NEG_INFINITY; NUM_FEATURES];
        let mut counts = [0u64; 2];
        for (x, l) in &points {
            counts[*l as usize] += 1;
            for d in 0..NUM_FEATURES {
                lower[d] = lower[d].min(x[d]);
                upper[d] = upper[d].max(x[d]);
            }
        }
        let sides: Features = std::array::from_fn(|d| upper[d] - lower[d]);
        let rate: f64 = sides.iter().sum();
        let time = parent_time + draw_exp(rate, rng);

        let slot = nodes.len();
        if time >= self.params.lifetime || self.should_pause(counts) {
            nodes.push(MondrianNode {
                split_time: self.params.lifetime,
                lower,
                upper,
                counts,
                kind: MondrianKind::Leaf { points },
            });
            return slot;
        }

        let dim = draw_proportional(&sides, rng);
        let loc = draw_open(lower[dim], upper[dim], rng);
        nodes.push(MondrianNode {
            split_time: time,
            lower,
            upper,
            counts,
            kind: MondrianKind::Leaf { points: Vec::new() },
        });
        let (lp, rp): (Vec<_>, Vec<_>) = points.into_iter().partition(|(x, _)| x[dim] <= loc);
        let left = self.grow(nodes, lp, time, rng);
        let right = self.grow(nodes, rp, time, rng);
        nodes[slot].kind = MondrianKind::Split { dim, loc, left, right };
        slot
    }

    /// Absorb one labeled point into the subtree at `j`; returns the subtree's new root.
    fn extend(
        &self,
        nodes: &mut Vec<MondrianNode>,
        j: usize,
        parent_time: f64,
        x: Features,
        label: bool,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let node = &nodes[j];
        let below: Features = std::array::from_fn(|d| (node.lower[d] - x[d]).max(0.0));
        let above: Features = std::array::from_fn(|d| (x[d] - node.upper[d]).max(0.0));
        let excess: Features = std::array::from_fn(|d| below[d] + above[d]);
        let eta: f64 = excess.iter().sum();
        let e = draw_exp(eta, rng);

        if parent_time + e < node.split_time {
            // New split above j separating x from j's box.
            let dim = draw_proportional(&excess, rng);
            let x_above = x[dim] > node.upper[dim];
            let loc = if x_above {
                draw_open(node.upper[dim], x[dim], rng)
            } else {
                draw_open(x[dim], node.lower[dim], rng)
            };
            let lower = std::array::from_fn(|d| node.lower[d].min(x[d]));
            let upper = std::array::from_fn(|d| node.upper[d].max(x[d]));
            let mut counts = node.counts;
            counts[label as usize] += 1;
            let time = parent_time + e;

            let leaf = nodes.len();
            let mut leaf_counts = [0u64; 2];
            leaf_counts[label as usize] = 1;
            nodes.push(MondrianNode {
                split_time: self.params.lifetime,
                lower: x,
                upper: x,
                counts: leaf_counts,
                kind: MondrianKind::Leaf {
                    points: vec![(x, label)],
                },
            });
            let (left, right) = if x_above { (j, leaf) } else { (leaf, j) };
            let parent = nodes.len();
            nodes.push(MondrianNode {
                split_time: time,
                lower,
                upper,
                counts,
                kind: MondrianKind::Split { dim, loc, left, right },
            });
            return parent;
        }

        let node = &mut nodes[j];
        for d in 0..NUM_FEATURES {
            node.lower[d] = node.lower[d].min(x[d]);
            node.upper[d] = node.upper[d].max(x[d]);
        }
        node.counts[label as usize] += 1;
        let time = node.split_time;
        match &mut node.kind {
            MondrianKind::Leaf { points } => {
                points.push((x, label));
                let counts = node.counts;
                if self.should_pause(counts) {
                    return j;
                }
                let MondrianKind::Leaf { points } =
                    std::mem::replace(&mut node.kind, MondrianKind::Leaf { points: Vec::new() })
                else {
                    unreachable!()
                };
                // The paused leaf is now splittable: resample its block from scratch.
                let new_root = self.grow(nodes, points, parent_time, rng);
                // `j` is left orphaned; compacted after the extension pass.
                new_root
            }
            MondrianKind::Split { dim, loc, left, right } => {
                let (dim, loc, left, right) = (*dim, *loc, *left, *right);
                if x[dim] <= loc {
                    let nl = self.extend(nodes, left, time, x, label, rng);
                    if let MondrianKind::Split { left, .. } = &mut nodes[j].kind {
                        *left = nl;
                    }
                } else {
                    let nr = self.extend(nodes, right, time, x, label, rng);
                    if let MondrianKind::Split { right, .. } = &mut nodes[j].kind {
                        *right = nr;
                    }
                }
                j
            }
        }
    }
}

/// Drop nodes unreachable from the root and renumber in depth-first order.
fn compact(tree: &mut MondrianTree) {
    let mut remap = vec![usize::MAX; tree.nodes.len()];
    let mut order = Vec::with_capacity(tree.nodes.len());
    let mut stack = vec![tree.root];
    while let Some(j) = stack.pop() {
        remap[j] = order.len();
        order.push(j);
        if let MondrianKind::Split { left, right, .. } = tree.nodes[j].kind {
            stack.push(right);
            stack.push(left);
        }
    }
    if order.len() == tree.nodes.len() && order.iter().enumerate().all(|(i, &j)| i == j) {
        return;
    }
    let mut old: Vec<Option<MondrianNode>> = std::mem::take(&mut tree.nodes).into_iter().map(Some).collect();
    tree.nodes = order
        .iter()
        .map(|&j| {
            let mut n = old[j].take().expect("node visited once");
            if let MondrianKind::Split { left, right, .. } = &mut n.kind {
                *left = remap[*left];
                *right = remap[*right];
            }
            n
        })
        .collect();
    tree.root = 0;
}

pub fn mf_fit(data: &FeatureMatrix, params: &MfParams) -> Result<MondrianForest> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a Mondrian forest on empty data"));
    }
    let rows = data.labeled()?;
    let grower = Grower { params };
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = tree_rng(params.seed, 0, t);
        let mut nodes = Vec::new();
        let root = grower.grow(&mut nodes, rows.clone(), 0.0, &mut rng);
        let mut tree = MondrianTree { nodes, root };
        compact(&mut tree);
        tree
    });
    Ok(MondrianForest {
        trees,
        params: params.clone(),
        extensions: 0,
    })
}

/// Extend every tree with the labeled rows of `data`, in row order.
pub fn mf_extend(model: &MondrianForest, data: &FeatureMatrix) -> Result<MondrianForest> {
    let rows = data.labeled()?;
    let mut next = model.clone();
    next.extensions += 1;
    let epoch = next.extensions;
    let params = next.params.clone();
    let grower = Grower { params: &params };
    par::for_each_mut(&mut next.trees, |t, tree| {
        let mut rng = tree_rng(params.seed, epoch, t);
        for &(x, l) in &rows {
            tree.root = grower.extend(&mut tree.nodes, tree.root, 0.0, x, l, &mut rng);
        }
        compact(tree);
    });
    Ok(next)
}

pub fn mf_predict_proba(model: &MondrianForest, features: &FeatureMatrix) -> Result<Vec<f64>> {
    let rows = features.rows();
    let mut out = vec![0.0; rows.len()];
    par::fill_chunked(&mut out, 1024, |i| model.predict_one(&rows[i].features()));
    Ok(out)
}
