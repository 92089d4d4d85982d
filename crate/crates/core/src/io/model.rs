//! Versioned little-endian binary encoding for trained forests.
//!
//! Layout: magic `SPFM`, `u16` version, `u8` kind (1 = random, 2 = Mondrian),
//! parameters, then trees. Floats are stored as raw IEEE-754 bits, so a round
//! trip is exact, infinities included.

use crate::error::{Error, Result};
use crate::image::{Features, NUM_FEATURES};
use crate::mforest::{MfParams, MondrianForest, MondrianKind, MondrianNode, MondrianTree};
use crate::rforest::{DecisionTree, RandomForest, RfParams, TreeNode};

const MAGIC: &[u8; 4] = b"SPFM";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ForestModel {
    Random(RandomForest),
    Mondrian(MondrianForest),
}

impl From<RandomForest> for ForestModel {
    fn from(m: RandomForest) -> Self {
        ForestModel::Random(m)
    }
}

impl From<MondrianForest> for ForestModel {
    fn from(m: MondrianForest) -> Self {
        ForestModel::Mondrian(m)
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn features(&mut self, x: &Features) {
        x.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("model truncated: wanted {n} more bytes"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        let at = self.pos;
        usize::try_from(self.u64()?).map_err(|_| Error::Parse {
            offset: at,
            message: "count does not fit in usize".into(),
        })
    }
    /// A length that can be backed by at least `min_bytes` each of remaining input.
    fn len(&mut self, min_bytes: usize) -> Result<usize> {
        let at = self.pos;
        let n = self.usize()?;
        if n.saturating_mul(min_bytes.max(1)) > self.buf.len() - self.pos {
            return Err(Error::Parse {
                offset: at,
                message: format!("length {n} exceeds remaining input"),
            });
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn features(&mut self) -> Result<Features> {
        let mut x = [0.0; NUM_FEATURES];
        for v in &mut x {
            *v = self.f64()?;
        }
        Ok(x)
    }
    fn bad(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }
}

pub fn serialize_model(model: &ForestModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u16(MODEL_VERSION);
    match model {
        ForestModel::Random(rf) => {
            w.u8(1);
            let p = rf.params();
            w.u64(p.n_trees as u64);
            w.u64(p.min_samples_leaf as u64);
            w.u64(p.mtry as u64);
            w.u8(p.bootstrap as u8);
            w.u64(p.seed);
            w.u64(rf.trees().len() as u64);
            for t in rf.trees() {
                w.u64(t.nodes().len() as u64);
                for n in t.nodes() {
                    match n {
                        TreeNode::Leaf { counts } => {
                            w.u8(0);
                            w.u64(u64::from(counts[0]));
                            w.u64(u64::from(counts[1]));
                        }
                        TreeNode::Split { feature, threshold, left, right } => {
                            w.u8(1);
                            w.u8(*feature as u8);
                            w.f64(*threshold);
                            w.u64(*left as u64);
                            w.u64(*right as u64);
                        }
                    }
                }
            }
        }
        ForestModel::Mondrian(mf) => {
            w.u8(2);
            let p = mf.params();
            w.u64(p.n_trees as u64);
            w.f64(p.lifetime);
            w.u64(p.min_samples_leaf as u64);
            w.f64(p.smoothing_alpha);
            w.u64(p.seed);
            w.u64(mf.extensions());
            w.u64(mf.trees().len() as u64);
            for t in mf.trees() {
                w.u64(t.root() as u64);
                w.u64(t.nodes().len() as u64);
                for n in t.nodes() {
                    w.f64(n.split_time);
                    w.features(&n.lower);
                    w.features(&n.upper);
                    w.u64(n.counts[0]);
                    w.u64(n.counts[1]);
                    match &n.kind {
                        MondrianKind::Leaf { points } => {
                            w.u8(0);
                            w.u64(points.len() as u64);
                            for (x, l) in points {
                                w.features(x);
                                w.u8(*l as u8);
                            }
                        }
                        MondrianKind::Split { dim, loc, left, right } => {
                            w.u8(1);
                            w.u8(*dim as u8);
                            w.f64(*loc);
                            w.u64(*left as u64);
                            w.u64(*right as u64);
                        }
                    }
                }
            }
        }
    }
    w.0
}

pub fn deserialize_model(buf: &[u8]) -> Result<ForestModel> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Parse { offset: 0, message: "not a forest model file".into() });
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::Version(version));
    }
    let model = match r.u8()? {
        1 => {
            let params = RfParams {
                n_trees: r.usize()?,
                min_samples_leaf: r.usize()?,
                mtry: r.usize()?,
                bootstrap: r.u8()? != 0,
                seed: r.u64()?,
            };
            let n_trees = r.len(8)?;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let n_nodes = r.len(17)?;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    nodes.push(match r.u8()? {
                        0 => {
                            let a = r.u64()?;
                            let b = r.u64()?;
                            let c = |v: u64| u32::try_from(v).map_err(|_| r.bad("leaf count overflow"));
                            TreeNode::Leaf { counts: [c(a)?, c(b)?] }
                        }
                        1 => TreeNode::Split {
                            feature: r.u8()? as usize,
                            threshold: r.f64()?,
                            left: r.usize()?,
                            right: r.usize()?,
                        },
                        t => return Err(r.bad(format!("unknown tree node tag {t}"))),
                    });
                }
                check_rf_tree(&nodes).map_err(|m| r.bad(m))?;
                trees.push(DecisionTree { nodes });
            }
            params.validate()?;
            if trees.len() != params.n_trees {
                return Err(r.bad("tree count disagrees with parameters"));
            }
            ForestModel::Random(RandomForest::from_parts(trees, params))
        }
        2 => {
            let params = MfParams {
                n_trees: r.usize()?,
                lifetime: r.f64()?,
                min_samples_leaf: r.usize()?,
                smoothing_alpha: r.f64()?,
                seed: r.u64()?,
            };
            let extensions = r.u64()?;
            let n_trees = r.len(16)?;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let root = r.usize()?;
                let n_nodes = r.len(73)?;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    let split_time = r.f64()?;
                    let lower = r.features()?;
                    let upper = r.features()?;
                    let counts = [r.u64()?, r.u64()?];
                    let kind = match r.u8()? {
                        0 => {
                            let n = r.len(25)?;
                            let mut points = Vec::with_capacity(n);
                            for _ in 0..n {
                                points.push((r.features()?, r.u8()? != 0));
                            }
                            MondrianKind::Leaf { points }
                        }
                        1 => MondrianKind::Split {
                            dim: r.u8()? as usize,
                            loc: r.f64()?,
                            left: r.usize()?,
                            right: r.usize()?,
                        },
                        t => return Err(r.bad(format!("unknown Mondrian node tag {t}"))),
                    };
                    nodes.push(MondrianNode { split_time, lower, upper, counts, kind });
                }
                trees.push(MondrianTree::from_nodes(nodes, root)?);
            }
            ForestModel::Mondrian(MondrianForest::from_parts(trees, params, extensions)?)
        }
        k => return Err(r.bad(format!("unknown model kind {k}"))),
    };
    if r.pos != buf.len() {
        return Err(r.bad("trailing bytes after model"));
    }
    Ok(model)
}

fn check_rf_tree(nodes: &[TreeNode]) -> std::result::Result<(), String> {
    if nodes.is_empty() {
        return Err("tree without nodes".into());
    }
    for (i, n) in nodes.iter().enumerate() {
        match n {
            TreeNode::Split { feature, left, right, .. } => {
                if *feature >= NUM_FEATURES || *left <= i || *right <= i || *left >= nodes.len() || *right >= nodes.len() {
                    return Err(format!("node {i} has invalid links"));
                }
            }
            TreeNode::Leaf { counts } => {
                if counts[0] + counts[1] == 0 {
                    return Err(format!("leaf {i} is empty"));
                }
            }
        }
    }
    Ok(())
}
