//! Finite filtrations as rooted event trees.
//!
//! The nodes at depth `t` are the atoms of the time-`t` information field.
//! Nodes live in an arena in input order; that order (and the order of each
//! node's children) drives every deterministic tie-break in the crate.

use std::collections::HashMap;
use std::fmt;
use std::ops::Index;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{one, Rational};

/// Index of a node in its [`EventTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("more than one root node ({0:?} and {1:?})")]
    MultipleRoots(String, String),
    #[error("root node {0:?} must be at time 0")]
    RootNotAtZero(String),
    #[error("node {node:?} refers to unknown parent {parent:?}")]
    OrphanNode { node: String, parent: String },
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("node {node:?} at time {time} has parent at time {parent_time}")]
    TimeSkip {
        node: String,
        time: usize,
        parent_time: usize,
    },
    #[error("node {node:?} at time {time} lies beyond the horizon {horizon}")]
    BeyondHorizon {
        node: String,
        time: usize,
        horizon: usize,
    },
    #[error("branch ends at {node:?} (time {time}) before the horizon {horizon}")]
    ShortBranch {
        node: String,
        time: usize,
        horizon: usize,
    },
    #[error("time {time} outside 0..={horizon}")]
    TimeOutOfRange { time: usize, horizon: usize },
    #[error("node {0} is terminal")]
    TerminalNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("subtree below {node} has depth {depth}, above the limit {limit}")]
    SubtreeTooLarge {
        node: NodeId,
        depth: usize,
        limit: usize,
    },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("measure family has no valid row at node {0}")]
    FamilyIncomplete(NodeId),
    #[error("row at node {0} is not a probability vector")]
    InvalidRow(NodeId),
}

/// One node of the input description handed to [`EventTree::build`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: String,
    pub time: usize,
    pub parent: Option<String>,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, time: usize, parent: Option<&str>) -> Self {
        Self {
            id: id.into(),
            time,
            parent: parent.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    label: String,
    time: usize,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
}

/// A validated event tree: one root at time 0, every non-terminal node has
/// children exactly one period later, every branch reaches the horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTree {
    horizon: usize,
    nodes: Vec<Node>,
    index: HashMap<String, NodeId>,
    layers: Vec<Vec<NodeId>>,
}

impl EventTree {
    pub fn build(horizon: usize, specs: &[NodeSpec]) -> Result<Self, TreeError> {
        if specs.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut index = HashMap::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if index.insert(spec.id.clone(), NodeId(i)).is_some() {
                return Err(TreeError::DuplicateId(spec.id.clone()));
            }
        }

        let mut nodes: Vec<Node> = specs
            .iter()
            .map(|s| Node {
                label: s.id.clone(),
                time: s.time,
                parent: None,
                children: Vec::new(),
            })
            .collect();

        let mut root: Option<usize> = None;
        for (i, spec) in specs.iter().enumerate() {
            if spec.time > horizon {
                return Err(TreeError::BeyondHorizon {
                    node: spec.id.clone(),
                    time: spec.time,
                    horizon,
                });
            }
            match &spec.parent {
                None => {
                    if let Some(r) = root {
                        return Err(TreeError::MultipleRoots(
                            specs[r].id.clone(),
                            spec.id.clone(),
                        ));
                    }
                    if spec.time != 0 {
                        return Err(TreeError::RootNotAtZero(spec.id.clone()));
                    }
                    root = Some(i);
                }
                Some(p) => {
                    let parent = *index.get(p).ok_or_else(|| TreeError::OrphanNode {
                        node: spec.id.clone(),
                        parent: p.clone(),
                    })?;
                    let parent_time = specs[parent.0].time;
                    if spec.time != parent_time + 1 {
                        return Err(TreeError::TimeSkip {
                            node: spec.id.clone(),
                            time: spec.time,
                            parent_time,
                        });
                    }
                    nodes[i].parent = Some(parent);
                    nodes[parent.0].children.push(NodeId(i));
                }
            }
        }
        // Every non-root node has a parent one period earlier, so parent
        // chains strictly decrease in time and end at the unique time-0 node.
        if root.is_none() {
            return Err(TreeError::Empty);
        }
        if root != Some(0) {
            // Keep the root first so that NodeId(0) is always the root.
            return Self::build(horizon, &reorder_root_first(specs, root.unwrap()));
        }

        for node in &nodes {
            if node.children.is_empty() && node.time < horizon {
                return Err(TreeError::ShortBranch {
                    node: node.label.clone(),
                    time: node.time,
                    horizon,
                });
            }
        }

        let mut layers = vec![Vec::new(); horizon + 1];
        for (i, node) in nodes.iter().enumerate() {
            layers[node.time].push(NodeId(i));
        }

        Ok(Self {
            horizon,
            nodes,
            index,
            layers,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    /// All node ids in arena (input) order.
    pub fn node_ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.nodes.len()
    }

    pub fn check(&self, node: NodeId) -> Result<(), TreeError> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(TreeError::UnknownNode(node))
        }
    }

    pub fn time(&self, node: NodeId) -> usize {
        self.nodes[node.0].time
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node.0].label
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes[node.0].parent
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.nodes[node.0].children
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.nodes[node.0].children.is_empty()
    }

    pub fn lookup(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    /// The atoms of the time-`t` field, in insertion order.
    pub fn atoms_at(&self, t: usize) -> Result<&[NodeId], TreeError> {
        self.layers
            .get(t)
            .map(Vec::as_slice)
            .ok_or(TreeError::TimeOutOfRange {
                time: t,
                horizon: self.horizon,
            })
    }

    pub fn terminals(&self) -> &[NodeId] {
        &self.layers[self.horizon]
    }

    /// Successors of a non-terminal node.
    pub fn succ(&self, node: NodeId) -> Result<&[NodeId], TreeError> {
        self.check(node)?;
        if self.is_terminal(node) {
            return Err(TreeError::TerminalNode(node));
        }
        Ok(self.children(node))
    }

    /// Nodes from the root down to `node`, inclusive.
    pub fn path(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// True when `ancestor` lies on the path from the root to `node`.
    pub fn is_ancestor_or_self(&self, ancestor: NodeId, node: NodeId) -> bool {
        let target = self.time(ancestor);
        let mut cur = node;
        while self.time(cur) > target {
            match self.parent(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
        cur == ancestor
    }

    /// Pre-order listing of the subtree rooted at `node`.
    pub fn subtree(&self, node: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children(n).iter().rev());
        }
        out
    }

    pub fn terminals_under(&self, node: NodeId) -> Vec<NodeId> {
        self.subtree(node)
            .into_iter()
            .filter(|&n| self.is_terminal(n))
            .collect()
    }

    /// Node specs reproducing this tree.
    pub fn specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.label.clone(),
                time: n.time,
                parent: n.parent.map(|p| self.nodes[p.0].label.clone()),
            })
            .collect()
    }
}

fn reorder_root_first(specs: &[NodeSpec], root: usize) -> Vec<NodeSpec> {
    let mut out = Vec::with_capacity(specs.len());
    out.push(specs[root].clone());
    out.extend(
        specs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != root)
            .map(|(_, s)| s.clone()),
    );
    out
}

/// A value at every node of a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptedProcess(Vec<Rational>);

impl AdaptedProcess {
    pub fn new(tree: &EventTree, values: Vec<Rational>) -> Result<Self, TreeError> {
        if values.len() != tree.len() {
            return Err(TreeError::LengthMismatch {
                expected: tree.len(),
                got: values.len(),
            });
        }
        Ok(Self(values))
    }

    pub fn from_fn(tree: &EventTree, f: impl FnMut(NodeId) -> Rational) -> Self {
        Self(tree.node_ids().map(f).collect())
    }

    pub fn constant(tree: &EventTree, value: Rational) -> Self {
        Self(vec![value; tree.len()])
    }

    pub fn values(&self) -> &[Rational] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&Rational> {
        self.0.get(node.0)
    }

    pub fn map(&self, f: impl Fn(&Rational) -> Rational) -> Self {
        Self(self.0.iter().map(f).collect())
    }
}

impl Index<NodeId> for AdaptedProcess {
    type Output = Rational;

    fn index(&self, node: NodeId) -> &Rational {
        &self.0[node.0]
    }
}

/// A stopping time represented by its exercise nodes (an antichain).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StoppingTime {
    cut: Vec<NodeId>,
}

impl StoppingTime {
    /// The cut is stored sorted by node id.
    pub fn new(mut cut: Vec<NodeId>) -> Self {
        cut.sort_unstable();
        cut.dedup();
        Self { cut }
    }

    pub fn cut(&self) -> &[NodeId] {
        &self.cut
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.cut.binary_search(&node).is_ok()
    }

    /// Cut nodes lying in the subtree of `node`.
    pub fn restrict(&self, tree: &EventTree, node: NodeId) -> StoppingTime {
        StoppingTime {
            cut: self
                .cut
                .iter()
                .copied()
                .filter(|&n| tree.is_ancestor_or_self(node, n))
                .collect(),
        }
    }

    /// The exercise node on the branch leading to terminal `leaf`.
    pub fn exercise_node(&self, tree: &EventTree, leaf: NodeId) -> Option<NodeId> {
        tree.path(leaf).into_iter().find(|n| self.contains(*n))
    }
}

/// True iff `cut` is a stopping time of the subtree at `node`, strictly
/// after time `after`: every cut node lies in the subtree at a time beyond
/// `after`, and every terminal below `node` has exactly one ancestor-or-self
/// in the cut.
pub fn is_stopping_time(tree: &EventTree, cut: &[NodeId], after: usize, node: NodeId) -> bool {
    if !tree.contains(node) || cut.iter().any(|&n| !tree.contains(n)) {
        return false;
    }
    if !cut
        .iter()
        .all(|&n| tree.time(n) > after && tree.is_ancestor_or_self(node, n))
    {
        return false;
    }
    tree.terminals_under(node).into_iter().all(|leaf| {
        let hits = tree.path(leaf).iter().filter(|p| cut.contains(p)).count();
        hits == 1
    })
}

/// Default limit on subtree depth for [`enumerate_stopping_times`].
pub const DEFAULT_MAX_STOP_DEPTH: usize = 4;

/// Every stopping time of the subtree at `node` strictly after `after`,
/// in a deterministic order. `after` is normally `time(node)`; passing a
/// smaller value admits `{node}` itself.
pub fn enumerate_stopping_times(
    tree: &EventTree,
    after: usize,
    node: NodeId,
    max_depth: usize,
) -> Result<Vec<StoppingTime>, TreeError> {
    tree.check(node)?;
    let depth = tree.horizon() - tree.time(node);
    if depth > max_depth {
        return Err(TreeError::SubtreeTooLarge {
            node,
            depth,
            limit: max_depth,
        });
    }
    Ok(cuts_below(tree, after, node)
        .into_iter()
        .map(StoppingTime::new)
        .collect())
}

fn cuts_below(tree: &EventTree, after: usize, node: NodeId) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    if tree.time(node) > after {
        out.push(vec![node]);
    }
    if tree.is_terminal(node) {
        return out;
    }
    // Cartesian product of the children's covers.
    let mut partial: Vec<Vec<NodeId>> = vec![Vec::new()];
    for &child in tree.children(node) {
        let options = cuts_below(tree, after, child);
        if options.is_empty() {
            return out;
        }
        partial = partial
            .iter()
            .flat_map(|prefix| {
                options.iter().map(move |opt| {
                    let mut v = prefix.clone();
                    v.extend_from_slice(opt);
                    v
                })
            })
            .collect();
    }
    out.extend(partial);
    out
}

/// One probability row per non-terminal node, aligned with the node's
/// children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleStepMeasureFamily {
    rows: Vec<Vec<Rational>>,
}

impl SingleStepMeasureFamily {
    /// Builds and validates a family; `rows[n]` must be empty for terminal
    /// nodes.
    pub fn new(tree: &EventTree, rows: Vec<Vec<Rational>>) -> Result<Self, TreeError> {
        let family = Self { rows };
        family.validate(tree)?;
        Ok(family)
    }

    /// Wraps rows without validation (for externally supplied certificates
    /// that are checked later).
    pub fn from_rows_unchecked(rows: Vec<Vec<Rational>>) -> Self {
        Self { rows }
    }

    /// Family putting all weight on the first child of every node.
    pub fn degenerate_first(tree: &EventTree) -> Self {
        Self {
            rows: tree
                .node_ids()
                .map(|n| {
                    let k = tree.children(n).len();
                    (0..k)
                        .map(|i| if i == 0 { one() } else { Rational::zero() })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }

    /// Row at a node (empty for terminal nodes or missing rows).
    pub fn row(&self, node: NodeId) -> &[Rational] {
        self.rows.get(node.0).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn weight(&self, node: NodeId, child_index: usize) -> Option<&Rational> {
        self.rows.get(node.0).and_then(|r| r.get(child_index))
    }

    pub fn validate(&self, tree: &EventTree) -> Result<(), TreeError> {
        if self.rows.len() != tree.len() {
            return Err(TreeError::LengthMismatch {
                expected: tree.len(),
                got: self.rows.len(),
            });
        }
        for n in tree.node_ids() {
            let row = &self.rows[n.0];
            if row.len() != tree.children(n).len() {
                return Err(TreeError::FamilyIncomplete(n));
            }
            if !row.is_empty() && !is_probability_vector(row) {
                return Err(TreeError::InvalidRow(n));
            }
        }
        Ok(())
    }
}

pub fn is_probability_vector(row: &[Rational]) -> bool {
    !row.is_empty() && row.iter().all(|w| !w.is_negative()) && row.iter().sum::<Rational>().is_one()
}

/// Terminal-node probabilities obtained by multiplying row weights along
/// each root-to-leaf path.
pub fn product_measure(
    tree: &EventTree,
    family: &SingleStepMeasureFamily,
) -> Result<Vec<(NodeId, Rational)>, TreeError> {
    family.validate(tree)?;
    let mut mass = vec![Rational::zero(); tree.len()];
    mass[tree.root().0] = one();
    for t in 0..tree.horizon() {
        for &n in tree.atoms_at(t)? {
            for (i, &c) in tree.children(n).iter().enumerate() {
                mass[c.0] = &mass[n.0] * &family.rows[n.0][i];
            }
        }
    }
    Ok(tree
        .terminals()
        .iter()
        .map(|&leaf| (leaf, mass[leaf.0].clone()))
        .collect())
}

/// Probability mass of every node (not only terminals) under the product
/// measure.
pub fn node_masses(tree: &EventTree, family: &SingleStepMeasureFamily) -> Vec<Rational> {
    let mut mass = vec![Rational::zero(); tree.len()];
    mass[tree.root().0] = one();
    for n in tree.node_ids() {
        for (i, &c) in tree.children(n).iter().enumerate() {
            let w = family.weight(n, i).cloned().unwrap_or_else(Rational::zero);
            mass[c.0] = &mass[n.0] * w;
        }
    }
    mass
}
