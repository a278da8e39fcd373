//! Protocol trees.
//!
//! Two shapes of protocol are modelled. An [`XTree`] is a deterministic
//! tree whose internal nodes read single bits `X_{i,j}` (bit `j` of block
//! `i`) of the composed input. A [`PolarisedTree`] is a randomised tree
//! over the outer input `Z` whose internal nodes are randomised forks,
//! Z-nodes and Z-mixers; it runs with a per-index memory `w` recording
//! values already learned by queries.
//!
//! Node storage is arena-based with explicit ids. Polarised trees allow
//! shared children (a rooted DAG) so that malformed structures can be
//! expressed and rejected by the checkers; the transformer only ever
//! emits strict trees.

use crate::rational::{is_probability, one, Rat};
use crate::{Error, Result};
use num_traits::Zero;

use crate::problems::Bitstring;

pub type NodeId = usize;

/// Node of a deterministic bit-query tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum XNode {
    Leaf {
        answer: String,
    },
    /// Reads bit `bit` of block `block`; children indexed by the value read.
    Query {
        block: usize,
        bit: usize,
        children: [NodeId; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XTree {
    nodes: Vec<XNode>,
    root: NodeId,
}

impl XTree {
    pub fn new(nodes: Vec<XNode>, root: NodeId) -> Result<Self> {
        let tree = XTree { nodes, root };
        tree.validate()?;
        Ok(tree)
    }

    pub fn leaf(answer: &str) -> Self {
        XTree {
            nodes: vec![XNode::Leaf {
                answer: answer.to_string(),
            }],
            root: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.root >= self.nodes.len() {
            return Err(Error::BadNodeId(self.root));
        }
        // Strict tree: every node except the root has exactly one parent,
        // and everything is reachable from the root.
        let mut indegree = vec![0usize; self.nodes.len()];
        for node in &self.nodes {
            if let XNode::Query { children, .. } = node {
                for &c in children {
                    if c >= self.nodes.len() {
                        return Err(Error::BadNodeId(c));
                    }
                    indegree[c] += 1;
                }
            }
        }
        if indegree[self.root] != 0 {
            return Err(Error::CyclicTree);
        }
        for (id, &d) in indegree.iter().enumerate() {
            if id != self.root && d != 1 {
                return Err(Error::CyclicTree);
            }
        }
        // One parent each plus a parentless root rules out cycles as long
        // as the node count is finite, which it is.
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &XNode {
        &self.nodes[id]
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[XNode] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        0..self.nodes.len()
    }

    /// Checks query indices against the instance dimensions.
    pub fn check_dimensions(&self, n: usize, m: usize) -> Result<()> {
        for node in &self.nodes {
            if let XNode::Query { block, bit, .. } = node {
                if *block >= n {
                    return Err(Error::IndexOutOfRange {
                        index: *block,
                        limit: n,
                    });
                }
                if *bit >= m {
                    return Err(Error::IndexOutOfRange {
                        index: *bit,
                        limit: m,
                    });
                }
            }
        }
        Ok(())
    }

    /// Deterministic walk on a fixed input; returns the leaf id, the
    /// visited vertices and the number of queries made to each block.
    pub fn walk(&self, x: &Bitstring, n: usize, m: usize) -> XWalk {
        let mut id = self.root;
        let mut vertices = vec![id];
        let mut per_block = vec![0usize; n];
        loop {
            match &self.nodes[id] {
                XNode::Leaf { answer } => {
                    return XWalk {
                        leaf: id,
                        answer: answer.clone(),
                        vertices,
                        per_block,
                    }
                }
                XNode::Query {
                    block,
                    bit,
                    children,
                } => {
                    per_block[*block] += 1;
                    let v = x.get(*block * m + *bit);
                    id = children[v as usize];
                    vertices.push(id);
                }
            }
        }
    }

    /// Ids in root-first order (every parent before its children).
    pub fn topo_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let XNode::Query { children, .. } = &self.nodes[id] {
                stack.push(children[1]);
                stack.push(children[0]);
            }
        }
        order
    }

    /// The (block, bit) constraints fixed on the path to `target`,
    /// together with the edge sequence taken.
    pub fn path_to(&self, target: NodeId) -> Option<XPath> {
        fn dfs(tree: &XTree, id: NodeId, target: NodeId, acc: &mut Vec<(NodeId, bool)>) -> bool {
            if id == target {
                return true;
            }
            if let XNode::Query { children, .. } = tree.node(id) {
                for v in [false, true] {
                    acc.push((id, v));
                    if dfs(tree, children[v as usize], target, acc) {
                        return true;
                    }
                    acc.pop();
                }
            }
            false
        }
        let mut steps = Vec::new();
        if dfs(self, self.root, target, &mut steps) {
            Some(XPath { steps })
        } else {
            None
        }
    }
}

/// Result of a deterministic walk.
#[derive(Clone, Debug)]
pub struct XWalk {
    pub leaf: NodeId,
    pub answer: String,
    pub vertices: Vec<NodeId>,
    pub per_block: Vec<usize>,
}

impl XWalk {
    pub fn total_queries(&self) -> usize {
        self.per_block.iter().sum()
    }
}

/// Root path in an `XTree`: the query nodes traversed and the edge taken
/// at each.
#[derive(Clone, Debug, Default)]
pub struct XPath {
    pub steps: Vec<(NodeId, bool)>,
}

impl XPath {
    /// Does `x` satisfy every bit constraint on this path?
    pub fn admits(&self, tree: &XTree, x: &Bitstring, m: usize) -> bool {
        self.steps.iter().all(|(id, v)| match tree.node(*id) {
            XNode::Query { block, bit, .. } => x.get(*block * m + *bit) == *v,
            XNode::Leaf { .. } => unreachable!("leaf on interior of path"),
        })
    }
}

/// Per-index memory of a polarised protocol: the value of each `Z_i`
/// already learned by a query, or unknown.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WState(Vec<Option<bool>>);

impl WState {
    pub fn fresh(n: usize) -> Self {
        WState(vec![None; n])
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.0[i]
    }

    pub fn set(&self, i: usize, v: bool) -> Self {
        let mut next = self.clone();
        next.0[i] = Some(v);
        next
    }

    pub fn known_count(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }
}

/// Node of a polarised tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PNode {
    Leaf {
        answer: String,
    },
    /// Randomised fork: left child with probability `alpha`.
    Fork {
        alpha: Rat,
        children: [NodeId; 2],
    },
    /// Z-node `(index, alpha, beta)`: with `w` unknown, queries `Z_index`
    /// with probability `alpha` (updating `w`) and otherwise simulates an
    /// answer that is 1 with probability `beta`; with `w` known, follows
    /// the known value. Children indexed by the answer.
    ZNode {
        index: usize,
        alpha: Rat,
        beta: Rat,
        children: [NodeId; 2],
    },
    /// Z-mixer `(index, alpha, beta)`: never queries; answers 1 with
    /// probability `beta` when `w` is unknown and `alpha` when known.
    ZMixer {
        index: usize,
        alpha: Rat,
        beta: Rat,
        children: [NodeId; 2],
    },
}

impl PNode {
    pub fn children(&self) -> Option<&[NodeId; 2]> {
        match self {
            PNode::Leaf { .. } => None,
            PNode::Fork { children, .. }
            | PNode::ZNode { children, .. }
            | PNode::ZMixer { children, .. } => Some(children),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolarisedTree {
    nodes: Vec<PNode>,
    root: NodeId,
}

impl PolarisedTree {
    pub fn new(nodes: Vec<PNode>, root: NodeId) -> Result<Self> {
        let tree = PolarisedTree { nodes, root };
        tree.validate()?;
        Ok(tree)
    }

    pub fn leaf(answer: &str) -> Self {
        PolarisedTree {
            nodes: vec![PNode::Leaf {
                answer: answer.to_string(),
            }],
            root: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.root >= self.nodes.len() {
            return Err(Error::BadNodeId(self.root));
        }
        for node in &self.nodes {
            if let Some(children) = node.children() {
                for &c in children {
                    if c >= self.nodes.len() {
                        return Err(Error::BadNodeId(c));
                    }
                }
            }
            match node {
                PNode::Fork { alpha, .. } => {
                    if !is_probability(alpha) {
                        return Err(Error::ParameterRange(format!("fork alpha {alpha}")));
                    }
                }
                PNode::ZNode { alpha, beta, .. } | PNode::ZMixer { alpha, beta, .. } => {
                    if !is_probability(alpha) || !is_probability(beta) {
                        return Err(Error::ParameterRange(format!(
                            "node parameters {alpha}, {beta}"
                        )));
                    }
                }
                PNode::Leaf { .. } => {}
            }
        }
        self.topo_order()?;
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &PNode {
        &self.nodes[id]
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[PNode] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        0..self.nodes.len()
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.node_ids()
            .filter(|id| matches!(self.nodes[*id], PNode::Leaf { .. }))
            .collect()
    }

    /// Largest index mentioned by any node, plus one.
    pub fn index_span(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                PNode::ZNode { index, .. } | PNode::ZMixer { index, .. } => Some(*index + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn check_index_span(&self, n: usize) -> Result<()> {
        let span = self.index_span();
        if span > n {
            return Err(Error::IndexOutOfRange {
                index: span - 1,
                limit: n,
            });
        }
        Ok(())
    }

    /// Kahn order over the reachable DAG; detects cycles.
    pub fn topo_order(&self) -> Result<Vec<NodeId>> {
        let len = self.nodes.len();
        let mut reachable = vec![false; len];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if reachable[id] {
                continue;
            }
            reachable[id] = true;
            if let Some(children) = self.nodes[id].children() {
                stack.extend_from_slice(children);
            }
        }
        let mut indegree = vec![0usize; len];
        for (id, node) in self.nodes.iter().enumerate() {
            if !reachable[id] {
                continue;
            }
            if let Some(children) = node.children() {
                for &c in children {
                    indegree[c] += 1;
                }
            }
        }
        let mut order = Vec::new();
        let mut ready: Vec<NodeId> = (0..len)
            .filter(|id| reachable[*id] && indegree[*id] == 0)
            .collect();
        while let Some(id) = ready.pop() {
            order.push(id);
            if let Some(children) = self.nodes[id].children() {
                for &c in children {
                    indegree[c] -= 1;
                    if indegree[c] == 0 {
                        ready.push(c);
                    }
                }
            }
        }
        if order.len() != reachable.iter().filter(|r| **r).count() {
            return Err(Error::CyclicTree);
        }
        Ok(order)
    }
}

/// One step of a computational path: the node visited, the branch taken
/// and whether a query happened at this node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathStep {
    pub node: NodeId,
    pub branch: bool,
    pub queried: bool,
}

/// Root-to-leaf trace of a polarised tree on a fixed input, including the
/// internal randomised decisions; carries its exact probability weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputationalPath {
    pub steps: Vec<PathStep>,
    pub leaf: NodeId,
    pub weight: Rat,
    pub final_state: WState,
}

impl ComputationalPath {
    pub fn queried(&self, i: usize) -> bool {
        self.final_state.get(i).is_some()
    }

    pub fn query_count(&self) -> usize {
        self.steps.iter().filter(|s| s.queried).count()
    }
}

/// Exhaustive list of positive-weight computational paths of the tree on
/// input `z`. `n` is the outer input length (the memory width).
pub fn enumerate_paths(tree: &PolarisedTree, z: &Bitstring) -> Result<Vec<ComputationalPath>> {
    tree.topo_order()?; // rejects cycles before we recurse
    tree.check_index_span(z.len())?;
    let mut out = Vec::new();
    let mut steps = Vec::new();
    descend(
        tree,
        z,
        tree.root(),
        WState::fresh(z.len()),
        one(),
        &mut steps,
        &mut out,
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    tree: &PolarisedTree,
    z: &Bitstring,
    id: NodeId,
    w: WState,
    weight: Rat,
    steps: &mut Vec<PathStep>,
    out: &mut Vec<ComputationalPath>,
) {
    debug_assert!(!weight.is_zero());
    match tree.node(id) {
        PNode::Leaf { .. } => out.push(ComputationalPath {
            steps: steps.clone(),
            leaf: id,
            weight,
            final_state: w,
        }),
        PNode::Fork { alpha, children } => {
            for (branch, p) in [(false, alpha.clone()), (true, one() - alpha)] {
                if p.is_zero() {
                    continue;
                }
                steps.push(PathStep {
                    node: id,
                    branch,
                    queried: false,
                });
                descend(
                    tree,
                    z,
                    children[branch as usize],
                    w.clone(),
                    &weight * &p,
                    steps,
                    out,
                );
                steps.pop();
            }
        }
        PNode::ZNode {
            index,
            alpha,
            beta,
            children,
        } => match w.get(*index) {
            Some(v) => {
                steps.push(PathStep {
                    node: id,
                    branch: v,
                    queried: false,
                });
                descend(tree, z, children[v as usize], w, weight, steps, out);
                steps.pop();
            }
            None => {
                // Query: probability alpha, branch by the true value.
                if !alpha.is_zero() {
                    let v = z.get(*index);
                    steps.push(PathStep {
                        node: id,
                        branch: v,
                        queried: true,
                    });
                    descend(
                        tree,
                        z,
                        children[v as usize],
                        w.set(*index, v),
                        &weight * alpha,
                        steps,
                        out,
                    );
                    steps.pop();
                }
                // No query: simulate an answer with bias beta.
                let no_query = one() - alpha;
                if !no_query.is_zero() {
                    for (branch, p) in [(false, one() - beta), (true, beta.clone())] {
                        let q = &no_query * &p;
                        if q.is_zero() {
                            continue;
                        }
                        steps.push(PathStep {
                            node: id,
                            branch,
                            queried: false,
                        });
                        descend(
                            tree,
                            z,
                            children[branch as usize],
                            w.clone(),
                            &weight * &q,
                            steps,
                            out,
                        );
                        steps.pop();
                    }
                }
            }
        },
        PNode::ZMixer {
            index,
            alpha,
            beta,
            children,
        } => {
            let bias = if w.get(*index).is_some() { alpha } else { beta };
            for (branch, p) in [(false, one() - bias), (true, bias.clone())] {
                if p.is_zero() {
                    continue;
                }
                steps.push(PathStep {
                    node: id,
                    branch,
                    queried: false,
                });
                descend(
                    tree,
                    z,
                    children[branch as usize],
                    w.clone(),
                    &weight * &p,
                    steps,
                    out,
                );
                steps.pop();
            }
        }
    }
}

/// Leaf answer label, or an error for trees evaluated answer-wise.
pub fn leaf_answer(tree: &PolarisedTree, id: NodeId) -> Result<&str> {
    match tree.node(id) {
        PNode::Leaf { answer } if !answer.is_empty() => Ok(answer),
        PNode::Leaf { .. } => Err(Error::UnlabeledLeaf),
        _ => Err(Error::Internal(format!("node {id} is not a leaf"))),
    }
}

/// Builder used by the transformer and the tests.
#[derive(Default)]
pub struct PTreeBuilder {
    nodes: Vec<PNode>,
}

impl PTreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, node: PNode) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut PNode {
        &mut self.nodes[id]
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn finish(self, root: NodeId) -> Result<PolarisedTree> {
        PolarisedTree::new(self.nodes, root)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rational::{half, rat, zero};

    fn z(s: &str) -> Bitstring {
        Bitstring::parse(s).unwrap()
    }

    pub(crate) fn znode_tree(alpha: Rat, beta: Rat) -> PolarisedTree {
        PolarisedTree::new(
            vec![
                PNode::Leaf {
                    answer: "0".into(),
                },
                PNode::Leaf {
                    answer: "1".into(),
                },
                PNode::ZNode {
                    index: 0,
                    alpha,
                    beta,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn single_leaf_has_one_path() {
        let tree = PolarisedTree::leaf("0");
        let paths = enumerate_paths(&tree, &z("1")).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].weight, one());
        assert_eq!(paths[0].query_count(), 0);
    }

    #[test]
    fn forced_query_znode() {
        let tree = znode_tree(one(), zero());
        let paths = enumerate_paths(&tree, &z("1")).unwrap();
        assert_eq!(paths.len(), 1);
        let p = &paths[0];
        assert_eq!(p.weight, one());
        assert_eq!(p.query_count(), 1);
        assert!(p.steps[0].branch);
        assert_eq!(p.leaf, 1);
    }

    #[test]
    fn mixer_never_queries() {
        let tree = PolarisedTree::new(
            vec![
                PNode::Leaf {
                    answer: "0".into(),
                },
                PNode::Leaf {
                    answer: "1".into(),
                },
                PNode::ZMixer {
                    index: 0,
                    alpha: half(),
                    beta: half(),
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        for input in ["0", "1"] {
            let paths = enumerate_paths(&tree, &z(input)).unwrap();
            assert_eq!(paths.len(), 2);
            for p in &paths {
                assert_eq!(p.weight, half());
                assert_eq!(p.query_count(), 0);
            }
        }
    }

    #[test]
    fn weights_sum_to_one_and_queries_unique() {
        // ZNode chained under a fork, with a second index in the mix.
        let tree = PolarisedTree::new(
            vec![
                PNode::Leaf {
                    answer: "0".into(),
                }, // 0
                PNode::Leaf {
                    answer: "1".into(),
                }, // 1
                PNode::ZNode {
                    index: 0,
                    alpha: rat(1, 3),
                    beta: rat(1, 4),
                    children: [0, 1],
                }, // 2
                PNode::ZNode {
                    index: 0,
                    alpha: half(),
                    beta: half(),
                    children: [2, 2],
                }, // 3
                PNode::ZMixer {
                    index: 1,
                    alpha: rat(2, 5),
                    beta: rat(3, 5),
                    children: [3, 3],
                }, // 4
                PNode::Fork {
                    alpha: rat(1, 7),
                    children: [4, 2],
                }, // 5
            ],
            5,
        )
        .unwrap();
        for input in ["00", "01", "10", "11"] {
            let paths = enumerate_paths(&tree, &z(input)).unwrap();
            let total: Rat = paths.iter().map(|p| p.weight.clone()).sum();
            assert_eq!(total, one());
            for p in &paths {
                assert!(p.query_count() <= p.final_state.known_count());
                // No index queried twice: every query sets w, and a set w
                // never allows another query.
                assert!(p.query_count() <= 2);
            }
        }
    }

    #[test]
    fn cyclic_structure_rejected() {
        let nodes = vec![PNode::ZMixer {
            index: 0,
            alpha: half(),
            beta: half(),
            children: [0, 0],
        }];
        assert!(matches!(
            PolarisedTree::new(nodes, 0),
            Err(Error::CyclicTree)
        ));
    }

    #[test]
    fn out_of_range_index_rejected() {
        let tree = znode_tree(half(), half());
        assert!(matches!(
            enumerate_paths(&tree, &z("1")).map(|_| ())
                .and_then(|_| tree.check_index_span(0)),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn xtree_walk_counts_queries() {
        // Query X_{0,0}, then on value 1 query X_{1,0}.
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "a".into() }, // 0
                XNode::Leaf { answer: "b".into() }, // 1
                XNode::Leaf { answer: "c".into() }, // 2
                XNode::Query {
                    block: 1,
                    bit: 0,
                    children: [1, 2],
                }, // 3
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 3],
                }, // 4
            ],
            4,
        )
        .unwrap();
        let walk = tree.walk(&z("11"), 2, 1);
        assert_eq!(walk.answer, "c");
        assert_eq!(walk.per_block, vec![1, 1]);
        let walk = tree.walk(&z("01"), 2, 1);
        assert_eq!(walk.answer, "a");
        assert_eq!(walk.per_block, vec![1, 0]);

        let path = tree.path_to(1).unwrap();
        assert_eq!(path.steps, vec![(4, true), (3, false)]);
        assert!(path.admits(&tree, &z("10"), 1));
        assert!(!path.admits(&tree, &z("11"), 1));
    }

    #[test]
    fn xtree_sharing_rejected() {
        let nodes = vec![
            XNode::Leaf { answer: "a".into() },
            XNode::Query {
                block: 0,
                bit: 0,
                children: [0, 0],
            },
        ];
        assert!(matches!(XTree::new(nodes, 1), Err(Error::CyclicTree)));
    }
}
