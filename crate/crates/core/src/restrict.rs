//! Single-block restriction of a protocol and confidence trimming.
//!
//! Restricting pins every block except one to the bits of a fixed input
//! and relabels the leaves with that block's per-leaf predictor, giving
//! a deterministic tree that reads one block and guesses its value.
//! Trimming then replaces any vertex whose conditional confidence
//! exceeds 3/4 by a leaf, which caps the expected query count without
//! giving up more than half of the prediction advantage.

use crate::eval::XLeafStats;
use crate::problems::{Bitstring, Distribution, GVal, PromiseFunction};
use crate::rational::{one, zero, Rat};
use crate::trees::{NodeId, XNode, XTree};
use crate::{Error, Result};
use num_traits::Zero;

/// Deterministic decision tree over a single block, with Boolean leaves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockTree {
    Leaf(bool),
    Query {
        bit: usize,
        children: [Box<BlockTree>; 2],
    },
}

impl BlockTree {
    pub fn leaf(v: bool) -> Self {
        BlockTree::Leaf(v)
    }

    pub fn query(bit: usize, zero: BlockTree, one: BlockTree) -> Self {
        BlockTree::Query {
            bit,
            children: [Box::new(zero), Box::new(one)],
        }
    }

    /// Walks the tree on an input; returns the label and the query count.
    pub fn run(&self, y: &Bitstring) -> (bool, usize) {
        let mut node = self;
        let mut queries = 0;
        loop {
            match node {
                BlockTree::Leaf(v) => return (*v, queries),
                BlockTree::Query { bit, children } => {
                    queries += 1;
                    node = &children[y.get(*bit) as usize];
                }
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            BlockTree::Leaf(_) => 1,
            BlockTree::Query { children, .. } => 1 + children[0].size() + children[1].size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            BlockTree::Leaf(_) => 0,
            BlockTree::Query { children, .. } => {
                1 + children[0].depth().max(children[1].depth())
            }
        }
    }

    /// Probability of agreeing with the function under the distribution.
    pub fn accuracy(&self, g: &PromiseFunction, mu: &Distribution) -> Rat {
        mu.support()
            .iter()
            .filter(|(y, _)| GVal::from_bit(self.run(y).0) == g.eval(y))
            .map(|(_, w)| w.clone())
            .sum()
    }

    /// Expected number of queries under the distribution.
    pub fn expected_queries(&self, mu: &Distribution) -> Rat {
        mu.support()
            .iter()
            .map(|(y, w)| w * Rat::from_integer((self.run(y).1 as u64).into()))
            .sum()
    }
}

/// Restriction of a composed-problem tree to block `i0`: queries into
/// other blocks follow the bits of `x`; leaves take the block's
/// per-leaf predictor label from `stats`.
pub fn restrict_protocol(
    tree: &XTree,
    n: usize,
    m: usize,
    i0: usize,
    x: &Bitstring,
    stats: &XLeafStats,
) -> Result<BlockTree> {
    if x.len() != n * m {
        return Err(Error::LengthMismatch {
            expected: n * m,
            got: x.len(),
        });
    }
    if i0 >= n {
        return Err(Error::IndexOutOfRange {
            index: i0,
            limit: n,
        });
    }
    build(tree, tree.root(), m, i0, x, stats)
}

fn build(
    tree: &XTree,
    id: NodeId,
    m: usize,
    i0: usize,
    x: &Bitstring,
    stats: &XLeafStats,
) -> Result<BlockTree> {
    match tree.node(id) {
        XNode::Leaf { .. } => {
            let predictor = stats
                .per_leaf
                .get(&id)
                .ok_or_else(|| Error::Internal(format!("no predictor for leaf {id}")))?;
            Ok(BlockTree::Leaf(predictor[i0].label))
        }
        XNode::Query {
            block,
            bit,
            children,
        } => {
            if *block == i0 {
                Ok(BlockTree::query(
                    *bit,
                    build(tree, children[0], m, i0, x, stats)?,
                    build(tree, children[1], m, i0, x, stats)?,
                ))
            } else {
                let v = x.get(*block * m + *bit);
                build(tree, children[v as usize], m, i0, x, stats)
            }
        }
    }
}

/// Replaces every vertex whose conditional confidence in some value
/// strictly exceeds 3/4 by a leaf with that value, top-down. Exact ties
/// at 3/4 keep the vertex.
pub fn trim_protocol(tree: &BlockTree, g: &PromiseFunction, mu_g: &Distribution) -> BlockTree {
    let threshold = crate::rational::rat(3, 4);
    trim(tree, g, mu_g.support().to_vec(), &threshold)
}

fn trim(
    tree: &BlockTree,
    g: &PromiseFunction,
    cond: Vec<(Bitstring, Rat)>,
    threshold: &Rat,
) -> BlockTree {
    let mass: Rat = cond.iter().map(|(_, w)| w.clone()).sum();
    if !mass.is_zero() {
        let p_one: Rat = cond
            .iter()
            .filter(|(y, _)| g.eval(y) == GVal::One)
            .map(|(_, w)| w.clone())
            .sum::<Rat>()
            / &mass;
        if p_one > *threshold {
            return BlockTree::Leaf(true);
        }
        if one() - &p_one > *threshold {
            return BlockTree::Leaf(false);
        }
    }
    match tree {
        BlockTree::Leaf(v) => BlockTree::Leaf(*v),
        BlockTree::Query { bit, children } => {
            let (ones, zeros): (Vec<_>, Vec<_>) = cond.into_iter().partition(|(y, _)| y.get(*bit));
            BlockTree::query(
                *bit,
                trim(&children[0], g, zeros, threshold),
                trim(&children[1], g, ones, threshold),
            )
        }
    }
}

/// Whether the function is exactly unbiased under the distribution.
pub fn is_balanced(g: &PromiseFunction, mu_g: &Distribution) -> bool {
    mu_g.prob_where(|y| g.eval(y) == GVal::One) == crate::rational::half()
}

/// Per-leaf advantage of block `i0` aggregated over inputs agreeing with
/// `x` outside the block, under the lift `mu`.
pub fn delta_conditional(
    tree: &XTree,
    stats: &XLeafStats,
    n: usize,
    m: usize,
    i0: usize,
    x: &Bitstring,
    mu: &Distribution,
) -> Result<Rat> {
    let cond = mu.condition(|y| (0..n).all(|i| i == i0 || y.block(i, n, m) == x.block(i, n, m)))?;
    let mut total = zero();
    for (y, w) in cond.support() {
        let walk = tree.walk(y, n, m);
        total += w * &stats.per_leaf[&walk.leaf][i0].advantage;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::x_leaf_stats;
    use crate::problems::lift_distribution;
    use crate::rational::{half, rat, rat_int};

    fn bits(s: &str) -> Bitstring {
        Bitstring::parse(s).unwrap()
    }

    fn two_block_tree() -> XTree {
        // Root reads X_{0,0}; left subtree reads X_{1,0}, right reads
        // X_{0,1}: a mix of in-block and out-of-block queries.
        XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() }, // 0
                XNode::Leaf { answer: "1".into() }, // 1
                XNode::Leaf { answer: "0".into() }, // 2
                XNode::Leaf { answer: "1".into() }, // 3
                XNode::Query {
                    block: 1,
                    bit: 0,
                    children: [0, 1],
                }, // 4
                XNode::Query {
                    block: 0,
                    bit: 1,
                    children: [2, 3],
                }, // 5
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [4, 5],
                }, // 6
            ],
            6,
        )
        .unwrap()
    }

    fn or_gadget() -> PromiseFunction {
        PromiseFunction::from_fn(2, |x| GVal::from_bit(x.get(0) || x.get(1))).unwrap()
    }

    #[test]
    fn restriction_follows_fixed_bits() {
        let tree = two_block_tree();
        let g = or_gadget();
        let mu_g = Distribution::uniform(2);
        let stats = x_leaf_stats(&tree, &g, &mu_g, &Distribution::uniform(2)).unwrap();

        // Behavioural oracle: running the restriction on y must match
        // walking the full tree on x with block i0 replaced by y, both
        // in reached-leaf label and in block-i0 query count.
        for x in Bitstring::all(4) {
            for i0 in 0..2 {
                let restricted = restrict_protocol(&tree, 2, 2, i0, &x, &stats).unwrap();
                for y in Bitstring::all(2) {
                    let (label, queries) = restricted.run(&y);
                    let full = x.with_block(i0, 2, &y);
                    let walk = tree.walk(&full, 2, 2);
                    assert_eq!(label, stats.per_leaf[&walk.leaf][i0].label);
                    assert_eq!(queries, walk.per_block[i0]);
                }
            }
        }
    }

    #[test]
    fn restriction_of_single_block_tree_keeps_shape() {
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() },
                XNode::Leaf { answer: "1".into() },
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        let g = PromiseFunction::identity_1bit();
        let stats =
            x_leaf_stats(&tree, &g, &Distribution::uniform(1), &Distribution::uniform(1)).unwrap();
        let restricted = restrict_protocol(&tree, 1, 1, 0, &bits("0"), &stats).unwrap();
        assert_eq!(
            restricted,
            BlockTree::query(0, BlockTree::leaf(false), BlockTree::leaf(true))
        );
    }

    #[test]
    fn restriction_to_untouched_block_is_a_leaf() {
        // The tree reads only block 0; restricting to block 1 leaves a
        // straight-line tree with no queries.
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() },
                XNode::Leaf { answer: "1".into() },
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        let g = PromiseFunction::identity_1bit();
        let stats =
            x_leaf_stats(&tree, &g, &Distribution::uniform(1), &Distribution::uniform(2)).unwrap();
        let restricted = restrict_protocol(&tree, 2, 1, 1, &bits("10"), &stats).unwrap();
        assert!(matches!(restricted, BlockTree::Leaf(_)));
    }

    #[test]
    fn trimming_examples() {
        let g = or_gadget();
        // Confident distribution: value 1 has weight 4/5 > 3/4.
        let confident = Distribution::new(vec![
            (bits("00"), rat(1, 5)),
            (bits("01"), rat(2, 5)),
            (bits("11"), rat(2, 5)),
        ])
        .unwrap();
        let tree = BlockTree::query(0, BlockTree::leaf(false), BlockTree::leaf(true));
        assert_eq!(trim_protocol(&tree, &g, &confident), BlockTree::Leaf(true));

        // Balanced root is never trimmed (1/2 <= 3/4), and children that
        // reach certainty become leaves; on this tree that is idempotent.
        let ident = PromiseFunction::identity_1bit();
        let balanced = Distribution::uniform(1);
        let tree = BlockTree::query(0, BlockTree::leaf(false), BlockTree::leaf(true));
        assert_eq!(trim_protocol(&tree, &ident, &balanced), tree);

        // Exact tie at 3/4 keeps the vertex.
        let tie = Distribution::new(vec![(bits("00"), rat(1, 4)), (bits("11"), rat(3, 4))])
            .unwrap();
        let deep = BlockTree::query(0, BlockTree::leaf(false), BlockTree::leaf(true));
        let trimmed = trim_protocol(&deep, &g, &tie);
        assert!(matches!(trimmed, BlockTree::Query { .. }));
    }

    #[test]
    fn trimming_never_increases_queries() {
        let g = or_gadget();
        let tree = BlockTree::query(
            0,
            BlockTree::query(1, BlockTree::leaf(false), BlockTree::leaf(true)),
            BlockTree::query(1, BlockTree::leaf(true), BlockTree::leaf(true)),
        );
        for mu in [
            Distribution::uniform(2),
            Distribution::new(vec![
                (bits("00"), rat(1, 8)),
                (bits("01"), rat(3, 8)),
                (bits("10"), rat(1, 2)),
            ])
            .unwrap(),
        ] {
            let trimmed = trim_protocol(&tree, &g, &mu);
            assert!(trimmed.expected_queries(&mu) <= tree.expected_queries(&mu));
        }
    }

    #[test]
    fn accuracy_and_cost_inequalities_on_balanced_inner() {
        let tree = two_block_tree();
        let g = or_gadget();
        let mu_g = crate::problems::balanced_mixture(&Distribution::uniform(2), &g).unwrap();
        assert!(is_balanced(&g, &mu_g));
        let n = 2;
        let m = 2;
        let uniform_lift = lift_distribution(&Distribution::uniform(n), &mu_g, &g).unwrap();
        let stats = x_leaf_stats(&tree, &g, &mu_g, &Distribution::uniform(n)).unwrap();
        let f = crate::problems::Relation::new(
            2,
            vec!["0".into(), "1".into()],
            vec![
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
                std::collections::BTreeSet::from(["0".to_string()]),
            ],
        )
        .unwrap();

        for (x, _) in uniform_lift.support() {
            for i0 in 0..n {
                let delta_x = delta_conditional(&tree, &stats, n, m, i0, x, &uniform_lift).unwrap();
                let restricted = restrict_protocol(&tree, n, m, i0, x, &stats).unwrap();
                let acc = restricted.accuracy(&g, &mu_g);
                assert!(acc >= half() + &delta_x / rat_int(2));

                let trimmed = trim_protocol(&restricted, &g, &mu_g);
                let t_acc = trimmed.accuracy(&g, &mu_g);
                assert!(t_acc >= half() + &delta_x / rat_int(4));

                let d_ix =
                    crate::eval::x_block_cost_conditional(&tree, &f, &g, &uniform_lift, i0, x)
                        .unwrap();
                let t_cost = trimmed.expected_queries(&mu_g);
                assert!(t_cost <= rat_int(4) * d_ix);
            }
        }
    }
}
