//! Property tests: exact structural invariants over randomly generated
//! trees and distributions.

use proptest::prelude::*;
use qclab::eval::forward_pass;
use qclab::problems::{
    balanced_mixture, conditional_on_value, lift_distribution, Bitstring, Distribution, GVal,
    PromiseFunction,
};
use qclab::rational::{one, rat, Rat};
use qclab::trees::{enumerate_paths, PNode, PolarisedTree, XNode, XTree};

const N: usize = 2;

fn prob() -> impl Strategy<Value = Rat> {
    (0i64..=8, 1i64..=8).prop_map(|(a, b)| rat(a.min(b), b))
}

#[derive(Clone, Debug)]
enum GenTree {
    Leaf(bool),
    Fork(Rat, Box<GenTree>, Box<GenTree>),
    ZNode(usize, Rat, Rat, Box<GenTree>, Box<GenTree>),
    ZMixer(usize, Rat, Rat, Box<GenTree>, Box<GenTree>),
}

fn gen_tree() -> impl Strategy<Value = GenTree> {
    let leaf = any::<bool>().prop_map(GenTree::Leaf);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (prob(), inner.clone(), inner.clone())
                .prop_map(|(a, l, r)| GenTree::Fork(a, Box::new(l), Box::new(r))),
            (0..N, prob(), prob(), inner.clone(), inner.clone()).prop_map(
                |(i, a, b, l, r)| GenTree::ZNode(i, a, b, Box::new(l), Box::new(r))
            ),
            (0..N, prob(), prob(), inner.clone(), inner).prop_map(|(i, a, b, l, r)| {
                GenTree::ZMixer(i, a, b, Box::new(l), Box::new(r))
            }),
        ]
    })
}

fn flatten(tree: &GenTree, nodes: &mut Vec<PNode>) -> usize {
    let node = match tree {
        GenTree::Leaf(v) => PNode::Leaf {
            answer: if *v { "1" } else { "0" }.to_string(),
        },
        GenTree::Fork(a, l, r) => {
            let l = flatten(l, nodes);
            let r = flatten(r, nodes);
            PNode::Fork {
                alpha: a.clone(),
                children: [l, r],
            }
        }
        GenTree::ZNode(i, a, b, l, r) => {
            let l = flatten(l, nodes);
            let r = flatten(r, nodes);
            PNode::ZNode {
                index: *i,
                alpha: a.clone(),
                beta: b.clone(),
                children: [l, r],
            }
        }
        GenTree::ZMixer(i, a, b, l, r) => {
            let l = flatten(l, nodes);
            let r = flatten(r, nodes);
            PNode::ZMixer {
                index: *i,
                alpha: a.clone(),
                beta: b.clone(),
                children: [l, r],
            }
        }
    };
    nodes.push(node);
    nodes.len() - 1
}

fn polarised() -> impl Strategy<Value = PolarisedTree> {
    gen_tree().prop_map(|g| {
        let mut nodes = Vec::new();
        let root = flatten(&g, &mut nodes);
        PolarisedTree::new(nodes, root).expect("generated tree is well-formed")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_weights_sum_to_one(tree in polarised(), z_val in 0u32..(1 << N)) {
        let z = Bitstring::new(N, z_val);
        let paths = enumerate_paths(&tree, &z).unwrap();
        let total: Rat = paths.iter().map(|p| p.weight.clone()).sum();
        prop_assert_eq!(total, one());
        for p in &paths {
            // A queried index is recorded in the final memory, and no
            // index can be queried twice on one path.
            let mut seen = [0usize; N];
            for step in &p.steps {
                if step.queried {
                    if let PNode::ZNode { index, .. } = tree.node(step.node) {
                        seen[*index] += 1;
                    }
                }
            }
            prop_assert!(seen.iter().all(|c| *c <= 1));
            for (i, count) in seen.iter().enumerate() {
                prop_assert_eq!(*count == 1, p.queried(i));
            }
            // Replaying the steps: once an index is known, a Z-node for
            // it branches exactly on the known value.
            let mut memory = [None; N];
            for step in &p.steps {
                if let PNode::ZNode { index, .. } = tree.node(step.node) {
                    match memory[*index] {
                        Some(v) => prop_assert_eq!(step.branch, v),
                        None if step.queried => memory[*index] = Some(step.branch),
                        None => {}
                    }
                }
            }
        }
    }

    #[test]
    fn forward_pass_agrees_with_enumeration(tree in polarised(), z_val in 0u32..(1 << N)) {
        let z = Bitstring::new(N, z_val);
        let fwd = forward_pass(&tree, &z, N).unwrap();
        let paths = enumerate_paths(&tree, &z).unwrap();
        for leaf in tree.leaf_ids() {
            let direct: Rat = paths
                .iter()
                .filter(|p| p.leaf == leaf)
                .map(|p| p.weight.clone())
                .sum();
            prop_assert_eq!(&fwd.reach[leaf], &direct);
        }
        for i in 0..N {
            let direct: Rat = paths
                .iter()
                .filter(|p| p.queried(i))
                .map(|p| p.weight.clone())
                .sum();
            prop_assert_eq!(&fwd.query_prob[i], &direct);
        }
    }

    #[test]
    fn polarised_tree_round_trips(tree in polarised()) {
        let text = qclab::io::ptree_to_json(&tree);
        prop_assert_eq!(qclab::io::ptree_from_json(&text).unwrap(), tree);
    }
}

#[derive(Clone, Debug)]
enum GenXTree {
    Leaf(u8),
    Query(usize, usize, Box<GenXTree>, Box<GenXTree>),
}

fn gen_xtree() -> impl Strategy<Value = GenXTree> {
    let leaf = (0u8..3).prop_map(GenXTree::Leaf);
    leaf.prop_recursive(4, 20, 2, |inner| {
        (0..2usize, 0..2usize, inner.clone(), inner)
            .prop_map(|(b, j, l, r)| GenXTree::Query(b, j, Box::new(l), Box::new(r)))
    })
}

fn flatten_x(tree: &GenXTree, nodes: &mut Vec<XNode>) -> usize {
    let node = match tree {
        GenXTree::Leaf(v) => XNode::Leaf {
            answer: ["a", "b", "c"][*v as usize].to_string(),
        },
        GenXTree::Query(b, j, l, r) => {
            let l = flatten_x(l, nodes);
            let r = flatten_x(r, nodes);
            XNode::Query {
                block: *b,
                bit: *j,
                children: [l, r],
            }
        }
    };
    nodes.push(node);
    nodes.len() - 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn xtree_round_trips(gen in gen_xtree()) {
        let mut nodes = Vec::new();
        let root = flatten_x(&gen, &mut nodes);
        let tree = XTree::new(nodes, root).unwrap();
        let text = qclab::io::xtree_to_json(&tree);
        prop_assert_eq!(qclab::io::xtree_from_json(&text).unwrap(), tree);
    }

    #[test]
    fn distribution_operations_preserve_total_mass(
        weights in proptest::collection::vec(1u32..16, 4),
        table in proptest::collection::vec(0u8..3, 4),
    ) {
        prop_assume!(table.contains(&0) && table.contains(&1));
        let g = PromiseFunction::new(
            2,
            table
                .iter()
                .map(|v| match v {
                    0 => GVal::Zero,
                    1 => GVal::One,
                    _ => GVal::Star,
                })
                .collect(),
        )
        .unwrap();
        // Distribution over the legal inputs only.
        let total: u32 = Bitstring::all(2)
            .zip(weights.iter())
            .filter(|(x, _)| g.eval(x) != GVal::Star)
            .map(|(_, w)| *w)
            .sum();
        let mu = Distribution::new(
            Bitstring::all(2)
                .zip(weights.iter())
                .filter(|(x, _)| g.eval(x) != GVal::Star)
                .map(|(x, w)| (x, Rat::new((*w).into(), total.into())))
                .collect(),
        )
        .unwrap();

        let check_total = |d: &Distribution| {
            let sum: Rat = d.support().iter().map(|(_, w)| w.clone()).sum();
            sum == one()
        };
        prop_assert!(check_total(&mu));
        for a in [false, true] {
            prop_assert!(check_total(&conditional_on_value(&mu, &g, a).unwrap()));
        }
        let balanced = balanced_mixture(&mu, &g).unwrap();
        prop_assert!(check_total(&balanced));
        prop_assert_eq!(
            balanced.prob_where(|x| g.eval(x) == GVal::One),
            rat(1, 2)
        );
        let lifted = lift_distribution(&Distribution::uniform(2), &mu, &g).unwrap();
        prop_assert!(check_total(&lifted));

        let text = qclab::io::distribution_to_json(&mu);
        prop_assert_eq!(qclab::io::distribution_from_json(&text).unwrap(), mu);
    }
}
